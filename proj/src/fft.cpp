#include "nlfp/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>
#include <utility>
#include <vector>

namespace nlfp {

namespace {
// FFTW's planner is not reentrant.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}
}  // namespace

struct FourierTransform::Plans {
    fftw_plan forward = nullptr;
    fftw_plan inverse = nullptr;
};

FourierTransform::FourierTransform(const Grid& grid) : plans_(std::make_unique<Plans>()) {
    const int d = grid.dim();
    const int n = grid.points_per_axis();
    real_size_ = grid.size();
    spectrum_size_ = real_size_ / n * (n / 2 + 1);

    std::vector<int> dims(d, n);
    std::vector<double> rbuf(real_size_);
    std::vector<fftw_complex> cbuf(spectrum_size_);
    {
        std::lock_guard lock(planner_mutex());
        const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        plans_->forward = fftw_plan_dft_r2c(d, dims.data(), rbuf.data(), cbuf.data(), flags);
        plans_->inverse = fftw_plan_dft_c2r(d, dims.data(), cbuf.data(), rbuf.data(),
                                            flags | FFTW_DESTROY_INPUT);
    }

    k2_ = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(spectrum_size_));
    for (auto& k : k_) k = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(spectrum_size_));
    const int half = n / 2 + 1;
    for (std::size_t b = 0; b < spectrum_size_; ++b) {
        std::size_t rest = b;
        const int last = static_cast<int>(rest % half);
        rest /= half;
        double sum = 0.0;
        for (int a = d - 1; a >= 0; --a) {
            int j;
            if (a == d - 1) {
                j = last;
            } else {
                j = static_cast<int>(rest % n);
                rest /= n;
            }
            const double k = grid.wavenumber(j);
            k_[a][static_cast<Eigen::Index>(b)] = k;
            sum += k * k;
        }
        k2_[static_cast<Eigen::Index>(b)] = sum;
    }
}

FourierTransform::~FourierTransform() {
    std::lock_guard lock(planner_mutex());
    if (plans_->forward) fftw_destroy_plan(plans_->forward);
    if (plans_->inverse) fftw_destroy_plan(plans_->inverse);
}

std::shared_ptr<const FourierTransform> FourierTransform::for_grid(const Grid& grid) {
    static std::mutex cache_mutex;
    static std::map<std::tuple<int, int, double>, std::shared_ptr<const FourierTransform>> cache;
    const auto key = std::make_tuple(grid.dim(), grid.points_per_axis(), grid.box_length());
    std::lock_guard lock(cache_mutex);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
    std::shared_ptr<const FourierTransform> ft(new FourierTransform(grid));
    cache.emplace(key, ft);
    return ft;
}

void FourierTransform::forward(const Eigen::ArrayXd& in, Eigen::ArrayXcd& out) const {
    out.resize(static_cast<Eigen::Index>(spectrum_size_));
    // r2c out-of-place preserves its input.
    fftw_execute_dft_r2c(plans_->forward, const_cast<double*>(in.data()),
                         reinterpret_cast<fftw_complex*>(out.data()));
}

void FourierTransform::inverse(const Eigen::ArrayXcd& in, Eigen::ArrayXd& out) const {
    Eigen::ArrayXcd scratch = in;
    out.resize(static_cast<Eigen::Index>(real_size_));
    fftw_execute_dft_c2r(plans_->inverse, reinterpret_cast<fftw_complex*>(scratch.data()),
                         out.data());
    out /= static_cast<double>(real_size_);
}

}  // namespace nlfp
