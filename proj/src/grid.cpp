#include "nlfp/grid.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "nlfp/error.hpp"

namespace nlfp {

Grid::Grid(int d, int n, double box_length) : d_(d), n_(n), box_length_(box_length) {
    if (d < 1 || d > 3) throw DomainError("grid dimension must be 1, 2 or 3");
    if (n < 2 || (n & (n - 1)) != 0) throw DomainError("points per axis must be a power of two");
    if (!(box_length > 0.0) || !std::isfinite(box_length))
        throw DomainError("box length must be positive");
    size_ = 1;
    for (int a = 0; a < d; ++a) size_ *= static_cast<std::size_t>(n);
}

double Grid::cell_volume() const { return std::pow(spacing(), d_); }

std::array<int, 3> Grid::unravel(std::size_t flat) const {
    std::array<int, 3> idx{0, 0, 0};
    for (int a = d_ - 1; a >= 0; --a) {
        idx[a] = static_cast<int>(flat % n_);
        flat /= n_;
    }
    return idx;
}

std::size_t Grid::ravel(const std::array<int, 3>& idx) const {
    std::size_t flat = 0;
    for (int a = 0; a < d_; ++a) flat = flat * n_ + static_cast<std::size_t>(idx[a]);
    return flat;
}

std::size_t Grid::stride(int axis) const {
    std::size_t s = 1;
    for (int a = d_ - 1; a > axis; --a) s *= n_;
    return s;
}

double Grid::wavenumber(int j) const {
    const int wrapped = j < n_ / 2 ? j : j - n_;
    return 2.0 * std::numbers::pi * wrapped / box_length_;
}

Field::Field(const Grid& g, Eigen::ArrayXd v) : grid(g), values(std::move(v)) {
    if (static_cast<std::size_t>(values.size()) != g.size())
        throw DomainError("field size does not match grid");
}

double mass(const Field& f) { return f.values.sum() * f.grid.cell_volume(); }
double norm_l1(const Field& f) { return f.values.abs().sum() * f.grid.cell_volume(); }
double norm_l2(const Field& f) { return std::sqrt(f.values.square().sum() * f.grid.cell_volume()); }
double norm_linf(const Field& f) { return f.values.size() ? f.values.abs().maxCoeff() : 0.0; }

void require_same_grid(const Field& a, const Field& b) {
    if (!(a.grid == b.grid)) throw DomainError("fields live on different grids");
}

double l1_distance(const Field& a, const Field& b) {
    require_same_grid(a, b);
    return (a.values - b.values).abs().sum() * a.grid.cell_volume();
}

double inner(const Field& a, const Field& b) {
    require_same_grid(a, b);
    return (a.values * b.values).sum() * a.grid.cell_volume();
}

double boundary_mass(const Field& f) {
    const Grid& g = f.grid;
    const int n = g.points_per_axis();
    double sum = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto idx = g.unravel(i);
        bool edge = false;
        for (int a = 0; a < g.dim(); ++a) edge = edge || idx[a] == 0 || idx[a] == n - 1;
        if (edge) sum += std::abs(f.values[static_cast<Eigen::Index>(i)]);
    }
    return sum * g.cell_volume();
}

void require_finite(const Field& f, const char* context) {
    if (!f.values.allFinite()) throw DomainError(std::string(context) + ": field is not finite");
}

}  // namespace nlfp
