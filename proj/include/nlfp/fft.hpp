#pragma once

#include <Eigen/Core>
#include <memory>

#include "nlfp/grid.hpp"

namespace nlfp {

/// Real-to-complex transforms for one grid shape.
///
/// Instances are cached per (d, n) and immutable once built; `forward` and
/// `inverse` only use the new-array execute interface, so one instance can be
/// shared by any number of threads. The spectrum uses the FFTW half-complex
/// layout: the last axis keeps bins 0..n/2.
class FourierTransform {
public:
    static std::shared_ptr<const FourierTransform> for_grid(const Grid& grid);

    ~FourierTransform();
    FourierTransform(const FourierTransform&) = delete;
    FourierTransform& operator=(const FourierTransform&) = delete;

    std::size_t real_size() const { return real_size_; }
    std::size_t spectrum_size() const { return spectrum_size_; }

    void forward(const Eigen::ArrayXd& in, Eigen::ArrayXcd& out) const;
    /// Normalized inverse (forward followed by inverse is the identity).
    void inverse(const Eigen::ArrayXcd& in, Eigen::ArrayXd& out) const;

    /// |k|^2 for every spectral bin.
    const Eigen::ArrayXd& wavenumber_squared() const { return k2_; }
    /// Component k_axis for every spectral bin.
    const Eigen::ArrayXd& wavenumber(int axis) const { return k_[axis]; }

private:
    explicit FourierTransform(const Grid& grid);

    struct Plans;
    std::unique_ptr<Plans> plans_;
    std::size_t real_size_;
    std::size_t spectrum_size_;
    Eigen::ArrayXd k2_;
    Eigen::ArrayXd k_[3];
};

}  // namespace nlfp
