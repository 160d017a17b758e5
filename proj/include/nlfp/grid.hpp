#pragma once

#include <Eigen/Core>
#include <array>
#include <cstddef>

namespace nlfp {

/// Periodic lattice on the torus [-L/2, L/2)^d with n points per axis.
/// Flattened index is row-major: axis 0 varies slowest.
class Grid {
public:
    Grid(int d, int n, double box_length);

    int dim() const { return d_; }
    int points_per_axis() const { return n_; }
    double box_length() const { return box_length_; }
    double spacing() const { return box_length_ / n_; }
    double cell_volume() const;
    std::size_t size() const { return size_; }

    /// Coordinate of lattice index i along any axis.
    double coordinate(int i) const { return -0.5 * box_length_ + i * spacing(); }
    std::array<int, 3> unravel(std::size_t flat) const;
    std::size_t ravel(const std::array<int, 3>& idx) const;
    /// Stride of axis a in the flattened layout.
    std::size_t stride(int axis) const;

    /// Fourier wavenumber of FFT bin j along an axis (2 pi j / L, j wrapped to [-n/2, n/2)).
    double wavenumber(int j) const;

    friend bool operator==(const Grid& a, const Grid& b) {
        return a.d_ == b.d_ && a.n_ == b.n_ && a.box_length_ == b.box_length_;
    }

private:
    int d_;
    int n_;
    double box_length_;
    std::size_t size_;
};

/// Real samples on a Grid. Mass is sum(values) * spacing^d.
struct Field {
    Grid grid;
    Eigen::ArrayXd values;

    explicit Field(const Grid& g) : grid(g), values(Eigen::ArrayXd::Zero(g.size())) {}
    Field(const Grid& g, Eigen::ArrayXd v);
};

double mass(const Field& f);
double norm_l1(const Field& f);
double norm_l2(const Field& f);
double norm_linf(const Field& f);
double l1_distance(const Field& a, const Field& b);
/// Grid inner product sum(a*b) * spacing^d.
double inner(const Field& a, const Field& b);
/// Mass carried by the outermost layer of cells (boundary diagnostic).
double boundary_mass(const Field& f);

void require_same_grid(const Field& a, const Field& b);
void require_finite(const Field& f, const char* context);

}  // namespace nlfp
