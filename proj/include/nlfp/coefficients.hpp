#pragma once

#include <Eigen/Core>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "nlfp/grid.hpp"

namespace nlfp {

/// A scalar nonlinearity (beta or b) with its derivative and the bounds the
/// solver needs. `params` only exists for serialization and reporting.
struct ScalarLaw {
    std::string name;
    std::map<std::string, double> params;
    std::function<double(double)> value;
    std::function<double(double)> derivative;
    double lipschitz = 0.0;  ///< sup |f'|, +inf if unbounded
    double sup_abs = 0.0;    ///< sup |f|, +inf if unbounded
    bool linear = false;     ///< f(r) = lipschitz * r exactly
};

/// Vector field D with analytic divergence, evaluated at arbitrary points
/// (particles live on R^d) and sampled onto grids.
struct VectorField {
    std::string name;
    std::map<std::string, double> params;
    int dim = 1;
    std::function<void(std::span<const double> x, std::span<double> out)> value;
    std::function<double(std::span<const double> x)> divergence;
    bool identically_zero = false;
};

namespace presets {

ScalarLaw beta_linear(double scale = 1.0);
/// r + r^3 on |r| <= clip, continued linearly with slope 1 + 3 clip^2.
ScalarLaw beta_cubic_clipped(double clip = 2.0);
ScalarLaw beta_arctan();
/// r |r| on |r| <= clip, continued linearly with slope 2 clip (degenerate at 0).
ScalarLaw beta_porous_clipped(double clip = 4.0);
/// r + r|r| / (1 + |r|), slope in [1, 2).
ScalarLaw beta_saturating();
/// beta == 0: switches the jump part off (particle drift-only mode).
ScalarLaw beta_zero();

ScalarLaw b_constant(double value);
/// 1 / (1 + |r|).
ScalarLaw b_saturating();

VectorField drift_zero(int d);
VectorField drift_constant(std::vector<double> components);
/// D_i(x) = -amplitude * tanh(x_i).
VectorField drift_confining(int d, double amplitude = 1.0);
/// Divergence-free swirl amplitude * exp(-|x|^2 / 2 width^2) (-x_2, x_1, 0); d >= 2.
VectorField drift_rotation(int d, double amplitude = 1.0, double width = 2.0);

}  // namespace presets

/// beta, b, b*(r) = b(r) r and the drift D sampled on a grid, with the
/// derived constants gamma and lambda_0.
class CoefficientSet {
public:
    CoefficientSet(const Grid& grid, ScalarLaw beta, ScalarLaw b, VectorField drift);

    const Grid& grid() const { return grid_; }
    const ScalarLaw& beta() const { return beta_; }
    const ScalarLaw& b() const { return b_; }
    const VectorField& drift() const { return drift_; }

    double b_star(double r) const { return b_.value(r) * r; }

    const Eigen::ArrayXd& drift_component(int axis) const { return nodes_[axis]; }
    /// D_axis evaluated at the cell face x + h/2 e_axis.
    const Eigen::ArrayXd& face_velocity(int axis) const { return faces_[axis]; }
    const Eigen::ArrayXd& div_drift() const { return div_; }

    bool drift_is_zero() const { return drift_.identically_zero || b_.sup_abs == 0.0; }

    /// | |D| + (div D)^- |_inf over the grid nodes.
    double drift_bound() const { return drift_bound_; }
    /// gamma = 1 + drift_bound^{1/2}.
    double gamma() const { return 1.0 + std::sqrt(drift_bound_); }
    /// lambda_0 = (drift_bound^{1/2} |b|_inf)^{-1}, +inf when the product vanishes.
    double lambda0() const;

    void evaluate_drift(std::span<const double> x, std::span<double> out) const {
        drift_.value(x, out);
    }

private:
    Grid grid_;
    ScalarLaw beta_;
    ScalarLaw b_;
    VectorField drift_;
    std::vector<Eigen::ArrayXd> nodes_;
    std::vector<Eigen::ArrayXd> faces_;
    Eigen::ArrayXd div_;
    double drift_bound_ = 0.0;
};

struct CoefficientReport {
    bool beta_zero_at_zero = false;
    bool beta_strictly_increasing = false;  ///< beta' > 0 off 0 on the probe range
    bool beta_lipschitz = false;
    bool b_nonnegative = false;
    bool b_bounded = false;
    bool div_negative_part_bounded = false;

    bool passes() const {
        return beta_zero_at_zero && beta_strictly_increasing && beta_lipschitz &&
               b_nonnegative && b_bounded && div_negative_part_bounded;
    }
};

/// Probe hypotheses (i)-(iv) on [-r_max, r_max].
CoefficientReport check_coefficients(const CoefficientSet& coeffs, double r_max = 10.0);

/// sup of beta' over [lo, hi] sampled on `samples` points.
double sup_derivative(const ScalarLaw& law, double lo, double hi, int samples = 257);

}  // namespace nlfp
