#pragma once

#include <Eigen/Core>

#include "nlfp/bernstein.hpp"
#include "nlfp/coefficients.hpp"
#include "nlfp/grid.hpp"

namespace nlfp {

/// Psi(shift + |k|^2) for every spectral bin of the grid.
Eigen::ArrayXd psi_symbol(const Grid& grid, const BernsteinSpec& spec, double shift = 0.0);

/// Inverse transform of symbol * F(f). `symbol` is indexed like the spectrum.
Field apply_multiplier(const Field& f, const Eigen::ArrayXd& symbol);

/// Psi(-Delta) f.
Field apply_psi_laplacian(const Field& f, const BernsteinSpec& spec);

/// (eps I + Psi(-Delta))^{-1} f. Throws DomainError for eps <= 0.
Field resolvent_phi(const Field& f, const BernsteinSpec& spec, double eps);

/// e^{-t Psi(-Delta)} f.
Field psi_semigroup(const Field& f, const BernsteinSpec& spec, double t);

/// Heat semigroup e^{t Delta} f.
Field heat_semigroup(const Field& f, double t);

/// Unit-mass discrete delta at the origin node (value 1 / spacing^d).
Field discrete_delta(const Grid& grid);

struct KernelQuadrature {
    double t_min = 1e-12;
    /// Upper end is tail_decay / eps, so e^{-eps t} is below e^{-tail_decay} there.
    double tail_decay = 60.0;
    /// Node spacing in log t.
    double log_step = 0.05;
};

/// g_eps = int_0^inf e^{-eps t} E[p_{eta_t}] dt on the grid, by a trapezoid
/// rule in log t over the exact law of eta_t acting through heat multipliers.
Field subordination_kernel(const BernsteinSpec& spec, double eps, const Grid& grid,
                           const KernelQuadrature& quad = {});

/// Phi_eps applied to discrete_delta: the second route to the same kernel.
Field resolvent_of_delta(const BernsteinSpec& spec, double eps, const Grid& grid);

/// div(D b*(u)) in conservative upwind flux form.
Field divergence_drift(const Field& u, const CoefficientSet& coeffs);

/// Same operator with b*(u) already evaluated (`flux_density` = b*(u) or any
/// frozen-coefficient replacement).
Field divergence_flux(const Field& flux_density, const CoefficientSet& coeffs);

/// Spectral derivative along `axis`, used by tests and the weak form.
Field spectral_derivative(const Field& f, int axis);

}  // namespace nlfp
