#include "nlfp/spectral.hpp"

#include <cmath>
#include <complex>
#include <numbers>

#include "nlfp/error.hpp"
#include "nlfp/fft.hpp"

namespace nlfp {

Eigen::ArrayXd psi_symbol(const Grid& grid, const BernsteinSpec& spec, double shift) {
    const auto ft = FourierTransform::for_grid(grid);
    const Eigen::ArrayXd& k2 = ft->wavenumber_squared();
    Eigen::ArrayXd out(k2.size());
    for (Eigen::Index i = 0; i < k2.size(); ++i) out[i] = eval_psi(spec, shift + k2[i]);
    return out;
}

Field apply_multiplier(const Field& f, const Eigen::ArrayXd& symbol) {
    require_finite(f, "apply_multiplier");
    const auto ft = FourierTransform::for_grid(f.grid);
    if (static_cast<std::size_t>(symbol.size()) != ft->spectrum_size())
        throw DomainError("multiplier size does not match the grid spectrum");
    Eigen::ArrayXcd spec;
    ft->forward(f.values, spec);
    spec *= symbol.cast<std::complex<double>>();
    Field out(f.grid);
    ft->inverse(spec, out.values);
    return out;
}

Field apply_psi_laplacian(const Field& f, const BernsteinSpec& spec) {
    require_finite(f, "apply_psi_laplacian");
    return apply_multiplier(f, psi_symbol(f.grid, spec));
}

Field resolvent_phi(const Field& f, const BernsteinSpec& spec, double eps) {
    if (!(eps > 0.0) || !std::isfinite(eps)) throw DomainError("resolvent_phi needs eps > 0");
    require_finite(f, "resolvent_phi");
    return apply_multiplier(f, 1.0 / (eps + psi_symbol(f.grid, spec)));
}

Field psi_semigroup(const Field& f, const BernsteinSpec& spec, double t) {
    if (!(t >= 0.0)) throw DomainError("semigroup time must be nonnegative");
    return apply_multiplier(f, (-t * psi_symbol(f.grid, spec)).exp());
}

Field heat_semigroup(const Field& f, double t) {
    if (!(t >= 0.0)) throw DomainError("semigroup time must be nonnegative");
    const auto ft = FourierTransform::for_grid(f.grid);
    return apply_multiplier(f, (-t * ft->wavenumber_squared()).exp());
}

Field discrete_delta(const Grid& grid) {
    Field out(grid);
    const int c = grid.points_per_axis() / 2;  // coordinate(c) == 0
    out.values[static_cast<Eigen::Index>(grid.ravel({c, c, c}))] = 1.0 / grid.cell_volume();
    return out;
}

Field subordination_kernel(const BernsteinSpec& spec, double eps, const Grid& grid,
                           const KernelQuadrature& quad) {
    if (!(eps > 0.0) || !std::isfinite(eps)) throw DomainError("subordination_kernel needs eps > 0");
    const auto ft = FourierTransform::for_grid(grid);
    const Eigen::ArrayXd psi = psi_symbol(grid, spec);

    // Laplace transform of E p_{eta_t} is e^{-t Psi(|k|^2)}; integrate
    // e^{-eps t} against it over t = e^x with a trapezoid in x.
    const double x0 = std::log(quad.t_min);
    const double x1 = std::log(quad.tail_decay / eps);
    const int steps = static_cast<int>(std::ceil((x1 - x0) / quad.log_step));
    const double dx = (x1 - x0) / steps;

    // Below t_min the integrand is 1 to within t_min * (eps + Psi).
    Eigen::ArrayXd weight = Eigen::ArrayXd::Constant(psi.size(), quad.t_min);
    for (int j = 0; j <= steps; ++j) {
        const double t = std::exp(x0 + j * dx);
        const double w = (j == 0 || j == steps ? 0.5 : 1.0) * dx * t;
        weight += w * (-t * (eps + psi)).exp();
    }

    Eigen::ArrayXcd spectrum;
    ft->forward(discrete_delta(grid).values, spectrum);
    spectrum *= weight.cast<std::complex<double>>();
    Field out(grid);
    ft->inverse(spectrum, out.values);
    return out;
}

Field resolvent_of_delta(const BernsteinSpec& spec, double eps, const Grid& grid) {
    return resolvent_phi(discrete_delta(grid), spec, eps);
}

Field divergence_flux(const Field& q, const CoefficientSet& coeffs) {
    const Grid& grid = q.grid;
    if (!(grid == coeffs.grid())) throw DomainError("field and coefficients live on different grids");
    Field out(grid);
    if (coeffs.drift().identically_zero) return out;

    const auto n = static_cast<std::size_t>(grid.points_per_axis());
    const std::size_t total = grid.size();
    const double inv_h = 1.0 / grid.spacing();
    auto& o = out.values;
    for (int a = 0; a < grid.dim(); ++a) {
        const std::size_t stride = grid.stride(a);
        const Eigen::ArrayXd& v = coeffs.face_velocity(a);
        for (std::size_t i = 0; i < total; ++i) {
            const std::size_t pos = (i / stride) % n;
            const std::size_t j = pos + 1 == n ? i - (n - 1) * stride : i + stride;
            const auto ii = static_cast<Eigen::Index>(i);
            const auto jj = static_cast<Eigen::Index>(j);
            const double vf = v[ii];
            const double flux = (vf >= 0.0 ? vf * q.values[ii] : vf * q.values[jj]) * inv_h;
            o[ii] += flux;
            o[jj] -= flux;
        }
    }
    return out;
}

Field divergence_drift(const Field& u, const CoefficientSet& coeffs) {
    Field q(u.grid);
    if (coeffs.drift_is_zero()) return q;
    for (Eigen::Index i = 0; i < q.values.size(); ++i) q.values[i] = coeffs.b_star(u.values[i]);
    return divergence_flux(q, coeffs);
}

Field spectral_derivative(const Field& f, int axis) {
    if (axis < 0 || axis >= f.grid.dim()) throw DomainError("axis out of range");
    const auto ft = FourierTransform::for_grid(f.grid);
    const Eigen::ArrayXd& k = ft->wavenumber(axis);
    const double nyquist = std::numbers::pi * f.grid.points_per_axis() / f.grid.box_length();
    Eigen::ArrayXcd spec;
    ft->forward(f.values, spec);
    for (Eigen::Index i = 0; i < spec.size(); ++i) {
        const double ki = std::abs(k[i]) >= nyquist * (1.0 - 1e-12) ? 0.0 : k[i];
        spec[i] *= std::complex<double>(0.0, ki);
    }
    Field out(f.grid);
    ft->inverse(spec, out.values);
    return out;
}

}  // namespace nlfp
