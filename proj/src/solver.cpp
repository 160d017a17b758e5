#include "nlfp/solver.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <sstream>

#include "nlfp/error.hpp"
#include "nlfp/fft.hpp"
#include "nlfp/spectral.hpp"

namespace nlfp {

void SolverParams::validate() const {
    for (std::size_t i = 0; i < eps_schedule.size(); ++i) {
        if (!(eps_schedule[i] > 0.0)) throw DomainError("eps_schedule entries must be positive");
        if (i > 0 && !(eps_schedule[i] < eps_schedule[i - 1]))
            throw DomainError("eps_schedule must be strictly decreasing");
    }
    if (!(damping > 0.0 && damping <= 1.0)) throw DomainError("damping must lie in (0, 1]");
    if (tol_fixedpoint && !(*tol_fixedpoint > 0.0))
        throw DomainError("tol_fixedpoint must be positive");
    if (max_iter < 1) throw DomainError("max_iter must be at least 1");
    if (!(stage_tol_factor >= 1.0)) throw DomainError("stage_tol_factor must be >= 1");
}

double SolverParams::tolerance_for(const Field& f) const {
    if (tol_fixedpoint) return *tol_fixedpoint;
    return 1e-9 * std::max(norm_l1(f), 1e-300);
}

// Pointwise parts of the equation. `beta` fills beta(y) (without the eps r
// term), `flux` fills the flux density carried by D, `kappa` bounds beta' on
// an interval.
struct ResolventSolver::Problem {
    std::function<void(const Eigen::ArrayXd&, Eigen::ArrayXd&)> beta;
    std::function<void(const Eigen::ArrayXd&, Eigen::ArrayXd&)> flux;
    std::function<double(double, double)> kappa;
    bool has_flux = false;
    bool continuation = true;
};

ResolventSolver::ResolventSolver(CoefficientSet coeffs, BernsteinSpec spec, SolverParams params)
    : coeffs_(std::move(coeffs)), spec_(std::move(spec)), params_(std::move(params)) {
    params_.validate();
    const Grid& grid = coeffs_.grid();
    const Eigen::ArrayXd base = psi_symbol(grid, spec_);
    for (double eps : params_.eps_schedule)
        symbols_.push_back(psi_symbol(grid, spec_, eps) - eval_psi(spec_, eps));
    symbols_.push_back(base);
}

void ResolventSolver::check_lambda(double lambda) const {
    if (!(lambda > 0.0) || !std::isfinite(lambda))
        throw PreconditionError("lambda must be positive and finite");
    const double l0 = coeffs_.lambda0();
    if (lambda >= l0) {
        std::ostringstream msg;
        msg << "lambda = " << lambda << " is not below lambda_0 = " << l0
            << " = 1 / (| (div D)^- + |D| |_inf^{1/2} |b|_inf); the L-infinity bound needs lambda < lambda_0";
        throw PreconditionError(msg.str());
    }
}

Field ResolventSolver::run(const Problem& problem, const Field& f, double lambda,
                           SolverReport* report) const {
    require_finite(f, "resolvent right-hand side");
    if (!(f.grid == coeffs_.grid())) throw DomainError("right-hand side grid does not match coefficients");

    const auto ft = FourierTransform::for_grid(f.grid);
    const double tol = params_.tolerance_for(f);
    const auto n = f.values.size();
    const double cell = f.grid.cell_volume();

    SolverReport local;
    SolverReport& rep = report ? *report : local;
    rep = SolverReport{};
    rep.tol = tol;

    Eigen::ArrayXd y = f.values;
    Eigen::ArrayXd nl(n), q(n), r(n);
    Eigen::ArrayXcd nl_hat, r_hat;
    Field flux_field(f.grid);

    const std::size_t first = problem.continuation ? 0 : symbols_.size() - 1;
    for (std::size_t stage = first; stage < symbols_.size(); ++stage) {
        const bool last = stage + 1 == symbols_.size();
        const double eps = last ? 0.0 : params_.eps_schedule[stage];
        const Eigen::ArrayXd& symbol = symbols_[stage];
        const double stage_tol = last ? tol : params_.stage_tol_factor * tol;

        const double lo = std::min(f.values.minCoeff(), y.minCoeff());
        const double hi = std::max(f.values.maxCoeff(), y.maxCoeff());
        const double pad = 0.1 * (hi - lo);
        const double kappa = std::max(problem.kappa(lo - pad, hi + pad) + eps, 1e-12);
        const Eigen::ArrayXd precond = 1.0 / (1.0 + lambda * kappa * symbol);

        StageReport sr;
        sr.eps = eps;
        sr.kappa = kappa;
        double prev = std::numeric_limits<double>::infinity();
        for (int it = 0;; ++it) {
            problem.beta(y, nl);
            if (eps > 0.0) nl += eps * y;
            ft->forward(nl, nl_hat);
            nl_hat *= (lambda * symbol).cast<std::complex<double>>();
            ft->inverse(nl_hat, nl);
            r = y - f.values + nl;
            if (problem.has_flux) {
                problem.flux(y, q);
                flux_field.values = q;
                r += lambda * divergence_flux(flux_field, coeffs_).values;
            }
            const double res = r.abs().sum() * cell;
            if (!std::isfinite(res)) throw ConvergenceError("resolvent iteration diverged", res, it);
            rep.residual_history.push_back(res);
            if (it > 1 && res > prev * (1.0 + 1e-12) && res > 1e-3 * tol) rep.residual_monotone = false;
            prev = res;
            sr.iterations = it;
            sr.residual = res;
            if (res <= stage_tol) {
                sr.converged = true;
                break;
            }
            if (it >= params_.max_iter) break;
            ft->forward(r, r_hat);
            r_hat *= precond.cast<std::complex<double>>();
            ft->inverse(r_hat, r);
            y -= params_.damping * r;
        }
        rep.iterations += sr.iterations;
        rep.stages.push_back(sr);
        if (last) {
            rep.final_residual = sr.residual;
            if (!sr.converged) {
                std::ostringstream msg;
                msg << "resolvent solve did not reach tol " << tol << " within " << params_.max_iter
                    << " iterations (residual " << sr.residual << ")";
                throw ConvergenceError(msg.str(), sr.residual, sr.iterations);
            }
        }
    }
    return Field(f.grid, std::move(y));
}

Field ResolventSolver::solve(const Field& f, double lambda, SolverReport* report) const {
    check_lambda(lambda);
    Problem p;
    const auto& beta = coeffs_.beta();
    p.beta = [&beta](const Eigen::ArrayXd& y, Eigen::ArrayXd& out) {
        out = y.unaryExpr([&beta](double v) { return beta.value(v); });
    };
    p.kappa = [&beta](double lo, double hi) { return sup_derivative(beta, lo, hi); };
    if (beta.linear) {
        const double slope = beta.lipschitz;
        p.kappa = [slope](double, double) { return slope; };
        p.beta = [slope](const Eigen::ArrayXd& y, Eigen::ArrayXd& out) { out = slope * y; };
    }
    p.has_flux = !coeffs_.drift_is_zero();
    p.flux = [this](const Eigen::ArrayXd& y, Eigen::ArrayXd& out) {
        out = y.unaryExpr([this](double v) { return coeffs_.b_star(v); });
    };
    return run(p, f, lambda, report);
}

double ResolventSolver::residual(const Field& y, const Field& f, double lambda) const {
    require_same_grid(y, f);
    Field by(y.grid);
    by.values = y.values.unaryExpr([this](double v) { return coeffs_.beta().value(v); });
    Eigen::ArrayXd r = y.values - f.values + lambda * apply_multiplier(by, symbols_.back()).values;
    if (!coeffs_.drift_is_zero()) r += lambda * divergence_drift(y, coeffs_).values;
    return r.abs().sum() * y.grid.cell_volume();
}

Field ResolventSolver::solve_frozen(const Field& f, double lambda, const Eigen::ArrayXd& c,
                                    const Eigen::ArrayXd& w, SolverReport* report) const {
    check_lambda(lambda);
    if (c.size() != f.values.size() || w.size() != f.values.size())
        throw DomainError("frozen coefficients do not match the grid");
    Problem p;
    p.continuation = false;
    p.beta = [&c](const Eigen::ArrayXd& y, Eigen::ArrayXd& out) { out = c * y; };
    const double cmax = c.abs().maxCoeff();
    p.kappa = [cmax](double, double) { return cmax; };
    p.has_flux = !coeffs_.drift().identically_zero && (w != 0.0).any();
    p.flux = [&w](const Eigen::ArrayXd& y, Eigen::ArrayXd& out) { out = w * y; };
    return run(p, f, lambda, report);
}

double ResolventSolver::frozen_residual(const Field& y, const Field& f, double lambda,
                                        const Eigen::ArrayXd& c, const Eigen::ArrayXd& w) const {
    require_same_grid(y, f);
    Field cy(y.grid, c * y.values);
    Eigen::ArrayXd r = y.values - f.values + lambda * apply_multiplier(cy, symbols_.back()).values;
    if (!coeffs_.drift().identically_zero) {
        Field wy(y.grid, w * y.values);
        r += lambda * divergence_flux(wy, coeffs_).values;
    }
    return r.abs().sum() * y.grid.cell_volume();
}

Field resolvent_step(const Field& f, double lambda, const CoefficientSet& coeffs,
                     const BernsteinSpec& spec, const SolverParams& params, SolverReport* report) {
    return ResolventSolver(coeffs, spec, params).solve(f, lambda, report);
}

ContractionReport check_l1_contraction(const Field& f1, const Field& f2, double lambda,
                                       const ResolventSolver& solver) {
    SolverReport r1, r2;
    const Field y1 = solver.solve(f1, lambda, &r1);
    const Field y2 = solver.solve(f2, lambda, &r2);
    ContractionReport rep;
    rep.distance_out = l1_distance(y1, y2);
    rep.distance_in = l1_distance(f1, f2);
    rep.margin = rep.distance_in - rep.distance_out;
    rep.slack = 2.0 * std::max(r1.tol, r2.tol);
    rep.pass = rep.margin >= -rep.slack;
    return rep;
}

IdentityReport check_resolvent_identity(const Field& f, double lambda1, double lambda2,
                                        const ResolventSolver& solver) {
    if (!(lambda1 > 0.0 && lambda1 <= lambda2))
        throw PreconditionError("resolvent identity needs 0 < lambda1 <= lambda2");
    SolverReport r2, r1;
    const Field j2 = solver.solve(f, lambda2, &r2);
    const double ratio = lambda1 / lambda2;
    Field mixed(f.grid, ratio * f.values + (1.0 - ratio) * j2.values);
    const Field rhs = lambda1 == lambda2 ? j2 : solver.solve(mixed, lambda1, &r1);
    IdentityReport rep;
    rep.discrepancy = l1_distance(j2, rhs);
    rep.bound = 5.0 * std::max(r1.tol, r2.tol);
    rep.pass = rep.discrepancy <= rep.bound;
    return rep;
}

OrderReport check_order_preservation(const Field& f1, const Field& f2, double lambda,
                                     const ResolventSolver& solver) {
    if ((f1.values > f2.values).any()) throw PreconditionError("order check needs f1 <= f2");
    const Field y1 = solver.solve(f1, lambda);
    const Field y2 = solver.solve(f2, lambda);
    OrderReport rep;
    rep.max_violation = std::max(0.0, (y1.values - y2.values).maxCoeff());
    rep.pass = rep.max_violation <= rep.slack;
    return rep;
}

}  // namespace nlfp
