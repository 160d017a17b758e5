#pragma once

#include <Eigen/Core>
#include <optional>
#include <vector>

#include "nlfp/bernstein.hpp"
#include "nlfp/coefficients.hpp"
#include "nlfp/grid.hpp"

namespace nlfp {

struct SolverParams {
    std::vector<double> eps_schedule{1e-2, 1e-3, 1e-4};
    double damping = 0.7;
    /// L1 tolerance on the residual; unset means 1e-9 * |f|_1.
    std::optional<double> tol_fixedpoint;
    int max_iter = 500;
    /// Intermediate eps stages stop at stage_tol_factor * tol.
    double stage_tol_factor = 1e3;

    /// Throws DomainError if the invariants fail.
    void validate() const;
    double tolerance_for(const Field& f) const;
};

struct StageReport {
    double eps = 0.0;
    double kappa = 0.0;
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
};

struct SolverReport {
    std::vector<StageReport> stages;
    std::vector<double> residual_history;
    double tol = 0.0;
    double final_residual = 0.0;
    int iterations = 0;
    /// Residual nonincreasing after the first iterate of every stage.
    bool residual_monotone = true;
};

/// y + lambda Psi(-Delta) beta(y) + lambda div(D b*(y)) = f on the grid.
///
/// Each regularized stage replaces beta by beta + eps r and Psi(|k|^2) by
/// Psi(eps + |k|^2) - Psi(eps) (Levy measure tempered by e^{-eps t}), then
/// iterates
///     y <- y - damping (I + lambda kappa G)^{-1} r(y),
/// with kappa >= sup beta' on the range of the data. The last stage runs the
/// unregularized equation so the returned residual is the true one.
class ResolventSolver {
public:
    ResolventSolver(CoefficientSet coeffs, BernsteinSpec spec, SolverParams params = {});

    const CoefficientSet& coefficients() const { return coeffs_; }
    const BernsteinSpec& spec() const { return spec_; }
    const SolverParams& params() const { return params_; }

    /// J_lambda(f). Throws PreconditionError for lambda outside (0, lambda_0)
    /// and ConvergenceError if the final stage does not reach the tolerance.
    Field solve(const Field& f, double lambda, SolverReport* report = nullptr) const;

    /// L1 norm of y + lambda Psi(-Delta) beta(y) + lambda div(D b*(y)) - f.
    double residual(const Field& y, const Field& f, double lambda) const;

    /// Frozen-coefficient linear problem
    ///     y + lambda Psi(-Delta)(c y) + lambda div(D w y) = f,
    /// solved in one unregularized stage.
    Field solve_frozen(const Field& f, double lambda, const Eigen::ArrayXd& c,
                       const Eigen::ArrayXd& w, SolverReport* report = nullptr) const;
    double frozen_residual(const Field& y, const Field& f, double lambda, const Eigen::ArrayXd& c,
                           const Eigen::ArrayXd& w) const;

private:
    struct Problem;
    Field run(const Problem& problem, const Field& f, double lambda, SolverReport* report) const;
    void check_lambda(double lambda) const;

    CoefficientSet coeffs_;
    BernsteinSpec spec_;
    SolverParams params_;
    /// Psi(eps + |k|^2) - Psi(eps) per stage; the last entry is eps = 0.
    std::vector<Eigen::ArrayXd> symbols_;
};

Field resolvent_step(const Field& f, double lambda, const CoefficientSet& coeffs,
                     const BernsteinSpec& spec, const SolverParams& params = {},
                     SolverReport* report = nullptr);

struct ContractionReport {
    double distance_out = 0.0;  ///< |J f1 - J f2|_1
    double distance_in = 0.0;   ///< |f1 - f2|_1
    double margin = 0.0;        ///< distance_in - distance_out
    double slack = 0.0;         ///< 2 tol
    bool pass = false;
};

ContractionReport check_l1_contraction(const Field& f1, const Field& f2, double lambda,
                                       const ResolventSolver& solver);

struct IdentityReport {
    double discrepancy = 0.0;
    double bound = 0.0;  ///< 5 tol
    bool pass = false;
};

/// J_{l2} f against J_{l1}(l1/l2 f + (1 - l1/l2) J_{l2} f).
IdentityReport check_resolvent_identity(const Field& f, double lambda1, double lambda2,
                                        const ResolventSolver& solver);

struct OrderReport {
    double max_violation = 0.0;  ///< max (J f1 - J f2)^+
    double slack = 1e-8;
    bool pass = false;
};

/// Requires f1 <= f2 pointwise.
OrderReport check_order_preservation(const Field& f1, const Field& f2, double lambda,
                                     const ResolventSolver& solver);

}  // namespace nlfp
