#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "nlfp/error.hpp"
#include "nlfp/solver.hpp"

namespace nlfp {

struct LedgerEntry {
    double time = 0.0;
    double mass = 0.0;
    double min_value = 0.0;
    double linf = 0.0;
    double residual = 0.0;  ///< solver residual of the step that produced this state
    int iterations = 0;
};

/// Implicit Euler trajectory. `ledger` has one entry per step (plus t = 0);
/// `states` holds every `snapshot_stride`-th state, always including t = 0
/// and the final time.
struct Trajectory {
    double step = 0.0;
    int snapshot_stride = 1;
    std::vector<double> times;
    std::vector<Field> states;
    std::vector<LedgerEntry> ledger;

    const Field& initial() const { return states.front(); }
    const Field& final_state() const { return states.back(); }
    /// Index into `states` of the snapshot at time t (within 1e-9 h); throws if absent.
    std::size_t index_of(double t) const;
};

class EvolutionError : public Error {
public:
    EvolutionError(const std::string& what, Trajectory partial)
        : Error(what), partial_(std::move(partial)) {}
    const Trajectory& partial() const noexcept { return partial_; }

private:
    Trajectory partial_;
};

/// u_{k+1} = J_h(u_k) for k < T / h. T must be an integer multiple of h.
Trajectory evolve_mild(const Field& u0, double T, double h, const ResolventSolver& solver,
                       int snapshot_stride = 1);
Trajectory evolve_mild(const Field& u0, double T, double h, const CoefficientSet& coeffs,
                       const BernsteinSpec& spec, const SolverParams& params = {},
                       int snapshot_stride = 1);

struct RefinementReport {
    std::vector<double> h_list;
    /// sup_t |u_{h_i}(t) - u_{h_{i+1}}(t)|_1 over the times of the coarser run.
    std::vector<double> distances;
    bool cauchy_decreasing = true;
    /// log(d_i / d_{i+1}) / log(h_i / h_{i+1}) for successive distances.
    std::vector<double> self_orders;
    /// Only when an exact solution is supplied: sup_t error of each run and
    /// the orders between successive runs.
    std::vector<double> exact_errors;
    std::vector<double> exact_orders;
};

using ExactSolution = std::function<Field(double t)>;

RefinementReport refinement_study(const Field& u0, double T, std::span<const double> h_list,
                                  const ResolventSolver& solver,
                                  const ExactSolution& exact = nullptr);

/// sup over common snapshot times of |a(t) - b(t)|_1.
double trajectory_distance(const Trajectory& a, const Trajectory& b);

/// Frozen coefficients c = beta(u)/u (beta'(0) where |u| < u_floor) and w = b(u).
struct FrozenCoefficients {
    Eigen::ArrayXd c;
    Eigen::ArrayXd w;
};
FrozenCoefficients freeze_coefficients(const Field& u, const CoefficientSet& coeffs,
                                       double floor_factor = 1e-12);

/// Implicit Euler for v_t + Psi(-Delta)(c v) + div(D w v) = 0 with c, w
/// frozen from the state of `u_traj` at the end of each step, so that
/// u_traj itself solves the stepping equation. Needs snapshot_stride 1.
Trajectory solve_linearized_fp(const Trajectory& u_traj, const Field& v0,
                               const ResolventSolver& solver, double floor_factor = 1e-12);

/// max_k of the frozen-coefficient residual of u_{k+1} against u_k.
double linearized_identity_residual(const Trajectory& u_traj, const ResolventSolver& solver,
                                    double floor_factor = 1e-12);

/// phi(t, x) = chi(t) psi(x), compactly supported in [0, t_end) x box.
struct TestFunction {
    std::function<double(double)> chi;
    std::function<double(double)> chi_dt;
    std::function<double(std::span<const double>)> psi;
    std::function<void(std::span<const double>, std::span<double>)> grad_psi;
    double t_end = 0.0;
    std::vector<double> center;
    double radius = 0.0;
    bool identically_zero = false;

    /// Product of smooth bumps exp(1 - 1/(1 - z^2)) in t / t_end and in each
    /// (x_i - center_i) / radius.
    static TestFunction bump(std::vector<double> center, double radius, double t_end);
    static TestFunction zero();
};

/// How the drift term int b(u) u D . grad phi is discretized. Adjoint pairs
/// phi with the upwind divergence the scheme uses (-<phi, div_h(D b*(u))>),
/// so the residual measures time consistency only; Analytic uses grad phi
/// and carries the O(spacing) error of the upwind flux.
enum class WeakFormDrift { Adjoint, Analytic };

/// Discretized int int [u phi_t - Psi(-Delta)phi beta(u) + b(u) u D . grad phi]
/// + int phi(0) u0 with u piecewise constant in time (u_h(t) = u_k on
/// ((k-1)h, kh]). Needs snapshot_stride 1.
double weak_form_residual(const Trajectory& u_traj, const TestFunction& phi,
                          const BernsteinSpec& spec, const CoefficientSet& coeffs,
                          WeakFormDrift drift = WeakFormDrift::Adjoint);

}  // namespace nlfp
