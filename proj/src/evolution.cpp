#include "nlfp/evolution.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "nlfp/spectral.hpp"

namespace nlfp {

std::size_t Trajectory::index_of(double t) const {
    for (std::size_t i = 0; i < times.size(); ++i)
        if (std::abs(times[i] - t) <= 1e-9 * std::max(step, 1e-300)) return i;
    std::ostringstream msg;
    msg << "no snapshot at t = " << t;
    throw DomainError(msg.str());
}

namespace {

int step_count(double T, double h) {
    if (!(h > 0.0) || !(T > 0.0)) throw DomainError("T and h must be positive");
    const double k = std::round(T / h);
    if (k < 1.0 || std::abs(k * h - T) > 1e-9 * T)
        throw DomainError("T must be an integer multiple of h");
    return static_cast<int>(k);
}

LedgerEntry ledger_entry(double t, const Field& u, const SolverReport* rep) {
    LedgerEntry e;
    e.time = t;
    e.mass = mass(u);
    e.min_value = u.values.minCoeff();
    e.linf = norm_linf(u);
    if (rep) {
        e.residual = rep->final_residual;
        e.iterations = rep->iterations;
    }
    return e;
}

}  // namespace

Trajectory evolve_mild(const Field& u0, double T, double h, const ResolventSolver& solver,
                       int snapshot_stride) {
    const int steps = step_count(T, h);
    if (snapshot_stride < 1) throw DomainError("snapshot_stride must be >= 1");
    require_finite(u0, "initial datum");
    if (!(h < solver.coefficients().lambda0()))
        throw PreconditionError("step h must be below lambda_0 = " +
                                std::to_string(solver.coefficients().lambda0()));

    Trajectory traj;
    traj.step = h;
    traj.snapshot_stride = snapshot_stride;
    traj.times.push_back(0.0);
    traj.states.push_back(u0);
    traj.ledger.push_back(ledger_entry(0.0, u0, nullptr));

    Field u = u0;
    for (int k = 1; k <= steps; ++k) {
        SolverReport rep;
        try {
            u = solver.solve(u, h, &rep);
        } catch (const Error& e) {
            std::ostringstream msg;
            msg << "step " << k << " (t = " << k * h << "): " << e.what();
            throw EvolutionError(msg.str(), std::move(traj));
        }
        const double t = k * h;
        traj.ledger.push_back(ledger_entry(t, u, &rep));
        if (k % snapshot_stride == 0 || k == steps) {
            traj.times.push_back(t);
            traj.states.push_back(u);
        }
    }
    return traj;
}

Trajectory evolve_mild(const Field& u0, double T, double h, const CoefficientSet& coeffs,
                       const BernsteinSpec& spec, const SolverParams& params,
                       int snapshot_stride) {
    return evolve_mild(u0, T, h, ResolventSolver(coeffs, spec, params), snapshot_stride);
}

double trajectory_distance(const Trajectory& a, const Trajectory& b) {
    double sup = 0.0;
    for (std::size_t i = 0; i < a.times.size(); ++i) {
        for (std::size_t j = 0; j < b.times.size(); ++j) {
            const double scale = std::max({a.step, b.step, 1e-300});
            if (std::abs(a.times[i] - b.times[j]) <= 1e-9 * scale) {
                sup = std::max(sup, l1_distance(a.states[i], b.states[j]));
                break;
            }
        }
    }
    return sup;
}

RefinementReport refinement_study(const Field& u0, double T, std::span<const double> h_list,
                                  const ResolventSolver& solver, const ExactSolution& exact) {
    RefinementReport rep;
    rep.h_list.assign(h_list.begin(), h_list.end());
    if (h_list.empty()) return rep;
    for (std::size_t i = 1; i < h_list.size(); ++i)
        if (!(h_list[i] < h_list[i - 1])) throw DomainError("h_list must be decreasing");

    const double coarse = h_list.front();
    std::vector<Trajectory> runs;
    for (double h : h_list) {
        step_count(T, h);
        const int stride = static_cast<int>(std::round(coarse / h));
        if (std::abs(stride * h - coarse) > 1e-9 * coarse)
            throw DomainError("every h must divide the coarsest h");
        runs.push_back(evolve_mild(u0, T, h, solver, stride));
    }

    for (std::size_t i = 0; i + 1 < runs.size(); ++i) {
        rep.distances.push_back(trajectory_distance(runs[i], runs[i + 1]));
        if (i > 0 && !(rep.distances[i] < rep.distances[i - 1])) rep.cauchy_decreasing = false;
    }
    for (std::size_t i = 0; i + 1 < rep.distances.size(); ++i)
        rep.self_orders.push_back(std::log(rep.distances[i] / rep.distances[i + 1]) /
                                  std::log(h_list[i] / h_list[i + 1]));

    if (exact) {
        for (const auto& run : runs) {
            double err = 0.0;
            for (std::size_t k = 0; k < run.times.size(); ++k)
                err = std::max(err, l1_distance(run.states[k], exact(run.times[k])));
            rep.exact_errors.push_back(err);
        }
        for (std::size_t i = 0; i + 1 < rep.exact_errors.size(); ++i)
            rep.exact_orders.push_back(std::log(rep.exact_errors[i] / rep.exact_errors[i + 1]) /
                                       std::log(h_list[i] / h_list[i + 1]));
    }
    return rep;
}

FrozenCoefficients freeze_coefficients(const Field& u, const CoefficientSet& coeffs,
                                       double floor_factor) {
    const auto& beta = coeffs.beta();
    const double floor = floor_factor * norm_linf(u);
    const double slope0 = beta.derivative(0.0);
    FrozenCoefficients fc;
    fc.c = u.values.unaryExpr([&](double v) {
        return std::abs(v) < floor || v == 0.0 ? slope0 : beta.value(v) / v;
    });
    fc.w = u.values.unaryExpr([&](double v) { return coeffs.b().value(v); });
    return fc;
}

namespace {
void require_every_step(const Trajectory& traj) {
    if (traj.snapshot_stride != 1 || traj.states.size() != traj.ledger.size())
        throw DomainError("operation needs a trajectory with every step retained");
}
}  // namespace

Trajectory solve_linearized_fp(const Trajectory& u_traj, const Field& v0,
                               const ResolventSolver& solver, double floor_factor) {
    require_every_step(u_traj);
    require_same_grid(u_traj.initial(), v0);
    Trajectory out;
    out.step = u_traj.step;
    out.times.push_back(0.0);
    out.states.push_back(v0);
    out.ledger.push_back(ledger_entry(0.0, v0, nullptr));

    Field v = v0;
    for (std::size_t k = 1; k < u_traj.states.size(); ++k) {
        const auto fc = freeze_coefficients(u_traj.states[k], solver.coefficients(), floor_factor);
        SolverReport rep;
        try {
            v = solver.solve_frozen(v, u_traj.step, fc.c, fc.w, &rep);
        } catch (const Error& e) {
            std::ostringstream msg;
            msg << "linearized step " << k << ": " << e.what();
            throw EvolutionError(msg.str(), std::move(out));
        }
        out.times.push_back(u_traj.times[k]);
        out.states.push_back(v);
        out.ledger.push_back(ledger_entry(u_traj.times[k], v, &rep));
    }
    return out;
}

double linearized_identity_residual(const Trajectory& u_traj, const ResolventSolver& solver,
                                    double floor_factor) {
    require_every_step(u_traj);
    double worst = 0.0;
    for (std::size_t k = 1; k < u_traj.states.size(); ++k) {
        const auto fc = freeze_coefficients(u_traj.states[k], solver.coefficients(), floor_factor);
        worst = std::max(worst, solver.frozen_residual(u_traj.states[k], u_traj.states[k - 1],
                                                       u_traj.step, fc.c, fc.w));
    }
    return worst;
}

namespace {

double bump1(double z) {
    if (std::abs(z) >= 1.0) return 0.0;
    return std::exp(1.0 - 1.0 / (1.0 - z * z));
}

double bump1_dz(double z) {
    if (std::abs(z) >= 1.0) return 0.0;
    const double q = 1.0 - z * z;
    return bump1(z) * (-2.0 * z / (q * q));
}

}  // namespace

TestFunction TestFunction::bump(std::vector<double> center, double radius, double t_end) {
    if (center.empty() || center.size() > 3) throw DomainError("bump center needs 1..3 coordinates");
    if (!(radius > 0.0) || !(t_end > 0.0)) throw DomainError("bump radius and t_end must be positive");
    TestFunction tf;
    tf.t_end = t_end;
    tf.center = center;
    tf.radius = radius;
    tf.chi = [t_end](double t) { return t < 0.0 ? 0.0 : bump1(t / t_end); };
    tf.chi_dt = [t_end](double t) { return t < 0.0 ? 0.0 : bump1_dz(t / t_end) / t_end; };
    tf.psi = [center, radius](std::span<const double> x) {
        double p = 1.0;
        for (std::size_t i = 0; i < center.size(); ++i) p *= bump1((x[i] - center[i]) / radius);
        return p;
    };
    tf.grad_psi = [center, radius](std::span<const double> x, std::span<double> g) {
        const std::size_t d = center.size();
        std::array<double, 3> v{}, dv{};
        for (std::size_t i = 0; i < d; ++i) {
            const double z = (x[i] - center[i]) / radius;
            v[i] = bump1(z);
            dv[i] = bump1_dz(z) / radius;
        }
        for (std::size_t i = 0; i < d; ++i) {
            double p = dv[i];
            for (std::size_t j = 0; j < d; ++j)
                if (j != i) p *= v[j];
            g[i] = p;
        }
    };
    return tf;
}

TestFunction TestFunction::zero() {
    TestFunction tf;
    tf.chi = [](double) { return 0.0; };
    tf.chi_dt = [](double) { return 0.0; };
    tf.psi = [](std::span<const double>) { return 0.0; };
    tf.grad_psi = [](std::span<const double>, std::span<double> g) {
        std::fill(g.begin(), g.end(), 0.0);
    };
    tf.identically_zero = true;
    return tf;
}

double weak_form_residual(const Trajectory& u_traj, const TestFunction& phi,
                          const BernsteinSpec& spec, const CoefficientSet& coeffs,
                          WeakFormDrift drift) {
    if (phi.identically_zero) return 0.0;
    require_every_step(u_traj);
    const Grid& grid = u_traj.initial().grid;
    const int d = grid.dim();
    const double T = u_traj.times.back();
    const double half = 0.5 * grid.box_length();
    if (phi.t_end > T * (1.0 + 1e-12)) throw DomainError("test function support exceeds [0, T)");
    if (static_cast<int>(phi.center.size()) != d) throw DomainError("test function dimension mismatch");
    for (double c : phi.center)
        if (std::abs(c) + phi.radius >= half) throw DomainError("test function support leaves the torus");

    const auto n = static_cast<Eigen::Index>(grid.size());
    Field psi(grid);
    std::vector<Eigen::ArrayXd> grad(d, Eigen::ArrayXd::Zero(n));
    double x[3], g[3];
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto idx = grid.unravel(static_cast<std::size_t>(i));
        for (int a = 0; a < d; ++a) x[a] = grid.coordinate(idx[a]);
        const std::span<const double> xs{x, static_cast<std::size_t>(d)};
        psi.values[i] = phi.psi(xs);
        phi.grad_psi(xs, {g, static_cast<std::size_t>(d)});
        for (int a = 0; a < d; ++a) grad[a][i] = g[a];
    }
    const Field psi_lap = apply_psi_laplacian(psi, spec);
    Eigen::ArrayXd d_dot_grad = Eigen::ArrayXd::Zero(n);
    for (int a = 0; a < d; ++a) d_dot_grad += coeffs.drift_component(a) * grad[a];

    // 5-point Gauss-Legendre on each step interval for int chi dt.
    static constexpr std::array<double, 5> gx{-0.9061798459386640, -0.5384693101056831, 0.0,
                                              0.5384693101056831, 0.9061798459386640};
    static constexpr std::array<double, 5> gw{0.2369268850561891, 0.4786286704993665,
                                              0.5688888888888889, 0.4786286704993665,
                                              0.2369268850561891};
    const double h = u_traj.step;
    const double cell = grid.cell_volume();
    double total = phi.chi(0.0) * (psi.values * u_traj.states[0].values).sum() * cell;
    for (std::size_t k = 1; k < u_traj.states.size(); ++k) {
        const double t0 = (k - 1) * h, t1 = k * h;
        if (t0 >= phi.t_end) break;
        double chi_int = 0.0;
        for (std::size_t q = 0; q < gx.size(); ++q)
            chi_int += gw[q] * phi.chi(0.5 * (t0 + t1) + 0.5 * h * gx[q]);
        chi_int *= 0.5 * h;
        const double dchi = phi.chi(t1) - phi.chi(t0);

        const Eigen::ArrayXd& u = u_traj.states[k].values;
        const Eigen::ArrayXd bu = u.unaryExpr([&](double v) { return coeffs.beta().value(v); });
        double integrand = dchi * (u * psi.values).sum() * cell;
        integrand -= chi_int * (psi_lap.values * bu).sum() * cell;
        if (!coeffs.drift_is_zero()) {
            const Eigen::ArrayXd bstar = u.unaryExpr([&](double v) { return coeffs.b_star(v); });
            if (drift == WeakFormDrift::Analytic) {
                integrand += chi_int * (bstar * d_dot_grad).sum() * cell;
            } else {
                const Field div = divergence_flux(Field(grid, bstar), coeffs);
                integrand -= chi_int * (psi.values * div.values).sum() * cell;
            }
        }
        total += integrand;
    }
    return total;
}

}  // namespace nlfp
