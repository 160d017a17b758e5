#include "nlfp/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>
#include <sstream>

#include "nlfp/error.hpp"
#include "nlfp/spectral.hpp"

namespace nlfp {

namespace {

template <class T>
T req(const json& j, const std::string& key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) throw ConfigError(where + "/" + key, "missing field");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "/" + key, e.what());
    }
}

template <class T>
T opt(const json& j, const std::string& key, T fallback, const std::string& where) {
    if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
    return req<T>(j, key, where);
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where, "expected an object");
    for (const auto& [key, _] : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
            throw ConfigError(where + "/" + key, "unknown field");
    }
}

std::vector<double> vec_or(const json& j, const std::string& key, std::vector<double> fallback,
                           std::size_t size, const std::string& where) {
    auto v = opt<std::vector<double>>(j, key, std::move(fallback), where);
    if (v.size() != size) throw ConfigError(where + "/" + key, "expected " + std::to_string(size) + " entries");
    return v;
}

json num(double x) {
    if (std::isfinite(x)) return x;
    return x > 0 ? "inf" : (x < 0 ? "-inf" : "nan");
}

double gaussian_at(const Grid& g, std::size_t flat, const std::vector<double>& c, double sigma) {
    const auto idx = g.unravel(flat);
    double r2 = 0.0;
    for (int a = 0; a < g.dim(); ++a) {
        const double dx = g.coordinate(idx[a]) - c[a];
        r2 += dx * dx;
    }
    return std::exp(-r2 / (2.0 * sigma * sigma));
}

Field normalized(Field f, double target_mass, const std::string& where) {
    const double m = mass(f);
    if (!(m > 0.0)) throw ConfigError(where, "initial condition has no mass on the grid");
    f.values *= target_mass / m;
    return f;
}

}  // namespace

ScalarLaw beta_from_json(const json& j, const std::string& where) {
    const auto preset = req<std::string>(j, "preset", where);
    try {
        if (preset == "linear") return presets::beta_linear(opt<double>(j, "scale", 1.0, where));
        if (preset == "cubic_clipped") return presets::beta_cubic_clipped(opt<double>(j, "clip", 2.0, where));
        if (preset == "arctan") return presets::beta_arctan();
        if (preset == "porous_clipped") return presets::beta_porous_clipped(opt<double>(j, "clip", 4.0, where));
        if (preset == "saturating") return presets::beta_saturating();
        if (preset == "zero") return presets::beta_zero();
    } catch (const DomainError& e) {
        throw ConfigError(where, e.what());
    }
    throw ConfigError(where + "/preset", "unknown beta preset '" + preset + "'");
}

ScalarLaw b_from_json(const json& j, const std::string& where) {
    const auto preset = req<std::string>(j, "preset", where);
    try {
        if (preset == "constant") return presets::b_constant(opt<double>(j, "value", 1.0, where));
        if (preset == "zero") return presets::b_constant(0.0);
        if (preset == "saturating") return presets::b_saturating();
    } catch (const DomainError& e) {
        throw ConfigError(where, e.what());
    }
    throw ConfigError(where + "/preset", "unknown b preset '" + preset + "'");
}

VectorField drift_from_json(const json& j, int d, const std::string& where) {
    const auto preset = req<std::string>(j, "preset", where);
    try {
        if (preset == "zero") return presets::drift_zero(d);
        if (preset == "constant") return presets::drift_constant(vec_or(j, "components", {}, d, where));
        if (preset == "confining") return presets::drift_confining(d, opt<double>(j, "amplitude", 1.0, where));
        if (preset == "rotation")
            return presets::drift_rotation(d, opt<double>(j, "amplitude", 1.0, where),
                                           opt<double>(j, "width", 2.0, where));
    } catch (const DomainError& e) {
        throw ConfigError(where, e.what());
    }
    throw ConfigError(where + "/preset", "unknown drift preset '" + preset + "'");
}

SolverParams solver_params_from_json(const json& j, const std::string& where) {
    SolverParams p;
    if (j.is_null()) return p;
    reject_unknown(j, {"eps_schedule", "damping", "tol_fixedpoint", "max_iter", "stage_tol_factor"}, where);
    p.eps_schedule = opt<std::vector<double>>(j, "eps_schedule", p.eps_schedule, where);
    p.damping = opt<double>(j, "damping", p.damping, where);
    if (j.contains("tol_fixedpoint") && !j["tol_fixedpoint"].is_null())
        p.tol_fixedpoint = req<double>(j, "tol_fixedpoint", where);
    p.max_iter = opt<int>(j, "max_iter", p.max_iter, where);
    p.stage_tol_factor = opt<double>(j, "stage_tol_factor", p.stage_tol_factor, where);
    try {
        p.validate();
    } catch (const DomainError& e) {
        throw ConfigError(where, e.what());
    }
    return p;
}

Field initial_condition_from_json(const json& j, const Grid& grid, const fs::path& base_dir,
                                  const std::string& where) {
    const auto kind = req<std::string>(j, "kind", where);
    const int d = grid.dim();
    const double target = opt<double>(j, "mass", 1.0, where);
    Field f(grid);
    if (kind == "gaussian") {
        const auto c = vec_or(j, "center", std::vector<double>(d, 0.0), d, where);
        const double sigma = opt<double>(j, "sigma", 1.0, where);
        if (!(sigma > 0.0)) throw ConfigError(where + "/sigma", "must be positive");
        for (std::size_t i = 0; i < grid.size(); ++i)
            f.values[static_cast<Eigen::Index>(i)] = gaussian_at(grid, i, c, sigma);
        return normalized(std::move(f), target, where);
    }
    if (kind == "two-bumps") {
        const auto centers = req<std::vector<std::vector<double>>>(j, "centers", where);
        if (centers.size() != 2) throw ConfigError(where + "/centers", "expected two centers");
        const double sigma = opt<double>(j, "sigma", 1.0, where);
        const auto w = vec_or(j, "weights", {0.5, 0.5}, 2, where);
        for (std::size_t b = 0; b < 2; ++b) {
            if (static_cast<int>(centers[b].size()) != d)
                throw ConfigError(where + "/centers/" + std::to_string(b), "wrong dimension");
            for (std::size_t i = 0; i < grid.size(); ++i)
                f.values[static_cast<Eigen::Index>(i)] += w[b] * gaussian_at(grid, i, centers[b], sigma);
        }
        return normalized(std::move(f), target, where);
    }
    if (kind == "indicator") {
        const auto lo = vec_or(j, "lower", std::vector<double>(d, -1.0), d, where);
        const auto hi = vec_or(j, "upper", std::vector<double>(d, 1.0), d, where);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const auto idx = grid.unravel(i);
            bool inside = true;
            for (int a = 0; a < d; ++a) {
                const double x = grid.coordinate(idx[a]);
                inside = inside && x >= lo[a] && x < hi[a];
            }
            f.values[static_cast<Eigen::Index>(i)] = inside ? 1.0 : 0.0;
        }
        return normalized(std::move(f), target, where);
    }
    if (kind == "file") {
        fs::path p = req<std::string>(j, "path", where);
        if (p.is_relative()) p = base_dir / p;
        Field loaded = read_field(p);
        if (!(loaded.grid == grid)) throw ConfigError(where + "/path", "field grid does not match /grid");
        return loaded;
    }
    throw ConfigError(where + "/kind", "unknown initial condition '" + kind + "'");
}

Field random_bump_field(const Grid& grid, RandomStream& rng, int bumps) {
    const int d = grid.dim();
    const double L = grid.box_length();
    Field f(grid);
    for (int b = 0; b < bumps; ++b) {
        std::vector<double> c(d);
        for (double& ci : c) ci = (rng.uniform() - 0.5) * L / 4.0;
        const double sigma = 0.5 + rng.uniform();
        const double w = 0.2 + rng.uniform();
        for (std::size_t i = 0; i < grid.size(); ++i)
            f.values[static_cast<Eigen::Index>(i)] += w * gaussian_at(grid, i, c, sigma);
    }
    f.values /= mass(f);
    return f;
}

ScenarioConfig parse_scenario(const json& j, const fs::path& base_dir) {
    reject_unknown(j, {"schema_version", "bernstein", "grid", "coefficients", "initial_condition",
                       "solver", "run", "verification", "output", "seed", "description"},
                   "");
    const int version = req<int>(j, "schema_version", "");
    if (version != kScenarioSchemaVersion)
        throw ConfigError("/schema_version", "unsupported schema version " + std::to_string(version));

    BernsteinSpec spec = bernstein_from_json(req<json>(j, "bernstein", ""));
    Grid grid = grid_from_json(req<json>(j, "grid", ""));
    const json cj = req<json>(j, "coefficients", "");
    reject_unknown(cj, {"beta", "b", "drift"}, "/coefficients");
    CoefficientSet coeffs = [&] {
        try {
            return CoefficientSet(grid, beta_from_json(req<json>(cj, "beta", "/coefficients")),
                                  b_from_json(opt<json>(cj, "b", json{{"preset", "zero"}}, "/coefficients")),
                                  drift_from_json(opt<json>(cj, "drift", json{{"preset", "zero"}}, "/coefficients"),
                                                  grid.dim()));
        } catch (const DomainError& e) {
            throw ConfigError("/coefficients", e.what());
        }
    }();
    SolverParams solver = solver_params_from_json(opt<json>(j, "solver", json(nullptr), ""));
    Field initial = initial_condition_from_json(req<json>(j, "initial_condition", ""), grid, base_dir);

    RunBlock run;
    if (j.contains("run")) {
        const json& r = j["run"];
        const std::string w = "/run";
        reject_unknown(r, {"T", "h", "N", "mode", "snapshot_stride", "h_list", "lambda", "pairs", "shards",
                           "exact_threshold", "particle_budget_factor", "twin_replicates"},
                       w);
        run.T = opt<double>(r, "T", run.T, w);
        run.h = opt<double>(r, "h", run.h, w);
        run.N = opt<std::size_t>(r, "N", run.N, w);
        run.mode = opt<std::string>(r, "mode", run.mode, w);
        run.snapshot_stride = opt<int>(r, "snapshot_stride", grid.dim() == 1 ? 1 : 10, w);
        run.h_list = opt<std::vector<double>>(r, "h_list", {}, w);
        if (r.contains("lambda")) run.lambda = req<double>(r, "lambda", w);
        run.pairs = opt<int>(r, "pairs", run.pairs, w);
        run.shards = opt<std::size_t>(r, "shards", run.shards, w);
        run.exact_threshold = opt<double>(r, "exact_threshold", run.exact_threshold, w);
        run.particle_budget_factor = opt<double>(r, "particle_budget_factor", run.particle_budget_factor, w);
        run.twin_replicates = opt<int>(r, "twin_replicates", run.twin_replicates, w);
    } else if (grid.dim() > 1) {
        run.snapshot_stride = 10;
    }
    if (!(run.T > 0.0)) throw ConfigError("/run/T", "must be positive");
    if (!(run.h > 0.0)) throw ConfigError("/run/h", "must be positive");
    const double k = std::round(run.T / run.h);
    if (k < 1.0 || std::abs(k * run.h - run.T) > 1e-9 * run.T)
        throw ConfigError("/run/h", "T must be an integer multiple of h");
    if (run.mode != "pde-coupled" && run.mode != "self-coupled")
        throw ConfigError("/run/mode", "expected pde-coupled or self-coupled");
    if (run.snapshot_stride < 1) throw ConfigError("/run/snapshot_stride", "must be >= 1");
    if (run.N < 1) throw ConfigError("/run/N", "must be >= 1");
    if (run.shards < 1) throw ConfigError("/run/shards", "must be >= 1");
    if (run.pairs < 1) throw ConfigError("/run/pairs", "must be >= 1");

    Verifications v;
    if (j.contains("verification")) {
        const json& vj = j["verification"];
        const std::string w = "/verification";
        reject_unknown(vj, {"mass", "positivity", "linf_bound", "contraction", "resolvent_identity", "weak_form",
                            "linearized", "particle_marginals", "exact_linear"},
                       w);
        v.mass = opt<bool>(vj, "mass", v.mass, w);
        v.positivity = opt<bool>(vj, "positivity", v.positivity, w);
        v.linf_bound = opt<bool>(vj, "linf_bound", v.linf_bound, w);
        v.contraction = opt<bool>(vj, "contraction", v.contraction, w);
        v.resolvent_identity = opt<bool>(vj, "resolvent_identity", v.resolvent_identity, w);
        v.weak_form = opt<bool>(vj, "weak_form", v.weak_form, w);
        v.linearized = opt<bool>(vj, "linearized", v.linearized, w);
        v.particle_marginals = opt<bool>(vj, "particle_marginals", v.particle_marginals, w);
        v.exact_linear = opt<bool>(vj, "exact_linear", v.exact_linear, w);
    }

    fs::path out = "nlfp_out";
    if (j.contains("output")) {
        reject_unknown(j["output"], {"directory"}, "/output");
        out = opt<std::string>(j["output"], "directory", out.string(), "/output");
    }
    const auto seed = opt<std::uint64_t>(j, "seed", 0, "");

    return ScenarioConfig{j,      base_dir,        std::move(spec), grid, std::move(coeffs), std::move(solver),
                          std::move(initial), run, v,               out,  seed};
}

namespace {

struct Checks {
    json items = json::object();
    bool all = true;

    void add(const std::string& name, double value, double threshold, bool pass, json extra = json::object()) {
        extra["value"] = num(value);
        extra["threshold"] = num(threshold);
        extra["pass"] = pass;
        items[name] = std::move(extra);
        all = all && pass;
    }
    void note(const std::string& name, json info) { items[name] = std::move(info); }
};

void gate_step(const CoefficientSet& c, double h, const std::string& where) {
    const double l0 = c.lambda0();
    if (!(h < l0)) {
        std::ostringstream msg;
        msg << "step " << h << " must be below lambda_0 = " << l0
            << ", where lambda_0 = 1 / (|(div D)^- + |D||_inf^{1/2} * |b|_inf)";
        throw ConfigError(where, msg.str());
    }
}

json hypotheses_json(const ScenarioConfig& cfg, bool particle, bool allow, HypothesisReport& rep) {
    rep = check_hypotheses(cfg.bernstein, default_probe_grid());
    const bool ok = particle ? rep.passes_particle() : rep.passes_existence();
    const auto coeff = check_coefficients(cfg.coefficients);
    if (!allow) {
        if (!ok)
            throw ConfigError("/bernstein", particle ? "hypothesis check failed (existence or log-moment)"
                                                     : "hypothesis check failed");
        if (!coeff.passes()) throw ConfigError("/coefficients", "coefficient hypotheses failed");
    }
    json j = hypothesis_report_to_json(rep);
    j["coefficients"] = {{"beta_zero_at_zero", coeff.beta_zero_at_zero},
                         {"beta_strictly_increasing", coeff.beta_strictly_increasing},
                         {"beta_lipschitz", coeff.beta_lipschitz},
                         {"b_nonnegative", coeff.b_nonnegative},
                         {"b_bounded", coeff.b_bounded},
                         {"pass", coeff.passes()}};
    j["allowed_failure"] = allow && !(ok && coeff.passes());
    return j;
}

json derived_json(const ScenarioConfig& cfg) {
    const auto& c = cfg.coefficients;
    return {{"gamma", num(c.gamma())},
            {"lambda0", num(c.lambda0())},
            {"lambda0_formula", "1 / (|(div D)^- + |D||_inf^{1/2} * |b|_inf)"},
            {"drift_bound", num(c.drift_bound())},
            {"initial_mass", mass(cfg.initial)},
            {"tolerance", cfg.solver.tolerance_for(cfg.initial)}};
}

void boundary_warnings(const Trajectory& traj, json& warnings) {
    double worst = 0.0;
    for (const auto& s : traj.states) {
        const double m = std::abs(mass(s));
        if (m > 0.0) worst = std::max(worst, boundary_mass(s) / m);
    }
    if (worst > 1e-6) {
        std::ostringstream msg;
        msg << "boundary mass fraction " << worst << " exceeds 1e-6; enlarge box_length";
        warnings.push_back(msg.str());
    }
}

Trajectory thin(const Trajectory& traj, int stride) {
    if (stride <= 1) return traj;
    Trajectory out;
    out.step = traj.step;
    out.snapshot_stride = stride;
    out.ledger = traj.ledger;
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        if (k % stride == 0 || k + 1 == traj.states.size()) {
            out.times.push_back(traj.times[k]);
            out.states.push_back(traj.states[k]);
        }
    }
    return out;
}

Field shift_one_cell(const Field& f) {
    Field out(f.grid);
    const auto stride = f.grid.stride(0);
    const auto n = static_cast<Eigen::Index>(f.values.size());
    for (Eigen::Index i = 0; i < n; ++i) out.values[(i + static_cast<Eigen::Index>(stride)) % n] = f.values[i];
    return out;
}

void particle_block(const ScenarioConfig& cfg, const Trajectory& traj, const RunOptions& ro,
                    const fs::path& out, Checks& checks, json& report) {
    const ParallelOptions par{ro.threads};
    const auto& run = cfg.run;
    const TwinBudget budget = twin_sample_budget(traj.final_state(), run.N, cfg.seed ^ 0x5eed, run.twin_replicates,
                                                 std::nullopt, run.shards, par);
    McKeanOptions mo;
    mo.mode = run.mode == "pde-coupled" ? McKeanMode::PdeCoupled : McKeanMode::SelfCoupled;
    mo.seed = cfg.seed;
    mo.shards = run.shards;
    mo.par = par;
    mo.bandwidth = budget.bandwidth;
    mo.metrics_every = std::max(1, run.snapshot_stride);
    const McKeanReport mk = run_mckean(cfg.initial, run.T, run.h, run.N, cfg.coefficients, cfg.bernstein, &traj, mo);

    write_metrics_csv(mk.series, out / "metrics.csv");
    write_ensemble(mk.ensemble, out / "ensemble");
    const double final_l1 = mk.series.back().l1;
    json series = json::array();
    for (const auto& m : mk.series) series.push_back({{"time", m.time}, {"l1", m.l1}, {"w1", m.w1}});
    report["particles"] = {{"N", run.N},
                           {"mode", run.mode},
                           {"shards", run.shards},
                           {"bandwidth", budget.bandwidth},
                           {"twin_budget", {{"mean", budget.l1_mean}, {"std", budget.l1_std}, {"samples", budget.samples}}},
                           {"initial_ks", ks_statistic(init_ensemble(cfg.initial, run.N, cfg.seed, run.shards, par),
                                                       cfg.initial, 0)},
                           {"series", series}};
    checks.add("particle_marginals", final_l1, run.particle_budget_factor * budget.l1_mean,
               final_l1 <= run.particle_budget_factor * budget.l1_mean);
}

json base_report(const std::string& command, const ScenarioConfig& cfg) {
    return {{"schema_version", kScenarioSchemaVersion},
            {"command", command},
            {"seed", cfg.seed},
            {"config", cfg.raw},
            {"derived", derived_json(cfg)},
            {"warnings", json::array()}};
}

RunOutcome finish(json report, const Checks& checks, const fs::path& out) {
    report["verifications"] = checks.items;
    report["pass"] = checks.all;
    fs::create_directories(out);
    write_json_file(report, out / "report.json");
    return {report, checks.all ? 0 : 1};
}

RunOutcome cmd_run(ScenarioConfig& cfg, const RunOptions& ro, const fs::path& out, bool particles_only) {
    const std::string command = particles_only ? "particle-only" : "run";
    json report = base_report(command, cfg);
    const bool want_particles = particles_only || cfg.verify.particle_marginals;
    HypothesisReport hyp;
    report["hypotheses"] = hypotheses_json(cfg, want_particles, ro.allow_hypothesis_fail, hyp);
    gate_step(cfg.coefficients, cfg.run.h, "/run/h");

    const ResolventSolver solver(cfg.coefficients, cfg.bernstein, cfg.solver);
    const Field& u0 = cfg.initial;
    const double tol = cfg.solver.tolerance_for(u0);
    const auto& run = cfg.run;
    const Trajectory traj = evolve_mild(u0, run.T, run.h, solver, 1);
    fs::create_directories(out);
    Checks checks;

    if (!particles_only) {
        const auto& v = cfg.verify;
        const double m0 = traj.ledger.front().mass;
        if (v.mass) {
            double drift = 0.0;
            for (const auto& e : traj.ledger) drift = std::max(drift, std::abs(e.mass - m0));
            const double thr = 1e-8 * std::max(std::abs(m0), 1e-300);
            checks.add("mass", drift, thr, drift <= thr);
        }
        if (v.positivity && u0.values.minCoeff() >= 0.0) {
            double mn = 0.0;
            for (const auto& e : traj.ledger) mn = std::min(mn, e.min_value);
            checks.add("positivity", mn, -1e-10, mn >= -1e-10);
        }
        if (v.linf_bound) {
            const double g = cfg.coefficients.gamma(), l0 = norm_linf(u0);
            double worst = -std::numeric_limits<double>::infinity();
            for (const auto& e : traj.ledger)
                worst = std::max(worst, e.linf / (std::exp(g * e.time) * l0 * (1.0 + 1e-6)));
            checks.add("linf_bound", worst, 1.0, worst <= 1.0, {{"note", "max of |u(t)|_inf / (e^{gamma t}|u0|_inf (1+1e-6))"}});
        }
        if (v.contraction) {
            const Field ub = shift_one_cell(u0);
            const Trajectory tb = evolve_mild(ub, run.T, run.h, solver, 1);
            double worst = -std::numeric_limits<double>::infinity();
            double prev = l1_distance(u0, ub);
            const double d0 = prev;
            for (std::size_t k = 1; k < traj.states.size(); ++k) {
                const double dk = l1_distance(traj.states[k], tb.states[k]);
                worst = std::max(worst, dk - prev);
                prev = dk;
            }
            checks.add("contraction", worst, 2.0 * tol, worst <= 2.0 * tol,
                       {{"initial_distance", d0}, {"final_distance", prev}});
        }
        if (v.resolvent_identity) {
            double l1 = run.h, l2 = 2.0 * run.h;
            if (!(l2 < cfg.coefficients.lambda0())) {
                l1 = 0.5 * run.h;
                l2 = run.h;
            }
            const auto ir = check_resolvent_identity(u0, l1, l2, solver);
            checks.add("resolvent_identity", ir.discrepancy, ir.bound, ir.pass, {{"lambda1", l1}, {"lambda2", l2}});
        }
        if (v.weak_form || v.linearized) {
            const Trajectory half = evolve_mild(u0, run.T, 0.5 * run.h, solver, 1);
            const double step_error = trajectory_distance(traj, half);
            report["step_error"] = step_error;
            if (v.weak_form) {
                const int d = u0.grid.dim();
                const double radius = std::min(0.25 * u0.grid.box_length(), 4.0);
                const auto phi = TestFunction::bump(std::vector<double>(d, 0.0), radius, run.T);
                const double r1 = std::abs(weak_form_residual(traj, phi, cfg.bernstein, cfg.coefficients));
                const double r2 = std::abs(weak_form_residual(half, phi, cfg.bernstein, cfg.coefficients));
                const bool pass = r2 <= r1 / 1.5 || std::max(r1, r2) <= 1e-10;
                checks.add("weak_form", r2, r1 / 1.5, pass, {{"residual_h", r1}, {"residual_h_half", r2}});
            }
            if (v.linearized) {
                const Trajectory lin = solve_linearized_fp(traj, u0, solver);
                const double dist = trajectory_distance(lin, traj);
                double mass_drift = 0.0;
                for (const auto& e : lin.ledger) mass_drift = std::max(mass_drift, std::abs(e.mass - m0));
                const double bound = 5.0 * step_error + 5.0 * tol;
                checks.add("linearized", dist, bound, dist <= bound && mass_drift <= 1e-8 * std::abs(m0),
                           {{"mass_drift", mass_drift},
                            {"identity_residual", linearized_identity_residual(traj, solver)}});
            }
        }
        if (v.exact_linear) {
            const auto& beta = cfg.coefficients.beta();
            if (beta.linear && cfg.coefficients.drift_is_zero()) {
                double err = 0.0;
                for (std::size_t k = 0; k < traj.states.size(); ++k)
                    err = std::max(err, l1_distance(traj.states[k],
                                                    psi_semigroup(u0, cfg.bernstein, beta.lipschitz * traj.times[k])));
                checks.add("exact_linear", err, run.exact_threshold, err <= run.exact_threshold);
            } else {
                report["warnings"].push_back("exact_linear skipped: needs linear beta and no drift");
            }
        }
        const Trajectory written = thin(traj, run.snapshot_stride);
        write_trajectory(written, out / "trajectory");
        write_ledger_csv(traj.ledger, out / "ledger.csv");
        write_field(traj.final_state(), out / "final.bin");
        if (u0.grid.dim() == 1) write_field_csv(traj.final_state(), out / "final.csv");
        json ledger_summary = {{"steps", traj.ledger.size() - 1},
                               {"final_mass", traj.ledger.back().mass},
                               {"final_linf", traj.ledger.back().linf},
                               {"max_residual", 0.0},
                               {"total_iterations", 0}};
        double maxres = 0.0;
        long iters = 0;
        for (const auto& e : traj.ledger) {
            maxres = std::max(maxres, e.residual);
            iters += e.iterations;
        }
        ledger_summary["max_residual"] = maxres;
        ledger_summary["total_iterations"] = iters;
        report["ledger"] = ledger_summary;
    }
    boundary_warnings(traj, report["warnings"]);
    if (want_particles) particle_block(cfg, traj, ro, out, checks, report);
    return finish(std::move(report), checks, out);
}

RunOutcome cmd_resolvent_test(ScenarioConfig& cfg, const RunOptions& ro, const fs::path& out) {
    json report = base_report("resolvent-test", cfg);
    HypothesisReport hyp;
    report["hypotheses"] = hypotheses_json(cfg, false, ro.allow_hypothesis_fail, hyp);
    const double lambda = cfg.run.lambda.value_or(cfg.run.h);
    gate_step(cfg.coefficients, lambda, cfg.run.lambda ? "/run/lambda" : "/run/h");
    const ResolventSolver solver(cfg.coefficients, cfg.bernstein, cfg.solver);
    double l1 = lambda, l2 = 2.0 * lambda;
    if (!(l2 < cfg.coefficients.lambda0())) {
        l1 = 0.5 * lambda;
        l2 = lambda;
    }
    RandomStream rng(cfg.seed, 0x2e50);
    const double gamma = cfg.coefficients.gamma();
    double worst_margin = std::numeric_limits<double>::infinity(), worst_slack = 0.0;
    double worst_identity = 0.0, identity_bound = std::numeric_limits<double>::infinity();
    double worst_mass = 0.0, worst_min = std::numeric_limits<double>::infinity(), worst_linf = -1.0;
    double worst_order = 0.0;
    bool contraction_ok = true, identity_ok = true;
    for (int p = 0; p < cfg.run.pairs; ++p) {
        const Field f1 = random_bump_field(cfg.grid, rng);
        const Field f2 = random_bump_field(cfg.grid, rng);
        const auto cr = check_l1_contraction(f1, f2, lambda, solver);
        contraction_ok = contraction_ok && cr.pass;
        if (cr.margin < worst_margin) {
            worst_margin = cr.margin;
            worst_slack = cr.slack;
        }
        const auto ir = check_resolvent_identity(f1, l1, l2, solver);
        identity_ok = identity_ok && ir.pass;
        worst_identity = std::max(worst_identity, ir.discrepancy);
        identity_bound = std::min(identity_bound, ir.bound);

        SolverReport sr;
        const Field y = solver.solve(f1, lambda, &sr);
        worst_mass = std::max(worst_mass, std::abs(mass(y) - mass(f1)) / mass(f1));
        worst_min = std::min(worst_min, y.values.minCoeff());
        worst_linf = std::max(worst_linf, norm_linf(y) - (gamma * norm_linf(f1) + sr.tol));

        Field upper(f1.grid, f1.values + 0.5 * f2.values);
        worst_order = std::max(worst_order, check_order_preservation(f1, upper, lambda, solver).max_violation);
    }
    Checks checks;
    checks.add("contraction", worst_margin, -worst_slack, contraction_ok);
    checks.add("resolvent_identity", worst_identity, identity_bound, identity_ok,
               {{"lambda1", l1}, {"lambda2", l2}});
    checks.add("mass", worst_mass, 1e-8, worst_mass <= 1e-8);
    checks.add("positivity", worst_min, -1e-10, worst_min >= -1e-10);
    checks.add("linf_bound", worst_linf, 0.0, worst_linf <= 0.0,
               {{"note", "max of |J f|_inf - (gamma |f|_inf + tol)"}});
    checks.note("order_preservation",
                {{"max_violation", worst_order}, {"slack", 1e-8}, {"diagnostic", true}, {"holds", worst_order <= 1e-8}});
    report["lambda"] = lambda;
    report["pairs"] = cfg.run.pairs;
    return finish(std::move(report), checks, out);
}

RunOutcome cmd_convergence(ScenarioConfig& cfg, const RunOptions& ro, const fs::path& out) {
    json report = base_report("convergence", cfg);
    HypothesisReport hyp;
    report["hypotheses"] = hypotheses_json(cfg, false, ro.allow_hypothesis_fail, hyp);
    std::vector<double> hs = cfg.run.h_list;
    if (hs.empty()) hs = {4.0 * cfg.run.h, 2.0 * cfg.run.h, cfg.run.h};
    for (std::size_t i = 0; i < hs.size(); ++i) gate_step(cfg.coefficients, hs[i], "/run/h_list/" + std::to_string(i));
    const ResolventSolver solver(cfg.coefficients, cfg.bernstein, cfg.solver);
    const auto& beta = cfg.coefficients.beta();
    ExactSolution exact;
    if (beta.linear && cfg.coefficients.drift_is_zero()) {
        const double scale = beta.lipschitz;
        exact = [&cfg, scale](double t) { return psi_semigroup(cfg.initial, cfg.bernstein, scale * t); };
    }
    RefinementReport rr;
    try {
        rr = refinement_study(cfg.initial, cfg.run.T, hs, solver, exact);
    } catch (const DomainError& e) {
        throw ConfigError("/run/h_list", e.what());
    }
    report["refinement"] = {{"h_list", rr.h_list},
                            {"distances", rr.distances},
                            {"self_orders", rr.self_orders},
                            {"exact_errors", rr.exact_errors},
                            {"exact_orders", rr.exact_orders}};
    Checks checks;
    if (rr.distances.size() >= 2)
        checks.add("cauchy_decrease", rr.distances.back(), rr.distances.front(), rr.cauchy_decreasing);
    if (!rr.exact_orders.empty()) {
        const double mn = *std::min_element(rr.exact_orders.begin(), rr.exact_orders.end());
        checks.add("exact_order", mn, 0.8, mn >= 0.8);
    }
    return finish(std::move(report), checks, out);
}

RunOutcome cmd_check_spec(const json& j, const RunOptions& ro, const fs::path& out) {
    const bool bare = j.contains("variant");
    const BernsteinSpec spec = bare ? bernstein_from_json(j, "") : bernstein_from_json(req<json>(j, "bernstein", ""));
    const auto rep = check_hypotheses(spec, default_probe_grid());
    json report = {{"schema_version", kScenarioSchemaVersion},
                   {"command", "check-spec"},
                   {"warnings", json::array()},
                   {"spec", bernstein_to_json(spec)},
                   {"hypotheses", hypothesis_report_to_json(rep)}};
    Checks checks;
    checks.add("lower_bound", rep.min_lower_ratio, spec.c_lower, rep.lower_bound_pass && rep.s_lower_in_range);
    checks.add("sublinear", rep.m, rep.m, rep.sublinear_pass);
    checks.add("log_moment", rep.log_moment_finite ? rep.log_moment : std::numeric_limits<double>::infinity(),
               std::numeric_limits<double>::infinity(), rep.log_moment_finite);
    checks.add("triplet", spec.a1 + spec.a2, 0.0, rep.triplet_ok);
    (void)ro;
    return finish(std::move(report), checks, out);
}

}  // namespace

RunOutcome run_command(const std::string& command, const fs::path& config_path, const RunOptions& options) {
    const json j = read_json_file(config_path);
    const fs::path base = config_path.has_parent_path() ? config_path.parent_path() : fs::path(".");

    if (command == "check-spec") {
        fs::path out = options.out.value_or(fs::path("nlfp_out"));
        if (!options.out && j.contains("output") && j["output"].contains("directory"))
            out = j["output"]["directory"].get<std::string>();
        return cmd_check_spec(j, options, out);
    }

    ScenarioConfig cfg = parse_scenario(j, base);
    if (options.seed) cfg.seed = *options.seed;
    if (options.out) cfg.output_dir = *options.out;
    if (options.threads < 1) throw ConfigError("--threads", "must be >= 1");

    if (command == "run") return cmd_run(cfg, options, cfg.output_dir, false);
    if (command == "particle-only") return cmd_run(cfg, options, cfg.output_dir, true);
    if (command == "resolvent-test") return cmd_resolvent_test(cfg, options, cfg.output_dir);
    if (command == "convergence") return cmd_convergence(cfg, options, cfg.output_dir);
    throw ConfigError("command", "unknown subcommand '" + command + "'");
}

}  // namespace nlfp
