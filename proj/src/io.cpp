#include "nlfp/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "nlfp/error.hpp"

namespace nlfp {

namespace {

void write_doubles(const double* data, std::size_t n, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    if constexpr (std::endian::native == std::endian::little) {
        out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            auto bits = std::bit_cast<std::uint64_t>(data[i]);
            bits = __builtin_bswap64(bits);
            out.write(reinterpret_cast<const char*>(&bits), sizeof bits);
        }
    }
    if (!out) throw Error("write failed: " + path.string());
}

std::vector<double> read_doubles(const fs::path& path, std::size_t expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<double> v(expected);
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(expected * sizeof(double)));
    if (in.gcount() != static_cast<std::streamsize>(expected * sizeof(double)))
        throw Error("short read: " + path.string());
    if constexpr (std::endian::native != std::endian::little) {
        for (double& x : v) x = std::bit_cast<double>(__builtin_bswap64(std::bit_cast<std::uint64_t>(x)));
    }
    return v;
}

fs::path sidecar(const fs::path& bin) {
    fs::path p = bin;
    p.replace_extension(".json");
    return p;
}

template <class T>
T get_field(const json& j, const std::string& key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) throw ConfigError(where + "/" + key, "missing field");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "/" + key, e.what());
    }
}

template <class T>
T get_or(const json& j, const std::string& key, T fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    return get_field<T>(j, key, where);
}

std::string state_name(std::size_t k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "state_%05zu.bin", k);
    return buf;
}

}  // namespace

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string(), "cannot open file");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string(), e.what());
    }
}

void write_json_file(const json& j, const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
}

json grid_to_json(const Grid& g) {
    return {{"d", g.dim()}, {"n", g.points_per_axis()}, {"box_length", g.box_length()}};
}

Grid grid_from_json(const json& j, const std::string& where) {
    const int d = get_field<int>(j, "d", where);
    const int n = get_field<int>(j, "n", where);
    const double L = get_field<double>(j, "box_length", where);
    try {
        return Grid(d, n, L);
    } catch (const DomainError& e) {
        throw ConfigError(where, e.what());
    }
}

void write_field(const Field& f, const fs::path& path) {
    write_doubles(f.values.data(), static_cast<std::size_t>(f.values.size()), path);
    json meta = {{"grid", grid_to_json(f.grid)},
                 {"dtype", "float64"},
                 {"endianness", "little"},
                 {"layout", "row-major, axis 0 slowest"},
                 {"origin", -0.5 * f.grid.box_length()},
                 {"spacing", f.grid.spacing()}};
    write_json_file(meta, sidecar(path));
}

Field read_field(const fs::path& path) {
    const json meta = read_json_file(sidecar(path));
    const Grid g = grid_from_json(get_field<json>(meta, "grid", ""), "/grid");
    const auto v = read_doubles(path, g.size());
    return Field(g, Eigen::Map<const Eigen::ArrayXd>(v.data(), static_cast<Eigen::Index>(v.size())));
}

void write_field_csv(const Field& f, const fs::path& path) {
    if (f.grid.dim() != 1) throw DomainError("CSV export is only defined for d = 1");
    std::ofstream out(path);
    out << "x,u\n" << std::setprecision(17);
    for (int i = 0; i < f.grid.points_per_axis(); ++i)
        out << f.grid.coordinate(i) << ',' << f.values[i] << '\n';
}

void write_ledger_csv(const std::vector<LedgerEntry>& ledger, const fs::path& path) {
    std::ofstream out(path);
    out << "time,mass,min,linf,residual,iterations\n" << std::setprecision(17);
    for (const auto& e : ledger)
        out << e.time << ',' << e.mass << ',' << e.min_value << ',' << e.linf << ',' << e.residual
            << ',' << e.iterations << '\n';
}

void write_trajectory(const Trajectory& traj, const fs::path& dir) {
    fs::create_directories(dir);
    json manifest;
    manifest["step"] = traj.step;
    manifest["snapshot_stride"] = traj.snapshot_stride;
    manifest["grid"] = grid_to_json(traj.initial().grid);
    json snaps = json::array();
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        const auto name = state_name(k);
        write_field(traj.states[k], dir / name);
        snaps.push_back({{"time", traj.times[k]}, {"file", name}});
    }
    manifest["snapshots"] = snaps;
    json ledger = json::array();
    for (const auto& e : traj.ledger)
        ledger.push_back({{"time", e.time}, {"mass", e.mass}, {"min", e.min_value}, {"linf", e.linf},
                          {"residual", e.residual}, {"iterations", e.iterations}});
    manifest["ledger"] = ledger;
    write_json_file(manifest, dir / "manifest.json");
    write_ledger_csv(traj.ledger, dir / "ledger.csv");
}

Trajectory read_trajectory(const fs::path& dir) {
    const json m = read_json_file(dir / "manifest.json");
    Trajectory traj;
    traj.step = get_field<double>(m, "step", "");
    traj.snapshot_stride = get_field<int>(m, "snapshot_stride", "");
    for (const auto& s : get_field<json>(m, "snapshots", "")) {
        traj.times.push_back(get_field<double>(s, "time", "/snapshots"));
        traj.states.push_back(read_field(dir / get_field<std::string>(s, "file", "/snapshots")));
    }
    for (const auto& e : get_field<json>(m, "ledger", "")) {
        LedgerEntry le;
        le.time = e.at("time");
        le.mass = e.at("mass");
        le.min_value = e.at("min");
        le.linf = e.at("linf");
        le.residual = e.at("residual");
        le.iterations = e.at("iterations");
        traj.ledger.push_back(le);
    }
    return traj;
}

void write_ensemble(const ParticleEnsemble& ens, const fs::path& dir) {
    fs::create_directories(dir);
    write_doubles(ens.positions.data(), static_cast<std::size_t>(ens.positions.size()), dir / "positions.bin");
    json m = {{"N", ens.size()},
              {"d", ens.dim()},
              {"time", ens.time},
              {"seed", ens.seed},
              {"shards", ens.shard_count()},
              {"layout", "d x N column-major float64, little-endian"}};
    write_json_file(m, dir / "manifest.json");
}

ParticleEnsemble read_ensemble(const fs::path& dir) {
    const json m = read_json_file(dir / "manifest.json");
    const auto N = get_field<std::size_t>(m, "N", "");
    const int d = get_field<int>(m, "d", "");
    ParticleEnsemble ens;
    ens.time = get_field<double>(m, "time", "");
    ens.seed = get_field<std::uint64_t>(m, "seed", "");
    const auto shards = get_field<std::size_t>(m, "shards", "");
    const auto v = read_doubles(dir / "positions.bin", N * static_cast<std::size_t>(d));
    ens.positions = Eigen::Map<const Eigen::MatrixXd>(v.data(), d, static_cast<Eigen::Index>(N));
    const RandomStream root(ens.seed, std::bit_cast<std::uint64_t>(ens.time));
    for (std::size_t s = 0; s < shards; ++s) ens.streams.push_back(root.split(s));
    return ens;
}

void write_metrics_csv(const std::vector<MarginalMetrics>& series, const fs::path& path) {
    std::ofstream out(path);
    const std::size_t d = series.empty() ? 0 : series.front().w1.size();
    out << "time,l1";
    for (std::size_t a = 0; a < d; ++a) out << ",w1_" << a;
    out << '\n' << std::setprecision(17);
    for (const auto& m : series) {
        out << m.time << ',' << m.l1;
        for (double w : m.w1) out << ',' << w;
        out << '\n';
    }
}

json bernstein_to_json(const BernsteinSpec& spec) {
    json j;
    j["s_lower"] = spec.s_lower;
    j["c_lower"] = spec.c_lower;
    j["a1"] = spec.a1;
    j["a2"] = spec.a2;
    std::visit(
        [&j](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, FractionalPower>) {
                j["variant"] = "fractional_power";
                j["s"] = m.s;
            } else if constexpr (std::is_same_v<T, AtomicMix>) {
                j["variant"] = "atomic_mix";
                json atoms = json::array();
                for (const auto& a : m.atoms) atoms.push_back({{"t", a.t}, {"w", a.w}});
                j["atoms"] = atoms;
            } else {
                j["variant"] = "quadrature_density";
                if (!m.preset()) throw DomainError("only preset densities can be serialized");
                const auto& p = *m.preset();
                j["density"] = {{"preset", p.kind == DensityPreset::Kind::FractionalPower
                                               ? "fractional_power"
                                               : "tempered_stable"},
                                {"s", p.s},
                                {"theta", p.theta}};
                j["t_min"] = m.options().t_min;
                j["t_max"] = m.options().t_max;
                j["nodes"] = m.options().nodes;
                j["small_jump_m2"] = m.options().small_jump_m2;
            }
        },
        spec.measure);
    return j;
}

BernsteinSpec bernstein_from_json(const json& j, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where, "expected an object");
    const auto variant = get_field<std::string>(j, "variant", where);
    const double s_lower = get_field<double>(j, "s_lower", where);
    const double c_lower = get_or<double>(j, "c_lower", 1.0, where);
    const double a1 = get_or<double>(j, "a1", 0.0, where);
    const double a2 = get_or<double>(j, "a2", 0.0, where);

    try {
        if (variant == "fractional_power") {
            return BernsteinSpec(FractionalPower{get_field<double>(j, "s", where)}, s_lower, c_lower, a1, a2);
        }
        if (variant == "atomic_mix") {
            AtomicMix mix;
            const auto atoms = get_field<json>(j, "atoms", where);
            if (!atoms.is_array() || atoms.empty()) throw ConfigError(where + "/atoms", "expected a nonempty array");
            for (std::size_t i = 0; i < atoms.size(); ++i) {
                const auto at = where + "/atoms/" + std::to_string(i);
                mix.atoms.push_back({get_field<double>(atoms[i], "t", at), get_field<double>(atoms[i], "w", at)});
            }
            return BernsteinSpec(std::move(mix), s_lower, c_lower, a1, a2);
        }
        if (variant == "quadrature_density") {
            const auto dj = get_field<json>(j, "density", where);
            const auto dw = where + "/density";
            DensityPreset p;
            const auto name = get_field<std::string>(dj, "preset", dw);
            if (name == "fractional_power")
                p.kind = DensityPreset::Kind::FractionalPower;
            else if (name == "tempered_stable")
                p.kind = DensityPreset::Kind::TemperedStable;
            else
                throw ConfigError(dw + "/preset", "unknown density preset '" + name + "'");
            p.s = get_field<double>(dj, "s", dw);
            p.theta = get_or<double>(dj, "theta", 0.0, dw);
            QuadratureOptions q;
            q.t_min = get_or<double>(j, "t_min", q.t_min, where);
            q.t_max = get_or<double>(j, "t_max", q.t_max, where);
            q.nodes = get_or<int>(j, "nodes", q.nodes, where);
            q.small_jump_m2 = get_or<double>(j, "small_jump_m2", q.small_jump_m2, where);
            return BernsteinSpec(QuadratureDensity(p, q), s_lower, c_lower, a1, a2);
        }
    } catch (const DomainError& e) {
        throw ConfigError(where, e.what());
    }
    throw ConfigError(where + "/variant", "unknown variant '" + variant + "'");
}

json hypothesis_report_to_json(const HypothesisReport& r) {
    json j;
    j["probes"] = r.probes;
    j["psi"] = r.psi_values;
    j["lower_bound"] = {{"min_ratio", r.min_lower_ratio},
                        {"s_lower_in_range", r.s_lower_in_range},
                        {"pass", r.lower_bound_pass}};
    std::vector<int> ok(r.sublinear_ok.begin(), r.sublinear_ok.end());
    j["sublinear"] = {{"m", r.m}, {"per_probe", ok}, {"pass", r.sublinear_pass}};
    j["log_moment"] = {{"value", r.log_moment_finite ? json(r.log_moment) : json("inf")},
                       {"finite", r.log_moment_finite}};
    j["triplet_zero"] = r.triplet_ok;
    j["concave"] = r.concave_pass;
    j["passes_existence"] = r.passes_existence();
    j["passes_particle"] = r.passes_particle();
    return j;
}

json solver_report_to_json(const SolverReport& r) {
    json stages = json::array();
    for (const auto& s : r.stages)
        stages.push_back({{"eps", s.eps},
                          {"kappa", s.kappa},
                          {"iterations", s.iterations},
                          {"residual", s.residual},
                          {"converged", s.converged}});
    return {{"tol", r.tol},
            {"final_residual", r.final_residual},
            {"iterations", r.iterations},
            {"residual_monotone", r.residual_monotone},
            {"stages", stages},
            {"residual_history", r.residual_history}};
}

}  // namespace nlfp
