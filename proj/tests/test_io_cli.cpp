#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "nlfp/error.hpp"
#include "nlfp/io.hpp"
#include "nlfp/scenario.hpp"
#include "support.hpp"

using namespace nlfp;
using nlfp::testing::gaussian;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("nlfp_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json small_scenario() {
    return json::parse(R"({
      "schema_version": 1,
      "bernstein": {"variant": "fractional_power", "s": 0.75, "s_lower": 0.75, "c_lower": 1.0},
      "grid": {"d": 1, "n": 256, "box_length": 30},
      "coefficients": {
        "beta": {"preset": "saturating"},
        "b": {"preset": "constant", "value": 1.0},
        "drift": {"preset": "confining", "amplitude": 1.0}
      },
      "initial_condition": {"kind": "gaussian", "center": [0.5], "sigma": 1.0},
      "run": {"T": 0.1, "h": 0.01, "N": 4000, "shards": 4},
      "verification": {"mass": true, "positivity": true, "contraction": true,
                       "particle_marginals": true},
      "seed": 7
    })");
}

std::string cli() {
    const char* p = std::getenv("NLFP_CLI");
    return p ? p : "";
}

int run_cli(const std::string& args) {
    const int rc = std::system((cli() + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("field binary and sidecar round trip") {
    const auto dir = scratch("field");
    Grid g(2, 16, 5.0);
    RandomStream rng(1);
    auto f = nlfp::testing::random_noise(g, rng);
    write_field(f, dir / "f.bin");
    CHECK(fs::file_size(dir / "f.bin") == 16 * 16 * 8);
    CHECK(fs::exists(dir / "f.json"));
    auto back = read_field(dir / "f.bin");
    CHECK(back.grid == g);
    CHECK(back.values.isApprox(f.values, 0.0));
    CHECK_THROWS_AS(write_field_csv(f, dir / "f.csv"), DomainError);

    Grid g1(1, 8, 4.0);
    write_field_csv(gaussian(g1, 1.0), dir / "g.csv");
    std::ifstream in(dir / "g.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "x,u");
}

TEST_CASE("trajectory and ensemble round trip") {
    const auto dir = scratch("traj");
    Grid g(1, 128, 20.0);
    CoefficientSet c(g, presets::beta_linear(), presets::b_constant(0.0), presets::drift_zero(1));
    auto traj = evolve_mild(gaussian(g, 1.0), 0.05, 1e-2, c, fractional_power_spec(0.75));
    write_trajectory(traj, dir / "t");
    CHECK(fs::exists(dir / "t" / "manifest.json"));
    CHECK(fs::exists(dir / "t" / "ledger.csv"));
    auto back = read_trajectory(dir / "t");
    CHECK(back.times == traj.times);
    CHECK(back.step == traj.step);
    REQUIRE(back.states.size() == traj.states.size());
    CHECK(back.states.back().values.isApprox(traj.states.back().values, 0.0));
    CHECK(back.ledger.size() == traj.ledger.size());
    CHECK(back.ledger[3].mass == traj.ledger[3].mass);

    auto ens = init_ensemble(gaussian(g, 1.0), 1000, 99, 5);
    ens.time = 0.25;
    write_ensemble(ens, dir / "e");
    auto eb = read_ensemble(dir / "e");
    CHECK(eb.positions == ens.positions);
    CHECK(eb.seed == 99);
    CHECK(eb.time == 0.25);
    CHECK(eb.shard_count() == 5);

    std::vector<MarginalMetrics> series{{0.0, 0.1, {0.01}}, {0.5, 0.2, {0.02}}};
    write_metrics_csv(series, dir / "m.csv");
    std::ifstream in(dir / "m.csv");
    std::string header;
    std::getline(in, header);
    CHECK(header == "time,l1,w1_0");
}

TEST_CASE("bernstein json round trip and errors") {
    std::vector<BernsteinSpec> specs{
        fractional_power_spec(0.75, 0.9),
        BernsteinSpec(AtomicMix{{{1.0, 1.0}, {0.2, 3.0}}}, 0.6, 0.5),
        BernsteinSpec(QuadratureDensity(DensityPreset{DensityPreset::Kind::TemperedStable, 0.7, 0.3}),
                      0.7, 0.2)};
    for (const auto& s : specs) {
        const json j = bernstein_to_json(s);
        const auto back = bernstein_from_json(j);
        CHECK(back.variant_name() == s.variant_name());
        CHECK(back.s_lower == s.s_lower);
        CHECK(back.c_lower == s.c_lower);
        for (double r : {0.5, 3.0}) CHECK(eval_psi(back, r) == doctest::Approx(eval_psi(s, r)).epsilon(1e-14));
        CHECK(bernstein_to_json(back) == j);
    }
    try {
        bernstein_from_json(json::parse(R"({"variant": "levy", "s_lower": 0.75, "c_lower": 1})"));
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.path() == "/bernstein/variant");
    }
    try {
        bernstein_from_json(json::parse(R"({"variant": "fractional_power", "s": "x", "s_lower": 0.75, "c_lower": 1})"));
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.path() == "/bernstein/s");
    }
}

TEST_CASE("scenario parsing reports field paths") {
    auto j = small_scenario();
    auto cfg = parse_scenario(j);
    CHECK(cfg.grid.points_per_axis() == 256);
    CHECK(cfg.run.shards == 4);
    CHECK(cfg.verify.contraction);
    CHECK_FALSE(cfg.verify.weak_form);
    CHECK(mass(cfg.initial) == doctest::Approx(1.0));

    auto expect_path = [](json bad, const std::string& path) {
        try {
            parse_scenario(bad);
            FAIL("expected ConfigError at " << path);
        } catch (const ConfigError& e) {
            CHECK(e.path() == path);
        }
    };
    auto bad = j;
    bad["run"]["speed"] = 3;
    expect_path(bad, "/run/speed");
    bad = j;
    bad["schema_version"] = 9;
    expect_path(bad, "/schema_version");
    bad = j;
    bad["coefficients"]["beta"]["preset"] = "quartic";
    expect_path(bad, "/coefficients/beta/preset");
    bad = j;
    bad["run"]["h"] = 0.03;
    expect_path(bad, "/run/h");
    bad = j;
    bad["grid"].erase("n");
    expect_path(bad, "/grid/n");
    bad = j;
    bad["initial_condition"]["kind"] = "spike";
    expect_path(bad, "/initial_condition/kind");
}

TEST_CASE("example configs parse") {
    for (const char* name : {"linear_1d.json", "porous_rotation_2d.json", "mckean_1d.json"}) {
        const fs::path p = fs::path(NLFP_SOURCE_DIR) / "examples_config" / name;
        CHECK_NOTHROW(parse_scenario(read_json_file(p), p.parent_path()));
    }
}

TEST_CASE("step size gate names lambda_0") {
    const auto dir = scratch("gate");
    auto j = small_scenario();
    j["coefficients"]["drift"]["amplitude"] = 400.0;  // lambda_0 = 1/20
    j["run"]["h"] = 0.05;
    write_json_file(j, dir / "cfg.json");
    RunOptions ro;
    ro.out = dir / "out";
    try {
        run_command("run", dir / "cfg.json", ro);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.path() == "/run/h");
        CHECK(std::string(e.what()).find("lambda_0 = 1 / (|(div D)^- + |D||_inf^{1/2} * |b|_inf)") !=
              std::string::npos);
    }
}

TEST_CASE("check-spec reports hypotheses without solving") {
    const auto dir = scratch("spec");
    write_json_file(bernstein_to_json(fractional_power_spec(0.75)), dir / "b.json");
    RunOptions ro;
    ro.out = dir / "out";
    auto outcome = run_command("check-spec", dir / "b.json", ro);
    CHECK(outcome.exit_code == 0);
    CHECK(outcome.report["command"] == "check-spec");
    CHECK(outcome.report["pass"] == true);
    CHECK(fs::exists(dir / "out" / "report.json"));
    CHECK_FALSE(fs::exists(dir / "out" / "trajectory"));

    write_json_file(bernstein_to_json(BernsteinSpec(AtomicMix{{{1.0, 1.0}}}, 0.75, 1.0)), dir / "a.json");
    auto failing = run_command("check-spec", dir / "a.json", ro);
    CHECK(failing.exit_code == 1);
    CHECK(failing.report["verifications"]["lower_bound"]["pass"] == false);
}

TEST_CASE("hypothesis failure blocks runs unless allowed") {
    const auto dir = scratch("hyp");
    auto j = small_scenario();
    j["bernstein"] = json::parse(R"({"variant": "atomic_mix", "atoms": [{"t": 1.0, "w": 1.0}],
                                     "s_lower": 0.75, "c_lower": 1.0})");
    j["verification"]["particle_marginals"] = false;
    j["verification"]["contraction"] = false;
    write_json_file(j, dir / "cfg.json");
    RunOptions ro;
    ro.out = dir / "out";
    CHECK_THROWS_AS(run_command("run", dir / "cfg.json", ro), ConfigError);
    ro.allow_hypothesis_fail = true;
    auto outcome = run_command("run", dir / "cfg.json", ro);
    CHECK(outcome.report["hypotheses"]["allowed_failure"] == true);
}

TEST_CASE("run writes artifacts and passes its verifications") {
    const auto dir = scratch("run");
    write_json_file(small_scenario(), dir / "cfg.json");
    RunOptions ro;
    ro.out = dir / "out";
    auto outcome = run_command("run", dir / "cfg.json", ro);
    CHECK(outcome.exit_code == 0);
    const auto& v = outcome.report["verifications"];
    CHECK(v["mass"]["pass"] == true);
    CHECK(v["mass"]["value"].get<double>() <= 1e-8);
    CHECK(v["positivity"]["pass"] == true);
    CHECK(v["contraction"]["pass"] == true);
    CHECK(outcome.report["derived"].contains("lambda0"));
    for (const char* f : {"report.json", "ledger.csv", "metrics.csv"}) CHECK(fs::exists(dir / "out" / f));
}

TEST_CASE("resolvent-test and convergence subcommands") {
    const auto dir = scratch("sub");
    auto j = small_scenario();
    j["run"]["pairs"] = 3;
    j["run"]["h_list"] = {0.02, 0.01, 0.005};
    write_json_file(j, dir / "cfg.json");
    RunOptions ro;
    ro.out = dir / "res";
    auto res = run_command("resolvent-test", dir / "cfg.json", ro);
    CHECK(res.exit_code == 0);
    ro.out = dir / "conv";
    auto conv = run_command("convergence", dir / "cfg.json", ro);
    CHECK(conv.exit_code == 0);
    CHECK(conv.report["refinement"]["distances"].size() == 2);
}

TEST_CASE("command line: exit codes and byte-identical reports") {
    REQUIRE_MESSAGE(!cli().empty(), "NLFP_CLI is not set");
    const auto dir = scratch("cli");
    write_json_file(small_scenario(), dir / "cfg.json");
    const std::string cfg = (dir / "cfg.json").string();

    CHECK(run_cli("run " + cfg + " --out " + (dir / "a").string() + " --threads 1") == 0);
    CHECK(run_cli("run --config " + cfg + " --out " + (dir / "b").string() + " --threads 3") == 0);
    CHECK(slurp(dir / "a" / "report.json") == slurp(dir / "b" / "report.json"));
    CHECK(run_cli("run " + cfg + " --out " + (dir / "c").string() + " --seed 8") == 0);
    CHECK(slurp(dir / "a" / "report.json") != slurp(dir / "c" / "report.json"));

    auto bad = small_scenario();
    bad["grid"]["n"] = "many";
    write_json_file(bad, dir / "bad.json");
    CHECK(run_cli("run " + (dir / "bad.json").string() + " --out " + (dir / "d").string()) == 2);
    CHECK(run_cli("run " + (dir / "missing.json").string()) != 0);

    write_json_file(bernstein_to_json(fractional_power_spec(0.75)), dir / "b.json");
    CHECK(run_cli("check-spec " + (dir / "b.json").string() + " --out " + (dir / "e").string()) == 0);
}
