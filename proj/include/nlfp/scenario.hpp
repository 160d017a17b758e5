#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "nlfp/io.hpp"
#include "nlfp/solver.hpp"

namespace nlfp {

inline constexpr int kScenarioSchemaVersion = 1;

ScalarLaw beta_from_json(const json& j, const std::string& where = "/coefficients/beta");
ScalarLaw b_from_json(const json& j, const std::string& where = "/coefficients/b");
VectorField drift_from_json(const json& j, int d, const std::string& where = "/coefficients/drift");
SolverParams solver_params_from_json(const json& j, const std::string& where = "/solver");

/// gaussian | two-bumps | indicator | file, normalized to the requested mass
/// on the grid. Relative file paths resolve against `base_dir`.
Field initial_condition_from_json(const json& j, const Grid& grid, const fs::path& base_dir,
                                  const std::string& where = "/initial_condition");

/// Sum of `bumps` Gaussians with random centers, widths and weights, unit mass.
Field random_bump_field(const Grid& grid, RandomStream& rng, int bumps = 3);

struct Verifications {
    bool mass = true;
    bool positivity = true;
    bool linf_bound = true;
    bool contraction = false;
    bool resolvent_identity = false;
    bool weak_form = false;
    bool linearized = false;
    bool particle_marginals = false;
    bool exact_linear = false;
};

struct RunBlock {
    double T = 1.0;
    double h = 1e-2;
    std::size_t N = 10000;
    std::string mode = "pde-coupled";
    int snapshot_stride = 1;
    std::vector<double> h_list;
    std::optional<double> lambda;
    int pairs = 20;
    std::size_t shards = 16;
    double exact_threshold = 5e-3;
    double particle_budget_factor = 1.5;
    int twin_replicates = 4;
};

struct ScenarioConfig {
    json raw;
    fs::path base_dir;
    BernsteinSpec bernstein;
    Grid grid;
    CoefficientSet coefficients;
    SolverParams solver;
    Field initial;
    RunBlock run;
    Verifications verify;
    fs::path output_dir = "nlfp_out";
    std::uint64_t seed = 0;
};

/// Validates schema_version and every field; throws ConfigError with the
/// JSON path on failure.
ScenarioConfig parse_scenario(const json& j, const fs::path& base_dir = ".");

struct RunOptions {
    std::optional<fs::path> out;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    bool allow_hypothesis_fail = false;
};

struct RunOutcome {
    json report;
    int exit_code = 0;  ///< 0 all verifications pass, 1 otherwise
};

/// Subcommands: run, check-spec, resolvent-test, particle-only, convergence.
/// Writes report.json (and artifacts) into the output directory.
RunOutcome run_command(const std::string& command, const fs::path& config_path,
                       const RunOptions& options);

}  // namespace nlfp
