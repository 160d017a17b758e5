#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "nlfp/bernstein.hpp"
#include "nlfp/evolution.hpp"
#include "nlfp/grid.hpp"
#include "nlfp/particle.hpp"

namespace nlfp {

namespace fs = std::filesystem;
using json = nlohmann::json;

/// Writes `path` as little-endian float64 values and `path` with extension
/// .json as the grid sidecar.
void write_field(const Field& f, const fs::path& path);
Field read_field(const fs::path& path);
/// x,u columns; d = 1 only.
void write_field_csv(const Field& f, const fs::path& path);

json grid_to_json(const Grid& g);
Grid grid_from_json(const json& j, const std::string& where = "/grid");

/// Directory with state_NNNNN.bin (+ sidecars), manifest.json and ledger.csv.
void write_trajectory(const Trajectory& traj, const fs::path& dir);
Trajectory read_trajectory(const fs::path& dir);
void write_ledger_csv(const std::vector<LedgerEntry>& ledger, const fs::path& path);

/// positions.bin (d x N, column-major float64) and manifest.json with N, d,
/// time, seed and shard count. Reloaded ensembles get fresh streams derived
/// from the seed and the checkpoint time.
void write_ensemble(const ParticleEnsemble& ens, const fs::path& dir);
ParticleEnsemble read_ensemble(const fs::path& dir);

/// time,l1,w1_0[,w1_1,...]
void write_metrics_csv(const std::vector<MarginalMetrics>& series, const fs::path& path);

json bernstein_to_json(const BernsteinSpec& spec);
/// Throws ConfigError with the JSON path of the offending field.
BernsteinSpec bernstein_from_json(const json& j, const std::string& where = "/bernstein");

json hypothesis_report_to_json(const HypothesisReport& rep);
json solver_report_to_json(const SolverReport& rep);

json read_json_file(const fs::path& path);
void write_json_file(const json& j, const fs::path& path);

}  // namespace nlfp
