#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "nlfp/bernstein.hpp"
#include "nlfp/coefficients.hpp"
#include "nlfp/evolution.hpp"
#include "nlfp/grid.hpp"
#include "nlfp/random.hpp"

namespace nlfp {

/// Particles on R^d. Column p of `positions` is particle p. Particles are
/// split into contiguous shards, shard s drawing from streams[s]; the shard
/// layout (not the thread count) fixes the random draws.
struct ParticleEnsemble {
    Eigen::MatrixXd positions;
    double time = 0.0;
    std::uint64_t seed = 0;
    std::vector<RandomStream> streams;

    int dim() const { return static_cast<int>(positions.rows()); }
    std::size_t size() const { return static_cast<std::size_t>(positions.cols()); }
    std::size_t shard_count() const { return streams.size(); }
    /// Half-open particle index range of shard s.
    std::pair<std::size_t, std::size_t> shard_range(std::size_t s) const;
};

struct ParallelOptions {
    int threads = 1;
};

/// Draw N i.i.d. samples of the grid density u0 (cell by mass, then uniform
/// within the cell). Throws DomainError if u0 has cells below -1e-12 |u0|_inf
/// or no positive mass.
ParticleEnsemble init_ensemble(const Field& u0, std::size_t N, std::uint64_t seed,
                               std::size_t shards = 16, ParallelOptions par = {});

/// Kolmogorov-Smirnov statistic of the axis marginal of the ensemble (wrapped
/// to the torus) against the marginal of u.
double ks_statistic(const ParticleEnsemble& ens, const Field& u, int axis);

/// u at an arbitrary point of R^d: multilinear interpolation with torus wrap.
double interpolate(const Field& u, std::span<const double> x);

/// Jump part of one step: tau = eta_{rate}, x += sqrt(2 tau) N(0, I).
void jump(const BernsteinSpec& spec, double rate, RandomStream& rng, std::span<double> x);

/// One frozen-coefficient Euler step: x += h b(u(x)) D(x), then a jump with
/// rate c(x) h, c = beta(u)/u (beta'(0) where |u| < floor_factor |u|_inf).
void step_ensemble(ParticleEnsemble& ens, const Field& u, double h, const CoefficientSet& coeffs,
                   const BernsteinSpec& spec, ParallelOptions par = {},
                   double floor_factor = 1e-12);

/// Silverman's rule per axis on the raw positions, floored at the grid spacing.
std::vector<double> silverman_bandwidth(const ParticleEnsemble& ens, const Grid& grid);

/// Wrapped Gaussian KDE; each particle's kernel is renormalized on the grid
/// so the output has unit mass exactly.
Field empirical_density(const ParticleEnsemble& ens, const Grid& grid,
                        const std::vector<double>& bandwidth, ParallelOptions par = {});
Field empirical_density(const ParticleEnsemble& ens, const Grid& grid, double bandwidth,
                        ParallelOptions par = {});

struct MarginalMetrics {
    double time = 0.0;
    double l1 = 0.0;
    std::vector<double> w1;  ///< per axis
};

/// Wasserstein-1 distance between the axis marginal of u (piecewise constant
/// on cells) and the empirical marginal of the wrapped ensemble.
double wasserstein1_axis(const Field& u, const ParticleEnsemble& ens, int axis);

MarginalMetrics marginal_comparison(const Field& u, const ParticleEnsemble& ens,
                                    const std::vector<double>& bandwidth,
                                    ParallelOptions par = {});

struct TwinBudget {
    double l1_mean = 0.0;
    double l1_std = 0.0;
    std::vector<double> samples;
    std::vector<double> bandwidth;
};

/// Control experiment: KDE of N direct samples of u against u itself,
/// repeated `replicates` times. The bandwidth is the Silverman value of the
/// first replicate unless given.
TwinBudget twin_sample_budget(const Field& u, std::size_t N, std::uint64_t seed,
                              int replicates = 4, std::optional<std::vector<double>> bandwidth = {},
                              std::size_t shards = 16, ParallelOptions par = {});

enum class McKeanMode { PdeCoupled, SelfCoupled };

struct McKeanOptions {
    McKeanMode mode = McKeanMode::PdeCoupled;
    std::uint64_t seed = 0;
    std::size_t shards = 16;
    ParallelOptions par;
    double floor_factor = 1e-12;
    /// Fixed KDE bandwidth; Silverman per step when unset.
    std::optional<std::vector<double>> bandwidth;
    /// Compute metrics every k steps (the final step is always included).
    int metrics_every = 1;
};

struct McKeanReport {
    std::vector<MarginalMetrics> series;
    ParticleEnsemble ensemble;
    Field final_density;
    std::vector<double> final_bandwidth;
};

/// Simulate N particles from u0 to T with step h. Pde-coupled mode reads u
/// from `reference` at every step time; self-coupled mode uses the ensemble's
/// own KDE. Metrics compare against `reference` whenever it is given.
McKeanReport run_mckean(const Field& u0, double T, double h, std::size_t N,
                        const CoefficientSet& coeffs, const BernsteinSpec& spec,
                        const Trajectory* reference, const McKeanOptions& options = {});

/// Runs fn(shard) for every shard on up to `threads` workers.
void for_each_shard(std::size_t shards, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace nlfp
