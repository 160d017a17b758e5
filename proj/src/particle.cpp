#include "nlfp/particle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "nlfp/error.hpp"

namespace nlfp {

std::pair<std::size_t, std::size_t> ParticleEnsemble::shard_range(std::size_t s) const {
    const std::size_t n = size();
    const std::size_t k = shard_count();
    return {n * s / k, n * (s + 1) / k};
}

void for_each_shard(std::size_t shards, int threads, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min<std::size_t>(std::max(threads, 1), shards);
    if (workers <= 1) {
        for (std::size_t s = 0; s < shards; ++s) fn(s);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t s = w; s < shards; s += workers) fn(s);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

namespace {

double wrap_coordinate(double x, double L) {
    // into [-L/2, L/2)
    double y = std::fmod(x + 0.5 * L, L);
    if (y < 0.0) y += L;
    return y - 0.5 * L;
}

// Cumulative mass per flattened cell, normalized to end at 1.
std::vector<double> cell_cdf(const Field& u) {
    const double scale = norm_linf(u);
    if ((u.values < -1e-12 * scale).any())
        throw DomainError("initial density has negative cells");
    std::vector<double> cdf(u.grid.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < cdf.size(); ++i) {
        acc += std::max(0.0, u.values[static_cast<Eigen::Index>(i)]);
        cdf[i] = acc;
    }
    if (!(acc > 0.0)) throw DomainError("initial density has no positive mass");
    for (double& c : cdf) c /= acc;
    return cdf;
}

// Axis marginal of u as cell masses summing to 1.
std::vector<double> axis_marginal(const Field& u, int axis) {
    const Grid& g = u.grid;
    const int n = g.points_per_axis();
    std::vector<double> m(n, 0.0);
    for (std::size_t i = 0; i < g.size(); ++i)
        m[g.unravel(i)[axis]] += u.values[static_cast<Eigen::Index>(i)];
    const double total = std::accumulate(m.begin(), m.end(), 0.0);
    if (total != 0.0)
        for (double& v : m) v /= total;
    return m;
}

// Wrapped axis coordinates sorted, shifted to the cell-aligned interval
// [-L/2 - h/2, L/2 - h/2).
std::vector<double> sorted_axis(const ParticleEnsemble& ens, const Grid& g, int axis) {
    const double L = g.box_length();
    const double a0 = -0.5 * L - 0.5 * g.spacing();
    std::vector<double> xs(ens.size());
    for (std::size_t p = 0; p < xs.size(); ++p) {
        double y = std::fmod(ens.positions(axis, static_cast<Eigen::Index>(p)) - a0, L);
        if (y < 0.0) y += L;
        xs[p] = a0 + y;
    }
    std::sort(xs.begin(), xs.end());
    return xs;
}

}  // namespace

ParticleEnsemble init_ensemble(const Field& u0, std::size_t N, std::uint64_t seed,
                               std::size_t shards, ParallelOptions par) {
    if (N == 0) throw DomainError("ensemble needs at least one particle");
    if (shards == 0) throw DomainError("shard count must be positive");
    const auto cdf = cell_cdf(u0);
    const Grid& g = u0.grid;
    const int d = g.dim();

    ParticleEnsemble ens;
    ens.seed = seed;
    ens.positions.resize(d, static_cast<Eigen::Index>(N));
    const RandomStream root(seed);
    for (std::size_t s = 0; s < shards; ++s) ens.streams.push_back(root.split(s));

    for_each_shard(shards, par.threads, [&](std::size_t s) {
        auto& rng = ens.streams[s];
        const auto [lo, hi] = ens.shard_range(s);
        for (std::size_t p = lo; p < hi; ++p) {
            const double v = rng.uniform();
            auto it = std::lower_bound(cdf.begin(), cdf.end(), v);
            if (it == cdf.end()) --it;
            const auto idx = g.unravel(static_cast<std::size_t>(it - cdf.begin()));
            for (int a = 0; a < d; ++a)
                ens.positions(a, static_cast<Eigen::Index>(p)) =
                    g.coordinate(idx[a]) + (rng.uniform() - 0.5) * g.spacing();
        }
    });
    return ens;
}

double ks_statistic(const ParticleEnsemble& ens, const Field& u, int axis) {
    const Grid& g = u.grid;
    const double h = g.spacing();
    const double a0 = -0.5 * g.box_length() - 0.5 * h;
    const auto m = axis_marginal(u, axis);
    std::vector<double> edge_cdf(m.size() + 1, 0.0);
    std::partial_sum(m.begin(), m.end(), edge_cdf.begin() + 1);
    const auto xs = sorted_axis(ens, g, axis);
    const double N = static_cast<double>(xs.size());
    double sup = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double q = (xs[i] - a0) / h;
        const auto j = std::min<std::size_t>(static_cast<std::size_t>(q), m.size() - 1);
        const double Fu = edge_cdf[j] + m[j] * (q - j);
        sup = std::max({sup, std::abs(Fu - i / N), std::abs(Fu - (i + 1) / N)});
    }
    return sup;
}

double interpolate(const Field& u, std::span<const double> x) {
    const Grid& g = u.grid;
    const int d = g.dim();
    const int n = g.points_per_axis();
    const double h = g.spacing();
    std::array<int, 3> i0{}, i1{};
    std::array<double, 3> frac{};
    for (int a = 0; a < d; ++a) {
        const double q = (wrap_coordinate(x[a], g.box_length()) + 0.5 * g.box_length()) / h;
        const double fl = std::floor(q);
        frac[a] = q - fl;
        i0[a] = static_cast<int>(fl) % n;
        i1[a] = (i0[a] + 1) % n;
    }
    double sum = 0.0;
    for (int corner = 0; corner < (1 << d); ++corner) {
        std::array<int, 3> idx{};
        double w = 1.0;
        for (int a = 0; a < d; ++a) {
            const bool up = (corner >> a) & 1;
            idx[a] = up ? i1[a] : i0[a];
            w *= up ? frac[a] : 1.0 - frac[a];
        }
        if (w != 0.0) sum += w * u.values[static_cast<Eigen::Index>(g.ravel(idx))];
    }
    return sum;
}

void jump(const BernsteinSpec& spec, double rate, RandomStream& rng, std::span<double> x) {
    if (!(rate > 0.0)) return;
    const double tau = sample_subordinator_increment(spec, rate, rng);
    if (!(tau > 0.0)) return;
    const double sd = std::sqrt(2.0 * tau);
    for (double& xi : x) xi += sd * rng.normal();
}

void step_ensemble(ParticleEnsemble& ens, const Field& u, double h, const CoefficientSet& coeffs,
                   const BernsteinSpec& spec, ParallelOptions par, double floor_factor) {
    if (!(h > 0.0)) throw DomainError("particle step must be positive");
    if (u.grid.dim() != ens.dim()) throw DomainError("ensemble and field dimensions differ");
    const int d = ens.dim();
    const auto& beta = coeffs.beta();
    const auto& b = coeffs.b();
    const bool drift = !coeffs.drift_is_zero();
    const double floor = floor_factor * norm_linf(u);
    const double slope0 = beta.derivative(0.0);

    for_each_shard(ens.shard_count(), par.threads, [&](std::size_t s) {
        auto& rng = ens.streams[s];
        const auto [lo, hi] = ens.shard_range(s);
        std::array<double, 3> dv{};
        for (std::size_t p = lo; p < hi; ++p) {
            double* x = ens.positions.col(static_cast<Eigen::Index>(p)).data();
            const std::span<double> xs{x, static_cast<std::size_t>(d)};
            const double uv = interpolate(u, xs);
            const double c = std::abs(uv) < floor || uv == 0.0 ? slope0 : beta.value(uv) / uv;
            if (drift) {
                coeffs.evaluate_drift(xs, {dv.data(), static_cast<std::size_t>(d)});
                const double bu = b.value(uv);
                for (int a = 0; a < d; ++a) x[a] += h * bu * dv[a];
            }
            jump(spec, c * h, rng, xs);
        }
    });
    ens.time += h;
}

std::vector<double> silverman_bandwidth(const ParticleEnsemble& ens, const Grid& grid) {
    const int d = ens.dim();
    const double N = static_cast<double>(ens.size());
    const double factor = std::pow(4.0 / (d + 2.0), 1.0 / (d + 4.0)) * std::pow(N, -1.0 / (d + 4.0));
    std::vector<double> bw(d, grid.spacing());
    if (ens.size() < 2) return bw;
    for (int a = 0; a < d; ++a) {
        Eigen::ArrayXd row = ens.positions.row(a).transpose().array();
        const double mean = row.mean();
        const double sd = std::sqrt((row - mean).square().sum() / (N - 1.0));
        std::vector<double> v(row.data(), row.data() + row.size());
        auto q = [&v](double frac) {
            const auto k = static_cast<std::size_t>(frac * (v.size() - 1));
            std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(k), v.end());
            return v[k];
        };
        const double iqr = q(0.75) - q(0.25);
        double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
        bw[a] = std::max(grid.spacing(), factor * spread);
    }
    return bw;
}

namespace {

struct AxisWeights {
    std::vector<int> index;
    std::vector<double> weight;  // sums to 1
};

void kernel_weights(double x, double bw, const Grid& g, AxisWeights& out) {
    const int n = g.points_per_axis();
    const double h = g.spacing();
    const double q = (wrap_coordinate(x, g.box_length()) + 0.5 * g.box_length()) / h;
    const double s = bw / h;
    const int nearest = static_cast<int>(std::lround(q));
    int half = static_cast<int>(std::ceil(6.0 * s)) + 1;
    int first = nearest - half, last = nearest + half;
    if (last - first + 1 > n) {
        first = nearest - n / 2;
        last = first + n - 1;
    }
    out.index.clear();
    out.weight.clear();
    double dmin = std::numeric_limits<double>::infinity();
    for (int j = first; j <= last; ++j) dmin = std::min(dmin, std::abs(j - q));
    double total = 0.0;
    for (int j = first; j <= last; ++j) {
        const double z = std::abs(j - q);
        const double w = std::exp(-(z * z - dmin * dmin) / (2.0 * s * s));
        if (w == 0.0) continue;
        out.index.push_back(((j % n) + n) % n);
        out.weight.push_back(w);
        total += w;
    }
    for (double& w : out.weight) w /= total;
}

}  // namespace

Field empirical_density(const ParticleEnsemble& ens, const Grid& grid,
                        const std::vector<double>& bandwidth, ParallelOptions par) {
    const int d = grid.dim();
    if (ens.dim() != d) throw DomainError("ensemble and grid dimensions differ");
    if (static_cast<int>(bandwidth.size()) != d) throw DomainError("bandwidth needs one value per axis");
    for (double bw : bandwidth)
        if (!(bw > 0.0)) throw DomainError("bandwidth must be positive");
    const auto size = static_cast<Eigen::Index>(grid.size());
    const std::size_t shards = std::max<std::size_t>(ens.shard_count(), 1);
    std::vector<Eigen::ArrayXd> partial(shards);

    for_each_shard(shards, par.threads, [&](std::size_t s) {
        Eigen::ArrayXd acc = Eigen::ArrayXd::Zero(size);
        const std::size_t lo = ens.size() * s / shards, hi = ens.size() * (s + 1) / shards;
        std::array<AxisWeights, 3> ax;
        for (std::size_t p = lo; p < hi; ++p) {
            for (int a = 0; a < d; ++a)
                kernel_weights(ens.positions(a, static_cast<Eigen::Index>(p)), bandwidth[a], grid, ax[a]);
            if (d == 1) {
                for (std::size_t i = 0; i < ax[0].index.size(); ++i) acc[ax[0].index[i]] += ax[0].weight[i];
            } else if (d == 2) {
                for (std::size_t i = 0; i < ax[0].index.size(); ++i) {
                    const std::size_t row = grid.ravel({ax[0].index[i], 0, 0});
                    for (std::size_t j = 0; j < ax[1].index.size(); ++j)
                        acc[static_cast<Eigen::Index>(row + ax[1].index[j])] += ax[0].weight[i] * ax[1].weight[j];
                }
            } else {
                for (std::size_t i = 0; i < ax[0].index.size(); ++i)
                    for (std::size_t j = 0; j < ax[1].index.size(); ++j) {
                        const double wij = ax[0].weight[i] * ax[1].weight[j];
                        const std::size_t base = grid.ravel({ax[0].index[i], ax[1].index[j], 0});
                        for (std::size_t k = 0; k < ax[2].index.size(); ++k)
                            acc[static_cast<Eigen::Index>(base + ax[2].index[k])] += wij * ax[2].weight[k];
                    }
            }
        }
        partial[s] = std::move(acc);
    });

    Field out(grid);
    for (const auto& p : partial) out.values += p;
    out.values /= static_cast<double>(ens.size()) * grid.cell_volume();
    return out;
}

Field empirical_density(const ParticleEnsemble& ens, const Grid& grid, double bandwidth,
                        ParallelOptions par) {
    return empirical_density(ens, grid, std::vector<double>(grid.dim(), bandwidth), par);
}

double wasserstein1_axis(const Field& u, const ParticleEnsemble& ens, int axis) {
    const Grid& g = u.grid;
    const double h = g.spacing();
    const double a0 = -0.5 * g.box_length() - 0.5 * h;
    const auto m = axis_marginal(u, axis);
    const auto xs = sorted_axis(ens, g, axis);
    const double N = static_cast<double>(xs.size());

    // |F_u - G| over [s, t] with F_u linear from A to B and G constant.
    auto piece = [](double A, double B, double G, double len) {
        const double p = A - G, q = B - G;
        if (p * q >= 0.0) return 0.5 * (std::abs(p) + std::abs(q)) * len;
        return 0.5 * (p * p + q * q) / std::abs(q - p) * len;
    };

    double total = 0.0, Fu_edge = 0.0;
    std::size_t next = 0;
    for (std::size_t j = 0; j < m.size(); ++j) {
        const double left = a0 + j * h, right = left + h;
        const double slope = m[j] / h;
        double s = left;
        while (next < xs.size() && xs[next] < right) {
            const double t = std::max(xs[next], s);
            total += piece(Fu_edge + slope * (s - left), Fu_edge + slope * (t - left), next / N, t - s);
            s = t;
            ++next;
        }
        total += piece(Fu_edge + slope * (s - left), Fu_edge + m[j], next / N, right - s);
        Fu_edge += m[j];
    }
    return total;
}

MarginalMetrics marginal_comparison(const Field& u, const ParticleEnsemble& ens,
                                    const std::vector<double>& bandwidth, ParallelOptions par) {
    MarginalMetrics mm;
    mm.time = ens.time;
    mm.l1 = l1_distance(empirical_density(ens, u.grid, bandwidth, par), u);
    for (int a = 0; a < u.grid.dim(); ++a) mm.w1.push_back(wasserstein1_axis(u, ens, a));
    return mm;
}

TwinBudget twin_sample_budget(const Field& u, std::size_t N, std::uint64_t seed, int replicates,
                              std::optional<std::vector<double>> bandwidth, std::size_t shards,
                              ParallelOptions par) {
    if (replicates < 1) throw DomainError("twin budget needs at least one replicate");
    TwinBudget tb;
    RandomStream seeds(seed, 0x7417);
    for (int r = 0; r < replicates; ++r) {
        const auto ens = init_ensemble(u, N, seeds(), shards, par);
        if (!bandwidth) bandwidth = silverman_bandwidth(ens, u.grid);
        tb.samples.push_back(l1_distance(empirical_density(ens, u.grid, *bandwidth, par), u));
    }
    tb.bandwidth = *bandwidth;
    const Eigen::Map<const Eigen::ArrayXd> v(tb.samples.data(), static_cast<Eigen::Index>(tb.samples.size()));
    tb.l1_mean = v.mean();
    tb.l1_std = replicates > 1 ? std::sqrt((v - tb.l1_mean).square().sum() / (replicates - 1)) : 0.0;
    return tb;
}

McKeanReport run_mckean(const Field& u0, double T, double h, std::size_t N,
                        const CoefficientSet& coeffs, const BernsteinSpec& spec,
                        const Trajectory* reference, const McKeanOptions& opt) {
    if (opt.mode == McKeanMode::PdeCoupled && !reference)
        throw PreconditionError("pde-coupled mode needs a PDE trajectory");
    if (!(h > 0.0) || !(T > 0.0)) throw DomainError("T and h must be positive");
    const double kf = std::round(T / h);
    if (kf < 1.0 || std::abs(kf * h - T) > 1e-9 * T) throw DomainError("T must be an integer multiple of h");
    const int steps = static_cast<int>(kf);
    const Grid& grid = u0.grid;

    McKeanReport rep{{}, init_ensemble(u0, N, opt.seed, opt.shards, opt.par), Field(grid), {}};
    auto& ens = rep.ensemble;
    auto bandwidth = [&] { return opt.bandwidth ? *opt.bandwidth : silverman_bandwidth(ens, grid); };

    if (reference) rep.series.push_back(marginal_comparison(reference->initial(), ens, bandwidth(), opt.par));

    for (int k = 0; k < steps; ++k) {
        const double t = k * h;
        if (opt.mode == McKeanMode::PdeCoupled) {
            step_ensemble(ens, reference->states[reference->index_of(t)], h, coeffs, spec, opt.par,
                          opt.floor_factor);
        } else {
            const Field est = k == 0 ? u0 : empirical_density(ens, grid, bandwidth(), opt.par);
            step_ensemble(ens, est, h, coeffs, spec, opt.par, opt.floor_factor);
        }
        ens.time = (k + 1) * h;
        const bool last = k + 1 == steps;
        if (reference && (last || (k + 1) % std::max(opt.metrics_every, 1) == 0))
            rep.series.push_back(marginal_comparison(reference->states[reference->index_of(ens.time)],
                                                     ens, bandwidth(), opt.par));
    }
    rep.final_bandwidth = bandwidth();
    rep.final_density = empirical_density(ens, grid, rep.final_bandwidth, opt.par);
    return rep;
}

}  // namespace nlfp
