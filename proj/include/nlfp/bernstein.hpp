#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "nlfp/random.hpp"

namespace nlfp {

/// mu(dt) = s / Gamma(1-s) * t^{-s-1} dt, i.e. Psi(r) = r^s.
struct FractionalPower {
    double s;
};

struct Atom {
    double t;  ///< jump size, > 0
    double w;  ///< mass, > 0
};

/// Finite Levy measure sum_i w_i delta_{t_i}; Psi(r) = sum_i w_i (1 - e^{-r t_i}).
struct AtomicMix {
    std::vector<Atom> atoms;
};

/// Named Levy densities that can be serialized. TemperedStable is
/// m(t) = s / Gamma(1-s) t^{-s-1} e^{-theta t}, with Psi(r) = (r+theta)^s - theta^s.
struct DensityPreset {
    enum class Kind { FractionalPower, TemperedStable };
    Kind kind = Kind::FractionalPower;
    double s = 0.75;
    double theta = 0.0;

    double operator()(double t) const;
};

struct QuadratureOptions {
    double t_min = 1e-8;
    double t_max = 1e8;
    int nodes = 400;
    /// Small jumps below the compound-Poisson cutoff delta satisfy
    /// int_0^delta tau^2 mu(dtau) <= small_jump_m2.
    double small_jump_m2 = 1e-4;
};

/// Levy measure with a density m(t), discretized by a trapezoid rule in log t
/// on (t_min, t_max). The two tails are closed with a local power-law fit of
/// m at the end nodes: int_0^{t_min} t mu(dt) and int_{t_max}^inf mu(dt).
class QuadratureDensity {
public:
    QuadratureDensity(std::function<double(double)> density, QuadratureOptions options = {});
    explicit QuadratureDensity(DensityPreset preset, QuadratureOptions options = {});

    double density(double t) const { return density_(t); }
    const std::optional<DensityPreset>& preset() const { return preset_; }
    const QuadratureOptions& options() const { return options_; }

    std::span<const double> nodes() const { return nodes_; }
    /// Quadrature masses mu_i = weight_i * m(t_i).
    std::span<const double> masses() const { return masses_; }
    double lower_first_moment() const { return lower_first_moment_; }
    double upper_mass() const { return upper_mass_; }

    /// Compound-Poisson table: nodes with index >= cutoff_index() are sampled
    /// as jumps, everything below is replaced by the drift rate small_jump_drift().
    std::size_t cutoff_index() const { return cutoff_index_; }
    double cutoff() const;
    double small_jump_drift() const { return small_jump_drift_; }
    double jump_rate() const { return jump_rate_; }
    /// Sample a node index >= cutoff_index() proportionally to its mass.
    std::size_t sample_jump_node(double u) const;

    /// int_a^b g(t) m(t) dt by log-trapezoid, for the split integrals of
    /// the hypothesis report (no tail corrections).
    double integrate(const std::function<double(double)>& g, double a, double b, int n) const;

    /// Local power-law exponent alpha (m ~ t^{-alpha}) at the lower/upper ends.
    double lower_exponent() const { return lower_exponent_; }
    double upper_exponent() const { return upper_exponent_; }

private:
    void build();

    std::function<double(double)> density_;
    std::optional<DensityPreset> preset_;
    QuadratureOptions options_;
    std::vector<double> nodes_;
    std::vector<double> masses_;
    double lower_first_moment_ = 0.0;
    double upper_mass_ = 0.0;
    double lower_exponent_ = 0.0;
    double upper_exponent_ = 0.0;
    std::size_t cutoff_index_ = 0;
    double small_jump_drift_ = 0.0;
    double jump_rate_ = 0.0;
    std::vector<double> jump_cdf_;
};

using MeasureDescriptor = std::variant<FractionalPower, AtomicMix, QuadratureDensity>;

/// Bernstein function Psi(r) = a1 + a2 r + int (1 - e^{-rt}) mu(dt).
/// Only a1 = a2 = 0 is supported; the constructor rejects anything else.
struct BernsteinSpec {
    BernsteinSpec(MeasureDescriptor measure, double s_lower, double c_lower,
                  double a1 = 0.0, double a2 = 0.0);

    double a1;
    double a2;
    MeasureDescriptor measure;
    double s_lower;
    double c_lower;

    std::string variant_name() const;
};

BernsteinSpec fractional_power_spec(double s, double c_lower = 1.0);

double eval_psi(const BernsteinSpec& spec, double r);

/// Total mass-like constant m = int (1 ^ t) mu(dt).
double levy_m_constant(const BernsteinSpec& spec);

struct LogMoment {
    double value;
    bool finite;
};

/// int_1^inf log t mu(dt).
LogMoment levy_log_moment(const BernsteinSpec& spec);

struct HypothesisReport {
    std::vector<double> probes;
    std::vector<double> psi_values;

    double min_lower_ratio = 0.0;  ///< min_r Psi(r) / r^{s_lower}
    double lower_bound_slack = 1e-6;
    bool s_lower_in_range = false;
    bool lower_bound_pass = false;

    double m = 0.0;
    std::vector<bool> sublinear_ok;
    bool sublinear_pass = false;

    double log_moment = 0.0;
    bool log_moment_finite = false;

    bool triplet_ok = false;  ///< a1 = a2 = 0
    bool concave_pass = false;

    /// (i)-(v) as far as they concern Psi.
    bool passes_existence() const {
        return triplet_ok && s_lower_in_range && lower_bound_pass && sublinear_pass;
    }
    /// Adds (vi), needed before particle runs.
    bool passes_particle() const { return passes_existence() && log_moment_finite; }
};

std::vector<double> default_probe_grid();

HypothesisReport check_hypotheses(const BernsteinSpec& spec, std::span<const double> r_probe);

/// Radial jump density nu(r) = int (4 pi t)^{-d/2} e^{-r^2/4t} mu(dt).
double levy_jump_density(const BernsteinSpec& spec, double r, int d);

/// Constant c(d,s) of the fractional kernel nu(r) = c(d,s) r^{-d-2s}.
double fractional_kernel_constant(int d, double s);

/// Sample eta_t, the subordinator with Laplace transform e^{-t Psi(lambda)}.
double sample_subordinator_increment(const BernsteinSpec& spec, double t, RandomStream& rng);

/// Positive s-stable variable with E exp(-lambda S) = exp(-lambda^s), Kanter's
/// form of the Chambers-Mallows-Stuck construction.
double sample_positive_stable(double s, RandomStream& rng);

}  // namespace nlfp
