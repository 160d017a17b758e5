#include "nlfp/bernstein.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "nlfp/error.hpp"

namespace nlfp {

namespace {

constexpr double kPi = std::numbers::pi;

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

double fractional_prefactor(double s) { return s / std::tgamma(1.0 - s); }

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw DomainError(std::string(what) + " must be finite");
}

}  // namespace

double DensityPreset::operator()(double t) const {
    if (t <= 0.0) return 0.0;
    const double base = fractional_prefactor(s) * std::pow(t, -s - 1.0);
    return kind == Kind::TemperedStable ? base * std::exp(-theta * t) : base;
}

QuadratureDensity::QuadratureDensity(std::function<double(double)> density,
                                     QuadratureOptions options)
    : density_(std::move(density)), options_(options) {
    build();
}

QuadratureDensity::QuadratureDensity(DensityPreset preset, QuadratureOptions options)
    : density_(preset), preset_(preset), options_(options) {
    if (!(preset.s > 0.0 && preset.s < 1.0))
        throw DomainError("density preset exponent s must lie in (0,1)");
    if (preset.kind == DensityPreset::Kind::TemperedStable && !(preset.theta > 0.0))
        throw DomainError("tempered-stable rate theta must be positive");
    build();
}

void QuadratureDensity::build() {
    const auto& o = options_;
    if (!(o.t_min > 0.0 && o.t_max > o.t_min))
        throw DomainError("quadrature range must satisfy 0 < t_min < t_max");
    if (o.nodes < 3) throw DomainError("quadrature needs at least 3 nodes");
    if (!(o.small_jump_m2 > 0.0)) throw DomainError("small_jump_m2 must be positive");

    const int n = o.nodes;
    const double x0 = std::log(o.t_min);
    const double dx = (std::log(o.t_max) - x0) / (n - 1);
    nodes_.resize(n);
    masses_.resize(n);
    std::vector<double> m(n);
    for (int i = 0; i < n; ++i) {
        const double t = std::exp(x0 + i * dx);
        nodes_[i] = t;
        m[i] = density_(t);
        if (!(m[i] >= 0.0) || !std::isfinite(m[i]))
            throw DomainError("Levy density must be finite and nonnegative");
        const double w = (i == 0 || i == n - 1) ? 0.5 * dx : dx;
        masses_[i] = w * t * m[i];
    }

    // Lower tail: m ~ m0 (t/t0)^{-alpha} on (0, t0).
    lower_first_moment_ = 0.0;
    double lower_second_moment = 0.0;
    if (m[0] > 0.0 && m[1] > 0.0) {
        lower_exponent_ = -(std::log(m[1]) - std::log(m[0])) / dx;
        if (lower_exponent_ >= 2.0)
            throw DomainError("Levy density violates int (1^t) mu(dt) < inf near t = 0");
        const double t0 = nodes_[0];
        lower_first_moment_ = m[0] * t0 * t0 / (2.0 - lower_exponent_);
        lower_second_moment = m[0] * t0 * t0 * t0 / (3.0 - lower_exponent_);
    }

    upper_mass_ = 0.0;
    if (m[n - 1] > 0.0 && m[n - 2] > 0.0) {
        upper_exponent_ = -(std::log(m[n - 1]) - std::log(m[n - 2])) / dx;
        if (upper_exponent_ <= 1.0)
            throw DomainError("Levy density has infinite mass at t = infinity");
        upper_mass_ = m[n - 1] * nodes_[n - 1] / (upper_exponent_ - 1.0);
    }

    // Compound-Poisson cutoff: the largest prefix of nodes whose second moment
    // stays below small_jump_m2 becomes drift.
    double m2 = lower_second_moment;
    std::size_t cut = 0;
    while (cut < nodes_.size()) {
        const double next = m2 + nodes_[cut] * nodes_[cut] * masses_[cut];
        if (next > o.small_jump_m2) break;
        m2 = next;
        ++cut;
    }
    cutoff_index_ = cut;
    small_jump_drift_ = lower_first_moment_;
    for (std::size_t i = 0; i < cut; ++i) small_jump_drift_ += nodes_[i] * masses_[i];

    jump_cdf_.clear();
    double acc = 0.0;
    for (std::size_t i = cut; i < nodes_.size(); ++i) {
        acc += masses_[i];
        if (i + 1 == nodes_.size()) acc += upper_mass_;
        jump_cdf_.push_back(acc);
    }
    jump_rate_ = acc;
    if (acc > 0.0)
        for (auto& c : jump_cdf_) c /= acc;
}

double QuadratureDensity::cutoff() const {
    return cutoff_index_ < nodes_.size() ? nodes_[cutoff_index_] : options_.t_max;
}

std::size_t QuadratureDensity::sample_jump_node(double u) const {
    const auto it = std::lower_bound(jump_cdf_.begin(), jump_cdf_.end(), u);
    const auto offset = static_cast<std::size_t>(
        std::min<std::ptrdiff_t>(it - jump_cdf_.begin(),
                                 static_cast<std::ptrdiff_t>(jump_cdf_.size()) - 1));
    return cutoff_index_ + offset;
}

double QuadratureDensity::integrate(const std::function<double(double)>& g, double a, double b,
                                    int n) const {
    if (!(b > a) || n < 2) return 0.0;
    const double xa = std::log(a);
    const double dx = (std::log(b) - xa) / (n - 1);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const double t = std::exp(xa + i * dx);
        const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
        sum += w * t * g(t) * density_(t);
    }
    return sum * dx;
}

BernsteinSpec::BernsteinSpec(MeasureDescriptor measure_, double s_lower_, double c_lower_,
                             double a1_, double a2_)
    : a1(a1_), a2(a2_), measure(std::move(measure_)), s_lower(s_lower_), c_lower(c_lower_) {
    if (a1 != 0.0 || a2 != 0.0)
        throw DomainError("Bernstein triplet must have a1 = a2 = 0");
    if (!(c_lower > 0.0)) throw DomainError("c_lower must be positive");
    require_finite(s_lower, "s_lower");
    std::visit(Overloaded{
                   [](const FractionalPower& fp) {
                       if (!(fp.s > 0.0 && fp.s < 1.0))
                           throw DomainError("fractional power s must lie in (0,1)");
                   },
                   [](const AtomicMix& am) {
                       if (am.atoms.empty()) throw DomainError("atomic mix needs at least one atom");
                       for (const auto& a : am.atoms)
                           if (!(a.t > 0.0 && a.w > 0.0) || !std::isfinite(a.t) ||
                               !std::isfinite(a.w))
                               throw DomainError("atoms need t > 0 and w > 0");
                   },
                   [](const QuadratureDensity&) {},
               },
               measure);
}

std::string BernsteinSpec::variant_name() const {
    return std::visit(Overloaded{
                          [](const FractionalPower&) { return std::string("fractional_power"); },
                          [](const AtomicMix&) { return std::string("atomic_mix"); },
                          [](const QuadratureDensity&) { return std::string("quadrature_density"); },
                      },
                      measure);
}

BernsteinSpec fractional_power_spec(double s, double c_lower) {
    return BernsteinSpec(FractionalPower{s}, s, c_lower);
}

double eval_psi(const BernsteinSpec& spec, double r) {
    if (!(r >= 0.0)) throw DomainError("eval_psi: r must be >= 0");
    if (std::isinf(r)) throw DomainError("eval_psi: r must be finite");
    return std::visit(
        Overloaded{
            [r](const FractionalPower& fp) { return r == 0.0 ? 0.0 : std::pow(r, fp.s); },
            [r](const AtomicMix& am) {
                double sum = 0.0;
                for (const auto& a : am.atoms) sum += a.w * -std::expm1(-r * a.t);
                return sum;
            },
            [r](const QuadratureDensity& q) {
                const auto t = q.nodes();
                const auto mu = q.masses();
                double sum = 0.0;
                for (std::size_t i = 0; i < t.size(); ++i) sum += mu[i] * -std::expm1(-r * t[i]);
                // Upper tail taken as saturated: valid when r * t_max >> 1.
                sum += r * q.lower_first_moment() -
                       std::expm1(-r * q.options().t_max) * q.upper_mass();
                return sum;
            },
        },
        spec.measure);
}

double levy_m_constant(const BernsteinSpec& spec) {
    return std::visit(
        Overloaded{
            [](const FractionalPower& fp) {
                return fractional_prefactor(fp.s) * (1.0 / (1.0 - fp.s) + 1.0 / fp.s);
            },
            [](const AtomicMix& am) {
                double sum = 0.0;
                for (const auto& a : am.atoms) sum += a.w * std::min(1.0, a.t);
                return sum;
            },
            [](const QuadratureDensity& q) {
                const auto& o = q.options();
                const double split = std::clamp(1.0, o.t_min, o.t_max);
                const int n = std::max(64, o.nodes);
                const double below = q.integrate([](double t) { return t; }, o.t_min, split, n);
                const double above = q.integrate([](double) { return 1.0; }, split, o.t_max, n);
                return below + above + q.lower_first_moment() + q.upper_mass();
            },
        },
        spec.measure);
}

LogMoment levy_log_moment(const BernsteinSpec& spec) {
    return std::visit(
        Overloaded{
            [](const FractionalPower& fp) {
                return LogMoment{1.0 / (fp.s * std::tgamma(1.0 - fp.s)), true};
            },
            [](const AtomicMix& am) {
                double sum = 0.0;
                for (const auto& a : am.atoms)
                    if (a.t > 1.0) sum += a.w * std::log(a.t);
                return LogMoment{sum, true};
            },
            [](const QuadratureDensity& q) {
                const auto& o = q.options();
                const double lo = std::max(1.0, o.t_min);
                double value = 0.0;
                if (o.t_max > lo)
                    value += q.integrate([](double t) { return std::log(t); }, lo, o.t_max,
                                         std::max(64, o.nodes));
                if (q.upper_mass() > 0.0) {
                    const double a = q.upper_exponent() - 1.0;
                    const double tail_density = q.density(o.t_max) * o.t_max;
                    value += tail_density * (std::log(o.t_max) / a + 1.0 / (a * a));
                }
                return LogMoment{value, std::isfinite(value)};
            },
        },
        spec.measure);
}

std::vector<double> default_probe_grid() {
    std::vector<double> r;
    for (int i = 0; i <= 80; ++i) r.push_back(std::pow(10.0, -4.0 + 0.1 * i));
    return r;
}

HypothesisReport check_hypotheses(const BernsteinSpec& spec, std::span<const double> r_probe) {
    if (r_probe.empty()) throw DomainError("check_hypotheses: probe grid is empty");
    for (double r : r_probe)
        if (!(r > 0.0)) throw DomainError("check_hypotheses: probes must be positive");

    HypothesisReport rep;
    rep.probes.assign(r_probe.begin(), r_probe.end());
    std::sort(rep.probes.begin(), rep.probes.end());
    rep.triplet_ok = spec.a1 == 0.0 && spec.a2 == 0.0;
    rep.s_lower_in_range = spec.s_lower > 0.5 && spec.s_lower < 1.0;
    rep.m = levy_m_constant(spec);

    rep.min_lower_ratio = std::numeric_limits<double>::infinity();
    rep.sublinear_pass = true;
    for (double r : rep.probes) {
        const double psi = eval_psi(spec, r);
        rep.psi_values.push_back(psi);
        rep.min_lower_ratio = std::min(rep.min_lower_ratio, psi / std::pow(r, spec.s_lower));
        const bool ok = psi <= rep.m * (1.0 + r) * (1.0 + 1e-12);
        rep.sublinear_ok.push_back(ok);
        rep.sublinear_pass = rep.sublinear_pass && ok;
    }
    rep.lower_bound_pass = rep.min_lower_ratio >= spec.c_lower * (1.0 - rep.lower_bound_slack);

    // Concavity: secant slopes must be nonincreasing.
    rep.concave_pass = true;
    double prev_slope = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < rep.probes.size(); ++i) {
        const double slope = (rep.psi_values[i + 1] - rep.psi_values[i]) /
                             (rep.probes[i + 1] - rep.probes[i]);
        if (slope > prev_slope * (1.0 + 1e-9) + 1e-14) rep.concave_pass = false;
        prev_slope = slope;
    }

    const auto lm = levy_log_moment(spec);
    rep.log_moment = lm.value;
    rep.log_moment_finite = lm.finite;
    return rep;
}

double fractional_kernel_constant(int d, double s) {
    return s * std::pow(4.0, s) * std::tgamma(0.5 * d + s) /
           (std::tgamma(1.0 - s) * std::pow(kPi, 0.5 * d));
}

double levy_jump_density(const BernsteinSpec& spec, double r, int d) {
    if (!(r > 0.0) || !std::isfinite(r)) throw DomainError("levy_jump_density: r must be > 0");
    if (d < 1) throw DomainError("levy_jump_density: dimension must be >= 1");
    const double half_d = 0.5 * d;
    const auto heat = [&](double t) {
        return std::pow(4.0 * kPi * t, -half_d) * std::exp(-r * r / (4.0 * t));
    };
    return std::visit(
        Overloaded{
            [&](const FractionalPower& fp) {
                return fractional_kernel_constant(d, fp.s) * std::pow(r, -d - 2.0 * fp.s);
            },
            [&](const AtomicMix& am) {
                double sum = 0.0;
                for (const auto& a : am.atoms) sum += a.w * heat(a.t);
                return sum;
            },
            [&](const QuadratureDensity& q) {
                const auto t = q.nodes();
                const auto mu = q.masses();
                double sum = 0.0;
                for (std::size_t i = 0; i < t.size(); ++i) sum += mu[i] * heat(t[i]);
                if (q.upper_mass() > 0.0) {
                    const double tmax = q.options().t_max;
                    sum += q.density(tmax) * tmax * std::pow(4.0 * kPi * tmax, -half_d) /
                           (q.upper_exponent() - 1.0 + half_d);
                }
                return sum;
            },
        },
        spec.measure);
}

double sample_positive_stable(double s, RandomStream& rng) {
    const double u = kPi * rng.uniform();
    const double e = rng.exponential();
    const double a = std::sin(s * u) / std::pow(std::sin(u), 1.0 / s);
    return a * std::pow(std::sin((1.0 - s) * u) / e, (1.0 - s) / s);
}

double sample_subordinator_increment(const BernsteinSpec& spec, double t, RandomStream& rng) {
    if (!(t > 0.0) || !std::isfinite(t))
        throw DomainError("sample_subordinator_increment: t must be > 0");
    return std::visit(
        Overloaded{
            [&](const FractionalPower& fp) {
                return std::pow(t, 1.0 / fp.s) * sample_positive_stable(fp.s, rng);
            },
            // A finite measure needs no small-jump cutoff: exact compound Poisson.
            [&](const AtomicMix& am) {
                double total = 0.0;
                for (const auto& a : am.atoms) total += a.w;
                const auto jumps = rng.poisson(t * total);
                double sum = 0.0;
                for (std::uint64_t j = 0; j < jumps; ++j) {
                    double pick = rng.uniform() * total;
                    std::size_t i = 0;
                    while (i + 1 < am.atoms.size() && pick > am.atoms[i].w) {
                        pick -= am.atoms[i].w;
                        ++i;
                    }
                    sum += am.atoms[i].t;
                }
                return sum;
            },
            [&](const QuadratureDensity& q) {
                double sum = t * q.small_jump_drift();
                if (q.jump_rate() > 0.0) {
                    const auto jumps = rng.poisson(t * q.jump_rate());
                    const auto nodes = q.nodes();
                    for (std::uint64_t j = 0; j < jumps; ++j)
                        sum += nodes[q.sample_jump_node(rng.uniform())];
                }
                return sum;
            },
        },
        spec.measure);
}

}  // namespace nlfp
