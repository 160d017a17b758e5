#include "nlfp/coefficients.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "nlfp/error.hpp"

namespace nlfp {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

double sign(double r) { return r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0); }
}  // namespace

namespace presets {

ScalarLaw beta_linear(double scale) {
    if (!(scale > 0.0)) throw DomainError("linear beta needs a positive scale");
    ScalarLaw law;
    law.name = "linear";
    law.params = {{"scale", scale}};
    law.value = [scale](double r) { return scale * r; };
    law.derivative = [scale](double) { return scale; };
    law.lipschitz = scale;
    law.sup_abs = kInf;
    law.linear = true;
    return law;
}

ScalarLaw beta_cubic_clipped(double clip) {
    if (!(clip > 0.0)) throw DomainError("clip must be positive");
    ScalarLaw law;
    law.name = "cubic_clipped";
    law.params = {{"clip", clip}};
    const double edge = clip + clip * clip * clip;
    const double slope = 1.0 + 3.0 * clip * clip;
    law.value = [=](double r) {
        const double a = std::abs(r);
        return a <= clip ? r + r * r * r : sign(r) * (edge + slope * (a - clip));
    };
    law.derivative = [=](double r) {
        const double a = std::abs(r);
        return a <= clip ? 1.0 + 3.0 * r * r : slope;
    };
    law.lipschitz = slope;
    law.sup_abs = kInf;
    return law;
}

ScalarLaw beta_arctan() {
    ScalarLaw law;
    law.name = "arctan";
    law.value = [](double r) { return r + std::atan(r); };
    law.derivative = [](double r) { return 1.0 + 1.0 / (1.0 + r * r); };
    law.lipschitz = 2.0;
    law.sup_abs = kInf;
    return law;
}

ScalarLaw beta_porous_clipped(double clip) {
    if (!(clip > 0.0)) throw DomainError("clip must be positive");
    ScalarLaw law;
    law.name = "porous_clipped";
    law.params = {{"clip", clip}};
    law.value = [=](double r) {
        const double a = std::abs(r);
        return a <= clip ? r * a : sign(r) * (clip * clip + 2.0 * clip * (a - clip));
    };
    law.derivative = [=](double r) { return 2.0 * std::min(std::abs(r), clip); };
    law.lipschitz = 2.0 * clip;
    law.sup_abs = kInf;
    return law;
}

ScalarLaw beta_saturating() {
    ScalarLaw law;
    law.name = "saturating";
    law.value = [](double r) {
        const double a = std::abs(r);
        return r + r * a / (1.0 + a);
    };
    law.derivative = [](double r) {
        const double a = std::abs(r);
        return 1.0 + (2.0 * a + a * a) / ((1.0 + a) * (1.0 + a));
    };
    law.lipschitz = 2.0;
    law.sup_abs = kInf;
    return law;
}

ScalarLaw beta_zero() {
    ScalarLaw law;
    law.name = "zero";
    law.value = [](double) { return 0.0; };
    law.derivative = [](double) { return 0.0; };
    return law;
}

ScalarLaw b_constant(double value) {
    if (!(value >= 0.0) || !std::isfinite(value))
        throw DomainError("constant b must be finite and nonnegative");
    ScalarLaw law;
    law.name = "constant";
    law.params = {{"value", value}};
    law.value = [value](double) { return value; };
    law.derivative = [](double) { return 0.0; };
    law.sup_abs = value;
    return law;
}

ScalarLaw b_saturating() {
    ScalarLaw law;
    law.name = "saturating";
    law.value = [](double r) { return 1.0 / (1.0 + std::abs(r)); };
    law.derivative = [](double r) {
        const double q = 1.0 + std::abs(r);
        return -sign(r) / (q * q);
    };
    law.lipschitz = 1.0;
    law.sup_abs = 1.0;
    return law;
}

VectorField drift_zero(int d) {
    VectorField v;
    v.name = "zero";
    v.dim = d;
    v.value = [](std::span<const double>, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
    };
    v.divergence = [](std::span<const double>) { return 0.0; };
    v.identically_zero = true;
    return v;
}

VectorField drift_constant(std::vector<double> c) {
    if (c.empty() || c.size() > 3) throw DomainError("constant drift needs 1..3 components");
    VectorField v;
    v.name = "constant";
    v.dim = static_cast<int>(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) v.params["c" + std::to_string(i)] = c[i];
    v.value = [c](std::span<const double>, std::span<double> out) {
        std::copy(c.begin(), c.end(), out.begin());
    };
    v.divergence = [](std::span<const double>) { return 0.0; };
    v.identically_zero = std::all_of(c.begin(), c.end(), [](double x) { return x == 0.0; });
    return v;
}

VectorField drift_confining(int d, double amplitude) {
    VectorField v;
    v.name = "confining";
    v.dim = d;
    v.params = {{"amplitude", amplitude}};
    v.value = [amplitude](std::span<const double> x, std::span<double> out) {
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = -amplitude * std::tanh(x[i]);
    };
    v.divergence = [amplitude](std::span<const double> x) {
        double div = 0.0;
        for (double xi : x) {
            const double c = std::cosh(xi);
            div -= amplitude / (c * c);
        }
        return div;
    };
    v.identically_zero = amplitude == 0.0;
    return v;
}

VectorField drift_rotation(int d, double amplitude, double width) {
    if (d < 2) throw DomainError("rotation drift needs d >= 2");
    if (!(width > 0.0)) throw DomainError("rotation width must be positive");
    VectorField v;
    v.name = "rotation";
    v.dim = d;
    v.params = {{"amplitude", amplitude}, {"width", width}};
    v.value = [=](std::span<const double> x, std::span<double> out) {
        double r2 = 0.0;
        for (double xi : x) r2 += xi * xi;
        const double env = amplitude * std::exp(-r2 / (2.0 * width * width));
        std::fill(out.begin(), out.end(), 0.0);
        out[0] = -env * x[1];
        out[1] = env * x[0];
    };
    // Radial envelope times a rotation generator is divergence-free.
    v.divergence = [](std::span<const double>) { return 0.0; };
    v.identically_zero = amplitude == 0.0;
    return v;
}

}  // namespace presets

CoefficientSet::CoefficientSet(const Grid& grid, ScalarLaw beta, ScalarLaw b, VectorField drift)
    : grid_(grid), beta_(std::move(beta)), b_(std::move(b)), drift_(std::move(drift)) {
    if (drift_.dim != grid_.dim())
        throw DomainError("drift field dimension does not match grid dimension");
    if (!beta_.value || !beta_.derivative || !b_.value)
        throw DomainError("coefficient functions must be set");

    const int d = grid_.dim();
    const auto n = static_cast<Eigen::Index>(grid_.size());
    const double h = grid_.spacing();
    nodes_.assign(d, Eigen::ArrayXd::Zero(n));
    faces_.assign(d, Eigen::ArrayXd::Zero(n));
    div_ = Eigen::ArrayXd::Zero(n);

    double x[3], face[3], out[3];
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto idx = grid_.unravel(static_cast<std::size_t>(i));
        for (int a = 0; a < d; ++a) x[a] = grid_.coordinate(idx[a]);
        drift_.value({x, static_cast<std::size_t>(d)}, {out, static_cast<std::size_t>(d)});
        double norm2 = 0.0;
        for (int a = 0; a < d; ++a) {
            nodes_[a][i] = out[a];
            norm2 += out[a] * out[a];
        }
        div_[i] = drift_.divergence({x, static_cast<std::size_t>(d)});
        drift_bound_ = std::max(drift_bound_, std::sqrt(norm2) + std::max(0.0, -div_[i]));

        for (int a = 0; a < d; ++a) {
            std::copy(x, x + d, face);
            face[a] += 0.5 * h;
            drift_.value({face, static_cast<std::size_t>(d)}, {out, static_cast<std::size_t>(d)});
            faces_[a][i] = out[a];
        }
    }
}

double CoefficientSet::lambda0() const {
    const double denom = std::sqrt(drift_bound_) * b_.sup_abs;
    if (denom == 0.0) return std::numeric_limits<double>::infinity();
    return 1.0 / denom;
}

double sup_derivative(const ScalarLaw& law, double lo, double hi, int samples) {
    if (hi < lo) std::swap(lo, hi);
    double best = 0.0;
    for (int i = 0; i < samples; ++i) {
        const double r = samples == 1 ? lo : lo + (hi - lo) * i / (samples - 1);
        best = std::max(best, std::abs(law.derivative(r)));
    }
    return best;
}

CoefficientReport check_coefficients(const CoefficientSet& coeffs, double r_max) {
    CoefficientReport rep;
    const auto& beta = coeffs.beta();
    const auto& b = coeffs.b();
    rep.beta_zero_at_zero = beta.value(0.0) == 0.0 && coeffs.b_star(0.0) == 0.0;
    rep.beta_lipschitz = std::isfinite(beta.lipschitz);
    rep.beta_strictly_increasing = true;
    rep.b_nonnegative = true;
    double b_sup = 0.0;
    constexpr int kSamples = 2001;
    for (int i = 0; i < kSamples; ++i) {
        const double r = -r_max + 2.0 * r_max * i / (kSamples - 1);
        if (r != 0.0 && !(beta.derivative(r) > 0.0)) rep.beta_strictly_increasing = false;
        const double bv = b.value(r);
        if (bv < 0.0) rep.b_nonnegative = false;
        b_sup = std::max(b_sup, std::abs(bv));
    }
    rep.b_bounded = std::isfinite(b.sup_abs) && b_sup <= b.sup_abs * (1.0 + 1e-12);
    rep.div_negative_part_bounded = std::isfinite(coeffs.drift_bound());
    return rep;
}

}  // namespace nlfp
