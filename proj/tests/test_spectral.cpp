#include <doctest.h>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <complex>
#include <numbers>

#include "nlfp/error.hpp"
#include "nlfp/spectral.hpp"
#include "support.hpp"

using namespace nlfp;
using nlfp::testing::gaussian;
using nlfp::testing::random_bumps;
using nlfp::testing::random_noise;

namespace {

constexpr double pi = std::numbers::pi;

// Psi(r) = int (1 - e^{-rt}) mu(dt) by double-exponential quadrature.
double psi_by_quadrature(double s, double r) {
    const double c = s / std::tgamma(1.0 - s);
    auto lower = [&](double t) { return -std::expm1(-r * t) / t * c * std::pow(t, -s); };
    auto upper = [&](double t) { return -std::expm1(-r * t) * c * std::pow(t, -s - 1.0); };
    return boost::math::quadrature::tanh_sinh<double>().integrate(lower, 0.0, 1.0) +
           boost::math::quadrature::exp_sinh<double>().integrate(
               upper, 1.0, std::numeric_limits<double>::infinity());
}

// O(n^2) DFT, multiply, inverse DFT on a 1-d grid.
Eigen::ArrayXd naive_multiplier_1d(const Eigen::ArrayXd& f, double L,
                                   const std::function<double(double)>& symbol_of_k) {
    const int n = static_cast<int>(f.size());
    std::vector<std::complex<double>> spec(n);
    for (int j = 0; j < n; ++j) {
        std::complex<double> acc = 0.0;
        for (int m = 0; m < n; ++m) acc += f[m] * std::polar(1.0, -2.0 * pi * j * m / n);
        const int jw = j < n / 2 ? j : j - n;
        spec[j] = acc * symbol_of_k(2.0 * pi * jw / L);
    }
    Eigen::ArrayXd out(n);
    for (int m = 0; m < n; ++m) {
        std::complex<double> acc = 0.0;
        for (int j = 0; j < n; ++j) acc += spec[j] * std::polar(1.0, 2.0 * pi * j * m / n);
        out[m] = acc.real() / n;
    }
    return out;
}

CoefficientSet transport(const Grid& g, VectorField drift, ScalarLaw b = presets::b_constant(1.0)) {
    return CoefficientSet(g, presets::beta_linear(), std::move(b), std::move(drift));
}

}  // namespace

TEST_CASE("grid layout") {
    Grid g(2, 8, 4.0);
    CHECK(g.spacing() == 0.5);
    CHECK(g.coordinate(0) == -2.0);
    CHECK(g.coordinate(4) == 0.0);
    CHECK(g.size() == 64);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g.ravel(g.unravel(i)) == i);
    CHECK(g.stride(0) == 8);
    CHECK(g.stride(1) == 1);
    CHECK(g.wavenumber(5) == doctest::Approx(2.0 * pi * -3 / 4.0));
    CHECK_THROWS_AS(Grid(4, 8, 1.0), DomainError);
    CHECK_THROWS_AS(Grid(1, 6, 1.0), DomainError);
}

TEST_CASE("psi laplacian kills constants and scales modes") {
    auto spec = fractional_power_spec(0.5);
    Grid g(1, 64, 4.0 * pi);
    Field c(g, Eigen::ArrayXd::Constant(64, 3.0));
    CHECK(norm_linf(apply_psi_laplacian(c, spec)) <= 1e-13);

    Field mode(g);
    for (int i = 0; i < 64; ++i) mode.values[i] = std::cos(2.0 * g.coordinate(i));
    auto out = apply_psi_laplacian(mode, spec);
    CHECK((out.values - 2.0 * mode.values).abs().maxCoeff() <= 1e-13);

    Field bad = mode;
    bad.values[3] = std::nan("");
    CHECK_THROWS_AS(apply_psi_laplacian(bad, spec), DomainError);
}

TEST_CASE("psi laplacian against the subordination integral of heat multipliers") {
    const double s = 0.75;
    Grid g(1, 256, 40.0);
    auto f = gaussian(g, 1.0, {0.3});
    auto fast = apply_psi_laplacian(f, fractional_power_spec(s));
    auto slow = naive_multiplier_1d(f.values, g.box_length(),
                                    [&](double k) { return psi_by_quadrature(s, k * k); });
    CHECK((fast.values - slow).abs().maxCoeff() <= 1e-8);
}

TEST_CASE("psi laplacian is linear, self-adjoint and mean-free") {
    RandomStream rng(3);
    auto spec = fractional_power_spec(0.75);
    for (int d : {1, 2, 3}) {
        Grid g(d, d == 3 ? 16 : 64, 10.0);
        auto f = random_noise(g, rng), h = random_noise(g, rng);
        auto lf = apply_psi_laplacian(f, spec), lh = apply_psi_laplacian(h, spec);
        Field comb(g, 2.5 * f.values - 0.7 * h.values);
        auto lc = apply_psi_laplacian(comb, spec);
        const double scale = norm_linf(lf) + norm_linf(lh);
        CHECK((lc.values - (2.5 * lf.values - 0.7 * lh.values)).abs().maxCoeff() <= 1e-13 * scale);
        CHECK(std::abs(inner(lf, h) - inner(f, lh)) <= 1e-12 * scale * norm_l1(f));
        CHECK(std::abs(mass(lf)) <= 1e-12 * scale * std::pow(10.0, d));
    }
}

TEST_CASE("resolvent of constants and round trip") {
    auto spec = fractional_power_spec(0.75);
    Grid g(2, 32, 8.0);
    Field c(g, Eigen::ArrayXd::Constant(g.size(), 2.0));
    CHECK((resolvent_phi(c, spec, 0.25).values - 8.0).abs().maxCoeff() <= 1e-12);

    RandomStream rng(9);
    auto f = random_noise(g, rng);
    for (double eps : {1e-3, 0.5, 10.0}) {
        auto y = resolvent_phi(f, spec, eps);
        Field back(g, eps * y.values + apply_psi_laplacian(y, spec).values);
        CHECK(norm_l2(Field(g, back.values - f.values)) <= 1e-12 * norm_l2(f));
    }
    CHECK_THROWS_AS(resolvent_phi(f, spec, 0.0), DomainError);
    CHECK_THROWS_AS(resolvent_phi(f, spec, -1.0), DomainError);
}

TEST_CASE("resolvent L^p bounds and positivity") {
    RandomStream rng(21);
    auto spec = fractional_power_spec(0.75);
    Grid g(1, 1024, 40.0);
    for (int trial = 0; trial < 5; ++trial) {
        auto f = random_bumps(g, rng, 8.0);
        for (double eps : {0.01, 1.0}) {
            auto y = resolvent_phi(f, spec, eps);
            CHECK(eps * norm_l1(y) <= norm_l1(f) * (1 + 1e-12));
            CHECK(eps * norm_l2(y) <= norm_l2(f) * (1 + 1e-12));
            CHECK(eps * norm_linf(y) <= norm_linf(f) * (1 + 1e-12));
            CHECK(y.values.minCoeff() >= -1e-10);
        }
    }
}

TEST_CASE("semigroups") {
    Grid g(1, 512, 40.0);
    auto f = gaussian(g, 1.0);
    auto heat = heat_semigroup(f, 0.3);
    auto exact = gaussian(g, std::sqrt(1.0 + 2.0 * 0.3));
    CHECK(l1_distance(heat, exact) <= 1e-10);

    auto spec = fractional_power_spec(0.75);
    auto p = psi_semigroup(f, spec, 0.5);
    CHECK(mass(p) == doctest::Approx(1.0).epsilon(1e-13));
    auto twice = psi_semigroup(psi_semigroup(f, spec, 0.2), spec, 0.3);
    CHECK(l1_distance(p, twice) <= 1e-12);
}

TEST_CASE("subordination kernel: normalization, sign, two routes agree") {
    auto spec = fractional_power_spec(0.75);
    Grid g(1, 1024, 40.0);
    const double eps = 1.0;
    auto k = subordination_kernel(spec, eps, g);
    CHECK(std::abs(eps * mass(k) - 1.0) <= 1e-3);
    CHECK(k.values.minCoeff() >= 0.0);
    auto r = resolvent_of_delta(spec, eps, g);
    CHECK(l1_distance(k, r) <= 1e-4);
    auto delta = discrete_delta(g);
    CHECK(mass(delta) == doctest::Approx(1.0));
    CHECK(delta.values[512] > 0.0);

    Grid g2(2, 64, 20.0);
    auto k2 = subordination_kernel(spec, 0.5, g2);
    CHECK(std::abs(0.5 * mass(k2) - 1.0) <= 1e-3);
    CHECK(l1_distance(k2, resolvent_of_delta(spec, 0.5, g2)) <= 1e-4 * norm_l1(k2));
    CHECK_THROWS_AS(subordination_kernel(spec, 0.0, g), DomainError);
}

TEST_CASE("drift divergence: zero drift, zero mass") {
    RandomStream rng(4);
    Grid g1(1, 128, 10.0);
    auto u1 = random_bumps(g1, rng);
    CHECK(norm_linf(divergence_drift(u1, transport(g1, presets::drift_zero(1)))) == 0.0);

    Grid g2(2, 64, 10.0);
    auto u2 = random_noise(g2, rng);
    auto div2 = divergence_drift(u2, transport(g2, presets::drift_rotation(2, 1.5, 2.0),
                                               presets::b_saturating()));
    CHECK(std::abs(mass(div2)) <= 1e-13 * norm_l1(div2));
    auto div1 = divergence_drift(u1, transport(g1, presets::drift_confining(1, 2.0)));
    CHECK(std::abs(mass(div1)) <= 1e-13 * norm_l1(div1));
}

TEST_CASE("drift divergence converges to the derivative at first order") {
    // D = 1, b = 1: div(u) = u'. Compare against the spectral derivative.
    std::vector<double> err;
    for (int n : {128, 256, 512, 1024}) {
        Grid g(1, n, 10.0);
        Field u(g);
        for (int i = 0; i < n; ++i) u.values[i] = 2.0 + std::sin(2.0 * pi * 2.0 * g.coordinate(i) / 10.0);
        auto up = divergence_drift(u, transport(g, presets::drift_constant({1.0})));
        auto exact = spectral_derivative(u, 0);
        err.push_back(norm_linf(Field(g, up.values - exact.values)));
    }
    for (std::size_t i = 1; i < err.size(); ++i)
        CHECK(err[i - 1] / err[i] == doctest::Approx(2.0).epsilon(0.05));
}

TEST_CASE("spectral derivative of a mode") {
    Grid g(2, 32, 2.0 * pi);
    Field u(g);
    for (std::size_t i = 0; i < g.size(); ++i) {
        auto idx = g.unravel(i);
        u.values[static_cast<Eigen::Index>(i)] = std::sin(3.0 * g.coordinate(idx[1]));
    }
    auto du = spectral_derivative(u, 1);
    for (std::size_t i = 0; i < g.size(); ++i) {
        auto idx = g.unravel(i);
        CHECK(du.values[static_cast<Eigen::Index>(i)] ==
              doctest::Approx(3.0 * std::cos(3.0 * g.coordinate(idx[1]))).epsilon(1e-12));
    }
    CHECK(norm_linf(spectral_derivative(u, 0)) <= 1e-12);
}
