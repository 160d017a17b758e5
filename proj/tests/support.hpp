#pragma once

#include <cmath>
#include <vector>

#include "nlfp/grid.hpp"
#include "nlfp/random.hpp"

namespace nlfp::testing {

/// Unit-mass isotropic Gaussian sampled on the grid nodes.
inline Field gaussian(const Grid& g, double sigma, std::vector<double> center = {}) {
    center.resize(static_cast<std::size_t>(g.dim()), 0.0);
    Field f(g);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto idx = g.unravel(i);
        double r2 = 0.0;
        for (int a = 0; a < g.dim(); ++a) {
            const double dx = g.coordinate(idx[a]) - center[a];
            r2 += dx * dx;
        }
        f.values[static_cast<Eigen::Index>(i)] = std::exp(-0.5 * r2 / (sigma * sigma));
    }
    f.values /= mass(f);
    return f;
}

/// Nonnegative smooth random field: a few Gaussians with random centers and widths.
inline Field random_bumps(const Grid& g, RandomStream& rng, double spread = 4.0) {
    Field f(g);
    for (int b = 0; b < 3; ++b) {
        std::vector<double> c(static_cast<std::size_t>(g.dim()));
        for (auto& x : c) x = spread * (2.0 * rng.uniform() - 1.0);
        const double sigma = 0.5 + 1.0 * rng.uniform();
        f.values += (0.2 + rng.uniform()) * gaussian(g, sigma, c).values;
    }
    f.values /= mass(f);
    return f;
}

inline Field random_noise(const Grid& g, RandomStream& rng) {
    Field f(g);
    for (Eigen::Index i = 0; i < f.values.size(); ++i) f.values[i] = rng.normal();
    return f;
}

}  // namespace nlfp::testing
