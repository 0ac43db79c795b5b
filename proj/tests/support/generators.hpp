#pragma once

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "hvfilter/hierarchy.hpp"
#include "hvfilter/sparse_core.hpp"

namespace hvf::testing {

inline std::vector<Location> grid_locations(index_t g) {
    std::vector<Location> out;
    out.reserve(static_cast<std::size_t>(g) * g);
    for (index_t iy = 0; iy < g; ++iy)
        for (index_t ix = 0; ix < g; ++ix)
            out.push_back({{(ix + 0.5) / g, (iy + 0.5) / g}, iy * g + ix});
    return out;
}

inline std::vector<Location> random_locations(std::size_t n, std::mt19937_64& rng, int dim = 2) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Location> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i].coords[0] = u(rng);
        out[i].coords[1] = dim == 2 ? u(rng) : 0.0;
        out[i].original_index = static_cast<index_t>(i);
    }
    return out;
}

/// Random valid hierarchy configuration deep enough for n points.
inline HierarchyConfig random_config(std::size_t n, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> jd(2, 3), rd(1, 4), cd(1, 3);
    HierarchyConfig c;
    c.J = jd(rng);
    c.leaf_cap = static_cast<std::size_t>(cd(rng));
    // Grow M until capacity certainly suffices.
    double remaining = static_cast<double>(n);
    while (true) {
        const double leaves = std::pow(c.J, c.M);
        if (remaining <= leaves * static_cast<double>(c.leaf_cap))
            break;
        const auto r = static_cast<std::size_t>(rd(rng));
        c.set_sizes.push_back(r);
        ++c.M;
    }
    return c;
}

inline Matrix random_spd(index_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> z;
    Matrix a(n, n);
    for (index_t i = 0; i < n; ++i)
        for (index_t j = 0; j < n; ++j)
            a(i, j) = z(rng);
    Matrix s = a * a.transpose() / n;
    s.diagonal().array() += 1.0;
    return s;
}

inline Matrix exp_kernel_dense(const std::vector<Location>& locs, double range, double var = 1.0) {
    const auto n = static_cast<Eigen::Index>(locs.size());
    Matrix k(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            k(i, j) = var * std::exp(-distance(locs[i], locs[j]) / range);
    return k;
}

/// Random factor with positive diagonal on a pattern.
inline SparseLowerTri random_factor(const PatternPtr& s, std::mt19937_64& rng) {
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> u(0.5, 1.5);
    SparseLowerTri l(s);
    for (index_t i = 0; i < s->n(); ++i) {
        for (auto p = s->row_begin(i); p + 1 < s->row_end(i); ++p)
            l.values()[p] = 0.3 * z(rng);
        l.values()[s->diag_pos(i)] = u(rng);
    }
    return l;
}

struct HvFixture {
    std::vector<Location> locs;
    Hierarchy h;
    Ordering ord;
    PatternPtr s;
    std::vector<Location> ordered; ///< locations permuted into hierarchy order
};

inline HvFixture make_hv(std::vector<Location> locs, const HierarchyConfig& cfg) {
    HvFixture f;
    f.locs = std::move(locs);
    f.h = build_hierarchy(f.locs, cfg);
    f.ord = ordering_of(f.h);
    f.s = share(conditioning_pattern(f.h));
    for (auto k : f.h.global_order)
        f.ordered.push_back(f.locs[k]);
    return f;
}

inline double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

} // namespace hvf::testing
