#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "hvfilter/pattern.hpp"
#include "hvfilter/types.hpp"

namespace hvf {

/// A grid point in a 1-d or 2-d domain. 1-d locations leave coords[1] at zero.
struct Location {
    std::array<double, 2> coords{};
    index_t original_index = 0;
};

inline double squared_distance(const Location& a, const Location& b) noexcept {
    const double dx = a.coords[0] - b.coords[0];
    const double dy = a.coords[1] - b.coords[1];
    return dx * dx + dy * dy;
}

inline double distance(const Location& a, const Location& b) noexcept {
    return std::sqrt(squared_distance(a, b));
}

struct HierarchyConfig {
    int M = 0;                       ///< resolutions below the root
    int J = 2;                       ///< children per split region
    std::vector<std::size_t> set_sizes; ///< r_0 .. r_{M-1}
    std::size_t leaf_cap = 1;        ///< max knots in a resolution-M set

    /// Upper bound on every conditioning set: sum of r_m plus leaf_cap.
    std::size_t implied_N() const {
        return std::accumulate(set_sizes.begin(), set_sizes.end(), std::size_t{0}) + leaf_cap;
    }

    void validate() const {
        if (M < 0)
            throw std::invalid_argument("hierarchy: M must be >= 0");
        if (M >= 1 && J < 2)
            throw std::invalid_argument("hierarchy: J must be >= 2 when M >= 1");
        if (set_sizes.size() != static_cast<std::size_t>(M))
            throw std::invalid_argument("hierarchy: expected " + std::to_string(M) + " set sizes, got " +
                                        std::to_string(set_sizes.size()));
        for (auto r : set_sizes)
            if (r < 1)
                throw std::invalid_argument("hierarchy: set sizes must be >= 1");
        if (leaf_cap < 1)
            throw std::invalid_argument("hierarchy: leaf_cap must be >= 1");
    }

    /// DL: one set holding every point, so S is the full lower triangle.
    static HierarchyConfig dense(std::size_t n) { return {0, 2, {}, std::max<std::size_t>(n, 1)}; }

    /// LR: N root knots, then every remaining point alone in its own leaf, so rows beyond N hold
    /// exactly the first N columns plus the diagonal.
    static HierarchyConfig low_rank(std::size_t n, std::size_t N) {
        const auto rest = n > N ? n - N : 0;
        return {1, static_cast<int>(std::max<std::size_t>(rest, 2)), {std::max<std::size_t>(N, 1)}, 1};
    }
};

/// Greedy maximin ordering: start nearest the centroid, then repeatedly take the point farthest
/// from everything already chosen. Ties go to the lowest original_index. Returns input positions.
inline std::vector<index_t> maxdist_order(std::span<const Location> locs) {
    const auto n = locs.size();
    if (n == 0)
        throw std::invalid_argument("empty location set");
    for (const auto& l : locs)
        if (!std::isfinite(l.coords[0]) || !std::isfinite(l.coords[1]))
            throw std::invalid_argument("maxdist_order: non-finite coordinate");

    Location centroid;
    for (const auto& l : locs) {
        centroid.coords[0] += l.coords[0];
        centroid.coords[1] += l.coords[1];
    }
    centroid.coords[0] /= static_cast<double>(n);
    centroid.coords[1] /= static_cast<double>(n);

    auto better = [&](std::size_t cand, std::size_t best, double dc, double db, bool larger) {
        if (dc != db)
            return larger ? dc > db : dc < db;
        return locs[cand].original_index < locs[best].original_index;
    };

    std::size_t first = 0;
    double first_d = squared_distance(locs[0], centroid);
    for (std::size_t k = 1; k < n; ++k) {
        const double d = squared_distance(locs[k], centroid);
        if (better(k, first, d, first_d, false)) {
            first = k;
            first_d = d;
        }
    }

    std::vector<index_t> order;
    order.reserve(n);
    std::vector<char> taken(n, 0);
    std::vector<double> mind(n, std::numeric_limits<double>::infinity());
    std::size_t cur = first;
    for (std::size_t step = 0; step < n; ++step) {
        order.push_back(static_cast<index_t>(cur));
        taken[cur] = 1;
        std::size_t next = n;
        double next_d = -1.0;
        for (std::size_t k = 0; k < n; ++k) {
            if (taken[k])
                continue;
            mind[k] = std::min(mind[k], squared_distance(locs[k], locs[cur]));
            if (next == n || better(k, next, mind[k], next_d, true)) {
                next = k;
                next_d = mind[k];
            }
        }
        cur = next;
    }
    return order;
}

/// One node D_{j1..jm} of the recursive partition together with its knot set X_{j1..jm}.
struct Region {
    std::vector<int> path;            ///< (j1, ..., jm), 1-based; empty for the root
    int level = 0;
    std::optional<std::size_t> parent;
    std::vector<std::size_t> children;
    std::array<double, 2> lo{}, hi{}; ///< bounding box of the locations the region contains
    std::vector<index_t> set;         ///< input positions, within-set (maxdist) order
    std::vector<index_t> ancestors;   ///< input positions of A_{j1..jm}, root first
    std::size_t contained = 0;        ///< locations inside the region, knots of descendants included
};

class Hierarchy {
public:
    HierarchyConfig config;
    std::vector<Location> locations;
    std::vector<Region> regions;        ///< breadth-first, i.e. resolution then lexicographic
    std::vector<index_t> global_order;  ///< global_order[k] = input position of variable k
    std::vector<index_t> rank;          ///< inverse of global_order
    std::vector<std::size_t> region_of; ///< region holding each input position

    std::size_t n() const noexcept { return locations.size(); }
    int resolution(index_t input_pos) const { return regions[region_of[input_pos]].level; }
};

namespace detail {

inline std::array<std::array<double, 2>, 2> bounding_box(std::span<const Location> locs,
                                                          std::span<const index_t> pts) {
    std::array<double, 2> lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
    std::array<double, 2> hi{-lo[0], -lo[1]};
    for (auto p : pts) {
        for (int a = 0; a < 2; ++a) {
            lo[a] = std::min(lo[a], locs[p].coords[a]);
            hi[a] = std::max(hi[a], locs[p].coords[a]);
        }
    }
    return {lo, hi};
}

} // namespace detail

/// Recursive longest-axis median partition with maximin knot selection.
///
/// Each region takes the first r_m of its not-yet-assigned points in the global maximin order; the
/// remaining points are ranked along the longest axis of their bounding box and cut into J chunks
/// of near-equal size (earlier chunks take the remainder). At resolution M every remaining point
/// joins the leaf set, which must not exceed leaf_cap.
inline Hierarchy build_hierarchy(std::span<const Location> locs, const HierarchyConfig& config,
                                 std::span<const index_t> maxdist = {}) {
    config.validate();
    const auto n = locs.size();
    if (n == 0)
        throw std::invalid_argument("empty location set");

    Hierarchy h;
    h.config = config;
    h.locations.assign(locs.begin(), locs.end());

    std::vector<index_t> order;
    if (maxdist.empty())
        order = maxdist_order(locs);
    else {
        if (maxdist.size() != n)
            throw std::invalid_argument("build_hierarchy: maxdist order has wrong length");
        order.assign(maxdist.begin(), maxdist.end());
    }
    std::vector<index_t> md_rank(n);
    for (std::size_t k = 0; k < n; ++k)
        md_rank[order[k]] = static_cast<index_t>(k);

    h.region_of.assign(n, 0);
    struct Pending {
        std::size_t region;
        std::vector<index_t> pts;
    };
    std::deque<Pending> queue;

    std::vector<index_t> all(n);
    std::iota(all.begin(), all.end(), index_t{0});
    h.regions.emplace_back();
    queue.push_back({0, std::move(all)});

    while (!queue.empty()) {
        auto [rid, pts] = std::move(queue.front());
        queue.pop_front();

        {
            auto& reg = h.regions[rid];
            auto box = detail::bounding_box(locs, pts);
            reg.lo = box[0];
            reg.hi = box[1];
            reg.contained = pts.size();
            if (reg.parent) {
                const auto& par = h.regions[*reg.parent];
                reg.ancestors = par.ancestors;
                reg.ancestors.insert(reg.ancestors.end(), par.set.begin(), par.set.end());
            }
        }

        std::sort(pts.begin(), pts.end(), [&](index_t a, index_t b) { return md_rank[a] < md_rank[b]; });
        const int level = h.regions[rid].level;

        std::size_t take = pts.size();
        if (level < config.M)
            take = std::min(pts.size(), config.set_sizes[static_cast<std::size_t>(level)]);
        else if (pts.size() > config.leaf_cap)
            throw std::runtime_error("hierarchy too shallow: leaf set of " + std::to_string(pts.size()) +
                                     " exceeds leaf_cap " + std::to_string(config.leaf_cap));

        h.regions[rid].set.assign(pts.begin(), pts.begin() + static_cast<std::ptrdiff_t>(take));
        for (auto p : h.regions[rid].set)
            h.region_of[p] = rid;

        std::vector<index_t> rest(pts.begin() + static_cast<std::ptrdiff_t>(take), pts.end());
        if (rest.empty())
            continue;

        auto box = detail::bounding_box(locs, rest);
        const int axis = (box[1][1] - box[0][1]) > (box[1][0] - box[0][0]) ? 1 : 0;
        std::sort(rest.begin(), rest.end(), [&](index_t a, index_t b) {
            const double ca = locs[a].coords[axis], cb = locs[b].coords[axis];
            if (ca != cb)
                return ca < cb;
            return locs[a].original_index < locs[b].original_index;
        });

        const auto J = static_cast<std::size_t>(config.J);
        const auto base = rest.size() / J, extra = rest.size() % J;
        std::size_t offset = 0;
        for (std::size_t c = 0; c < J; ++c) {
            const auto count = base + (c < extra ? 1 : 0);
            if (count == 0)
                continue;
            Region child;
            child.path = h.regions[rid].path;
            child.path.push_back(static_cast<int>(c + 1));
            child.level = level + 1;
            child.parent = rid;
            const auto cid = h.regions.size();
            h.regions[rid].children.push_back(cid);
            h.regions.push_back(std::move(child));
            queue.push_back({cid, std::vector<index_t>(rest.begin() + static_cast<std::ptrdiff_t>(offset),
                                                       rest.begin() + static_cast<std::ptrdiff_t>(offset + count))});
            offset += count;
        }
    }

    // Breadth-first region order is resolution-major and lexicographic within a resolution.
    h.global_order.reserve(n);
    for (const auto& reg : h.regions)
        h.global_order.insert(h.global_order.end(), reg.set.begin(), reg.set.end());
    h.rank.assign(n, 0);
    for (std::size_t k = 0; k < n; ++k)
        h.rank[h.global_order[k]] = static_cast<index_t>(k);
    return h;
}

/// Row k (global order) = ancestors of k's region + earlier members of k's own set + k.
inline SparsityPattern conditioning_pattern(const Hierarchy& h) {
    const auto n = h.n();
    std::vector<std::vector<index_t>> rows(n);
    for (const auto& reg : h.regions) {
        std::vector<index_t> base;
        base.reserve(reg.ancestors.size() + reg.set.size());
        for (auto p : reg.ancestors)
            base.push_back(h.rank[p]);
        for (auto p : reg.set) {
            const auto k = h.rank[p];
            auto& row = rows[k];
            row = base;
            row.push_back(k);
            base.push_back(k);
        }
    }
    return SparsityPattern::from_rows(std::move(rows));
}

/// Structured text: one header line, then one line per region.
inline std::string hierarchy_summary(const Hierarchy& h) {
    const auto s = conditioning_pattern(h);
    std::ostringstream os;
    os << "hierarchy n=" << h.n() << " M=" << h.config.M << " J=" << h.config.J << " set_sizes=";
    for (std::size_t m = 0; m < h.config.set_sizes.size(); ++m)
        os << (m ? "," : "") << h.config.set_sizes[m];
    os << " leaf_cap=" << h.config.leaf_cap << " regions=" << h.regions.size()
       << " max_conditioning=" << s.max_conditioning() << " nnz=" << s.nnz() << '\n';
    for (const auto& reg : h.regions) {
        os << std::string(static_cast<std::size_t>(reg.level) * 2, ' ') << "region (";
        for (std::size_t k = 0; k < reg.path.size(); ++k)
            os << (k ? "," : "") << reg.path[k];
        os << ") level=" << reg.level << " contained=" << reg.contained << " set=" << reg.set.size()
           << " ancestors=" << reg.ancestors.size() << " box=[" << reg.lo[0] << "," << reg.hi[0] << "]x["
           << reg.lo[1] << "," << reg.hi[1] << "]\n";
    }
    return os.str();
}

/// Maps between input (model) indexing and the hierarchy's global order.
class Ordering {
public:
    Ordering() = default;
    explicit Ordering(std::vector<index_t> order) : order_(std::move(order)), inverse_(order_.size()) {
        for (std::size_t k = 0; k < order_.size(); ++k)
            inverse_[order_[k]] = static_cast<index_t>(k);
    }
    static Ordering identity(std::size_t n) {
        std::vector<index_t> o(n);
        std::iota(o.begin(), o.end(), index_t{0});
        return Ordering(std::move(o));
    }

    std::size_t size() const noexcept { return order_.size(); }
    index_t input_of(index_t k) const { return order_[k]; }
    index_t rank_of(index_t input) const { return inverse_[input]; }

    /// x given in input order -> x in hierarchy order.
    Vector to_pattern(const Vector& x) const {
        Vector out(x.size());
        for (std::size_t k = 0; k < order_.size(); ++k)
            out[static_cast<Eigen::Index>(k)] = x[order_[k]];
        return out;
    }
    Vector to_input(const Vector& x) const {
        Vector out(x.size());
        for (std::size_t k = 0; k < order_.size(); ++k)
            out[order_[k]] = x[static_cast<Eigen::Index>(k)];
        return out;
    }

    /// P A P^T for a row-major sparse matrix given in input order.
    Eigen::SparseMatrix<double, Eigen::RowMajor> to_pattern(const Eigen::SparseMatrix<double, Eigen::RowMajor>& a) const {
        std::vector<Eigen::Triplet<double>> trips;
        trips.reserve(static_cast<std::size_t>(a.nonZeros()));
        for (Eigen::Index r = 0; r < a.outerSize(); ++r)
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(a, r); it; ++it)
                trips.emplace_back(inverse_[static_cast<std::size_t>(it.row())],
                                   inverse_[static_cast<std::size_t>(it.col())], it.value());
        Eigen::SparseMatrix<double, Eigen::RowMajor> out(a.rows(), a.cols());
        out.setFromTriplets(trips.begin(), trips.end());
        return out;
    }

    template <EntryOracle F>
    EntryFn to_pattern(F f) const {
        return [f = std::move(f), order = order_](index_t i, index_t j) { return static_cast<double>(f(order[i], order[j])); };
    }

    const std::vector<index_t>& order() const noexcept { return order_; }

private:
    std::vector<index_t> order_;
    std::vector<index_t> inverse_;
};

inline Ordering ordering_of(const Hierarchy& h) { return Ordering(h.global_order); }

} // namespace hvf
