#pragma once

#include <algorithm>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <iomanip>

#include "hvfilter/pattern.hpp"
#include "hvfilter/sparse_core.hpp"

namespace hvf::mm {

/// Lower-triangular pattern, coordinate pattern general, 1-based.
inline void write_pattern(std::ostream& os, const SparsityPattern& s) {
    os << "%%MatrixMarket matrix coordinate pattern general\n";
    os << s.n() << ' ' << s.n() << ' ' << s.nnz() << '\n';
    for (index_t i = 0; i < s.n(); ++i)
        for (auto j : s.row(i))
            os << i + 1 << ' ' << j + 1 << '\n';
}

inline void write_lower(std::ostream& os, const SparseLowerTri& l) {
    const auto& s = l.pattern();
    os << "%%MatrixMarket matrix coordinate real general\n";
    os << s.n() << ' ' << s.n() << ' ' << s.nnz() << '\n';
    os << std::setprecision(17);
    for (index_t i = 0; i < s.n(); ++i) {
        auto cols = s.row(i);
        auto vals = l.row_values(i);
        for (std::size_t q = 0; q < cols.size(); ++q)
            os << i + 1 << ' ' << cols[q] + 1 << ' ' << vals[q] << '\n';
    }
}

/// Writes U itself (upper triangle), not its stored transpose.
inline void write_upper(std::ostream& os, const SparseUpperTri& u) {
    const auto& s = u.pattern();
    os << "%%MatrixMarket matrix coordinate real general\n";
    os << s.n() << ' ' << s.n() << ' ' << s.nnz() << '\n';
    os << std::setprecision(17);
    for (index_t i = 0; i < s.n(); ++i) {
        auto cols = s.row(i);
        auto vals = u.transpose().row_values(i);
        for (std::size_t q = 0; q < cols.size(); ++q)
            os << cols[q] + 1 << ' ' << i + 1 << ' ' << vals[q] << '\n';
    }
}

/// Lower triangle of a symmetric matrix known on S.
inline void write_symmetric(std::ostream& os, const SparseSymmetric& a) { write_lower(os, a.lower()); }

struct Triplets {
    index_t rows = 0, cols = 0;
    bool pattern_only = false;
    std::vector<std::tuple<index_t, index_t, double>> entries; ///< 0-based
};

inline Triplets read_triplets(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("%%MatrixMarket", 0) != 0)
        throw std::runtime_error("matrix market: missing header");
    std::istringstream hs(line);
    std::string banner, object, format, field, symmetry;
    hs >> banner >> object >> format >> field >> symmetry;
    if (object != "matrix" || format != "coordinate")
        throw std::runtime_error("matrix market: only coordinate matrices are supported");
    if (field != "real" && field != "pattern" && field != "integer")
        throw std::runtime_error("matrix market: unsupported field '" + field + "'");
    if (symmetry != "general")
        throw std::runtime_error("matrix market: unsupported symmetry '" + symmetry + "'");
    Triplets t;
    t.pattern_only = field == "pattern";
    while (std::getline(is, line))
        if (!line.empty() && line[0] != '%')
            break;
    std::size_t nnz = 0;
    {
        std::istringstream ss(line);
        if (!(ss >> t.rows >> t.cols >> nnz))
            throw std::runtime_error("matrix market: bad size line");
    }
    t.entries.reserve(nnz);
    for (std::size_t k = 0; k < nnz; ++k) {
        std::size_t i = 0, j = 0;
        double v = 1.0;
        if (!(is >> i >> j))
            throw std::runtime_error("matrix market: truncated entry list");
        if (!t.pattern_only && !(is >> v))
            throw std::runtime_error("matrix market: missing value");
        if (i < 1 || j < 1 || i > t.rows || j > t.cols)
            throw std::runtime_error("matrix market: index out of range");
        t.entries.emplace_back(static_cast<index_t>(i - 1), static_cast<index_t>(j - 1), v);
    }
    return t;
}

/// Reads a lower-triangular factor (or a transposed upper one when `transpose` is set).
inline SparseLowerTri read_lower(std::istream& is, bool transpose = false) {
    auto t = read_triplets(is);
    if (t.rows != t.cols)
        throw std::runtime_error("matrix market: factor must be square");
    if (transpose)
        for (auto& [i, j, v] : t.entries)
            std::swap(i, j);
    std::sort(t.entries.begin(), t.entries.end());
    std::vector<std::vector<index_t>> rows(t.rows);
    for (const auto& [i, j, v] : t.entries) {
        if (j > i)
            throw std::runtime_error("matrix market: entry above the diagonal in a lower factor");
        rows[i].push_back(j);
    }
    auto pattern = share(SparsityPattern::from_rows(std::move(rows)));
    std::vector<double> vals;
    vals.reserve(t.entries.size());
    for (const auto& e : t.entries)
        vals.push_back(std::get<2>(e));
    return SparseLowerTri(pattern, std::move(vals));
}

inline SparseUpperTri read_upper(std::istream& is) { return SparseUpperTri::from_transpose(read_lower(is, true)); }

inline SparsityPattern read_pattern(std::istream& is) { return read_lower(is).pattern(); }

} // namespace hvf::mm
