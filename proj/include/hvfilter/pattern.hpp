#pragma once

#include <algorithm>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hvfilter/types.hpp"

namespace hvf {

/// Lower-triangular boolean pattern S. Row i lists the sorted column indices j <= i with S(i,j) = 1;
/// the diagonal is always present and therefore always the last entry of its row.
///
/// A column-oriented view (rows of each column plus the position of that entry in the row-major
/// value layout) is built once at construction, so factors that live on the pattern can be walked
/// both ways without re-deriving structure.
class SparsityPattern {
public:
    SparsityPattern() = default;

    /// Validates and packs per-row column lists. Rows need not be sorted; duplicates are rejected.
    static SparsityPattern from_rows(std::vector<std::vector<index_t>> rows) {
        SparsityPattern s;
        const auto n = rows.size();
        s.n_ = static_cast<index_t>(n);
        s.row_ptr_.assign(n + 1, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto& r = rows[i];
            std::sort(r.begin(), r.end());
            if (std::adjacent_find(r.begin(), r.end()) != r.end())
                throw std::invalid_argument("pattern row " + std::to_string(i) + " has duplicate columns");
            if (r.empty() || r.back() != i)
                throw std::invalid_argument("pattern row " + std::to_string(i) + " must contain its diagonal and no upper entries");
            s.row_ptr_[i + 1] = s.row_ptr_[i] + r.size();
        }
        s.cols_.reserve(s.row_ptr_[n]);
        for (auto& r : rows)
            s.cols_.insert(s.cols_.end(), r.begin(), r.end());
        s.finalize();
        return s;
    }

    /// Full lower triangle (the dense configuration).
    static SparsityPattern dense(index_t n) {
        std::vector<std::vector<index_t>> rows(n);
        for (index_t i = 0; i < n; ++i) {
            rows[i].resize(i + 1);
            for (index_t j = 0; j <= i; ++j)
                rows[i][j] = j;
        }
        return from_rows(std::move(rows));
    }

    static SparsityPattern diagonal(index_t n) {
        std::vector<std::vector<index_t>> rows(n);
        for (index_t i = 0; i < n; ++i)
            rows[i] = {i};
        return from_rows(std::move(rows));
    }

    index_t n() const noexcept { return n_; }
    std::size_t nnz() const noexcept { return cols_.size(); }

    std::span<const index_t> row(index_t i) const {
        return {cols_.data() + row_ptr_[i], cols_.data() + row_ptr_[i + 1]};
    }
    std::size_t row_begin(index_t i) const noexcept { return row_ptr_[i]; }
    std::size_t row_end(index_t i) const noexcept { return row_ptr_[i + 1]; }
    std::size_t diag_pos(index_t i) const noexcept { return row_ptr_[i + 1] - 1; }

    /// Rows k >= j with S(k,j) = 1, ascending (the diagonal comes first).
    std::span<const index_t> col(index_t j) const {
        return {col_rows_.data() + col_ptr_[j], col_rows_.data() + col_ptr_[j + 1]};
    }
    /// Row-major value positions aligned with col(j).
    std::span<const std::size_t> col_positions(index_t j) const {
        return {col_pos_.data() + col_ptr_[j], col_pos_.data() + col_ptr_[j + 1]};
    }
    std::size_t col_begin(index_t j) const noexcept { return col_ptr_[j]; }

    std::optional<std::size_t> position(index_t i, index_t j) const {
        if (i >= n_ || j > i)
            return std::nullopt;
        auto r = row(i);
        auto it = std::lower_bound(r.begin(), r.end(), j);
        if (it == r.end() || *it != j)
            return std::nullopt;
        return row_ptr_[i] + static_cast<std::size_t>(it - r.begin());
    }
    bool contains(index_t i, index_t j) const { return position(i, j).has_value(); }

    std::size_t max_row_nnz() const noexcept { return max_row_; }
    /// Largest conditioning set, i.e. max row size without the diagonal.
    std::size_t max_conditioning() const noexcept { return max_row_ == 0 ? 0 : max_row_ - 1; }

    /// True when reverse-ordered Cholesky of a matrix supported on S produces no fill outside S^T:
    /// for each row c with largest off-diagonal column p, row(c) \ {c, p} is contained in row(p).
    bool fill_closed() const noexcept { return fill_closed_; }

    const std::vector<std::size_t>& row_ptr() const noexcept { return row_ptr_; }
    const std::vector<index_t>& cols() const noexcept { return cols_; }

    friend bool operator==(const SparsityPattern& a, const SparsityPattern& b) {
        return a.n_ == b.n_ && a.row_ptr_ == b.row_ptr_ && a.cols_ == b.cols_;
    }

private:
    void finalize() {
        max_row_ = 0;
        for (index_t i = 0; i < n_; ++i)
            max_row_ = std::max<std::size_t>(max_row_, row_ptr_[i + 1] - row_ptr_[i]);

        col_ptr_.assign(static_cast<std::size_t>(n_) + 1, 0);
        for (auto j : cols_)
            ++col_ptr_[j + 1];
        for (index_t j = 0; j < n_; ++j)
            col_ptr_[j + 1] += col_ptr_[j];
        col_rows_.resize(cols_.size());
        col_pos_.resize(cols_.size());
        std::vector<std::size_t> next(col_ptr_.begin(), col_ptr_.end() - 1);
        for (index_t i = 0; i < n_; ++i) {
            for (auto p = row_ptr_[i]; p < row_ptr_[i + 1]; ++p) {
                auto slot = next[cols_[p]]++;
                col_rows_[slot] = i;
                col_pos_[slot] = p;
            }
        }

        fill_closed_ = true;
        for (index_t c = 0; c < n_ && fill_closed_; ++c) {
            auto r = row(c);
            if (r.size() < 3)
                continue;
            const index_t parent = r[r.size() - 2];
            auto rp = row(parent);
            fill_closed_ = std::includes(rp.begin(), rp.end(), r.begin(), r.end() - 2);
        }
    }

    index_t n_ = 0;
    std::vector<std::size_t> row_ptr_{0};
    std::vector<index_t> cols_;
    std::vector<std::size_t> col_ptr_{0};
    std::vector<index_t> col_rows_;
    std::vector<std::size_t> col_pos_;
    std::size_t max_row_ = 0;
    bool fill_closed_ = true;
};

using PatternPtr = std::shared_ptr<const SparsityPattern>;

inline PatternPtr share(SparsityPattern s) {
    return std::make_shared<const SparsityPattern>(std::move(s));
}

} // namespace hvf
