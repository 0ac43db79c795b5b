#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "hvfilter/pattern.hpp"
#include "hvfilter/types.hpp"

namespace hvf {

using RowSparse = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Values on a fixed lower-triangular pattern, stored row-major in pattern order.
class SparseLowerTri {
public:
    SparseLowerTri() = default;
    explicit SparseLowerTri(PatternPtr pattern) : pattern_(std::move(pattern)), values_(pattern_->nnz(), 0.0) { }
    SparseLowerTri(PatternPtr pattern, std::vector<double> values) :
        pattern_(std::move(pattern)), values_(std::move(values)) {
        if (values_.size() != pattern_->nnz())
            throw std::invalid_argument("SparseLowerTri: value count does not match pattern");
    }

    const SparsityPattern& pattern() const { return *pattern_; }
    const PatternPtr& pattern_ptr() const noexcept { return pattern_; }
    index_t n() const { return pattern_ ? pattern_->n() : 0; }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    std::span<const double> row_values(index_t i) const {
        return {values_.data() + pattern_->row_begin(i), values_.data() + pattern_->row_end(i)};
    }
    double diag(index_t i) const { return values_[pattern_->diag_pos(i)]; }

    /// Entry lookup; zero off the pattern and above the diagonal.
    double operator()(index_t i, index_t j) const {
        auto p = pattern_->position(i, j);
        return p ? values_[*p] : 0.0;
    }

    Matrix to_dense() const {
        const auto n = this->n();
        Matrix d = Matrix::Zero(n, n);
        for (index_t i = 0; i < n; ++i) {
            auto cols = pattern_->row(i);
            auto vals = row_values(i);
            for (std::size_t q = 0; q < cols.size(); ++q)
                d(i, cols[q]) = vals[q];
        }
        return d;
    }

    Vector multiply(const Vector& x) const {
        check_size(x);
        Vector out(n());
        for (index_t i = 0; i < n(); ++i) {
            auto cols = pattern_->row(i);
            auto vals = row_values(i);
            double s = 0.0;
            for (std::size_t q = 0; q < cols.size(); ++q)
                s += vals[q] * x[cols[q]];
            out[i] = s;
        }
        return out;
    }

    Vector transpose_multiply(const Vector& x) const {
        check_size(x);
        Vector out = Vector::Zero(n());
        for (index_t i = 0; i < n(); ++i) {
            auto cols = pattern_->row(i);
            auto vals = row_values(i);
            for (std::size_t q = 0; q < cols.size(); ++q)
                out[cols[q]] += vals[q] * x[i];
        }
        return out;
    }

    /// Forward substitution: L z = b.
    Vector solve(const Vector& b) const {
        check_size(b);
        Vector z(n());
        for (index_t i = 0; i < n(); ++i) {
            auto cols = pattern_->row(i);
            auto vals = row_values(i);
            double s = b[i];
            for (std::size_t q = 0; q + 1 < cols.size(); ++q)
                s -= vals[q] * z[cols[q]];
            z[i] = s / vals.back();
        }
        return z;
    }

    /// Backward substitution: L^T z = b.
    Vector transpose_solve(const Vector& b) const {
        check_size(b);
        Vector z = b;
        for (index_t i = n(); i-- > 0;) {
            auto cols = pattern_->row(i);
            auto vals = row_values(i);
            z[i] /= vals.back();
            const double zi = z[i];
            for (std::size_t q = 0; q + 1 < cols.size(); ++q)
                z[cols[q]] -= vals[q] * zi;
        }
        return z;
    }

    /// Euclidean norms of the rows: sqrt(diag(L L^T)).
    Vector row_norms() const {
        Vector out(n());
        for (index_t i = 0; i < n(); ++i) {
            double s = 0.0;
            for (double v : row_values(i))
                s += v * v;
            out[i] = std::sqrt(s);
        }
        return out;
    }

private:
    void check_size(const Vector& x) const {
        if (x.size() != static_cast<Eigen::Index>(n()))
            throw std::invalid_argument("dimension mismatch: vector of length " + std::to_string(x.size()) +
                                        " against factor of order " + std::to_string(n()));
    }

    PatternPtr pattern_;
    std::vector<double> values_;
};

/// Upper-triangular factor on S^T, stored as its transpose (a lower factor on S).
class SparseUpperTri {
public:
    SparseUpperTri() = default;
    static SparseUpperTri from_transpose(SparseLowerTri lower) {
        SparseUpperTri u;
        u.lower_ = std::move(lower);
        return u;
    }

    /// U^T, the storage view.
    const SparseLowerTri& transpose() const noexcept { return lower_; }
    const SparsityPattern& pattern() const { return lower_.pattern(); }
    const PatternPtr& pattern_ptr() const noexcept { return lower_.pattern_ptr(); }
    index_t n() const { return lower_.n(); }
    double diag(index_t i) const { return lower_.diag(i); }
    double operator()(index_t i, index_t j) const { return lower_(j, i); }
    Matrix to_dense() const { return lower_.to_dense().transpose(); }

    /// U^T x
    Vector transpose_multiply(const Vector& x) const { return lower_.multiply(x); }
    /// U x
    Vector multiply(const Vector& x) const { return lower_.transpose_multiply(x); }

    /// Solves (U U^T) z = b with one backward and one forward substitution.
    Vector precision_solve(const Vector& b) const { return lower_.solve(lower_.transpose_solve(b)); }

private:
    SparseLowerTri lower_;
};

/// Symmetric matrix known on S (lower triangle stored). Used for precisions and forecast covariances.
class SparseSymmetric {
public:
    SparseSymmetric() = default;
    explicit SparseSymmetric(SparseLowerTri lower) : lower_(std::move(lower)) { }

    const SparseLowerTri& lower() const noexcept { return lower_; }
    SparseLowerTri& lower() noexcept { return lower_; }
    const SparsityPattern& pattern() const { return lower_.pattern(); }
    const PatternPtr& pattern_ptr() const noexcept { return lower_.pattern_ptr(); }
    index_t n() const { return lower_.n(); }

    double operator()(index_t i, index_t j) const { return i >= j ? lower_(i, j) : lower_(j, i); }

    Matrix to_dense() const {
        Matrix d = lower_.to_dense();
        d.triangularView<Eigen::StrictlyUpper>() = d.transpose().triangularView<Eigen::StrictlyUpper>();
        return d;
    }

private:
    SparseLowerTri lower_;
};

/// General sparse rows with sorted column indices, e.g. the forecast factor E L.
struct SparseRows {
    index_t rows = 0;
    index_t cols = 0;
    std::vector<std::size_t> row_ptr{0};
    std::vector<index_t> col;
    std::vector<double> val;

    std::span<const index_t> row_cols(index_t i) const {
        return {col.data() + row_ptr[i], col.data() + row_ptr[i + 1]};
    }
    std::span<const double> row_vals(index_t i) const {
        return {val.data() + row_ptr[i], val.data() + row_ptr[i + 1]};
    }

    static SparseRows from_lower(const SparseLowerTri& l) {
        SparseRows r;
        r.rows = r.cols = l.n();
        r.row_ptr = l.pattern().row_ptr();
        r.col = l.pattern().cols();
        r.val.assign(l.values().begin(), l.values().end());
        return r;
    }

    Matrix to_dense() const {
        Matrix d = Matrix::Zero(rows, cols);
        for (index_t i = 0; i < rows; ++i) {
            auto c = row_cols(i);
            auto v = row_vals(i);
            for (std::size_t q = 0; q < c.size(); ++q)
                d(i, c[q]) = v[q];
        }
        return d;
    }
};

struct IcholOptions {
    /// Nonnegative inflation added to every diagonal entry before factorizing. Off by default.
    double diagonal_inflation = 0.0;
};

namespace detail {

template <typename Entry>
SparseLowerTri ichol_impl(const PatternPtr& s, Entry&& entry, const IcholOptions& opts) {
    if (opts.diagonal_inflation < 0.0)
        throw std::invalid_argument("ichol: diagonal inflation must be nonnegative");
    const auto& pat = *s;
    const index_t n = pat.n();
    SparseLowerTri out(s);
    double* L = out.values().data();
    const index_t* cols = pat.cols().data();
    const std::size_t* rp = pat.row_ptr().data();
    std::vector<double> w(n, 0.0);

    for (index_t i = 0; i < n; ++i) {
        const std::size_t b = rp[i], e = rp[i + 1] - 1;
        double diag_sum = 0.0;
        for (std::size_t p = b; p < e; ++p) {
            const index_t j = cols[p];
            double sum = entry(i, p, j);
            // Row j holds only columns < j (plus its diagonal); w carries L(i, k) for computed k.
            const std::size_t jb = rp[j], je = rp[j + 1] - 1;
            for (std::size_t q = jb; q < je; ++q)
                sum -= L[q] * w[cols[q]];
            const double v = sum / L[je];
            L[p] = v;
            w[j] = v;
            diag_sum += v * v;
        }
        const double d = entry(i, e, i) + opts.diagonal_inflation - diag_sum;
        if (!(d > 0.0) || !std::isfinite(d))
            throw FactorizationError("not positive definite on pattern", i);
        L[e] = std::sqrt(d);
        for (std::size_t p = b; p < e; ++p)
            w[cols[p]] = 0.0;
    }
    return out;
}

} // namespace detail

/// Incomplete Cholesky on a fixed pattern. Only entries of `a` on S are ever requested, in
/// row-major pattern order; the diagonal update uses the standard sum of squared row entries.
template <EntryOracle F>
SparseLowerTri ichol(const F& a, const PatternPtr& s, const IcholOptions& opts = {}) {
    return detail::ichol_impl(
        s, [&](index_t i, std::size_t, index_t j) { return static_cast<double>(a(i, j)); }, opts);
}

/// Incomplete Cholesky of a matrix whose entries are already laid out on the same pattern.
inline SparseLowerTri ichol(const SparseSymmetric& a, const IcholOptions& opts = {}) {
    const double* v = a.lower().values().data();
    return detail::ichol_impl(a.pattern_ptr(), [v](index_t, std::size_t p, index_t) { return v[p]; }, opts);
}

/// L^{-1} restricted to L's own pattern. Exact whenever the inverse has no entries off the pattern,
/// which holds for hierarchical patterns.
inline SparseLowerTri invert_lower(const SparseLowerTri& l) {
    const auto& pat = l.pattern();
    const index_t n = pat.n();
    SparseLowerTri out(l.pattern_ptr());
    const double* L = l.values().data();
    double* V = out.values().data();
    const index_t* cols = pat.cols().data();
    const std::size_t* rp = pat.row_ptr().data();
    std::vector<double> acc(n, 0.0);

    for (index_t i = 0; i < n; ++i) {
        const std::size_t b = rp[i], e = rp[i + 1] - 1;
        const double lii = L[e];
        if (lii == 0.0 || !std::isfinite(lii))
            throw FactorizationError("zero diagonal in triangular inverse", i);
        // V(i,:) = (e_i - sum_{k<i} L(i,k) V(k,:)) / L(i,i)
        for (std::size_t p = b; p < e; ++p) {
            const index_t k = cols[p];
            const double lik = L[p];
            for (std::size_t q = rp[k]; q < rp[k + 1]; ++q)
                acc[cols[q]] += lik * V[q];
        }
        for (std::size_t p = b; p < e; ++p)
            V[p] = -acc[cols[p]] / lii;
        V[e] = 1.0 / lii;
        for (std::size_t p = b; p < e; ++p) {
            const index_t k = cols[p];
            for (std::size_t q = rp[k]; q < rp[k + 1]; ++q)
                acc[cols[q]] = 0.0;
        }
    }
    return out;
}

/// U = L^{-T} on S^T.
inline SparseUpperTri invert_transpose_lower(const SparseLowerTri& l) {
    return SparseUpperTri::from_transpose(invert_lower(l));
}

/// L = U^{-T} on S.
inline SparseLowerTri invert_transpose_upper(const SparseUpperTri& u) { return invert_lower(u.transpose()); }

/// Lambda = U U^T + diag(extra_diag), computed only on S. `extra_diag` is either empty or has one
/// nonnegative entry per variable (zero where nothing is observed).
inline SparseSymmetric pattern_restricted_gram(const SparseUpperTri& u, const Vector& extra_diag = Vector()) {
    const auto& pat = u.pattern();
    const index_t n = pat.n();
    if (extra_diag.size() != 0 && extra_diag.size() != static_cast<Eigen::Index>(n))
        throw std::invalid_argument("pattern_restricted_gram: extra_diag has wrong length");
    for (Eigen::Index i = 0; i < extra_diag.size(); ++i)
        if (!(extra_diag[i] >= 0.0))
            throw std::invalid_argument("pattern_restricted_gram: negative extra_diag at index " + std::to_string(i));

    SparseLowerTri lam(u.pattern_ptr());
    double* out = lam.values().data();
    const double* V = u.transpose().values().data();
    const index_t* cols = pat.cols().data();
    const std::size_t* rp = pat.row_ptr().data();

    // (V^T V)(a,b) = sum_k V(k,a) V(k,b): scatter the outer product of every row of V = U^T.
    for (index_t k = 0; k < n; ++k) {
        const std::size_t kb = rp[k], ke = rp[k + 1];
        for (std::size_t pa = kb; pa < ke; ++pa) {
            const index_t a = cols[pa];
            const double va = V[pa];
            std::size_t pos = rp[a];
            const std::size_t aend = rp[a + 1];
            for (std::size_t pb = kb; pb <= pa; ++pb) {
                const index_t b = cols[pb];
                while (pos < aend && cols[pos] < b)
                    ++pos;
                if (pos == aend || cols[pos] != b)
                    throw PatternViolation("pattern violation: U U^T has entry (" + std::to_string(a) + "," +
                                           std::to_string(b) + ") outside S");
                out[pos] += va * V[pb];
            }
        }
    }
    if (extra_diag.size() != 0)
        for (index_t i = 0; i < n; ++i)
            out[pat.diag_pos(i)] += extra_diag[i];
    return SparseSymmetric(std::move(lam));
}

/// Cholesky factor of a sparse precision under reverse ordering: U upper-triangular on S^T with
/// U U^T = Lambda. Columns of U^T are produced from the last index backwards.
inline SparseUpperTri reverse_cholesky(const SparseSymmetric& lambda) {
    const auto& pat = lambda.pattern();
    if (!pat.fill_closed())
        throw PatternViolation("pattern violation: reverse-ordered factorization would fill outside S^T");
    const index_t n = pat.n();
    const double* lam = lambda.lower().values().data();
    std::vector<double> cvals(pat.nnz(), 0.0);
    std::vector<double> w(n, 0.0);

    for (index_t a = n; a-- > 0;) {
        auto ca = pat.col(a);
        auto pa = pat.col_positions(a);
        const std::size_t abeg = pat.col_begin(a);
        double diag_sum = 0.0;
        for (std::size_t idx = ca.size(); idx-- > 1;) {
            const index_t k = ca[idx];
            double sum = lam[pa[idx]];
            auto ck = pat.col(k);
            const std::size_t kbeg = pat.col_begin(k);
            for (std::size_t q = 1; q < ck.size(); ++q)
                sum -= cvals[kbeg + q] * w[ck[q]];
            const double v = sum / cvals[kbeg];
            cvals[abeg + idx] = v;
            w[k] = v;
            diag_sum += v * v;
        }
        const double d = lam[pa[0]] - diag_sum;
        if (!(d > 0.0) || !std::isfinite(d))
            throw FactorizationError("precision not positive definite", a);
        cvals[abeg] = std::sqrt(d);
        for (std::size_t idx = 1; idx < ca.size(); ++idx)
            w[ca[idx]] = 0.0;
    }

    SparseLowerTri vt(lambda.pattern_ptr());
    double* out = vt.values().data();
    for (index_t a = 0; a < n; ++a) {
        auto pa = pat.col_positions(a);
        const std::size_t abeg = pat.col_begin(a);
        for (std::size_t idx = 0; idx < pa.size(); ++idx)
            out[pa[idx]] = cvals[abeg + idx];
    }
    return SparseUpperTri::from_transpose(std::move(vt));
}

/// E L for a sparse evolution matrix E and a factor L; rows keep bounded support when E does.
inline SparseRows multiply(const RowSparse& e, const SparseLowerTri& l) {
    const index_t n = l.n();
    if (e.rows() != static_cast<Eigen::Index>(n) || e.cols() != static_cast<Eigen::Index>(n))
        throw std::invalid_argument("multiply: evolution matrix and factor dimensions differ");
    const auto& pat = l.pattern();
    const index_t* cols = pat.cols().data();
    const std::size_t* rp = pat.row_ptr().data();
    const double* L = l.values().data();

    SparseRows out;
    out.rows = out.cols = n;
    out.row_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
    std::vector<double> acc(n, 0.0);
    std::vector<char> mark(n, 0);
    std::vector<index_t> touched;
    touched.reserve(n);

    for (index_t i = 0; i < n; ++i) {
        for (RowSparse::InnerIterator it(e, i); it; ++it) {
            const auto k = static_cast<index_t>(it.col());
            const double eik = it.value();
            for (std::size_t q = rp[k]; q < rp[k + 1]; ++q) {
                const index_t c = cols[q];
                if (!mark[c]) {
                    mark[c] = 1;
                    touched.push_back(c);
                }
                acc[c] += eik * L[q];
            }
        }
        std::sort(touched.begin(), touched.end());
        for (auto c : touched) {
            out.col.push_back(c);
            out.val.push_back(acc[c]);
            acc[c] = 0.0;
            mark[c] = 0;
        }
        touched.clear();
        out.row_ptr[i + 1] = out.col.size();
    }
    return out;
}

/// Sigma(i,j) = F(i,:) F(j,:)^T + Q(i,j) for every (i,j) on S.
template <EntryOracle F>
SparseSymmetric pattern_restricted_forecast_cov(const SparseRows& rows, const F& q, const PatternPtr& s) {
    const auto& pat = *s;
    const index_t n = pat.n();
    if (rows.rows != n)
        throw std::invalid_argument("forecast covariance: factor rows do not match pattern order");
    SparseLowerTri out(s);
    double* v = out.values().data();
    std::vector<double> w(rows.cols, 0.0);
    for (index_t i = 0; i < n; ++i) {
        auto ci = rows.row_cols(i);
        auto vi = rows.row_vals(i);
        for (std::size_t t = 0; t < ci.size(); ++t)
            w[ci[t]] = vi[t];
        auto r = pat.row(i);
        const std::size_t base = pat.row_begin(i);
        for (std::size_t p = 0; p < r.size(); ++p) {
            const index_t j = r[p];
            auto cj = rows.row_cols(j);
            auto vj = rows.row_vals(j);
            double sum = 0.0;
            for (std::size_t t = 0; t < cj.size(); ++t)
                sum += vj[t] * w[cj[t]];
            v[base + p] = sum + static_cast<double>(q(i, j));
        }
        for (auto c : ci)
            w[c] = 0.0;
    }
    return SparseSymmetric(std::move(out));
}

/// log N(x; mean, (U U^T)^{-1}).
inline double factor_logpdf(const Vector& x, const Vector& mean, const SparseUpperTri& u) {
    if (x.size() != mean.size() || x.size() != static_cast<Eigen::Index>(u.n()))
        throw std::invalid_argument("factor_logpdf: dimension mismatch");
    const Vector z = u.transpose_multiply(x - mean);
    double logdet = 0.0;
    for (index_t i = 0; i < u.n(); ++i)
        logdet += std::log(u.diag(i));
    return -0.5 * static_cast<double>(x.size()) * std::log(2.0 * std::numbers::pi) + logdet - 0.5 * z.squaredNorm();
}

} // namespace hvf
