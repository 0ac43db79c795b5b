#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hvfilter/sparse_core.hpp"

namespace hvf {

/// Gaussian observations y_i ~ N(x_i, tau_i^2) at a subset of indices (H selects rows).
struct GaussianObsModel {
    std::vector<index_t> indices;
    Vector values;
    Vector noise_vars;

    std::size_t size() const noexcept { return indices.size(); }

    void validate(index_t n) const {
        if (values.size() != static_cast<Eigen::Index>(indices.size()) ||
            noise_vars.size() != static_cast<Eigen::Index>(indices.size()))
            throw std::invalid_argument("observation model: indices, values and noise variances differ in length");
        std::vector<char> seen(n, 0);
        for (std::size_t k = 0; k < indices.size(); ++k) {
            const auto i = indices[k];
            if (i >= n)
                throw std::invalid_argument("observation model: index " + std::to_string(i) + " out of range");
            if (seen[i])
                throw std::invalid_argument("observation model: duplicate index " + std::to_string(i));
            seen[i] = 1;
            const auto kk = static_cast<Eigen::Index>(k);
            if (!(noise_vars[kk] > 0.0) || !std::isfinite(noise_vars[kk]))
                throw std::invalid_argument("observation model: noise variance must be positive at index " +
                                            std::to_string(i));
            if (!std::isfinite(values[kk]))
                throw std::invalid_argument("observation model: non-finite value at index " + std::to_string(i));
        }
    }

    /// diag(H^T R^{-1} H) as a length-n vector.
    Vector precision_diagonal(index_t n) const {
        Vector d = Vector::Zero(n);
        for (std::size_t k = 0; k < indices.size(); ++k)
            d[indices[k]] = 1.0 / noise_vars[static_cast<Eigen::Index>(k)];
        return d;
    }
};

/// p(x | y) = N(mean, L L^T) with U = L^{-T}.
struct PosteriorResult {
    Vector mean;
    SparseLowerTri L;
    SparseUpperTri U;
};

/// Prior factors computed once and reused across updates: L = ichol(Sigma, S), U = L^{-T}, U U^T on S.
struct HvPrior {
    Vector mean;
    SparseLowerTri L;
    SparseUpperTri U;
    SparseSymmetric gram;

    index_t n() const { return L.n(); }
    const PatternPtr& pattern() const noexcept { return L.pattern_ptr(); }
};

namespace detail {

template <typename Fn>
auto staged(const char* stage, Fn&& fn) {
    try {
        return fn();
    } catch (const FactorizationError& e) {
        if (!e.stage().empty())
            throw;
        throw e.labelled(stage);
    } catch (const PatternViolation& e) {
        throw PatternViolation(std::string(stage) + ": " + e.what());
    }
}

inline void check_mean(const Vector& mu, index_t n) {
    if (mu.size() != static_cast<Eigen::Index>(n))
        throw std::invalid_argument("prior mean has length " + std::to_string(mu.size()) + ", expected " +
                                    std::to_string(n));
}

} // namespace detail

/// Prior from an existing covariance factor.
inline HvPrior make_prior(Vector mu, SparseLowerTri l) {
    detail::check_mean(mu, l.n());
    HvPrior p;
    p.mean = std::move(mu);
    p.U = detail::staged("invert", [&] { return invert_transpose_lower(l); });
    p.gram = detail::staged("gram", [&] { return pattern_restricted_gram(p.U); });
    p.L = std::move(l);
    return p;
}

template <EntryOracle F>
HvPrior make_prior(Vector mu, const F& sigma, const PatternPtr& s, const IcholOptions& opts = {}) {
    auto l = detail::staged("ichol", [&] { return ichol(sigma, s, opts); });
    return make_prior(std::move(mu), std::move(l));
}

/// Gaussian update of an HV prior: Lambda = U U^T + H^T R^{-1} H, U~ = rchol(Lambda), L~ = U~^{-T},
/// mean by two triangular solves.
inline PosteriorResult hv_update(const HvPrior& prior, const GaussianObsModel& obs) {
    const index_t n = prior.n();
    obs.validate(n);
    if (obs.size() == 0)
        return {prior.mean, prior.L, prior.U};

    SparseSymmetric lambda = prior.gram;
    {
        const auto& pat = lambda.pattern();
        auto v = lambda.lower().values();
        for (std::size_t k = 0; k < obs.size(); ++k)
            v[pat.diag_pos(obs.indices[k])] += 1.0 / obs.noise_vars[static_cast<Eigen::Index>(k)];
    }
    PosteriorResult r;
    r.U = detail::staged("reverse_cholesky", [&] { return reverse_cholesky(lambda); });
    r.L = detail::staged("invert", [&] { return invert_transpose_upper(r.U); });

    Vector b = Vector::Zero(n);
    for (std::size_t k = 0; k < obs.size(); ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        const auto i = obs.indices[k];
        b[i] = (obs.values[kk] - prior.mean[i]) / obs.noise_vars[kk];
    }
    r.mean = prior.mean + r.U.precision_solve(b);
    return r;
}

/// Posterior inference under the HV prior N(mu, Sigma-hat) with Sigma read only on S.
template <EntryOracle F>
PosteriorResult hv_posterior(const GaussianObsModel& obs, const PatternPtr& s, const Vector& mu, const F& sigma,
                             const IcholOptions& opts = {}) {
    return hv_update(make_prior(mu, sigma, s, opts), obs);
}

/// log N(x; mu, L L^T).
inline double prior_density(const Vector& x, const Vector& mu, const SparseLowerTri& l) {
    return factor_logpdf(x, mu, invert_transpose_lower(l));
}

/// Diagonal of L L^T.
inline Vector marginal_variances(const SparseLowerTri& l) {
    Vector v = l.row_norms();
    return v.array().square();
}

} // namespace hvf
