#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hvfilter/hv_inference.hpp"

namespace hvf {

enum class Family { gaussian, bernoulli_logit, poisson_log, gamma_log };

struct LikelihoodFamily {
    Family kind = Family::gaussian;
    double tau2 = 1.0;  ///< Gaussian noise variance
    double shape = 2.0; ///< Gamma shape a

    static LikelihoodFamily gaussian(double tau2) { return {Family::gaussian, tau2, 2.0}; }
    static LikelihoodFamily bernoulli() { return {Family::bernoulli_logit, 1.0, 2.0}; }
    static LikelihoodFamily poisson() { return {Family::poisson_log, 1.0, 2.0}; }
    static LikelihoodFamily gamma(double shape = 2.0) { return {Family::gamma_log, 1.0, shape}; }

    std::string_view name() const noexcept {
        switch (kind) {
        case Family::gaussian: return "gaussian";
        case Family::bernoulli_logit: return "bernoulli";
        case Family::poisson_log: return "poisson";
        case Family::gamma_log: return "gamma";
        }
        return "unknown";
    }

    static LikelihoodFamily parse(std::string_view name, double tau2 = 1.0, double shape = 2.0) {
        if (name == "gaussian")
            return gaussian(tau2);
        if (name == "bernoulli")
            return bernoulli();
        if (name == "poisson")
            return poisson();
        if (name == "gamma")
            return gamma(shape);
        throw std::invalid_argument("unknown likelihood family '" + std::string(name) + "'");
    }

    void validate() const {
        if (kind == Family::gaussian && !(tau2 > 0.0))
            throw std::invalid_argument("gaussian family needs tau2 > 0");
        if (kind == Family::gamma_log && !(shape > 0.0))
            throw std::invalid_argument("gamma family needs shape > 0");
    }
};

/// Log-density and its first derivative u and negative inverse second derivative d, in the latent x.
struct FamilyDerivatives {
    double loglik;
    double u;
    double d;
};

inline constexpr double bernoulli_clamp = 1e-12;

namespace detail {

inline void check_support(const LikelihoodFamily& fam, double y) {
    const auto bad = [&] {
        throw std::invalid_argument(std::string(fam.name()) + " family: observation " + std::to_string(y) +
                                    " outside support");
    };
    if (!std::isfinite(y))
        bad();
    switch (fam.kind) {
    case Family::gaussian: break;
    case Family::bernoulli_logit:
        if (y != 0.0 && y != 1.0)
            bad();
        break;
    case Family::poisson_log:
        if (y < 0.0 || y != std::floor(y))
            bad();
        break;
    case Family::gamma_log:
        if (!(y > 0.0))
            bad();
        break;
    }
}

inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

} // namespace detail

inline double loglik(const LikelihoodFamily& fam, double y, double x) {
    detail::check_support(fam, y);
    switch (fam.kind) {
    case Family::gaussian:
        return -0.5 * std::log(2.0 * std::numbers::pi * fam.tau2) - 0.5 * (y - x) * (y - x) / fam.tau2;
    case Family::bernoulli_logit: return y * x - detail::softplus(x);
    case Family::poisson_log: return y * x - std::exp(x) - std::lgamma(y + 1.0);
    case Family::gamma_log: {
        const double a = fam.shape;
        return a * std::log(a) - a * x + (a - 1.0) * std::log(y) - a * y * std::exp(-x) - std::lgamma(a);
    }
    }
    return std::numeric_limits<double>::quiet_NaN();
}

inline FamilyDerivatives family_derivatives(const LikelihoodFamily& fam, double y, double x) {
    const double ll = loglik(fam, y, x);
    switch (fam.kind) {
    case Family::gaussian: return {ll, (y - x) / fam.tau2, fam.tau2};
    case Family::bernoulli_logit: {
        const double p = 1.0 / (1.0 + std::exp(-x));
        const double pc = std::clamp(p, bernoulli_clamp, 1.0 - bernoulli_clamp);
        return {ll, y - p, 1.0 / (pc * (1.0 - pc))};
    }
    case Family::poisson_log: return {ll, y - std::exp(x), std::exp(-x)};
    case Family::gamma_log: {
        const double a = fam.shape;
        return {ll, -a + a * y * std::exp(-x), std::exp(x) / (a * y)};
    }
    }
    return {ll, 0.0, 0.0};
}

/// Observations at one time: values y_i at indices I with one family per observation.
struct ObservationSet {
    std::vector<index_t> indices;
    Vector values;
    std::vector<LikelihoodFamily> families;

    static ObservationSet uniform(std::vector<index_t> idx, Vector y, const LikelihoodFamily& fam) {
        ObservationSet o;
        o.families.assign(idx.size(), fam);
        o.indices = std::move(idx);
        o.values = std::move(y);
        return o;
    }

    std::size_t size() const noexcept { return indices.size(); }

    void validate(index_t n) const {
        if (values.size() != static_cast<Eigen::Index>(indices.size()) || families.size() != indices.size())
            throw std::invalid_argument("observation set: indices, values and families differ in length");
        for (std::size_t k = 0; k < indices.size(); ++k) {
            if (indices[k] >= n)
                throw std::invalid_argument("observation set: index " + std::to_string(indices[k]) + " out of range");
            families[k].validate();
            detail::check_support(families[k], values[static_cast<Eigen::Index>(k)]);
        }
    }

    bool all_gaussian() const {
        for (const auto& f : families)
            if (f.kind != Family::gaussian)
                return false;
        return true;
    }

    /// log p(y | x), summed over observations.
    double loglik(const Vector& x) const {
        double s = 0.0;
        for (std::size_t k = 0; k < indices.size(); ++k)
            s += hvf::loglik(families[k], values[static_cast<Eigen::Index>(k)], x[indices[k]]);
        return s;
    }

    /// Same observations, relabelled through a permutation (rank_of maps input index -> pattern index).
    template <typename RankOf>
    ObservationSet relabelled(RankOf&& rank_of) const {
        ObservationSet o = *this;
        for (auto& i : o.indices)
            i = rank_of(i);
        return o;
    }
};

/// Gaussian pseudo-observations t = x + d u with variances d.
struct PseudoData {
    Vector t;
    Vector d;
};

inline PseudoData pseudo_data(const ObservationSet& obs, const Vector& x) {
    PseudoData p{Vector(obs.size()), Vector(obs.size())};
    for (std::size_t k = 0; k < obs.size(); ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        const auto i = obs.indices[k];
        const auto fd = family_derivatives(obs.families[k], obs.values[kk], x[i]);
        if (obs.families[k].kind == Family::gaussian) {
            p.t[kk] = obs.values[kk];
            p.d[kk] = obs.families[k].tau2;
        } else {
            p.t[kk] = x[i] + fd.d * fd.u;
            p.d[kk] = fd.d;
        }
        if (!std::isfinite(p.t[kk]) || !std::isfinite(p.d[kk]) || !(p.d[kk] > 0.0))
            throw std::runtime_error("non-finite pseudo-data at index " + std::to_string(i));
    }
    return p;
}

struct HvlOptions {
    double eps = 1e-8;
    int max_iterations = 50;
    bool step_halving = true; ///< halve a full Newton step until the log-posterior does not decrease
    bool keep_trace = false;
};

struct HvlResult : PosteriorResult {
    int iterations = 0;
    double last_step = 0.0;
    std::vector<Vector> trace; ///< x^(0), x^(1), ... when requested
};

/// log p(y | x) + log N(x; mu, Sigma-hat), the objective the Newton loop ascends.
inline double hv_log_posterior(const ObservationSet& obs, const HvPrior& prior, const Vector& x) {
    return obs.loglik(x) + factor_logpdf(x, prior.mean, prior.U);
}

/// Vecchia-Laplace: Newton iterations on pseudo-data, each an HV Gaussian update.
inline HvlResult hvl(const ObservationSet& obs, const HvPrior& prior, const HvlOptions& opts = {}) {
    const index_t n = prior.n();
    obs.validate(n);
    HvlResult res;
    Vector x = prior.mean;
    if (opts.keep_trace)
        res.trace.push_back(x);
    const bool single = obs.size() == 0 || obs.all_gaussian();

    for (int it = 1; it <= opts.max_iterations; ++it) {
        const auto pd = pseudo_data(obs, x);
        GaussianObsModel g{obs.indices, pd.t, pd.d};
        PosteriorResult post = hv_update(prior, g);
        Vector xn = post.mean;
        if (opts.step_halving && !single) {
            const double f0 = hv_log_posterior(obs, prior, x);
            for (int h = 0; h < 60 && !(hv_log_posterior(obs, prior, xn) >= f0); ++h)
                xn = 0.5 * (x + xn);
        }
        const double xnorm = x.norm();
        const double step = xnorm > 0.0 ? (xn - x).norm() / xnorm : (xn - x).norm();
        if (!std::isfinite(step))
            throw std::runtime_error("hvl: non-finite iterate at iteration " + std::to_string(it));
        x = std::move(xn);
        if (opts.keep_trace)
            res.trace.push_back(x);
        res.iterations = it;
        res.last_step = step;
        res.L = std::move(post.L);
        res.U = std::move(post.U);
        if (single || step < opts.eps) {
            res.mean = std::move(x);
            return res;
        }
    }
    throw std::runtime_error("hvl: no convergence after " + std::to_string(opts.max_iterations) +
                             " iterations (last relative step " + std::to_string(res.last_step) + ")");
}

template <EntryOracle F>
HvlResult hvl(const ObservationSet& obs, const PatternPtr& s, const Vector& mu, const F& sigma,
              const HvlOptions& opts = {}) {
    return hvl(obs, make_prior(mu, sigma, s), opts);
}

} // namespace hvf
