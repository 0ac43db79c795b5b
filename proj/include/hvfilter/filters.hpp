#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hvfilter/hv_inference.hpp"
#include "hvfilter/likelihoods.hpp"
#include "hvfilter/parallel.hpp"
#include "hvfilter/sparse_core.hpp"

namespace hvf {

/// Filtering (or forecast) distribution N(mean, L L^T) with U = L^{-T}, in pattern order.
struct FilterState {
    int t = 0;
    Vector mean;
    SparseLowerTri L;
    SparseUpperTri U;

    index_t n() const { return L.n(); }
};

template <EntryOracle F>
FilterState initial_state(const Vector& mu0, const F& sigma0, const PatternPtr& s) {
    auto prior = make_prior(mu0, sigma0, s);
    return {0, std::move(prior.mean), std::move(prior.L), std::move(prior.U)};
}

/// x_t = E x_{t-1} + N(0, Q), E sparse.
struct LinearEvolution {
    RowSparse E;
    EntryFn Q;
};

/// x_t = E(x_{t-1}) + N(0, Q). `jacobian_times(x, L)` returns dE(x) L.
struct NonlinearEvolution {
    std::function<Vector(const Vector&)> map;
    std::function<SparseRows(const Vector&, const SparseLowerTri&)> jacobian_times;
    EntryFn Q;

    static NonlinearEvolution from_linear(const LinearEvolution& lin) {
        auto e = std::make_shared<const RowSparse>(lin.E);
        return {[e](const Vector& x) { return Vector(*e * x); },
                [e](const Vector&, const SparseLowerTri& l) { return multiply(*e, l); }, lin.Q};
    }
};

/// J L for a dense Jacobian J; only the columns of J that meet nonzeros of L are touched.
inline SparseRows multiply(const RowMatrix& j, const SparseLowerTri& l) {
    const index_t n = l.n();
    if (j.rows() != static_cast<Eigen::Index>(n) || j.cols() != static_cast<Eigen::Index>(n))
        throw std::invalid_argument("multiply: Jacobian and factor dimensions differ");
    const auto& pat = l.pattern();
    const index_t* cols = pat.cols().data();
    const std::size_t* rp = pat.row_ptr().data();
    const double* L = l.values().data();
    SparseRows out;
    out.rows = out.cols = n;
    out.row_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
    out.col.reserve(static_cast<std::size_t>(n) * n);
    out.val.reserve(static_cast<std::size_t>(n) * n);
    std::vector<double> acc(n);
    for (index_t i = 0; i < n; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        const double* ji = j.data() + static_cast<std::size_t>(i) * n;
        for (index_t k = 0; k < n; ++k) {
            const double jik = ji[k];
            if (jik == 0.0)
                continue;
            for (std::size_t q = rp[k]; q < rp[k + 1]; ++q)
                acc[cols[q]] += jik * L[q];
        }
        for (index_t c = 0; c < n; ++c)
            if (acc[c] != 0.0) {
                out.col.push_back(c);
                out.val.push_back(acc[c]);
            }
        out.row_ptr[i + 1] = out.col.size();
    }
    return out;
}

/// Row storage of a dense product, exact zeros dropped.
inline SparseRows dense_rows(const RowMatrix& a) {
    SparseRows out;
    out.rows = static_cast<index_t>(a.rows());
    out.cols = static_cast<index_t>(a.cols());
    out.row_ptr.assign(static_cast<std::size_t>(a.rows()) + 1, 0);
    out.col.reserve(static_cast<std::size_t>(a.size()));
    out.val.reserve(static_cast<std::size_t>(a.size()));
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index c = 0; c < a.cols(); ++c)
            if (a(i, c) != 0.0) {
                out.col.push_back(static_cast<index_t>(c));
                out.val.push_back(a(i, c));
            }
        out.row_ptr[static_cast<std::size_t>(i) + 1] = out.col.size();
    }
    return out;
}

struct FilterOptions {
    HvlOptions hvl;
};

/// One forecast/update cycle. `forecast` carries the factors of the forecast distribution restricted
/// to S, which the integrated likelihood needs.
struct FilterStep {
    FilterState forecast;
    FilterState updated;
    int hvl_iterations = 0;
};

namespace detail {

inline FilterStep forecast_update(int t, Vector mean_f, const SparseRows& rows, const EntryFn& q,
                                  const ObservationSet& obs, const PatternPtr& s, const FilterOptions& opts) {
    if (!mean_f.allFinite())
        throw std::runtime_error("non-finite forecast mean at time " + std::to_string(t));
    auto sigma_f = q ? pattern_restricted_forecast_cov(rows, q, s)
                     : pattern_restricted_forecast_cov(rows, [](index_t, index_t) { return 0.0; }, s);
    HvPrior prior;
    try {
        auto lf = detail::staged("ichol", [&] { return ichol(sigma_f); });
        prior = make_prior(std::move(mean_f), std::move(lf));
    } catch (const FactorizationError& e) {
        throw FactorizationError(e.detail() + " at time " + std::to_string(t), e.row(), "forecast " + e.stage());
    }
    auto post = hvl(obs, prior, opts.hvl);
    FilterStep step;
    step.hvl_iterations = post.iterations;
    step.updated = {t, std::move(post.mean), std::move(post.L), std::move(post.U)};
    step.forecast = {t, std::move(prior.mean), std::move(prior.L), std::move(prior.U)};
    return step;
}

} // namespace detail

/// Linear forecast mu = E mu, L = E L, Sigma on S, then the Vecchia-Laplace update.
inline FilterStep kvl_step(const FilterState& prev, const LinearEvolution& evo, const ObservationSet& obs,
                           const FilterOptions& opts = {}) {
    if (evo.E.rows() != static_cast<Eigen::Index>(prev.n()))
        throw std::invalid_argument("kvl_step: evolution matrix does not match state dimension");
    Vector mean_f = evo.E * prev.mean;
    auto rows = multiply(evo.E, prev.L);
    return detail::forecast_update(prev.t + 1, std::move(mean_f), rows, evo.Q, obs, prev.L.pattern_ptr(), opts);
}

/// Extended forecast: mean through the nonlinear map, factor through its Jacobian at the previous mean.
inline FilterStep ekvl_step(const FilterState& prev, const NonlinearEvolution& evo, const ObservationSet& obs,
                            const FilterOptions& opts = {}) {
    Vector mean_f = evo.map(prev.mean);
    if (mean_f.size() != static_cast<Eigen::Index>(prev.n()))
        throw std::invalid_argument("ekvl_step: evolution output has wrong dimension");
    auto rows = evo.jacobian_times(prev.mean, prev.L);
    return detail::forecast_update(prev.t + 1, std::move(mean_f), rows, evo.Q, obs, prev.L.pattern_ptr(), opts);
}

/// log p(y_t | x) + log N(x; forecast) - log N(x; filtering), evaluated at x = filtering mean.
inline double integrated_likelihood_term(const ObservationSet& obs, const FilterState& forecast,
                                         const FilterState& updated) {
    const Vector& x = updated.mean;
    const double v = obs.loglik(x) + factor_logpdf(x, forecast.mean, forecast.U) - factor_logpdf(x, updated.mean, updated.U);
    if (!std::isfinite(v))
        throw std::runtime_error("non-finite integrated likelihood at time " + std::to_string(updated.t));
    return v;
}

// ---------------------------------------------------------------------------------------------
// Particle filter over unknown parameters

/// Systematic resampling with a caller-supplied offset u in [0, 1/N).
inline std::vector<std::size_t> systematic_resample(const std::vector<double>& weights, double u, std::size_t count = 0) {
    const std::size_t n = count ? count : weights.size();
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w))
            throw std::invalid_argument("particle degeneracy: invalid weight");
        total += w;
    }
    if (!(total > 0.0))
        throw std::invalid_argument("particle degeneracy: weights sum to zero");
    if (u < 0.0 || u >= 1.0 / static_cast<double>(n))
        throw std::invalid_argument("systematic_resample: offset outside [0, 1/N)");
    std::vector<std::size_t> out;
    out.reserve(n);
    std::size_t idx = 0;
    double cum = weights[0] / total;
    for (std::size_t k = 0; k < n; ++k) {
        const double point = u + static_cast<double>(k) / static_cast<double>(n);
        while (point >= cum && idx + 1 < weights.size())
            cum += weights[++idx] / total;
        out.push_back(idx);
    }
    return out;
}

template <typename Rng>
std::vector<std::size_t> systematic_resample(const std::vector<double>& weights, Rng& rng) {
    const double n = static_cast<double>(weights.size());
    double u = std::uniform_real_distribution<double>(0.0, 1.0 / n)(rng);
    if (u >= 1.0 / n)
        u = 0.0;
    return systematic_resample(weights, u);
}

inline double effective_sample_size(const std::vector<double>& weights) {
    double s = 0.0;
    for (double w : weights)
        s += w * w;
    return s > 0.0 ? 1.0 / s : 0.0;
}

template <typename Theta>
struct Particle {
    Theta theta;
    double weight = 0.0;
    FilterState state;
};

/// Parameter-dependent pieces of the model. RNG is the particle filter's own engine.
template <typename Theta>
struct ParticleModel {
    using Rng = std::mt19937_64;
    std::function<Theta(Rng&)> draw_initial;                               ///< f_0
    std::function<FilterState(const Theta&)> initial_state;                ///< mu_0|0, L_0|0 under theta_0
    std::function<Theta(const Theta&, Rng&)> draw_proposal;                ///< q_t
    std::function<double(const Theta&, const Theta&)> log_prior;           ///< log f_t(cur | prev)
    std::function<double(const Theta&, const Theta&)> log_proposal;        ///< log q_t(cur | prev)
    std::function<NonlinearEvolution(const Theta&)> evolution;             ///< E_t, dE_t, Q_t under theta
    std::function<ObservationSet(const ObservationSet&, const Theta&)> observations; ///< g_t under theta; optional

    /// Bootstrap proposal: q_t = f_t, so the prior/proposal ratio cancels.
    static std::function<double(const Theta&, const Theta&)> zero_log_density() {
        return [](const Theta&, const Theta&) { return 0.0; };
    }
};

struct ParticleDiagnostics {
    std::vector<double> log_likelihood; ///< integrated likelihood term per particle
    std::vector<double> weights;        ///< normalized weights before resampling
    bool resampled = false;
};

struct ParticleOptions {
    bool ess_triggered = false; ///< resample only when ESS < N/2 (default: every step)
    unsigned workers = 1;
    FilterOptions filter;
};

template <typename Theta>
std::vector<Particle<Theta>> initialize_particles(const ParticleModel<Theta>& model, std::size_t count,
                                                  std::mt19937_64& rng, unsigned workers = 1) {
    if (count < 1)
        throw std::invalid_argument("particle filter needs at least one particle");
    std::vector<Particle<Theta>> ps(count);
    for (auto& p : ps) {
        p.theta = model.draw_initial(rng);
        p.weight = 1.0 / static_cast<double>(count);
    }
    parallel_for(count, workers, [&](std::size_t l) { ps[l].state = model.initial_state(ps[l].theta); });
    return ps;
}

/// One particle-EKVL step. Proposals are drawn serially from `rng`; the per-particle filtering runs
/// in parallel. The mean is evolved under theta_{t-1} and the Jacobian and Q under theta_t.
template <typename Theta>
std::vector<Particle<Theta>> particle_ekvl_step(const std::vector<Particle<Theta>>& prev, const ParticleModel<Theta>& model,
                                                const ObservationSet& y, std::mt19937_64& rng,
                                                const ParticleOptions& opts = {}, ParticleDiagnostics* diag = nullptr) {
    const std::size_t np = prev.size();
    if (np == 0)
        throw std::invalid_argument("particle filter needs at least one particle");
    std::vector<Particle<Theta>> next(np);
    for (std::size_t l = 0; l < np; ++l)
        next[l].theta = model.draw_proposal(prev[l].theta, rng);

    std::vector<double> logw(np), lt(np);
    parallel_for(np, opts.workers, [&](std::size_t l) {
        const auto& p = prev[l];
        const auto evo_prev = model.evolution(p.theta);
        const auto evo_cur = model.evolution(next[l].theta);
        NonlinearEvolution mixed{evo_prev.map, evo_cur.jacobian_times, evo_cur.Q};
        const ObservationSet obs = model.observations ? model.observations(y, next[l].theta) : y;
        auto step = ekvl_step(p.state, mixed, obs, opts.filter);
        lt[l] = integrated_likelihood_term(obs, step.forecast, step.updated);
        const double lp = model.log_prior ? model.log_prior(next[l].theta, p.theta) : 0.0;
        const double lq = model.log_proposal ? model.log_proposal(next[l].theta, p.theta) : 0.0;
        logw[l] = std::log(p.weight) + lt[l] + lp - lq;
        next[l].state = std::move(step.updated);
    });

    double mx = -std::numeric_limits<double>::infinity();
    for (double v : logw) {
        if (std::isnan(v))
            throw std::runtime_error("particle degeneracy: NaN weight");
        mx = std::max(mx, v);
    }
    if (!std::isfinite(mx))
        throw std::runtime_error("particle degeneracy: all weights zero");
    std::vector<double> w(np);
    double total = 0.0;
    for (std::size_t l = 0; l < np; ++l)
        total += (w[l] = std::exp(logw[l] - mx));
    for (std::size_t l = 0; l < np; ++l) {
        w[l] /= total;
        next[l].weight = w[l];
    }

    const bool resample = !opts.ess_triggered || effective_sample_size(w) < 0.5 * static_cast<double>(np);
    if (diag)
        *diag = {lt, w, resample};
    if (resample) {
        const auto pick = systematic_resample(w, rng);
        std::vector<Particle<Theta>> res;
        res.reserve(np);
        for (auto k : pick) {
            res.push_back(next[k]);
            res.back().weight = 1.0 / static_cast<double>(np);
        }
        return res;
    }
    return next;
}

} // namespace hvf
