#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "hvfilter/hierarchy.hpp"
#include "hvfilter/likelihoods.hpp"
#include "hvfilter/sparse_core.hpp"

namespace hvf {

// ---------------------------------------------------------------------------------------------
// Locations

/// g x g cell centres on [0,1]^2, row-major: index = iy * g + ix.
inline std::vector<Location> grid_locations(index_t g) {
    std::vector<Location> out;
    out.reserve(static_cast<std::size_t>(g) * g);
    for (index_t iy = 0; iy < g; ++iy)
        for (index_t ix = 0; ix < g; ++ix)
            out.push_back({{(ix + 0.5) / g, (iy + 0.5) / g}, iy * g + ix});
    return out;
}

/// n equally spaced points on a circle of unit circumference, embedded in the plane.
inline std::vector<Location> circle_locations(index_t n) {
    const double r = 0.5 / std::numbers::pi;
    std::vector<Location> out(n);
    for (index_t i = 0; i < n; ++i) {
        const double a = 2.0 * std::numbers::pi * i / n;
        out[i] = {{r * std::cos(a), r * std::sin(a)}, i};
    }
    return out;
}

// ---------------------------------------------------------------------------------------------
// Exponential covariance

struct ExpKernel {
    double variance = 1.0;
    double range = 0.15;

    void validate() const {
        if (!(variance > 0.0) || !(range > 0.0))
            throw std::invalid_argument("exponential kernel needs variance > 0 and range > 0");
    }
};

/// Entry oracle sigma^2 exp(-|s_i - s_j| / rho) over a fixed location list.
class ExpCovariance {
public:
    ExpCovariance(std::vector<Location> locs, ExpKernel k) :
        locs_(std::make_shared<const std::vector<Location>>(std::move(locs))), k_(k) {
        k_.validate();
    }

    double operator()(index_t i, index_t j) const {
        return k_.variance * std::exp(-distance((*locs_)[i], (*locs_)[j]) / k_.range);
    }

    index_t n() const { return static_cast<index_t>(locs_->size()); }
    const ExpKernel& kernel() const noexcept { return k_; }

    Matrix dense() const {
        const auto n = static_cast<Eigen::Index>(locs_->size());
        Matrix m(n, n);
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = j; i < n; ++i)
                m(i, j) = m(j, i) = (*this)(static_cast<index_t>(i), static_cast<index_t>(j));
        return m;
    }

    /// Same kernel over locations permuted into hierarchy order.
    ExpCovariance permuted(const Ordering& ord) const {
        std::vector<Location> p;
        p.reserve(locs_->size());
        for (auto k : ord.order())
            p.push_back((*locs_)[k]);
        return ExpCovariance(std::move(p), k_);
    }

private:
    std::shared_ptr<const std::vector<Location>> locs_;
    ExpKernel k_;
};

inline ExpCovariance exp_covariance(std::vector<Location> locs, const ExpKernel& k) {
    return ExpCovariance(std::move(locs), k);
}

/// Covariance scaled by a constant, e.g. a Q-scale parameter.
template <EntryOracle F>
struct ScaledCovariance {
    F base;
    double scale = 1.0;
    double operator()(index_t i, index_t j) const { return scale * static_cast<double>(base(i, j)); }
};

// ---------------------------------------------------------------------------------------------
// Advection-diffusion

struct AdvDiffConfig {
    index_t g = 34;
    double alpha = 4e-5;
    double beta = 1e-2;

    void validate() const {
        if (g < 3)
            throw std::invalid_argument("advection-diffusion grid side must be >= 3");
        if (alpha < 0.0 || beta < 0.0)
            throw std::invalid_argument("advection-diffusion coefficients must be nonnegative");
    }
};

/// E = I + alpha L_h + beta G_h on a periodic g x g grid (h = 1/g): five-point Laplacian and
/// centred differences, +1/(2h) towards right/up and -1/(2h) towards left/down.
inline RowSparse advection_diffusion_matrix(const AdvDiffConfig& cfg) {
    cfg.validate();
    const index_t g = cfg.g;
    const double h = 1.0 / g;
    const double lap = cfg.alpha / (h * h);
    const double adv = cfg.beta / (2.0 * h);
    const auto n = static_cast<Eigen::Index>(g) * g;
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(n) * 5);
    auto idx = [g](index_t ix, index_t iy) { return static_cast<Eigen::Index>(iy) * g + ix; };
    for (index_t iy = 0; iy < g; ++iy)
        for (index_t ix = 0; ix < g; ++ix) {
            const auto i = idx(ix, iy);
            trips.emplace_back(i, i, 1.0 - 4.0 * lap);
            trips.emplace_back(i, idx((ix + 1) % g, iy), lap + adv);
            trips.emplace_back(i, idx((ix + g - 1) % g, iy), lap - adv);
            trips.emplace_back(i, idx(ix, (iy + 1) % g), lap + adv);
            trips.emplace_back(i, idx(ix, (iy + g - 1) % g), lap - adv);
        }
    RowSparse e(n, n);
    e.setFromTriplets(trips.begin(), trips.end());
    e.prune(0.0);
    e.makeCompressed();
    return e;
}

// ---------------------------------------------------------------------------------------------
// Lorenz 2005 (model II)

struct Lorenz05Config {
    index_t n = 960;
    int K = 32;
    double F = 10.0;
    double dt = 0.005;
    int steps = 5;  ///< RK4 substeps per evolution step
    double b = 0.2; ///< x = b * x~

    void validate() const {
        if (K < 1)
            throw std::invalid_argument("lorenz: K must be >= 1");
        if (n < static_cast<index_t>(4 * K + 2))
            throw std::invalid_argument("lorenz: n too small for K");
        if (!(dt > 0.0) || steps < 1 || !(b > 0.0))
            throw std::invalid_argument("lorenz: dt, steps and b must be positive");
    }
};

namespace detail {

inline index_t wrap(long long i, index_t n) {
    const long long m = i % static_cast<long long>(n);
    return static_cast<index_t>(m < 0 ? m + n : m);
}

/// W_m = sum_{|l| <= K/2} v_{m-l}, by a running sum.
inline Vector window_sums(const Vector& v, int K) {
    const auto n = static_cast<index_t>(v.size());
    const int h = K / 2;
    Vector w(n);
    double s = 0.0;
    for (int l = -h; l <= h; ++l)
        s += v[wrap(l, n)];
    for (index_t m = 0; m < n; ++m) {
        w[m] = s;
        s += v[wrap(static_cast<long long>(m) + h + 1, n)] - v[wrap(static_cast<long long>(m) - h, n)];
    }
    return w;
}

/// Row-wise window sums for a block of tangent directions (rows indexed by state).
inline void window_sums(const RowMatrix& v, int K, RowMatrix& w) {
    const auto n = static_cast<index_t>(v.rows());
    const int h = K / 2;
    w.resize(v.rows(), v.cols());
    w.row(0).setZero();
    for (int l = -h; l <= h; ++l)
        w.row(0) += v.row(wrap(l, n));
    for (index_t m = 1; m < n; ++m)
        w.row(m) = w.row(m - 1) + v.row(wrap(static_cast<long long>(m) + h, n)) -
                   v.row(wrap(static_cast<long long>(m) - h - 1, n));
}

} // namespace detail

/// dx~/dt in separable form: (1/K^2)[-W_{i-2K} W_{i-K} + sum_j W_{i-K+j} x_{i+K+j}] - x_i + F.
inline Vector lorenz05_rhs(const Vector& x, const Lorenz05Config& cfg) {
    const auto n = static_cast<index_t>(x.size());
    const int K = cfg.K, h = K / 2;
    const Vector w = detail::window_sums(x, K);
    const double k2 = 1.0 / (static_cast<double>(K) * K);
    Vector f(n);
    for (index_t i = 0; i < n; ++i) {
        const long long ii = i;
        double s = -w[detail::wrap(ii - 2 * K, n)] * w[detail::wrap(ii - K, n)];
        for (int j = -h; j <= h; ++j)
            s += w[detail::wrap(ii - K + j, n)] * x[detail::wrap(ii + K + j, n)];
        f[i] = k2 * s - x[i] + cfg.F;
    }
    return f;
}

/// Df(x) V for a block of directions V, given the window sums of x.
inline void lorenz05_rhs_tangent(const Vector& x, const Vector& w, const RowMatrix& v, const Lorenz05Config& cfg,
                                 RowMatrix& dw, RowMatrix& out) {
    const auto n = static_cast<index_t>(x.size());
    const int K = cfg.K, h = K / 2;
    const double k2 = 1.0 / (static_cast<double>(K) * K);
    detail::window_sums(v, K, dw);
    out.resize(v.rows(), v.cols());
    for (index_t i = 0; i < n; ++i) {
        const long long ii = i;
        const index_t a = detail::wrap(ii - 2 * K, n), c = detail::wrap(ii - K, n);
        auto row = out.row(i);
        row = (-w[c]) * dw.row(a) - w[a] * dw.row(c);
        for (int j = -h; j <= h; ++j) {
            const index_t p = detail::wrap(ii - K + j, n), q = detail::wrap(ii + K + j, n);
            row += x[q] * dw.row(p) + w[p] * v.row(q);
        }
        row *= k2;
        row -= v.row(i);
    }
}

namespace detail {

inline Vector rk4(const Vector& x0, const Lorenz05Config& cfg) {
    Vector x = x0;
    const double dt = cfg.dt;
    for (int s = 0; s < cfg.steps; ++s) {
        const Vector k1 = lorenz05_rhs(x, cfg);
        const Vector k2 = lorenz05_rhs(x + 0.5 * dt * k1, cfg);
        const Vector k3 = lorenz05_rhs(x + 0.5 * dt * k2, cfg);
        const Vector k4 = lorenz05_rhs(x + dt * k3, cfg);
        x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return x;
}

inline void check_finite(const Vector& x, const char* what) {
    if (!x.allFinite())
        throw std::runtime_error(std::string(what) + ": non-finite state");
}

} // namespace detail

/// E(x) = b * RK4^steps(x / b).
inline Vector lorenz05_evolve(const Vector& x, const Lorenz05Config& cfg) {
    detail::check_finite(x, "lorenz");
    Vector out = cfg.b * detail::rk4(x / cfg.b, cfg);
    detail::check_finite(out, "lorenz");
    return out;
}

/// Evolves x and pushes the tangent directions V through the same RK4 stages: returns dE(x) V.
inline RowMatrix lorenz05_tangent(const Vector& x, const RowMatrix& v0, const Lorenz05Config& cfg,
                                  Vector* next = nullptr) {
    detail::check_finite(x, "lorenz");
    const double dt = cfg.dt;
    Vector xs = x / cfg.b;
    RowMatrix v = v0, dw, d1, d2, d3, d4, tmp;
    for (int s = 0; s < cfg.steps; ++s) {
        const Vector k1 = lorenz05_rhs(xs, cfg);
        const Vector s2 = xs + 0.5 * dt * k1;
        const Vector k2 = lorenz05_rhs(s2, cfg);
        const Vector s3 = xs + 0.5 * dt * k2;
        const Vector k3 = lorenz05_rhs(s3, cfg);
        const Vector s4 = xs + dt * k3;
        const Vector k4 = lorenz05_rhs(s4, cfg);

        lorenz05_rhs_tangent(xs, detail::window_sums(xs, cfg.K), v, cfg, dw, d1);
        tmp = v + 0.5 * dt * d1;
        lorenz05_rhs_tangent(s2, detail::window_sums(s2, cfg.K), tmp, cfg, dw, d2);
        tmp = v + 0.5 * dt * d2;
        lorenz05_rhs_tangent(s3, detail::window_sums(s3, cfg.K), tmp, cfg, dw, d3);
        tmp = v + dt * d3;
        lorenz05_rhs_tangent(s4, detail::window_sums(s4, cfg.K), tmp, cfg, dw, d4);
        v += dt / 6.0 * (d1 + 2.0 * d2 + 2.0 * d3 + d4);
        xs += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    if (next) {
        *next = cfg.b * xs;
        detail::check_finite(*next, "lorenz");
    }
    return v;
}

struct LorenzStep {
    Vector next;
    RowMatrix jacobian;
};

inline LorenzStep lorenz05_step(const Vector& x, const Lorenz05Config& cfg) {
    LorenzStep s;
    s.jacobian = lorenz05_tangent(x, RowMatrix::Identity(x.size(), x.size()), cfg, &s.next);
    return s;
}

// ---------------------------------------------------------------------------------------------
// Sampling

/// N(mean, Sigma) via a dense Cholesky factor computed once.
class DenseGaussianSampler {
public:
    DenseGaussianSampler() = default;
    /// Takes the covariance by value and factorizes it in place.
    DenseGaussianSampler(Vector mean, Matrix cov) : mean_(std::move(mean)), l_(std::move(cov)) {
        if (l_.rows() != l_.cols() || l_.rows() != mean_.size())
            throw std::invalid_argument("sampler: mean and covariance dimensions differ");
        Eigen::LLT<Eigen::Ref<Matrix>> llt(l_);
        if (llt.info() != Eigen::Success)
            throw std::runtime_error("sampler: covariance not positive definite");
        l_.triangularView<Eigen::StrictlyUpper>().setZero();
    }

    index_t n() const { return static_cast<index_t>(mean_.size()); }
    const Vector& mean() const noexcept { return mean_; }
    const Matrix& factor() const noexcept { return l_; }

    template <typename Rng>
    Vector draw(Rng& rng) const {
        std::normal_distribution<double> z;
        Vector e(mean_.size());
        for (Eigen::Index i = 0; i < e.size(); ++i)
            e[i] = z(rng);
        return mean_ + l_.triangularView<Eigen::Lower>() * e;
    }

private:
    Vector mean_;
    Matrix l_;
};

template <typename Rng>
double sample_observation(const LikelihoodFamily& fam, double x, Rng& rng) {
    switch (fam.kind) {
    case Family::gaussian: return std::normal_distribution<double>(x, std::sqrt(fam.tau2))(rng);
    case Family::bernoulli_logit: return std::bernoulli_distribution(1.0 / (1.0 + std::exp(-x)))(rng) ? 1.0 : 0.0;
    case Family::poisson_log: return static_cast<double>(std::poisson_distribution<long long>(std::exp(x))(rng));
    case Family::gamma_log: {
        double y = std::gamma_distribution<double>(fam.shape, std::exp(x) / fam.shape)(rng);
        return std::max(y, std::numeric_limits<double>::min());
    }
    }
    return 0.0;
}

/// round(fraction * n) distinct indices drawn uniformly, sorted.
template <typename Rng>
std::vector<index_t> sample_indices(index_t n, double fraction, Rng& rng) {
    if (fraction < 0.0 || fraction > 1.0)
        throw std::invalid_argument("observation fraction must lie in [0, 1]");
    const auto m = static_cast<index_t>(std::llround(fraction * n));
    std::vector<index_t> all(n);
    for (index_t i = 0; i < n; ++i)
        all[i] = i;
    for (index_t k = 0; k < m; ++k) {
        std::uniform_int_distribution<index_t> u(k, n - 1);
        std::swap(all[k], all[u(rng)]);
    }
    all.resize(m);
    std::sort(all.begin(), all.end());
    return all;
}

template <typename Rng>
ObservationSet sample_observations(const Vector& x, double fraction, const LikelihoodFamily& fam, Rng& rng) {
    auto idx = sample_indices(static_cast<index_t>(x.size()), fraction, rng);
    Vector y(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k)
        y[static_cast<Eigen::Index>(k)] = sample_observation(fam, x[idx[k]], rng);
    return ObservationSet::uniform(std::move(idx), std::move(y), fam);
}

/// Generative state-space model in input (model) order.
struct SsmSpec {
    int T = 1;
    double obs_fraction = 0.1;
    LikelihoodFamily family;
    std::function<Vector(const Vector&)> evolve;
    const DenseGaussianSampler* initial = nullptr;
    const DenseGaussianSampler* innovation = nullptr; ///< null means Q = 0
};

struct SimulatedData {
    std::vector<Vector> truth;         ///< x_0 .. x_T
    std::vector<ObservationSet> obs;   ///< y_1 .. y_T (obs[0] is empty)
};

template <typename Rng>
SimulatedData simulate_ssm(const SsmSpec& spec, Rng& rng) {
    if (!spec.initial || !spec.evolve)
        throw std::invalid_argument("simulate_ssm: initial sampler and evolution are required");
    SimulatedData d;
    d.truth.push_back(spec.initial->draw(rng));
    d.obs.emplace_back();
    for (int t = 1; t <= spec.T; ++t) {
        Vector x = spec.evolve(d.truth.back());
        if (spec.innovation)
            x += spec.innovation->draw(rng) - spec.innovation->mean();
        d.obs.push_back(sample_observations(x, spec.obs_fraction, spec.family, rng));
        d.truth.push_back(std::move(x));
    }
    return d;
}

/// Sample mean and covariance of a long Lorenz run after burn-in.
struct LorenzMoments {
    Vector mean;
    Matrix cov;
};

template <typename Rng>
LorenzMoments lorenz05_moments(const Lorenz05Config& cfg, int burn_in, int samples, Rng& rng) {
    cfg.validate();
    std::normal_distribution<double> z;
    Vector x(cfg.n);
    for (index_t i = 0; i < cfg.n; ++i)
        x[i] = cfg.b * (cfg.F + z(rng));
    for (int k = 0; k < burn_in; ++k)
        x = lorenz05_evolve(x, cfg);
    Matrix draws(cfg.n, samples);
    for (int k = 0; k < samples; ++k) {
        x = lorenz05_evolve(x, cfg);
        draws.col(k) = x;
    }
    LorenzMoments m;
    m.mean = draws.rowwise().mean();
    draws.colwise() -= m.mean;
    m.cov = Matrix(cfg.n, cfg.n);
    m.cov.setZero();
    m.cov.selfadjointView<Eigen::Lower>().rankUpdate(draws, 1.0 / (samples - 1));
    m.cov.triangularView<Eigen::StrictlyUpper>() = m.cov.transpose().triangularView<Eigen::StrictlyUpper>();
    return m;
}

} // namespace hvf
