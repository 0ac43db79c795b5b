#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "hvfilter/filters.hpp"
#include "hvfilter/hierarchy.hpp"
#include "hvfilter/models.hpp"
#include "hvfilter/parallel.hpp"

namespace hvf {

// ---------------------------------------------------------------------------------------------
// Seeds

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

/// The r-th output of a splitmix64 stream started at `root`.
inline std::uint64_t replicate_seed(std::uint64_t root, std::size_t r) noexcept {
    return splitmix64(root + 0x9E3779B97F4A7C15ull * static_cast<std::uint64_t>(r));
}

// ---------------------------------------------------------------------------------------------
// Scores

/// Negative log predictive density of the truth under N(mean, (U U^T)^{-1}); lower is better.
inline double log_score(const Vector& truth, const Vector& mean, const SparseUpperTri& u) {
    const double v = -factor_logpdf(truth, mean, u);
    if (!std::isfinite(v))
        throw std::runtime_error("non-finite log score");
    return v;
}

inline double log_score(const Vector& truth, const FilterState& s) { return log_score(truth, s.mean, s.U); }

inline double rmspe(const Vector& truth, const Vector& mean) {
    if (truth.size() != mean.size())
        throw std::invalid_argument("rmspe: lengths differ");
    if (truth.size() == 0)
        throw std::invalid_argument("rmspe: empty vectors");
    return std::sqrt((truth - mean).squaredNorm() / static_cast<double>(truth.size()));
}

inline double rrmspe(double method_rmspe, double dl_rmspe) {
    if (!(dl_rmspe > 0.0))
        throw std::invalid_argument("rrmspe: reference error must be positive");
    return method_rmspe / dl_rmspe;
}

// ---------------------------------------------------------------------------------------------
// Scenarios

enum class ScenarioKind { spatial, advdiff, advdiff_large, lorenz };

inline std::string_view scenario_name(ScenarioKind k) noexcept {
    switch (k) {
    case ScenarioKind::spatial: return "spatial";
    case ScenarioKind::advdiff: return "advdiff";
    case ScenarioKind::advdiff_large: return "advdiff_large";
    case ScenarioKind::lorenz: return "lorenz";
    }
    return "unknown";
}

inline ScenarioKind parse_scenario(std::string_view s) {
    for (auto k : {ScenarioKind::spatial, ScenarioKind::advdiff, ScenarioKind::advdiff_large, ScenarioKind::lorenz})
        if (scenario_name(k) == s)
            return k;
    throw std::invalid_argument("unknown scenario '" + std::string(s) + "'");
}

struct ScenarioConfig {
    ScenarioKind kind = ScenarioKind::advdiff;
    LikelihoodFamily family = LikelihoodFamily::gaussian(0.25);
    int T = 20;
    double obs_fraction = 0.1;
    ExpKernel kernel{1.0, 0.15}; ///< Sigma_0, and Q for the advection-diffusion scenarios
    AdvDiffConfig advdiff;       ///< grid side g is shared with the spatial scenario
    Lorenz05Config lorenz;
    ExpKernel lorenz_q{0.2, 0.15};
    int lorenz_burn_in = 1000;
    int lorenz_samples = 10000;
    /// Added to the diagonal of the spin-up covariance, relative to its mean variance. Spin-up
    /// states span only a few hundred directions, so the raw sample covariance is singular.
    double lorenz_jitter = 1e-6;

    static ScenarioConfig preset(ScenarioKind kind, std::string_view family = "gaussian") {
        ScenarioConfig c;
        c.kind = kind;
        double tau2 = 0.25;
        switch (kind) {
        case ScenarioKind::spatial:
            c.T = 1;
            c.obs_fraction = 1.0;
            tau2 = 0.2;
            break;
        case ScenarioKind::advdiff: break;
        case ScenarioKind::advdiff_large: c.advdiff = {100, 1e-7, 1e-3}; break;
        case ScenarioKind::lorenz: tau2 = 0.2; break;
        }
        c.family = LikelihoodFamily::parse(family, tau2, 2.0);
        return c;
    }

    index_t n() const { return kind == ScenarioKind::lorenz ? lorenz.n : advdiff.g * advdiff.g; }

    void validate() const {
        family.validate();
        if (T < 1)
            throw std::invalid_argument("scenario: T must be >= 1");
        if (kind == ScenarioKind::spatial && T != 1)
            throw std::invalid_argument("scenario: the spatial scenario has a single time point (T = 1)");
        if (obs_fraction < 0.0 || obs_fraction > 1.0)
            throw std::invalid_argument("scenario: obs_fraction must lie in [0, 1]");
        kernel.validate();
        if (kind == ScenarioKind::lorenz) {
            lorenz.validate();
            lorenz_q.validate();
            if (lorenz_burn_in < 0 || lorenz_samples <= static_cast<int>(lorenz.n))
                throw std::invalid_argument("scenario: lorenz spin-up needs more samples than state variables");
            if (!(lorenz_jitter >= 0.0))
                throw std::invalid_argument("scenario: lorenz jitter must be >= 0");
        } else {
            advdiff.validate();
        }
    }
};

/// Grid (g x g on the unit square) or circle locations, in input order.
inline std::vector<Location> scenario_locations(const ScenarioConfig& cfg) {
    return cfg.kind == ScenarioKind::lorenz ? circle_locations(cfg.lorenz.n) : grid_locations(cfg.advdiff.g);
}

/// Everything about a scenario that does not depend on the replicate: locations, moments,
/// evolution and samplers, all in input order.
struct ScenarioWorld {
    ScenarioConfig config;
    std::vector<Location> locations;
    std::vector<index_t> maxdist; ///< shared by every hierarchy built on these locations
    Vector mu0;
    EntryFn sigma0;
    EntryFn q;   ///< empty for the spatial scenario
    RowSparse E; ///< advection-diffusion only
    std::shared_ptr<const DenseGaussianSampler> initial;
    std::shared_ptr<const DenseGaussianSampler> innovation;

    index_t n() const { return static_cast<index_t>(locations.size()); }
    bool is_spatial() const { return config.kind == ScenarioKind::spatial; }
    bool is_linear() const {
        return config.kind == ScenarioKind::advdiff || config.kind == ScenarioKind::advdiff_large;
    }

    Vector evolve(const Vector& x) const {
        if (is_spatial())
            return x;
        if (is_linear())
            return E * x;
        return lorenz05_evolve(x, config.lorenz);
    }

    SimulatedData simulate(std::uint64_t seed) const {
        std::mt19937_64 rng(seed);
        SsmSpec spec;
        spec.T = config.T;
        spec.obs_fraction = config.obs_fraction;
        spec.family = config.family;
        spec.evolve = [this](const Vector& x) { return evolve(x); };
        spec.initial = initial.get();
        spec.innovation = is_spatial() ? nullptr : innovation.get();
        return simulate_ssm(spec, rng);
    }
};

/// `seed` drives the Lorenz spin-up only; the other scenarios are deterministic.
inline ScenarioWorld build_world(const ScenarioConfig& cfg, std::uint64_t seed = 0) {
    cfg.validate();
    ScenarioWorld w;
    w.config = cfg;
    if (cfg.kind == ScenarioKind::lorenz) {
        w.locations = scenario_locations(cfg);
        std::mt19937_64 rng(splitmix64(seed));
        auto mom = lorenz05_moments(cfg.lorenz, cfg.lorenz_burn_in, cfg.lorenz_samples, rng);
        mom.cov.diagonal().array() += cfg.lorenz_jitter * mom.cov.diagonal().mean();
        auto cov = std::make_shared<const Matrix>(std::move(mom.cov));
        w.mu0 = mom.mean;
        w.sigma0 = [cov](index_t i, index_t j) { return (*cov)(i, j); };
        auto q = exp_covariance(w.locations, cfg.lorenz_q);
        w.q = q;
        w.initial = std::make_shared<const DenseGaussianSampler>(w.mu0, *cov);
        w.innovation = std::make_shared<const DenseGaussianSampler>(Vector::Zero(w.n()), q.dense());
    } else {
        w.locations = scenario_locations(cfg);
        auto k = exp_covariance(w.locations, cfg.kernel);
        w.mu0 = Vector::Zero(w.n());
        w.sigma0 = k;
        w.initial = std::make_shared<const DenseGaussianSampler>(w.mu0, k.dense());
        if (!w.is_spatial()) {
            w.q = k;
            w.E = advection_diffusion_matrix(cfg.advdiff);
            w.innovation = w.initial; // Sigma_0 = Q with zero mean
        }
    }
    w.maxdist = maxdist_order(w.locations);
    return w;
}

// ---------------------------------------------------------------------------------------------
// Methods

/// J = 2 hierarchy with conditioning sets of at most N: the fewest resolutions whose capacity
/// covers n, larger sets at finer resolutions.
inline HierarchyConfig auto_hv_config(std::size_t n, std::size_t N, std::size_t leaf_cap = 2) {
    for (int M = 1; M <= 60 && N >= leaf_cap + static_cast<std::size_t>(M); ++M) {
        const std::size_t budget = N - leaf_cap;
        const std::size_t base = budget / static_cast<std::size_t>(M);
        const std::size_t extra = budget % static_cast<std::size_t>(M);
        HierarchyConfig c{M, 2, {}, leaf_cap};
        double capacity = 0.0;
        for (int m = 0; m < M; ++m) {
            const std::size_t r = base + (static_cast<std::size_t>(m) >= static_cast<std::size_t>(M) - extra ? 1 : 0);
            c.set_sizes.push_back(r);
            capacity += static_cast<double>(r) * std::ldexp(1.0, m);
        }
        const double leaves = std::ldexp(1.0, M);
        if (capacity + static_cast<double>(leaf_cap) * leaves >= static_cast<double>(n) + leaves)
            return c;
    }
    throw std::invalid_argument("no two-way hierarchy with conditioning sets of size " + std::to_string(N) +
                                " holds " + std::to_string(n) + " points");
}

/// The HV configuration used for a scenario at its default size; other sizes get an automatic
/// hierarchy with the same conditioning-set budget.
inline HierarchyConfig hv_preset(const ScenarioConfig& cfg) {
    const auto n = static_cast<std::size_t>(cfg.n());
    switch (cfg.kind) {
    case ScenarioKind::spatial:
    case ScenarioKind::advdiff:
        if (n == 1156)
            return {7, 2, {5, 5, 5, 5, 6, 6, 6}, 4};
        return auto_hv_config(n, 41);
    case ScenarioKind::lorenz:
        if (n == 960)
            return {7, 2, {5, 5, 5, 5, 6, 6, 6}, 2};
        return auto_hv_config(n, 39);
    case ScenarioKind::advdiff_large:
        if (n == 10000)
            return {11, 2, {4, 4, 4, 4, 4, 4, 4, 4, 4, 3, 3}, 2};
        return auto_hv_config(n, 44);
    }
    throw std::invalid_argument("unknown scenario");
}

struct MethodSpec {
    std::string name;                       ///< "dl" is the reference for dLS and RRMSPE
    std::optional<HierarchyConfig> hierarchy; ///< presets for hv, lr and dl when absent
};

/// A method ready to run on one scenario: hierarchy, ordering, pattern and the prior factors,
/// which do not depend on the data and are shared by all replicates.
struct PreparedMethod {
    std::string name;
    Hierarchy hierarchy;
    Ordering ordering;
    PatternPtr pattern;
    std::size_t N = 0;
    HvPrior prior;
    std::optional<LinearEvolution> linear;
    std::optional<NonlinearEvolution> nonlinear;
};

namespace detail {

inline NonlinearEvolution lorenz_evolution(const Ordering& ord, const Lorenz05Config& cfg, const EntryFn& q) {
    auto o = std::make_shared<const Ordering>(ord);
    auto map = [o, cfg](const Vector& xp) { return o->to_pattern(lorenz05_evolve(o->to_input(xp), cfg)); };
    auto jac = [o, cfg](const Vector& xp, const SparseLowerTri& l) {
        const index_t n = l.n();
        const auto& pat = l.pattern();
        RowMatrix v = RowMatrix::Zero(n, n);
        for (index_t k = 0; k < n; ++k) {
            auto cols = pat.row(k);
            auto vals = l.row_values(k);
            for (std::size_t p = 0; p < cols.size(); ++p)
                v(o->input_of(k), cols[p]) = vals[p];
        }
        const RowMatrix w = lorenz05_tangent(o->to_input(xp), v, cfg);
        RowMatrix wp(n, n);
        for (index_t k = 0; k < n; ++k)
            wp.row(k) = w.row(o->input_of(k));
        return dense_rows(wp);
    };
    return {map, jac, ord.to_pattern(q)};
}

} // namespace detail

inline PreparedMethod prepare_method(const ScenarioWorld& w, const std::string& name, const HierarchyConfig& cfg) {
    PreparedMethod m;
    m.name = name;
    m.hierarchy = build_hierarchy(w.locations, cfg, w.maxdist);
    m.ordering = ordering_of(m.hierarchy);
    m.pattern = share(conditioning_pattern(m.hierarchy));
    m.N = m.pattern->max_conditioning();
    m.prior = make_prior(m.ordering.to_pattern(w.mu0), m.ordering.to_pattern(w.sigma0), m.pattern);
    if (w.is_linear())
        m.linear = LinearEvolution{m.ordering.to_pattern(w.E), m.ordering.to_pattern(w.q)};
    else if (!w.is_spatial())
        m.nonlinear = detail::lorenz_evolution(m.ordering, w.config.lorenz, w.q);
    return m;
}

struct StepScore {
    int t = 0;
    double log_score = 0.0;
    double rmspe = 0.0;
};

/// Filtering means and marginal standard deviations, in input order, indexed by t - 1.
struct Trajectory {
    std::string method;
    int replicate = 0;
    std::vector<Vector> mean;
    std::vector<Vector> sd;
};

/// Runs one method over one simulated data set and scores every filtering distribution.
inline std::vector<StepScore> run_method(const ScenarioWorld& w, const PreparedMethod& m, const SimulatedData& data,
                                         const FilterOptions& opts = {}, Trajectory* traj = nullptr,
                                         FilterState* final_state = nullptr) {
    const Ordering& ord = m.ordering;
    const auto rank = [&ord](index_t i) { return ord.rank_of(i); };
    std::vector<StepScore> out;
    const auto record = [&](int t, const Vector& mean, const SparseUpperTri& u, const SparseLowerTri& l) {
        const Vector truth = ord.to_pattern(data.truth[static_cast<std::size_t>(t)]);
        out.push_back({t, log_score(truth, mean, u), rmspe(truth, mean)});
        if (traj) {
            traj->mean.push_back(ord.to_input(mean));
            traj->sd.push_back(ord.to_input(Vector(marginal_variances(l).array().sqrt())));
        }
    };
    if (w.is_spatial()) {
        auto post = hvl(data.obs[1].relabelled(rank), m.prior, opts.hvl);
        record(1, post.mean, post.U, post.L);
        if (final_state)
            *final_state = {1, std::move(post.mean), std::move(post.L), std::move(post.U)};
        return out;
    }
    FilterState st{0, m.prior.mean, m.prior.L, m.prior.U};
    for (int t = 1; t <= w.config.T; ++t) {
        const auto obs = data.obs[static_cast<std::size_t>(t)].relabelled(rank);
        st = m.linear ? kvl_step(st, *m.linear, obs, opts).updated : ekvl_step(st, *m.nonlinear, obs, opts).updated;
        record(t, st.mean, st.U, st.L);
    }
    if (final_state)
        *final_state = std::move(st);
    return out;
}

// ---------------------------------------------------------------------------------------------
// Head-to-head comparison

enum class Metric { log_score, dls, rmspe, rrmspe };

struct ScoreRow {
    std::string method;
    std::size_t N = 0;
    int t = 0;
    int replicate = 0;
    double log_score = 0.0;
    std::optional<double> dls;
    double rmspe = 0.0;
    std::optional<double> rrmspe;

    std::optional<double> get(Metric k) const {
        switch (k) {
        case Metric::log_score: return log_score;
        case Metric::dls: return dls;
        case Metric::rmspe: return rmspe;
        case Metric::rrmspe: return rrmspe;
        }
        return std::nullopt;
    }
};

/// Final filtering distribution of replicate 0 for one method, in that method's hierarchy order.
struct FinalFactor {
    std::string method;
    Ordering ordering;
    FilterState state;
};

struct RunError {
    int replicate = 0;
    std::string method;
    std::string message;
};

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\n") == std::string_view::npos)
        return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += '"';
        out += c;
    }
    return out + "\"";
}

} // namespace detail

struct ScoreReport {
    std::string scenario;
    std::string family;
    std::vector<std::string> methods;
    std::vector<std::size_t> N; ///< per method
    int T = 0;
    int replicates = 0;
    std::vector<std::uint64_t> seeds;
    std::vector<ScoreRow> rows; ///< ordered by replicate, method, t
    std::vector<RunError> errors;
    std::vector<Trajectory> trajectories;
    std::vector<FinalFactor> factors;

    /// Mean over replicates at each t = 1..T; NaN where no replicate has the metric.
    std::vector<double> per_time(const std::string& method, Metric k) const {
        std::vector<double> sum(static_cast<std::size_t>(T), 0.0), cnt(static_cast<std::size_t>(T), 0.0);
        for (const auto& r : rows)
            if (r.method == method)
                if (auto v = r.get(k)) {
                    sum[static_cast<std::size_t>(r.t - 1)] += *v;
                    cnt[static_cast<std::size_t>(r.t - 1)] += 1.0;
                }
        for (std::size_t i = 0; i < sum.size(); ++i)
            sum[i] = cnt[i] > 0 ? sum[i] / cnt[i] : std::nan("");
        return sum;
    }

    /// Mean over time within each replicate, then over replicates. Replicates missing any time
    /// point are left out; NaN if none remain.
    double overall(const std::string& method, Metric k) const {
        std::vector<double> sum(static_cast<std::size_t>(replicates), 0.0);
        std::vector<int> cnt(static_cast<std::size_t>(replicates), 0);
        for (const auto& r : rows)
            if (r.method == method)
                if (auto v = r.get(k)) {
                    sum[static_cast<std::size_t>(r.replicate)] += *v;
                    ++cnt[static_cast<std::size_t>(r.replicate)];
                }
        double s = 0.0;
        int used = 0;
        for (std::size_t i = 0; i < sum.size(); ++i)
            if (cnt[i] == T) {
                s += sum[i] / T;
                ++used;
            }
        return used > 0 ? s / used : std::nan("");
    }

    static constexpr std::string_view csv_header = "scenario,family,method,N,t,replicate,log_score,dLS,rmspe,rrmspe";

    void write_csv(std::ostream& os) const {
        os << csv_header << '\n';
        const auto opt = [](const std::optional<double>& v) { return v ? detail::format_double(*v) : std::string("NA"); };
        for (const auto& r : rows)
            os << scenario << ',' << family << ',' << detail::csv_field(r.method) << ',' << r.N << ',' << r.t << ','
               << r.replicate << ',' << detail::format_double(r.log_score) << ',' << opt(r.dls) << ','
               << detail::format_double(r.rmspe) << ',' << opt(r.rrmspe) << '\n';
    }

    void write_errors(std::ostream& os) const {
        os << "replicate,method,message\n";
        for (const auto& e : errors)
            os << e.replicate << ',' << detail::csv_field(e.method) << ',' << detail::csv_field(e.message) << '\n';
    }

    void write_trajectories(std::ostream& os) const {
        os << "method,replicate,t,index,mean,sd\n";
        for (const auto& tr : trajectories)
            for (std::size_t t = 0; t < tr.mean.size(); ++t)
                for (Eigen::Index i = 0; i < tr.mean[t].size(); ++i)
                    os << detail::csv_field(tr.method) << ',' << tr.replicate << ',' << t + 1 << ',' << i << ','
                       << detail::format_double(tr.mean[t][i]) << ',' << detail::format_double(tr.sd[t][i]) << '\n';
    }
};

struct CompareOptions {
    std::vector<MethodSpec> methods{{"hv", {}}, {"lr", {}}, {"dl", {}}};
    int replicates = 1;
    std::uint64_t seed = 0;
    unsigned workers = 1;
    std::optional<HierarchyConfig> hv;  ///< overrides the scenario preset for "hv"
    std::optional<std::size_t> lr_N;    ///< defaults to the HV conditioning-set size
    FilterOptions filter;
    bool keep_trajectories = false;
    bool keep_factors = false; ///< final state of replicate 0 per method
};

/// Configurations for the named methods; LR gets the conditioning-set size of HV.
inline std::vector<std::pair<std::string, HierarchyConfig>> resolve_methods(const ScenarioWorld& w,
                                                                            const CompareOptions& opts) {
    const auto n = static_cast<std::size_t>(w.n());
    const HierarchyConfig hv = opts.hv ? *opts.hv : hv_preset(w.config);
    std::optional<std::size_t> lr_N = opts.lr_N;
    std::vector<std::pair<std::string, HierarchyConfig>> out;
    for (const auto& m : opts.methods) {
        if (m.hierarchy)
            out.emplace_back(m.name, *m.hierarchy);
        else if (m.name == "hv")
            out.emplace_back(m.name, hv);
        else if (m.name == "dl")
            out.emplace_back(m.name, HierarchyConfig::dense(n));
        else if (m.name == "lr") {
            if (!lr_N)
                lr_N = conditioning_pattern(build_hierarchy(w.locations, hv, w.maxdist)).max_conditioning();
            out.emplace_back(m.name, HierarchyConfig::low_rank(n, *lr_N));
        } else
            throw std::invalid_argument("method '" + m.name + "' needs an explicit hierarchy");
    }
    return out;
}

/// Runs every method on identical simulated data per replicate. Failures are recorded per
/// (replicate, method) and the batch continues.
inline ScoreReport compare_methods(const ScenarioWorld& w, const CompareOptions& opts) {
    if (opts.replicates < 0)
        throw std::invalid_argument("replicates must be >= 0");
    ScoreReport rep;
    rep.scenario = scenario_name(w.config.kind);
    rep.family = w.config.family.name();
    rep.T = w.config.T;
    rep.replicates = opts.replicates;

    const auto specs = resolve_methods(w, opts);
    std::vector<PreparedMethod> prepared;
    prepared.reserve(specs.size());
    for (const auto& [name, cfg] : specs) {
        prepared.push_back(prepare_method(w, name, cfg));
        rep.methods.push_back(name);
        rep.N.push_back(prepared.back().N);
        if (name == "lr" && prepared.back().pattern->max_row_nnz() > prepared.back().N + 1)
            throw std::logic_error("LR pattern exceeds N + 1 entries per row");
    }
    const std::size_t nm = prepared.size();
    const std::size_t R = static_cast<std::size_t>(opts.replicates);
    for (std::size_t r = 0; r < R; ++r)
        rep.seeds.push_back(replicate_seed(opts.seed, r));

    struct Slot {
        std::vector<std::optional<std::vector<StepScore>>> scores;
        std::vector<std::string> errors;
        std::vector<Trajectory> traj;
        std::vector<FinalFactor> factors;
    };
    std::vector<Slot> slots(R);
    parallel_for(R, opts.workers, [&](std::size_t r) {
        Slot& s = slots[r];
        s.scores.resize(nm);
        s.errors.resize(nm);
        SimulatedData data;
        try {
            data = w.simulate(rep.seeds[r]);
        } catch (const std::exception& e) {
            for (auto& msg : s.errors)
                msg = std::string("simulation: ") + e.what();
            return;
        }
        for (std::size_t k = 0; k < nm; ++k) {
            Trajectory tr{prepared[k].name, static_cast<int>(r), {}, {}};
            FilterState final_state;
            const bool keep_final = opts.keep_factors && r == 0;
            try {
                s.scores[k] = run_method(w, prepared[k], data, opts.filter, opts.keep_trajectories ? &tr : nullptr,
                                         keep_final ? &final_state : nullptr);
                if (opts.keep_trajectories)
                    s.traj.push_back(std::move(tr));
                if (keep_final)
                    s.factors.push_back({prepared[k].name, prepared[k].ordering, std::move(final_state)});
            } catch (const std::exception& e) {
                s.errors[k] = e.what();
            }
        }
    });

    std::optional<std::size_t> dl;
    for (std::size_t k = 0; k < nm; ++k)
        if (prepared[k].name == "dl")
            dl = k;
    for (std::size_t r = 0; r < R; ++r) {
        const Slot& s = slots[r];
        const std::vector<StepScore>* ref = dl && s.scores[*dl] ? &*s.scores[*dl] : nullptr;
        for (std::size_t k = 0; k < nm; ++k) {
            if (!s.errors[k].empty())
                rep.errors.push_back({static_cast<int>(r), prepared[k].name, s.errors[k]});
            if (!s.scores[k])
                continue;
            const auto& sc = *s.scores[k];
            for (std::size_t i = 0; i < sc.size(); ++i) {
                ScoreRow row{prepared[k].name, prepared[k].N, sc[i].t, static_cast<int>(r), sc[i].log_score,
                             std::nullopt, sc[i].rmspe, std::nullopt};
                if (ref) {
                    row.dls = sc[i].log_score - (*ref)[i].log_score;
                    if ((*ref)[i].rmspe > 0.0)
                        row.rrmspe = rrmspe(sc[i].rmspe, (*ref)[i].rmspe);
                }
                rep.rows.push_back(std::move(row));
            }
        }
        for (const auto& tr : s.traj)
            rep.trajectories.push_back(tr);
        for (const auto& f : s.factors)
            rep.factors.push_back(f);
    }
    return rep;
}

} // namespace hvf
