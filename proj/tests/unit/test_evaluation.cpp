#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "generators.hpp"
#include "hvfilter/evaluation.hpp"

using namespace hvf;
using namespace hvf::testing;

TEST(Scores, LogScoreExamples) {
    auto s = share(SparsityPattern::dense(1));
    SparseLowerTri one(s, {1.0});
    auto u = SparseUpperTri::from_transpose(one);
    Vector x = Vector::Constant(1, 0.3);
    EXPECT_NEAR(log_score(x, x, u), 0.5 * std::log(2 * std::numbers::pi), 1e-12);
    EXPECT_NEAR(log_score(x, x, u), 0.9189, 1e-4);
    SparseLowerTri half(s, {0.5});
    EXPECT_NEAR(log_score(x, x, SparseUpperTri::from_transpose(half)) - log_score(x, x, u), std::log(2.0), 1e-12);
}

TEST(Scores, LogScoreMatchesDenseDensity) {
    std::mt19937_64 rng(1);
    auto f = make_hv(random_locations(32, rng), random_config(32, rng));
    auto l = random_factor(f.s, rng);
    auto u = invert_transpose_lower(l);
    Vector mu = Vector::Random(32), x = Vector::Random(32);
    Matrix ld = l.to_dense();
    Matrix cov = ld * ld.transpose();
    Eigen::LLT<Matrix> llt(cov);
    Vector r = x - mu;
    const double logdet = 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
    const double nll = 0.5 * (32 * std::log(2 * std::numbers::pi) + logdet + r.dot(llt.solve(r)));
    EXPECT_NEAR(log_score(x, mu, u), nll, 1e-10);
}

TEST(Scores, Rmspe) {
    Vector a = Vector::Random(10);
    EXPECT_EQ(rmspe(a, a), 0.0);
    EXPECT_NEAR(rmspe(a, Vector(a.array() + 2.0)), 2.0, 1e-12);
    EXPECT_DOUBLE_EQ(rrmspe(0.7, 0.7), 1.0);
    EXPECT_THROW(rrmspe(1.0, 0.0), std::invalid_argument);
    EXPECT_THROW(rmspe(a, Vector(3)), std::invalid_argument);
}

TEST(Seeds, SplitMixReference) {
    // First outputs of splitmix64 seeded with 0 and 1234567.
    EXPECT_EQ(replicate_seed(0, 0), 0xE220A8397B1DCDAFull);
    EXPECT_EQ(replicate_seed(1234567, 0), 6457827717110365317ull);
    EXPECT_EQ(replicate_seed(1234567, 1), 3203168211198807973ull);
}

TEST(Presets, HvConfigurations) {
    auto hv = hv_preset(ScenarioConfig::preset(ScenarioKind::advdiff));
    auto h = build_hierarchy(hvf::grid_locations(34), hv);
    EXPECT_EQ(conditioning_pattern(h).max_conditioning(), 41u);
    auto lz = ScenarioConfig::preset(ScenarioKind::lorenz);
    EXPECT_EQ(conditioning_pattern(build_hierarchy(circle_locations(960), hv_preset(lz))).max_conditioning(), 39u);
}

TEST(Presets, AutoConfigFits) {
    std::mt19937_64 rng(2);
    for (std::size_t n : {20u, 100u, 120u, 500u, 1000u, 4096u}) {
        for (std::size_t N : {20u, 41u}) {
            auto cfg = auto_hv_config(n, N);
            EXPECT_LE(cfg.implied_N(), N);
            auto h = build_hierarchy(random_locations(n, rng), cfg);
            EXPECT_LE(conditioning_pattern(h).max_conditioning(), N);
        }
    }
    EXPECT_THROW(auto_hv_config(10000, 4), std::invalid_argument);
    EXPECT_THROW(auto_hv_config(500, 8), std::invalid_argument);
}

namespace {

ScenarioConfig small_advdiff() {
    auto c = ScenarioConfig::preset(ScenarioKind::advdiff);
    c.advdiff.g = 10;
    c.T = 3;
    c.obs_fraction = 0.2;
    return c;
}

std::string csv_of(const ScoreReport& r) {
    std::ostringstream os;
    r.write_csv(os);
    return os.str();
}

} // namespace

TEST(Compare, ReferenceInvariantsAndDenseEquivalence) {
    auto w = build_world(small_advdiff());
    CompareOptions o;
    o.replicates = 2;
    o.seed = 7;
    o.methods = {{"hv", {}}, {"lr", {}}, {"dl", {}}, {"hv_m0", HierarchyConfig::dense(100)}};
    auto rep = compare_methods(w, o);
    EXPECT_TRUE(rep.errors.empty());
    EXPECT_EQ(rep.rows.size(), 2u * 4u * 3u);
    for (const auto& r : rep.rows) {
        ASSERT_TRUE(r.dls && r.rrmspe);
        if (r.method == "dl") {
            EXPECT_EQ(*r.dls, 0.0);
            EXPECT_EQ(*r.rrmspe, 1.0);
        }
        if (r.method == "hv_m0") {
            EXPECT_EQ(*r.dls, 0.0);
            EXPECT_EQ(*r.rrmspe, 1.0);
        }
        EXPECT_TRUE(std::isfinite(r.log_score));
    }
    EXPECT_EQ(rep.N[2], 99u);
    EXPECT_EQ(rep.N[1], rep.N[0]);
    EXPECT_EQ(rep.seeds.size(), 2u);
    EXPECT_EQ(rep.per_time("dl", Metric::dls), std::vector<double>(3, 0.0));
    EXPECT_EQ(rep.overall("dl", Metric::rrmspe), 1.0);
}

TEST(Compare, DeterministicAcrossWorkers) {
    auto w = build_world(small_advdiff());
    CompareOptions o;
    o.replicates = 3;
    o.seed = 11;
    auto a = compare_methods(w, o);
    o.workers = 3;
    auto b = compare_methods(w, o);
    EXPECT_EQ(csv_of(a), csv_of(b));
    o.seed = 12;
    EXPECT_NE(csv_of(a), csv_of(compare_methods(w, o)));
}

TEST(Compare, ZeroReplicatesGivesHeaderOnly) {
    auto w = build_world(small_advdiff());
    CompareOptions o;
    o.replicates = 0;
    auto r = compare_methods(w, o);
    EXPECT_EQ(csv_of(r), std::string(ScoreReport::csv_header) + "\n");
}

TEST(Compare, SkippingDlLeavesRelativeScoresMissing) {
    auto w = build_world(small_advdiff());
    CompareOptions o;
    o.methods = {{"hv", {}}, {"lr", {}}};
    auto r = compare_methods(w, o);
    ASSERT_FALSE(r.rows.empty());
    for (const auto& row : r.rows)
        EXPECT_FALSE(row.dls || row.rrmspe);
    EXPECT_NE(csv_of(r).find(",NA,"), std::string::npos);
    EXPECT_TRUE(std::isnan(r.overall("hv", Metric::dls)));
}

TEST(Compare, FailuresAreRecordedPerReplicate) {
    auto c = small_advdiff();
    c.family = LikelihoodFamily::poisson();
    auto w = build_world(c);
    CompareOptions o;
    o.replicates = 2;
    o.filter.hvl.max_iterations = 1;
    auto r = compare_methods(w, o);
    EXPECT_EQ(r.errors.size(), 6u);
    EXPECT_TRUE(r.rows.empty());
    EXPECT_NE(r.errors[0].message.find("last relative step"), std::string::npos);
}

TEST(Compare, LorenzSmoke) {
    auto c = ScenarioConfig::preset(ScenarioKind::lorenz);
    c.lorenz.n = 120;
    c.lorenz.K = 4;
    c.T = 3;
    c.lorenz_burn_in = 200;
    c.lorenz_samples = 2000;
    auto w = build_world(c, 3);
    CompareOptions o;
    o.keep_trajectories = true;
    auto r = compare_methods(w, o);
    EXPECT_TRUE(r.errors.empty()) << (r.errors.empty() ? "" : r.errors[0].message);
    EXPECT_EQ(r.rows.size(), 9u);
    for (const auto& row : r.rows) {
        EXPECT_TRUE(std::isfinite(row.log_score));
        EXPECT_TRUE(std::isfinite(row.rmspe));
    }
    ASSERT_EQ(r.trajectories.size(), 3u);
    EXPECT_EQ(r.trajectories[0].mean.size(), 3u);
    EXPECT_TRUE(r.trajectories[0].sd[2].allFinite());
}

TEST(Compare, SmoothLorenzSpinUpNeedsJitter) {
    auto c = ScenarioConfig::preset(ScenarioKind::lorenz);
    c.lorenz.n = 120;
    c.lorenz.K = 16;
    c.T = 2;
    c.lorenz_burn_in = 200;
    c.lorenz_samples = 1000;
    std::mt19937_64 rng(splitmix64(4));
    auto mom = lorenz05_moments(c.lorenz, c.lorenz_burn_in, c.lorenz_samples, rng);
    Eigen::SelfAdjointEigenSolver<Matrix> es(mom.cov, Eigen::EigenvaluesOnly);
    EXPECT_LT(es.eigenvalues()[0], 1e-10 * es.eigenvalues().maxCoeff());

    c.lorenz_jitter = 0.0;
    EXPECT_THROW(build_world(c, 4), std::runtime_error);
    c.lorenz_jitter = 1e-6;
    auto w = build_world(c, 4);
    EXPECT_NEAR(w.sigma0(5, 5), mom.cov(5, 5) + 1e-6 * mom.cov.diagonal().mean(), 1e-12);
    EXPECT_NEAR(w.sigma0(5, 9), mom.cov(5, 9), 1e-15);
    auto r = compare_methods(w, {});
    EXPECT_TRUE(r.errors.empty()) << (r.errors.empty() ? "" : r.errors[0].message);
    EXPECT_EQ(r.rows.size(), 6u);
}

TEST(Compare, SpatialNonGaussian) {
    for (const char* fam : {"gaussian", "bernoulli", "poisson", "gamma"}) {
        auto c = ScenarioConfig::preset(ScenarioKind::spatial, fam);
        c.advdiff.g = 12;
        auto w = build_world(c);
        CompareOptions o;
        o.replicates = 2;
        auto r = compare_methods(w, o);
        EXPECT_TRUE(r.errors.empty()) << fam;
        EXPECT_EQ(r.rows.size(), 6u) << fam;
        EXPECT_EQ(r.T, 1);
    }
}

TEST(Compare, SpatialDataIsSharedAcrossMethods) {
    auto c = ScenarioConfig::preset(ScenarioKind::spatial);
    c.advdiff.g = 8;
    auto w = build_world(c);
    auto d1 = w.simulate(5), d2 = w.simulate(5);
    EXPECT_EQ(d1.truth[1], d2.truth[1]);
    EXPECT_EQ(d1.obs[1].values, d2.obs[1].values);
    EXPECT_EQ(d1.truth[0], d1.truth[1]);
    EXPECT_EQ(d1.obs[1].size(), 64u);
}
