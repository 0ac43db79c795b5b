#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "generators.hpp"
#include "oracles.hpp"
#include "hvfilter/likelihoods.hpp"

using namespace hvf;
using namespace hvf::testing;

namespace {

const LikelihoodFamily kFamilies[] = {LikelihoodFamily::gaussian(0.2), LikelihoodFamily::bernoulli(),
                                      LikelihoodFamily::poisson(), LikelihoodFamily::gamma(2.0)};

std::vector<double> support_grid(const LikelihoodFamily& f) {
    switch (f.kind) {
    case Family::gaussian: return {-2.0, -0.3, 0.0, 1.0, 3.5};
    case Family::bernoulli_logit: return {0.0, 1.0};
    case Family::poisson_log: return {0.0, 1.0, 2.0, 7.0};
    case Family::gamma_log: return {0.1, 0.8, 1.0, 4.0};
    }
    return {};
}

double draw(const LikelihoodFamily& f, double x, std::mt19937_64& rng) {
    switch (f.kind) {
    case Family::gaussian: return std::normal_distribution<double>(x, std::sqrt(f.tau2))(rng);
    case Family::bernoulli_logit: return std::bernoulli_distribution(1 / (1 + std::exp(-x)))(rng) ? 1.0 : 0.0;
    case Family::poisson_log: return static_cast<double>(std::poisson_distribution<int>(std::exp(x))(rng));
    case Family::gamma_log: return std::gamma_distribution<double>(f.shape, std::exp(x) / f.shape)(rng);
    }
    return 0;
}

} // namespace

TEST(FamilyDerivatives, HandExamples) {
    auto g = family_derivatives(LikelihoodFamily::gaussian(0.2), 1.0, 0.0);
    EXPECT_DOUBLE_EQ(g.u, 5.0);
    EXPECT_DOUBLE_EQ(g.d, 0.2);
    EXPECT_DOUBLE_EQ(0.0 + g.d * g.u, 1.0);
    auto b = family_derivatives(LikelihoodFamily::bernoulli(), 1.0, 0.0);
    EXPECT_DOUBLE_EQ(b.u, 0.5);
    EXPECT_DOUBLE_EQ(b.d, 4.0);
    EXPECT_DOUBLE_EQ(b.d * b.u, 2.0);
    auto p = family_derivatives(LikelihoodFamily::poisson(), 2.0, 0.0);
    EXPECT_DOUBLE_EQ(p.u, 1.0);
    EXPECT_DOUBLE_EQ(p.d, 1.0);
    EXPECT_DOUBLE_EQ(p.d * p.u, 1.0);
}

TEST(FamilyDerivatives, SupportErrorsNameFamily) {
    for (auto [fam, y] : {std::pair{LikelihoodFamily::bernoulli(), 0.5}, std::pair{LikelihoodFamily::poisson(), -1.0},
                          std::pair{LikelihoodFamily::poisson(), 1.5}, std::pair{LikelihoodFamily::gamma(), 0.0}}) {
        try {
            family_derivatives(fam, y, 0.0);
            FAIL();
        } catch (const std::invalid_argument& e) {
            EXPECT_NE(std::string(e.what()).find(fam.name()), std::string::npos);
        }
    }
}

TEST(FamilyDerivatives, FiniteDifferences) {
    for (const auto& fam : kFamilies)
        for (double y : support_grid(fam))
            for (double x : {-2.0, -0.7, 0.0, 0.4, 1.5, 2.5}) {
                const double h = 1e-5;
                const auto fd = family_derivatives(fam, y, x);
                const double lp = loglik(fam, y, x + h), lm = loglik(fam, y, x - h), l0 = loglik(fam, y, x);
                const double du = (lp - lm) / (2 * h);
                EXPECT_LE(std::abs(fd.u - du), 1e-5 * std::max(1.0, std::abs(du))) << fam.name() << " y=" << y << " x=" << x;
                const double h2 = 1e-4;
                const double d2 = (loglik(fam, y, x + h2) - 2 * l0 + loglik(fam, y, x - h2)) / (h2 * h2);
                EXPECT_LE(std::abs(-1.0 / fd.d - d2), 1e-4 * std::max(1.0, std::abs(d2))) << fam.name() << " y=" << y << " x=" << x;
            }
}

TEST(FamilyDerivatives, BernoulliClamp) {
    auto b = family_derivatives(LikelihoodFamily::bernoulli(), 1.0, 60.0);
    EXPECT_TRUE(std::isfinite(b.d));
    EXPECT_NEAR(b.d / 1e12, 1.0, 1e-3);
}

TEST(PseudoData, GaussianIndependentOfX) {
    auto obs = ObservationSet::uniform({0, 2}, Vector::Constant(2, 0.7), LikelihoodFamily::gaussian(0.3));
    auto a = pseudo_data(obs, Vector::Zero(3));
    auto b = pseudo_data(obs, Vector::Constant(3, 9.0));
    EXPECT_EQ(a.t, b.t);
    EXPECT_EQ(a.d, b.d);
    EXPECT_EQ(a.t, obs.values);
    EXPECT_EQ(a.d, Vector::Constant(2, 0.3));
}

TEST(Hvl, GaussianSingleIterationEqualsHvPosterior) {
    std::mt19937_64 rng(1);
    auto f = make_hv(random_locations(100, rng), random_config(100, rng));
    Matrix k = exp_kernel_dense(f.ordered, 0.15);
    auto sig = [&](index_t i, index_t j) { return k(i, j); };
    Vector mu = Vector::Constant(100, 0.3);
    auto obs = ObservationSet::uniform({1, 5, 50, 99}, Vector::Random(4), LikelihoodFamily::gaussian(0.2));
    auto r = hvl(obs, f.s, mu, sig);
    EXPECT_EQ(r.iterations, 1);
    auto ref = hv_posterior(GaussianObsModel{obs.indices, obs.values, Vector::Constant(4, 0.2)}, f.s, mu, sig);
    EXPECT_EQ(r.mean, ref.mean);
    EXPECT_EQ(r.L.to_dense(), ref.L.to_dense());
}

TEST(Hvl, NoObservationsReturnsPrior) {
    std::mt19937_64 rng(2);
    auto f = make_hv(random_locations(30, rng), random_config(30, rng));
    Matrix k = exp_kernel_dense(f.ordered, 0.15);
    auto prior = make_prior(Vector::Ones(30), [&](index_t i, index_t j) { return k(i, j); }, f.s);
    auto r = hvl(ObservationSet{}, prior);
    EXPECT_EQ(r.iterations, 1);
    EXPECT_EQ(r.mean, prior.mean);
    EXPECT_EQ(r.L.to_dense(), prior.L.to_dense());
}

TEST(Hvl, ModesMatchDenseNewtonAndAscend) {
    std::mt19937_64 rng(3);
    for (const auto& fam : kFamilies) {
        if (fam.kind == Family::gaussian)
            continue;
        for (int rep = 0; rep < 3; ++rep) {
            const index_t n = 64 + static_cast<index_t>(rng() % 100);
            const bool dense = rep == 0;
            auto f = make_hv(random_locations(n, rng), dense ? HierarchyConfig::dense(n) : random_config(n, rng));
            Matrix k = exp_kernel_dense(f.ordered, 0.15);
            auto prior = make_prior(Vector::Zero(n), [&](index_t i, index_t j) { return k(i, j); }, f.s);
            Matrix l = prior.L.to_dense();
            Vector truth = l * Vector::NullaryExpr(n, [&] { return std::normal_distribution<double>()(rng); });
            std::vector<index_t> idx;
            Vector y(n / 2);
            for (index_t i = 0; i < n / 2; ++i) {
                idx.push_back(2 * i);
                y[i] = draw(fam, truth[2 * i], rng);
            }
            auto obs = ObservationSet::uniform(idx, y, fam);
            HvlOptions opt;
            opt.keep_trace = true;
            auto r = hvl(obs, prior, opt);
            EXPECT_LE(r.iterations, 50);
            Vector ref = dense_newton(obs, prior.mean, l * l.transpose());
            EXPECT_LT((r.mean - ref).cwiseAbs().maxCoeff(), 1e-6) << fam.name();
            for (std::size_t t = 1; t < r.trace.size(); ++t)
                EXPECT_GE(hv_log_posterior(obs, prior, r.trace[t]), hv_log_posterior(obs, prior, r.trace[t - 1]) - 1e-9)
                    << fam.name() << " iteration " << t;
        }
    }
}

TEST(Hvl, IterationCapReported) {
    std::mt19937_64 rng(4);
    auto f = make_hv(random_locations(20, rng), HierarchyConfig::dense(20));
    Matrix k = exp_kernel_dense(f.ordered, 0.5);
    auto prior = make_prior(Vector::Zero(20), [&](index_t i, index_t j) { return k(i, j); }, f.s);
    auto obs = ObservationSet::uniform({0, 1, 2}, Vector::Constant(3, 30.0), LikelihoodFamily::poisson());
    HvlOptions opt;
    opt.max_iterations = 2;
    try {
        hvl(obs, prior, opt);
        FAIL();
    } catch (const std::runtime_error& e) {
        EXPECT_NE(std::string(e.what()).find("last relative step"), std::string::npos);
    }
}

TEST(Hvl, PureNewtonAgreesWithDefault) {
    std::mt19937_64 rng(5);
    auto f = make_hv(random_locations(50, rng), random_config(50, rng));
    Matrix k = exp_kernel_dense(f.ordered, 0.2);
    auto prior = make_prior(Vector::Zero(50), [&](index_t i, index_t j) { return k(i, j); }, f.s);
    auto obs = ObservationSet::uniform({0, 10, 20, 30}, Vector::Constant(4, 1.0), LikelihoodFamily::bernoulli());
    HvlOptions a, b;
    a.step_halving = false;
    EXPECT_LT((hvl(obs, prior, a).mean - hvl(obs, prior, b).mean).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(Hvl, PureNewtonCanOvershootDefaultDoesNot) {
    // Large counts seen from x = 0: the first full Newton step overshoots the exp link.
    std::mt19937_64 rng(6);
    auto f = make_hv(random_locations(40, rng), HierarchyConfig::dense(40));
    Matrix k = exp_kernel_dense(f.ordered, 0.3);
    auto prior = make_prior(Vector::Zero(40), [&](index_t i, index_t j) { return k(i, j); }, f.s);
    std::vector<index_t> idx;
    for (index_t i = 0; i < 40; i += 2)
        idx.push_back(i);
    auto obs = ObservationSet::uniform(idx, Vector::Constant(20, 25.0), LikelihoodFamily::poisson());
    HvlOptions pure, safe;
    pure.step_halving = false;
    pure.keep_trace = safe.keep_trace = true;
    auto a = hvl(obs, prior, pure);
    auto b = hvl(obs, prior, safe);
    bool decreased = false;
    for (std::size_t t = 1; t < a.trace.size(); ++t)
        decreased = decreased || hv_log_posterior(obs, prior, a.trace[t]) < hv_log_posterior(obs, prior, a.trace[t - 1]);
    EXPECT_TRUE(decreased);
    for (std::size_t t = 1; t < b.trace.size(); ++t)
        EXPECT_GE(hv_log_posterior(obs, prior, b.trace[t]), hv_log_posterior(obs, prior, b.trace[t - 1]) - 1e-9);
    EXPECT_LT((a.mean - b.mean).cwiseAbs().maxCoeff(), 1e-6);
}
