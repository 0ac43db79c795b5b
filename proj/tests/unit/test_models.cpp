#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "hvfilter/models.hpp"
#include "oracles.hpp"

using namespace hvf;
using namespace hvf::testing;

namespace {

Vector random_state(index_t n, std::mt19937_64& rng, double scale = 3.0) {
    std::normal_distribution<double> z;
    Vector x(n);
    for (index_t i = 0; i < n; ++i)
        x[i] = scale * z(rng);
    return x;
}

} // namespace

TEST(ExpCovariance, Values) {
    std::vector<Location> l{{{0, 0}, 0}, {{0.15, 0}, 1}};
    auto k = exp_covariance(l, {2.0, 0.15});
    EXPECT_DOUBLE_EQ(k(0, 0), 2.0);
    EXPECT_NEAR(k(0, 1), 2.0 * std::exp(-1.0), 1e-15);
    auto p = exp_covariance(l, {1.0, 0.15});
    EXPECT_NEAR(p(1, 0), 0.3679, 1e-4);
    EXPECT_THROW(exp_covariance(l, {0.0, 1.0}), std::invalid_argument);
}

TEST(ExpCovariance, SymmetricPositiveDefinite) {
    auto k = exp_covariance(grid_locations(20), {1.0, 0.15});
    Matrix d = k.dense();
    EXPECT_EQ(d, d.transpose());
    EXPECT_EQ(Eigen::LLT<Matrix>(d).info(), Eigen::Success);
}

TEST(AdvectionDiffusion, ConstantsAndIdentity) {
    AdvDiffConfig cfg{5, 4e-3, 1e-2};
    RowSparse e = advection_diffusion_matrix(cfg);
    Vector c = Vector::Constant(25, 3.0);
    EXPECT_LT((e * c - c).cwiseAbs().maxCoeff(), 1e-14);
    for (Eigen::Index r = 0; r < e.rows(); ++r)
        EXPECT_LE(e.row(r).nonZeros(), 5);
    RowSparse id = advection_diffusion_matrix({5, 0.0, 0.0});
    EXPECT_EQ(Matrix(id), Matrix::Identity(25, 25));
    RowSparse diff = advection_diffusion_matrix({6, 1e-3, 0.0});
    Vector sums = (Matrix(diff) - Matrix::Identity(36, 36)).rowwise().sum();
    EXPECT_LT(sums.cwiseAbs().maxCoeff(), 1e-13);
}

TEST(AdvectionDiffusion, SinglePeakStencil) {
    const double alpha = 1e-3, beta = 2e-2;
    RowSparse e = advection_diffusion_matrix({5, alpha, beta});
    Vector x = Vector::Zero(25);
    const index_t peak = 2 * 5 + 2; // (ix, iy) = (2, 2)
    x[peak] = 1.0;
    Vector y = e * x;
    const double lap = alpha * 25, adv = beta * 2.5;
    EXPECT_NEAR(y[peak], 1 - 4 * lap, 1e-15);
    // A neighbour sees the peak through its own stencil: the left neighbour has the peak on its right.
    EXPECT_NEAR(y[2 * 5 + 1], lap + adv, 1e-15);
    EXPECT_NEAR(y[2 * 5 + 3], lap - adv, 1e-15);
    EXPECT_NEAR(y[1 * 5 + 2], lap + adv, 1e-15);
    EXPECT_NEAR(y[3 * 5 + 2], lap - adv, 1e-15);
    EXPECT_NEAR(y.sum(), 1.0, 1e-14);
}

TEST(Lorenz, K1IsLorenz96) {
    std::mt19937_64 rng(1);
    Lorenz05Config cfg{40, 1, 8.0, 0.005, 5, 1.0};
    for (int rep = 0; rep < 5; ++rep) {
        Vector x = random_state(40, rng);
        Vector f = lorenz05_rhs(x, cfg);
        for (index_t i = 0; i < 40; ++i) {
            auto at = [&](int k) { return x[(i + k + 40) % 40]; };
            EXPECT_NEAR(f[i], -at(-2) * at(-1) + at(-1) * at(1) - x[i] + 8.0, 1e-12);
        }
    }
    Vector fixed = Vector::Constant(40, 8.0);
    EXPECT_NEAR(lorenz05_rhs(fixed, cfg).cwiseAbs().maxCoeff(), 0.0, 1e-12);
}

TEST(Lorenz, SeparableFormMatchesDoubleSum) {
    std::mt19937_64 rng(2);
    for (int K : {1, 2, 3, 4, 8}) {
        Lorenz05Config cfg{60, K, 10.0, 0.005, 5, 0.2};
        Vector x = random_state(60, rng);
        EXPECT_LT((lorenz05_rhs(x, cfg) - lorenz_rhs_double_sum(x, K, 10.0)).cwiseAbs().maxCoeff(), 1e-10) << K;
    }
}

TEST(Lorenz, EvolveMatchesIndependentIntegrator) {
    std::mt19937_64 rng(3);
    Lorenz05Config cfg{120, 4, 10.0, 0.005, 5, 0.2};
    Vector x = 0.2 * random_state(120, rng);
    Vector ref = 0.2 * lorenz_rk4_reference(x / 0.2, 4, 10.0, 0.005, 5);
    EXPECT_LT((lorenz05_evolve(x, cfg) - ref).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Lorenz, JacobianMatchesFiniteDifferences) {
    std::mt19937_64 rng(4);
    Lorenz05Config cfg{60, 2, 10.0, 0.005, 5, 0.2};
    Vector x = 0.2 * random_state(60, rng);
    auto step = lorenz05_step(x, cfg);
    EXPECT_LT((step.next - lorenz05_evolve(x, cfg)).cwiseAbs().maxCoeff(), 1e-13);
    const double h = 1e-6;
    Matrix fd(60, 60);
    for (index_t j = 0; j < 60; ++j) {
        Vector e = Vector::Zero(60);
        e[j] = h;
        fd.col(j) = (lorenz05_evolve(x + e, cfg) - lorenz05_evolve(x - e, cfg)) / (2 * h);
    }
    const double rel = (Matrix(step.jacobian) - fd).cwiseAbs().maxCoeff() / fd.cwiseAbs().maxCoeff();
    EXPECT_LT(rel, 1e-4);
}

TEST(Lorenz, FourthOrderConvergence) {
    std::mt19937_64 rng(5);
    Lorenz05Config base{60, 2, 10.0, 0.01, 1, 1.0};
    Vector x = random_state(60, rng);
    auto run = [&](double dt, int steps) {
        Lorenz05Config c = base;
        c.dt = dt;
        c.steps = steps;
        return lorenz05_evolve(x, c);
    };
    const double dt = 0.05;
    Vector ref = run(dt / 10 / 8, 80);
    const double e1 = (run(dt, 1) - ref).norm();
    const double e2 = (run(dt / 2, 2) - ref).norm();
    const double ratio = e1 / e2;
    EXPECT_GE(ratio, 12.0);
    EXPECT_LE(ratio, 20.0);
}

TEST(Lorenz, NonFiniteStateRejected) {
    Lorenz05Config cfg{60, 2};
    Vector x = Vector::Zero(60);
    x[3] = std::nan("");
    EXPECT_THROW(lorenz05_evolve(x, cfg), std::runtime_error);
}

TEST(Simulation, NoiseFreeLimitAndEmptyStreams) {
    std::mt19937_64 rng(6);
    DenseGaussianSampler init(Vector::Zero(10), Matrix::Identity(10, 10));
    SsmSpec spec;
    spec.T = 3;
    spec.obs_fraction = 0.5;
    spec.family = LikelihoodFamily::gaussian(1e-30);
    spec.evolve = [](const Vector& x) { return Vector(0.5 * x); };
    spec.initial = &init;
    auto d = simulate_ssm(spec, rng);
    ASSERT_EQ(d.truth.size(), 4u);
    for (int t = 1; t <= 3; ++t) {
        EXPECT_LT((d.truth[t] - 0.5 * d.truth[t - 1]).norm(), 1e-15);
        EXPECT_EQ(d.obs[t].size(), 5u);
        for (std::size_t k = 0; k < 5; ++k)
            EXPECT_NEAR(d.obs[t].values[k], d.truth[t][d.obs[t].indices[k]], 1e-12);
    }
    spec.obs_fraction = 0.0;
    auto e = simulate_ssm(spec, rng);
    for (int t = 1; t <= 3; ++t)
        EXPECT_EQ(e.obs[t].size(), 0u);
}

TEST(Simulation, PoissonMoment) {
    std::mt19937_64 rng(7);
    double s = 0;
    const int m = 100000;
    for (int k = 0; k < m; ++k)
        s += sample_observation(LikelihoodFamily::poisson(), 0.0, rng);
    EXPECT_NEAR(s / m, 1.0, 0.01);
}

TEST(Simulation, SamplerCovariance) {
    std::mt19937_64 rng(8);
    Matrix c(2, 2);
    c << 2, 0.6, 0.6, 1;
    DenseGaussianSampler s(Vector::Zero(2), c);
    Matrix acc = Matrix::Zero(2, 2);
    const int m = 200000;
    for (int k = 0; k < m; ++k) {
        Vector v = s.draw(rng);
        acc += v * v.transpose();
    }
    EXPECT_LT(((acc / m) - c).cwiseAbs().maxCoeff(), 0.03);
}

TEST(Locations, CircleHasUnitCircumference) {
    auto l = circle_locations(100);
    double per = 0;
    for (index_t i = 0; i < 100; ++i)
        per += distance(l[i], l[(i + 1) % 100]);
    EXPECT_NEAR(per, 1.0, 1e-3);
}
