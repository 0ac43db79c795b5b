// Laplace posterior for Poisson counts on a 30 x 30 grid with an HV prior.

#include <cmath>
#include <cstdio>
#include <random>

#include "hvfilter/hvfilter.hpp"

using namespace hvf;

int main() {
    const index_t g = 30;
    const auto locs = grid_locations(g);
    const auto n = static_cast<index_t>(locs.size());

    const auto cfg = auto_hv_config(static_cast<std::size_t>(n), 30);
    const auto h = build_hierarchy(locs, cfg);
    const auto ord = ordering_of(h);
    const auto s = share(conditioning_pattern(h));
    std::printf("n=%d M=%d N=%zu nnz=%zu\n", n, cfg.M, s->max_conditioning(), s->nnz());

    const auto sigma = exp_covariance(locs, {1.0, 0.15}).permuted(ord);
    const auto prior = make_prior(Vector::Zero(n), sigma, s);

    // Smooth log-intensity, observed at every grid point.
    std::mt19937_64 rng(42);
    Vector truth(n), y(n);
    std::vector<index_t> idx(static_cast<std::size_t>(n));
    for (index_t i = 0; i < n; ++i) {
        const auto& c = locs[static_cast<std::size_t>(i)].coords;
        truth[i] = std::sin(2 * std::numbers::pi * c[0]) * std::cos(std::numbers::pi * c[1]);
        y[i] = std::poisson_distribution<int>(std::exp(truth[i]))(rng);
        idx[static_cast<std::size_t>(i)] = i;
    }
    auto obs = ObservationSet::uniform(idx, y, LikelihoodFamily::poisson())
                   .relabelled([&](index_t i) { return ord.rank_of(i); });

    const auto post = hvl(obs, prior);
    const Vector mean = ord.to_input(post.mean);
    const Vector sd = ord.to_input(Vector(marginal_variances(post.L).array().sqrt()));
    std::printf("newton iterations=%d last step=%.3g\n", post.iterations, post.last_step);
    std::printf("rmse(mean, truth)=%.4f  mean sd=%.4f\n", rmspe(truth, mean), sd.mean());
    std::printf("log score=%.3f\n", log_score(ord.to_pattern(truth), post.mean, post.U));
    return 0;
}
