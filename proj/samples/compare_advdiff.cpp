// Filters one advection-diffusion data set with HV, LR and DL and prints the averaged scores.

#include <cstdio>
#include <string>

#include "hvfilter/hvfilter.hpp"

using namespace hvf;

int main(int argc, char** argv) {
    const std::string family = argc > 1 ? argv[1] : "poisson";
    auto cfg = ScenarioConfig::preset(ScenarioKind::advdiff, family);
    cfg.advdiff.g = 20;
    cfg.T = 10;

    const auto world = build_world(cfg, 1);
    CompareOptions opts;
    opts.replicates = 2;
    opts.seed = 1;
    const auto rep = compare_methods(world, opts);

    std::printf("%-4s %5s %10s %10s %10s\n", "", "N", "logscore", "dLS", "rmspe");
    for (std::size_t k = 0; k < rep.methods.size(); ++k) {
        const auto& m = rep.methods[k];
        std::printf("%-4s %5zu %10.3f %10.3f %10.4f\n", m.c_str(), rep.N[k], rep.overall(m, Metric::log_score),
                    rep.overall(m, Metric::dls), rep.overall(m, Metric::rmspe));
    }
    for (const auto& e : rep.errors)
        std::printf("replicate %d %s failed: %s\n", e.replicate, e.method.c_str(), e.message.c_str());
    return rep.errors.empty() ? 0 : 1;
}
