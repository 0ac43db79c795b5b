#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "hvfilter/config.hpp"

using namespace hvf;

namespace {

ExperimentConfig parse(const std::string& text) {
    std::istringstream is(text);
    return parse_experiment(KeyValueFile::parse(is));
}

std::string error_key(const std::string& text) {
    try {
        parse(text);
    } catch (const ConfigError& e) {
        return e.key();
    }
    return "<no error>";
}

} // namespace

TEST(KeyValue, SectionsAndComments) {
    std::istringstream is("a = 1  # trailing\n\n# whole line\n[sec]\nb= two words \n[]\nc=3\n");
    auto kv = KeyValueFile::parse(is);
    EXPECT_EQ(kv.get("a"), "1");
    EXPECT_EQ(kv.get("sec.b"), "two words");
    EXPECT_EQ(kv.integer("c"), 3);
    EXPECT_FALSE(kv.get("b"));
    EXPECT_TRUE(kv.unused().empty());
}

TEST(KeyValue, DuplicateKeyRejected) {
    std::istringstream is("[model]\ngrid = 3\n[other]\n[model]\ngrid = 4\n");
    try {
        KeyValueFile::parse(is);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.key(), "model.grid");
    }
}

TEST(KeyValue, MalformedLines) {
    std::istringstream a("just words\n"), b("[open\n"), c(" = 3\n");
    EXPECT_THROW(KeyValueFile::parse(a), ConfigError);
    EXPECT_THROW(KeyValueFile::parse(b), ConfigError);
    EXPECT_THROW(KeyValueFile::parse(c), ConfigError);
}

TEST(KeyValue, TypedAccessors) {
    std::istringstream is("x = 1.5e-3\nn = -4\nu = 18446744073709551615\nflag = no\nl = a, b ,,c\n");
    auto kv = KeyValueFile::parse(is);
    EXPECT_DOUBLE_EQ(*kv.number("x"), 1.5e-3);
    EXPECT_EQ(*kv.integer("n"), -4);
    EXPECT_EQ(*kv.unsigned64("u"), 18446744073709551615ull);
    EXPECT_EQ(*kv.boolean("flag"), false);
    EXPECT_EQ(*kv.list("l"), (std::vector<std::string>{"a", "b", "c"}));
    EXPECT_THROW(kv.integer("x"), ConfigError);
    EXPECT_THROW(kv.unsigned64("n"), ConfigError);
    EXPECT_THROW(kv.boolean("l"), ConfigError);
}

TEST(Experiment, DefaultsFollowScenarioPreset) {
    auto c = parse("scenario = advdiff\nfamily = gamma\nseed = 3\n");
    auto p = ScenarioConfig::preset(ScenarioKind::advdiff, "gamma");
    EXPECT_EQ(c.scenario.T, p.T);
    EXPECT_EQ(c.scenario.advdiff.g, p.advdiff.g);
    EXPECT_EQ(c.scenario.family.name(), "gamma");
    EXPECT_EQ(c.seed, 3u);
    EXPECT_EQ(c.methods, (std::vector<std::string>{"hv", "lr", "dl"}));
    EXPECT_FALSE(c.hierarchy);
}

TEST(Experiment, OverridesReachCompareOptions) {
    auto c = parse("scenario = lorenz\nmethods = hv, dl\nreplicates = 4\nseed = 9\n"
                   "[model.lorenz]\nn = 40\nK = 4\n[hierarchy]\nM = 2\nJ = 2\nset_sizes = 4, 3\nleaf_cap = 2\nN = 9\n"
                   "[filter]\neps = 1e-6\nmax_iterations = 7\nstep_halving = false\n"
                   "[output]\ntrajectories = true\nfactors = yes\ndir = results\n");
    EXPECT_EQ(c.scenario.lorenz.n, 40);
    EXPECT_EQ(c.scenario.lorenz.K, 4);
    ASSERT_TRUE(c.hierarchy);
    EXPECT_EQ(c.hierarchy->set_sizes, (std::vector<std::size_t>{4, 3}));
    EXPECT_EQ(c.output, "results");
    auto o = c.compare_options();
    ASSERT_EQ(o.methods.size(), 2u);
    EXPECT_EQ(o.methods[1].name, "dl");
    EXPECT_EQ(o.replicates, 4);
    EXPECT_EQ(o.seed, 9u);
    EXPECT_EQ(o.lr_N, 9u);
    EXPECT_EQ(o.filter.hvl.max_iterations, 7);
    EXPECT_FALSE(o.filter.hvl.step_halving);
    EXPECT_TRUE(o.keep_trajectories);
    EXPECT_TRUE(o.keep_factors);
}

TEST(Experiment, ErrorsNameTheKey) {
    EXPECT_EQ(error_key("scenario = advdiff\ncolour = red\n"), "colour");
    EXPECT_EQ(error_key("scenario = weather\n"), "scenario");
    EXPECT_EQ(error_key("family = cauchy\n"), "family");
    EXPECT_EQ(error_key("T = 2.5\n"), "T");
    EXPECT_EQ(error_key("methods = hv, kf\n"), "methods");
    EXPECT_EQ(error_key("replicates = -1\n"), "replicates");
    EXPECT_EQ(error_key("hierarchy.M = 2\nhierarchy.set_sizes = 3\n"), "hierarchy");
    EXPECT_EQ(error_key("hierarchy.M = 1\nhierarchy.set_sizes = 0\n"), "hierarchy.set_sizes");
    EXPECT_EQ(error_key("filter.eps = 0\n"), "filter.eps");
    EXPECT_EQ(error_key("hierarchy.preset = kf\n"), "hierarchy.preset");
    EXPECT_EQ(error_key("model.grid = 0\n"), "model.grid");
}

TEST(Experiment, SeedIsOptional) {
    EXPECT_FALSE(parse("scenario = spatial\n").seed);
}
