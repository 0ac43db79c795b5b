#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hvfilter/evaluation.hpp"

namespace hvf {

/// Raised for malformed or inconsistent experiment files; carries the offending key.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& key, const std::string& what) :
        std::runtime_error(key.empty() ? what : key + ": " + what), key_(key) { }
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

/// Flat `key = value` text. `[section]` lines prefix the keys that follow with `section.`;
/// `#` starts a comment.
class KeyValueFile {
public:
    static KeyValueFile parse(std::istream& is) {
        KeyValueFile kv;
        std::string line, section;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            if (auto h = line.find('#'); h != std::string::npos)
                line.erase(h);
            line = trim(line);
            if (line.empty())
                continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw ConfigError("", "line " + std::to_string(lineno) + ": unterminated section header");
                section = trim(line.substr(1, line.size() - 2));
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("", "line " + std::to_string(lineno) + ": expected key = value");
            std::string key = trim(line.substr(0, eq));
            if (key.empty())
                throw ConfigError("", "line " + std::to_string(lineno) + ": empty key");
            if (!section.empty())
                key = section + "." + key;
            if (kv.values_.count(key))
                throw ConfigError(key, "set twice (line " + std::to_string(lineno) + ")");
            kv.values_[key] = trim(line.substr(eq + 1));
        }
        return kv;
    }

    static KeyValueFile load(const std::string& path) {
        std::ifstream f(path);
        if (!f)
            throw ConfigError("", "cannot open config file '" + path + "'");
        return parse(f);
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::optional<std::string> get(const std::string& key) const {
        used_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end())
            return std::nullopt;
        return it->second;
    }

    std::optional<double> number(const std::string& key) const {
        auto v = get(key);
        if (!v)
            return std::nullopt;
        try {
            std::size_t pos = 0;
            const double d = std::stod(*v, &pos);
            if (pos == v->size())
                return d;
        } catch (...) {
        }
        throw ConfigError(key, "expected a number, got '" + *v + "'");
    }

    std::optional<long long> integer(const std::string& key) const {
        auto v = get(key);
        if (!v)
            return std::nullopt;
        try {
            std::size_t pos = 0;
            const long long d = std::stoll(*v, &pos);
            if (pos == v->size())
                return d;
        } catch (...) {
        }
        throw ConfigError(key, "expected an integer, got '" + *v + "'");
    }

    std::optional<std::uint64_t> unsigned64(const std::string& key) const {
        auto v = get(key);
        if (!v)
            return std::nullopt;
        try {
            std::size_t pos = 0;
            if (!v->empty() && (*v)[0] != '-') {
                const auto d = std::stoull(*v, &pos);
                if (pos == v->size())
                    return d;
            }
        } catch (...) {
        }
        throw ConfigError(key, "expected an unsigned 64-bit integer, got '" + *v + "'");
    }

    std::optional<bool> boolean(const std::string& key) const {
        auto v = get(key);
        if (!v)
            return std::nullopt;
        if (*v == "true" || *v == "1" || *v == "yes")
            return true;
        if (*v == "false" || *v == "0" || *v == "no")
            return false;
        throw ConfigError(key, "expected true or false, got '" + *v + "'");
    }

    std::optional<std::vector<std::string>> list(const std::string& key) const {
        auto v = get(key);
        if (!v)
            return std::nullopt;
        std::vector<std::string> out;
        std::stringstream ss(*v);
        std::string item;
        while (std::getline(ss, item, ','))
            if (auto t = trim(item); !t.empty())
                out.push_back(t);
        return out;
    }

    /// Keys present in the file but never read.
    std::vector<std::string> unused() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : values_)
            if (!used_.count(k))
                out.push_back(k);
        return out;
    }

    static std::string trim(const std::string& s) {
        std::size_t a = 0, b = s.size();
        while (a < b && std::isspace(static_cast<unsigned char>(s[a])))
            ++a;
        while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1])))
            --b;
        return s.substr(a, b - a);
    }

private:
    std::map<std::string, std::string> values_;
    mutable std::set<std::string> used_;
};

struct ExperimentConfig {
    ScenarioConfig scenario;
    std::vector<std::string> methods{"hv", "lr", "dl"};
    std::string preset = "hv";                ///< hierarchy built by `partition`
    std::optional<HierarchyConfig> hierarchy; ///< replaces the HV preset when given
    std::optional<std::size_t> lr_N;
    int replicates = 1;
    std::optional<std::uint64_t> seed;
    std::string output = "out";
    FilterOptions filter;
    bool trajectories = false;
    bool factors = false;

    void validate() const {
        scenario.validate();
        if (replicates < 0)
            throw ConfigError("replicates", "must be >= 0");
        if (methods.empty())
            throw ConfigError("methods", "at least one method is required");
        for (const auto& m : methods)
            if (m != "hv" && m != "lr" && m != "dl")
                throw ConfigError("methods", "unknown method '" + m + "' (expected hv, lr or dl)");
        if (preset != "hv" && preset != "lr" && preset != "dl")
            throw ConfigError("hierarchy.preset", "expected hv, lr or dl");
        if (hierarchy)
            try {
                hierarchy->validate();
            } catch (const std::invalid_argument& e) {
                throw ConfigError("hierarchy", e.what());
            }
        if (filter.hvl.max_iterations < 1)
            throw ConfigError("filter.max_iterations", "must be >= 1");
        if (!(filter.hvl.eps > 0.0))
            throw ConfigError("filter.eps", "must be > 0");
    }

    CompareOptions compare_options() const {
        CompareOptions o;
        o.methods.clear();
        for (const auto& m : methods)
            o.methods.push_back({m, {}});
        o.replicates = replicates;
        o.seed = seed.value_or(0);
        o.hv = hierarchy;
        o.lr_N = lr_N;
        o.filter = filter;
        o.keep_trajectories = trajectories;
        o.keep_factors = factors;
        return o;
    }
};

/// Builds an experiment from a key-value file. Scenario defaults come from the scenario preset
/// for the chosen family; every other key overrides one field. Unknown keys are rejected.
inline ExperimentConfig parse_experiment(const KeyValueFile& kv) {
    ExperimentConfig c;
    ScenarioKind kind;
    try {
        kind = parse_scenario(kv.get("scenario").value_or("advdiff"));
    } catch (const std::invalid_argument& e) {
        throw ConfigError("scenario", e.what());
    }
    const std::string fam = kv.get("family").value_or("gaussian");
    try {
        c.scenario = ScenarioConfig::preset(kind, fam);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("family", e.what());
    }
    auto& s = c.scenario;
    if (auto v = kv.integer("T"))
        s.T = static_cast<int>(*v);
    if (auto v = kv.number("obs_fraction"))
        s.obs_fraction = *v;
    if (auto v = kv.number("model.tau2"))
        s.family.tau2 = *v;
    if (auto v = kv.number("model.gamma_shape"))
        s.family.shape = *v;
    if (auto v = kv.number("model.kernel.variance"))
        s.kernel.variance = *v;
    if (auto v = kv.number("model.kernel.range"))
        s.kernel.range = *v;
    if (auto v = kv.integer("model.grid")) {
        if (*v < 1)
            throw ConfigError("model.grid", "must be positive");
        s.advdiff.g = static_cast<index_t>(*v);
    }
    if (auto v = kv.number("model.alpha"))
        s.advdiff.alpha = *v;
    if (auto v = kv.number("model.beta"))
        s.advdiff.beta = *v;
    if (auto v = kv.integer("model.lorenz.n")) {
        if (*v < 1)
            throw ConfigError("model.lorenz.n", "must be positive");
        s.lorenz.n = static_cast<index_t>(*v);
    }
    if (auto v = kv.integer("model.lorenz.K"))
        s.lorenz.K = static_cast<int>(*v);
    if (auto v = kv.number("model.lorenz.F"))
        s.lorenz.F = *v;
    if (auto v = kv.number("model.lorenz.dt"))
        s.lorenz.dt = *v;
    if (auto v = kv.integer("model.lorenz.steps"))
        s.lorenz.steps = static_cast<int>(*v);
    if (auto v = kv.number("model.lorenz.b"))
        s.lorenz.b = *v;
    if (auto v = kv.number("model.lorenz.q_variance"))
        s.lorenz_q.variance = *v;
    if (auto v = kv.number("model.lorenz.q_range"))
        s.lorenz_q.range = *v;
    if (auto v = kv.integer("model.lorenz.burn_in"))
        s.lorenz_burn_in = static_cast<int>(*v);
    if (auto v = kv.integer("model.lorenz.samples"))
        s.lorenz_samples = static_cast<int>(*v);
    if (auto v = kv.number("model.lorenz.jitter"))
        s.lorenz_jitter = *v;

    if (auto v = kv.list("methods"))
        c.methods = *v;
    if (auto v = kv.integer("replicates"))
        c.replicates = static_cast<int>(*v);
    c.seed = kv.unsigned64("seed");
    if (auto v = kv.get("output.dir"))
        c.output = *v;
    if (auto v = kv.boolean("output.trajectories"))
        c.trajectories = *v;
    if (auto v = kv.boolean("output.factors"))
        c.factors = *v;

    if (auto v = kv.get("hierarchy.preset"))
        c.preset = *v;
    const bool custom = kv.has("hierarchy.M") || kv.has("hierarchy.set_sizes") || kv.has("hierarchy.J") ||
                        kv.has("hierarchy.leaf_cap");
    if (custom) {
        HierarchyConfig h;
        h.M = static_cast<int>(kv.integer("hierarchy.M").value_or(0));
        h.J = static_cast<int>(kv.integer("hierarchy.J").value_or(2));
        h.leaf_cap = static_cast<std::size_t>(kv.integer("hierarchy.leaf_cap").value_or(1));
        for (const auto& item : kv.list("hierarchy.set_sizes").value_or(std::vector<std::string>{})) {
            try {
                const long long r = std::stoll(item);
                if (r < 1)
                    throw std::invalid_argument("");
                h.set_sizes.push_back(static_cast<std::size_t>(r));
            } catch (...) {
                throw ConfigError("hierarchy.set_sizes", "expected positive integers, got '" + item + "'");
            }
        }
        c.hierarchy = h;
    }
    if (auto v = kv.integer("hierarchy.N")) {
        if (*v < 1)
            throw ConfigError("hierarchy.N", "must be positive");
        c.lr_N = static_cast<std::size_t>(*v);
    }

    if (auto v = kv.number("filter.eps"))
        c.filter.hvl.eps = *v;
    if (auto v = kv.integer("filter.max_iterations"))
        c.filter.hvl.max_iterations = static_cast<int>(*v);
    if (auto v = kv.boolean("filter.step_halving"))
        c.filter.hvl.step_halving = *v;

    if (auto extra = kv.unused(); !extra.empty())
        throw ConfigError(extra.front(), "unknown key");
    try {
        c.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError("", e.what());
    }
    return c;
}

inline ExperimentConfig load_experiment(const std::string& path) { return parse_experiment(KeyValueFile::load(path)); }

} // namespace hvf
