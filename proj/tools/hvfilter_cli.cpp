// hvfilter: partition | simulate | run | score

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "hvfilter/config.hpp"
#include "hvfilter/hvfilter.hpp"

namespace fs = std::filesystem;
using namespace hvf;

namespace {

enum ExitCode { ok = 0, failure = 1, config_failure = 2, partial = 3 };

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("sha256 failed");
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i)
        os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return os.str();
}

/// Writes files under one output directory and lists each in manifest_<command>.txt with size and hash.
class OutputDir {
public:
    OutputDir(fs::path dir, std::string command) : dir_(std::move(dir)), command_(std::move(command)) {
        fs::create_directories(dir_);
    }

    void meta(const std::string& key, const std::string& value) { meta_.emplace_back(key, value); }

    void write(const std::string& name, const std::string& content) {
        std::ofstream f(dir_ / name, std::ios::binary);
        if (!f)
            throw std::runtime_error("cannot write " + (dir_ / name).string());
        f << content;
        files_.push_back({name, content.size(), sha256_hex(content)});
    }

    void finish() {
        std::ostringstream os;
        os << "# hvfilter manifest\n";
        os << "command = " << command_ << '\n';
        for (const auto& [k, v] : meta_)
            os << k << " = " << v << '\n';
        for (const auto& f : files_)
            os << "file = " << f.name << " bytes=" << f.bytes << " sha256=" << f.hash << '\n';
        std::ofstream m(dir_ / ("manifest_" + command_ + ".txt"), std::ios::binary);
        m << os.str();
    }

    const fs::path& path() const noexcept { return dir_; }

private:
    struct Entry {
        std::string name;
        std::size_t bytes;
        std::string hash;
    };
    fs::path dir_;
    std::string command_;
    std::vector<std::pair<std::string, std::string>> meta_;
    std::vector<Entry> files_;
};

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    int workers = 0;
    std::string out;
};

ExperimentConfig load(const CommonFlags& f, bool need_seed) {
    if (f.config.empty())
        throw ConfigError("--config", "a config file is required");
    auto c = load_experiment(f.config);
    if (f.seed)
        c.seed = f.seed;
    if (need_seed && !c.seed)
        throw ConfigError("seed", "required (set seed in the config or pass --seed)");
    if (!f.out.empty())
        c.output = f.out;
    return c;
}

std::string replicate_tag(std::size_t r) {
    char b[32];
    std::snprintf(b, sizeof b, "r%03zu", r);
    return b;
}

void describe(OutputDir& out, const CommonFlags& flags, const ExperimentConfig& c) {
    out.meta("config", flags.config);
    out.meta("scenario", std::string(scenario_name(c.scenario.kind)));
    out.meta("family", std::string(c.scenario.family.name()));
    out.meta("n", std::to_string(c.scenario.n()));
}

void record_seeds(OutputDir& out, std::uint64_t root, std::size_t replicates) {
    out.meta("seed", std::to_string(root));
    out.meta("seed_split", "splitmix64");
    for (std::size_t r = 0; r < replicates; ++r)
        out.meta("seed." + replicate_tag(r), std::to_string(replicate_seed(root, r)));
}

// ---------------------------------------------------------------------------------------------

int cmd_partition(const CommonFlags& flags) {
    const auto c = load(flags, false);
    const auto locs = scenario_locations(c.scenario);
    const auto n = static_cast<std::size_t>(locs.size());
    const HierarchyConfig hv = c.hierarchy ? *c.hierarchy : hv_preset(c.scenario);
    HierarchyConfig cfg = hv;
    if (c.preset == "dl")
        cfg = HierarchyConfig::dense(n);
    else if (c.preset == "lr")
        cfg = HierarchyConfig::low_rank(n, c.lr_N ? *c.lr_N : conditioning_pattern(build_hierarchy(locs, hv)).max_conditioning());
    const auto h = build_hierarchy(locs, cfg);
    const auto s = conditioning_pattern(h);

    OutputDir out(c.output, "partition");
    describe(out, flags, c);
    out.meta("preset", c.preset);
    out.meta("N", std::to_string(s.max_conditioning()));
    out.meta("nnz", std::to_string(s.nnz()));
    std::ostringstream pat;
    mm::write_pattern(pat, s);
    out.write("pattern.mtx", pat.str());
    out.write("hierarchy.txt", hierarchy_summary(h));
    std::ostringstream ord;
    ord << "rank,input_index,x,y,level\n";
    for (std::size_t k = 0; k < n; ++k) {
        const auto i = h.global_order[k];
        ord << k << ',' << i << ',' << detail::format_double(locs[i].coords[0]) << ','
            << detail::format_double(locs[i].coords[1]) << ',' << h.resolution(i) << '\n';
    }
    out.write("ordering.csv", ord.str());
    out.finish();
    std::cout << "partition: n=" << n << " N=" << s.max_conditioning() << " nnz=" << s.nnz() << " -> "
              << out.path().string() << '\n';
    return ok;
}

int cmd_simulate(const CommonFlags& flags) {
    const auto c = load(flags, true);
    const auto world = build_world(c.scenario, *c.seed);
    const auto R = static_cast<std::size_t>(c.replicates);
    std::vector<std::string> truth(R), obs(R);
    parallel_for(R, resolve_workers(flags.workers), [&](std::size_t r) {
        const auto d = world.simulate(replicate_seed(*c.seed, r));
        std::ostringstream ts, os;
        ts << "t,index,value\n";
        os << "t,index,value\n";
        for (std::size_t t = 0; t < d.truth.size(); ++t)
            for (Eigen::Index i = 0; i < d.truth[t].size(); ++i)
                ts << t << ',' << i << ',' << detail::format_double(d.truth[t][i]) << '\n';
        for (std::size_t t = 1; t < d.obs.size(); ++t)
            for (std::size_t k = 0; k < d.obs[t].size(); ++k)
                os << t << ',' << d.obs[t].indices[k] << ','
                   << detail::format_double(d.obs[t].values[static_cast<Eigen::Index>(k)]) << '\n';
        truth[r] = ts.str();
        obs[r] = os.str();
    });
    OutputDir out(c.output, "simulate");
    describe(out, flags, c);
    out.meta("T", std::to_string(c.scenario.T));
    record_seeds(out, *c.seed, R);
    for (std::size_t r = 0; r < R; ++r) {
        out.write("truth_" + replicate_tag(r) + ".csv", truth[r]);
        out.write("obs_" + replicate_tag(r) + ".csv", obs[r]);
    }
    out.finish();
    std::cout << "simulate: " << R << " replicate(s) -> " << out.path().string() << '\n';
    return ok;
}

int cmd_run(const CommonFlags& flags) {
    const auto c = load(flags, true);
    auto opts = c.compare_options();
    opts.workers = resolve_workers(flags.workers);
    ScoreReport rep;
    if (c.replicates == 0) {
        // Validate the method set without building samplers or factors.
        rep.scenario = scenario_name(c.scenario.kind);
        rep.family = c.scenario.family.name();
        rep.T = c.scenario.T;
    } else {
        const auto world = build_world(c.scenario, *c.seed);
        rep = compare_methods(world, opts);
    }

    OutputDir out(c.output, "run");
    describe(out, flags, c);
    out.meta("T", std::to_string(c.scenario.T));
    std::string methods;
    for (std::size_t k = 0; k < rep.methods.size(); ++k)
        methods += (k ? "," : "") + rep.methods[k] + ":N=" + std::to_string(rep.N[k]);
    out.meta("methods", methods);
    record_seeds(out, *c.seed, static_cast<std::size_t>(c.replicates));

    std::ostringstream scores, errors;
    rep.write_csv(scores);
    out.write("scores.csv", scores.str());
    rep.write_errors(errors);
    out.write("errors.csv", errors.str());
    if (c.trajectories) {
        std::ostringstream tr;
        rep.write_trajectories(tr);
        out.write("trajectories.csv", tr.str());
    }
    for (const auto& f : rep.factors) {
        std::ostringstream l, ord;
        mm::write_lower(l, f.state.L);
        out.write("factor_" + f.method + "_" + replicate_tag(0) + ".mtx", l.str());
        ord << "rank,input_index\n";
        for (std::size_t k = 0; k < f.ordering.size(); ++k)
            ord << k << ',' << f.ordering.input_of(static_cast<index_t>(k)) << '\n';
        out.write("ordering_" + f.method + ".csv", ord.str());
    }
    out.finish();

    std::cout << "run: " << rep.rows.size() << " score rows, " << rep.errors.size() << " failed run(s) -> "
              << out.path().string() << '\n';
    for (std::size_t k = 0; k < rep.methods.size() && !rep.rows.empty(); ++k) {
        const auto& m = rep.methods[k];
        std::cout << "  " << m << " N=" << rep.N[k] << " log_score=" << rep.overall(m, Metric::log_score)
                  << " dLS=" << rep.overall(m, Metric::dls) << " rmspe=" << rep.overall(m, Metric::rmspe)
                  << " rrmspe=" << rep.overall(m, Metric::rrmspe) << '\n';
    }
    for (const auto& e : rep.errors)
        std::cerr << nlohmann::json{{"replicate", e.replicate}, {"method", e.method}, {"error", e.message}}.dump()
                  << '\n';
    return rep.errors.empty() ? ok : partial;
}

/// Parses a score table written by `run`.
ScoreReport read_scores(const std::string& path) {
    std::ifstream f(path);
    if (!f)
        throw std::runtime_error("cannot open score table '" + path + "'");
    std::string line;
    if (!std::getline(f, line) || line != ScoreReport::csv_header)
        throw std::runtime_error("'" + path + "' is not a score table (unexpected header)");
    ScoreReport rep;
    int lineno = 1;
    const auto opt = [](const std::string& s) -> std::optional<double> {
        if (s == "NA")
            return std::nullopt;
        return std::stod(s);
    };
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty())
            continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            cells.push_back(cell);
        if (cells.size() != 10)
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected 10 columns");
        try {
            rep.scenario = cells[0];
            rep.family = cells[1];
            ScoreRow r{cells[2], std::stoul(cells[3]), std::stoi(cells[4]), std::stoi(cells[5]), std::stod(cells[6]),
                       opt(cells[7]), std::stod(cells[8]), opt(cells[9])};
            if (std::find(rep.methods.begin(), rep.methods.end(), r.method) == rep.methods.end()) {
                rep.methods.push_back(r.method);
                rep.N.push_back(r.N);
            }
            rep.T = std::max(rep.T, r.t);
            rep.replicates = std::max(rep.replicates, r.replicate + 1);
            rep.rows.push_back(std::move(r));
        } catch (const std::logic_error&) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed number");
        }
    }
    return rep;
}

int cmd_score(const CommonFlags& flags, const std::string& input) {
    std::string in = input;
    std::string out_dir = flags.out;
    if (!flags.config.empty()) {
        const auto c = load(flags, false);
        if (in.empty())
            in = (fs::path(c.output) / "scores.csv").string();
        if (out_dir.empty())
            out_dir = c.output;
    }
    if (in.empty())
        throw ConfigError("--in", "a score table is required (or --config pointing at a run)");
    if (out_dir.empty())
        out_dir = fs::path(in).parent_path().string();
    const auto rep = read_scores(in);

    const auto fmt = [](double v) { return std::isnan(v) ? std::string("NA") : detail::format_double(v); };
    std::ostringstream os;
    os << "scenario,family,method,N,t,log_score,dLS,rmspe,rrmspe\n";
    const Metric metrics[] = {Metric::log_score, Metric::dls, Metric::rmspe, Metric::rrmspe};
    for (std::size_t k = 0; k < rep.methods.size(); ++k) {
        const auto& m = rep.methods[k];
        std::vector<std::vector<double>> per;
        for (auto mt : metrics)
            per.push_back(rep.per_time(m, mt));
        for (int t = 0; t < rep.T; ++t) {
            os << rep.scenario << ',' << rep.family << ',' << m << ',' << rep.N[k] << ',' << t + 1;
            for (const auto& p : per)
                os << ',' << fmt(p[static_cast<std::size_t>(t)]);
            os << '\n';
        }
        os << rep.scenario << ',' << rep.family << ',' << m << ',' << rep.N[k] << ",all";
        for (auto mt : metrics)
            os << ',' << fmt(rep.overall(m, mt));
        os << '\n';
    }
    OutputDir out(out_dir, "score");
    out.meta("input", in);
    out.meta("replicates", std::to_string(rep.replicates));
    out.write("summary.csv", os.str());
    out.finish();
    std::cout << os.str();
    return ok;
}

void write_error_record(const std::string& dir, const nlohmann::json& j) {
    std::cerr << j.dump() << '\n';
    if (dir.empty())
        return;
    std::error_code ec;
    fs::create_directories(dir, ec);
    std::ofstream f(fs::path(dir) / "error.json");
    if (f)
        f << j.dump(2) << '\n';
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical Vecchia filtering experiments"};
    app.require_subcommand(1);
    CommonFlags flags;
    std::uint64_t seed = 0;
    std::string input;

    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", flags.config, "experiment file (key = value)");
        sub->add_option("--seed", seed, "root seed, overrides the config");
        sub->add_option("--workers", flags.workers, "worker threads (default: HVFILTER_WORKERS or 1)");
        sub->add_option("--out", flags.out, "output directory, overrides output.dir");
    };
    auto* partition = app.add_subcommand("partition", "build a hierarchy and write its pattern and summary");
    auto* simulate = app.add_subcommand("simulate", "simulate truth and observation streams");
    auto* run = app.add_subcommand("run", "simulate, filter and score every method");
    auto* score = app.add_subcommand("score", "aggregate a score table per method and time");
    for (auto* s : {partition, simulate, run, score})
        add_common(s);
    score->add_option("--in", input, "score table written by run");

    CLI11_PARSE(app, argc, argv);
    for (auto* s : {partition, simulate, run, score})
        if (s->parsed() && s->count("--seed"))
            flags.seed = seed;

    std::string command = "unknown";
    for (auto* s : {partition, simulate, run, score})
        if (s->parsed())
            command = s->get_name();

    try {
        if (partition->parsed())
            return cmd_partition(flags);
        if (simulate->parsed())
            return cmd_simulate(flags);
        if (run->parsed())
            return cmd_run(flags);
        return cmd_score(flags, input);
    } catch (const ConfigError& e) {
        write_error_record(flags.out, {{"command", command}, {"kind", "config"}, {"key", e.key()}, {"error", e.what()}});
        return config_failure;
    } catch (const std::exception& e) {
        std::string dir = flags.out;
        if (dir.empty() && !flags.config.empty()) {
            try {
                dir = load_experiment(flags.config).output;
            } catch (...) {
            }
        }
        write_error_record(dir, {{"command", command}, {"kind", "runtime"}, {"error", e.what()}});
        return failure;
    }
}
