// prgp: run experiments, summarize results, size hypothesis spaces and verify
// models against the benchmark problems.

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "prgp/harness.hpp"
#include "prgp/localopt.hpp"
#include "prgp/problems.hpp"
#include "prgp/simplify.hpp"

namespace fs = std::filesystem;
using namespace prgp;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kIoError = 2;

// Thrown for bad input files; maps to the I/O exit code.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void print_summary(const SummaryStats& s)
{
    fmt::print("runs {}  successes {}  ({:.1f}%)\n", s.runs, s.successes, s.runs ? 100.0 * s.successes / s.runs : 0.0);
    if (s.trend.empty()) {
        return;
    }
    const auto& last = s.trend.back();
    fmt::print("final generation {}: median {:.3e}  q1 {:.3e}  q3 {:.3e}  min {:.3e}  max {:.3e}  outliers {}\n",
        last.generation, last.median, last.q1, last.q3, last.min, last.max, last.outliers);
    for (const auto& row : s.cdf) {
        if (row.fraction >= 0.5) {
            fmt::print("half of the runs succeeded by generation {}\n", row.generation);
            break;
        }
    }
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed, std::optional<int> repeats,
    std::optional<std::string> out, std::optional<int> workers, bool quiet)
{
    std::string text;
    try {
        text = read_file(config_path);
    } catch (const std::exception& ex) {
        throw IoError(ex.what());
    }
    auto cfg = ExperimentConfig::parse(text);
    if (seed) {
        cfg.seed_base = *seed;
    }
    if (repeats) {
        cfg.repeats = *repeats;
    }
    if (out) {
        cfg.out_dir = *out;
    }
    if (workers) {
        cfg.trial_workers = *workers;
    }
    cfg.validate();

    const auto result = run_experiment(cfg, [&](const TrialRecord& r, bool reused) {
        if (quiet) {
            return;
        }
        fmt::print("seed {:>4}  {:<15} generations {:>5}  best {:.3e}{}\n", r.seed, to_string(r.stop),
            r.best_fitness.empty() ? 0 : r.best_fitness.size() - 1, r.best_fitness.empty() ? NAN : r.best_fitness.back(),
            reused ? "  (reused)" : "");
        std::fflush(stdout);
    });
    for (const auto& e : result.errors) {
        fmt::print(stderr, "error: {}\n", e);
    }
    const auto stats = summarize(result.records);
    try {
        export_plot_data(stats, cfg.out_dir);
        write_file_atomic(cfg.out_dir / "config.txt", cfg.to_text());
    } catch (const std::exception& ex) {
        throw IoError(ex.what());
    }
    print_summary(stats);
    return result.errors.empty() ? kOk : kIoError;
}

int cmd_summarize(const std::string& dir)
{
    if (!fs::is_directory(dir)) {
        throw IoError(fmt::format("{} is not a directory", dir));
    }
    const auto result = load_records(dir);
    for (const auto& e : result.errors) {
        fmt::print(stderr, "error: {}\n", e);
    }
    if (result.records.empty()) {
        throw IoError(fmt::format("no records in {}", dir));
    }
    const auto stats = summarize(result.records);
    try {
        export_plot_data(stats, dir);
    } catch (const std::exception& ex) {
        throw IoError(ex.what());
    }
    print_summary(stats);
    return result.errors.empty() ? kOk : kIoError;
}

int cmd_hspace(int d, int m, int n)
{
    HypothesisSpace h;
    try {
        h = hypothesis_space_size(d, m, n);
    } catch (const std::invalid_argument& ex) {
        throw ConfigError(ex.what());
    }
    fmt::print("exact  {:.3e}\napprox {:.3e}\n", h.exact, h.approx);
    return kOk;
}

struct ProblemFlags {
    std::string kind;
    int n { -1 };
    int m { -1 };
    int d { 1 };
    int test { 1 };
    bool physics { true };
    std::uint64_t seed { 0 };
};

struct LoadedModel {
    Individual ind;
    std::optional<std::string> manifest;
};

// A record file, or a model file of "dimension D" / "model <infix>" lines.
LoadedModel load_model(const std::string& path)
{
    std::string text;
    try {
        text = read_file(path);
    } catch (const std::exception& ex) {
        throw IoError(ex.what());
    }
    LoadedModel out;
    if (text.rfind("prgp-record", 0) == 0) {
        const auto rec = TrialRecord::parse(text);
        out.ind = Individual(rec.best_graph);
        out.ind.coeffs = rec.best_coeffs;
        out.manifest = rec.manifest;
        return out;
    }
    int dimension = 1;
    std::optional<std::string> infix;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = line.substr(0, line.find('#'));
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) {
            continue;
        }
        std::string rest;
        std::getline(ls, rest);
        if (key == "dimension") {
            dimension = std::stoi(rest);
        } else if (key == "model") {
            infix = rest;
        } else {
            throw ParseError(fmt::format("unknown key '{}'", key), lineno, 1);
        }
    }
    if (!infix) {
        throw ParseError("missing 'model' line", lineno, 1);
    }
    const auto parsed = parse_infix(*infix, dimension);
    out.ind = Individual(parsed.graph);
    out.ind.coeffs = parsed.coeffs;
    return out;
}

int cmd_verify(const std::string& model_path, const ProblemFlags& flags)
{
    auto model = load_model(model_path);
    Problem problem;
    if (!flags.kind.empty()) {
        ProblemParams pp;
        try {
            pp.kind = parse_problem_kind(flags.kind);
        } catch (const std::invalid_argument& ex) {
            throw ConfigError(ex.what());
        }
        pp.dimension = pp.kind == ProblemKind::poisson ? flags.d : 1;
        pp.n = flags.n < 0 && pp.kind == ProblemKind::euler_bernoulli ? 11 : flags.n;
        pp.m = flags.m;
        pp.test = flags.test;
        pp.physics = flags.physics;
        pp.seed = flags.seed;
        try {
            problem = build_problem(pp);
        } catch (const std::invalid_argument& ex) {
            throw ConfigError(ex.what());
        }
    } else if (model.manifest) {
        problem = problem_from_manifest(*model.manifest);
    } else {
        throw ConfigError("--problem is required for a model file");
    }
    if (model.ind.graph.dimension() != problem.dimension) {
        throw ConfigError(fmt::format("model dimension {} does not match the problem ({})", model.ind.graph.dimension(),
            problem.dimension));
    }

    // named constants are free parameters: calibrate them first
    bool free = false;
    for (double c : model.ind.coeffs) {
        free = free || std::isnan(c);
    }
    if (free) {
        Rng rng = make_rng({ flags.seed, 0xCA1Bu });
        model.ind = calibrate(std::move(model.ind), problem, OptConfig {}, rng);
    }

    const auto check = check_solution(model.ind, problem);
    const auto pass = [](bool ok) { return ok ? "PASS" : "FAIL"; };
    fmt::print("problem      {}\n", problem.name);
    fmt::print("model        {}\n", render_infix(model.ind.graph, model.ind.coeffs));
    fmt::print("canonical    {}\n", to_string(canonicalize(model.ind.graph, model.ind.coeffs)));
    fmt::print("fitness gate {}  test fitness {:.3e} (threshold {:.0e})\n", pass(check.fitness_gate), check.test_fitness,
        kSuccessThreshold);
    fmt::print("form gate    {}  {}\n", pass(check.verdict == Verdict::equivalent), to_string(check.verdict));
    fmt::print("known solution: {}\n", check.accepted() ? "yes" : "no");
    return kOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app { "Physics-regularized genetic-programming symbolic regression" };
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "Run seeded trials from a key = value config file");
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> repeats;
    std::optional<std::string> out;
    std::optional<int> workers;
    bool quiet = false;
    run->add_option("config", config_path, "Config file")->required();
    run->add_option("--seed", seed, "First trial seed (overrides seed_base)");
    run->add_option("--repeats", repeats, "Number of trials (overrides repeats)");
    run->add_option("--out", out, "Output directory (overrides out_dir)");
    run->add_option("--workers", workers, "Trials run in parallel");
    run->add_flag("--quiet", quiet, "Only print the summary");

    auto* sum = app.add_subcommand("summarize", "Summarize a result directory and write trend.csv and cdf.csv");
    std::string dir;
    sum->add_option("dir", dir, "Directory with record files")->required();

    auto* hs = app.add_subcommand("hspace", "Hypothesis-space size for Poisson sampling");
    int d = 0;
    int m = 0;
    int n = 0;
    hs->add_option("--d", d, "Dimension")->required();
    hs->add_option("--m", m, "Physics points")->required();
    hs->add_option("--n", n, "Samples")->required();

    auto* ver = app.add_subcommand("verify", "Check a model or record against a problem's known solution");
    std::string model_path;
    ProblemFlags flags;
    ver->add_option("model", model_path, "Model file or record file")->required();
    ver->add_option("--problem", flags.kind, "eb or poisson (default: the record's problem)");
    ver->add_option("--n", flags.n, "Training samples (beam default 11; Poisson: boundary samples)");
    ver->add_option("--m", flags.m, "Poisson interior points");
    ver->add_option("--d", flags.d, "Poisson dimension");
    ver->add_option("--test", flags.test, "Operator palette 1 or 2");
    ver->add_option("--physics", flags.physics, "Include the governing equation (true/false)");
    ver->add_option("--problem-seed", flags.seed, "Seed of the Poisson samples");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfigError;
    }

    try {
        if (*run) {
            return cmd_run(config_path, seed, repeats, out, workers, quiet);
        }
        if (*sum) {
            return cmd_summarize(dir);
        }
        if (*hs) {
            return cmd_hspace(d, m, n);
        }
        if (*ver) {
            return cmd_verify(model_path, flags);
        }
    } catch (const ConfigError& ex) {
        fmt::print(stderr, "config error: {}\n", ex.what());
        return kConfigError;
    } catch (const IoError& ex) {
        fmt::print(stderr, "i/o error: {}\n", ex.what());
        return kIoError;
    } catch (const ParseError& ex) {
        fmt::print(stderr, "parse error at line {}: {}\n", ex.line(), ex.what());
        return kIoError;
    } catch (const std::exception& ex) {
        fmt::print(stderr, "error: {}\n", ex.what());
        return kIoError;
    }
    return kOk;
}
