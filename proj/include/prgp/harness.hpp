#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "prgp/evolve.hpp"
#include "prgp/problem.hpp"

namespace prgp {

// Flat key = value experiment description. Keys mirror the hyperparameter
// tables; see README for the full list. Trials draw their Poisson samples
// from the trial seed.
struct ExperimentConfig {
    ProblemParams problem;
    EvolutionConfig evolution;
    int repeats { 30 };
    std::uint64_t seed_base { 0 };
    std::filesystem::path out_dir { "." };
    int trial_workers { 1 };
    bool plant_known { false };

    // Throws ConfigError.
    static ExperimentConfig parse(std::string_view text);
    static ExperimentConfig load(const std::filesystem::path& path);
    void validate() const;

    // Canonical text of every setting that affects results (out_dir and the
    // worker counts excluded); parse(to_text()) round-trips.
    [[nodiscard]] std::string to_text() const;
    // FNV-1a of to_text().
    [[nodiscard]] std::uint64_t hash() const;

    [[nodiscard]] ProblemParams problem_for(std::uint64_t seed) const;
};

struct TrialRecord {
    std::uint64_t config_hash { 0 };
    std::uint64_t seed { 0 };
    std::vector<double> best_fitness; // index = generation
    std::optional<int> success_generation;
    StopReason stop { StopReason::max_generations };
    double threshold { 0.0 };
    std::string best_infix;
    std::string best_canonical;
    ExpressionGraph best_graph;
    std::vector<double> best_coeffs;
    std::string manifest;
    double wall_seconds { 0.0 }; // kept in a sidecar file, not in the record

    [[nodiscard]] std::string to_text() const;
    // Throws ParseError.
    static TrialRecord parse(std::string_view text);
};

TrialRecord run_trial(const ExperimentConfig& cfg, std::uint64_t seed);

std::filesystem::path record_path(const std::filesystem::path& dir, std::uint64_t seed);

struct ExperimentResult {
    std::vector<TrialRecord> records; // in seed order
    std::vector<std::string> errors;  // one line per failed record write or read
    int reused { 0 };                 // seeds skipped because a matching record existed
};

using TrialCallback = std::function<void(const TrialRecord&, bool reused)>;

// Runs seeds seed_base .. seed_base + repeats - 1, writing one record file per
// seed into out_dir as soon as it finishes. Seeds whose record already exists
// with the same config hash are loaded instead of rerun.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const TrialCallback& progress = {});

// Every parseable *.record file in dir, sorted by seed; unreadable files are
// reported in errors.
ExperimentResult load_records(const std::filesystem::path& dir);

struct TrendRow {
    int generation { 0 };
    double median { 0.0 };
    double q1 { 0.0 };
    double q3 { 0.0 };
    double min { 0.0 };
    double max { 0.0 };
    int outliers { 0 }; // beyond 1.5 IQR from the quartiles

    friend bool operator==(const TrendRow&, const TrendRow&) = default;
};

struct CdfRow {
    int generation { 0 };
    double fraction { 0.0 };

    friend bool operator==(const CdfRow&, const CdfRow&) = default;
};

struct SummaryStats {
    int runs { 0 };
    int successes { 0 };
    std::vector<TrendRow> trend;
    std::vector<CdfRow> cdf;
};

// Linear-interpolation quantile of sorted data (the common "type 7" rule).
double quantile(const std::vector<double>& sorted, double p);

// Runs that stopped early carry their last fitness forward to the longest run.
SummaryStats summarize(const std::vector<TrialRecord>& records);

// trend.csv (generation,median,q1,q3,min,max) and cdf.csv (generation,fraction).
// Throws std::runtime_error on I/O failure.
void export_plot_data(const SummaryStats& stats, const std::filesystem::path& dir);
std::string trend_csv(const SummaryStats& stats);
std::string cdf_csv(const SummaryStats& stats);
// Throws ParseError.
std::vector<TrendRow> parse_trend_csv(std::string_view text);
std::vector<CdfRow> parse_cdf_csv(std::string_view text);

// Writes through a temporary file and a rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

} // namespace prgp
