#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "prgp/expr.hpp"
#include "prgp/localopt.hpp"
#include "prgp/problem.hpp"

namespace prgp {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct EvolutionConfig {
    int islands { 10 };
    int population { 150 }; // total across islands
    double crossover_rate { 0.5 };
    double mutation_rate { 0.5 };
    int stack_size { 0 }; // 0: the problem's maximum complexity
    int migration_interval { 10 };
    int migration_count { 2 };
    double threshold { 1e-15 };
    int max_generations { 1000 };
    std::uint64_t seed { 0 };
    int workers { 1 };
    OptConfig opt;
    std::string checkpoint_path; // empty: no checkpoints
    int checkpoint_interval { 0 };
    GenerationOptions generation { 0.3 };

    [[nodiscard]] int population_per_island() const { return population / islands; }
    // Throws ConfigError.
    void validate(const Problem& problem) const;

    friend bool operator==(const EvolutionConfig&, const EvolutionConfig&) = default;
};

struct Island {
    int id { 0 };
    std::vector<Individual> population;
};

struct GenerationStats {
    int generation { 0 };
    std::vector<double> island_best;
    double best { 0.0 };
    bool success { false };
};

enum class StopReason : std::uint8_t { success, numeric_only, max_generations };
std::string to_string(StopReason r);

struct RunRecord {
    std::uint64_t seed { 0 };
    std::vector<GenerationStats> history;
    std::optional<int> success_generation;
    StopReason stop { StopReason::max_generations };
    Individual best;
};

// Segment [begin, end) of b replaces the same positions of a and vice versa.
// Both stacks must be at least `end` long; slots are renumbered.
std::pair<ExpressionGraph, ExpressionGraph> crossover_segment(
    const ExpressionGraph& a, const ExpressionGraph& b, std::size_t begin, std::size_t end);
std::pair<ExpressionGraph, ExpressionGraph> crossover(const ExpressionGraph& a, const ExpressionGraph& b, Rng& rng);

enum class MutationKind : std::uint8_t { swap_operator, rewire, grow, prune };
inline constexpr int kMutationKinds = 4;

// Applies the given mutation to a random reachable command; identity when the
// graph has no command it applies to.
ExpressionGraph mutate(const ExpressionGraph& g, const OperatorPalette& palette, MutationKind kind, Rng& rng);
// Random kind, biased towards grow.
ExpressionGraph mutate(const ExpressionGraph& g, const OperatorPalette& palette, Rng& rng);

// Squared L2 distance between phenotypes; NaN entries match only NaN.
double phenotype_distance(std::span<const double> a, std::span<const double> b);

// One deterministic-crowding generation in place.
void crowding_generation(Island& island, const Problem& problem, const EvolutionConfig& cfg, Rng& rng);

// Ring migration: copies of each island's `count` best replace the next
// island's worst.
void migrate(std::vector<Island>& islands, int count);

class Archipelago {
public:
    Archipelago(const Problem& problem, EvolutionConfig cfg);

    // Replaces individual `slot` of island `island`; the graph is padded with
    // dead leading commands to the stack size and evaluated as given.
    void plant(const Individual& ind, int island = 0, std::size_t slot = 0);

    // Crowding on every island, then migration when due.
    void step();

    [[nodiscard]] int generation() const noexcept { return generation_; }
    [[nodiscard]] const std::vector<Island>& islands() const noexcept { return islands_; }
    [[nodiscard]] const Individual& best() const;
    [[nodiscard]] GenerationStats stats() const;
    // Stats of every generation so far, starting with the initial population.
    [[nodiscard]] const std::vector<GenerationStats>& history() const noexcept { return history_; }

    // Individuals at or below the threshold, best first.
    [[nodiscard]] std::vector<const Individual*> candidates() const;

    // Versioned text snapshot; restoring continues bit-identically.
    [[nodiscard]] std::string checkpoint() const;
    static Archipelago restore(std::string_view text, const Problem& problem, EvolutionConfig cfg);

private:
    Archipelago(const Problem& problem, EvolutionConfig cfg, bool populate);
    Individual evaluate(Individual ind) const;

    const Problem* problem_;
    EvolutionConfig cfg_;
    int generation_ { 0 };
    std::vector<Island> islands_;
    std::vector<GenerationStats> history_;
};

struct EvolveOptions {
    std::vector<Individual> planted;
    bool resume { false }; // continue from cfg.checkpoint_path when present
};

RunRecord evolve_until(const Problem& problem, const EvolutionConfig& cfg, const EvolveOptions& options = {});

} // namespace prgp
