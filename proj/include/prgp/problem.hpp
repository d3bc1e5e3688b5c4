#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "prgp/expr.hpp"
#include "prgp/fitness.hpp"

namespace prgp {

struct Individual {
    ExpressionGraph graph;
    std::vector<double> coeffs;
    double fitness { std::numeric_limits<double>::infinity() };
    bool evaluated { false };
    // model values at the problem's probe points (NaN where undefined)
    std::vector<double> phenotype;

    Individual() = default;
    explicit Individual(ExpressionGraph g) : graph(std::move(g)), coeffs(graph.slot_count(), 0.0) { }
};

enum class ProblemKind : std::uint8_t { euler_bernoulli, poisson };

struct ProblemParams {
    ProblemKind kind { ProblemKind::euler_bernoulli };
    int n { 5 };     // training samples (Poisson: boundary samples)
    int m { 0 };     // Poisson interior collocation points
    int dimension { 1 };
    int test { 1 };  // operator palette 1 or 2
    bool physics { true };
    std::uint64_t seed { 0 };

    friend bool operator==(const ProblemParams&, const ProblemParams&) = default;
};

struct Problem {
    ProblemParams params;
    std::string name;
    int dimension { 1 };
    std::vector<double> lower;
    std::vector<double> upper;

    TrainingSet training;
    std::vector<DiffOperatorSpec> operators; // empty without physics

    OperatorPalette palette;
    std::size_t max_complexity { 10 };

    ExpressionGraph known;
    std::vector<double> known_coeffs;
    std::function<double(std::span<const double>)> exact;

    // Dense evaluation used to confirm candidate solutions: labels from the
    // exact solution on test_grid plus the governing equation on test_operators.
    TrainingSet test;
    std::vector<DiffOperatorSpec> test_operators;

    std::vector<Point> probes;

    [[nodiscard]] std::size_t physics_point_count() const;
};

std::string to_string(ProblemKind kind);
ProblemKind parse_problem_kind(std::string_view text);

} // namespace prgp
