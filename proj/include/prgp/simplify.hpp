#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "prgp/expr.hpp"
#include "prgp/problem.hpp"

namespace prgp {

struct CanonicalForm;

// Variable, sine/cosine of a canonical argument, or an opaque node kept
// unexpanded (division by a non-constant, non-integer power, oversized
// products).
struct Atom {
    enum class Kind : std::uint8_t { variable, sin, cos, div, pow, mul };

    Kind kind { Kind::variable };
    int var { 0 };
    std::vector<CanonicalForm> args;

    friend bool operator==(const Atom&, const Atom&) = default;
};

struct Factor {
    Atom atom;
    int power { 1 };

    friend bool operator==(const Factor&, const Factor&) = default;
};

struct Term {
    double coef { 0.0 };
    std::vector<Factor> factors; // sorted; empty for the constant term

    friend bool operator==(const Term&, const Term&) = default;
};

// Sum of terms with distinct factor lists, sorted; the empty sum is zero.
struct CanonicalForm {
    std::vector<Term> terms;

    [[nodiscard]] bool is_zero() const noexcept { return terms.empty(); }
    [[nodiscard]] std::optional<double> constant_value() const;

    friend bool operator==(const CanonicalForm&, const CanonicalForm&) = default;
};

CanonicalForm canonicalize(const ExpressionGraph& g, std::span<const double> coeffs);

// Deterministic text, e.g. "2.5*x0^2*sin(3.14*x1) + -1.0".
std::string to_string(const CanonicalForm& f);

// Rebuilds an expression graph with the form's coefficients as constants.
struct GraphWithCoeffs {
    ExpressionGraph graph;
    std::vector<double> coeffs;
};
GraphWithCoeffs to_graph(const CanonicalForm& f, int dimension);

std::optional<double> evaluate(const CanonicalForm& f, std::span<const double> point);

enum class Verdict : std::uint8_t { equivalent, numerically_close_only, distinct };
std::string to_string(Verdict v);

struct EquivalenceVerdict {
    Verdict verdict { Verdict::distinct };
    std::vector<double> witness; // set for distinct
};

struct EquivalenceOptions {
    double coef_tol { 1e-6 };
    // Box used to weight coefficients by term magnitude and to place probes;
    // defaults to [-1, 1]^d when empty.
    std::vector<double> lower;
    std::vector<double> upper;
    int probes { 64 };
    double probe_tol { 1e-10 };
};

EquivalenceVerdict equivalent(
    const CanonicalForm& a, const CanonicalForm& b, int dimension, const EquivalenceOptions& options = {});

// Mean squared combined residual on the problem's dense test grid.
double test_fitness(const Individual& ind, const Problem& problem);

inline constexpr double kSuccessThreshold = 1e-15;

// Dense-grid fitness below the threshold and structural equivalence with the
// problem's known solution.
bool is_known_solution(const Individual& ind, const Problem& problem);

// Both gates evaluated unconditionally, for reporting.
struct SolutionCheck {
    double test_fitness { 0.0 };
    bool fitness_gate { false };
    Verdict verdict { Verdict::distinct };

    [[nodiscard]] bool accepted() const noexcept { return fitness_gate && verdict == Verdict::equivalent; }
};
SolutionCheck check_solution(const Individual& ind, const Problem& problem);

} // namespace prgp
