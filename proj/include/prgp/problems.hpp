#pragma once

#include <string>
#include <string_view>

#include "prgp/problem.hpp"
#include "prgp/rng.hpp"

namespace prgp {

namespace beam {
    inline constexpr double load = 5e-5;   // distributed load over stiffness
    inline constexpr double length = 10.0;
    // u(x) = alpha x^4 + beta x^3 + gamma x
    inline constexpr double alpha = load / 24.0;
    inline constexpr double beta = -2.0 * length * load / 24.0;
    inline constexpr double gamma = length * length * length * load / 24.0;
    double displacement(double x) noexcept;
} // namespace beam

// Evenly spaced training samples on [0, 10] (n >= 2), labelled with the
// analytic deflection. Throws std::invalid_argument on bad n or test.
Problem build_euler_bernoulli(int n, int test, bool physics);

// Boundary samples (n, zero labels) and interior collocation points (m) drawn
// from rng. n < 0 / m < 0 select the standard counts for d.
Problem build_poisson(int d, int test, Rng& rng, int n = -1, int m = -1);

int default_poisson_boundary(int d);
int default_poisson_interior(int d);

// Builds from params; Poisson samples come from params.seed.
Problem build_problem(const ProblemParams& params);

double poisson_forcing(std::span<const double> x);
double poisson_solution(std::span<const double> x);

struct HypothesisSpace {
    double exact { 0.0 };
    double approx { 0.0 };
};

// Throws std::invalid_argument unless n > 2d.
HypothesisSpace hypothesis_space_size(int d, int m, int n);

// Self-contained text description: parameters, palette, samples, labels.
std::string manifest(const Problem& problem);
// Rebuilds the problem described by a manifest, taking samples and labels
// from the text. Throws ParseError on malformed input.
Problem problem_from_manifest(std::string_view text);
ProblemParams parse_params(std::string_view manifest_text);

} // namespace prgp
