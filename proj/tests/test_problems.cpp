#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "prgp/fitness.hpp"
#include "prgp/problems.hpp"

using namespace prgp;
using K = OperatorKind;

namespace {

double known_fitness(const Problem& p)
{
    Individual ind(p.known);
    ind.coeffs = p.known_coeffs;
    return homogenize(combined(ind, p));
}

bool on_boundary(const Point& x)
{
    return std::any_of(x.begin(), x.end(), [](double v) { return v == 0.0 || v == 1.0; });
}

bool strictly_inside(const Point& x)
{
    return std::all_of(x.begin(), x.end(), [](double v) { return v > 0.0 && v < 1.0; });
}

} // namespace

TEST_CASE("beam training samples and labels")
{
    const auto p3 = build_euler_bernoulli(3, 1, true);
    REQUIRE(p3.training.size() == 3);
    CHECK(p3.training.points[1][0] == 5.0);
    CHECK(p3.training.labels[0] == 0.0);
    CHECK(p3.training.labels[1] == doctest::Approx(6.5104e-3).epsilon(1e-4));
    CHECK(std::abs(p3.training.labels[2]) < 1e-17);

    const auto p11 = build_euler_bernoulli(11, 1, true);
    for (int i = 0; i <= 10; ++i) {
        CHECK(p11.training.points[static_cast<std::size_t>(i)][0] == static_cast<double>(i));
    }
    const auto p5 = build_euler_bernoulli(5, 1, true);
    const std::vector<double> want5 { 0.0, 2.5, 5.0, 7.5, 10.0 };
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(p5.training.points[i][0] == want5[i]);
    }
    const auto p2 = build_euler_bernoulli(2, 1, true);
    CHECK(p2.training.points[0][0] == 0.0);
    CHECK(p2.training.points[1][0] == 10.0);

    CHECK_THROWS_AS(build_euler_bernoulli(1, 1, true), std::invalid_argument);
    CHECK_THROWS_AS(build_euler_bernoulli(0, 1, true), std::invalid_argument);
    CHECK_THROWS_AS(build_euler_bernoulli(5, 3, true), std::invalid_argument);
}

TEST_CASE("beam physics sampling, palettes and grid")
{
    const auto p = build_euler_bernoulli(2, 1, true);
    REQUIRE(p.operators.size() == 2);
    CHECK(p.physics_point_count() == 11);
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(p.operators[0].points[i][0] == static_cast<double>(i + 1));
    }
    CHECK(p.operators[1].points[0][0] == 0.0);
    CHECK(p.operators[1].points[1][0] == 10.0);
    CHECK(p.max_complexity == 10);
    CHECK(p.palette == OperatorPalette { K::add, K::sub, K::mul });
    CHECK(build_euler_bernoulli(2, 2, true).palette == OperatorPalette { K::add, K::sub, K::mul, K::pow, K::sin, K::div });
    CHECK(build_euler_bernoulli(5, 1, false).operators.empty());

    REQUIRE(p.test.size() == 201);
    for (std::size_t i = 0; i < 201; ++i) {
        CHECK(p.test.points[i][0] == doctest::Approx(0.05 * static_cast<double>(i)).epsilon(1e-15));
    }
    CHECK(p.test.points.back()[0] == 10.0);
    CHECK(coefficient_count(p.known) == 3);
    CHECK(complexity(p.known) <= p.max_complexity);
    CHECK(known_fitness(p) < 1e-15);
}

TEST_CASE("beam constants")
{
    CHECK(beam::alpha == doctest::Approx(2.0833333333333333e-6).epsilon(1e-15));
    CHECK(beam::beta == doctest::Approx(-4.1666666666666667e-5).epsilon(1e-15));
    CHECK(beam::gamma == doctest::Approx(2.0833333333333333e-3).epsilon(1e-15));
}

TEST_CASE("Poisson sampling")
{
    const int want_n[] = { 2, 16, 20 };
    const int want_m[] = { 2, 32, 64 };
    const int want_grid[] = { 201, 41 * 41, 21 * 21 * 21 };
    for (int d = 1; d <= 3; ++d) {
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            Rng rng(seed);
            const auto p = build_poisson(d, 1, rng);
            const auto du = static_cast<std::size_t>(d);
            CHECK(p.dimension == d);
            CHECK(p.training.size() == static_cast<std::size_t>(want_n[d - 1]));
            CHECK(p.physics_point_count() == static_cast<std::size_t>(want_m[d - 1]));
            CHECK(p.test.size() == static_cast<std::size_t>(want_grid[d - 1]));
            CHECK(p.max_complexity == 20);
            for (std::size_t i = 0; i < p.training.size(); ++i) {
                CHECK(p.training.points[i].size() == du);
                CHECK(on_boundary(p.training.points[i]));
                CHECK(p.training.labels[i] == 0.0);
            }
            // the first 2d samples visit every face once
            std::set<std::pair<std::size_t, double>> faces;
            for (std::size_t i = 0; i < 2 * du; ++i) {
                for (std::size_t a = 0; a < du; ++a) {
                    const double v = p.training.points[i][a];
                    if (v == 0.0 || v == 1.0) {
                        faces.insert({ a, v });
                    }
                }
            }
            CHECK(faces.size() == 2 * du);
            for (const auto& x : p.operators[0].points) {
                CHECK(strictly_inside(x));
            }
            CHECK(known_fitness(p) < 1e-15);
        }
    }
    Rng rng(0);
    const auto p1 = build_poisson(1, 1, rng);
    CHECK(p1.training.points[0][0] == 0.0);
    CHECK(p1.training.points[1][0] == 1.0);

    CHECK_THROWS_AS(build_poisson(0, 1, rng), std::invalid_argument);
    CHECK_THROWS_AS(build_poisson(4, 1, rng), std::invalid_argument);
    CHECK_THROWS_AS(build_poisson(2, 0, rng), std::invalid_argument);
}

TEST_CASE("Poisson palettes, forcing and known solution")
{
    Rng rng(5);
    const auto p = build_poisson(2, 1, rng);
    CHECK(p.palette == OperatorPalette { K::mul, K::sin });
    CHECK(build_poisson(2, 2, rng).palette == OperatorPalette { K::add, K::sub, K::mul, K::div, K::sin, K::cos });

    const std::vector<double> centre { 0.5, 0.5 };
    CHECK(poisson_forcing(centre) == doctest::Approx(-2.0 * std::numbers::pi * std::numbers::pi).epsilon(1e-15));

    Individual ind(p.known);
    ind.coeffs = p.known_coeffs;
    bool undefined = false;
    for (const auto& r : physics_residuals(ind, p.operators, undefined)) {
        CHECK(std::abs(r) < 1e-12);
    }
    CHECK_FALSE(undefined);
}

TEST_CASE("Poisson samples are reproducible from the seed")
{
    ProblemParams params;
    params.kind = ProblemKind::poisson;
    params.dimension = 2;
    params.n = 16;
    params.m = 32;
    params.seed = 42;
    const auto a = build_problem(params);
    const auto b = build_problem(params);
    CHECK(a.training.points == b.training.points);
    CHECK(a.operators[0].points == b.operators[0].points);
    params.seed = 43;
    const auto c = build_problem(params);
    CHECK(a.operators[0].points != c.operators[0].points);
}

TEST_CASE("hypothesis space size")
{
    struct Case {
        int d;
        int m;
        double published;
    };
    const Case cases[] = { { 2, 2, 1.2e20 }, { 2, 6, 4.1e23 }, { 3, 2, 1.3e25 }, { 3, 6, 3.8e27 } };
    for (const auto& c : cases) {
        const auto h = hypothesis_space_size(c.d, c.m, 20);
        CHECK(std::abs(h.approx - c.published) <= 0.1 * c.published);

        // independent evaluation of the exact product in long double
        long double exact = 1.0L;
        for (int i = 0; i < 20 - 2 * c.d; ++i) {
            exact *= 2 * c.d + c.m;
        }
        for (int i = 1; i <= 2 * c.d; ++i) {
            exact *= static_cast<long double>((20 - i + 1) * (2 * c.d - i + 1));
        }
        CHECK(h.exact == doctest::Approx(static_cast<double>(exact)).epsilon(1e-13));
        // the ratio depends only on d and n: (2nd)^{2d} / prod (n-i+1)(2d-i+1)
        long double ratio = 1.0L;
        for (int i = 1; i <= 2 * c.d; ++i) {
            ratio *= 40.0L * c.d / static_cast<long double>((20 - i + 1) * (2 * c.d - i + 1));
        }
        CHECK(h.approx / h.exact == doctest::Approx(static_cast<double>(ratio)).epsilon(1e-12));
    }
    // the two-dimensional estimates stay within two orders of magnitude
    for (int m : { 2, 6 }) {
        const auto h = hypothesis_space_size(2, m, 20);
        CHECK(h.approx / h.exact >= 1e-2);
        CHECK(h.approx / h.exact <= 1e2);
    }
    CHECK_THROWS_AS(hypothesis_space_size(2, 2, 4), std::invalid_argument);
    CHECK_THROWS_AS(hypothesis_space_size(1, 2, 2), std::invalid_argument);
    CHECK_NOTHROW(hypothesis_space_size(1, 2, 3));
}

TEST_CASE("manifest round trip")
{
    ProblemParams params;
    params.kind = ProblemKind::poisson;
    params.dimension = 3;
    params.n = 20;
    params.m = 64;
    params.test = 2;
    params.seed = 7;
    for (const auto& p : { build_problem(params), build_euler_bernoulli(11, 2, true), build_euler_bernoulli(5, 1, false) }) {
        const auto text = manifest(p);
        const auto q = problem_from_manifest(text);
        CHECK(q.params == p.params);
        CHECK(q.training.points == p.training.points);
        CHECK(q.training.labels == p.training.labels);
        REQUIRE(q.operators.size() == p.operators.size());
        for (std::size_t k = 0; k < p.operators.size(); ++k) {
            CHECK(q.operators[k].points == p.operators[k].points);
        }
        CHECK(q.palette == p.palette);
        CHECK(manifest(q) == text);
    }
    CHECK_THROWS_AS(problem_from_manifest(""), ParseError);
    CHECK_THROWS_AS(problem_from_manifest("problem heat\n"), ParseError);
    CHECK_THROWS_AS(problem_from_manifest("problem eb\nn x\n"), ParseError);
    CHECK_THROWS_AS(problem_from_manifest("problem eb\nbogus 1\n"), ParseError);
}
