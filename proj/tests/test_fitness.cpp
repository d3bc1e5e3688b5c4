#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "prgp/fitness.hpp"
#include "prgp/problems.hpp"

using namespace prgp;
using K = OperatorKind;

namespace {

double beam_u(double x)
{
    const double c = 5e-5;
    const double l = 10.0;
    return c / 24.0 * (x * x * x * x - 2 * l * x * x * x + l * l * l * x);
}

Individual known_individual(const Problem& p)
{
    Individual ind(p.known);
    ind.coeffs = p.known_coeffs;
    return ind;
}

Individual constant_individual(int d, double value)
{
    Individual ind(ExpressionGraph({ Command::constant(0) }, d));
    ind.coeffs = { value };
    return ind;
}

// known + 1
Individual shifted_known(const Problem& p)
{
    std::vector<Command> cmds(p.known.commands().begin(), p.known.commands().end());
    const auto out = static_cast<int>(cmds.size()) - 1;
    cmds.push_back(Command::constant(static_cast<int>(p.known.slot_count())));
    cmds.push_back(Command::binary(K::add, out, static_cast<int>(cmds.size()) - 1));
    Individual ind(ExpressionGraph(std::move(cmds), p.dimension));
    ind.coeffs = p.known_coeffs;
    ind.coeffs.push_back(1.0);
    return ind;
}

} // namespace

TEST_CASE("data residuals")
{
    const auto p = build_euler_bernoulli(3, 1, true);
    bool undefined = false;
    const auto exact = data_residuals(known_individual(p), p.training, undefined);
    CHECK_FALSE(undefined);
    REQUIRE(exact.size() == 3);
    for (double r : exact) {
        CHECK(std::abs(r) < 1e-18);
    }

    const auto zero = data_residuals(constant_individual(1, 0.0), p.training, undefined);
    CHECK(zero[0] == 0.0);
    CHECK(zero[1] == doctest::Approx(-beam_u(5.0)).epsilon(1e-14));
    CHECK(zero[1] == doctest::Approx(-6.5104e-3).epsilon(1e-4));
    CHECK(std::abs(zero[2]) < 1e-17);

    const auto shifted = data_residuals(shifted_known(p), p.training, undefined);
    for (double r : shifted) {
        CHECK(r == doctest::Approx(1.0).epsilon(1e-14));
    }

    // x/x is undefined at x = 0
    GraphBuilder b(1);
    const int x = b.var(0);
    Individual bad(b.build(b.div(x, x)));
    bool flag = false;
    (void)data_residuals(bad, p.training, flag);
    CHECK(flag);
}

TEST_CASE("physics residuals")
{
    Rng rng(3);
    const auto poisson = build_poisson(2, 1, rng);
    bool undefined = false;
    const auto pr = physics_residuals(known_individual(poisson), poisson.operators, undefined);
    CHECK_FALSE(undefined);
    CHECK(pr.size() == 32);
    for (double r : pr) {
        CHECK(std::abs(r) < 1e-12);
    }

    const auto beam = build_euler_bernoulli(2, 1, true);
    DiffOperatorSpec at3 = beam.operators[0];
    at3.points = { { 3.0 } };
    const std::vector<DiffOperatorSpec> one { at3 };
    const auto r3 = physics_residuals(known_individual(beam), one, undefined);
    CHECK(std::abs(r3[0]) < 1e-18);

    GraphBuilder b(1);
    const int x = b.var(0);
    Individual sq(b.build(b.mul(x, x)));
    const auto rsq = physics_residuals(sq, std::span(beam.operators).first(1), undefined);
    REQUIRE(rsq.size() == 9);
    for (double r : rsq) {
        CHECK(r == -5e-5);
    }
}

TEST_CASE("combined vector lengths")
{
    CHECK(combined(known_individual(build_euler_bernoulli(2, 1, true)), build_euler_bernoulli(2, 1, true)).size() == 13);
    CHECK(combined(known_individual(build_euler_bernoulli(11, 2, true)), build_euler_bernoulli(11, 2, true)).size() == 22);
    const auto off = build_euler_bernoulli(5, 1, false);
    const auto v = combined(known_individual(off), off);
    CHECK(v.dd.size() == 5);
    CHECK(v.pr.empty());
    Rng rng(1);
    const auto p1 = build_poisson(1, 1, rng);
    CHECK(combined(known_individual(p1), p1).size() == 4);
    const auto p2 = build_poisson(2, 2, rng);
    CHECK(combined(known_individual(p2), p2).size() == 48);
    const auto p3 = build_poisson(3, 2, rng);
    CHECK(combined(known_individual(p3), p3).size() == 84);
}

TEST_CASE("homogenize")
{
    FitnessVector z;
    z.dd = { 0.0, 0.0 };
    z.pr = { 0.0 };
    CHECK(homogenize(z) == 0.0);
    FitnessVector ones;
    ones.dd = { 1.0, 1.0 };
    ones.pr = { 1.0, 1.0 };
    CHECK(homogenize(ones) == 1.0);
    ones.undefined = true;
    CHECK(std::isinf(homogenize(ones)));

    // zero model on the n=3 beam: residuals -u(x_i), -c at nine interior
    // points, 0 for the two curvature points
    const auto p = build_euler_bernoulli(3, 1, true);
    const auto v = combined(constant_individual(1, 0.0), p);
    REQUIRE(v.size() == 14);
    double sum = 0.0;
    for (double x : { 0.0, 5.0, 10.0 }) {
        sum += beam_u(x) * beam_u(x);
    }
    sum += 9 * 5e-5 * 5e-5;
    CHECK(homogenize(v) == doctest::Approx(sum / 14.0).epsilon(1e-13));
}

TEST_CASE("known solutions reach the termination threshold")
{
    for (int n : { 2, 3, 5, 11 }) {
        for (int test : { 1, 2 }) {
            for (bool physics : { true, false }) {
                const auto p = build_euler_bernoulli(n, test, physics);
                CHECK(homogenize(combined(known_individual(p), p)) < 1e-15);
            }
        }
    }
    for (int d : { 1, 2, 3 }) {
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            Rng rng(seed);
            const auto p = build_poisson(d, 1, rng);
            CHECK(homogenize(combined(known_individual(p), p)) < 1e-15);
        }
    }
}

TEST_CASE("operator weights scale their block exactly")
{
    auto p = build_euler_bernoulli(3, 1, true);
    GraphBuilder b(1);
    const int x = b.var(0);
    Individual cubic(b.build(b.mul(b.mul(x, x), b.add(x, b.constant()))));
    cubic.coeffs = { 0.25 };
    const auto base = combined(cubic, p);
    p.operators[0].weight = 3.0;
    const auto scaled = combined(cubic, p);
    CHECK(scaled.dd == base.dd);
    for (std::size_t j = 0; j < 9; ++j) {
        CHECK(scaled.pr[j] == 3.0 * base.pr[j]);
    }
    for (std::size_t j = 9; j < base.pr.size(); ++j) {
        CHECK(scaled.pr[j] == base.pr[j]);
    }
}

TEST_CASE("residuals follow training order and the scalar ignores order")
{
    Rng rng(9);
    auto p = build_poisson(2, 2, rng);
    GraphBuilder b(2);
    Individual ind(b.build(b.add(b.mul(b.var(0), b.var(1)), b.cos(b.var(0)))));
    const auto base = combined(ind, p);
    std::vector<std::size_t> perm(p.training.size());
    for (std::size_t i = 0; i < perm.size(); ++i) {
        perm[i] = (i * 7 + 3) % perm.size();
    }
    auto q = p;
    for (std::size_t i = 0; i < perm.size(); ++i) {
        q.training.points[i] = p.training.points[perm[i]];
        q.training.labels[i] = p.training.labels[perm[i]];
    }
    const auto shuffled = combined(ind, q);
    for (std::size_t i = 0; i < perm.size(); ++i) {
        CHECK(shuffled.dd[i] == base.dd[perm[i]]);
    }
    FitnessVector reversed;
    reversed.dd.assign(base.pr.rbegin(), base.pr.rend());
    reversed.pr.assign(base.dd.rbegin(), base.dd.rend());
    CHECK(homogenize(reversed) == doctest::Approx(homogenize(base)).epsilon(1e-14));
}

TEST_CASE("evaluator agrees with the reference residual path")
{
    Rng rng(17);
    const OperatorPalette pal { K::add, K::sub, K::mul, K::div, K::sin, K::cos };
    for (int d : { 1, 2, 3 }) {
        const auto p = build_poisson(d, 2, rng);
        for (int i = 0; i < 40; ++i) {
            Individual ind(random_graph(pal, d, 12, rng));
            for (std::size_t k = 0; k < ind.coeffs.size(); ++k) {
                ind.coeffs[k] = 0.5 + 0.25 * static_cast<double>(k);
            }
            const FitnessEvaluator ev(ind.graph, p);
            const auto fast = ev.vector(ind.coeffs);
            bool undefined = false;
            auto ref = data_residuals(ind, p.training, undefined);
            const auto pr = physics_residuals(ind, p.operators, undefined);
            ref.insert(ref.end(), pr.begin(), pr.end());
            REQUIRE(fast.undefined == undefined);
            const auto all = fast.concatenated();
            REQUIRE(all.size() == ref.size());
            for (std::size_t k = 0; k < ref.size(); ++k) {
                CHECK(all[k] == doctest::Approx(ref[k]).epsilon(1e-12));
            }
            CHECK(ev.scalar(ind.coeffs) == (undefined ? std::numeric_limits<double>::infinity() : homogenize(fast)));
        }
    }
}
