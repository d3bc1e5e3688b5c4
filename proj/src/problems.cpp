#include "prgp/problems.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace prgp {

namespace {

constexpr std::size_t kProbeCount = 16;

std::vector<double> linspace(double lo, double hi, int count)
{
    std::vector<double> out(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        out[static_cast<std::size_t>(i)] = count == 1 ? lo : lo + (hi - lo) * i / (count - 1);
    }
    return out;
}

OperatorPalette beam_palette(int test)
{
    using enum OperatorKind;
    if (test == 1) {
        return { add, sub, mul };
    }
    if (test == 2) {
        return { add, sub, mul, pow, sin, div };
    }
    throw std::invalid_argument("test must be 1 or 2");
}

OperatorPalette poisson_palette(int test)
{
    using enum OperatorKind;
    if (test == 1) {
        return { mul, sin };
    }
    if (test == 2) {
        return { add, sub, mul, div, sin, cos };
    }
    throw std::invalid_argument("test must be 1 or 2");
}

DiffOperatorSpec laplacian_spec(int d, std::vector<Point> points)
{
    DiffOperatorSpec op;
    op.name = "laplacian";
    for (int a = 0; a < d; ++a) {
        op.terms.push_back({ DerivativeRequest::pure(d, a, 2), 1.0 });
    }
    op.forcing = poisson_forcing;
    op.points = std::move(points);
    return op;
}

DiffOperatorSpec beam_interior(std::vector<Point> points)
{
    DiffOperatorSpec op;
    op.name = "beam_interior";
    op.terms.push_back({ DerivativeRequest::pure(1, 0, 4), 1.0 });
    op.forcing = [](std::span<const double>) { return beam::load; };
    op.points = std::move(points);
    return op;
}

DiffOperatorSpec beam_curvature(std::vector<Point> points)
{
    DiffOperatorSpec op;
    op.name = "beam_curvature";
    op.terms.push_back({ DerivativeRequest::pure(1, 0, 2), 1.0 });
    op.points = std::move(points);
    return op;
}

std::vector<Point> tensor_grid(int d, int per_axis)
{
    const auto ticks = linspace(0.0, 1.0, per_axis);
    std::vector<Point> out;
    std::vector<int> idx(static_cast<std::size_t>(d), 0);
    while (true) {
        Point p(static_cast<std::size_t>(d));
        for (int a = 0; a < d; ++a) {
            p[static_cast<std::size_t>(a)] = ticks[static_cast<std::size_t>(idx[static_cast<std::size_t>(a)])];
        }
        out.push_back(std::move(p));
        int a = 0;
        while (a < d && ++idx[static_cast<std::size_t>(a)] == per_axis) {
            idx[static_cast<std::size_t>(a)] = 0;
            ++a;
        }
        if (a == d) {
            break;
        }
    }
    return out;
}

double open_unit(Rng& rng)
{
    double v = 0.0;
    while (v == 0.0) {
        v = uniform01(rng);
    }
    return v;
}

} // namespace

std::vector<std::vector<double>> halton_points(
    std::size_t count, const std::vector<double>& lower, const std::vector<double>& upper)
{
    static constexpr unsigned primes[] = { 2, 3, 5, 7, 11, 13, 17, 19 };
    if (lower.size() != upper.size() || lower.size() > std::size(primes)) {
        throw std::invalid_argument("halton_points: bad box");
    }
    std::vector<std::vector<double>> out;
    out.reserve(count);
    for (std::size_t i = 1; i <= count; ++i) {
        std::vector<double> p(lower.size());
        for (std::size_t a = 0; a < lower.size(); ++a) {
            p[a] = lower[a] + (upper[a] - lower[a]) * halton(i, primes[a]);
        }
        out.push_back(std::move(p));
    }
    return out;
}

double beam::displacement(double x) noexcept
{
    return ((alpha * x + beta) * x * x + gamma) * x;
}

double poisson_solution(std::span<const double> x)
{
    double p = 1.0;
    for (double v : x) {
        p *= std::sin(std::numbers::pi * v);
    }
    return p;
}

double poisson_forcing(std::span<const double> x)
{
    const auto d = static_cast<double>(x.size());
    return -d * std::numbers::pi * std::numbers::pi * poisson_solution(x);
}

Problem build_euler_bernoulli(int n, int test, bool physics)
{
    if (n < 2) {
        throw std::invalid_argument("beam problem needs n >= 2 training samples");
    }
    Problem p;
    p.params = { ProblemKind::euler_bernoulli, n, 0, 1, test, physics, 0 };
    p.name = "euler_bernoulli";
    p.dimension = 1;
    p.lower = { 0.0 };
    p.upper = { beam::length };
    p.palette = beam_palette(test);
    p.max_complexity = 10;

    for (double x : linspace(0.0, beam::length, n)) {
        p.training.points.push_back({ x });
        p.training.labels.push_back(beam::displacement(x));
    }
    if (physics) {
        std::vector<Point> interior;
        for (int i = 1; i <= 9; ++i) {
            interior.push_back({ static_cast<double>(i) });
        }
        p.operators.push_back(beam_interior(std::move(interior)));
        p.operators.push_back(beam_curvature({ { 0.0 }, { beam::length } }));
    }

    GraphBuilder b(1);
    const int x = b.var(0);
    const int c0 = b.constant();
    const int c1 = b.constant();
    const int c2 = b.constant();
    const int inner = b.add(c1, b.mul(c2, x));
    const int outer = b.add(c0, b.mul(b.mul(x, x), inner));
    p.known = b.build(b.mul(x, outer));
    p.known_coeffs = { beam::gamma, beam::beta, beam::alpha };
    p.exact = [](std::span<const double> v) { return beam::displacement(v[0]); };

    std::vector<Point> grid;
    for (double x : linspace(0.0, beam::length, 201)) {
        grid.push_back({ x });
        p.test.points.push_back({ x });
        p.test.labels.push_back(beam::displacement(x));
    }
    p.test_operators.push_back(beam_interior(std::move(grid)));
    p.probes = halton_points(kProbeCount, p.lower, p.upper);
    return p;
}

int default_poisson_boundary(int d)
{
    switch (d) {
    case 1: return 2;
    case 2: return 16;
    case 3: return 20;
    default: throw std::invalid_argument("Poisson dimension must be 1, 2 or 3");
    }
}

int default_poisson_interior(int d)
{
    switch (d) {
    case 1: return 2;
    case 2: return 32;
    case 3: return 64;
    default: throw std::invalid_argument("Poisson dimension must be 1, 2 or 3");
    }
}

Problem build_poisson(int d, int test, Rng& rng, int n, int m)
{
    if (d < 1 || d > 3) {
        throw std::invalid_argument("Poisson dimension must be 1, 2 or 3");
    }
    n = n < 0 ? default_poisson_boundary(d) : n;
    m = m < 0 ? default_poisson_interior(d) : m;
    if (m < 1) {
        throw std::invalid_argument("Poisson problem needs m >= 1 interior points");
    }
    const auto du = static_cast<std::size_t>(d);
    Problem p;
    p.params = { ProblemKind::poisson, n, m, d, test, true, 0 };
    p.name = fmt::format("poisson{}d", d);
    p.dimension = d;
    p.lower.assign(du, 0.0);
    p.upper.assign(du, 1.0);
    p.palette = poisson_palette(test);
    p.max_complexity = 20;

    const int faces = 2 * d;
    for (int i = 0; i < n; ++i) {
        const int face = i < faces ? i : static_cast<int>(uniform_index(rng, static_cast<std::size_t>(faces)));
        Point x(du);
        for (auto& v : x) {
            v = uniform01(rng);
        }
        x[static_cast<std::size_t>(face / 2)] = static_cast<double>(face % 2);
        p.training.points.push_back(std::move(x));
        p.training.labels.push_back(0.0);
    }
    std::vector<Point> interior;
    for (int i = 0; i < m; ++i) {
        Point x(du);
        for (auto& v : x) {
            v = open_unit(rng);
        }
        interior.push_back(std::move(x));
    }
    p.operators.push_back(laplacian_spec(d, std::move(interior)));

    GraphBuilder b(d);
    int prod = -1;
    for (int a = 0; a < d; ++a) {
        const int c = b.constant();
        const int s = b.sin(b.mul(c, b.var(a)));
        prod = prod < 0 ? s : b.mul(prod, s);
    }
    p.known = b.build(prod);
    p.known_coeffs.assign(du, std::numbers::pi);
    p.exact = poisson_solution;

    static constexpr int per_axis[] = { 201, 41, 21 };
    auto grid = tensor_grid(d, per_axis[d - 1]);
    for (const auto& x : grid) {
        p.test.points.push_back(x);
        p.test.labels.push_back(poisson_solution(x));
    }
    p.test_operators.push_back(laplacian_spec(d, std::move(grid)));
    p.probes = halton_points(kProbeCount, p.lower, p.upper);
    return p;
}

Problem build_problem(const ProblemParams& params)
{
    Problem p;
    if (params.kind == ProblemKind::euler_bernoulli) {
        p = build_euler_bernoulli(params.n, params.test, params.physics);
    } else {
        if (!params.physics) {
            throw std::invalid_argument("Poisson problem requires physics");
        }
        Rng rng = make_rng({ params.seed, 0x9015u });
        p = build_poisson(params.dimension, params.test, rng, params.n, params.m);
    }
    p.params.seed = params.seed;
    return p;
}

HypothesisSpace hypothesis_space_size(int d, int m, int n)
{
    if (d < 1 || m < 0 || n <= 2 * d) {
        throw std::invalid_argument("hypothesis_space_size requires n > 2d");
    }
    const double base = std::pow(static_cast<double>(2 * d + m), n - 2 * d);
    double prod = 1.0;
    for (int i = 1; i <= 2 * d; ++i) {
        prod *= static_cast<double>(n - i + 1) * static_cast<double>(2 * d - i + 1);
    }
    return { base * prod, base * std::pow(2.0 * n * d, 2 * d) };
}

std::string manifest(const Problem& p)
{
    std::string out;
    const auto& q = p.params;
    out += fmt::format("problem {}\n", to_string(q.kind));
    out += fmt::format("dimension {}\nn {}\nm {}\ntest {}\nphysics {}\nseed {}\n", q.dimension, q.n, q.m, q.test,
        q.physics ? 1 : 0, q.seed);
    out += fmt::format("palette {}\nmax_complexity {}\n", p.palette.to_string(), p.max_complexity);
    for (std::size_t i = 0; i < p.training.size(); ++i) {
        out += "sample";
        for (double v : p.training.points[i]) {
            out += fmt::format(" {}", v);
        }
        out += fmt::format(" {}\n", p.training.labels[i]);
    }
    for (std::size_t k = 0; k < p.operators.size(); ++k) {
        for (const auto& x : p.operators[k].points) {
            out += fmt::format("point {}", k);
            for (double v : x) {
                out += fmt::format(" {}", v);
            }
            out += '\n';
        }
    }
    return out;
}

namespace {

struct ManifestLines {
    ProblemParams params;
    std::vector<std::pair<Point, double>> samples;
    std::vector<std::pair<std::size_t, Point>> points;
    std::string palette;
    std::size_t max_complexity { 0 };
};

ManifestLines read_manifest(std::string_view text)
{
    ManifestLines ml;
    std::istringstream in { std::string(text) };
    std::string line;
    std::size_t lineno = 0;
    bool have_problem = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') {
            continue;
        }
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        auto fail = [&](const std::string& what) { throw ParseError(what, lineno, 1); };
        auto read_doubles = [&] {
            std::vector<double> v;
            std::string tok;
            while (ls >> tok) {
                try {
                    std::size_t used = 0;
                    v.push_back(std::stod(tok, &used));
                    if (used != tok.size()) {
                        fail("bad number '" + tok + "'");
                    }
                } catch (const std::logic_error&) {
                    fail("bad number '" + tok + "'");
                }
            }
            return v;
        };
        auto read_int = [&]() -> long long {
            long long v = 0;
            if (!(ls >> v)) {
                fail("expected integer after '" + key + "'");
            }
            return v;
        };
        if (key == "problem") {
            std::string kind;
            ls >> kind;
            try {
                ml.params.kind = parse_problem_kind(kind);
            } catch (const std::invalid_argument& e) {
                fail(e.what());
            }
            have_problem = true;
        } else if (key == "dimension") {
            ml.params.dimension = static_cast<int>(read_int());
        } else if (key == "n") {
            ml.params.n = static_cast<int>(read_int());
        } else if (key == "m") {
            ml.params.m = static_cast<int>(read_int());
        } else if (key == "test") {
            ml.params.test = static_cast<int>(read_int());
        } else if (key == "physics") {
            ml.params.physics = read_int() != 0;
        } else if (key == "seed") {
            std::uint64_t s = 0;
            if (!(ls >> s)) {
                fail("expected seed");
            }
            ml.params.seed = s;
        } else if (key == "palette") {
            std::getline(ls, ml.palette);
        } else if (key == "max_complexity") {
            ml.max_complexity = static_cast<std::size_t>(read_int());
        } else if (key == "sample") {
            auto v = read_doubles();
            if (v.size() < 2) {
                fail("sample needs coordinates and a label");
            }
            const double label = v.back();
            v.pop_back();
            ml.samples.emplace_back(std::move(v), label);
        } else if (key == "point") {
            const auto k = read_int();
            if (k < 0) {
                fail("negative operator index");
            }
            ml.points.emplace_back(static_cast<std::size_t>(k), read_doubles());
        } else {
            fail("unknown manifest key '" + key + "'");
        }
    }
    if (!have_problem) {
        throw ParseError("manifest has no problem line", lineno, 1);
    }
    return ml;
}

} // namespace

ProblemParams parse_params(std::string_view text) { return read_manifest(text).params; }

Problem problem_from_manifest(std::string_view text)
{
    auto ml = read_manifest(text);
    Problem p;
    try {
        p = build_problem(ml.params);
    } catch (const std::invalid_argument& e) {
        throw ParseError(std::string("invalid problem parameters: ") + e.what(), 1, 1);
    }
    p.training.points.clear();
    p.training.labels.clear();
    for (auto& [x, y] : ml.samples) {
        if (x.size() != static_cast<std::size_t>(p.dimension)) {
            throw ParseError("sample dimension mismatch", 1, 1);
        }
        p.training.points.push_back(std::move(x));
        p.training.labels.push_back(y);
    }
    for (auto& op : p.operators) {
        op.points.clear();
    }
    for (auto& [k, x] : ml.points) {
        if (k >= p.operators.size() || x.size() != static_cast<std::size_t>(p.dimension)) {
            throw ParseError("collocation point does not match the problem", 1, 1);
        }
        p.operators[k].points.push_back(std::move(x));
    }
    if (!ml.palette.empty()) {
        p.palette = OperatorPalette::parse(ml.palette);
    }
    if (ml.max_complexity > 0) {
        p.max_complexity = ml.max_complexity;
    }
    return p;
}

} // namespace prgp
