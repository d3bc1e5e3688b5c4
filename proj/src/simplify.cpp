#include "prgp/simplify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <fmt/format.h>

#include "prgp/evalad.hpp"
#include "prgp/fitness.hpp"
#include "prgp/rng.hpp"

namespace prgp {

namespace {

constexpr double kPhaseTol = 1e-9;
constexpr double kDropTol = 1e-12;
constexpr std::size_t kMaxTerms = 2048;
constexpr long long kMaxExpandPower = 32;

using Kind = Atom::Kind;

int compare(const CanonicalForm& a, const CanonicalForm& b);

template <typename T>
int three_way(const T& a, const T& b)
{
    return a < b ? -1 : (b < a ? 1 : 0);
}

int compare_atom(const Atom& a, const Atom& b)
{
    if (int c = three_way(a.kind, b.kind)) {
        return c;
    }
    if (int c = three_way(a.var, b.var)) {
        return c;
    }
    if (int c = three_way(a.args.size(), b.args.size())) {
        return c;
    }
    for (std::size_t i = 0; i < a.args.size(); ++i) {
        if (int c = compare(a.args[i], b.args[i])) {
            return c;
        }
    }
    return 0;
}

int degree(const Term& t)
{
    int d = 0;
    for (const auto& f : t.factors) {
        d += f.power;
    }
    return d;
}

int compare_factors(const std::vector<Factor>& a, const std::vector<Factor>& b)
{
    const auto n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (int c = compare_atom(a[i].atom, b[i].atom)) {
            return c;
        }
        if (int c = three_way(b[i].power, a[i].power)) {
            return c;
        }
    }
    return three_way(a.size(), b.size());
}

// Higher degree first, then by factor list.
int compare_structure(const Term& a, const Term& b)
{
    if (int c = three_way(degree(b), degree(a))) {
        return c;
    }
    return compare_factors(a.factors, b.factors);
}

int compare(const CanonicalForm& a, const CanonicalForm& b)
{
    if (int c = three_way(a.terms.size(), b.terms.size())) {
        return c;
    }
    for (std::size_t i = 0; i < a.terms.size(); ++i) {
        if (int c = compare_structure(a.terms[i], b.terms[i])) {
            return c;
        }
        if (int c = three_way(a.terms[i].coef, b.terms[i].coef)) {
            return c;
        }
    }
    return 0;
}

void sort_factors(std::vector<Factor>& fs)
{
    std::sort(fs.begin(), fs.end(), [](const Factor& x, const Factor& y) { return compare_atom(x.atom, y.atom) < 0; });
    std::vector<Factor> merged;
    for (auto& f : fs) {
        if (!merged.empty() && compare_atom(merged.back().atom, f.atom) == 0) {
            merged.back().power += f.power;
        } else {
            merged.push_back(std::move(f));
        }
    }
    fs = std::move(merged);
}

// Sorts terms, merges equal factor lists and drops terms whose coefficient
// is at or below `drop`.
void normalize(CanonicalForm& f, double drop = 0.0)
{
    std::sort(f.terms.begin(), f.terms.end(),
        [](const Term& x, const Term& y) { return compare_structure(x, y) < 0; });
    std::vector<Term> out;
    for (auto& t : f.terms) {
        if (!out.empty() && compare_structure(out.back(), t) == 0) {
            out.back().coef += t.coef;
        } else {
            out.push_back(std::move(t));
        }
    }
    std::erase_if(out, [drop](const Term& t) { return !(std::abs(t.coef) > drop); });
    f.terms = std::move(out);
}

CanonicalForm constant(double c)
{
    CanonicalForm f;
    if (c != 0.0) {
        f.terms.push_back({ c, {} });
    }
    return f;
}

CanonicalForm atom_form(Atom a, double coef = 1.0)
{
    CanonicalForm f;
    f.terms.push_back({ coef, { Factor { std::move(a), 1 } } });
    return f;
}

CanonicalForm scaled(CanonicalForm f, double s)
{
    for (auto& t : f.terms) {
        t.coef *= s;
    }
    normalize(f);
    return f;
}

CanonicalForm add(const CanonicalForm& a, const CanonicalForm& b, double sb = 1.0)
{
    CanonicalForm f = a;
    for (auto t : b.terms) {
        t.coef *= sb;
        f.terms.push_back(std::move(t));
    }
    normalize(f);
    return f;
}

CanonicalForm opaque(Kind kind, CanonicalForm a, CanonicalForm b)
{
    Atom atom;
    atom.kind = kind;
    atom.args.push_back(std::move(a));
    atom.args.push_back(std::move(b));
    return atom_form(std::move(atom));
}

CanonicalForm mul(const CanonicalForm& a, const CanonicalForm& b)
{
    if (a.terms.size() * b.terms.size() > kMaxTerms) {
        return opaque(Kind::mul, a, b);
    }
    CanonicalForm f;
    f.terms.reserve(a.terms.size() * b.terms.size());
    for (const auto& ta : a.terms) {
        for (const auto& tb : b.terms) {
            Term t { ta.coef * tb.coef, ta.factors };
            t.factors.insert(t.factors.end(), tb.factors.begin(), tb.factors.end());
            sort_factors(t.factors);
            f.terms.push_back(std::move(t));
        }
    }
    normalize(f);
    return f;
}

// Divides every term of a by the monomial m when the factors allow it.
std::optional<CanonicalForm> divide_by_monomial(const CanonicalForm& a, const Term& m)
{
    CanonicalForm out;
    for (const auto& t : a.terms) {
        Term q { t.coef / m.coef, t.factors };
        for (const auto& mf : m.factors) {
            auto it = std::find_if(q.factors.begin(), q.factors.end(),
                [&](const Factor& f) { return compare_atom(f.atom, mf.atom) == 0; });
            if (it == q.factors.end() || it->power < mf.power) {
                return std::nullopt;
            }
            it->power -= mf.power;
            if (it->power == 0) {
                q.factors.erase(it);
            }
        }
        out.terms.push_back(std::move(q));
    }
    normalize(out);
    return out;
}

CanonicalForm divide(const CanonicalForm& a, const CanonicalForm& b)
{
    if (auto c = b.constant_value(); c && *c != 0.0) {
        return scaled(a, 1.0 / *c);
    }
    if (b.terms.size() == 1) {
        if (auto q = divide_by_monomial(a, b.terms[0])) {
            return *q;
        }
    }
    return opaque(Kind::div, a, b);
}

CanonicalForm power(const CanonicalForm& base, const CanonicalForm& e)
{
    const auto ev = e.constant_value();
    if (!ev) {
        return opaque(Kind::pow, base, e);
    }
    if (auto bv = base.constant_value()) {
        if (auto v = pow_value(*bv, *ev)) {
            return constant(*v);
        }
        return opaque(Kind::pow, base, e);
    }
    if (!is_integer_valued(*ev)) {
        return opaque(Kind::pow, base, e);
    }
    const long long n = std::llround(*ev);
    if (n < -kMaxExpandPower || n > kMaxExpandPower) {
        return opaque(Kind::pow, base, e);
    }
    CanonicalForm acc = constant(1.0);
    for (long long k = 0; k < std::llabs(n); ++k) {
        acc = mul(acc, base);
    }
    return n < 0 ? divide(constant(1.0), acc) : acc;
}

bool near(double a, double b) { return std::abs(a - b) <= kPhaseTol; }

CanonicalForm trig(Kind kind, CanonicalForm arg)
{
    if (auto v = arg.constant_value()) {
        return constant(kind == Kind::sin ? std::sin(*v) : std::cos(*v));
    }
    double phase = 0.0;
    std::erase_if(arg.terms, [&](const Term& t) {
        if (t.factors.empty()) {
            phase += t.coef;
            return true;
        }
        return false;
    });
    double sign = 1.0;
    // odd/even symmetry makes the leading coefficient positive
    if (arg.terms.front().coef < 0.0) {
        arg = scaled(std::move(arg), -1.0);
        phase = -phase;
        if (kind == Kind::sin) {
            sign = -sign;
        }
    }
    phase = std::remainder(phase, 2.0 * std::numbers::pi);
    const double half = std::numbers::pi / 2.0;
    if (near(std::abs(phase), std::numbers::pi)) {
        sign = -sign;
        phase = 0.0;
    } else if (near(phase, half)) {
        // sin(t + pi/2) = cos t, cos(t + pi/2) = -sin t
        if (kind == Kind::cos) {
            sign = -sign;
        }
        kind = kind == Kind::sin ? Kind::cos : Kind::sin;
        phase = 0.0;
    } else if (near(phase, -half)) {
        // sin(t - pi/2) = -cos t, cos(t - pi/2) = sin t
        if (kind == Kind::sin) {
            sign = -sign;
        }
        kind = kind == Kind::sin ? Kind::cos : Kind::sin;
        phase = 0.0;
    } else if (near(phase, 0.0)) {
        phase = 0.0;
    }
    if (phase != 0.0) {
        arg.terms.push_back({ phase, {} });
        normalize(arg);
    }
    Atom a;
    a.kind = kind;
    a.args.push_back(std::move(arg));
    return atom_form(std::move(a), sign);
}

// Drops negligible terms at every nesting level and restores ordering.
void finalize(CanonicalForm& f)
{
    for (auto& t : f.terms) {
        for (auto& fac : t.factors) {
            for (auto& arg : fac.atom.args) {
                finalize(arg);
            }
        }
        sort_factors(t.factors);
    }
    normalize(f, kDropTol);
}

std::string render(const CanonicalForm& f);

std::string render_atom(const Atom& a)
{
    switch (a.kind) {
    case Kind::variable: return fmt::format("x{}", a.var);
    case Kind::sin: return fmt::format("sin({})", render(a.args[0]));
    case Kind::cos: return fmt::format("cos({})", render(a.args[0]));
    case Kind::div: return fmt::format("(({})/({}))", render(a.args[0]), render(a.args[1]));
    case Kind::pow: return fmt::format("pow({}, {})", render(a.args[0]), render(a.args[1]));
    case Kind::mul: return fmt::format("(({})*({}))", render(a.args[0]), render(a.args[1]));
    }
    return {};
}

std::string render(const CanonicalForm& f)
{
    if (f.terms.empty()) {
        return "0.0";
    }
    std::string out;
    for (const auto& t : f.terms) {
        if (!out.empty()) {
            out += " + ";
        }
        out += format_number(t.coef);
        for (const auto& fac : t.factors) {
            out += "*" + render_atom(fac.atom);
            if (fac.power != 1) {
                out += fmt::format("^{}", fac.power);
            }
        }
    }
    return out;
}

std::optional<double> eval_atom(const Atom& a, std::span<const double> x)
{
    if (a.kind == Kind::variable) {
        return x[static_cast<std::size_t>(a.var)];
    }
    auto u = evaluate(a.args[0], x);
    if (!u) {
        return std::nullopt;
    }
    switch (a.kind) {
    case Kind::sin: return std::sin(*u);
    case Kind::cos: return std::cos(*u);
    default: break;
    }
    auto v = evaluate(a.args[1], x);
    if (!v) {
        return std::nullopt;
    }
    switch (a.kind) {
    case Kind::div:
        if (*v == 0.0) {
            return std::nullopt;
        }
        return *u / *v;
    case Kind::pow: return pow_value(*u, *v);
    default: return *u * *v;
    }
}

int build_form(GraphBuilder& b, std::vector<double>& values, const CanonicalForm& f);

int build_atom(GraphBuilder& b, std::vector<double>& values, const Atom& a)
{
    switch (a.kind) {
    case Kind::variable: return b.var(a.var);
    case Kind::sin: return b.sin(build_form(b, values, a.args[0]));
    case Kind::cos: return b.cos(build_form(b, values, a.args[0]));
    case Kind::div: {
        const int u = build_form(b, values, a.args[0]);
        return b.div(u, build_form(b, values, a.args[1]));
    }
    case Kind::pow: {
        const int u = build_form(b, values, a.args[0]);
        return b.pow(u, build_form(b, values, a.args[1]));
    }
    case Kind::mul: {
        const int u = build_form(b, values, a.args[0]);
        return b.mul(u, build_form(b, values, a.args[1]));
    }
    }
    return -1;
}

int build_constant(GraphBuilder& b, std::vector<double>& values, double v)
{
    values.push_back(v);
    return b.constant();
}

int build_form(GraphBuilder& b, std::vector<double>& values, const CanonicalForm& f)
{
    if (f.terms.empty()) {
        return build_constant(b, values, 0.0);
    }
    int sum = -1;
    for (const auto& t : f.terms) {
        int term = build_constant(b, values, t.coef);
        for (const auto& fac : t.factors) {
            const int a = build_atom(b, values, fac.atom);
            for (int k = 0; k < fac.power; ++k) {
                term = b.mul(term, a);
            }
        }
        sum = sum < 0 ? term : b.add(sum, term);
    }
    return sum;
}

// Coefficient comparison weighted by each term's magnitude over the box.
struct Matcher {
    std::vector<double> scale; // max |x_k| over the box

    double magnitude(const Term& t) const
    {
        double m = 1.0;
        for (const auto& f : t.factors) {
            if (f.atom.kind == Kind::variable) {
                m *= std::pow(std::max(scale[static_cast<std::size_t>(f.atom.var)], 1e-300), f.power);
            }
        }
        return m;
    }

    bool factors_match(const std::vector<Factor>& a, const std::vector<Factor>& b, double tol) const
    {
        if (a.size() != b.size()) {
            return false;
        }
        for (std::size_t i = 0; i < a.size(); ++i) {
            const auto& x = a[i];
            const auto& y = b[i];
            if (x.atom.kind != y.atom.kind || x.atom.var != y.atom.var || x.power != y.power
                || x.atom.args.size() != y.atom.args.size()) {
                return false;
            }
            for (std::size_t k = 0; k < x.atom.args.size(); ++k) {
                if (!close(x.atom.args[k], y.atom.args[k], tol)) {
                    return false;
                }
            }
        }
        return true;
    }

    bool close(const CanonicalForm& a, const CanonicalForm& b, double tol) const
    {
        std::vector<bool> used(b.terms.size(), false);
        double diff = 0.0;
        double total = 0.0;
        for (const auto& ta : a.terms) {
            const double m = magnitude(ta);
            bool found = false;
            for (std::size_t j = 0; j < b.terms.size(); ++j) {
                if (used[j] || !factors_match(ta.factors, b.terms[j].factors, tol)) {
                    continue;
                }
                used[j] = true;
                diff += std::abs(ta.coef - b.terms[j].coef) * m;
                total += std::max(std::abs(ta.coef), std::abs(b.terms[j].coef)) * m;
                found = true;
                break;
            }
            if (!found) {
                diff += std::abs(ta.coef) * m;
                total += std::abs(ta.coef) * m;
            }
        }
        for (std::size_t j = 0; j < b.terms.size(); ++j) {
            if (!used[j]) {
                const double m = magnitude(b.terms[j]);
                diff += std::abs(b.terms[j].coef) * m;
                total += std::abs(b.terms[j].coef) * m;
            }
        }
        return diff <= tol * total;
    }
};

} // namespace

std::optional<double> CanonicalForm::constant_value() const
{
    if (terms.empty()) {
        return 0.0;
    }
    if (terms.size() == 1 && terms[0].factors.empty()) {
        return terms[0].coef;
    }
    return std::nullopt;
}

CanonicalForm canonicalize(const ExpressionGraph& g, std::span<const double> coeffs)
{
    if (coeffs.size() != g.slot_count()) {
        throw std::invalid_argument("coefficient vector length does not match the graph");
    }
    const auto live = g.reachable();
    std::vector<CanonicalForm> forms(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!live[i]) {
            continue;
        }
        const auto& c = g[i];
        const auto arg = [&](int k) -> const CanonicalForm& { return forms[static_cast<std::size_t>(k)]; };
        switch (c.op) {
        case OperatorKind::load_variable: {
            Atom a;
            a.var = c.payload;
            forms[i] = atom_form(std::move(a));
            break;
        }
        case OperatorKind::load_constant: forms[i] = constant(coeffs[static_cast<std::size_t>(c.payload)]); break;
        case OperatorKind::add: forms[i] = add(arg(c.lhs), arg(c.rhs)); break;
        case OperatorKind::sub: forms[i] = add(arg(c.lhs), arg(c.rhs), -1.0); break;
        case OperatorKind::mul: forms[i] = mul(arg(c.lhs), arg(c.rhs)); break;
        case OperatorKind::div: forms[i] = divide(arg(c.lhs), arg(c.rhs)); break;
        case OperatorKind::pow: forms[i] = power(arg(c.lhs), arg(c.rhs)); break;
        case OperatorKind::sin: forms[i] = trig(Kind::sin, arg(c.lhs)); break;
        case OperatorKind::cos: forms[i] = trig(Kind::cos, arg(c.lhs)); break;
        }
    }
    CanonicalForm out = std::move(forms.back());
    finalize(out);
    return out;
}

std::string to_string(const CanonicalForm& f) { return render(f); }

std::optional<double> evaluate(const CanonicalForm& f, std::span<const double> point)
{
    double sum = 0.0;
    for (const auto& t : f.terms) {
        double v = t.coef;
        for (const auto& fac : t.factors) {
            auto a = eval_atom(fac.atom, point);
            if (!a) {
                return std::nullopt;
            }
            for (int k = 0; k < fac.power; ++k) {
                v *= *a;
            }
        }
        sum += v;
    }
    if (!std::isfinite(sum)) {
        return std::nullopt;
    }
    return sum;
}

GraphWithCoeffs to_graph(const CanonicalForm& f, int dimension)
{
    GraphBuilder b(dimension);
    std::vector<double> values;
    const int out = build_form(b, values, f);
    return { b.build(out), std::move(values) };
}

std::string to_string(Verdict v)
{
    switch (v) {
    case Verdict::equivalent: return "equivalent";
    case Verdict::numerically_close_only: return "numerically_close_only";
    case Verdict::distinct: return "distinct";
    }
    return {};
}

EquivalenceVerdict equivalent(
    const CanonicalForm& a, const CanonicalForm& b, int dimension, const EquivalenceOptions& options)
{
    const auto d = static_cast<std::size_t>(dimension);
    std::vector<double> lo = options.lower.empty() ? std::vector<double>(d, -1.0) : options.lower;
    std::vector<double> hi = options.upper.empty() ? std::vector<double>(d, 1.0) : options.upper;
    if (lo.size() != d || hi.size() != d) {
        throw std::invalid_argument("equivalence box does not match the dimension");
    }
    Matcher matcher;
    for (std::size_t k = 0; k < d; ++k) {
        matcher.scale.push_back(std::max(std::abs(lo[k]), std::abs(hi[k])));
    }
    if (matcher.close(a, b, options.coef_tol)) {
        return { Verdict::equivalent, {} };
    }
    double worst = -1.0;
    std::vector<double> witness;
    for (const auto& x : halton_points(static_cast<std::size_t>(options.probes), lo, hi)) {
        const auto u = evaluate(a, x);
        const auto v = evaluate(b, x);
        if (!u && !v) {
            continue;
        }
        const double diff = (u && v) ? std::abs(*u - *v) : std::numeric_limits<double>::infinity();
        if (diff > worst) {
            worst = diff;
            witness = x;
        }
    }
    if (worst < options.probe_tol) {
        return { Verdict::numerically_close_only, {} };
    }
    return { Verdict::distinct, std::move(witness) };
}

double test_fitness(const Individual& ind, const Problem& problem)
{
    const FitnessEvaluator ev(ind.graph, problem.test, problem.test_operators);
    return ev.scalar(ind.coeffs);
}

namespace {

Verdict known_verdict(const Individual& ind, const Problem& problem)
{
    const auto mine = canonicalize(ind.graph, ind.coeffs);
    const auto known = canonicalize(problem.known, problem.known_coeffs);
    EquivalenceOptions opt;
    opt.lower = problem.lower;
    opt.upper = problem.upper;
    return equivalent(mine, known, problem.dimension, opt).verdict;
}

} // namespace

bool is_known_solution(const Individual& ind, const Problem& problem)
{
    if (!(test_fitness(ind, problem) < kSuccessThreshold)) {
        return false;
    }
    return known_verdict(ind, problem) == Verdict::equivalent;
}

SolutionCheck check_solution(const Individual& ind, const Problem& problem)
{
    SolutionCheck c;
    c.test_fitness = test_fitness(ind, problem);
    c.fitness_gate = c.test_fitness < kSuccessThreshold;
    c.verdict = known_verdict(ind, problem);
    return c;
}

} // namespace prgp
