#include "prgp/evalad.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/core.h>

namespace prgp {

DerivativeRequest DerivativeRequest::pure(int dimension, int axis, int order)
{
    DerivativeRequest r { std::vector<int>(static_cast<std::size_t>(dimension), 0) };
    r.orders.at(static_cast<std::size_t>(axis)) = order;
    return r;
}

int DerivativeRequest::total_order() const noexcept { return std::accumulate(orders.begin(), orders.end(), 0); }

bool DerivativeRequest::is_pure() const noexcept
{
    return std::count_if(orders.begin(), orders.end(), [](int o) { return o != 0; }) <= 1;
}

bool is_integer_valued(double v) noexcept { return std::isfinite(v) && std::abs(v - std::round(v)) < 1e-9; }

namespace {

constexpr long long kMaxRepeatedPower = 64;

double ipow(double a, long long n)
{
    double result = 1.0;
    double base = a;
    for (auto e = n; e > 0; e >>= 1) {
        if (e & 1) {
            result *= base;
        }
        base *= base;
    }
    return result;
}

} // namespace

EvalOutcome pow_value(double base, double exponent)
{
    double r = 0.0;
    if (is_integer_valued(exponent)) {
        const auto n = std::llround(exponent);
        if (n < 0 && base == 0.0) {
            return std::nullopt;
        }
        if (std::llabs(n) <= kMaxRepeatedPower) {
            r = n >= 0 ? ipow(base, n) : 1.0 / ipow(base, -n);
        } else {
            r = std::pow(base, static_cast<double>(n));
        }
    } else if (base > 0.0) {
        r = std::pow(base, exponent);
    } else {
        return std::nullopt;
    }
    if (!std::isfinite(r)) {
        return std::nullopt;
    }
    return r;
}

namespace {

// ---------------------------------------------------------------------------
// Scalar algebra

struct ScalarAlgebra {
    using Value = double;

    static void variable(Value& out, int /*k*/, double x) { out = x; }
    static void constant(Value& out, double c) { out = c; }
    static void add(Value& out, const Value& a, const Value& b) { out = a + b; }
    static void sub(Value& out, const Value& a, const Value& b) { out = a - b; }
    static void mul(Value& out, const Value& a, const Value& b) { out = a * b; }
    static bool div(Value& out, const Value& a, const Value& b)
    {
        out = a / b;
        return true;
    }
    static void sin(Value& out, const Value& a) { out = std::sin(a); }
    static void cos(Value& out, const Value& a) { out = std::cos(a); }
    static bool pow(Value& out, const Value& a, const Value& b)
    {
        auto r = pow_value(a, b);
        out = r.value_or(0.0);
        return r.has_value();
    }
    static bool finite(const Value& v) { return std::isfinite(v); }
};

// Taylor coefficients t_k = f^(k)(v) / k! of the elementary functions.
using Coeffs = std::array<double, kMaxDerivativeOrder + 1>;

Coeffs sin_series(double v, int order)
{
    const double s = std::sin(v);
    const double c = std::cos(v);
    const std::array<double, 4> cycle { s, c, -s, -c };
    Coeffs t {};
    double fact = 1.0;
    for (int k = 0; k <= order; ++k) {
        if (k > 0) {
            fact *= k;
        }
        t[static_cast<std::size_t>(k)] = cycle[static_cast<std::size_t>(k % 4)] / fact;
    }
    return t;
}

Coeffs cos_series(double v, int order)
{
    const double s = std::sin(v);
    const double c = std::cos(v);
    const std::array<double, 4> cycle { c, -s, -c, s };
    Coeffs t {};
    double fact = 1.0;
    for (int k = 0; k <= order; ++k) {
        if (k > 0) {
            fact *= k;
        }
        t[static_cast<std::size_t>(k)] = cycle[static_cast<std::size_t>(k % 4)] / fact;
    }
    return t;
}

// 1/(v + d) = sum_k (-1)^k d^k / v^(k+1)
Coeffs reciprocal_series(double v, int order)
{
    Coeffs t {};
    double p = 1.0 / v;
    for (int k = 0; k <= order; ++k) {
        t[static_cast<std::size_t>(k)] = (k % 2 == 0) ? p : -p;
        p /= v;
    }
    return t;
}

// ln(v + d) = ln v + sum_{k>=1} (-1)^(k+1) d^k / (k v^k)
Coeffs log_series(double v, int order)
{
    Coeffs t {};
    t[0] = std::log(v);
    double p = 1.0;
    for (int k = 1; k <= order; ++k) {
        p /= v;
        t[static_cast<std::size_t>(k)] = ((k % 2 == 1) ? p : -p) / k;
    }
    return t;
}

Coeffs exp_series(double v, int order)
{
    Coeffs t {};
    const double e = std::exp(v);
    double fact = 1.0;
    for (int k = 0; k <= order; ++k) {
        if (k > 0) {
            fact *= k;
        }
        t[static_cast<std::size_t>(k)] = e / fact;
    }
    return t;
}

// ---------------------------------------------------------------------------
// Pure-direction jets: a shared value plus one truncated univariate series per
// active axis. Mixed terms are never formed, which is exactly what pure
// partials and the Laplacian need.

struct PureJet {
    double v;
    // s[axis][k] holds the k-th normalized Taylor coefficient, k = 1..order
    std::array<std::array<double, kMaxDerivativeOrder + 1>, kMaxAxes> s;
};

class PureAlgebra {
public:
    using Value = PureJet;

    PureAlgebra(int order, unsigned mask) : order_(order)
    {
        for (int a = 0; a < kMaxAxes; ++a) {
            if (mask & (1U << static_cast<unsigned>(a))) {
                axes_[static_cast<std::size_t>(naxes_++)] = a;
            }
        }
    }

    void variable(Value& out, int k, double x) const
    {
        out.v = x;
        for (int i = 0; i < naxes_; ++i) {
            auto& s = out.s[ax(i)];
            std::fill(s.begin(), s.end(), 0.0);
            s[1] = axes_[static_cast<std::size_t>(i)] == k ? 1.0 : 0.0;
        }
    }

    void constant(Value& out, double c) const
    {
        out.v = c;
        for (int i = 0; i < naxes_; ++i) {
            auto& s = out.s[ax(i)];
            std::fill(s.begin(), s.end(), 0.0);
        }
    }

    void add(Value& out, const Value& a, const Value& b) const
    {
        out.v = a.v + b.v;
        for (int i = 0; i < naxes_; ++i) {
            const auto x = ax(i);
            for (int k = 1; k <= order_; ++k) {
                out.s[x][kk(k)] = a.s[x][kk(k)] + b.s[x][kk(k)];
            }
        }
    }

    void sub(Value& out, const Value& a, const Value& b) const
    {
        out.v = a.v - b.v;
        for (int i = 0; i < naxes_; ++i) {
            const auto x = ax(i);
            for (int k = 1; k <= order_; ++k) {
                out.s[x][kk(k)] = a.s[x][kk(k)] - b.s[x][kk(k)];
            }
        }
    }

    void mul(Value& out, const Value& a, const Value& b) const
    {
        out.v = a.v * b.v;
        for (int i = 0; i < naxes_; ++i) {
            const auto x = ax(i);
            const auto& as = a.s[x];
            const auto& bs = b.s[x];
            for (int k = 1; k <= order_; ++k) {
                double acc = a.v * bs[kk(k)] + as[kk(k)] * b.v;
                for (int j = 1; j < k; ++j) {
                    acc += as[kk(j)] * bs[kk(k - j)];
                }
                out.s[x][kk(k)] = acc;
            }
        }
    }

    // out = sum_k t_k (a - a.v)^k
    void compose(Value& out, const Value& a, const Coeffs& t) const
    {
        out.v = t[0];
        for (int i = 0; i < naxes_; ++i) {
            const auto x = ax(i);
            const auto& d = a.s[x];
            std::array<double, kMaxDerivativeOrder + 1> p = d;
            auto& r = out.s[x];
            for (int k = 1; k <= order_; ++k) {
                r[kk(k)] = t[1] * d[kk(k)];
            }
            for (int j = 2; j <= order_; ++j) {
                std::array<double, kMaxDerivativeOrder + 1> q {};
                for (int k = j; k <= order_; ++k) {
                    double acc = 0.0;
                    for (int m = j - 1; m < k; ++m) {
                        acc += p[kk(m)] * d[kk(k - m)];
                    }
                    q[kk(k)] = acc;
                }
                p = q;
                for (int k = j; k <= order_; ++k) {
                    r[kk(k)] += t[kk(j)] * p[kk(k)];
                }
            }
        }
    }

    bool div(Value& out, const Value& a, const Value& b) const
    {
        if (b.v == 0.0) {
            return false;
        }
        Value inv;
        compose(inv, b, reciprocal_series(b.v, order_));
        mul(out, a, inv);
        out.v = a.v / b.v;
        return true;
    }

    void sin(Value& out, const Value& a) const { compose(out, a, sin_series(a.v, order_)); }
    void cos(Value& out, const Value& a) const { compose(out, a, cos_series(a.v, order_)); }

    bool pow(Value& out, const Value& a, const Value& b) const
    {
        if (is_integer_valued(b.v) && is_constant(b)) {
            const auto n = std::llround(b.v);
            if (std::llabs(n) <= kMaxRepeatedPower) {
                Value base = a;
                Value result;
                constant(result, 1.0);
                Value tmp;
                for (auto e = std::llabs(n); e > 0; e >>= 1) {
                    if (e & 1) {
                        mul(tmp, result, base);
                        result = tmp;
                    }
                    mul(tmp, base, base);
                    base = tmp;
                }
                if (n >= 0) {
                    out = result;
                    return true;
                }
                Value one;
                constant(one, 1.0);
                return div(out, one, result);
            }
        }
        if (a.v <= 0.0) {
            return false;
        }
        Value lg;
        compose(lg, a, log_series(a.v, order_));
        Value prod;
        mul(prod, b, lg);
        compose(out, prod, exp_series(prod.v, order_));
        out.v = std::pow(a.v, b.v);
        return true;
    }

    bool finite(const Value& v) const
    {
        if (!std::isfinite(v.v)) {
            return false;
        }
        for (int i = 0; i < naxes_; ++i) {
            const auto x = ax(i);
            for (int k = 1; k <= order_; ++k) {
                if (!std::isfinite(v.s[x][kk(k)])) {
                    return false;
                }
            }
        }
        return true;
    }

private:
    [[nodiscard]] std::size_t ax(int i) const { return static_cast<std::size_t>(axes_[static_cast<std::size_t>(i)]); }
    static constexpr std::size_t kk(int k) { return static_cast<std::size_t>(k); }

    bool is_constant(const Value& v) const
    {
        for (int i = 0; i < naxes_; ++i) {
            for (int k = 1; k <= order_; ++k) {
                if (v.s[ax(i)][kk(k)] != 0.0) {
                    return false;
                }
            }
        }
        return true;
    }

    int order_;
    std::array<int, kMaxAxes> axes_ {};
    int naxes_ { 0 };
};

// ---------------------------------------------------------------------------
// Box jets: truncated multivariate Taylor polynomials over the monomials
// x^beta with beta <= alpha componentwise (nested forward mode). Any mixed
// partial of total order <= 4 fits in 16 coefficients.

inline constexpr std::size_t kBoxCapacity = 16;

struct BoxJet {
    std::array<double, kBoxCapacity> c;
};

class BoxAlgebra {
public:
    using Value = BoxJet;

    explicit BoxAlgebra(const std::vector<int>& alpha)
    {
        const auto d = alpha.size();
        strides_.resize(d);
        std::size_t n = 1;
        for (std::size_t i = 0; i < d; ++i) {
            strides_[i] = n;
            n *= static_cast<std::size_t>(alpha[i] + 1);
        }
        if (n > kBoxCapacity) {
            throw std::invalid_argument("derivative request too large");
        }
        size_ = n;
        order_ = std::accumulate(alpha.begin(), alpha.end(), 0);
        target_ = 0;
        for (std::size_t i = 0; i < d; ++i) {
            target_ += static_cast<std::size_t>(alpha[i]) * strides_[i];
        }
        alpha_ = alpha;
        // product table: for every gamma, all splits beta + (gamma - beta)
        std::vector<int> gamma(d), beta(d);
        for (std::size_t g = 0; g < n; ++g) {
            decode(g, gamma);
            std::size_t count = 1;
            for (std::size_t i = 0; i < d; ++i) {
                count *= static_cast<std::size_t>(gamma[i] + 1);
            }
            for (std::size_t m = 0; m < count; ++m) {
                auto rem = m;
                std::size_t bi = 0;
                std::size_t ri = 0;
                for (std::size_t i = 0; i < d; ++i) {
                    const auto span = static_cast<std::size_t>(gamma[i] + 1);
                    const auto bval = rem % span;
                    rem /= span;
                    bi += bval * strides_[i];
                    ri += (static_cast<std::size_t>(gamma[i]) - bval) * strides_[i];
                }
                pairs_.push_back({ static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(bi), static_cast<std::uint8_t>(ri) });
            }
        }
    }

    [[nodiscard]] std::size_t target() const { return target_; }

    // alpha! to turn the normalized coefficient into a derivative
    [[nodiscard]] double factorial_weight() const
    {
        double w = 1.0;
        for (int a : alpha_) {
            for (int k = 2; k <= a; ++k) {
                w *= k;
            }
        }
        return w;
    }

    void variable(Value& out, int k, double x) const
    {
        out.c.fill(0.0);
        out.c[0] = x;
        if (alpha_[static_cast<std::size_t>(k)] >= 1) {
            out.c[strides_[static_cast<std::size_t>(k)]] = 1.0;
        }
    }

    void constant(Value& out, double c) const
    {
        out.c.fill(0.0);
        out.c[0] = c;
    }

    void add(Value& out, const Value& a, const Value& b) const
    {
        for (std::size_t i = 0; i < size_; ++i) {
            out.c[i] = a.c[i] + b.c[i];
        }
    }

    void sub(Value& out, const Value& a, const Value& b) const
    {
        for (std::size_t i = 0; i < size_; ++i) {
            out.c[i] = a.c[i] - b.c[i];
        }
    }

    void mul(Value& out, const Value& a, const Value& b) const
    {
        std::array<double, kBoxCapacity> r {};
        for (const auto& p : pairs_) {
            r[p.g] += a.c[p.b] * b.c[p.r];
        }
        out.c = r;
    }

    void compose(Value& out, const Value& a, const Coeffs& t) const
    {
        Value d = a;
        d.c[0] = 0.0;
        Value p = d;
        Value r;
        r.c.fill(0.0);
        r.c[0] = t[0];
        for (std::size_t i = 1; i < size_; ++i) {
            r.c[i] = t[1] * d.c[i];
        }
        for (int j = 2; j <= order_; ++j) {
            Value q;
            mul(q, p, d);
            p = q;
            for (std::size_t i = 1; i < size_; ++i) {
                r.c[i] += t[static_cast<std::size_t>(j)] * p.c[i];
            }
        }
        out = r;
    }

    bool div(Value& out, const Value& a, const Value& b) const
    {
        if (b.c[0] == 0.0) {
            return false;
        }
        Value inv;
        compose(inv, b, reciprocal_series(b.c[0], order_));
        mul(out, a, inv);
        out.c[0] = a.c[0] / b.c[0];
        return true;
    }

    void sin(Value& out, const Value& a) const { compose(out, a, sin_series(a.c[0], order_)); }
    void cos(Value& out, const Value& a) const { compose(out, a, cos_series(a.c[0], order_)); }

    bool pow(Value& out, const Value& a, const Value& b) const
    {
        const bool constant_exponent = std::all_of(b.c.begin() + 1, b.c.begin() + static_cast<std::ptrdiff_t>(size_), [](double v) { return v == 0.0; });
        if (constant_exponent && is_integer_valued(b.c[0])) {
            const auto n = std::llround(b.c[0]);
            if (std::llabs(n) <= kMaxRepeatedPower) {
                Value base = a;
                Value result;
                constant(result, 1.0);
                Value tmp;
                for (auto e = std::llabs(n); e > 0; e >>= 1) {
                    if (e & 1) {
                        mul(tmp, result, base);
                        result = tmp;
                    }
                    mul(tmp, base, base);
                    base = tmp;
                }
                if (n >= 0) {
                    out = result;
                    return true;
                }
                Value one;
                constant(one, 1.0);
                return div(out, one, result);
            }
        }
        if (a.c[0] <= 0.0) {
            return false;
        }
        Value lg;
        compose(lg, a, log_series(a.c[0], order_));
        Value prod;
        mul(prod, b, lg);
        compose(out, prod, exp_series(prod.c[0], order_));
        out.c[0] = std::pow(a.c[0], b.c[0]);
        return true;
    }

    bool finite(const Value& v) const
    {
        for (std::size_t i = 0; i < size_; ++i) {
            if (!std::isfinite(v.c[i])) {
                return false;
            }
        }
        return true;
    }

private:
    struct Pair {
        std::uint8_t g, b, r;
    };

    void decode(std::size_t idx, std::vector<int>& out) const
    {
        for (std::size_t i = 0; i < alpha_.size(); ++i) {
            const auto span = static_cast<std::size_t>(alpha_[i] + 1);
            out[i] = static_cast<int>(idx % span);
            idx /= span;
        }
    }

    std::vector<std::size_t> strides_;
    std::vector<int> alpha_;
    std::vector<Pair> pairs_;
    std::size_t size_ { 1 };
    std::size_t target_ { 0 };
    int order_ { 0 };
};

// ---------------------------------------------------------------------------

template <class Alg>
bool run(std::span<const Program::Instr> code, const Alg& alg, std::span<const double> coeffs,
    std::span<const double> point, std::vector<typename Alg::Value>& buf)
{
    buf.resize(code.size());
    for (std::size_t i = 0; i < code.size(); ++i) {
        const auto& in = code[i];
        auto& out = buf[i];
        switch (in.op) {
        case OperatorKind::load_variable:
            alg.variable(out, in.payload, point[static_cast<std::size_t>(in.payload)]);
            break;
        case OperatorKind::load_constant:
            alg.constant(out, coeffs[static_cast<std::size_t>(in.payload)]);
            break;
        case OperatorKind::add:
            alg.add(out, buf[in.a], buf[in.b]);
            break;
        case OperatorKind::sub:
            alg.sub(out, buf[in.a], buf[in.b]);
            break;
        case OperatorKind::mul:
            alg.mul(out, buf[in.a], buf[in.b]);
            break;
        case OperatorKind::div:
            if (!alg.div(out, buf[in.a], buf[in.b])) {
                return false;
            }
            break;
        case OperatorKind::sin:
            alg.sin(out, buf[in.a]);
            break;
        case OperatorKind::cos:
            alg.cos(out, buf[in.a]);
            break;
        case OperatorKind::pow:
            if (!alg.pow(out, buf[in.a], buf[in.b])) {
                return false;
            }
            break;
        }
        if (!alg.finite(out)) {
            return false;
        }
    }
    return true;
}

} // namespace

Program::Program(const ExpressionGraph& g)
    : dimension_(g.dimension())
    , slots_(g.slot_count())
{
    if (g.size() > 65535) {
        throw std::invalid_argument("graph too large");
    }
    const auto live = g.reachable();
    std::vector<std::uint16_t> remap(g.size(), 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!live[i]) {
            continue;
        }
        const auto& c = g[i];
        Instr in { c.op, 0, 0, c.payload };
        if (arity(c.op) >= 1) {
            in.a = remap[static_cast<std::size_t>(c.lhs)];
        }
        if (arity(c.op) == 2) {
            in.b = remap[static_cast<std::size_t>(c.rhs)];
        }
        remap[i] = static_cast<std::uint16_t>(code_.size());
        code_.push_back(in);
    }
}

void Program::check(std::span<const double> coeffs, std::span<const double> point) const
{
    if (coeffs.size() != slots_) {
        throw std::invalid_argument(fmt::format("expected {} coefficients, got {}", slots_, coeffs.size()));
    }
    if (point.size() != static_cast<std::size_t>(dimension_)) {
        throw std::invalid_argument(fmt::format("expected a {}-dimensional point, got {}", dimension_, point.size()));
    }
}

EvalOutcome Program::evaluate(std::span<const double> coeffs, std::span<const double> point) const
{
    check(coeffs, point);
    thread_local std::vector<double> buf;
    if (!run(code_, ScalarAlgebra {}, coeffs, point, buf)) {
        return std::nullopt;
    }
    return buf.back();
}

std::optional<AxisDerivatives> Program::axis_derivatives(
    std::span<const double> coeffs, std::span<const double> point, int max_order, unsigned axis_mask) const
{
    check(coeffs, point);
    if (max_order < 1 || max_order > kMaxDerivativeOrder) {
        throw std::invalid_argument("derivative order must be in 1..4");
    }
    if (dimension_ > kMaxAxes || (axis_mask >> static_cast<unsigned>(dimension_)) != 0U) {
        throw std::invalid_argument("axis mask outside the model dimension");
    }
    thread_local std::vector<PureJet> buf;
    const PureAlgebra alg(max_order, axis_mask);
    if (!run(code_, alg, coeffs, point, buf)) {
        return std::nullopt;
    }
    const auto& top = buf.back();
    AxisDerivatives out;
    out.value = top.v;
    for (int a = 0; a < dimension_; ++a) {
        if (!(axis_mask & (1U << static_cast<unsigned>(a)))) {
            continue;
        }
        double fact = 1.0;
        for (int k = 1; k <= max_order; ++k) {
            fact *= k;
            out.d[static_cast<std::size_t>(a)][static_cast<std::size_t>(k)] = top.s[static_cast<std::size_t>(a)][static_cast<std::size_t>(k)] * fact;
        }
    }
    return out;
}

EvalOutcome Program::derivative(
    std::span<const double> coeffs, std::span<const double> point, const DerivativeRequest& req) const
{
    check(coeffs, point);
    if (req.orders.size() != static_cast<std::size_t>(dimension_)) {
        throw std::invalid_argument("derivative request dimension mismatch");
    }
    if (std::any_of(req.orders.begin(), req.orders.end(), [](int o) { return o < 0; })) {
        throw std::invalid_argument("negative derivative order");
    }
    const int total = req.total_order();
    if (total > kMaxDerivativeOrder) {
        throw std::invalid_argument("total derivative order exceeds 4");
    }
    if (total == 0) {
        return evaluate(coeffs, point);
    }
    if (req.is_pure() && dimension_ <= kMaxAxes) {
        const auto axis = static_cast<int>(std::find_if(req.orders.begin(), req.orders.end(), [](int o) { return o != 0; }) - req.orders.begin());
        auto r = axis_derivatives(coeffs, point, total, 1U << static_cast<unsigned>(axis));
        if (!r) {
            return std::nullopt;
        }
        return r->d[static_cast<std::size_t>(axis)][static_cast<std::size_t>(total)];
    }
    const BoxAlgebra alg(req.orders);
    thread_local std::vector<BoxJet> buf;
    if (!run(code_, alg, coeffs, point, buf)) {
        return std::nullopt;
    }
    return buf.back().c[alg.target()] * alg.factorial_weight();
}

EvalOutcome Program::laplacian(std::span<const double> coeffs, std::span<const double> point) const
{
    check(coeffs, point);
    if (dimension_ <= kMaxAxes) {
        const unsigned mask = (1U << static_cast<unsigned>(dimension_)) - 1U;
        auto r = axis_derivatives(coeffs, point, 2, mask);
        if (!r) {
            return std::nullopt;
        }
        double sum = 0.0;
        for (int a = 0; a < dimension_; ++a) {
            sum += r->d[static_cast<std::size_t>(a)][2];
        }
        return sum;
    }
    double sum = 0.0;
    for (int a = 0; a < dimension_; ++a) {
        auto r = derivative(coeffs, point, DerivativeRequest::pure(dimension_, a, 2));
        if (!r) {
            return std::nullopt;
        }
        sum += *r;
    }
    return sum;
}

EvalOutcome evaluate(const ExpressionGraph& g, std::span<const double> coeffs, std::span<const double> point)
{
    return Program(g).evaluate(coeffs, point);
}

EvalOutcome derivative(const ExpressionGraph& g, std::span<const double> coeffs, std::span<const double> point,
    const DerivativeRequest& req)
{
    return Program(g).derivative(coeffs, point, req);
}

EvalOutcome laplacian(const ExpressionGraph& g, std::span<const double> coeffs, std::span<const double> point)
{
    return Program(g).laplacian(coeffs, point);
}

} // namespace prgp
