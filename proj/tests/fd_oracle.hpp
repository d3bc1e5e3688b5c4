#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "prgp/expr.hpp"

namespace fd_oracle {

using Big = boost::multiprecision::cpp_bin_float_50;
using K = prgp::OperatorKind;
using prgp::ExpressionGraph;

// Independent tree-walking evaluator in extended precision, following the
// same K::pow convention (integer exponents by repeated multiplication).
inline std::optional<Big> big_eval(const ExpressionGraph& g, const std::vector<double>& coeffs, const std::vector<Big>& x)
{
    std::vector<Big> v(g.size());
    const auto live = g.reachable();
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!live[i]) {
            continue;
        }
        const auto& c = g[i];
        const auto idx = [](int k) { return static_cast<std::size_t>(k); };
        switch (c.op) {
        case K::load_variable: v[i] = x[idx(c.payload)]; break;
        case K::load_constant: v[i] = Big(coeffs[idx(c.payload)]); break;
        case K::add: v[i] = v[idx(c.lhs)] + v[idx(c.rhs)]; break;
        case K::sub: v[i] = v[idx(c.lhs)] - v[idx(c.rhs)]; break;
        case K::mul: v[i] = v[idx(c.lhs)] * v[idx(c.rhs)]; break;
        case K::div:
            if (v[idx(c.rhs)] == 0) {
                return std::nullopt;
            }
            v[i] = v[idx(c.lhs)] / v[idx(c.rhs)];
            break;
        case K::sin: v[i] = boost::multiprecision::sin(v[idx(c.lhs)]); break;
        case K::cos: v[i] = boost::multiprecision::cos(v[idx(c.lhs)]); break;
        case K::pow: {
            const Big a = v[idx(c.lhs)];
            const Big b = v[idx(c.rhs)];
            const Big r = boost::multiprecision::round(b);
            if (boost::multiprecision::abs(b - r) < Big(1e-9)) {
                const long n = r.convert_to<long>();
                if ((n < 0 && a == 0) || std::abs(n) > 64) {
                    return std::nullopt;
                }
                Big acc = 1;
                for (long k = 0; k < std::abs(n); ++k) {
                    acc *= a;
                }
                v[i] = n < 0 ? Big(1) / acc : acc;
            } else {
                if (a <= 0) {
                    return std::nullopt;
                }
                v[i] = boost::multiprecision::exp(b * boost::multiprecision::log(a));
            }
            break;
        }
        }
        const double check = v[i].convert_to<double>();
        if (!std::isfinite(check)) {
            return std::nullopt;
        }
    }
    return v.back();
}

inline Big binomial(int n, int k)
{
    Big r = 1;
    for (int j = 1; j <= k; ++j) {
        r = r * (n - k + j) / j;
    }
    return r;
}

// Tensor product of 1D central differences with step h along every axis.
inline std::optional<Big> central_difference(const ExpressionGraph& g, const std::vector<double>& coeffs,
    const std::vector<double>& point, const std::vector<int>& orders, const Big& h)
{
    const std::size_t d = point.size();
    std::vector<int> j(d, 0);
    Big sum = 0;
    while (true) {
        std::vector<Big> x(d);
        Big w = 1;
        for (std::size_t a = 0; a < d; ++a) {
            const int k = orders[a];
            x[a] = Big(point[a]) + (Big(k) / 2 - j[a]) * h;
            w *= binomial(k, j[a]) * ((j[a] % 2) ? -1 : 1);
        }
        auto f = big_eval(g, coeffs, x);
        if (!f) {
            return std::nullopt;
        }
        sum += w * *f;
        std::size_t a = 0;
        while (a < d && ++j[a] > orders[a]) {
            j[a] = 0;
            ++a;
        }
        if (a == d) {
            break;
        }
    }
    int total = 0;
    for (int k : orders) {
        total += k;
    }
    for (int t = 0; t < total; ++t) {
        sum /= h;
    }
    return sum;
}

// Central differences at h, h/2, h/4 combined by two Richardson levels.
// Empty when the stencil leaves the domain or the extrapolation is not
// self-consistent (the function is not smooth enough around the point).
inline std::optional<double> derivative(
    const ExpressionGraph& g, const std::vector<double>& coeffs, const std::vector<double>& point,
    const std::vector<int>& orders)
{
    const Big h = Big(1e-4);
    auto d0 = central_difference(g, coeffs, point, orders, h);
    auto d1 = central_difference(g, coeffs, point, orders, h / 2);
    auto d2 = central_difference(g, coeffs, point, orders, h / 4);
    if (!d0 || !d1 || !d2) {
        return std::nullopt;
    }
    const Big r0 = (4 * *d1 - *d0) / 3;
    const Big r1 = (4 * *d2 - *d1) / 3;
    const Big r2 = (16 * r1 - r0) / 15;
    const Big spread = boost::multiprecision::abs(r2 - r1);
    if (spread > Big(1e-9) * (boost::multiprecision::abs(r2) + 1)) {
        return std::nullopt;
    }
    return r2.convert_to<double>();
}

} // namespace fd_oracle
