#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "prgp/expr.hpp"

namespace prgp {

inline constexpr int kMaxDerivativeOrder = 4;
inline constexpr int kMaxAxes = 4;

// Order of differentiation per input variable.
struct DerivativeRequest {
    std::vector<int> orders;

    static DerivativeRequest pure(int dimension, int axis, int order);
    [[nodiscard]] int total_order() const noexcept;
    [[nodiscard]] bool is_pure() const noexcept;

    friend bool operator==(const DerivativeRequest&, const DerivativeRequest&) = default;
};

// Empty when the model is undefined at the point (division by zero, log of a
// non-positive base inside pow, overflow, ...).
using EvalOutcome = std::optional<double>;

// Value plus pure partial derivatives d^k f / dx_axis^k for k = 1..max_order.
struct AxisDerivatives {
    double value { 0.0 };
    std::array<std::array<double, kMaxDerivativeOrder + 1>, kMaxAxes> d {};
};

// The reachable part of a graph, flattened for repeated evaluation. Construct
// once per graph and evaluate at many points / coefficient vectors.
class Program {
public:
    struct Instr {
        OperatorKind op;
        std::uint16_t a;
        std::uint16_t b;
        std::int32_t payload;
    };

    Program() = default;
    explicit Program(const ExpressionGraph& g);

    [[nodiscard]] int dimension() const noexcept { return dimension_; }
    [[nodiscard]] std::size_t slot_count() const noexcept { return slots_; }
    [[nodiscard]] std::span<const Instr> instructions() const noexcept { return code_; }

    // All three throw std::invalid_argument on a coefficient-length or
    // point-dimension mismatch.
    [[nodiscard]] EvalOutcome evaluate(std::span<const double> coeffs, std::span<const double> point) const;
    [[nodiscard]] EvalOutcome derivative(
        std::span<const double> coeffs, std::span<const double> point, const DerivativeRequest& req) const;
    [[nodiscard]] EvalOutcome laplacian(std::span<const double> coeffs, std::span<const double> point) const;

    // One forward sweep producing pure derivatives along every axis whose bit
    // is set in axis_mask.
    [[nodiscard]] std::optional<AxisDerivatives> axis_derivatives(std::span<const double> coeffs,
        std::span<const double> point, int max_order, unsigned axis_mask) const;

private:
    void check(std::span<const double> coeffs, std::span<const double> point) const;

    std::vector<Instr> code_;
    int dimension_ { 0 };
    std::size_t slots_ { 0 };
};

EvalOutcome evaluate(const ExpressionGraph& g, std::span<const double> coeffs, std::span<const double> point);
EvalOutcome derivative(const ExpressionGraph& g, std::span<const double> coeffs, std::span<const double> point,
    const DerivativeRequest& req);
EvalOutcome laplacian(const ExpressionGraph& g, std::span<const double> coeffs, std::span<const double> point);

// Scalar pow semantics shared with the symbolic layer: integer-valued
// exponents use repeated multiplication, others exp(b ln a) for a > 0.
EvalOutcome pow_value(double base, double exponent);
bool is_integer_valued(double v) noexcept;

} // namespace prgp
