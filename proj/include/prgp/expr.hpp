#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "prgp/rng.hpp"

namespace prgp {

enum class OperatorKind : std::uint8_t {
    add,
    sub,
    mul,
    div,
    sin,
    cos,
    pow,
    load_variable,
    load_constant,
};

constexpr int arity(OperatorKind op) noexcept
{
    switch (op) {
    case OperatorKind::add:
    case OperatorKind::sub:
    case OperatorKind::mul:
    case OperatorKind::div:
    case OperatorKind::pow:
        return 2;
    case OperatorKind::sin:
    case OperatorKind::cos:
        return 1;
    default:
        return 0;
    }
}

constexpr bool is_leaf(OperatorKind op) noexcept { return arity(op) == 0; }

// Upper-case mnemonic used by the text serialization (ADD, SIN, VAR, ...).
std::string_view mnemonic(OperatorKind op) noexcept;
std::optional<OperatorKind> parse_mnemonic(std::string_view text) noexcept;

struct Command {
    OperatorKind op { OperatorKind::load_variable };
    std::int32_t lhs { -1 };
    std::int32_t rhs { -1 };
    // variable index for load_variable, coefficient slot for load_constant
    std::int32_t payload { -1 };

    static Command variable(int k) { return { OperatorKind::load_variable, -1, -1, k }; }
    static Command constant(int slot) { return { OperatorKind::load_constant, -1, -1, slot }; }
    static Command unary(OperatorKind op, int a) { return { op, a, -1, -1 }; }
    static Command binary(OperatorKind op, int a, int b) { return { op, a, b, -1 }; }

    friend bool operator==(const Command&, const Command&) = default;
};

// The set of non-leaf operators evolution may draw from.
class OperatorPalette {
public:
    OperatorPalette() = default;
    OperatorPalette(std::initializer_list<OperatorKind> ops);
    explicit OperatorPalette(std::vector<OperatorKind> ops);

    [[nodiscard]] bool contains(OperatorKind op) const noexcept;
    [[nodiscard]] std::span<const OperatorKind> operators() const noexcept { return ops_; }
    [[nodiscard]] std::size_t size() const noexcept { return ops_.size(); }
    [[nodiscard]] std::vector<OperatorKind> with_arity(int n) const;

    // "ADD SUB MUL"
    [[nodiscard]] std::string to_string() const;
    static OperatorPalette parse(std::string_view text);

    friend bool operator==(const OperatorPalette&, const OperatorPalette&) = default;

private:
    std::vector<OperatorKind> ops_;
};

// Flat command stack. Every argument index strictly precedes the command that
// uses it; the last command is the output. Commands that the output does not
// reach are allowed (dead code) and are ignored by evaluation.
class ExpressionGraph {
public:
    ExpressionGraph() = default;
    // Throws std::invalid_argument when the stack violates an invariant.
    ExpressionGraph(std::vector<Command> commands, int dimension);

    [[nodiscard]] std::span<const Command> commands() const noexcept { return commands_; }
    [[nodiscard]] const Command& operator[](std::size_t i) const { return commands_[i]; }
    [[nodiscard]] int dimension() const noexcept { return dimension_; }
    [[nodiscard]] std::size_t size() const noexcept { return commands_.size(); }
    [[nodiscard]] bool empty() const noexcept { return commands_.empty(); }
    [[nodiscard]] std::size_t output() const noexcept { return commands_.size() - 1; }
    // Number of load_constant commands; the length of a coefficient vector.
    [[nodiscard]] std::size_t slot_count() const noexcept { return slots_; }
    [[nodiscard]] std::vector<bool> reachable() const;

    friend bool operator==(const ExpressionGraph&, const ExpressionGraph&) = default;

private:
    std::vector<Command> commands_;
    int dimension_ { 0 };
    std::size_t slots_ { 0 };
};

// Convenience for assembling graphs by hand. Constants receive slots in the
// order they are created.
class GraphBuilder {
public:
    explicit GraphBuilder(int dimension) : dimension_(dimension) { }

    int var(int k);
    int constant();
    int op(OperatorKind kind, int a, int b = -1);
    int add(int a, int b) { return op(OperatorKind::add, a, b); }
    int sub(int a, int b) { return op(OperatorKind::sub, a, b); }
    int mul(int a, int b) { return op(OperatorKind::mul, a, b); }
    int div(int a, int b) { return op(OperatorKind::div, a, b); }
    int pow(int a, int b) { return op(OperatorKind::pow, a, b); }
    int sin(int a) { return op(OperatorKind::sin, a); }
    int cos(int a) { return op(OperatorKind::cos, a); }

    // The command at `out` becomes the output; commands after it are dropped.
    [[nodiscard]] ExpressionGraph build(int out) const;
    [[nodiscard]] ExpressionGraph build() const;

private:
    std::vector<Command> commands_;
    int dimension_;
    int slots_ { 0 };
};

struct GenerationOptions {
    double terminal_probability { 0.3 };
    // probability that a terminal is a constant rather than a variable;
    // negative means 1/(d+1)
    double constant_probability { -1.0 };
};

// Random stack of exactly max_complexity commands; its reachable complexity is
// therefore bounded by max_complexity.
ExpressionGraph random_graph(const OperatorPalette& palette, int dimension, std::size_t max_complexity, Rng& rng,
    const GenerationOptions& options = {});

// Every stack of length <= max_length whose commands are all reachable from the
// output, with constant slots numbered in stack order.
std::vector<ExpressionGraph> enumerate_graphs(const OperatorPalette& palette, int dimension, std::size_t max_length);

[[nodiscard]] std::size_t complexity(const ExpressionGraph& g);
[[nodiscard]] std::size_t coefficient_count(const ExpressionGraph& g);

struct PrunedGraph {
    ExpressionGraph graph;
    // slot_origin[new_slot] = slot in the original graph
    std::vector<std::size_t> slot_origin;
};

// Drops unreachable commands and renumbers constant slots in stack order.
PrunedGraph prune(const ExpressionGraph& g);
// Same, carrying a coefficient vector along.
ExpressionGraph prune(const ExpressionGraph& g, std::span<const double> coeffs, std::vector<double>& pruned_coeffs);

// Renumbers constant slots in stack order (dead constants included).
ExpressionGraph renumber_slots(const ExpressionGraph& g);

// Expanded-tree equality of the outputs (sharing and dead code ignored).
bool structurally_equal(const ExpressionGraph& a, const ExpressionGraph& b);

class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& what, std::size_t line, std::size_t column);
    [[nodiscard]] std::size_t line() const noexcept { return line_; }
    [[nodiscard]] std::size_t column() const noexcept { return column_; }

private:
    std::size_t line_;
    std::size_t column_;
};

// Text form: optional "# dim d" header, then one "idx: OP a b" / "idx: VAR k" /
// "idx: CONST k" line per command.
std::string serialize(const ExpressionGraph& g);
ExpressionGraph deserialize(std::string_view text);

// Infix rendering. With coefficients, slot names are replaced by their values.
std::string render_infix(const ExpressionGraph& g, std::span<const double> coeffs = {});

struct ParsedModel {
    ExpressionGraph graph;
    // NaN for named slots (c0, c1, ...), the literal value otherwise
    std::vector<double> coeffs;
};

// Parses the grammar produced by render_infix. Named constants cK keep slot K;
// numeric literals get fresh slots after the named ones.
ParsedModel parse_infix(std::string_view text, int dimension);

std::string format_number(double v);

} // namespace prgp
