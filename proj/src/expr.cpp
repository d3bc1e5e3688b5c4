#include "prgp/expr.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>

#include <fmt/core.h>

namespace prgp {

namespace {

constexpr std::array<std::pair<OperatorKind, std::string_view>, 9> kMnemonics { {
    { OperatorKind::add, "ADD" },
    { OperatorKind::sub, "SUB" },
    { OperatorKind::mul, "MUL" },
    { OperatorKind::div, "DIV" },
    { OperatorKind::sin, "SIN" },
    { OperatorKind::cos, "COS" },
    { OperatorKind::pow, "POW" },
    { OperatorKind::load_variable, "VAR" },
    { OperatorKind::load_constant, "CONST" },
} };

} // namespace

std::string_view mnemonic(OperatorKind op) noexcept
{
    for (const auto& [k, name] : kMnemonics) {
        if (k == op) {
            return name;
        }
    }
    return "?";
}

std::optional<OperatorKind> parse_mnemonic(std::string_view text) noexcept
{
    for (const auto& [k, name] : kMnemonics) {
        if (name == text) {
            return k;
        }
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// OperatorPalette

OperatorPalette::OperatorPalette(std::initializer_list<OperatorKind> ops)
    : OperatorPalette(std::vector<OperatorKind>(ops))
{
}

OperatorPalette::OperatorPalette(std::vector<OperatorKind> ops)
    : ops_(std::move(ops))
{
    if (ops_.empty()) {
        throw std::invalid_argument("operator palette must not be empty");
    }
    for (auto op : ops_) {
        if (is_leaf(op)) {
            throw std::invalid_argument(fmt::format("{} is a leaf, not a palette operator", mnemonic(op)));
        }
    }
    std::sort(ops_.begin(), ops_.end());
    ops_.erase(std::unique(ops_.begin(), ops_.end()), ops_.end());
}

bool OperatorPalette::contains(OperatorKind op) const noexcept
{
    return std::find(ops_.begin(), ops_.end(), op) != ops_.end();
}

std::vector<OperatorKind> OperatorPalette::with_arity(int n) const
{
    std::vector<OperatorKind> out;
    std::copy_if(ops_.begin(), ops_.end(), std::back_inserter(out), [n](auto op) { return arity(op) == n; });
    return out;
}

std::string OperatorPalette::to_string() const
{
    std::string out;
    for (auto op : ops_) {
        if (!out.empty()) {
            out += ' ';
        }
        out += mnemonic(op);
    }
    return out;
}

OperatorPalette OperatorPalette::parse(std::string_view text)
{
    std::vector<OperatorKind> ops;
    std::istringstream in { std::string(text) };
    std::string token;
    while (in >> token) {
        std::transform(token.begin(), token.end(), token.begin(), [](unsigned char c) { return std::toupper(c); });
        auto op = parse_mnemonic(token);
        if (!op) {
            throw std::invalid_argument(fmt::format("unknown operator '{}'", token));
        }
        ops.push_back(*op);
    }
    return OperatorPalette(std::move(ops));
}

// ---------------------------------------------------------------------------
// ExpressionGraph

ExpressionGraph::ExpressionGraph(std::vector<Command> commands, int dimension)
    : commands_(std::move(commands))
    , dimension_(dimension)
{
    if (dimension_ < 1) {
        throw std::invalid_argument("dimension must be >= 1");
    }
    if (commands_.empty()) {
        throw std::invalid_argument("expression graph must contain at least one command");
    }
    std::vector<int> slot_uses;
    for (std::size_t i = 0; i < commands_.size(); ++i) {
        const auto& c = commands_[i];
        const auto pos = static_cast<std::int32_t>(i);
        switch (arity(c.op)) {
        case 0:
            if (c.op == OperatorKind::load_variable && (c.payload < 0 || c.payload >= dimension_)) {
                throw std::invalid_argument(fmt::format("command {}: variable index {} out of range", i, c.payload));
            }
            if (c.op == OperatorKind::load_constant) {
                if (c.payload < 0) {
                    throw std::invalid_argument(fmt::format("command {}: negative constant slot", i));
                }
                if (static_cast<std::size_t>(c.payload) >= slot_uses.size()) {
                    slot_uses.resize(static_cast<std::size_t>(c.payload) + 1, 0);
                }
                ++slot_uses[static_cast<std::size_t>(c.payload)];
            }
            break;
        case 1:
            if (c.lhs < 0 || c.lhs >= pos) {
                throw std::invalid_argument(fmt::format("command {}: argument {} does not precede it", i, c.lhs));
            }
            break;
        default:
            if (c.lhs < 0 || c.lhs >= pos || c.rhs < 0 || c.rhs >= pos) {
                throw std::invalid_argument(fmt::format("command {}: arguments ({}, {}) do not precede it", i, c.lhs, c.rhs));
            }
            break;
        }
    }
    for (std::size_t s = 0; s < slot_uses.size(); ++s) {
        if (slot_uses[s] != 1) {
            throw std::invalid_argument(fmt::format("constant slot {} used {} times; slots must be 0..k-1, each once", s, slot_uses[s]));
        }
    }
    slots_ = slot_uses.size();
}

std::vector<bool> ExpressionGraph::reachable() const
{
    std::vector<bool> live(commands_.size(), false);
    if (commands_.empty()) {
        return live;
    }
    live.back() = true;
    for (std::size_t i = commands_.size(); i-- > 0;) {
        if (!live[i]) {
            continue;
        }
        const auto& c = commands_[i];
        const int n = arity(c.op);
        if (n >= 1) {
            live[static_cast<std::size_t>(c.lhs)] = true;
        }
        if (n == 2) {
            live[static_cast<std::size_t>(c.rhs)] = true;
        }
    }
    return live;
}

// ---------------------------------------------------------------------------
// GraphBuilder

int GraphBuilder::var(int k)
{
    commands_.push_back(Command::variable(k));
    return static_cast<int>(commands_.size()) - 1;
}

int GraphBuilder::constant()
{
    commands_.push_back(Command::constant(slots_++));
    return static_cast<int>(commands_.size()) - 1;
}

int GraphBuilder::op(OperatorKind kind, int a, int b)
{
    commands_.push_back(arity(kind) == 1 ? Command::unary(kind, a) : Command::binary(kind, a, b));
    return static_cast<int>(commands_.size()) - 1;
}

ExpressionGraph GraphBuilder::build(int out) const
{
    // slots are handed out in creation order, so any prefix stays contiguous
    return ExpressionGraph(std::vector<Command>(commands_.begin(), commands_.begin() + out + 1), dimension_);
}

ExpressionGraph GraphBuilder::build() const { return build(static_cast<int>(commands_.size()) - 1); }

// ---------------------------------------------------------------------------
// generation

namespace {

Command random_terminal(int dimension, double constant_probability, int& next_slot, Rng& rng)
{
    if (uniform01(rng) < constant_probability) {
        return Command::constant(next_slot++);
    }
    return Command::variable(static_cast<int>(uniform_index(rng, static_cast<std::size_t>(dimension))));
}

} // namespace

ExpressionGraph random_graph(const OperatorPalette& palette, int dimension, std::size_t max_complexity, Rng& rng,
    const GenerationOptions& options)
{
    if (max_complexity < 1 || dimension < 1 || palette.size() == 0) {
        throw std::invalid_argument("random_graph: invalid parameters");
    }
    const double pc = options.constant_probability < 0.0 ? 1.0 / (dimension + 1.0) : options.constant_probability;
    const auto ops = palette.operators();
    std::vector<Command> cmds;
    cmds.reserve(max_complexity);
    int next_slot = 0;
    for (std::size_t i = 0; i < max_complexity; ++i) {
        if (i == 0 || uniform01(rng) < options.terminal_probability) {
            cmds.push_back(random_terminal(dimension, pc, next_slot, rng));
            continue;
        }
        const auto op = ops[uniform_index(rng, ops.size())];
        const auto a = static_cast<int>(uniform_index(rng, i));
        if (arity(op) == 1) {
            cmds.push_back(Command::unary(op, a));
        } else {
            cmds.push_back(Command::binary(op, a, static_cast<int>(uniform_index(rng, i))));
        }
    }
    return ExpressionGraph(std::move(cmds), dimension);
}

std::vector<ExpressionGraph> enumerate_graphs(const OperatorPalette& palette, int dimension, std::size_t max_length)
{
    std::vector<ExpressionGraph> out;
    std::vector<Command> stack;
    const auto unary = palette.with_arity(1);
    const auto binary = palette.with_arity(2);

    std::function<void(int)> extend = [&](int slots) {
        if (!stack.empty()) {
            ExpressionGraph g(stack, dimension);
            const auto live = g.reachable();
            if (std::all_of(live.begin(), live.end(), [](bool b) { return b; })) {
                out.push_back(std::move(g));
            }
        }
        if (stack.size() == max_length) {
            return;
        }
        const auto pos = static_cast<int>(stack.size());
        for (int k = 0; k < dimension; ++k) {
            stack.push_back(Command::variable(k));
            extend(slots);
            stack.pop_back();
        }
        stack.push_back(Command::constant(slots));
        extend(slots + 1);
        stack.pop_back();
        for (auto op : unary) {
            for (int a = 0; a < pos; ++a) {
                stack.push_back(Command::unary(op, a));
                extend(slots);
                stack.pop_back();
            }
        }
        for (auto op : binary) {
            for (int a = 0; a < pos; ++a) {
                for (int b = 0; b < pos; ++b) {
                    stack.push_back(Command::binary(op, a, b));
                    extend(slots);
                    stack.pop_back();
                }
            }
        }
    };
    extend(0);
    return out;
}

// ---------------------------------------------------------------------------
// measurement and pruning

std::size_t complexity(const ExpressionGraph& g)
{
    const auto live = g.reachable();
    return static_cast<std::size_t>(std::count(live.begin(), live.end(), true));
}

std::size_t coefficient_count(const ExpressionGraph& g)
{
    const auto live = g.reachable();
    std::size_t n = 0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (live[i] && g[i].op == OperatorKind::load_constant) {
            ++n;
        }
    }
    return n;
}

PrunedGraph prune(const ExpressionGraph& g)
{
    const auto live = g.reachable();
    std::vector<std::int32_t> remap(g.size(), -1);
    std::vector<Command> cmds;
    std::vector<std::size_t> origin;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!live[i]) {
            continue;
        }
        Command c = g[i];
        const int n = arity(c.op);
        if (n >= 1) {
            c.lhs = remap[static_cast<std::size_t>(c.lhs)];
        }
        if (n == 2) {
            c.rhs = remap[static_cast<std::size_t>(c.rhs)];
        }
        if (c.op == OperatorKind::load_constant) {
            origin.push_back(static_cast<std::size_t>(c.payload));
            c.payload = static_cast<std::int32_t>(origin.size() - 1);
        }
        remap[i] = static_cast<std::int32_t>(cmds.size());
        cmds.push_back(c);
    }
    return { ExpressionGraph(std::move(cmds), g.dimension()), std::move(origin) };
}

ExpressionGraph prune(const ExpressionGraph& g, std::span<const double> coeffs, std::vector<double>& pruned_coeffs)
{
    auto p = prune(g);
    pruned_coeffs.clear();
    for (auto s : p.slot_origin) {
        pruned_coeffs.push_back(s < coeffs.size() ? coeffs[s] : 0.0);
    }
    return std::move(p.graph);
}

ExpressionGraph renumber_slots(const ExpressionGraph& g)
{
    std::vector<Command> cmds(g.commands().begin(), g.commands().end());
    int next = 0;
    for (auto& c : cmds) {
        if (c.op == OperatorKind::load_constant) {
            c.payload = next++;
        }
    }
    return ExpressionGraph(std::move(cmds), g.dimension());
}

namespace {

bool tree_equal(const ExpressionGraph& a, std::size_t i, const ExpressionGraph& b, std::size_t j)
{
    const auto& ca = a[i];
    const auto& cb = b[j];
    if (ca.op != cb.op) {
        return false;
    }
    switch (arity(ca.op)) {
    case 0:
        return ca.payload == cb.payload;
    case 1:
        return tree_equal(a, static_cast<std::size_t>(ca.lhs), b, static_cast<std::size_t>(cb.lhs));
    default:
        return tree_equal(a, static_cast<std::size_t>(ca.lhs), b, static_cast<std::size_t>(cb.lhs))
            && tree_equal(a, static_cast<std::size_t>(ca.rhs), b, static_cast<std::size_t>(cb.rhs));
    }
}

} // namespace

bool structurally_equal(const ExpressionGraph& a, const ExpressionGraph& b)
{
    if (a.empty() || b.empty()) {
        return a.empty() && b.empty();
    }
    return tree_equal(a, a.output(), b, b.output());
}

// ---------------------------------------------------------------------------
// serialization

ParseError::ParseError(const std::string& what, std::size_t line, std::size_t column)
    : std::runtime_error(fmt::format("{}:{}: {}", line, column, what))
    , line_(line)
    , column_(column)
{
}

std::string serialize(const ExpressionGraph& g)
{
    std::string out = fmt::format("# dim {}\n", g.dimension());
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto& c = g[i];
        switch (arity(c.op)) {
        case 0:
            out += fmt::format("{}: {} {}\n", i, mnemonic(c.op), c.payload);
            break;
        case 1:
            out += fmt::format("{}: {} {}\n", i, mnemonic(c.op), c.lhs);
            break;
        default:
            out += fmt::format("{}: {} {} {}\n", i, mnemonic(c.op), c.lhs, c.rhs);
            break;
        }
    }
    return out;
}

namespace {

// Whitespace-separated token reader over one line that remembers columns.
struct LineTokens {
    std::string_view line;
    std::size_t lineno;
    std::size_t pos { 0 };

    std::optional<std::pair<std::string_view, std::size_t>> next()
    {
        while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t' || line[pos] == '\r')) {
            ++pos;
        }
        if (pos >= line.size()) {
            return std::nullopt;
        }
        const auto start = pos;
        while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t' && line[pos] != '\r') {
            ++pos;
        }
        return std::make_pair(line.substr(start, pos - start), start + 1);
    }

    long integer(std::string_view what)
    {
        auto tok = next();
        if (!tok) {
            throw ParseError(fmt::format("expected {}", what), lineno, line.size() + 1);
        }
        long v = 0;
        auto [ptr, ec] = std::from_chars(tok->first.data(), tok->first.data() + tok->first.size(), v);
        if (ec != std::errc() || ptr != tok->first.data() + tok->first.size()) {
            throw ParseError(fmt::format("expected {}, found '{}'", what, tok->first), lineno, tok->second);
        }
        return v;
    }
};

} // namespace

ExpressionGraph deserialize(std::string_view text)
{
    std::vector<Command> cmds;
    int dimension = -1;
    int max_var = -1;
    std::size_t lineno = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        const auto line = text.substr(start, end - start);
        ++lineno;
        start = end + 1;

        LineTokens tokens { line, lineno };
        auto first = tokens.next();
        if (!first) {
            if (end == text.size()) {
                break;
            }
            continue;
        }
        if (first->first.starts_with('#')) {
            auto key = first->first == "#" ? tokens.next() : std::make_optional(std::make_pair(first->first.substr(1), first->second + 1));
            if (key && key->first == "dim") {
                dimension = static_cast<int>(tokens.integer("dimension"));
                if (dimension < 1) {
                    throw ParseError("dimension must be >= 1", lineno, 1);
                }
            }
            if (end == text.size()) {
                break;
            }
            continue;
        }
        auto label = first->first;
        if (!label.ends_with(':')) {
            throw ParseError(fmt::format("expected 'index:' but found '{}'", label), lineno, first->second);
        }
        long idx = 0;
        auto [ptr, ec] = std::from_chars(label.data(), label.data() + label.size() - 1, idx);
        if (ec != std::errc() || ptr != label.data() + label.size() - 1) {
            throw ParseError(fmt::format("bad command index '{}'", label), lineno, first->second);
        }
        if (idx != static_cast<long>(cmds.size())) {
            throw ParseError(fmt::format("command index {} out of sequence (expected {})", idx, cmds.size()), lineno, first->second);
        }
        auto optok = tokens.next();
        if (!optok) {
            throw ParseError("missing operator", lineno, line.size() + 1);
        }
        auto op = parse_mnemonic(optok->first);
        if (!op) {
            throw ParseError(fmt::format("unknown operator '{}'", optok->first), lineno, optok->second);
        }
        Command c { *op, -1, -1, -1 };
        switch (arity(*op)) {
        case 0:
            c.payload = static_cast<std::int32_t>(tokens.integer("operand"));
            if (c.op == OperatorKind::load_variable) {
                max_var = std::max(max_var, static_cast<int>(c.payload));
            }
            break;
        case 1:
            c.lhs = static_cast<std::int32_t>(tokens.integer("argument"));
            break;
        default:
            c.lhs = static_cast<std::int32_t>(tokens.integer("argument"));
            c.rhs = static_cast<std::int32_t>(tokens.integer("argument"));
            break;
        }
        if (auto extra = tokens.next()) {
            throw ParseError(fmt::format("unexpected token '{}'", extra->first), lineno, extra->second);
        }
        cmds.push_back(c);
        if (end == text.size()) {
            break;
        }
    }
    if (cmds.empty()) {
        throw ParseError("no commands", lineno == 0 ? 1 : lineno, 1);
    }
    if (dimension < 0) {
        dimension = std::max(1, max_var + 1);
    }
    try {
        return ExpressionGraph(std::move(cmds), dimension);
    } catch (const std::invalid_argument& e) {
        throw ParseError(e.what(), lineno, 1);
    }
}

// ---------------------------------------------------------------------------
// infix

std::string format_number(double v)
{
    std::array<char, 64> buf {};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    std::string s(buf.data(), ptr);
    if (s.find_first_of(".eEn") == std::string::npos) {
        s += ".0";
    }
    return s;
}

namespace {

int precedence(OperatorKind op)
{
    switch (op) {
    case OperatorKind::add:
    case OperatorKind::sub:
        return 1;
    case OperatorKind::mul:
    case OperatorKind::div:
        return 2;
    default:
        return 3;
    }
}

char symbol(OperatorKind op)
{
    switch (op) {
    case OperatorKind::add:
        return '+';
    case OperatorKind::sub:
        return '-';
    case OperatorKind::mul:
        return '*';
    default:
        return '/';
    }
}

std::string render_node(const ExpressionGraph& g, std::size_t i, std::span<const double> coeffs)
{
    const auto& c = g[i];
    switch (c.op) {
    case OperatorKind::load_variable:
        return fmt::format("x{}", c.payload);
    case OperatorKind::load_constant:
        if (!coeffs.empty()) {
            const double v = coeffs[static_cast<std::size_t>(c.payload)];
            return v < 0 || std::signbit(v) ? "(" + format_number(v) + ")" : format_number(v);
        }
        return fmt::format("c{}", c.payload);
    case OperatorKind::sin:
        return "sin(" + render_node(g, static_cast<std::size_t>(c.lhs), coeffs) + ")";
    case OperatorKind::cos:
        return "cos(" + render_node(g, static_cast<std::size_t>(c.lhs), coeffs) + ")";
    case OperatorKind::pow:
        return "pow(" + render_node(g, static_cast<std::size_t>(c.lhs), coeffs) + ", "
            + render_node(g, static_cast<std::size_t>(c.rhs), coeffs) + ")";
    default:
        break;
    }
    const int p = precedence(c.op);
    const auto& l = g[static_cast<std::size_t>(c.lhs)];
    const auto& r = g[static_cast<std::size_t>(c.rhs)];
    auto lhs = render_node(g, static_cast<std::size_t>(c.lhs), coeffs);
    auto rhs = render_node(g, static_cast<std::size_t>(c.rhs), coeffs);
    // left-associative: the left operand needs parentheses only at lower
    // precedence, the right operand also at equal precedence
    if (precedence(l.op) < p) {
        lhs = "(" + lhs + ")";
    }
    if (precedence(r.op) <= p) {
        rhs = "(" + rhs + ")";
    }
    return fmt::format("{}{}{}", lhs, symbol(c.op), rhs);
}

class InfixParser {
public:
    InfixParser(std::string_view text, int dimension) : text_(text), dimension_(dimension) { }

    ParsedModel run()
    {
        const int out = expression();
        skip_space();
        if (pos_ != text_.size()) {
            fail("unexpected trailing input");
        }
        // named slots first (cK keeps K), literals after
        int max_named = -1;
        for (auto& [k, idx] : named_) {
            max_named = std::max(max_named, k);
        }
        // slots that are never mentioned become dead constants at the front
        std::vector<Command> prefix;
        for (int k = 0; k <= max_named; ++k) {
            if (!named_.contains(k)) {
                prefix.push_back(Command::constant(k));
            }
        }
        std::vector<double> coeffs(static_cast<std::size_t>(max_named + 1), std::nan(""));
        for (auto& [cmd, value] : literals_) {
            cmds_[static_cast<std::size_t>(cmd)].payload = static_cast<std::int32_t>(coeffs.size());
            coeffs.push_back(value);
        }
        cmds_.resize(static_cast<std::size_t>(out) + 1);
        if (!prefix.empty()) {
            const auto shift = static_cast<std::int32_t>(prefix.size());
            for (auto c : cmds_) {
                if (!is_leaf(c.op)) {
                    c.lhs += shift;
                    c.rhs += c.rhs >= 0 ? shift : 0;
                }
                prefix.push_back(c);
            }
            cmds_ = std::move(prefix);
        }
        ExpressionGraph g(std::move(cmds_), dimension_);
        return { std::move(g), std::move(coeffs) };
    }

private:
    [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, 1, pos_ + 1); }

    void skip_space()
    {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
            ++pos_;
        }
    }

    bool accept(char ch)
    {
        skip_space();
        if (pos_ < text_.size() && text_[pos_] == ch) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char ch)
    {
        if (!accept(ch)) {
            fail(fmt::format("expected '{}'", ch));
        }
    }

    int push(Command c)
    {
        cmds_.push_back(c);
        return static_cast<int>(cmds_.size()) - 1;
    }

    int literal(double v)
    {
        const int idx = push(Command::constant(-1));
        literals_.emplace_back(idx, v);
        return idx;
    }

    int expression()
    {
        int lhs = term();
        for (;;) {
            if (accept('+')) {
                lhs = push(Command::binary(OperatorKind::add, lhs, term()));
            } else if (accept('-')) {
                lhs = push(Command::binary(OperatorKind::sub, lhs, term()));
            } else {
                return lhs;
            }
        }
    }

    int term()
    {
        int lhs = factor();
        for (;;) {
            if (accept('*')) {
                lhs = push(Command::binary(OperatorKind::mul, lhs, factor()));
            } else if (accept('/')) {
                lhs = push(Command::binary(OperatorKind::div, lhs, factor()));
            } else {
                return lhs;
            }
        }
    }

    std::optional<double> number()
    {
        skip_space();
        const char* first = text_.data() + pos_;
        const char* last = text_.data() + text_.size();
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(first, last, v);
        if (ec != std::errc() || ptr == first) {
            return std::nullopt;
        }
        pos_ += static_cast<std::size_t>(ptr - first);
        return v;
    }

    int index_suffix()
    {
        const char* first = text_.data() + pos_;
        int k = 0;
        auto [ptr, ec] = std::from_chars(first, text_.data() + text_.size(), k);
        if (ec != std::errc() || ptr == first) {
            fail("expected an index");
        }
        pos_ += static_cast<std::size_t>(ptr - first);
        return k;
    }

    int factor()
    {
        skip_space();
        if (pos_ >= text_.size()) {
            fail("unexpected end of input");
        }
        const char ch = text_[pos_];
        if (ch == '(') {
            ++pos_;
            const int inner = expression();
            expect(')');
            return inner;
        }
        if (ch == '-') {
            ++pos_;
            if (auto v = number()) {
                return literal(-*v);
            }
            const int minus_one = literal(-1.0);
            return push(Command::binary(OperatorKind::mul, minus_one, factor()));
        }
        if (std::isdigit(static_cast<unsigned char>(ch)) || ch == '.') {
            auto v = number();
            if (!v) {
                fail("malformed number");
            }
            return literal(*v);
        }
        for (auto [name, op] : { std::pair { "sin", OperatorKind::sin }, std::pair { "cos", OperatorKind::cos },
                 std::pair { "pow", OperatorKind::pow } }) {
            const std::string_view n(name);
            if (text_.substr(pos_).starts_with(n)) {
                pos_ += n.size();
                expect('(');
                const int a = expression();
                if (op == OperatorKind::pow) {
                    expect(',');
                    const int b = expression();
                    expect(')');
                    return push(Command::binary(op, a, b));
                }
                expect(')');
                return push(Command::unary(op, a));
            }
        }
        if (ch == 'x') {
            ++pos_;
            const int k = index_suffix();
            if (k < 0 || k >= dimension_) {
                fail(fmt::format("variable x{} out of range", k));
            }
            return push(Command::variable(k));
        }
        if (ch == 'c') {
            ++pos_;
            const int k = index_suffix();
            if (auto it = named_.find(k); it != named_.end()) {
                return it->second;
            }
            const int idx = push(Command::constant(k));
            named_.emplace(k, idx);
            return idx;
        }
        fail(fmt::format("unexpected character '{}'", ch));
    }

    std::string_view text_;
    int dimension_;
    std::size_t pos_ { 0 };
    std::vector<Command> cmds_;
    std::map<int, int> named_;
    std::vector<std::pair<int, double>> literals_;
};

} // namespace

std::string render_infix(const ExpressionGraph& g, std::span<const double> coeffs)
{
    if (!coeffs.empty() && coeffs.size() != g.slot_count()) {
        throw std::invalid_argument(
            fmt::format("render_infix: {} coefficients supplied for {} slots", coeffs.size(), g.slot_count()));
    }
    return render_node(g, g.output(), coeffs);
}

ParsedModel parse_infix(std::string_view text, int dimension)
{
    return InfixParser(text, dimension).run();
}

} // namespace prgp
