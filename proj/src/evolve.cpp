#include "prgp/evolve.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "prgp/evalad.hpp"
#include "prgp/fitness.hpp"
#include "prgp/simplify.hpp"

namespace prgp {

namespace {

constexpr std::uint64_t kIslandStream = 0xC0DE;
constexpr double kMissingPenalty = 1e100;
constexpr std::size_t kMaxVerifications = 16;
constexpr int kGrowDepth = 2;
constexpr double kReuseBranch = 0.1;
// share of mutations forced to grow, on top of the uniform draw
constexpr double kGrowBias = 0.3;
constexpr int kMutationAttempts = 8;

Command random_terminal(int dimension, int slot, Rng& rng)
{
    const auto pick = uniform_index(rng, static_cast<std::size_t>(dimension) + 1);
    if (pick == static_cast<std::size_t>(dimension)) {
        return Command::constant(slot);
    }
    return Command::variable(static_cast<int>(pick));
}

template <typename Pred>
std::optional<std::size_t> pick_index(const std::vector<Command>& cmds, const std::vector<bool>& live, Pred pred, Rng& rng)
{
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < cmds.size(); ++i) {
        if (live[i] && pred(i, cmds[i])) {
            idx.push_back(i);
        }
    }
    if (idx.empty()) {
        return std::nullopt;
    }
    return idx[uniform_index(rng, idx.size())];
}

// Numbers constant slots in stack order and builds the graph.
ExpressionGraph assemble(std::vector<Command> cmds, int dimension)
{
    int next = 0;
    for (auto& c : cmds) {
        if (c.op == OperatorKind::load_constant) {
            c.payload = next++;
        }
    }
    return ExpressionGraph(std::move(cmds), dimension);
}

// Copies fitness and coefficients from `parent` when the reachable parts of
// the two graphs coincide.
bool inherit(Individual& child, const Individual& parent)
{
    if (!parent.evaluated) {
        return false;
    }
    const auto pc = prune(child.graph);
    const auto pp = prune(parent.graph);
    if (!(pc.graph == pp.graph)) {
        return false;
    }
    child.coeffs.assign(child.graph.slot_count(), 0.0);
    for (std::size_t s = 0; s < pc.slot_origin.size(); ++s) {
        child.coeffs[pc.slot_origin[s]] = parent.coeffs[pp.slot_origin[s]];
    }
    child.fitness = parent.fitness;
    child.phenotype = parent.phenotype;
    child.evaluated = true;
    return true;
}

// Ordering used everywhere a "best" is needed: fitness, then position.
bool better(const Individual& a, const Individual& b) { return a.fitness < b.fitness; }

std::string hex(double v) { return fmt::format("{:a}", v); }

double parse_double(const std::string& token)
{
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0') {
        throw std::runtime_error("checkpoint: bad number '" + token + "'");
    }
    return v;
}

} // namespace

std::string to_string(StopReason r)
{
    switch (r) {
    case StopReason::success: return "success";
    case StopReason::numeric_only: return "numeric_only";
    case StopReason::max_generations: return "max_generations";
    }
    return {};
}

void EvolutionConfig::validate(const Problem& problem) const
{
    const auto fail = [](const std::string& what) { throw ConfigError(what); };
    if (islands < 1) {
        fail("islands must be at least 1");
    }
    if (population < 2 * islands) {
        fail("population must hold at least two individuals per island");
    }
    if (population % islands != 0) {
        fail("population must divide evenly among islands");
    }
    if (!(crossover_rate >= 0.0 && crossover_rate <= 1.0) || !(mutation_rate >= 0.0 && mutation_rate <= 1.0)) {
        fail("crossover and mutation rates must lie in [0, 1]");
    }
    if (stack_size < 0 || (stack_size == 0 && problem.max_complexity < 1)) {
        fail("stack size must be positive");
    }
    if (migration_interval < 1 || migration_count < 0 || migration_count > population_per_island()) {
        fail("invalid migration schedule");
    }
    if (max_generations < 0) {
        fail("max_generations must be non-negative");
    }
    if (workers < 1) {
        fail("workers must be at least 1");
    }
    if (problem.palette.size() == 0) {
        fail("operator palette is empty");
    }
    if (!(threshold >= 0.0)) {
        fail("threshold must be non-negative");
    }
    if (opt.restarts < 1 || opt.max_iterations < 1 || !(opt.init_low <= opt.init_high)) {
        fail("invalid optimizer settings");
    }
}

std::pair<ExpressionGraph, ExpressionGraph> crossover_segment(
    const ExpressionGraph& a, const ExpressionGraph& b, std::size_t begin, std::size_t end)
{
    if (begin > end || end > a.size() || end > b.size() || a.dimension() != b.dimension()) {
        throw std::invalid_argument("crossover_segment: invalid segment");
    }
    std::vector<Command> ca(a.commands().begin(), a.commands().end());
    std::vector<Command> cb(b.commands().begin(), b.commands().end());
    for (std::size_t i = begin; i < end; ++i) {
        std::swap(ca[i], cb[i]);
    }
    return { assemble(std::move(ca), a.dimension()), assemble(std::move(cb), a.dimension()) };
}

std::pair<ExpressionGraph, ExpressionGraph> crossover(const ExpressionGraph& a, const ExpressionGraph& b, Rng& rng)
{
    const std::size_t n = std::min(a.size(), b.size());
    // single cut point; the tail after it is exchanged
    const std::size_t cut = n <= 1 ? 0 : 1 + uniform_index(rng, n - 1);
    if (a.size() == b.size()) {
        return crossover_segment(a, b, cut, n);
    }
    // unequal lengths: exchange an interior segment of the common prefix
    const std::size_t end = cut + uniform_index(rng, n - cut + 1);
    return crossover_segment(a, b, cut, end);
}

// Wraps a random reachable command c into op(c, new branch). Reachable
// commands move behind the dead ones, and the tail of the dead block makes
// room for the new commands.
ExpressionGraph grow_node(const ExpressionGraph& g, const OperatorPalette& palette, Rng& rng)
{
    const auto live = g.reachable();
    const int d = g.dimension();
    std::vector<Command> dead;
    std::vector<Command> body;
    std::vector<int> where(g.size(), -1);
    for (std::size_t i = 0; i < g.size(); ++i) {
        Command c = g[i];
        const int n = arity(c.op);
        if (live[i]) {
            if (n >= 1) {
                c.lhs = where[static_cast<std::size_t>(c.lhs)];
            }
            if (n == 2) {
                c.rhs = where[static_cast<std::size_t>(c.rhs)];
            }
            where[i] = static_cast<int>(body.size());
            body.push_back(c);
            continue;
        }
        // dead code that read reachable commands is replaced by a leaf
        const bool reads_live = (n >= 1 && live[static_cast<std::size_t>(c.lhs)]) || (n == 2 && live[static_cast<std::size_t>(c.rhs)]);
        if (reads_live || (n >= 1 && dead.empty())) {
            c = Command::variable(0);
        } else {
            if (n >= 1) {
                c.lhs = where[static_cast<std::size_t>(c.lhs)];
            }
            if (n == 2) {
                c.rhs = where[static_cast<std::size_t>(c.rhs)];
            }
        }
        where[i] = static_cast<int>(dead.size());
        dead.push_back(c);
    }

    const int target = static_cast<int>(uniform_index(rng, body.size()));
    std::vector<Command> added;
    const auto push = [&](Command c) {
        added.push_back(c);
        return target + static_cast<int>(added.size());
    };
    const auto ops = palette.operators();
    const auto subtree = [&](auto&& self, int depth) -> int {
        if (depth == 0 || uniform01(rng) < 0.5) {
            return push(random_terminal(d, 0, rng));
        }
        const auto op = ops[uniform_index(rng, ops.size())];
        const int x = self(self, depth - 1);
        if (arity(op) == 1) {
            return push(Command::unary(op, x));
        }
        const int y = self(self, depth - 1);
        return push(Command::binary(op, x, y));
    };
    const auto op = ops[uniform_index(rng, ops.size())];
    if (arity(op) == 1) {
        push(Command::unary(op, target));
    } else {
        // reusing an earlier command, including the target itself, allows op(t, t)
        const int branch = uniform01(rng) < kReuseBranch ? static_cast<int>(uniform_index(rng, static_cast<std::size_t>(target) + 1))
                                                        : subtree(subtree, kGrowDepth);
        push(uniform01(rng) < 0.5 ? Command::binary(op, target, branch) : Command::binary(op, branch, target));
    }
    const auto k = static_cast<int>(added.size());
    if (static_cast<std::size_t>(k) > dead.size()) {
        return g;
    }
    dead.resize(dead.size() - static_cast<std::size_t>(k));

    // consumers of the target now read the wrapper
    const auto shift = [&](int r) { return r >= target ? r + k : r; };
    std::vector<Command> out = dead;
    const auto offset = static_cast<int>(dead.size());
    const auto emit = [&](Command c, bool moved) {
        const int n = arity(c.op);
        if (n >= 1) {
            c.lhs = (moved ? shift(c.lhs) : c.lhs) + offset;
        }
        if (n == 2) {
            c.rhs = (moved ? shift(c.rhs) : c.rhs) + offset;
        }
        out.push_back(c);
    };
    for (int i = 0; i <= target; ++i) {
        emit(body[static_cast<std::size_t>(i)], false);
    }
    for (const auto& c : added) {
        emit(c, false);
    }
    for (std::size_t i = static_cast<std::size_t>(target) + 1; i < body.size(); ++i) {
        emit(body[i], true);
    }
    return assemble(std::move(out), d);
}

ExpressionGraph mutate(const ExpressionGraph& g, const OperatorPalette& palette, MutationKind kind, Rng& rng)
{
    std::vector<Command> cmds(g.commands().begin(), g.commands().end());
    const auto live = g.reachable();
    const int d = g.dimension();
    const int fresh_slot = static_cast<int>(g.slot_count());
    const auto is_op = [](std::size_t, const Command& c) { return !is_leaf(c.op); };

    switch (kind) {
    case MutationKind::swap_operator: {
        const auto i = pick_index(cmds, live, [](std::size_t, const Command&) { return true; }, rng);
        auto& c = cmds[*i];
        if (is_leaf(c.op)) {
            // another terminal: a different variable or the variable/constant flip
            std::vector<Command> options;
            for (int k = 0; k < d; ++k) {
                if (!(c.op == OperatorKind::load_variable && c.payload == k)) {
                    options.push_back(Command::variable(k));
                }
            }
            if (c.op != OperatorKind::load_constant) {
                options.push_back(Command::constant(fresh_slot));
            }
            if (options.empty()) {
                return g;
            }
            c = options[uniform_index(rng, options.size())];
        } else {
            auto same = palette.with_arity(arity(c.op));
            std::erase(same, c.op);
            if (same.empty()) {
                return g;
            }
            c.op = same[uniform_index(rng, same.size())];
        }
        break;
    }
    case MutationKind::rewire: {
        const auto i = pick_index(cmds, live, [](std::size_t k, const Command& c) { return k > 1 && !is_leaf(c.op); }, rng);
        if (!i) {
            return g;
        }
        auto& c = cmds[*i];
        int& arg = (arity(c.op) == 2 && uniform01(rng) < 0.5) ? c.rhs : c.lhs;
        const int old = arg;
        while (arg == old) {
            arg = static_cast<int>(uniform_index(rng, *i));
        }
        break;
    }
    case MutationKind::grow:
        return grow_node(g, palette, rng);
    case MutationKind::prune: {
        const auto i = pick_index(cmds, live, is_op, rng);
        if (!i) {
            return g;
        }
        // collapse to one of the subtree's own leaves
        std::vector<bool> below(cmds.size(), false);
        below[*i] = true;
        std::vector<std::size_t> leaves;
        for (std::size_t j = *i + 1; j-- > 0;) {
            if (!below[j]) {
                continue;
            }
            const auto& c = cmds[j];
            if (is_leaf(c.op)) {
                leaves.push_back(j);
                continue;
            }
            below[static_cast<std::size_t>(c.lhs)] = true;
            if (arity(c.op) == 2) {
                below[static_cast<std::size_t>(c.rhs)] = true;
            }
        }
        Command leaf = cmds[leaves[uniform_index(rng, leaves.size())]];
        if (leaf.op == OperatorKind::load_constant) {
            leaf.payload = fresh_slot;
        }
        cmds[*i] = leaf;
        break;
    }
    }
    return assemble(std::move(cmds), d);
}

ExpressionGraph mutate(const ExpressionGraph& g, const OperatorPalette& palette, Rng& rng)
{
    // redraw when the expression itself did not change
    const auto before = prune(g).graph;
    ExpressionGraph out = g;
    for (int attempt = 0; attempt < kMutationAttempts; ++attempt) {
        auto kind = static_cast<MutationKind>(uniform_index(rng, kMutationKinds));
        if (uniform01(rng) < kGrowBias) {
            kind = MutationKind::grow;
        }
        out = mutate(g, palette, kind, rng);
        if (!(prune(out).graph == before)) {
            break;
        }
    }
    return out;
}

double phenotype_distance(std::span<const double> a, std::span<const double> b)
{
    double sum = 0.0;
    for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
        const bool na = std::isnan(a[i]);
        const bool nb = std::isnan(b[i]);
        if (na || nb) {
            sum += na == nb ? 0.0 : kMissingPenalty;
            continue;
        }
        const double diff = a[i] - b[i];
        sum += std::min(diff * diff, kMissingPenalty);
    }
    return sum;
}

void crowding_generation(Island& island, const Problem& problem, const EvolutionConfig& cfg, Rng& rng)
{
    auto& pop = island.population;
    std::vector<std::size_t> order(pop.size());
    std::iota(order.begin(), order.end(), std::size_t { 0 });
    std::shuffle(order.begin(), order.end(), rng);

    for (std::size_t k = 0; k + 1 < order.size(); k += 2) {
        const std::size_t ia = order[k];
        const std::size_t ib = order[k + 1];
        const Individual& pa = pop[ia];
        const Individual& pb = pop[ib];

        ExpressionGraph ga = pa.graph;
        ExpressionGraph gb = pb.graph;
        if (uniform01(rng) < cfg.crossover_rate) {
            std::tie(ga, gb) = crossover(ga, gb, rng);
        }
        if (uniform01(rng) < cfg.mutation_rate) {
            ga = mutate(ga, problem.palette, rng);
        }
        if (uniform01(rng) < cfg.mutation_rate) {
            gb = mutate(gb, problem.palette, rng);
        }

        const auto offspring = [&](ExpressionGraph g, const Individual& own, const Individual& other) {
            Individual child(std::move(g));
            if (!inherit(child, own) && !inherit(child, other)) {
                child = calibrate(std::move(child), problem, cfg.opt, rng);
            }
            return child;
        };
        Individual ca = offspring(std::move(ga), pa, pb);
        Individual cb = offspring(std::move(gb), pb, pa);

        const double straight = phenotype_distance(pa.phenotype, ca.phenotype) + phenotype_distance(pb.phenotype, cb.phenotype);
        const double crossed = phenotype_distance(pa.phenotype, cb.phenotype) + phenotype_distance(pb.phenotype, ca.phenotype);
        if (crossed < straight) {
            std::swap(ca, cb);
        }
        if (ca.fitness <= pop[ia].fitness || std::isnan(pop[ia].fitness)) {
            pop[ia] = std::move(ca);
        }
        if (cb.fitness <= pop[ib].fitness || std::isnan(pop[ib].fitness)) {
            pop[ib] = std::move(cb);
        }
    }
}

void migrate(std::vector<Island>& islands, int count)
{
    const std::size_t n = islands.size();
    if (n < 2 || count <= 0) {
        return;
    }
    const auto ranked = [](const std::vector<Individual>& pop) {
        std::vector<std::size_t> idx(pop.size());
        std::iota(idx.begin(), idx.end(), std::size_t { 0 });
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return better(pop[a], pop[b]); });
        return idx;
    };
    std::vector<std::vector<Individual>> outgoing(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto idx = ranked(islands[i].population);
        const auto c = std::min<std::size_t>(static_cast<std::size_t>(count), idx.size());
        for (std::size_t k = 0; k < c; ++k) {
            outgoing[i].push_back(islands[i].population[idx[k]]);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        auto& dest = islands[(i + 1) % n].population;
        const auto idx = ranked(dest);
        for (std::size_t k = 0; k < outgoing[i].size(); ++k) {
            dest[idx[idx.size() - 1 - k]] = outgoing[i][k];
        }
    }
}

Archipelago::Archipelago(const Problem& problem, EvolutionConfig cfg)
    : Archipelago(problem, std::move(cfg), true)
{
}

Archipelago::Archipelago(const Problem& problem, EvolutionConfig cfg, bool populate)
    : problem_(&problem)
    , cfg_(std::move(cfg))
{
    cfg_.validate(problem);
    if (cfg_.stack_size == 0) {
        cfg_.stack_size = problem.max_complexity;
    }
    islands_.resize(static_cast<std::size_t>(cfg_.islands));
    for (int i = 0; i < cfg_.islands; ++i) {
        islands_[static_cast<std::size_t>(i)].id = i;
    }
    if (!populate) {
        return;
    }
    const auto per = static_cast<std::size_t>(cfg_.population_per_island());
    for (auto& island : islands_) {
        auto rng = make_rng({ cfg_.seed, kIslandStream, static_cast<std::uint64_t>(island.id), 0 });
        island.population.reserve(per);
        for (std::size_t k = 0; k < per; ++k) {
            Individual ind(random_graph(problem.palette, problem.dimension, static_cast<std::size_t>(cfg_.stack_size), rng, cfg_.generation));
            island.population.push_back(calibrate(std::move(ind), problem, cfg_.opt, rng));
        }
    }
    history_.push_back(stats());
}

Individual Archipelago::evaluate(Individual ind) const
{
    const Program program(ind.graph);
    ind.coeffs.resize(ind.graph.slot_count(), 0.0);
    ind.fitness = FitnessEvaluator(ind.graph, *problem_).scalar(ind.coeffs);
    ind.phenotype = phenotype(program, ind.coeffs, *problem_);
    ind.evaluated = true;
    return ind;
}

void Archipelago::plant(const Individual& ind, int island, std::size_t slot)
{
    std::vector<double> coeffs;
    const auto pruned = prune(ind.graph, ind.coeffs, coeffs);
    const auto stack = static_cast<std::size_t>(cfg_.stack_size);
    if (pruned.size() > stack) {
        throw std::invalid_argument("planted graph exceeds the stack size");
    }
    const auto pad = static_cast<int>(stack - pruned.size());
    std::vector<Command> cmds(static_cast<std::size_t>(pad), Command::variable(0));
    for (auto c : pruned.commands()) {
        if (arity(c.op) >= 1) {
            c.lhs += pad;
        }
        if (arity(c.op) == 2) {
            c.rhs += pad;
        }
        cmds.push_back(c);
    }
    Individual planted(ExpressionGraph(std::move(cmds), pruned.dimension()));
    planted.coeffs = coeffs;
    islands_.at(static_cast<std::size_t>(island)).population.at(slot) = evaluate(std::move(planted));
    if (!history_.empty()) {
        history_.back() = stats();
    }
}

void Archipelago::step()
{
    const int next = generation_ + 1;
    const auto run_island = [&](std::size_t i) {
        auto rng = make_rng({ cfg_.seed, kIslandStream, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(next) });
        crowding_generation(islands_[i], *problem_, cfg_, rng);
    };
    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(cfg_.workers), islands_.size());
    if (workers <= 1) {
        for (std::size_t i = 0; i < islands_.size(); ++i) {
            run_island(i);
        }
    } else {
        std::atomic<std::size_t> cursor { 0 };
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = cursor++; i < islands_.size(); i = cursor++) {
                    run_island(i);
                }
            });
        }
    }
    generation_ = next;
    if (generation_ % cfg_.migration_interval == 0) {
        migrate(islands_, cfg_.migration_count);
    }
    history_.push_back(stats());
}

const Individual& Archipelago::best() const
{
    const Individual* b = nullptr;
    for (const auto& island : islands_) {
        for (const auto& ind : island.population) {
            if (b == nullptr || better(ind, *b)) {
                b = &ind;
            }
        }
    }
    return *b;
}

GenerationStats Archipelago::stats() const
{
    GenerationStats s;
    s.generation = generation_;
    s.best = std::numeric_limits<double>::infinity();
    for (const auto& island : islands_) {
        double b = std::numeric_limits<double>::infinity();
        for (const auto& ind : island.population) {
            b = std::min(b, ind.fitness);
        }
        s.island_best.push_back(b);
        s.best = std::min(s.best, b);
    }
    return s;
}

std::vector<const Individual*> Archipelago::candidates() const
{
    std::vector<const Individual*> out;
    for (const auto& island : islands_) {
        for (const auto& ind : island.population) {
            if (ind.fitness <= cfg_.threshold) {
                out.push_back(&ind);
            }
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const Individual* a, const Individual* b) { return better(*a, *b); });
    return out;
}

std::string Archipelago::checkpoint() const
{
    std::string out = "prgp-checkpoint 1\n";
    out += fmt::format("seed {}\ngeneration {}\nhistory {}\n", cfg_.seed, generation_, history_.size());
    for (const auto& s : history_) {
        out += fmt::format("{} {}", s.generation, hex(s.best));
        for (double b : s.island_best) {
            out += " " + hex(b);
        }
        out += "\n";
    }
    out += fmt::format("islands {}\n", islands_.size());
    for (const auto& island : islands_) {
        out += fmt::format("island {} {}\n", island.id, island.population.size());
        for (const auto& ind : island.population) {
            out += fmt::format("individual {} {}", hex(ind.fitness), ind.coeffs.size());
            for (double c : ind.coeffs) {
                out += " " + hex(c);
            }
            const auto text = serialize(ind.graph);
            out += fmt::format("\ngraph {}\n", std::count(text.begin(), text.end(), '\n'));
            out += text;
        }
    }
    out += "end\n";
    return out;
}

Archipelago Archipelago::restore(std::string_view text, const Problem& problem, EvolutionConfig cfg)
{
    Archipelago a(problem, std::move(cfg), false);
    std::istringstream in { std::string(text) };
    std::string word;
    const auto expect = [&](const std::string& key) {
        if (!(in >> word) || word != key) {
            throw std::runtime_error("checkpoint: expected '" + key + "'");
        }
    };
    const auto number = [&] {
        std::string tok;
        if (!(in >> tok)) {
            throw std::runtime_error("checkpoint: truncated");
        }
        return parse_double(tok);
    };
    const auto count = [&] {
        long long v = 0;
        if (!(in >> v) || v < 0) {
            throw std::runtime_error("checkpoint: bad count");
        }
        return static_cast<std::size_t>(v);
    };
    expect("prgp-checkpoint");
    if (count() != 1) {
        throw std::runtime_error("checkpoint: unsupported version");
    }
    expect("seed");
    if (count() != a.cfg_.seed) {
        throw std::runtime_error("checkpoint: seed mismatch");
    }
    expect("generation");
    a.generation_ = static_cast<int>(count());
    expect("history");
    const auto nh = count();
    for (std::size_t h = 0; h < nh; ++h) {
        GenerationStats s;
        s.generation = static_cast<int>(count());
        s.best = number();
        for (std::size_t i = 0; i < a.islands_.size(); ++i) {
            s.island_best.push_back(number());
        }
        a.history_.push_back(std::move(s));
    }
    expect("islands");
    if (count() != a.islands_.size()) {
        throw std::runtime_error("checkpoint: island count mismatch");
    }
    for (auto& island : a.islands_) {
        expect("island");
        island.id = static_cast<int>(count());
        const auto size = count();
        for (std::size_t k = 0; k < size; ++k) {
            expect("individual");
            const double fitness = number();
            std::vector<double> coeffs(count());
            for (auto& c : coeffs) {
                c = number();
            }
            expect("graph");
            const auto lines = count();
            std::string line;
            std::getline(in, line);
            std::string body;
            for (std::size_t l = 0; l < lines && std::getline(in, line); ++l) {
                body += line + "\n";
            }
            Individual ind(deserialize(body));
            ind.coeffs = std::move(coeffs);
            ind.fitness = fitness;
            ind.phenotype = phenotype(Program(ind.graph), ind.coeffs, problem);
            ind.evaluated = true;
            island.population.push_back(std::move(ind));
        }
    }
    expect("end");
    return a;
}

RunRecord evolve_until(const Problem& problem, const EvolutionConfig& cfg, const EvolveOptions& options)
{
    namespace fs = std::filesystem;
    std::optional<Archipelago> arch;
    if (options.resume && !cfg.checkpoint_path.empty() && fs::exists(cfg.checkpoint_path)) {
        std::ifstream in(cfg.checkpoint_path);
        std::stringstream buf;
        buf << in.rdbuf();
        arch.emplace(Archipelago::restore(buf.str(), problem, cfg));
    } else {
        arch.emplace(problem, cfg);
        for (std::size_t k = 0; k < options.planted.size(); ++k) {
            const auto per = static_cast<std::size_t>(cfg.population_per_island());
            arch->plant(options.planted[k], static_cast<int>(k / per % static_cast<std::size_t>(cfg.islands)), k % per);
        }
    }

    const auto save = [&] {
        const fs::path path(cfg.checkpoint_path);
        const fs::path tmp = path.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::trunc);
            out << arch->checkpoint();
            if (!out) {
                throw std::runtime_error("cannot write checkpoint " + tmp.string());
            }
        }
        fs::rename(tmp, path);
    };

    RunRecord rec;
    rec.seed = cfg.seed;
    while (true) {
        const auto cands = arch->candidates();
        if (!cands.empty()) {
            rec.stop = StopReason::numeric_only;
            rec.best = *cands.front();
            for (std::size_t k = 0; k < std::min(cands.size(), kMaxVerifications); ++k) {
                if (is_known_solution(*cands[k], problem)) {
                    rec.stop = StopReason::success;
                    rec.success_generation = arch->generation();
                    rec.best = *cands[k];
                    break;
                }
            }
            break;
        }
        if (arch->generation() >= cfg.max_generations) {
            rec.stop = StopReason::max_generations;
            rec.best = arch->best();
            break;
        }
        arch->step();
        if (!cfg.checkpoint_path.empty() && cfg.checkpoint_interval > 0
            && arch->generation() % cfg.checkpoint_interval == 0) {
            save();
        }
    }
    rec.history = arch->history();
    rec.history.back().success = rec.stop == StopReason::success;
    return rec;
}

} // namespace prgp
