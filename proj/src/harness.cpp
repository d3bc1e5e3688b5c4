#include "prgp/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "prgp/problems.hpp"
#include "prgp/simplify.hpp"

namespace prgp {

namespace {

constexpr std::string_view kRecordMagic = "prgp-record 1";

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> lines_of(std::string_view text)
{
    std::vector<std::string> out;
    std::string line;
    std::istringstream in { std::string(text) };
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        out.push_back(line);
    }
    return out;
}

std::optional<double> to_double(const std::string& s)
{
    if (s.empty()) {
        return std::nullopt;
    }
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) {
        return std::nullopt;
    }
    return v;
}

template <typename T>
std::optional<T> to_integer(const std::string& s)
{
    T v {};
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc {} || p != s.data() + s.size()) {
        return std::nullopt;
    }
    return v;
}

std::string hex(double v) { return fmt::format("{:a}", v); }

std::string format_bool(bool b) { return b ? "true" : "false"; }

std::string_view method_name(OptMethod m) { return m == OptMethod::bfgs ? "bfgs" : "lm"; }

} // namespace

// ---------------------------------------------------------------------------
// ExperimentConfig

ExperimentConfig ExperimentConfig::parse(std::string_view text)
{
    ExperimentConfig cfg;
    auto& p = cfg.problem;
    auto& e = cfg.evolution;
    bool m_given = false;
    bool n_given = false;
    std::map<std::string, int> seen;
    int lineno = 0;
    for (const auto& raw : lines_of(text)) {
        ++lineno;
        std::string line = raw.substr(0, raw.find('#'));
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(fmt::format("line {}: expected key = value", lineno));
        }
        const std::string key = trim(std::string_view(line).substr(0, eq));
        const std::string value = trim(std::string_view(line).substr(eq + 1));
        if (seen[key]++ > 0) {
            throw ConfigError(fmt::format("line {}: duplicate key '{}'", lineno, key));
        }
        const auto bad = [&]() -> ConfigError {
            return ConfigError(fmt::format("line {}: invalid value '{}' for '{}'", lineno, value, key));
        };
        const auto num = [&] {
            const auto v = to_double(value);
            if (!v) {
                throw bad();
            }
            return *v;
        };
        const auto integer = [&] {
            const auto v = to_integer<long long>(value);
            if (!v) {
                throw bad();
            }
            return *v;
        };
        const auto i32 = [&] { return static_cast<int>(integer()); };
        const auto u64 = [&] {
            const auto v = to_integer<std::uint64_t>(value);
            if (!v) {
                throw bad();
            }
            return *v;
        };
        const auto boolean = [&] {
            if (value == "true" || value == "1" || value == "on") {
                return true;
            }
            if (value == "false" || value == "0" || value == "off") {
                return false;
            }
            throw bad();
        };

        if (key == "problem") {
            try {
                p.kind = parse_problem_kind(value);
            } catch (const std::invalid_argument&) {
                throw bad();
            }
        } else if (key == "dimension") {
            p.dimension = i32();
        } else if (key == "n") {
            p.n = i32();
            n_given = true;
        } else if (key == "m") {
            p.m = i32();
            m_given = true;
        } else if (key == "test") {
            p.test = i32();
        } else if (key == "physics") {
            p.physics = boolean();
        } else if (key == "islands") {
            e.islands = i32();
        } else if (key == "population") {
            e.population = i32();
        } else if (key == "crossover_rate") {
            e.crossover_rate = num();
        } else if (key == "mutation_rate") {
            e.mutation_rate = num();
        } else if (key == "stack_size") {
            e.stack_size = i32();
        } else if (key == "migration_interval") {
            e.migration_interval = i32();
        } else if (key == "migration_count") {
            e.migration_count = i32();
        } else if (key == "threshold") {
            e.threshold = num();
        } else if (key == "max_generations") {
            e.max_generations = i32();
        } else if (key == "workers") {
            e.workers = i32();
        } else if (key == "terminal_probability") {
            e.generation.terminal_probability = num();
        } else if (key == "checkpoint_interval") {
            e.checkpoint_interval = i32();
        } else if (key == "optimizer") {
            if (value == "lm") {
                e.opt.method = OptMethod::levenberg_marquardt;
            } else if (value == "bfgs") {
                e.opt.method = OptMethod::bfgs;
            } else {
                throw bad();
            }
        } else if (key == "restarts") {
            e.opt.restarts = i32();
        } else if (key == "max_iterations") {
            e.opt.max_iterations = i32();
        } else if (key == "init_low") {
            e.opt.init_low = num();
        } else if (key == "init_high") {
            e.opt.init_high = num();
        } else if (key == "repeats") {
            cfg.repeats = i32();
        } else if (key == "seed_base") {
            cfg.seed_base = u64();
        } else if (key == "trial_workers") {
            cfg.trial_workers = i32();
        } else if (key == "plant_known") {
            cfg.plant_known = boolean();
        } else if (key == "out_dir") {
            cfg.out_dir = value;
        } else {
            throw ConfigError(fmt::format("line {}: unknown key '{}'", lineno, key));
        }
    }
    if (p.kind == ProblemKind::poisson) {
        // standard sample counts for the dimension unless given
        if (!n_given) {
            p.n = -1;
        }
        if (!m_given) {
            p.m = -1;
        }
    } else {
        p.dimension = 1;
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path)
{
    return parse(read_file(path));
}

void ExperimentConfig::validate() const
{
    if (repeats < 1) {
        throw ConfigError("repeats must be at least 1");
    }
    if (trial_workers < 1) {
        throw ConfigError("trial_workers must be at least 1");
    }
    if (problem.test != 1 && problem.test != 2) {
        throw ConfigError("test must be 1 or 2");
    }
    if (problem.kind == ProblemKind::poisson && (problem.dimension < 1 || problem.dimension > 3)) {
        throw ConfigError("Poisson dimension must be 1, 2 or 3");
    }
    if (problem.kind == ProblemKind::poisson && !problem.physics) {
        throw ConfigError("the Poisson problem requires physics");
    }
    if (problem.kind == ProblemKind::euler_bernoulli && problem.n < 2) {
        throw ConfigError("the beam problem needs n >= 2");
    }
    Problem probe;
    try {
        probe = build_problem(problem_for(seed_base));
    } catch (const std::invalid_argument& ex) {
        throw ConfigError(ex.what());
    }
    evolution.validate(probe);
}

std::string ExperimentConfig::to_text() const
{
    const auto& p = problem;
    const auto& e = evolution;
    std::string out;
    const auto kv = [&](std::string_view k, const auto& v) { out += fmt::format("{} = {}\n", k, v); };
    kv("problem", to_string(p.kind));
    kv("dimension", p.dimension);
    kv("n", p.n);
    kv("m", p.m);
    kv("test", p.test);
    kv("physics", format_bool(p.physics));
    kv("islands", e.islands);
    kv("population", e.population);
    kv("crossover_rate", e.crossover_rate);
    kv("mutation_rate", e.mutation_rate);
    kv("stack_size", e.stack_size);
    kv("migration_interval", e.migration_interval);
    kv("migration_count", e.migration_count);
    kv("threshold", e.threshold);
    kv("max_generations", e.max_generations);
    kv("terminal_probability", e.generation.terminal_probability);
    kv("optimizer", method_name(e.opt.method));
    kv("restarts", e.opt.restarts);
    kv("max_iterations", e.opt.max_iterations);
    kv("init_low", e.opt.init_low);
    kv("init_high", e.opt.init_high);
    kv("repeats", repeats);
    kv("seed_base", seed_base);
    kv("plant_known", format_bool(plant_known));
    return out;
}

std::uint64_t ExperimentConfig::hash() const
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char c : to_text()) {
        h = (h ^ c) * 0x100000001b3ULL;
    }
    return h;
}

ProblemParams ExperimentConfig::problem_for(std::uint64_t seed) const
{
    ProblemParams p = problem;
    p.seed = seed;
    return p;
}

// ---------------------------------------------------------------------------
// Records

std::string TrialRecord::to_text() const
{
    std::string out(kRecordMagic);
    out += '\n';
    out += fmt::format("config_hash {:016x}\nseed {}\nstop {}\n", config_hash, seed, prgp::to_string(stop));
    out += success_generation ? fmt::format("success_generation {}\n", *success_generation)
                              : std::string("success_generation none\n");
    out += fmt::format("threshold {}\n", hex(threshold));
    out += fmt::format("generations {}\n", best_fitness.size());
    for (double f : best_fitness) {
        out += hex(f);
        out += '\n';
    }
    out += fmt::format("best_infix {}\nbest_canonical {}\n", best_infix, best_canonical);
    out += "best_coeffs";
    for (double c : best_coeffs) {
        out += ' ';
        out += hex(c);
    }
    out += '\n';
    const auto graph = serialize(best_graph);
    const auto glines = lines_of(graph);
    out += fmt::format("best_graph {}\n{}", glines.size(), graph);
    if (!graph.empty() && graph.back() != '\n') {
        out += '\n';
    }
    const auto mlines = lines_of(manifest);
    out += fmt::format("manifest {}\n", mlines.size());
    for (const auto& l : mlines) {
        out += l;
        out += '\n';
    }
    out += "end\n";
    return out;
}

TrialRecord TrialRecord::parse(std::string_view text)
{
    const auto lines = lines_of(text);
    std::size_t i = 0;
    const auto fail = [&](const std::string& what) -> ParseError { return ParseError(what, i + 1, 1); };
    const auto next = [&]() -> const std::string& {
        if (i >= lines.size()) {
            throw fail("unexpected end of record");
        }
        return lines[i++];
    };
    // "key rest" with the key checked
    const auto field = [&](std::string_view key) {
        const auto& l = next();
        if (l.rfind(key, 0) != 0 || (l.size() > key.size() && l[key.size()] != ' ')) {
            --i;
            throw fail(fmt::format("expected '{}'", key));
        }
        return l.size() > key.size() ? l.substr(key.size() + 1) : std::string {};
    };
    const auto number = [&](const std::string& s) {
        const auto v = to_double(s);
        if (!v) {
            throw fail(fmt::format("bad number '{}'", s));
        }
        return *v;
    };
    const auto count = [&](const std::string& s) {
        const auto v = to_integer<std::size_t>(s);
        if (!v) {
            throw fail(fmt::format("bad count '{}'", s));
        }
        return *v;
    };

    if (next() != kRecordMagic) {
        --i;
        throw fail("not a record");
    }
    TrialRecord r;
    const auto hash = field("config_hash");
    const auto h = std::strtoull(hash.c_str(), nullptr, 16);
    r.config_hash = h;
    r.seed = count(field("seed"));
    const auto stop = field("stop");
    if (stop == "success") {
        r.stop = StopReason::success;
    } else if (stop == "numeric_only") {
        r.stop = StopReason::numeric_only;
    } else if (stop == "max_generations") {
        r.stop = StopReason::max_generations;
    } else {
        throw fail("bad stop reason");
    }
    const auto sg = field("success_generation");
    if (sg != "none") {
        r.success_generation = static_cast<int>(count(sg));
    }
    r.threshold = number(field("threshold"));
    const auto gens = count(field("generations"));
    for (std::size_t g = 0; g < gens; ++g) {
        r.best_fitness.push_back(number(next()));
    }
    r.best_infix = field("best_infix");
    r.best_canonical = field("best_canonical");
    std::istringstream cs(field("best_coeffs"));
    std::string tok;
    while (cs >> tok) {
        r.best_coeffs.push_back(number(tok));
    }
    const auto glines = count(field("best_graph"));
    std::string graph;
    for (std::size_t k = 0; k < glines; ++k) {
        graph += next();
        graph += '\n';
    }
    r.best_graph = deserialize(graph);
    if (r.best_graph.slot_count() != r.best_coeffs.size()) {
        throw fail("coefficient count does not match the graph");
    }
    const auto mlines = count(field("manifest"));
    for (std::size_t k = 0; k < mlines; ++k) {
        r.manifest += next();
        r.manifest += '\n';
    }
    if (next() != "end") {
        --i;
        throw fail("expected 'end'");
    }
    return r;
}

TrialRecord run_trial(const ExperimentConfig& cfg, std::uint64_t seed)
{
    const auto t0 = std::chrono::steady_clock::now();
    const Problem problem = build_problem(cfg.problem_for(seed));
    EvolutionConfig ecfg = cfg.evolution;
    ecfg.seed = seed;
    EvolveOptions options;
    if (cfg.plant_known) {
        Individual known(problem.known);
        known.coeffs = problem.known_coeffs;
        options.planted.push_back(std::move(known));
    }
    const auto run = evolve_until(problem, ecfg, options);

    TrialRecord r;
    r.config_hash = cfg.hash();
    r.seed = seed;
    for (const auto& s : run.history) {
        r.best_fitness.push_back(s.best);
    }
    r.success_generation = run.success_generation;
    r.stop = run.stop;
    r.threshold = ecfg.threshold;
    r.best_coeffs = {};
    r.best_graph = prune(run.best.graph, run.best.coeffs, r.best_coeffs);
    r.best_infix = render_infix(r.best_graph, r.best_coeffs);
    r.best_canonical = to_string(canonicalize(r.best_graph, r.best_coeffs));
    r.manifest = manifest(problem);
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

std::filesystem::path record_path(const std::filesystem::path& dir, std::uint64_t seed)
{
    return dir / fmt::format("seed_{:06}.record", seed);
}

namespace {

std::filesystem::path time_path(const std::filesystem::path& record)
{
    auto p = record;
    p.replace_extension(".time");
    return p;
}

std::optional<TrialRecord> load_record(const std::filesystem::path& path)
{
    auto r = TrialRecord::parse(read_file(path));
    const auto tp = time_path(path);
    if (std::filesystem::exists(tp)) {
        if (const auto v = to_double(trim(read_file(tp)))) {
            r.wall_seconds = *v;
        }
    }
    return r;
}

} // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const TrialCallback& progress)
{
    cfg.validate();
    ExperimentResult result;
    std::error_code ec;
    std::filesystem::create_directories(cfg.out_dir, ec);
    if (ec) {
        result.errors.push_back(fmt::format("cannot create {}: {}", cfg.out_dir.string(), ec.message()));
    }
    const auto n = static_cast<std::size_t>(cfg.repeats);
    const auto hash = cfg.hash();
    std::vector<std::optional<TrialRecord>> slots(n);
    std::mutex mu;
    std::atomic<std::size_t> cursor { 0 };

    const auto work = [&] {
        for (std::size_t k = cursor++; k < n; k = cursor++) {
            const std::uint64_t seed = cfg.seed_base + k;
            const auto path = record_path(cfg.out_dir, seed);
            std::optional<TrialRecord> rec;
            bool reused = false;
            if (std::filesystem::exists(path)) {
                try {
                    rec = load_record(path);
                    if (rec->config_hash != hash || rec->seed != seed) {
                        rec.reset();
                    }
                } catch (const std::exception&) {
                    rec.reset();
                }
                reused = rec.has_value();
            }
            if (!rec) {
                rec = run_trial(cfg, seed);
                try {
                    write_file_atomic(path, rec->to_text());
                    write_file_atomic(time_path(path), fmt::format("{:.3f}\n", rec->wall_seconds));
                } catch (const std::exception& ex) {
                    const std::lock_guard lock(mu);
                    result.errors.push_back(ex.what());
                }
            }
            const std::lock_guard lock(mu);
            result.reused += reused ? 1 : 0;
            if (progress) {
                progress(*rec, reused);
            }
            slots[k] = std::move(rec);
        }
    };
    {
        std::vector<std::jthread> pool;
        const auto workers = std::min<std::size_t>(static_cast<std::size_t>(cfg.trial_workers), n);
        for (std::size_t w = 1; w < workers; ++w) {
            pool.emplace_back(work);
        }
        work();
    }
    for (auto& r : slots) {
        result.records.push_back(std::move(*r));
    }
    return result;
}

ExperimentResult load_records(const std::filesystem::path& dir)
{
    ExperimentResult result;
    std::vector<std::filesystem::path> files;
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
        if (entry.is_regular_file() && entry.path().extension() == ".record") {
            files.push_back(entry.path());
        }
    }
    if (ec) {
        result.errors.push_back(fmt::format("cannot read {}: {}", dir.string(), ec.message()));
        return result;
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        try {
            result.records.push_back(*load_record(f));
        } catch (const std::exception& ex) {
            result.errors.push_back(fmt::format("{}: {}", f.string(), ex.what()));
        }
    }
    std::stable_sort(result.records.begin(), result.records.end(),
        [](const TrialRecord& a, const TrialRecord& b) { return a.seed < b.seed; });
    return result;
}

// ---------------------------------------------------------------------------
// Statistics

double quantile(const std::vector<double>& sorted, double p)
{
    if (sorted.empty()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    const double h = static_cast<double>(sorted.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    if (sorted[lo] == sorted[hi]) {
        return sorted[lo];
    }
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

SummaryStats summarize(const std::vector<TrialRecord>& records)
{
    SummaryStats s;
    s.runs = static_cast<int>(records.size());
    std::size_t len = 0;
    for (const auto& r : records) {
        len = std::max(len, r.best_fitness.size());
        s.successes += r.success_generation ? 1 : 0;
    }
    std::vector<double> col;
    for (std::size_t g = 0; g < len; ++g) {
        col.clear();
        for (const auto& r : records) {
            if (r.best_fitness.empty()) {
                continue;
            }
            double v = r.best_fitness[std::min(g, r.best_fitness.size() - 1)];
            col.push_back(std::isnan(v) ? std::numeric_limits<double>::infinity() : v);
        }
        std::sort(col.begin(), col.end());
        TrendRow row;
        row.generation = static_cast<int>(g);
        row.median = quantile(col, 0.5);
        row.q1 = quantile(col, 0.25);
        row.q3 = quantile(col, 0.75);
        row.min = col.front();
        row.max = col.back();
        const double iqr = row.q3 - row.q1;
        for (double v : col) {
            row.outliers += (v < row.q1 - 1.5 * iqr || v > row.q3 + 1.5 * iqr) ? 1 : 0;
        }
        s.trend.push_back(row);

        int done = 0;
        for (const auto& r : records) {
            done += (r.success_generation && static_cast<std::size_t>(*r.success_generation) <= g) ? 1 : 0;
        }
        s.cdf.push_back({ static_cast<int>(g), records.empty() ? 0.0 : static_cast<double>(done) / s.runs });
    }
    return s;
}

std::string trend_csv(const SummaryStats& stats)
{
    std::string out = "generation,median,q1,q3,min,max\n";
    for (const auto& r : stats.trend) {
        out += fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.generation, r.median, r.q1, r.q3, r.min, r.max);
    }
    return out;
}

std::string cdf_csv(const SummaryStats& stats)
{
    std::string out = "generation,fraction\n";
    for (const auto& r : stats.cdf) {
        out += fmt::format("{},{:.17g}\n", r.generation, r.fraction);
    }
    return out;
}

namespace {

std::vector<std::vector<std::string>> parse_csv(std::string_view text, std::string_view header, std::size_t columns)
{
    const auto lines = lines_of(text);
    if (lines.empty() || lines[0] != header) {
        throw ParseError(fmt::format("expected header '{}'", header), 1, 1);
    }
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) {
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(lines[i]);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        if (cells.size() != columns) {
            throw ParseError(fmt::format("expected {} columns", columns), i + 1, 1);
        }
        rows.push_back(std::move(cells));
    }
    return rows;
}

double csv_number(const std::string& s, std::size_t row)
{
    const auto v = to_double(s);
    if (!v) {
        throw ParseError(fmt::format("bad number '{}'", s), row + 2, 1);
    }
    return *v;
}

} // namespace

std::vector<TrendRow> parse_trend_csv(std::string_view text)
{
    std::vector<TrendRow> out;
    const auto rows = parse_csv(text, "generation,median,q1,q3,min,max", 6);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& c = rows[i];
        TrendRow r;
        r.generation = static_cast<int>(csv_number(c[0], i));
        r.median = csv_number(c[1], i);
        r.q1 = csv_number(c[2], i);
        r.q3 = csv_number(c[3], i);
        r.min = csv_number(c[4], i);
        r.max = csv_number(c[5], i);
        out.push_back(r);
    }
    return out;
}

std::vector<CdfRow> parse_cdf_csv(std::string_view text)
{
    std::vector<CdfRow> out;
    const auto rows = parse_csv(text, "generation,fraction", 2);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.push_back({ static_cast<int>(csv_number(rows[i][0], i)), csv_number(rows[i][1], i) });
    }
    return out;
}

void export_plot_data(const SummaryStats& stats, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    write_file_atomic(dir / "trend.csv", trend_csv(stats));
    write_file_atomic(dir / "cdf.csv", cdf_csv(stats));
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content)
{
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            throw std::runtime_error("cannot write " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw std::runtime_error(fmt::format("cannot rename {} to {}: {}", tmp.string(), path.string(), ec.message()));
    }
}

std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace prgp
