#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <random>

#include "prgp/harness.hpp"
#include "test_support.hpp"

using namespace prgp;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("prgp_test_" + name))
    {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

ExperimentConfig quick_config(const fs::path& out)
{
    auto cfg = ExperimentConfig::parse("problem = eb\nn = 2\nislands = 2\npopulation = 20\nmax_generations = 4\nrepeats = 3\n");
    cfg.out_dir = out;
    return cfg;
}

TrialRecord fake(std::vector<double> fitness, std::optional<int> success)
{
    TrialRecord r;
    r.best_fitness = std::move(fitness);
    r.success_generation = success;
    r.stop = success ? StopReason::success : StopReason::max_generations;
    r.best_graph = ExpressionGraph({ Command::variable(0) }, 1);
    return r;
}

// 1-based formulation: j = floor(n p + 1 - p), interpolate between x_j and x_{j+1}.
double oracle_quantile(std::vector<double> xs, double p)
{
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    const double pos = n * p + (1.0 - p);
    const double j = std::floor(pos);
    const double g = pos - j;
    const auto at = [&](double k) { return xs[static_cast<std::size_t>(std::clamp(k, 1.0, n)) - 1]; };
    return (1.0 - g) * at(j) + g * at(j + 1.0);
}

std::map<std::string, std::string> snapshot(const fs::path& dir)
{
    std::map<std::string, std::string> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() != ".time") {
            files[e.path().filename().string()] = read_file(e.path());
        }
    }
    return files;
}

} // namespace

TEST_CASE("config text round trip and validation")
{
    const auto cfg = ExperimentConfig::parse("# beam\nproblem = eb\nn = 11\nphysics = false\nrepeats = 7\n"
                                             "population = 300\nrestarts = 2\noptimizer = bfgs\n");
    CHECK(cfg.problem.n == 11);
    CHECK_FALSE(cfg.problem.physics);
    CHECK(cfg.repeats == 7);
    CHECK(cfg.evolution.population == 300);
    CHECK(cfg.evolution.opt.restarts == 2);
    CHECK(cfg.evolution.opt.method == OptMethod::bfgs);
    const auto again = ExperimentConfig::parse(cfg.to_text());
    CHECK(again.to_text() == cfg.to_text());
    CHECK(again.hash() == cfg.hash());

    const auto defaults = ExperimentConfig::parse("");
    CHECK(defaults.repeats == 30);
    CHECK(defaults.evolution.islands == 10);
    CHECK(defaults.evolution.population == 150);

    auto poisson = ExperimentConfig::parse("problem = poisson\ndimension = 2\n");
    CHECK(poisson.problem.n == -1);
    CHECK(poisson.hash() != defaults.hash());

    CHECK_THROWS_AS(ExperimentConfig::parse("repeats = 0\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("colour = blue\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("n = 3\nn = 4\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("n = three\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("just text\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("crossover_rate = 2\n"), ConfigError);
    CHECK_THROWS_AS(ExperimentConfig::parse("problem = poisson\ndimension = 4\n"), ConfigError);
}

TEST_CASE("a planted solution gives one successful record")
{
    TempDir tmp("planted");
    auto cfg = quick_config(tmp.path);
    cfg.repeats = 1;
    cfg.plant_known = true;
    const auto res = run_experiment(cfg);
    REQUIRE(res.records.size() == 1);
    CHECK(res.errors.empty());
    const auto& r = res.records[0];
    CHECK(r.stop == StopReason::success);
    REQUIRE(r.success_generation.has_value());
    CHECK(*r.success_generation == 0);
    CHECK(r.best_fitness.size() == 1);
    CHECK(fs::exists(record_path(tmp.path, cfg.seed_base)));

    const auto parsed = TrialRecord::parse(read_file(record_path(tmp.path, cfg.seed_base)));
    CHECK(parsed.to_text() == r.to_text());
    CHECK(parsed.best_graph == r.best_graph);
    CHECK(parsed.best_coeffs == r.best_coeffs);
}

TEST_CASE("records are resumable and deterministic")
{
    TempDir a("resume_a");
    TempDir b("resume_b");
    auto cfg = quick_config(a.path);
    const auto first = run_experiment(cfg);
    CHECK(first.reused == 0);
    REQUIRE(first.records.size() == 3);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(first.records[k].seed == cfg.seed_base + k);
        CHECK(first.records[k].config_hash == cfg.hash());
    }
    export_plot_data(summarize(first.records), a.path);
    const auto files = snapshot(a.path);

    // same configuration elsewhere, two trials at a time
    auto cfg_b = cfg;
    cfg_b.out_dir = b.path;
    cfg_b.trial_workers = 2;
    const auto second = run_experiment(cfg_b);
    export_plot_data(summarize(second.records), b.path);
    CHECK(snapshot(b.path) == files);

    // only the deleted seed is recomputed
    fs::remove(record_path(a.path, cfg.seed_base + 1));
    std::vector<std::uint64_t> rerun;
    const auto third = run_experiment(cfg, [&](const TrialRecord& r, bool reused) {
        if (!reused) {
            rerun.push_back(r.seed);
        }
    });
    CHECK(third.reused == 2);
    CHECK(rerun == std::vector<std::uint64_t> { cfg.seed_base + 1 });
    CHECK(snapshot(a.path) == files);

    // a different configuration does not reuse the records
    auto changed = cfg;
    changed.evolution.max_generations = 3;
    const auto fourth = run_experiment(changed);
    CHECK(fourth.reused == 0);
}

TEST_CASE("load_records skips unreadable files")
{
    TempDir tmp("load");
    auto cfg = quick_config(tmp.path);
    cfg.repeats = 2;
    (void)run_experiment(cfg);
    write_file_atomic(tmp.path / "seed_999999.record", "garbage\n");
    const auto res = load_records(tmp.path);
    CHECK(res.records.size() == 2);
    CHECK(res.errors.size() == 1);
}

TEST_CASE("write failures are reported per record")
{
    TempDir tmp("ioerr");
    const auto blocker = tmp.path / "not_a_dir";
    write_file_atomic(blocker, "x");
    auto cfg = quick_config(blocker);
    cfg.repeats = 2;
    const auto res = run_experiment(cfg);
    CHECK(res.records.size() == 2);
    CHECK(res.errors.size() >= 2);
}

TEST_CASE("record text rejects damage")
{
    const auto r = fake({ 1.0, 0.5 }, std::nullopt);
    const auto text = r.to_text();
    CHECK(TrialRecord::parse(text).to_text() == text);
    CHECK_THROWS_AS((void)TrialRecord::parse("prgp-record 1\nseed 3\n"), ParseError);
    CHECK_THROWS_AS((void)TrialRecord::parse(text.substr(0, text.size() - 4)), ParseError);
}

TEST_CASE("identical runs have zero spread")
{
    std::vector<TrialRecord> rs(5, fake({ 3.0, 2.0, 1e-20 }, 2));
    const auto s = summarize(rs);
    REQUIRE(s.trend.size() == 3);
    for (const auto& row : s.trend) {
        CHECK(row.q3 - row.q1 == 0.0);
        CHECK(row.min == row.max);
        CHECK(row.outliers == 0);
    }
    CHECK(s.cdf.back().fraction == 1.0);
}

TEST_CASE("success CDF steps")
{
    std::vector<TrialRecord> rs;
    for (int k = 0; k < 15; ++k) {
        rs.push_back(fake({ 1.0, 1.0, 0.0 }, 2));
        rs.push_back(fake({ 1.0, 1.0, 1.0, 1.0, 1.0, 0.0 }, 5));
    }
    const auto s = summarize(rs);
    REQUIRE(s.cdf.size() == 6);
    CHECK(s.cdf[0].fraction == 0.0);
    CHECK(s.cdf[1].fraction == 0.0);
    for (int g = 2; g < 5; ++g) {
        CHECK(s.cdf[static_cast<std::size_t>(g)].fraction == 0.5);
    }
    CHECK(s.cdf[5].fraction == 1.0);
    CHECK(s.successes == 30);
}

TEST_CASE("quartiles match an independent formulation")
{
    std::mt19937_64 rng(42);
    std::uniform_int_distribution<int> size(1, 40);
    std::lognormal_distribution<double> value(0.0, 3.0);
    for (int t = 0; t < 300; ++t) {
        std::vector<double> xs(static_cast<std::size_t>(size(rng)));
        for (auto& x : xs) {
            x = value(rng);
        }
        auto sorted = xs;
        std::sort(sorted.begin(), sorted.end());
        for (double p : { 0.0, 0.25, 0.5, 0.75, 1.0 }) {
            CHECK(quantile(sorted, p) == doctest::Approx(oracle_quantile(xs, p)).epsilon(1e-12));
        }
        std::vector<TrialRecord> rs;
        for (double x : xs) {
            rs.push_back(fake({ x }, std::nullopt));
        }
        const auto s = summarize(rs);
        CHECK(s.trend[0].median == doctest::Approx(oracle_quantile(xs, 0.5)).epsilon(1e-12));
        CHECK(s.trend[0].q1 == doctest::Approx(oracle_quantile(xs, 0.25)).epsilon(1e-12));
        CHECK(s.trend[0].q3 == doctest::Approx(oracle_quantile(xs, 0.75)).epsilon(1e-12));
    }
}

TEST_CASE("CDF is monotone and ends at the success rate")
{
    std::mt19937_64 rng(7);
    for (int t = 0; t < 100; ++t) {
        std::vector<TrialRecord> rs;
        int successes = 0;
        const int runs = 1 + static_cast<int>(rng() % 30);
        for (int k = 0; k < runs; ++k) {
            const int len = 1 + static_cast<int>(rng() % 20);
            std::vector<double> f(static_cast<std::size_t>(len), 1.0);
            const bool ok = rng() % 2 == 0;
            successes += ok ? 1 : 0;
            rs.push_back(fake(f, ok ? std::optional<int>(len - 1) : std::nullopt));
        }
        const auto s = summarize(rs);
        for (std::size_t g = 1; g < s.cdf.size(); ++g) {
            CHECK(s.cdf[g].fraction >= s.cdf[g - 1].fraction);
        }
        CHECK(s.cdf.back().fraction == doctest::Approx(static_cast<double>(successes) / runs));
        CHECK(s.cdf.back().fraction <= 1.0);
    }
}

TEST_CASE("plot data matches the golden fixture and re-parses")
{
    // shorter runs carry their last value forward
    const std::vector<TrialRecord> rs { fake({ 4, 2, 1 }, 2), fake({ 8, 4 }, std::nullopt), fake({ 6, 6, 6, 0 }, 3) };
    const auto s = summarize(rs);
    CHECK(s.trend.size() == 4); // no rows past the longest run
    CHECK(trend_csv(s) == test_support::read_file(test_support::golden_path("fixture_trend.csv")));
    CHECK(cdf_csv(s) == test_support::read_file(test_support::golden_path("fixture_cdf.csv")));

    TempDir tmp("csv");
    export_plot_data(s, tmp.path);
    const auto trend = parse_trend_csv(read_file(tmp.path / "trend.csv"));
    const auto cdf = parse_cdf_csv(read_file(tmp.path / "cdf.csv"));
    REQUIRE(trend.size() == s.trend.size());
    for (std::size_t g = 0; g < trend.size(); ++g) {
        auto expected = s.trend[g];
        expected.outliers = 0;
        CHECK(trend[g] == expected);
    }
    CHECK(cdf == s.cdf);
    CHECK_THROWS_AS((void)parse_trend_csv("generation,fraction\n"), ParseError);
    CHECK_THROWS_AS((void)parse_cdf_csv("generation,fraction\n0,x\n"), ParseError);
}

TEST_CASE("outliers use the 1.5 IQR fences")
{
    std::vector<TrialRecord> rs;
    for (double x : { 1.0, 2.0, 3.0, 4.0, 100.0 }) {
        rs.push_back(fake({ x }, std::nullopt));
    }
    const auto s = summarize(rs);
    CHECK(s.trend[0].q1 == 2.0);
    CHECK(s.trend[0].q3 == 4.0);
    CHECK(s.trend[0].outliers == 1);
}
