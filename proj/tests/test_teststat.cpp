#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "ntktst/io.hpp"
#include "ntktst/teststat.hpp"
#include "support.hpp"

using namespace ntktst;

namespace {
PowerConfig small_config() {
    PowerConfig cfg;
    cfg.problem = "mean-shift";
    cfg.d = 2;
    cfg.n_train = 100;
    cfg.n_test = 100;
    cfg.epochs = {1, 3};
    cfg.ratios = {0.1};
    cfg.n_trials = 10;
    cfg.n_perm = 50;
    cfg.seed = 4;
    return cfg;
}

std::span<const double> view(const std::vector<double>& v) { return {v.data(), v.size()}; }
}  // namespace

TEST_CASE("split statistic") {
    const std::vector<double> pm{1, 1, 1, -1, -1};
    CHECK(split_statistic(view(pm), 3) == 2.0);
    const std::vector<double> zeros(6, 0.0);
    CHECK(split_statistic(view(zeros), 2) == 0.0);
    CHECK_THROWS(split_statistic(view(pm), 0));
    CHECK_THROWS(split_statistic(view(pm), 5));

    // Naive oracle: two explicit loops.
    auto v = testing::normal_vector(37, 3);
    std::vector<double> out(v.data(), v.data() + v.size());
    double sp = 0, sq = 0;
    for (int i = 0; i < 20; ++i) sp += out[static_cast<std::size_t>(i)];
    for (int i = 20; i < 37; ++i) sq += out[static_cast<std::size_t>(i)];
    CHECK(split_statistic(view(out), 20) == doctest::Approx(sp / 20 - sq / 17).epsilon(1e-14));

    // Exchanging the labels negates the statistic.
    std::vector<double> swapped(out.begin() + 20, out.end());
    swapped.insert(swapped.end(), out.begin(), out.begin() + 20);
    CHECK(split_statistic(view(swapped), 17) == doctest::Approx(-split_statistic(view(out), 20)).epsilon(1e-14));
}

TEST_CASE("statistic on a network equals the split of its pooled outputs") {
    testing::TinyProblem tp(1);
    auto pooled = pool(tp.xp, tp.xq);
    Eigen::VectorXd f = tp.net0.forward_rows(pooled.points);
    CHECK(statistic(tp.net0, tp.xp, tp.xq) ==
          doctest::Approx(split_statistic({f.data(), static_cast<std::size_t>(f.size())}, 64)).epsilon(1e-12));
}

TEST_CASE("permutation threshold is the right order statistic") {
    std::vector<double> v(100);
    std::iota(v.begin(), v.end(), 1.0);
    std::reverse(v.begin(), v.end());
    std::swap(v[3], v[70]);
    CHECK(permutation_threshold(v, 0.05) == 96.0);
    CHECK(permutation_threshold(v, 0.5) == 51.0);
    CHECK(permutation_threshold({1.0, 2.0}, 0.05) == std::numeric_limits<double>::infinity());
    double prev = 0.0;
    for (double a : {0.5, 0.2, 0.1, 0.05, 0.01}) {
        const double t = permutation_threshold(v, a);
        CHECK(t >= prev);
        prev = t;
    }
}

TEST_CASE("permutation test on constant outputs never rejects") {
    const std::vector<double> c(80, 0.7);
    auto res = permutation_test(view(c), 40, 200, 0.05, 1);
    CHECK_FALSE(res.reject);
    CHECK(res.null_values.size() == 200);
    CHECK(res.observed == 0.0);
}

TEST_CASE("permutation test rejects a gross separation and is seed deterministic") {
    std::vector<double> out(60);
    for (std::size_t i = 0; i < 60; ++i) out[i] = (i < 30 ? 1.0 : -1.0) + 0.01 * static_cast<double>(i % 7);
    auto a = permutation_test(view(out), 30, 99, 0.05, 5), b = permutation_test(view(out), 30, 99, 0.05, 5);
    CHECK(a.reject);
    CHECK(a.null_values == b.null_values);
    CHECK(a.threshold == b.threshold);
}

TEST_CASE("width from ratio") {
    CHECK(width_for_ratio(0.01, 1000, 2) == 10);
    CHECK(width_for_ratio(1.0, 500, 2) == 500);
    CHECK(width_for_ratio(0.01, 500, 2) == 6);
    CHECK(width_for_ratio(0.001, 500, 1) == 2);
    CHECK_THROWS(width_for_ratio(0.0001, 500, 2));
}

TEST_CASE("config validation and serialization") {
    auto cfg = PowerConfig::desk_scale();
    CHECK_NOTHROW(cfg.validate());
    CHECK(cfg.d == 10);
    CHECK(cfg.n_train == 500);
    CHECK(cfg.n_test == 200);
    CHECK(cfg.n_trials == 50);
    auto bad = cfg;
    bad.alpha = 1.0;
    CHECK_THROWS(bad.validate());
    bad = cfg;
    bad.run_alt = bad.run_null = false;
    CHECK_THROWS(bad.validate());
    CHECK(cfg.to_json()["epochs"] == nlohmann::json({1, 5, 10, 15}));
    CHECK_THROWS(problem_by_name("nope", 3));
}

TEST_CASE("small power experiment: separable alternative, calibrated null, deterministic") {
    auto cfg = small_config();
    auto grid = power_experiment(cfg);
    REQUIRE(grid.cells.size() == 4);
    for (const auto& c : grid.cells) {
        CHECK(c.power() >= 0.0);
        CHECK(c.power() <= 1.0);
        CHECK(c.width == 10);
    }
    CHECK(grid.at(Hypothesis::Alt, 0.1, 3).power() >= 0.8);
    CHECK(grid.at(Hypothesis::Null, 0.1, 3).power() <= 0.4);
    CHECK_THROWS(grid.at(Hypothesis::Alt, 0.5, 3));

    auto again = power_experiment(cfg);
    for (std::size_t i = 0; i < grid.cells.size(); ++i) CHECK(again.cells[i].rejects == grid.cells[i].rejects);

    auto dir = std::filesystem::temp_directory_path() / "ntktst_test_teststat";
    std::filesystem::create_directories(dir);
    write_power_grid(grid, dir / "grid.csv");
    auto table = read_csv(dir / "grid.csv");
    CHECK(table.header == std::vector<std::string>{"epochs", "ratio", "power", "hypothesis", "n_trials", "seed"});
    CHECK(table.rows.size() == 4);
}

TEST_CASE("retraining per permutation runs and stays in range") {
    auto cfg = small_config();
    cfg.retrain_per_permutation = true;
    cfg.n_trials = 2;
    cfg.n_perm = 5;
    cfg.epochs = {1};
    cfg.run_null = false;
    auto grid = power_experiment(cfg);
    REQUIRE(grid.cells.size() == 1);
    CHECK(grid.cells[0].power() >= 0.0);
    CHECK(grid.cells[0].power() <= 1.0);
}

TEST_CASE("binomial acceptance interval matches a recursive pmf oracle") {
    for (auto [n, p] : {std::pair{500L, 0.05}, std::pair{50L, 0.05}, std::pair{200L, 0.3}}) {
        std::vector<double> pmf(static_cast<std::size_t>(n + 1));
        pmf[0] = std::pow(1 - p, static_cast<double>(n));
        for (long k = 0; k < n; ++k)
            pmf[static_cast<std::size_t>(k + 1)] =
                pmf[static_cast<std::size_t>(k)] * static_cast<double>(n - k) / static_cast<double>(k + 1) * p / (1 - p);
        auto cdf_below = [&](long k) { return std::accumulate(pmf.begin(), pmf.begin() + k, 0.0); };
        long lo = 0;
        while (cdf_below(lo + 1) <= 0.005) ++lo;
        long hi = n;
        while (1.0 - cdf_below(hi) <= 0.005) --hi;
        auto got = binomial_acceptance_interval(n, p, 0.99);
        CHECK(got.first == lo);
        CHECK(got.second == hi);
    }
    CHECK(binomial_acceptance_interval(500, 0.05, 0.99) == std::pair{13L, 38L});
}
