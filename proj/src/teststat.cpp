#include "ntktst/teststat.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ntktst/io.hpp"
#include "ntktst/parallel.hpp"
#include "ntktst/rng.hpp"

namespace ntktst {

double split_statistic(std::span<const double> outputs, std::size_t p_count) {
    if (p_count == 0 || p_count >= outputs.size()) throw std::invalid_argument("statistic needs both sides nonempty");
    double sp = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < p_count; ++i) sp += outputs[i];
    for (std::size_t i = p_count; i < outputs.size(); ++i) sq += outputs[i];
    return sp / static_cast<double>(p_count) - sq / static_cast<double>(outputs.size() - p_count);
}

double permutation_threshold(std::vector<double> null_values, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
    const auto n = null_values.size();
    if (n == 0) throw std::invalid_argument("need at least one permutation");
    const auto rank = static_cast<std::size_t>(std::ceil((1.0 - alpha) * static_cast<double>(n + 1) - 1e-9));
    if (rank > n) return std::numeric_limits<double>::infinity();
    std::nth_element(null_values.begin(), null_values.begin() + static_cast<long>(rank - 1), null_values.end());
    return null_values[rank - 1];
}

PermutationResult permutation_test(std::span<const double> outputs, std::size_t p_count, int n_perm, double alpha,
                                   std::uint64_t seed) {
    if (n_perm < 1) throw std::invalid_argument("n_perm must be positive");
    PermutationResult r;
    r.observed = split_statistic(outputs, p_count);
    std::vector<double> shuffled(outputs.begin(), outputs.end());
    Philox gen(seed);
    r.null_values.reserve(static_cast<std::size_t>(n_perm));
    for (int k = 0; k < n_perm; ++k) {
        std::shuffle(shuffled.begin(), shuffled.end(), gen);
        r.null_values.push_back(std::abs(split_statistic(shuffled, p_count)));
    }
    r.threshold = permutation_threshold(r.null_values, alpha);
    r.reject = std::abs(r.observed) > r.threshold;
    return r;
}

std::string to_string(Hypothesis h) { return h == Hypothesis::Null ? "null" : "alt"; }

PowerConfig PowerConfig::desk_scale() {
    PowerConfig c;
    c.d = 10;
    c.n_train = 500;
    c.n_test = 200;
    c.n_trials = 50;
    // Width 500 at ratio 1 puts the squared-loss curvature above 2/0.1, so
    // SGD at the full-scale rate diverges; 0.03 is stable across the grid.
    c.lr = 0.03;
    return c;
}

void PowerConfig::validate() const {
    if (d < 2) throw std::invalid_argument("power: d must be at least 2");
    if (n_train < 1 || n_test < 1) throw std::invalid_argument("power: sample sizes must be positive");
    if (depth < 1 || batch < 1) throw std::invalid_argument("power: depth and batch must be positive");
    if (epochs.empty() || ratios.empty()) throw std::invalid_argument("power: empty grid axis");
    for (int e : epochs)
        if (e < 1) throw std::invalid_argument("power: epochs must be positive");
    for (double r : ratios) width_for_ratio(r, n_train, depth);
    if (!(lr > 0.0)) throw std::invalid_argument("power: learning rate must be positive");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("power: alpha must lie in (0, 1)");
    if (n_perm < 1 || n_trials < 1) throw std::invalid_argument("power: counts must be positive");
    if (!run_alt && !run_null) throw std::invalid_argument("power: nothing to run");
}

nlohmann::json PowerConfig::to_json() const {
    return {{"problem", problem}, {"d", d},           {"n_train", n_train},     {"n_test", n_test},
            {"depth", depth},     {"batch", batch},   {"epochs", epochs},       {"ratios", ratios},
            {"lr", lr},           {"alpha", alpha},   {"n_perm", n_perm},       {"n_trials", n_trials},
            {"seed", seed},       {"activation", ntktst::to_string(activation)},
            {"retrain_per_permutation", retrain_per_permutation}};
}

int width_for_ratio(double ratio, long n_train, int depth) {
    const double raw = ratio * 2.0 * static_cast<double>(n_train) / static_cast<double>(depth);
    if (!(raw >= 1.0)) throw std::invalid_argument("ratio gives a hidden width below 1");
    return 2 * std::max(1L, std::lround(raw / 2.0));
}

const PowerCell& PowerGrid::at(Hypothesis h, double ratio, int epochs) const {
    for (const auto& c : cells)
        if (c.hypothesis == h && c.ratio == ratio && c.epochs == epochs) return c;
    throw std::out_of_range("no such power cell");
}

DensityPair problem_by_name(const std::string& name, int d) {
    if (name == "hard") return make_hard_problem(d);
    if (name == "mean-shift") {
        Eigen::VectorXd mu2 = Eigen::VectorXd::Constant(d, 0.5);
        return make_mean_shift(Eigen::VectorXd::Zero(d), mu2, Eigen::MatrixXd::Identity(d, d));
    }
    throw std::invalid_argument("unknown problem " + name);
}

namespace {

// Train from net0 on (x, y) and report |T_test| at each requested epoch count.
std::vector<double> train_and_score(const ParamVector& net0, const LabeledData& train, const PowerConfig& cfg,
                                    const Eigen::MatrixXd& test_points, std::size_t test_p, std::uint64_t seed,
                                    std::vector<Eigen::VectorXd>* outputs) {
    const int max_epoch = *std::max_element(cfg.epochs.begin(), cfg.epochs.end());
    std::vector<double> stats;
    ParamVector net = net0;
    for (int e = 1; e <= max_epoch; ++e) {
        net = sgd_epoch(net, train, cfg.lr, cfg.batch, derive_seed(seed, {static_cast<std::uint64_t>(e)}));
        if (std::find(cfg.epochs.begin(), cfg.epochs.end(), e) == cfg.epochs.end()) continue;
        Eigen::VectorXd f = net.forward_rows(test_points);
        stats.push_back(split_statistic(std::span<const double>(f.data(), static_cast<std::size_t>(f.size())), test_p));
        if (outputs) outputs->push_back(std::move(f));
    }
    return stats;
}

LabeledData relabel(const LabeledData& d, const std::vector<std::size_t>& perm) {
    LabeledData out = d;
    for (std::size_t i = 0; i < perm.size(); ++i) out.x.row(static_cast<Eigen::Index>(i)) = d.x.row(static_cast<Eigen::Index>(perm[i]));
    return out;
}

}  // namespace

PowerGrid power_experiment(const PowerConfig& cfg) {
    cfg.validate();
    const DensityPair alt = problem_by_name(cfg.problem, cfg.d);
    const DensityPair null = alt.null_of();
    std::vector<Hypothesis> hyps;
    if (cfg.run_alt) hyps.push_back(Hypothesis::Alt);
    if (cfg.run_null) hyps.push_back(Hypothesis::Null);
    std::vector<int> checkpoints = cfg.epochs;
    std::sort(checkpoints.begin(), checkpoints.end());
    checkpoints.erase(std::unique(checkpoints.begin(), checkpoints.end()), checkpoints.end());
    PowerConfig run = cfg;
    run.epochs = checkpoints;

    const std::size_t n_r = cfg.ratios.size(), n_t = static_cast<std::size_t>(cfg.n_trials);
    const std::size_t tasks = hyps.size() * n_r * n_t;
    // rejects[task][checkpoint]
    std::vector<std::vector<char>> rejects(tasks);
    parallel_for(tasks, [&](std::size_t task) {
        const std::size_t trial = task % n_t, ri = (task / n_t) % n_r, hi = task / (n_t * n_r);
        const Hypothesis h = hyps[hi];
        const DensityPair& pair = h == Hypothesis::Alt ? alt : null;
        const auto tr = static_cast<std::uint64_t>(trial), rr = static_cast<std::uint64_t>(ri);
        // Seeds depend on trial and ratio only, so the null grid replays the alt grid's randomness.
        auto xp = sample(pair.p(), cfg.n_train, derive_seed(cfg.seed, {tr, 1}), Source::P);
        auto xq = sample(pair.q(), cfg.n_train, derive_seed(cfg.seed, {tr, 2}), Source::Q);
        auto zp = sample(pair.p(), cfg.n_test, derive_seed(cfg.seed, {tr, 3}), Source::P);
        auto zq = sample(pair.q(), cfg.n_test, derive_seed(cfg.seed, {tr, 4}), Source::Q);
        MlpArchitecture arch{cfg.d, cfg.depth, width_for_ratio(cfg.ratios[ri], cfg.n_train, cfg.depth), cfg.activation};
        auto net0 = init_symmetric(arch, derive_seed(cfg.seed, {tr, rr, 5}));
        auto train = label_two_sample(xp, xq);
        auto test = pool(zp, zq);
        const auto test_p = static_cast<std::size_t>(zp.size());
        const std::uint64_t sgd_seed = derive_seed(cfg.seed, {tr, rr, 6});
        std::vector<Eigen::VectorXd> outputs;
        auto observed = train_and_score(net0, train, run, test.points, test_p, sgd_seed, &outputs);
        std::vector<char> rej(checkpoints.size());
        if (!cfg.retrain_per_permutation) {
            for (std::size_t c = 0; c < checkpoints.size(); ++c) {
                const auto& f = outputs[c];
                auto res = permutation_test(std::span<const double>(f.data(), static_cast<std::size_t>(f.size())), test_p,
                                            cfg.n_perm, cfg.alpha, derive_seed(cfg.seed, {tr, rr, 7, c}));
                rej[c] = res.reject;
            }
        } else {
            // Relabel train and test pools jointly, retrain from the same init.
            std::vector<std::vector<double>> nulls(checkpoints.size());
            Philox gen(derive_seed(cfg.seed, {tr, rr, 8}));
            std::vector<std::size_t> tperm(static_cast<std::size_t>(train.x.rows()));
            std::vector<std::size_t> eperm(static_cast<std::size_t>(test.size()));
            for (int k = 0; k < cfg.n_perm; ++k) {
                std::iota(tperm.begin(), tperm.end(), std::size_t{0});
                std::iota(eperm.begin(), eperm.end(), std::size_t{0});
                std::shuffle(tperm.begin(), tperm.end(), gen);
                std::shuffle(eperm.begin(), eperm.end(), gen);
                Eigen::MatrixXd tp(test.size(), test.dim());
                for (std::size_t i = 0; i < eperm.size(); ++i)
                    tp.row(static_cast<Eigen::Index>(i)) = test.points.row(static_cast<Eigen::Index>(eperm[i]));
                auto s = train_and_score(net0, relabel(train, tperm), run, tp, test_p, sgd_seed, nullptr);
                for (std::size_t c = 0; c < s.size(); ++c) nulls[c].push_back(std::abs(s[c]));
            }
            for (std::size_t c = 0; c < checkpoints.size(); ++c)
                rej[c] = std::abs(observed[c]) > permutation_threshold(nulls[c], cfg.alpha);
        }
        rejects[task] = std::move(rej);
    });

    PowerGrid grid;
    grid.seed = cfg.seed;
    for (std::size_t hi = 0; hi < hyps.size(); ++hi)
        for (std::size_t ri = 0; ri < n_r; ++ri)
            for (std::size_t c = 0; c < checkpoints.size(); ++c) {
                long count = 0;
                for (std::size_t t = 0; t < n_t; ++t) count += rejects[(hi * n_r + ri) * n_t + t][c];
                grid.cells.push_back({checkpoints[c], cfg.ratios[ri], width_for_ratio(cfg.ratios[ri], cfg.n_train, cfg.depth),
                                      hyps[hi], count, cfg.n_trials});
            }
    return grid;
}

void write_power_grid(const PowerGrid& grid, const std::filesystem::path& csv) {
    CsvWriter w(csv, {"epochs", "ratio", "power", "hypothesis", "n_trials", "seed"});
    for (const auto& c : grid.cells)
        w.raw_row({std::to_string(c.epochs), format_double(c.ratio), format_double(c.power()), to_string(c.hypothesis),
                   std::to_string(c.n_trials), std::to_string(grid.seed)});
}

std::pair<long, long> binomial_acceptance_interval(long n, double p, double level) {
    if (n < 1 || !(p > 0.0 && p < 1.0) || !(level > 0.0 && level < 1.0))
        throw std::invalid_argument("binomial interval: bad arguments");
    const double tail = (1.0 - level) / 2.0;
    std::vector<double> pmf(static_cast<std::size_t>(n + 1));
    for (long k = 0; k <= n; ++k) {
        const double lp = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) + k * std::log(p) +
                          (n - k) * std::log1p(-p);
        pmf[static_cast<std::size_t>(k)] = std::exp(lp);
    }
    long lo = 0;
    double below = 0.0;  // P(X < lo)
    while (lo < n && below + pmf[static_cast<std::size_t>(lo)] <= tail) below += pmf[static_cast<std::size_t>(lo++)];
    long hi = n;
    double above = 0.0;  // P(X > hi)
    while (hi > 0 && above + pmf[static_cast<std::size_t>(hi)] <= tail) above += pmf[static_cast<std::size_t>(hi--)];
    return {lo, hi};
}

}  // namespace ntktst
