#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "ntktst/data.hpp"
#include "ntktst/network.hpp"

namespace ntktst {

// mean of the first p_count outputs minus mean of the rest.
double split_statistic(std::span<const double> outputs, std::size_t p_count);

template <Model M>
double statistic(const M& net, const SampleSet& p_eval, const SampleSet& q_eval) {
    Eigen::VectorXd fp = net.forward_rows(p_eval.points);
    Eigen::VectorXd fq = net.forward_rows(q_eval.points);
    return fp.mean() - fq.mean();
}

struct PermutationResult {
    double observed = 0.0;
    std::vector<double> null_values;  // |statistic| under random relabelings
    double threshold = 0.0;
    bool reject = false;
};

// The ⌈(1-α)(n+1)⌉-th smallest null value; +∞ when that rank exceeds n.
double permutation_threshold(std::vector<double> null_values, double alpha);

// Relabels fixed outputs; outputs[0..p_count) are the P side.
PermutationResult permutation_test(std::span<const double> outputs, std::size_t p_count, int n_perm, double alpha,
                                   std::uint64_t seed);

template <Model M>
PermutationResult permutation_test(const M& net, const SampleSet& pooled, std::size_t p_count, int n_perm,
                                   double alpha, std::uint64_t seed) {
    Eigen::VectorXd f = net.forward_rows(pooled.points);
    return permutation_test(std::span<const double>(f.data(), static_cast<std::size_t>(f.size())), p_count, n_perm,
                            alpha, seed);
}

enum class Hypothesis { Null, Alt };
std::string to_string(Hypothesis h);

struct PowerConfig {
    std::string problem = "hard";
    int d = 20;
    long n_train = 6000;  // per side
    long n_test = 1000;   // per side
    int depth = 2;
    int batch = 50;
    std::vector<int> epochs{1, 5, 10, 15};
    std::vector<double> ratios{0.01, 0.1, 1.0};
    double lr = 0.1;
    double alpha = 0.05;
    int n_perm = 100;
    int n_trials = 500;
    std::uint64_t seed = 0;
    Activation activation = Activation::ReLU;
    bool run_alt = true;
    bool run_null = true;
    bool retrain_per_permutation = false;

    static PowerConfig desk_scale();
    void validate() const;
    nlohmann::json to_json() const;
};

// Hidden width k = round(ratio·2N/L), rounded to an even number.
int width_for_ratio(double ratio, long n_train, int depth);

struct PowerCell {
    int epochs;
    double ratio;
    int width;
    Hypothesis hypothesis;
    long rejects;
    long n_trials;
    double power() const { return static_cast<double>(rejects) / static_cast<double>(n_trials); }
};

struct PowerGrid {
    std::vector<PowerCell> cells;
    std::uint64_t seed = 0;

    const PowerCell& at(Hypothesis h, double ratio, int epochs) const;
};

DensityPair problem_by_name(const std::string& name, int d);

PowerGrid power_experiment(const PowerConfig& cfg);

void write_power_grid(const PowerGrid& grid, const std::filesystem::path& csv);

// Smallest [lo, hi] on the count scale with P(X < lo) ≤ (1-level)/2 and
// P(X > hi) ≤ (1-level)/2 for X ~ Binomial(n, p).
std::pair<long, long> binomial_acceptance_interval(long n, double p, double level);

}  // namespace ntktst
