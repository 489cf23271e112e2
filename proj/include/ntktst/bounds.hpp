#pragma once

#include <cstdint>
#include <functional>
#include <numeric>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "ntktst/network.hpp"
#include "ntktst/ntk.hpp"
#include "ntktst/rng.hpp"

namespace ntktst {

struct GradientConstants {
    double l1 = 0.0;  // sup ‖∇_θ f‖ over the ball
    double l2 = 0.0;  // Lipschitz constant of ∇_θ f in θ
    double radius = 1.0;
    double a = 1.0;  // probability exponent: events hold w.p. 1 - n^{-A}
    Eigen::Index param_count = 1;
};

inline constexpr double kConstantInflation = 1.2;

namespace detail {
inline Eigen::VectorXd ball_point(const Eigen::VectorXd& center, double radius, std::uint64_t seed) {
    Philox gen(seed);
    std::normal_distribution<double> normal;
    Eigen::VectorXd dir(center.size());
    for (Eigen::Index i = 0; i < dir.size(); ++i) dir[i] = normal(gen);
    const double r = radius * std::pow(gen.uniform(), 1.0 / static_cast<double>(center.size()));
    return center + r * dir.normalized();
}

// Largest row norm of the Jacobian, evaluated in row chunks to bound memory.
template <Model M>
double max_grad_norm(const M& net, const Eigen::MatrixXd& xs) {
    constexpr Eigen::Index chunk = 64;
    double best = 0.0;
    for (Eigen::Index r = 0; r < xs.rows(); r += chunk) {
        const Eigen::Index n = std::min(chunk, xs.rows() - r);
        best = std::max(best, net.jacobian(xs.middleRows(r, n)).rowwise().norm().maxCoeff());
    }
    return best;
}

template <Model M>
double max_grad_difference(const M& a, const M& b, const Eigen::MatrixXd& xs) {
    constexpr Eigen::Index chunk = 64;
    double best = 0.0;
    for (Eigen::Index r = 0; r < xs.rows(); r += chunk) {
        const Eigen::Index n = std::min(chunk, xs.rows() - r);
        auto rows = xs.middleRows(r, n);
        best = std::max(best, (a.jacobian(rows) - b.jacobian(rows)).rowwise().norm().maxCoeff());
    }
    return best;
}
// Largest ‖∇f(x,θ+sv) - ∇f(x,θ-sv)‖/(2s) over unit v, by power iteration on
// the secant map. For f quadratic in θ this is the Hessian's spectral norm.
template <Model M>
double secant_lipschitz(const M& net, const Eigen::VectorXd& theta, const Eigen::MatrixXd& x, double s, int iters,
                        std::uint64_t seed) {
    Eigen::VectorXd v = ball_point(Eigen::VectorXd::Zero(theta.size()), 1.0, seed).normalized();
    double best = 0.0;
    for (int i = 0; i < iters; ++i) {
        Eigen::VectorXd diff = (net.with_values(theta + s * v).jacobian(x) - net.with_values(theta - s * v).jacobian(x))
                                   .row(0)
                                   .transpose();
        const double n = diff.norm();
        best = std::max(best, n / (2.0 * s));
        if (!(n > 0.0)) break;
        v = diff / n;
    }
    return best;
}
}  // namespace detail

// Probes θ0 and n_probe points of B_R(θ0) for L1, and n_probe pairs of B_R for
// L2, against up to max_x quadrature points. Random pairs rarely align with
// the steepest direction in high dimension, so L2 is also probed along
// power-iterated secant directions at the largest-norm inputs. Probe i depends
// only on (seed, i), so raising n_probe extends the probe set.
template <Model M>
GradientConstants estimate_constants(const M& net0, const QuadratureMeasure& quad, double radius, double a,
                                     int n_probe, std::uint64_t seed, Eigen::Index max_x = 256) {
    if (!(radius > 0.0)) throw std::invalid_argument("ball radius must be positive");
    if (!(a > 0.0)) throw std::invalid_argument("probability exponent must be positive");
    if (n_probe < 1) throw std::invalid_argument("n_probe must be positive");
    const Eigen::Index nx = std::min(max_x, quad.size());
    Eigen::MatrixXd xs(nx, quad.points.cols());
    for (Eigen::Index i = 0; i < nx; ++i) xs.row(i) = quad.points.row(i * quad.size() / nx);
    const Eigen::VectorXd& c = net0.values();
    double l1 = detail::max_grad_norm(net0, xs);
    double l2 = 0.0;
    for (int i = 0; i < n_probe; ++i) {
        auto th1 = detail::ball_point(c, radius, derive_seed(seed, {static_cast<std::uint64_t>(i), 1}));
        auto th2 = detail::ball_point(c, radius, derive_seed(seed, {static_cast<std::uint64_t>(i), 2}));
        M n1 = net0.with_values(th1), n2 = net0.with_values(th2);
        l1 = std::max(l1, detail::max_grad_norm(n1, xs));
        const double dist = (th1 - th2).norm();
        if (dist > 0.0) l2 = std::max(l2, detail::max_grad_difference(n1, n2, xs) / dist);
    }
    // Secant probes: centers θ0 and up to three points at radius R/2, step R/2,
    // so every evaluated θ stays inside the ball.
    std::vector<Eigen::Index> order(static_cast<std::size_t>(nx));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    const auto n_sec = std::min<std::size_t>(8, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<long>(n_sec), order.end(),
                      [&](Eigen::Index i, Eigen::Index j) { return xs.row(i).squaredNorm() > xs.row(j).squaredNorm(); });
    for (int ci = 0; ci < std::min(n_probe, 3) + 1; ++ci) {
        const auto sci = static_cast<std::uint64_t>(ci);
        Eigen::VectorXd center = c;
        if (ci > 0) {
            Eigen::VectorXd dir = detail::ball_point(Eigen::VectorXd::Zero(c.size()), 1.0, derive_seed(seed, {sci, 3}));
            center = c + 0.5 * radius * dir.normalized();
        }
        for (std::size_t k = 0; k < n_sec; ++k)
            l2 = std::max(l2, detail::secant_lipschitz(net0, center, xs.row(order[k]), 0.5 * radius, 12,
                                                       derive_seed(seed, {sci, 4, k})));
    }
    return {kConstantInflation * l1, kConstantInflation * l2, radius, a, net0.param_count()};
}

// √(A log n / n), the Hoeffding deviation scale at confidence 1 - n^{-A}.
double hoeffding_scale(double n, double a);
// √(2L1²(2L1²+3/2)(A log n + log 2M_Θ)/n).
double bernstein_bound(double n, const GradientConstants& c);

struct SampleSizeCheck {
    bool ok;
    double h;
};
SampleSizeCheck sample_size_ok(double n, const GradientConstants& c);
// Smallest integer n ≥ 3 with h(n) < 3/2.
long min_sample_size(const GradientConstants& c);

double hoeffding_bound(double n, double bound, double t);

struct SampleSizes {
    double n_p = 2, n_q = 2, m_p = 2, m_q = 2;
};

enum class EvalSet { Pop, Train, Test };
std::string to_string(EvalSet e);

// Coefficients of δ(t) = C̃1 t + C2 t^{3/2} + C3 t² + C4 t^{5/2}, from the
// four-group bound on ‖û - ū‖ with (1+x)^{1/2} ≤ 1 + √x applied to the drift terms.
struct ErrorBudget {
    GradientConstants consts;
    double pi_norm = 0.0;  // ‖Π f*‖
    SampleSizes sizes;

    double c1 = 0, c2 = 0, c3 = 0, c4 = 0;
    // Individual summands, for audit output.
    double drift_p = 0, drift_q = 0;          // 4L1L2‖Πf*‖ each (t^{3/2})
    double drift_tail_p = 0, drift_tail_q = 0;  // t^{5/2} parts after the square-root split
    double bernstein_p = 0, bernstein_q = 0;  // √2 L1³‖Πf*‖ h(n) each (t²)

    double hoeffding_sum(EvalSet e) const;
    double c1_tilde(EvalSet e) const;
    double c_plus(EvalSet e) const;
    double c_minus(EvalSet e) const { return c_plus(e) + c2 + c3 + c4; }
    // The unsplit four-line bound on ‖û - ū‖ (population evaluation).
    double exact_bound(double t) const;
    nlohmann::json to_json() const;
};

ErrorBudget make_budget(const GradientConstants& consts, double pi_norm, const SampleSizes& sizes);

double delta(double t, EvalSet e, const ErrorBudget& b);

// |T - T̄| ≤ √2 (8/3) L1 L2 ‖f*‖² t^{3/2}.
double population_gap_bound(double t, const GradientConstants& c, double witness_norm2);
// |T̂_test - T̂_train| ≤ √2 L1² t Σ √(A log n / n) over all four sizes.
double test_train_gap_bound(double t, const GradientConstants& c, const SampleSizes& s);

// How an eigenvalue enters the time bounds: the proofs give (1/λ)·log(·);
// the printed statements show λ·log(·).
enum class RateConvention { Divisive, Printed };
std::string to_string(RateConvention r);
double rate_time(double lambda, double log_ratio, RateConvention conv);

using Subset = std::vector<Eigen::Index>;
using SubsetStrategy = std::function<std::vector<Subset>(Eigen::Index rank)>;
SubsetStrategy prefix_strategy();
// Prefixes plus contiguous windows {j..k}, j ≥ 1, up to max_windows of them.
SubsetStrategy window_strategy(std::size_t max_windows);

inline constexpr double kNeverTime = std::numeric_limits<double>::infinity();

struct DetectionTime {
    double t = kNeverTime;
    Subset subset;
    double lambda = 0.0;  // λ_min(S) for t1*, λ_max(S) for t2*
};

DetectionTime t_min_detect(const WitnessProjection& proj, const Spectrum& spec, double eps,
                           const SubsetStrategy& strategy = prefix_strategy(),
                           RateConvention conv = RateConvention::Divisive);
DetectionTime t_max_undetect(const WitnessProjection& proj, const Spectrum& spec, double eps,
                             const SubsetStrategy& strategy = prefix_strategy(),
                             RateConvention conv = RateConvention::Divisive);

struct SeparationDecision {
    bool condition_holds = false;
    double gamma_branch = 0.0;  // lower bound on ‖f*_k‖² from the γ requirement
    double drift_branch = 0.0;  // lower bound from the C⁻ requirement, max over a ∈ {1, 5/2}
    double t_minus_upper = 0.0;
    double t_plus_lower = 0.0;
    double separation = 0.0;  // t_plus_lower - t_minus_upper
};

SeparationDecision separation_check(double eps, double gamma, const ErrorBudget& b, double lambda_k, double fk_norm,
                                    EvalSet e = EvalSet::Test, RateConvention conv = RateConvention::Divisive);

// Deviation fraction x = ε/‖f*_k‖² maximizing the separation, when it is interior.
std::optional<double> optimal_deviation(const ErrorBudget& b, double lambda_k, double fk_norm, EvalSet e,
                                        RateConvention conv);

struct PowerWindow {
    bool premise = false;
    double c_tilde = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    bool empty() const { return !(lo <= hi); }
};

// Admissible time window for test power at level ε. The lower end is t1*(2ε)
// when supplied, else its single-block upper bound from λ_k and ‖f*_k‖².
PowerWindow power_condition(double eps, const ErrorBudget& b, double lambda_k, double fk_norm,
                            RateConvention conv = RateConvention::Divisive,
                            std::optional<double> t1_star_2eps = std::nullopt);

}  // namespace ntktst
