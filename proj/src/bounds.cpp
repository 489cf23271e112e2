#include "ntktst/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "ntktst/error.hpp"

namespace ntktst {

namespace {
constexpr double kSqrt2 = std::numbers::sqrt2;

void require_size(double n) {
    if (!(n >= 2.0)) throw std::invalid_argument("sample size must be at least 2");
}

// √(2(2L1²+3/2)(A log n + log 2M_Θ)/n): the Bernstein scale without its L1 prefactor.
double bernstein_core(double n, const GradientConstants& c) {
    const double l1sq = c.l1 * c.l1;
    return std::sqrt(2.0 * (2.0 * l1sq + 1.5) * (c.a * std::log(n) + std::log(2.0 * static_cast<double>(c.param_count))) / n);
}

// 2ε e^y / (e^y - 1), the norm needed so that the single-block time fits in y.
double norm_requirement(double eps, double y) {
    if (!(y > 0.0)) return std::numeric_limits<double>::infinity();
    return 2.0 * eps / (-std::expm1(-y));
}

double scale_rate(double x, double lambda, RateConvention conv) {
    return conv == RateConvention::Divisive ? x * lambda : x / lambda;
}
}  // namespace

double hoeffding_scale(double n, double a) {
    require_size(n);
    return std::sqrt(a * std::log(n) / n);
}

double bernstein_bound(double n, const GradientConstants& c) {
    require_size(n);
    return c.l1 * bernstein_core(n, c);
}

SampleSizeCheck sample_size_ok(double n, const GradientConstants& c) {
    const double h = bernstein_bound(n, c);
    return {h < 1.5, h};
}

long min_sample_size(const GradientConstants& c) {
    long hi = 3;
    if (sample_size_ok(3.0, c).ok) return 3;
    while (!sample_size_ok(static_cast<double>(hi), c).ok) {
        if (hi > (1L << 60)) throw InfeasibleError("no feasible sample size", 0.0);
        hi *= 2;
    }
    long lo = hi / 2;  // fails; hi passes
    while (hi - lo > 1) {
        long mid = lo + (hi - lo) / 2;
        (sample_size_ok(static_cast<double>(mid), c).ok ? hi : lo) = mid;
    }
    return hi;
}

double hoeffding_bound(double n, double bound, double t) {
    if (!(bound > 0.0)) throw std::invalid_argument("hoeffding: range bound must be positive");
    if (!(t >= 0.0)) throw std::invalid_argument("hoeffding: deviation must be nonnegative");
    return 2.0 * std::exp(-n * t * t / (2.0 * bound * bound));
}

std::string to_string(EvalSet e) {
    switch (e) {
        case EvalSet::Pop: return "pop";
        case EvalSet::Train: return "train";
        case EvalSet::Test: return "test";
    }
    return "?";
}

double ErrorBudget::hoeffding_sum(EvalSet e) const {
    switch (e) {
        case EvalSet::Pop: return 0.0;
        case EvalSet::Train: return hoeffding_scale(sizes.n_p, consts.a) + hoeffding_scale(sizes.n_q, consts.a);
        case EvalSet::Test: return hoeffding_scale(sizes.m_p, consts.a) + hoeffding_scale(sizes.m_q, consts.a);
    }
    return 0.0;
}

double ErrorBudget::c1_tilde(EvalSet e) const {
    return c1 + kSqrt2 * consts.l1 * consts.l1 * hoeffding_sum(e);
}

double ErrorBudget::c_plus(EvalSet e) const {
    return kSqrt2 * consts.l1 * consts.l1 * (4.0 + hoeffding_sum(e));
}

double ErrorBudget::exact_bound(double t) const {
    const double l1 = consts.l1, l2 = consts.l2;
    auto drift = [&](double n) {
        return 4.0 * l1 * l2 * std::pow(t, 1.5) * pi_norm *
               std::sqrt(1.0 + 2.0 * l1 * l1 * l1 * t * t * bernstein_core(n, consts));
    };
    auto bern = [&](double n) { return t * t * kSqrt2 * l1 * l1 * l1 * pi_norm * bernstein_bound(n, consts); };
    return 4.0 * l1 * l1 * t + drift(sizes.n_p) + drift(sizes.n_q) + bern(sizes.n_p) + bern(sizes.n_q);
}

nlohmann::json ErrorBudget::to_json() const {
    return {{"L1", consts.l1},
            {"L2", consts.l2},
            {"R", consts.radius},
            {"A", consts.a},
            {"param_count", consts.param_count},
            {"pi_norm", pi_norm},
            {"sizes", {{"n_p", sizes.n_p}, {"n_q", sizes.n_q}, {"m_p", sizes.m_p}, {"m_q", sizes.m_q}}},
            {"C1", c1},
            {"C2", c2},
            {"C3", c3},
            {"C4", c4},
            {"terms",
             {{"drift_p", drift_p},
              {"drift_q", drift_q},
              {"drift_tail_p", drift_tail_p},
              {"drift_tail_q", drift_tail_q},
              {"bernstein_p", bernstein_p},
              {"bernstein_q", bernstein_q}}},
            {"C_plus", {{"pop", c_plus(EvalSet::Pop)}, {"train", c_plus(EvalSet::Train)}, {"test", c_plus(EvalSet::Test)}}},
            {"C_minus",
             {{"pop", c_minus(EvalSet::Pop)}, {"train", c_minus(EvalSet::Train)}, {"test", c_minus(EvalSet::Test)}}},
            {"constants_kind", "empirical-constant"}};
}

ErrorBudget make_budget(const GradientConstants& consts, double pi_norm, const SampleSizes& sizes) {
    if (!(consts.l1 > 0.0) || !(consts.l2 >= 0.0)) throw std::invalid_argument("gradient constants must be positive");
    if (!(pi_norm >= 0.0)) throw std::invalid_argument("projection norm must be nonnegative");
    require_size(sizes.n_p);
    require_size(sizes.n_q);
    require_size(sizes.m_p);
    require_size(sizes.m_q);
    ErrorBudget b{consts, pi_norm, sizes};
    const double l1 = consts.l1, l2 = consts.l2, l1c = l1 * l1 * l1;
    b.c1 = 4.0 * l1 * l1;
    b.drift_p = b.drift_q = 4.0 * l1 * l2 * pi_norm;
    b.c2 = b.drift_p + b.drift_q;
    b.drift_tail_p = b.drift_p * std::sqrt(2.0 * l1c * bernstein_core(sizes.n_p, consts));
    b.drift_tail_q = b.drift_q * std::sqrt(2.0 * l1c * bernstein_core(sizes.n_q, consts));
    b.c4 = b.drift_tail_p + b.drift_tail_q;
    b.bernstein_p = kSqrt2 * l1c * pi_norm * bernstein_bound(sizes.n_p, consts);
    b.bernstein_q = kSqrt2 * l1c * pi_norm * bernstein_bound(sizes.n_q, consts);
    b.c3 = b.bernstein_p + b.bernstein_q;
    return b;
}

double delta(double t, EvalSet e, const ErrorBudget& b) {
    if (!(t >= 0.0)) throw std::invalid_argument("time must be nonnegative");
    return b.c1_tilde(e) * t + b.c2 * std::pow(t, 1.5) + b.c3 * t * t + b.c4 * std::pow(t, 2.5);
}

double population_gap_bound(double t, const GradientConstants& c, double witness_norm2) {
    return kSqrt2 * (8.0 / 3.0) * c.l1 * c.l2 * witness_norm2 * std::pow(t, 1.5);
}

double test_train_gap_bound(double t, const GradientConstants& c, const SampleSizes& s) {
    return c.l1 * c.l1 * t * kSqrt2 *
           (hoeffding_scale(s.m_p, c.a) + hoeffding_scale(s.n_p, c.a) + hoeffding_scale(s.m_q, c.a) +
            hoeffding_scale(s.n_q, c.a));
}

std::string to_string(RateConvention r) { return r == RateConvention::Divisive ? "divisive" : "printed"; }

double rate_time(double lambda, double log_ratio, RateConvention conv) {
    return conv == RateConvention::Divisive ? log_ratio / lambda : lambda * log_ratio;
}

SubsetStrategy prefix_strategy() {
    return [](Eigen::Index rank) {
        std::vector<Subset> out;
        for (Eigen::Index k = 1; k <= rank; ++k) {
            Subset s(static_cast<std::size_t>(k));
            for (Eigen::Index i = 0; i < k; ++i) s[static_cast<std::size_t>(i)] = i;
            out.push_back(std::move(s));
        }
        return out;
    };
}

SubsetStrategy window_strategy(std::size_t max_windows) {
    return [max_windows](Eigen::Index rank) {
        auto out = prefix_strategy()(rank);
        std::size_t added = 0;
        for (Eigen::Index j = 1; j < rank && added < max_windows; ++j)
            for (Eigen::Index k = j; k < rank && added < max_windows; ++k, ++added) {
                Subset s;
                for (Eigen::Index i = j; i <= k; ++i) s.push_back(i);
                out.push_back(std::move(s));
            }
        return out;
    };
}

DetectionTime t_min_detect(const WitnessProjection& proj, const Spectrum& spec, double eps,
                           const SubsetStrategy& strategy, RateConvention conv) {
    if (!(eps > 0.0)) throw std::invalid_argument("detection level must be positive");
    if (proj.coeffs.size() != spec.rank()) throw std::invalid_argument("projection and spectrum ranks differ");
    DetectionTime best;
    double attainable = 0.0;
    for (const auto& s : strategy(spec.rank())) {
        if (s.empty()) continue;
        double lmin = std::numeric_limits<double>::infinity();
        for (auto l : s) lmin = std::min(lmin, spec.lambda[l]);
        if (!(lmin > 0.0)) continue;
        const double ns = proj.norm_subset(s);
        attainable = std::max(attainable, ns);
        if (!(ns > eps)) continue;
        const double t = rate_time(lmin, -std::log1p(-eps / ns), conv);
        if (t < best.t) best = {t, s, lmin};
    }
    if (best.subset.empty())
        throw InfeasibleError("detection level exceeds every candidate subset's projected norm", attainable);
    return best;
}

DetectionTime t_max_undetect(const WitnessProjection& proj, const Spectrum& spec, double eps,
                             const SubsetStrategy& strategy, RateConvention conv) {
    if (!(eps > 0.0)) throw std::invalid_argument("detection level must be positive");
    if (proj.coeffs.size() != spec.rank()) throw std::invalid_argument("projection and spectrum ranks differ");
    const double rest = proj.norm_pi - eps;
    DetectionTime best;
    if (!(rest > 0.0)) return best;  // T̄ ≤ ‖Πf*‖² ≤ ε at every time
    best.t = -1.0;
    for (const auto& s : strategy(spec.rank())) {
        if (s.empty()) continue;
        double lmax = 0.0;
        for (auto l : s) lmax = std::max(lmax, spec.lambda[l]);
        const double ns = proj.norm_subset(s);
        if (!(lmax > 0.0) || ns < rest) continue;
        const double t = rate_time(lmax, std::log(ns / rest), conv);
        if (t > best.t) best = {t, s, lmax};
    }
    if (best.subset.empty()) best.t = 0.0;
    return best;
}

SeparationDecision separation_check(double eps, double gamma, const ErrorBudget& b, double lambda_k, double fk_norm,
                                    EvalSet e, RateConvention conv) {
    if (!(lambda_k > 0.0)) throw std::invalid_argument("precondition lambda_k > 0 violated");
    if (!(eps > 0.0 && eps < fk_norm / 2.0)) throw std::invalid_argument("precondition 0 < eps < fk_norm/2 violated");
    const double cp = b.c_plus(e), cm = b.c_minus(e);
    if (!(gamma > 0.0 && gamma <= eps / cp)) throw std::invalid_argument("precondition 0 < gamma <= eps/C+ violated");
    SeparationDecision d;
    d.gamma_branch = norm_requirement(eps, scale_rate(eps / cp - gamma, lambda_k, conv));
    d.drift_branch = std::max(norm_requirement(eps, scale_rate(eps / cm, lambda_k, conv)),
                              norm_requirement(eps, scale_rate(std::pow(eps / cm, 1.0 / 2.5), lambda_k, conv)));
    d.condition_holds = fk_norm > std::max(d.gamma_branch, d.drift_branch);
    d.t_minus_upper = rate_time(lambda_k, -std::log1p(-2.0 * eps / fk_norm), conv);
    d.t_plus_lower = eps / cp;
    d.separation = d.t_plus_lower - d.t_minus_upper;
    return d;
}

std::optional<double> optimal_deviation(const ErrorBudget& b, double lambda_k, double fk_norm, EvalSet e,
                                        RateConvention conv) {
    const double cp = b.c_plus(e);
    const double shift = conv == RateConvention::Divisive ? cp / (lambda_k * fk_norm) : lambda_k * cp / fk_norm;
    if (!(shift < 0.5)) return std::nullopt;
    return 0.5 - shift;
}

PowerWindow power_condition(double eps, const ErrorBudget& b, double lambda_k, double fk_norm, RateConvention conv,
                            std::optional<double> t1_star_2eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("detection level must be positive");
    PowerWindow w;
    const auto& s = b.sizes;
    const double a = b.consts.a;
    w.c_tilde = kSqrt2 * b.consts.l1 * b.consts.l1 *
                (hoeffding_scale(s.m_p, a) + hoeffding_scale(s.m_q, a) + hoeffding_scale(s.n_p, a) +
                 hoeffding_scale(s.n_q, a));
    const double cm = b.c_minus(EvalSet::Test) + w.c_tilde;
    const double r = eps / cm;
    const double need = std::max(norm_requirement(eps, scale_rate(r, lambda_k, conv)),
                                 norm_requirement(eps, scale_rate(std::pow(r, 1.0 / 2.5), lambda_k, conv)));
    w.premise = fk_norm > 2.0 * eps && fk_norm > need;
    if (t1_star_2eps)
        w.lo = *t1_star_2eps;
    else
        w.lo = fk_norm > 2.0 * eps ? rate_time(lambda_k, -std::log1p(-2.0 * eps / fk_norm), conv) : kNeverTime;
    w.hi = std::min(r, std::pow(r, 1.0 / 2.5));
    return w;
}

}  // namespace ntktst
