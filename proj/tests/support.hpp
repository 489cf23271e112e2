#pragma once

// Fixtures shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

#include <Eigen/Core>

#include "ntktst/bounds.hpp"
#include "ntktst/data.hpp"
#include "ntktst/dynamics.hpp"
#include "ntktst/network.hpp"
#include "ntktst/ntk.hpp"
#include "ntktst/rng.hpp"

namespace ntktst::testing {

inline Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
    Philox gen(seed);
    std::normal_distribution<double> normal(0.0, scale);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal(gen);
    return m;
}

inline Eigen::VectorXd normal_vector(Eigen::Index n, std::uint64_t seed, double scale = 1.0) {
    return normal_matrix(n, 1, seed, scale).col(0);
}

// Smallest |pre-activation| over every hidden unit at x, recomputed from the
// parameter layout without going through ParamVector::forward.
inline double preactivation_margin(const ParamVector& net, const Eigen::VectorXd& x) {
    const auto& arch = net.arch();
    const auto& v = net.values();
    Eigen::VectorXd h = x;
    double margin = std::numeric_limits<double>::infinity();
    for (int l = 0; l < arch.depth; ++l) {
        const Eigen::Index off = arch.layer_offset(l), fan_in = h.size(), k = arch.width;
        Eigen::Map<const Eigen::MatrixXd> w(v.data() + off, k, fan_in);
        Eigen::Map<const Eigen::VectorXd> b(v.data() + off + k * fan_in, k);
        Eigen::VectorXd z = w * h + b;
        margin = std::min(margin, z.cwiseAbs().minCoeff());
        switch (arch.activation) {
            case Activation::ReLU: h = z.cwiseMax(0.0); break;
            case Activation::Tanh: h = z.array().tanh().matrix(); break;
            case Activation::Identity: h = z; break;
        }
    }
    return margin;
}

// Central differences of f(·, x) in θ.
template <Model M>
Eigen::VectorXd fd_gradient(const M& net, const Eigen::VectorXd& x, double step) {
    Eigen::VectorXd theta = net.values(), g(theta.size());
    Eigen::MatrixXd xr = x.transpose();
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        Eigen::VectorXd up = theta, dn = theta;
        up[i] += step;
        dn[i] -= step;
        g[i] = (net.with_values(up).forward_rows(xr)[0] - net.with_values(dn).forward_rows(xr)[0]) / (2.0 * step);
    }
    return g;
}

inline double max_relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& fd) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < analytic.size(); ++i) {
        const double den = std::max({std::abs(analytic[i]), std::abs(fd[i]), 1e-4});
        worst = std::max(worst, std::abs(analytic[i] - fd[i]) / den);
    }
    return worst;
}

// Two-dimensional mean shift, tanh net of depth 2 and width 8, 64 points per side.
struct TinyProblem {
    static constexpr int kPerSide = 64;
    static constexpr double kStep = 1e-3;
    static constexpr double kRadius = 1.0;
    static constexpr double kExponent = 1.0;

    DensityPair pair;
    SampleSet xp, xq;
    QuadratureMeasure quad;
    Eigen::VectorXd witness;
    ParamVector net0;

    explicit TinyProblem(std::uint64_t seed)
        : pair(make_mean_shift(Eigen::Vector2d(1.0, 0.0), Eigen::Vector2d(-1.0, 0.0), Eigen::Matrix2d::Identity())),
          xp(sample(pair.p(), kPerSide, derive_seed(seed, {1}), Source::P)),
          xq(sample(pair.q(), kPerSide, derive_seed(seed, {2}), Source::Q)),
          quad(build_quadrature(pair, 20 * 2 * kPerSide, derive_seed(seed, {3}))),
          witness(pair.witness_rows(quad.points)),
          net0(init_symmetric({2, 2, 8, Activation::Tanh}, derive_seed(seed, {4}))) {}

    SampleSizes sizes() const { return {kPerSide, kPerSide, kPerSide, kPerSide}; }
};

}  // namespace ntktst::testing
