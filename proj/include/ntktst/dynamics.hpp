#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ntktst/error.hpp"
#include "ntktst/io.hpp"
#include "ntktst/network.hpp"
#include "ntktst/ntk.hpp"
#include "ntktst/parallel.hpp"

namespace ntktst {

// Zero-time kernel flow ∂_t ē = -L_{K0} ē, started at ē(·,0) = -Π f*.
// Coefficients live in the eigenbasis of the spectrum it was built from.
struct AuxiliaryState {
    Eigen::VectorXd lambda;
    Eigen::VectorXd e0;

    AuxiliaryState(const Spectrum& spec, const WitnessProjection& proj);
    AuxiliaryState(Eigen::VectorXd lambda, Eigen::VectorXd coeffs);
};

Eigen::VectorXd aux_error_coeffs(const AuxiliaryState& s, double t);
// T̄(t) = Σ (1 - e^{-λt}) c².
double aux_statistic(const AuxiliaryState& s, double t);
// RK4 on the decoupled coefficient equations ė_l = -λ_l e_l.
Eigen::VectorXd ode_oracle(const AuxiliaryState& s, double t, double step);
// ū(x_i, t) on the quadrature points of spec.
Eigen::VectorXd aux_prediction(const AuxiliaryState& s, const Spectrum& spec, double t);
// RK4 on ∂_t ē(x_i) = -Σ_j w_j K(x_i,x_j) ē(x_j), working directly with the Gram.
Eigen::VectorXd pointwise_ode_oracle(const Eigen::MatrixXd& k, const QuadratureMeasure& quad,
                                     const Eigen::VectorXd& e_start, double t, double step);

enum class Regime { Realistic, Population };
std::string to_string(Regime r);

// Population stand-in: targets f*(x_i) with ω_i = w_i/2, so Σω(f-y)² = ½‖f - f*‖².
LabeledData population_data(const Eigen::VectorXd& witness_at_quad, const QuadratureMeasure& quad);

struct Snapshot {
    long step;
    double t;
    Eigen::VectorXd theta;
    double loss;
};

template <Model M>
struct Trajectory {
    Regime regime;
    double h;
    M net0;
    std::vector<Snapshot> snaps;

    M net_at(std::size_t i) const { return net0.with_values(snaps[i].theta); }
};

// Explicit Euler on the loss encoded by data. Aborts if the loss rises by more
// than a relative 1e-12 between steps.
template <Model M>
Trajectory<M> train_trajectory(Regime regime, const M& net0, const LabeledData& data, double h, double t_max,
                               long record_every) {
    if (!(h > 0.0)) throw std::invalid_argument("step size must be positive");
    if (!(t_max >= 0.0)) throw std::invalid_argument("t_max must be nonnegative");
    if (record_every < 1) throw std::invalid_argument("record_every must be positive");
    const long steps = std::lround(t_max / h);
    Trajectory<M> traj{regime, h, net0, {}};
    M net = net0;
    Eigen::VectorXd theta = net0.values();
    auto lg = net.squared_loss(data.x, data.y, data.omega);
    traj.snaps.push_back({0, 0.0, theta, lg.loss});
    for (long s = 1; s <= steps; ++s) {
        const double prev = lg.loss;
        theta -= h * lg.grad;
        net = net.with_values(theta);
        lg = net.squared_loss(data.x, data.y, data.omega);
        if (!std::isfinite(lg.loss) || lg.loss > prev + 1e-12 * std::max(1.0, prev))
            throw NumericalError("gradient flow loss increased at step " + std::to_string(s) + "; reduce the step size");
        if (s % record_every == 0 || s == steps) traj.snaps.push_back({s, static_cast<double>(s) * h, theta, lg.loss});
    }
    return traj;
}

// A finite signed measure; the statistic of a network is Σ_i weights_i f(x_i).
struct SignedMeasure {
    Eigen::MatrixXd points;
    Eigen::VectorXd weights;
};

// mean over p_side minus mean over q_side.
SignedMeasure two_sample_measure(const SampleSet& p_side, const SampleSet& q_side);
// d(p-q) = f* d(p+q) on the quadrature.
SignedMeasure witness_measure(const Eigen::VectorXd& witness_at_quad, const QuadratureMeasure& quad);

struct StatisticPath {
    std::vector<double> t;
    std::vector<double> value;
    std::vector<double> loss;
};

template <Model M>
StatisticPath statistic_path(const Trajectory<M>& traj, const SignedMeasure& eval) {
    const std::size_t n = traj.snaps.size();
    StatisticPath out{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n)};
    parallel_for(n, [&](std::size_t i) {
        out.t[i] = traj.snaps[i].t;
        out.loss[i] = traj.snaps[i].loss;
        out.value[i] = eval.weights.dot(traj.net_at(i).forward_rows(eval.points));
    });
    return out;
}

void write_statistic_path(const StatisticPath& path, const std::filesystem::path& csv);

template <Model M>
void write_trajectory_csv(const Trajectory<M>& traj, const StatisticPath& stat, const std::filesystem::path& csv) {
    CsvWriter w(csv, {"step", "t", "loss", "statistic"});
    for (std::size_t i = 0; i < traj.snaps.size(); ++i)
        w.row({static_cast<double>(traj.snaps[i].step), traj.snaps[i].t, traj.snaps[i].loss, stat.value[i]});
}

}  // namespace ntktst
