#pragma once

#include <algorithm>
#include <concepts>
#include <numeric>
#include <stdexcept>
#include <vector>
#include <cstdint>
#include <filesystem>
#include <string>

#include <Eigen/Core>

#include "ntktst/data.hpp"
#include "ntktst/rng.hpp"

namespace ntktst {

enum class Activation { ReLU, Tanh, Identity };
std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct MlpArchitecture {
    int input_dim = 1;
    int depth = 1;  // hidden layers
    int width = 2;  // even, split into two mirrored halves at init
    Activation activation = Activation::ReLU;

    void validate() const;
    Eigen::Index param_count() const;
    // Offset of hidden layer l's weight block; its bias follows immediately.
    Eigen::Index layer_offset(int l) const;
    Eigen::Index output_offset() const { return layer_offset(depth); }

    friend bool operator==(const MlpArchitecture&, const MlpArchitecture&) = default;
};

struct LossGrad {
    double loss;
    Eigen::VectorXd grad;
};

// Fully connected network, scalar output. Parameters are laid out per hidden
// layer as W (width×fan_in, column-major) then b, followed by the output row and bias.
class ParamVector {
public:
    ParamVector(MlpArchitecture arch, Eigen::VectorXd values);

    const MlpArchitecture& arch() const noexcept { return arch_; }
    const Eigen::VectorXd& values() const noexcept { return values_; }
    Eigen::Index param_count() const noexcept { return values_.size(); }
    int input_dim() const noexcept { return arch_.input_dim; }
    ParamVector with_values(Eigen::VectorXd v) const { return ParamVector(arch_, std::move(v)); }

    double forward(const Eigen::Ref<const Eigen::VectorXd>& x) const;
    Eigen::VectorXd forward_rows(const Eigen::Ref<const Eigen::MatrixXd>& x) const;
    Eigen::VectorXd grad(const Eigen::Ref<const Eigen::VectorXd>& x) const;
    // n×M_Θ matrix of per-sample parameter gradients.
    Eigen::MatrixXd jacobian(const Eigen::Ref<const Eigen::MatrixXd>& x) const;
    // Σ_i r_i ∇f(x_i).
    Eigen::VectorXd weighted_grad(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                  const Eigen::Ref<const Eigen::VectorXd>& r) const;
    // Σ_i ω_i (f(x_i) - y_i)² and its gradient.
    LossGrad squared_loss(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                          const Eigen::Ref<const Eigen::VectorXd>& omega) const;

private:
    struct Pass;
    Pass run(const Eigen::Ref<const Eigen::MatrixXd>& x) const;
    Eigen::VectorXd backward(const Pass& pass, const Eigen::Ref<const Eigen::VectorXd>& r) const;

    MlpArchitecture arch_;
    Eigen::VectorXd values_;
};

ParamVector init_symmetric(const MlpArchitecture& arch, std::uint64_t seed);

// f(x) = (1/M) aᵀ(Wx + b) with M hidden units; values are [a; vec(W); b].
class LinearToyNet {
public:
    LinearToyNet(Eigen::VectorXd a, Eigen::MatrixXd w, Eigen::VectorXd b);

    static LinearToyNet paired(int hidden, int d, std::uint64_t seed);

    int hidden() const noexcept { return static_cast<int>(a_.size()); }
    int input_dim() const noexcept { return static_cast<int>(w_.cols()); }
    const Eigen::VectorXd& a() const noexcept { return a_; }
    const Eigen::MatrixXd& w() const noexcept { return w_; }
    const Eigen::VectorXd& b() const noexcept { return b_; }

    Eigen::Index param_count() const noexcept { return values_.size(); }
    const Eigen::VectorXd& values() const noexcept { return values_; }
    LinearToyNet with_values(const Eigen::VectorXd& v) const;

    double forward(const Eigen::Ref<const Eigen::VectorXd>& x) const;
    Eigen::VectorXd forward_rows(const Eigen::Ref<const Eigen::MatrixXd>& x) const;
    Eigen::VectorXd grad(const Eigen::Ref<const Eigen::VectorXd>& x) const;
    Eigen::MatrixXd jacobian(const Eigen::Ref<const Eigen::MatrixXd>& x) const;
    Eigen::VectorXd weighted_grad(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                  const Eigen::Ref<const Eigen::VectorXd>& r) const;
    LossGrad squared_loss(const Eigen::Ref<const Eigen::MatrixXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                          const Eigen::Ref<const Eigen::VectorXd>& omega) const;

    // Gradient of ½(E_p(f-1)² + E_q(f+1)²) from exact mixture moments.
    Eigen::VectorXd population_grad(const DensityPair& pair) const;

private:
    Eigen::VectorXd a_;
    Eigen::MatrixXd w_;
    Eigen::VectorXd b_;
    Eigen::VectorXd values_;
};

// One population-limit gradient step on a toy net that starts at f ≡ 0, with
// the post-step statistic E_p f - E_q f next to its closed form
// (η/M²)(‖a‖²‖δ‖² + ‖Wδ‖²), δ = E_p x - E_q x.
struct ToyStep {
    LinearToyNet after;
    double statistic;
    double closed_form;
    double bias_change;  // ‖b¹ - b⁰‖∞
};
ToyStep toy_population_step(const LinearToyNet& net, const DensityPair& pair, double eta);

template <class M>
concept Model = requires(const M m, const Eigen::MatrixXd& x, const Eigen::VectorXd& v) {
    { m.param_count() } -> std::convertible_to<Eigen::Index>;
    { m.input_dim() } -> std::convertible_to<int>;
    { m.values() } -> std::convertible_to<Eigen::VectorXd>;
    { m.with_values(v) } -> std::same_as<M>;
    { m.forward_rows(x) } -> std::convertible_to<Eigen::VectorXd>;
    { m.jacobian(x) } -> std::convertible_to<Eigen::MatrixXd>;
    { m.weighted_grad(x, v) } -> std::convertible_to<Eigen::VectorXd>;
    { m.squared_loss(x, v, v) } -> std::same_as<LossGrad>;
};

// Labels and per-sample weights that turn Σω(f-y)² into
// L̂ = ½((1/n_p)Σ(f(x)-1)² + (1/n_q)Σ(f(z)+1)²) on the stacked rows [X; Z].
struct LabeledData {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    Eigen::VectorXd omega;
};
LabeledData label_two_sample(const SampleSet& p_side, const SampleSet& q_side);

template <Model M>
double loss_finite(const M& net, const SampleSet& p_side, const SampleSet& q_side) {
    auto data = label_two_sample(p_side, q_side);
    Eigen::VectorXd f = net.forward_rows(data.x);
    return (data.omega.array() * (f - data.y).array().square()).sum();
}

template <Model M>
M gd_step(const M& net, const LabeledData& data, double eta) {
    if (!(eta >= 0.0)) throw std::invalid_argument("gd_step: step size must be nonnegative");
    auto lg = net.squared_loss(data.x, data.y, data.omega);
    return net.with_values(net.values() - eta * lg.grad);
}

template <Model M>
M gd_step(const M& net, const SampleSet& p_side, const SampleSet& q_side, double eta) {
    return gd_step(net, label_two_sample(p_side, q_side), eta);
}

// One epoch of shuffled minibatch steps; each batch rescales ω by n/B so the
// batch loss is an unbiased estimate of L̂.
template <Model M>
M sgd_epoch(const M& net, const LabeledData& data, double eta, int batch, std::uint64_t seed) {
    if (batch < 1) throw std::invalid_argument("sgd_epoch: batch must be positive");
    const Eigen::Index n = data.x.rows();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Philox gen(seed);
    std::shuffle(order.begin(), order.end(), gen);
    Eigen::VectorXd theta = net.values();
    M cur = net;
    for (Eigen::Index start = 0; start < n; start += batch) {
        const Eigen::Index b = std::min<Eigen::Index>(batch, n - start);
        Eigen::MatrixXd xb(b, data.x.cols());
        Eigen::VectorXd yb(b), wb(b);
        for (Eigen::Index i = 0; i < b; ++i) {
            auto src = order[static_cast<std::size_t>(start + i)];
            xb.row(i) = data.x.row(src);
            yb[i] = data.y[src];
            wb[i] = data.omega[src] * static_cast<double>(n) / static_cast<double>(b);
        }
        auto lg = cur.squared_loss(xb, yb, wb);
        theta -= eta * lg.grad;
        cur = cur.with_values(theta);
    }
    return cur;
}

void save_params(const ParamVector& theta, const std::filesystem::path& bin);
ParamVector load_params(const std::filesystem::path& bin);

}  // namespace ntktst
