#include "ntktst/network.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "ntktst/error.hpp"
#include "ntktst/io.hpp"

namespace ntktst {

std::string to_string(Activation a) {
    switch (a) {
        case Activation::ReLU: return "relu";
        case Activation::Tanh: return "tanh";
        case Activation::Identity: return "identity";
    }
    return "?";
}

Activation activation_from_string(const std::string& s) {
    if (s == "relu") return Activation::ReLU;
    if (s == "tanh") return Activation::Tanh;
    if (s == "identity") return Activation::Identity;
    throw std::invalid_argument("unknown activation " + s);
}

void MlpArchitecture::validate() const {
    if (input_dim < 1) throw std::invalid_argument("input dimension must be positive");
    if (depth < 1) throw std::invalid_argument("depth must be positive");
    if (width < 2 || width % 2 != 0) throw std::invalid_argument("width must be a positive even number");
}

Eigen::Index MlpArchitecture::layer_offset(int l) const {
    Eigen::Index k = width;
    if (l == 0) return 0;
    Eigen::Index off = k * input_dim + k;
    return off + static_cast<Eigen::Index>(l - 1) * (k * k + k);
}

Eigen::Index MlpArchitecture::param_count() const {
    validate();
    return output_offset() + width + 1;
}

namespace {

Eigen::ArrayXXd activate(Activation a, const Eigen::ArrayXXd& z) {
    switch (a) {
        case Activation::ReLU: return z.max(0.0);
        case Activation::Tanh: return z.tanh();
        case Activation::Identity: return z;
    }
    return z;
}

// Derivative expressed through the pre-activation z and activation h.
Eigen::ArrayXXd activate_prime(Activation a, const Eigen::ArrayXXd& z, const Eigen::ArrayXXd& h) {
    switch (a) {
        case Activation::ReLU: return (z > 0.0).cast<double>();
        case Activation::Tanh: return 1.0 - h.square();
        case Activation::Identity: return Eigen::ArrayXXd::Ones(z.rows(), z.cols());
    }
    return z;
}

}  // namespace

ParamVector::ParamVector(MlpArchitecture arch, Eigen::VectorXd values) : arch_(arch), values_(std::move(values)) {
    if (values_.size() != arch_.param_count()) throw std::invalid_argument("parameter length does not match architecture");
    if (!values_.allFinite()) throw NumericalError("non-finite network parameters");
}

struct ParamVector::Pass {
    // hs[0] is the input (d×n); hs[l+1] = σ(zs[l]).
    std::vector<Eigen::ArrayXXd> zs;
    std::vector<Eigen::MatrixXd> hs;
    Eigen::VectorXd out;
};

ParamVector::Pass ParamVector::run(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
    if (x.cols() != arch_.input_dim) throw std::invalid_argument("forward: input dimension mismatch");
    const Eigen::Index k = arch_.width;
    Pass p;
    p.hs.emplace_back(x.transpose());
    Eigen::Index fan_in = arch_.input_dim;
    for (int l = 0; l < arch_.depth; ++l) {
        const Eigen::Index off = arch_.layer_offset(l);
        Eigen::Map<const Eigen::MatrixXd> w(values_.data() + off, k, fan_in);
        Eigen::Map<const Eigen::VectorXd> b(values_.data() + off + k * fan_in, k);
        Eigen::MatrixXd z = w * p.hs.back();
        z.colwise() += b;
        p.zs.emplace_back(z.array());
        p.hs.emplace_back(activate(arch_.activation, p.zs.back()).matrix());
        fan_in = k;
    }
    const Eigen::Index off = arch_.output_offset();
    Eigen::Map<const Eigen::VectorXd> w_out(values_.data() + off, k);
    p.out = (p.hs.back().transpose() * w_out).array() + values_[off + k];
    return p;
}

Eigen::VectorXd ParamVector::backward(const Pass& p, const Eigen::Ref<const Eigen::VectorXd>& r) const {
    const Eigen::Index k = arch_.width;
    Eigen::VectorXd g(values_.size());
    const Eigen::Index off = arch_.output_offset();
    Eigen::Map<const Eigen::VectorXd> w_out(values_.data() + off, k);
    g.segment(off, k) = p.hs.back() * r;
    g[off + k] = r.sum();
    // delta(:, i) = ∂(r_i f(x_i)) / ∂z_l(:, i)
    Eigen::MatrixXd delta =
        ((w_out * r.transpose()).array() *
         activate_prime(arch_.activation, p.zs.back(), p.hs.back().array()))
            .matrix();
    for (int l = arch_.depth - 1; l >= 0; --l) {
        const Eigen::Index fan_in = l == 0 ? arch_.input_dim : k;
        const Eigen::Index lo = arch_.layer_offset(l);
        Eigen::Map<Eigen::MatrixXd>(g.data() + lo, k, fan_in) = delta * p.hs[l].transpose();
        g.segment(lo + k * fan_in, k) = delta.rowwise().sum();
        if (l > 0) {
            Eigen::Map<const Eigen::MatrixXd> w(values_.data() + lo, k, fan_in);
            delta = ((w.transpose() * delta).array() *
                     activate_prime(arch_.activation, p.zs[l - 1], p.hs[l].array()))
                        .matrix();
        }
    }
    return g;
}

double ParamVector::forward(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return forward_rows(x.transpose())[0];
}

Eigen::VectorXd ParamVector::forward_rows(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
    return run(x).out;
}

Eigen::VectorXd ParamVector::grad(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return weighted_grad(x.transpose(), Eigen::VectorXd::Ones(1));
}

Eigen::VectorXd ParamVector::weighted_grad(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                           const Eigen::Ref<const Eigen::VectorXd>& r) const {
    if (r.size() != x.rows()) throw std::invalid_argument("weighted_grad: weight count mismatch");
    return backward(run(x), r);
}

LossGrad ParamVector::squared_loss(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                   const Eigen::Ref<const Eigen::VectorXd>& y,
                                   const Eigen::Ref<const Eigen::VectorXd>& omega) const {
    auto p = run(x);
    Eigen::ArrayXd resid = p.out.array() - y.array();
    double loss = (omega.array() * resid.square()).sum();
    Eigen::VectorXd r = (2.0 * omega.array() * resid).matrix();
    return {loss, backward(p, r)};
}

Eigen::MatrixXd ParamVector::jacobian(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
    const Eigen::Index k = arch_.width;
    const Eigen::Index n = x.rows();
    auto p = run(x);
    Eigen::MatrixXd jac(n, values_.size());
    const Eigen::Index off = arch_.output_offset();
    Eigen::Map<const Eigen::VectorXd> w_out(values_.data() + off, k);
    jac.middleCols(off, k) = p.hs.back().transpose();
    jac.col(off + k).setOnes();
    // Columns of delta stay per-sample because every output cotangent is 1.
    Eigen::MatrixXd delta =
        (activate_prime(arch_.activation, p.zs.back(), p.hs.back().array()).colwise() * w_out.array()).matrix();
    for (int l = arch_.depth - 1; l >= 0; --l) {
        const Eigen::Index fan_in = l == 0 ? arch_.input_dim : k;
        const Eigen::Index lo = arch_.layer_offset(l);
        const auto& h = p.hs[l];
        for (Eigen::Index c = 0; c < fan_in; ++c)
            for (Eigen::Index r = 0; r < k; ++r)
                jac.col(lo + r + c * k) = (delta.row(r).array() * h.row(c).array()).transpose();
        jac.middleCols(lo + k * fan_in, k) = delta.transpose();
        if (l > 0) {
            Eigen::Map<const Eigen::MatrixXd> w(values_.data() + lo, k, fan_in);
            delta = ((w.transpose() * delta).array() *
                     activate_prime(arch_.activation, p.zs[l - 1], p.hs[l].array()))
                        .matrix();
        }
    }
    return jac;
}

ParamVector init_symmetric(const MlpArchitecture& arch, std::uint64_t seed) {
    arch.validate();
    const Eigen::Index k = arch.width, half = k / 2;
    Eigen::VectorXd v = Eigen::VectorXd::Zero(arch.param_count());
    Philox gen(seed);
    std::normal_distribution<double> normal;
    auto draw = [&](Eigen::Index rows, Eigen::Index cols, double var) {
        Eigen::MatrixXd m(rows, cols);
        const double sd = std::sqrt(var);
        for (Eigen::Index c = 0; c < cols; ++c)
            for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = sd * normal(gen);
        return m;
    };
    // Both halves of every hidden layer see the same inputs and share weights,
    // so their activations coincide; the output row is [a; -a].
    for (int l = 0; l < arch.depth; ++l) {
        const Eigen::Index fan_in = l == 0 ? arch.input_dim : k;
        Eigen::Map<Eigen::MatrixXd> w(v.data() + arch.layer_offset(l), k, fan_in);
        if (l == 0) {
            Eigen::MatrixXd top = draw(half, fan_in, 2.0 / arch.input_dim);
            w.topRows(half) = top;
            w.bottomRows(half) = top;
        } else {
            Eigen::MatrixXd blk = draw(half, half, 2.0 / static_cast<double>(k));
            w.topLeftCorner(half, half) = blk;
            w.bottomRightCorner(half, half) = blk;
        }
    }
    Eigen::MatrixXd a = draw(half, 1, 2.0 / static_cast<double>(k));
    const Eigen::Index off = arch.output_offset();
    v.segment(off, half) = a.col(0);
    v.segment(off + half, half) = -a.col(0);
    return ParamVector(arch, std::move(v));
}

LabeledData label_two_sample(const SampleSet& p_side, const SampleSet& q_side) {
    if (p_side.dim() != q_side.dim()) throw std::invalid_argument("two-sample sets differ in dimension");
    const Eigen::Index np = p_side.size(), nq = q_side.size();
    LabeledData d;
    d.x.resize(np + nq, p_side.dim());
    d.x << p_side.points, q_side.points;
    d.y.resize(np + nq);
    d.y << Eigen::VectorXd::Ones(np), -Eigen::VectorXd::Ones(nq);
    d.omega.resize(np + nq);
    d.omega << Eigen::VectorXd::Constant(np, 0.5 / static_cast<double>(np)),
        Eigen::VectorXd::Constant(nq, 0.5 / static_cast<double>(nq));
    return d;
}

LinearToyNet::LinearToyNet(Eigen::VectorXd a, Eigen::MatrixXd w, Eigen::VectorXd b)
    : a_(std::move(a)), w_(std::move(w)), b_(std::move(b)) {
    const Eigen::Index m = a_.size();
    if (m < 1 || w_.rows() != m || b_.size() != m) throw std::invalid_argument("linear toy net: inconsistent shapes");
    values_.resize(m + w_.size() + m);
    values_ << a_, Eigen::Map<const Eigen::VectorXd>(w_.data(), w_.size()), b_;
}

LinearToyNet LinearToyNet::paired(int hidden, int d, std::uint64_t seed) {
    if (hidden < 2 || hidden % 2 != 0) throw std::invalid_argument("linear toy net needs an even hidden count");
    const int half = hidden / 2;
    Philox gen(seed);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd top(half, d);
    for (int c = 0; c < d; ++c)
        for (int r = 0; r < half; ++r) top(r, c) = normal(gen);
    Eigen::MatrixXd w(hidden, d);
    w << top, top;
    Eigen::VectorXd a(hidden);
    a << Eigen::VectorXd::Ones(half), -Eigen::VectorXd::Ones(half);
    return LinearToyNet(std::move(a), std::move(w), Eigen::VectorXd::Zero(hidden));
}

LinearToyNet LinearToyNet::with_values(const Eigen::VectorXd& v) const {
    const Eigen::Index m = a_.size(), d = w_.cols();
    if (v.size() != values_.size()) throw std::invalid_argument("linear toy net: parameter length mismatch");
    return LinearToyNet(v.head(m), Eigen::Map<const Eigen::MatrixXd>(v.data() + m, m, d), v.tail(m));
}

double LinearToyNet::forward(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return a_.dot(w_ * x + b_) / static_cast<double>(hidden());
}

Eigen::VectorXd LinearToyNet::forward_rows(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
    if (x.cols() != w_.cols()) throw std::invalid_argument("forward: input dimension mismatch");
    return ((x * w_.transpose()).rowwise() + b_.transpose()) * a_ / static_cast<double>(hidden());
}

Eigen::VectorXd LinearToyNet::grad(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return jacobian(x.transpose()).row(0).transpose();
}

Eigen::MatrixXd LinearToyNet::jacobian(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
    const Eigen::Index m = a_.size(), d = w_.cols(), n = x.rows();
    const double s = 1.0 / static_cast<double>(m);
    Eigen::MatrixXd jac(n, values_.size());
    jac.leftCols(m) = s * ((x * w_.transpose()).rowwise() + b_.transpose());
    for (Eigen::Index c = 0; c < d; ++c)
        for (Eigen::Index r = 0; r < m; ++r) jac.col(m + r + c * m) = s * a_[r] * x.col(c);
    jac.rightCols(m) = (s * a_).transpose().replicate(n, 1);
    return jac;
}

Eigen::VectorXd LinearToyNet::weighted_grad(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                            const Eigen::Ref<const Eigen::VectorXd>& r) const {
    const Eigen::Index m = a_.size(), d = w_.cols();
    const double s = 1.0 / static_cast<double>(m);
    Eigen::VectorXd xr = x.transpose() * r;
    const double rs = r.sum();
    Eigen::VectorXd g(values_.size());
    g.head(m) = s * (w_ * xr + b_ * rs);
    Eigen::Map<Eigen::MatrixXd>(g.data() + m, m, d) = s * a_ * xr.transpose();
    g.tail(m) = s * rs * a_;
    return g;
}

LossGrad LinearToyNet::squared_loss(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                    const Eigen::Ref<const Eigen::VectorXd>& y,
                                    const Eigen::Ref<const Eigen::VectorXd>& omega) const {
    Eigen::ArrayXd resid = forward_rows(x).array() - y.array();
    Eigen::VectorXd r = (2.0 * omega.array() * resid).matrix();
    return {(omega.array() * resid.square()).sum(), weighted_grad(x, r)};
}

Eigen::VectorXd LinearToyNet::population_grad(const DensityPair& pair) const {
    // f(x) = αᵀx + β, so the expected residual moments need only first and
    // second moments of each side.
    const Eigen::Index m = a_.size(), d = w_.cols();
    const double s = 1.0 / static_cast<double>(m);
    Eigen::VectorXd alpha = s * w_.transpose() * a_;
    const double beta = s * a_.dot(b_);
    Eigen::VectorXd ex = Eigen::VectorXd::Zero(d);  // E[(f-y)x] summed over sides
    double e0 = 0.0;                                // E[f-y] summed over sides
    auto side = [&](const GaussianMixture& g, double label) {
        Eigen::VectorXd mu = g.mean();
        Eigen::MatrixXd second = Eigen::MatrixXd::Zero(d, d);
        for (const auto& c : g.components()) second += c.weight * (c.cov + c.mean * c.mean.transpose());
        ex += second * alpha + (beta - label) * mu;
        e0 += alpha.dot(mu) + beta - label;
    };
    side(pair.p(), 1.0);
    side(pair.q(), -1.0);
    Eigen::VectorXd g(values_.size());
    g.head(m) = s * (w_ * ex + b_ * e0);
    Eigen::Map<Eigen::MatrixXd>(g.data() + m, m, d) = s * a_ * ex.transpose();
    g.tail(m) = s * e0 * a_;
    return g;
}

ToyStep toy_population_step(const LinearToyNet& net, const DensityPair& pair, double eta) {
    if (!(eta >= 0.0)) throw std::invalid_argument("step size must be nonnegative");
    LinearToyNet after = net.with_values(net.values() - eta * net.population_grad(pair));
    const Eigen::VectorXd mp = pair.p().mean(), mq = pair.q().mean(), shift = mp - mq;
    const double m = static_cast<double>(net.hidden());
    const Eigen::VectorXd w_shift = net.w() * shift;
    const double closed = eta / (m * m) * (net.a().squaredNorm() * shift.squaredNorm() + w_shift.squaredNorm());
    const double stat = after.forward(mp) - after.forward(mq);  // f is affine, so E f = f(E x)
    const double db = (after.b() - net.b()).cwiseAbs().maxCoeff();
    return {std::move(after), stat, closed, db};
}

void save_params(const ParamVector& theta, const std::filesystem::path& bin) {
    const auto& v = theta.values();
    write_f64_le(bin, std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
    auto header = bin;
    header += ".json";
    const auto& a = theta.arch();
    write_json(header, {{"input_dim", a.input_dim},
                        {"depth", a.depth},
                        {"width", a.width},
                        {"activation", to_string(a.activation)},
                        {"param_count", theta.param_count()},
                        {"encoding", "f64le"}});
}

ParamVector load_params(const std::filesystem::path& bin) {
    auto header = bin;
    header += ".json";
    auto j = read_versioned_json(header);
    MlpArchitecture a{j.at("input_dim").get<int>(), j.at("depth").get<int>(), j.at("width").get<int>(),
                      activation_from_string(j.at("activation").get<std::string>())};
    auto raw = read_f64_le(bin);
    if (static_cast<Eigen::Index>(raw.size()) != a.param_count()) throw FormatError("parameter file length mismatch");
    return ParamVector(a, Eigen::Map<Eigen::VectorXd>(raw.data(), static_cast<Eigen::Index>(raw.size())));
}

}  // namespace ntktst
