#include "ntktst/dynamics.hpp"

#include <cmath>
#include <stdexcept>

namespace ntktst {

AuxiliaryState::AuxiliaryState(const Spectrum& spec, const WitnessProjection& proj)
    : AuxiliaryState(spec.lambda, proj.coeffs) {}

AuxiliaryState::AuxiliaryState(Eigen::VectorXd lam, Eigen::VectorXd coeffs) : lambda(std::move(lam)), e0(-coeffs) {
    if (lambda.size() != e0.size()) throw std::invalid_argument("eigenvalue and coefficient counts differ");
    if ((lambda.array() < 0.0).any()) throw std::invalid_argument("eigenvalues must be nonnegative");
}

Eigen::VectorXd aux_error_coeffs(const AuxiliaryState& s, double t) {
    if (!(t >= 0.0)) throw std::invalid_argument("time must be nonnegative");
    return ((-t * s.lambda.array()).exp() * s.e0.array()).matrix();
}

double aux_statistic(const AuxiliaryState& s, double t) {
    if (!(t >= 0.0)) throw std::invalid_argument("time must be nonnegative");
    double total = 0.0;
    for (Eigen::Index l = 0; l < s.lambda.size(); ++l) total += -std::expm1(-t * s.lambda[l]) * s.e0[l] * s.e0[l];
    return total;
}

Eigen::VectorXd ode_oracle(const AuxiliaryState& s, double t, double step) {
    if (!(step > 0.0)) throw std::invalid_argument("ode step must be positive");
    if (!(t >= 0.0)) throw std::invalid_argument("time must be nonnegative");
    const long n = static_cast<long>(std::ceil(t / step - 1e-12));
    Eigen::ArrayXd e = s.e0.array();
    if (n == 0) return e.matrix();
    const double h = t / static_cast<double>(n);
    const Eigen::ArrayXd rate = -s.lambda.array();
    for (long i = 0; i < n; ++i) {
        Eigen::ArrayXd k1 = rate * e;
        Eigen::ArrayXd k2 = rate * (e + 0.5 * h * k1);
        Eigen::ArrayXd k3 = rate * (e + 0.5 * h * k2);
        Eigen::ArrayXd k4 = rate * (e + h * k3);
        e += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return e.matrix();
}

Eigen::VectorXd aux_prediction(const AuxiliaryState& s, const Spectrum& spec, double t) {
    // ū = ē + Π f*, and Π f* has coefficients -e0.
    return spec.u * (aux_error_coeffs(s, t) - s.e0);
}

Eigen::VectorXd pointwise_ode_oracle(const Eigen::MatrixXd& k, const QuadratureMeasure& quad,
                                     const Eigen::VectorXd& e_start, double t, double step) {
    if (!(step > 0.0)) throw std::invalid_argument("ode step must be positive");
    const long n = static_cast<long>(std::ceil(t / step - 1e-12));
    Eigen::VectorXd e = e_start;
    if (n == 0) return e;
    const double h = t / static_cast<double>(n);
    const Eigen::MatrixXd op = -(k * quad.weights.asDiagonal());
    for (long i = 0; i < n; ++i) {
        Eigen::VectorXd k1 = op * e;
        Eigen::VectorXd k2 = op * (e + 0.5 * h * k1);
        Eigen::VectorXd k3 = op * (e + 0.5 * h * k2);
        Eigen::VectorXd k4 = op * (e + h * k3);
        e += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return e;
}

std::string to_string(Regime r) { return r == Regime::Realistic ? "realistic" : "population"; }

LabeledData population_data(const Eigen::VectorXd& witness_at_quad, const QuadratureMeasure& quad) {
    if (witness_at_quad.size() != quad.size()) throw std::invalid_argument("witness values differ from quadrature size");
    return {quad.points, witness_at_quad, 0.5 * quad.weights};
}

SignedMeasure two_sample_measure(const SampleSet& p_side, const SampleSet& q_side) {
    if (p_side.dim() != q_side.dim()) throw std::invalid_argument("evaluation sets differ in dimension");
    const Eigen::Index np = p_side.size(), nq = q_side.size();
    SignedMeasure m;
    m.points.resize(np + nq, p_side.dim());
    m.points << p_side.points, q_side.points;
    m.weights.resize(np + nq);
    m.weights << Eigen::VectorXd::Constant(np, 1.0 / static_cast<double>(np)),
        Eigen::VectorXd::Constant(nq, -1.0 / static_cast<double>(nq));
    return m;
}

SignedMeasure witness_measure(const Eigen::VectorXd& witness_at_quad, const QuadratureMeasure& quad) {
    if (witness_at_quad.size() != quad.size()) throw std::invalid_argument("witness values differ from quadrature size");
    return {quad.points, quad.weights.cwiseProduct(witness_at_quad)};
}

void write_statistic_path(const StatisticPath& path, const std::filesystem::path& csv) {
    CsvWriter w(csv, {"t", "statistic", "loss"});
    for (std::size_t i = 0; i < path.t.size(); ++i) w.row({path.t[i], path.value[i], path.loss[i]});
}

}  // namespace ntktst
