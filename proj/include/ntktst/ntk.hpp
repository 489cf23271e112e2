#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include <Eigen/Core>

#include "ntktst/data.hpp"
#include "ntktst/network.hpp"

namespace ntktst {

// Monte Carlo discretization of the measure p+q (total mass 2). The first
// p_count rows are drawn from p, the rest from q.
struct QuadratureMeasure {
    Eigen::MatrixXd points;
    Eigen::VectorXd weights;
    Eigen::Index p_count = 0;

    Eigen::Index size() const noexcept { return points.rows(); }
    double inner(const Eigen::VectorXd& f, const Eigen::VectorXd& g) const { return (weights.array() * f.array() * g.array()).sum(); }
};

QuadratureMeasure build_quadrature(const DensityPair& pair, Eigen::Index m, std::uint64_t seed);

enum class KernelTag { K0, Kt, KtHat };
std::string to_string(KernelTag t);

struct KernelGram {
    Eigen::MatrixXd k;
    KernelTag tag = KernelTag::K0;
};

template <Model M>
KernelGram gram(const M& net, KernelTag tag, const QuadratureMeasure& quad) {
    Eigen::MatrixXd g = net.jacobian(quad.points);
    KernelGram out{Eigen::MatrixXd(g.rows(), g.rows()), tag};
    out.k.triangularView<Eigen::Lower>() = g * g.transpose();
    out.k = out.k.selfadjointView<Eigen::Lower>();
    return out;
}

// Largest |eigenvalue| of the integral operator with kernel k under the quadrature weights.
double weighted_operator_norm(const Eigen::MatrixXd& k, const QuadratureMeasure& quad);

struct Spectrum {
    Eigen::VectorXd lambda;  // non-increasing, all above the rank cutoff
    Eigen::MatrixXd u;       // u(i, l) = u_l(x_i), orthonormal under the quadrature weights

    Eigen::Index rank() const noexcept { return lambda.size(); }
};

inline constexpr double kRankTolerance = 1e-10;

Spectrum spectrum(const KernelGram& g, const QuadratureMeasure& quad);
// Same eigenpairs from a thin SVD of the m×M_Θ gradient matrix; cheaper than
// the Gram path when m ≫ M_Θ.
Spectrum spectrum_from_features(const Eigen::MatrixXd& grads, const QuadratureMeasure& quad);

template <Model M>
Spectrum ntk_spectrum(const M& net, const QuadratureMeasure& quad) {
    Eigen::MatrixXd g = net.jacobian(quad.points);
    if (g.cols() < g.rows()) return spectrum_from_features(g, quad);
    return spectrum(gram(net, KernelTag::K0, quad), quad);
}

struct WitnessProjection {
    Eigen::VectorXd coeffs;    // c_l = <u_l, f*>
    double norm_pi = 0.0;      // Σ c_l²
    double witness_norm2 = 0.0;  // ‖f*‖² under the quadrature

    double norm_subset(std::span<const Eigen::Index> subset) const;
    // Σ_{l<k} c_l², the mass of the leading k modes.
    double prefix_norm(Eigen::Index k) const { return coeffs.head(k).squaredNorm(); }
};

WitnessProjection project_witness(const Spectrum& spec, const Eigen::VectorXd& witness_at_quad,
                                  const QuadratureMeasure& quad);
WitnessProjection project_witness(const Spectrum& spec, const DensityPair& pair, const QuadratureMeasure& quad);

void write_spectrum_csv(const Spectrum& spec, const WitnessProjection& proj, const std::filesystem::path& csv);
void dump_gram(const KernelGram& g, const std::filesystem::path& bin);

}  // namespace ntktst
