#include "ntktst/ntk.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "ntktst/error.hpp"
#include "ntktst/io.hpp"
#include "ntktst/rng.hpp"

namespace ntktst {

QuadratureMeasure build_quadrature(const DensityPair& pair, Eigen::Index m, std::uint64_t seed) {
    if (m < 2 || m % 2 != 0) throw std::invalid_argument("quadrature size must be even and at least 2");
    auto ps = sample(pair.p(), m / 2, derive_seed(seed, {1}), Source::P);
    auto qs = sample(pair.q(), m / 2, derive_seed(seed, {2}), Source::Q);
    QuadratureMeasure quad;
    quad.points.resize(m, pair.dim());
    quad.points << ps.points, qs.points;
    quad.weights = Eigen::VectorXd::Constant(m, 2.0 / static_cast<double>(m));
    quad.p_count = m / 2;
    return quad;
}

std::string to_string(KernelTag t) {
    switch (t) {
        case KernelTag::K0: return "K0";
        case KernelTag::Kt: return "Kt";
        case KernelTag::KtHat: return "KtHat";
    }
    return "?";
}

double weighted_operator_norm(const Eigen::MatrixXd& k, const QuadratureMeasure& quad) {
    Eigen::VectorXd s = quad.weights.array().sqrt();
    Eigen::MatrixXd a = s.asDiagonal() * k * s.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericalError("eigen-solver failed");
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

namespace {

// Keeps eigenpairs above the relative cutoff, largest first.
std::vector<Eigen::Index> kept_indices(const Eigen::VectorXd& ascending) {
    std::vector<Eigen::Index> keep;
    const double top = ascending.size() ? ascending[ascending.size() - 1] : 0.0;
    if (!(top > 0.0)) return keep;
    for (Eigen::Index i = ascending.size() - 1; i >= 0; --i)
        if (ascending[i] > kRankTolerance * top) keep.push_back(i);
    return keep;
}

}  // namespace

Spectrum spectrum(const KernelGram& g, const QuadratureMeasure& quad) {
    if (g.k.rows() != quad.size() || g.k.cols() != quad.size()) throw std::invalid_argument("gram size differs from quadrature");
    Eigen::VectorXd s = quad.weights.array().sqrt();
    Eigen::MatrixXd a = s.asDiagonal() * g.k * s.asDiagonal();
    a = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    if (es.info() != Eigen::Success) throw NumericalError("eigen-solver failed");
    auto keep = kept_indices(es.eigenvalues());
    Spectrum out;
    out.lambda.resize(static_cast<Eigen::Index>(keep.size()));
    out.u.resize(quad.size(), out.lambda.size());
    Eigen::VectorXd inv_s = s.cwiseInverse();
    for (std::size_t l = 0; l < keep.size(); ++l) {
        const auto j = static_cast<Eigen::Index>(l);
        out.lambda[j] = es.eigenvalues()[keep[l]];
        out.u.col(j) = inv_s.cwiseProduct(es.eigenvectors().col(keep[l]));
    }
    return out;
}

Spectrum spectrum_from_features(const Eigen::MatrixXd& grads, const QuadratureMeasure& quad) {
    if (grads.rows() != quad.size()) throw std::invalid_argument("gradient rows differ from quadrature size");
    // D^{1/2}G = V S Qᵀ gives D^{1/2}KD^{1/2} = V S² Vᵀ without forming the m×m Gram,
    // and the left singular vectors stay orthonormal even for tiny singular values.
    Eigen::VectorXd s = quad.weights.array().sqrt();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(s.asDiagonal() * grads, Eigen::ComputeThinU);
    if (svd.info() != Eigen::Success) throw NumericalError("singular value decomposition failed");
    const Eigen::VectorXd lam = svd.singularValues().array().square();
    Eigen::Index rank = 0;
    while (rank < lam.size() && lam[rank] > kRankTolerance * lam[0]) ++rank;
    Spectrum out;
    out.lambda = lam.head(rank);
    out.u = s.cwiseInverse().asDiagonal() * svd.matrixU().leftCols(rank);
    return out;
}

double WitnessProjection::norm_subset(std::span<const Eigen::Index> subset) const {
    double s = 0.0;
    for (auto l : subset) {
        if (l < 0 || l >= coeffs.size()) throw std::out_of_range("subset index outside the spectrum");
        s += coeffs[l] * coeffs[l];
    }
    return s;
}

WitnessProjection project_witness(const Spectrum& spec, const Eigen::VectorXd& witness_at_quad,
                                  const QuadratureMeasure& quad) {
    if (witness_at_quad.size() != quad.size() || spec.u.rows() != quad.size())
        throw std::invalid_argument("projection inputs not built on the same quadrature");
    WitnessProjection proj;
    proj.coeffs = spec.u.transpose() * quad.weights.cwiseProduct(witness_at_quad);
    proj.norm_pi = proj.coeffs.squaredNorm();
    proj.witness_norm2 = quad.inner(witness_at_quad, witness_at_quad);
    return proj;
}

WitnessProjection project_witness(const Spectrum& spec, const DensityPair& pair, const QuadratureMeasure& quad) {
    return project_witness(spec, pair.witness_rows(quad.points), quad);
}

void write_spectrum_csv(const Spectrum& spec, const WitnessProjection& proj, const std::filesystem::path& csv) {
    CsvWriter w(csv, {"ell", "lambda", "coeff"});
    for (Eigen::Index l = 0; l < spec.rank(); ++l)
        w.row({static_cast<double>(l + 1), spec.lambda[l], proj.coeffs[l]});
}

void dump_gram(const KernelGram& g, const std::filesystem::path& bin) {
    write_f64_le(bin, std::span<const double>(g.k.data(), static_cast<std::size_t>(g.k.size())));
    auto header = bin;
    header += ".json";
    write_json(header, {{"rows", g.k.rows()}, {"cols", g.k.cols()}, {"tag", to_string(g.tag)}, {"layout", "column-major"},
                        {"encoding", "f64le"}});
}

}  // namespace ntktst
