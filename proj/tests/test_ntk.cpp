#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "ntktst/bounds.hpp"
#include "ntktst/dynamics.hpp"
#include "ntktst/ntk.hpp"
#include "support.hpp"

using namespace ntktst;
using testing::normal_matrix;
using testing::normal_vector;
using testing::TinyProblem;

namespace {
QuadratureMeasure hand_quadrature(const Eigen::MatrixXd& pts) {
    const Eigen::Index m = pts.rows();
    return {pts, Eigen::VectorXd::Constant(m, 2.0 / static_cast<double>(m)), m / 2};
}

double min_eigenvalue(const Eigen::MatrixXd& k) { return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(k).eigenvalues()[0]; }
}  // namespace

TEST_CASE("quadrature has mass two, half of it from each density") {
    auto pair = make_hard_problem(3);
    auto quad = build_quadrature(pair, 400, 1);
    CHECK(quad.weights.sum() == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(quad.p_count == 200);
    CHECK(quad.inner(Eigen::VectorXd::Ones(400), Eigen::VectorXd::Ones(400)) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK_THROWS(build_quadrature(pair, 401, 1));
    CHECK_THROWS(build_quadrature(pair, 0, 1));
}

TEST_CASE("witness norm agrees with a ten times larger quadrature") {
    auto pair = make_mean_shift(Eigen::Vector2d(1, 0), Eigen::Vector2d(-1, 0), Eigen::Matrix2d::Identity());
    auto small = build_quadrature(pair, 2000, 1), large = build_quadrature(pair, 20000, 2);
    Eigen::VectorXd ws = pair.witness_rows(small.points).array().square();
    Eigen::VectorXd wl = pair.witness_rows(large.points).array().square();
    const double est = small.weights.dot(ws), ref = large.weights.dot(wl);
    // Each weight is 2/m, so the estimate is 2·mean(f*²) and its standard error follows.
    const double se = 2.0 * std::sqrt((ws.array() - ws.mean()).square().sum() / (2000.0 * 1999.0));
    CHECK(std::abs(est - ref) <= 3.0 * se);
}

TEST_CASE("gram is symmetric, PSD, with squared gradient norms on the diagonal") {
    TinyProblem tp(1);
    auto quad = hand_quadrature(tp.quad.points.topRows(120));
    auto net = tp.net0.with_values(tp.net0.values() + normal_vector(tp.net0.param_count(), 2, 0.2));
    auto g = gram(net, KernelTag::Kt, quad);
    CHECK(g.tag == KernelTag::Kt);
    CHECK((g.k - g.k.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
    for (Eigen::Index i = 0; i < 120; i += 17)
        CHECK(g.k(i, i) == doctest::Approx(net.grad(quad.points.row(i).transpose()).squaredNorm()).epsilon(1e-12));
    CHECK(min_eigenvalue(g.k) >= -1e-8 * g.k.cwiseAbs().maxCoeff());
}

TEST_CASE("toy net gram has the closed form from its gradients") {
    LinearToyNet net(normal_vector(6, 1), normal_matrix(6, 3, 2), normal_vector(6, 3));
    auto quad = hand_quadrature(normal_matrix(10, 3, 4));
    auto g = gram(net, KernelTag::K0, quad);
    const double m2 = 36.0, a2 = net.a().squaredNorm();
    for (Eigen::Index i = 0; i < 10; ++i)
        for (Eigen::Index j = 0; j < 10; ++j) {
            Eigen::VectorXd xi = quad.points.row(i), xj = quad.points.row(j);
            const double expect = ((net.w() * xi + net.b()).dot(net.w() * xj + net.b()) + a2 * (xi.dot(xj) + 1.0)) / m2;
            CHECK(g.k(i, j) == doctest::Approx(expect).epsilon(1e-12));
        }
}

TEST_CASE("rank-one kernel has a single eigenvalue equal to the weighted norm") {
    auto quad = hand_quadrature(normal_matrix(30, 2, 1));
    Eigen::VectorXd g = quad.points.col(0).array().sin() + 0.3;
    auto spec = spectrum({g * g.transpose(), KernelTag::K0}, quad);
    REQUIRE(spec.rank() == 1);
    CHECK(spec.lambda[0] == doctest::Approx(quad.inner(g, g)).epsilon(1e-12));
}

TEST_CASE("spectrum reconstructs the kernel with quadrature-orthonormal eigenfunctions") {
    TinyProblem tp(2);
    auto quad = hand_quadrature(tp.quad.points.topRows(80));
    auto g = gram(tp.net0, KernelTag::K0, quad);
    auto spec = spectrum(g, quad);
    CHECK(spec.rank() <= tp.net0.param_count());
    for (Eigen::Index l = 1; l < spec.rank(); ++l) CHECK(spec.lambda[l] <= spec.lambda[l - 1]);
    CHECK(spec.lambda.minCoeff() >= kRankTolerance * spec.lambda[0]);
    Eigen::MatrixXd gramian = spec.u.transpose() * quad.weights.asDiagonal() * spec.u;
    CHECK((gramian - Eigen::MatrixXd::Identity(spec.rank(), spec.rank())).cwiseAbs().maxCoeff() <= 1e-8);
    Eigen::MatrixXd rebuilt = spec.u * spec.lambda.asDiagonal() * spec.u.transpose();
    CHECK((rebuilt - g.k).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("feature path and gram path give the same eigenvalues") {
    TinyProblem tp(3);
    auto quad = hand_quadrature(tp.quad.points.topRows(300));
    auto via_gram = spectrum(gram(tp.net0, KernelTag::K0, quad), quad);
    auto via_features = spectrum_from_features(tp.net0.jacobian(quad.points), quad);
    REQUIRE(via_gram.rank() == via_features.rank());
    CHECK((via_gram.lambda - via_features.lambda).cwiseAbs().maxCoeff() <= 1e-9 * via_gram.lambda[0]);
    Eigen::MatrixXd gramian = via_features.u.transpose() * quad.weights.asDiagonal() * via_features.u;
    CHECK((gramian - Eigen::MatrixXd::Identity(gramian.rows(), gramian.cols())).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("spectrum is invariant under reordering the quadrature points") {
    TinyProblem tp(4);
    auto quad = hand_quadrature(tp.quad.points.topRows(90));
    std::vector<Eigen::Index> perm(90);
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::reverse(perm.begin(), perm.end());
    std::swap(perm[3], perm[50]);
    Eigen::MatrixXd shuffled(90, 2);
    for (Eigen::Index i = 0; i < 90; ++i) shuffled.row(i) = quad.points.row(perm[static_cast<std::size_t>(i)]);
    auto a = spectrum(gram(tp.net0, KernelTag::K0, quad), quad);
    auto b = spectrum(gram(tp.net0, KernelTag::K0, hand_quadrature(shuffled)), hand_quadrature(shuffled));
    REQUIRE(a.rank() == b.rank());
    CHECK((a.lambda - b.lambda).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("witness projection") {
    TinyProblem tp(5);
    auto spec = ntk_spectrum(tp.net0, tp.quad);
    auto proj = project_witness(spec, tp.witness, tp.quad);
    CHECK(proj.norm_pi == doctest::Approx(proj.coeffs.squaredNorm()).epsilon(1e-12));
    CHECK(proj.norm_pi <= proj.witness_norm2 + 1e-9);
    CHECK(proj.witness_norm2 == doctest::Approx(tp.quad.inner(tp.witness, tp.witness)).epsilon(1e-12));
    const Eigen::Index some[] = {0, 2, 5};
    CHECK(proj.norm_subset(some) <= proj.norm_pi);
    CHECK(proj.prefix_norm(spec.rank()) == doctest::Approx(proj.norm_pi));

    auto null_pair = tp.pair.null_of();
    auto null_proj = project_witness(spec, null_pair, tp.quad);
    CHECK(null_proj.coeffs.cwiseAbs().maxCoeff() == 0.0);
    CHECK(null_proj.norm_pi == 0.0);
}

TEST_CASE("projected witness norm is stable under resampling the quadrature") {
    auto pair = make_mean_shift(Eigen::Vector2d(1, 0), Eigen::Vector2d(-1, 0), Eigen::Matrix2d::Identity());
    auto net = init_symmetric({2, 2, 8, Activation::Tanh}, 1);
    auto qa = build_quadrature(pair, 4000, 2), qb = build_quadrature(pair, 4000, 3);
    const double a = project_witness(ntk_spectrum(net, qa), pair, qa).norm_pi;
    const double b = project_witness(ntk_spectrum(net, qb), pair, qb).norm_pi;
    CHECK(std::abs(a - b) <= 0.1 * std::max(a, b));
}

TEST_CASE("kernel drift along the population flow stays under 2 L1 L2 sqrt(t) |f*|") {
    TinyProblem tp(6);
    auto consts = estimate_constants(tp.net0, tp.quad, TinyProblem::kRadius, TinyProblem::kExponent, 8, 7);
    const double fnorm = std::sqrt(tp.quad.inner(tp.witness, tp.witness));
    auto sub = hand_quadrature(tp.quad.points.topRows(400));
    auto k0 = gram(tp.net0, KernelTag::K0, sub).k;
    auto traj = train_trajectory(Regime::Population, tp.net0, population_data(tp.witness, tp.quad), 1e-3, 0.5, 100);
    for (std::size_t i = 1; i < traj.snaps.size(); ++i) {
        const double t = traj.snaps[i].t;
        auto kt = gram(traj.net_at(i), KernelTag::Kt, sub).k;
        CHECK(weighted_operator_norm(kt - k0, sub) <= 2.0 * consts.l1 * consts.l2 * std::sqrt(t) * fnorm);
    }
}

TEST_CASE("spectra and grams export") {
    TinyProblem tp(7);
    auto spec = ntk_spectrum(tp.net0, tp.quad);
    auto proj = project_witness(spec, tp.witness, tp.quad);
    auto dir = std::filesystem::temp_directory_path() / "ntktst_test_ntk";
    std::filesystem::create_directories(dir);
    write_spectrum_csv(spec, proj, dir / "spec.csv");
    auto table = read_csv(dir / "spec.csv");
    CHECK(table.header == std::vector<std::string>{"ell", "lambda", "coeff"});
    CHECK(table.rows.size() == static_cast<std::size_t>(spec.rank()));
    auto sub = hand_quadrature(tp.quad.points.topRows(10));
    auto g = gram(tp.net0, KernelTag::K0, sub);
    dump_gram(g, dir / "gram.bin");
    CHECK(read_f64_le(dir / "gram.bin").size() == 100);
}
