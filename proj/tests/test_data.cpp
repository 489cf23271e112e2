#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "ntktst/data.hpp"
#include "ntktst/error.hpp"
#include "support.hpp"

using namespace ntktst;

namespace {
GaussianMixture standard_normal(int d) { return GaussianMixture({{1.0, Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Identity(d, d)}}); }

// Bivariate normal pdf written out by hand.
double pdf2(const Eigen::Vector2d& x, const Eigen::Vector2d& mu, double s11, double s12, double s22) {
    const double det = s11 * s22 - s12 * s12;
    const Eigen::Vector2d r = x - mu;
    const double quad = (s22 * r[0] * r[0] - 2 * s12 * r[0] * r[1] + s11 * r[1] * r[1]) / det;
    return std::exp(-0.5 * quad) / (2 * std::numbers::pi * std::sqrt(det));
}
}  // namespace

TEST_CASE("mixture construction validates weights and covariances") {
    CHECK_THROWS(GaussianMixture({{0.6, Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2)}}));
    CHECK_THROWS(GaussianMixture({{1.0, Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Zero(2, 2)}}));
    Eigen::Matrix2d asym;
    asym << 1, 0.5, 0, 1;
    CHECK_THROWS(GaussianMixture({{1.0, Eigen::VectorXd::Zero(2), asym}}));
    CHECK_THROWS(GaussianMixture({{1.0, Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(3, 3)}}));
}

TEST_CASE("density of the standard normal at zero") {
    CHECK(standard_normal(1).density(Eigen::VectorXd::Zero(1)) == doctest::Approx(0.3989422804014327).epsilon(1e-14));
    CHECK_THROWS(standard_normal(1).density(Eigen::VectorXd::Zero(2)));
}

TEST_CASE("identical components collapse to a single one") {
    auto one = standard_normal(3);
    GaussianMixture two({{0.5, Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3)},
                         {0.5, Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3)}});
    Eigen::Vector3d x(0.3, -1.0, 2.0);
    CHECK(two.density(x) == doctest::Approx(one.density(x)).epsilon(1e-14));
}

TEST_CASE("hard problem Q density at the origin matches the hand-written formula") {
    auto pair = make_hard_problem(2);
    const Eigen::Vector2d o(0, 0);
    const double direct = 0.5 * pdf2(o, {0, 0}, 1, 0.5, 1) + 0.5 * pdf2(o, {0.5, 0.5}, 1, -0.5, 1);
    CHECK(pair.q().density(o) == doctest::Approx(direct).epsilon(1e-13));
}

TEST_CASE("hard problem layout") {
    auto big = make_hard_problem(20);
    for (const auto& c : big.p().components()) CHECK(c.cov.isApprox(Eigen::MatrixXd::Identity(20, 20)));
    CHECK(big.p().components()[1].mean.isApprox(Eigen::VectorXd::Constant(20, 0.5)));

    auto small = make_hard_problem(2);
    Eigen::Matrix2d expect;
    expect << 1, 0.5, 0.5, 1;
    CHECK(small.q().components()[0].cov.isApprox(expect));
    CHECK(small.q().components()[1].cov(0, 1) == -0.5);
    for (const auto& c : small.q().components()) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c.cov);
        CHECK(es.eigenvalues()[0] == doctest::Approx(0.5));
        CHECK(es.eigenvalues()[1] == doctest::Approx(1.5));
    }
    CHECK_THROWS(make_hard_problem(1));
}

TEST_CASE("witness basics") {
    const Eigen::Vector2d mu1(1, 0), mu2(-1, 0);
    auto shift = make_mean_shift(mu1, mu2, Eigen::Matrix2d::Identity());
    CHECK(shift.witness(Eigen::Vector2d(0, 0)) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(shift.witness(mu1) > 0.0);
    auto same = make_mean_shift(mu1, mu1, Eigen::Matrix2d::Identity());
    CHECK(same.witness(Eigen::Vector2d(3, -2)) == 0.0);
    auto far = make_mean_shift(Eigen::Vector2d(0, 0), Eigen::Vector2d(40, 0), Eigen::Matrix2d::Identity());
    CHECK(far.witness(Eigen::Vector2d(0, 0)) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("witness equals the density ratio composed from density evaluations") {
    auto pair = make_hard_problem(5);
    auto pts = sample(pair.p(), 200, 3);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < pts.size(); ++i) {
        Eigen::VectorXd x = pts.points.row(i);
        const double p = pair.p().density(x), q = pair.q().density(x);
        worst = std::max(worst, std::abs(pair.witness(x) - (p - q) / (p + q)));
    }
    CHECK(worst <= 1e-14);
}

TEST_CASE("witness is bounded, antisymmetric under swap, and integrates to zero against p+q") {
    auto pair = make_hard_problem(4);
    auto xp = sample(pair.p(), 20000, 11, Source::P);
    auto xq = sample(pair.q(), 20000, 12, Source::Q);
    auto pooled = pool(xp, xq);
    Eigen::VectorXd w = pair.witness_rows(pooled.points);
    Eigen::VectorXd ws = pair.swapped().witness_rows(pooled.points);
    CHECK(w.cwiseAbs().maxCoeff() <= 1.0);
    CHECK((w + ws).cwiseAbs().maxCoeff() <= 1e-15);
    // ∫ f* d(p+q) ≈ mean_p f* + mean_q f*.
    const Eigen::VectorXd wp = w.head(20000), wq = w.tail(20000);
    const double est = wp.mean() + wq.mean();
    const double se = std::sqrt((wp.array() - wp.mean()).square().sum() / (20000.0 * 19999.0) +
                                (wq.array() - wq.mean()).square().sum() / (20000.0 * 19999.0));
    CHECK(std::abs(est) <= 3.0 * se);
}

TEST_CASE("sampling is deterministic, shaped, and unbiased") {
    auto pair = make_hard_problem(20);
    auto a = sample(pair.p(), 6000, 7);
    CHECK(a.size() == 6000);
    CHECK(a.dim() == 20);
    CHECK(a.points == sample(pair.p(), 6000, 7).points);
    CHECK(a.points != sample(pair.p(), 6000, 8).points);
    CHECK(a.points.allFinite());

    Eigen::Vector3d mu(1.0, -2.0, 0.5);
    GaussianMixture g({{1.0, mu, Eigen::Matrix3d::Identity()}});
    auto big = sample(g, 100000, 9);
    Eigen::VectorXd mean = big.points.colwise().mean();
    CHECK((mean - mu).cwiseAbs().maxCoeff() <= 0.02);
    CHECK_THROWS(sample(g, 0, 1));
}

TEST_CASE("sample sets reject empty and non-finite points") {
    CHECK_THROWS(SampleSet(Eigen::MatrixXd(0, 2), Source::P, 0));
    Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(2, 2);
    bad(1, 1) = std::nan("");
    CHECK_THROWS(SampleSet(bad, Source::P, 0));
}

TEST_CASE("density pairs and sample sets round-trip through files") {
    auto pair = make_hard_problem(3);
    auto back = density_pair_from_json(to_json(pair));
    Eigen::Vector3d x(0.1, 0.2, -0.3);
    CHECK(back.witness(x) == pair.witness(x));
    auto j = to_json(pair);
    j["format_version"] = 999;
    CHECK_THROWS_AS(density_pair_from_json(j), FormatError);

    auto dir = std::filesystem::temp_directory_path() / "ntktst_test_data";
    std::filesystem::create_directories(dir);
    auto s = sample(pair.q(), 17, 5, Source::Q);
    write_samples(s, dir / "s.csv");
    auto r = read_samples(dir / "s.csv");
    CHECK(r.points == s.points);
    CHECK(r.source == Source::Q);
    CHECK(r.seed == 5);
}
