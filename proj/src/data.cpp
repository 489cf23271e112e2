#include "ntktst/data.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "ntktst/error.hpp"
#include "ntktst/io.hpp"
#include "ntktst/rng.hpp"

namespace ntktst {

GaussianMixture::GaussianMixture(std::vector<GaussianComponent> components) : comps_(std::move(components)) {
    if (comps_.empty()) throw std::invalid_argument("mixture needs at least one component");
    dim_ = static_cast<int>(comps_.front().mean.size());
    if (dim_ < 1) throw std::invalid_argument("mixture dimension must be positive");
    double total = 0.0;
    for (const auto& c : comps_) {
        if (!(c.weight > 0.0)) throw std::invalid_argument("mixture weights must be positive");
        if (c.mean.size() != dim_ || c.cov.rows() != dim_ || c.cov.cols() != dim_)
            throw std::invalid_argument("mixture component dimension mismatch");
        if (!c.cov.isApprox(c.cov.transpose(), 1e-12)) throw std::invalid_argument("covariance not symmetric");
        Eigen::LLT<Eigen::MatrixXd> llt(c.cov);
        if (llt.info() != Eigen::Success) throw std::invalid_argument("covariance not positive definite");
        Eigen::MatrixXd lower = llt.matrixL();
        double logdet = 2.0 * lower.diagonal().array().log().sum();
        lower_.push_back(std::move(lower));
        log_norm_.push_back(std::log(c.weight) - 0.5 * (dim_ * std::log(2.0 * std::numbers::pi) + logdet));
        total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("mixture weights must sum to 1");
}

double GaussianMixture::log_density(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    if (x.size() != dim_) throw std::invalid_argument("density: dimension mismatch");
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(comps_.size());
    for (std::size_t i = 0; i < comps_.size(); ++i) {
        Eigen::VectorXd z = lower_[i].triangularView<Eigen::Lower>().solve(x - comps_[i].mean);
        terms[i] = log_norm_[i] - 0.5 * z.squaredNorm();
        best = std::max(best, terms[i]);
    }
    double s = 0.0;
    for (double t : terms) s += std::exp(t - best);
    return best + std::log(s);
}

double GaussianMixture::density(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return std::exp(log_density(x));
}

Eigen::VectorXd GaussianMixture::log_density_rows(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
    Eigen::VectorXd out(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) out[r] = log_density(x.row(r).transpose());
    return out;
}

Eigen::VectorXd GaussianMixture::mean() const {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(dim_);
    for (const auto& c : comps_) m += c.weight * c.mean;
    return m;
}

std::string to_string(Source s) {
    switch (s) {
        case Source::P: return "P";
        case Source::Q: return "Q";
        case Source::Pooled: return "Pooled";
    }
    return "?";
}

Source source_from_string(const std::string& s) {
    if (s == "P") return Source::P;
    if (s == "Q") return Source::Q;
    if (s == "Pooled") return Source::Pooled;
    throw FormatError("unknown sample source " + s);
}

SampleSet::SampleSet(Eigen::MatrixXd pts, Source src, std::uint64_t sd)
    : points(std::move(pts)), source(src), seed(sd) {
    if (points.rows() < 1) throw std::invalid_argument("sample set must be nonempty");
    if (!points.allFinite()) throw std::invalid_argument("sample set has non-finite entries");
}

SampleSet sample(const GaussianMixture& dist, Eigen::Index n, std::uint64_t seed, Source tag) {
    if (n < 1) throw std::invalid_argument("sample: n must be positive");
    Philox gen(seed);
    std::normal_distribution<double> normal;
    const auto& comps = dist.components();
    Eigen::MatrixXd pts(n, dist.dim());
    Eigen::VectorXd z(dist.dim());
    for (Eigen::Index r = 0; r < n; ++r) {
        double u = gen.uniform();
        std::size_t k = 0;
        for (double acc = comps[0].weight; k + 1 < comps.size() && u >= acc; acc += comps[++k].weight) {
        }
        for (int j = 0; j < dist.dim(); ++j) z[j] = normal(gen);
        pts.row(r) = (comps[k].mean + dist.chol(k) * z).transpose();
    }
    return SampleSet(std::move(pts), tag, seed);
}

SampleSet pool(const SampleSet& a, const SampleSet& b) {
    if (a.dim() != b.dim()) throw std::invalid_argument("pool: dimension mismatch");
    Eigen::MatrixXd pts(a.size() + b.size(), a.dim());
    pts << a.points, b.points;
    return SampleSet(std::move(pts), Source::Pooled, a.seed);
}

DensityPair::DensityPair(GaussianMixture p, GaussianMixture q) : p_(std::move(p)), q_(std::move(q)) {
    if (p_.dim() != q_.dim()) throw std::invalid_argument("density pair dimension mismatch");
}

double DensityPair::witness(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    // (p-q)/(p+q) = tanh((log p - log q)/2), stable where both densities underflow.
    return std::tanh(0.5 * (p_.log_density(x) - q_.log_density(x)));
}

Eigen::VectorXd DensityPair::witness_rows(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
    Eigen::VectorXd out(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) out[r] = witness(x.row(r).transpose());
    return out;
}

DensityPair make_hard_problem(int d) {
    if (d < 2) throw std::invalid_argument("hard problem needs d >= 2");
    Eigen::VectorXd m1 = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd m2 = Eigen::VectorXd::Constant(d, 0.5);
    Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
    auto tilted = [&](double off) {
        Eigen::MatrixXd c = eye;
        c(0, 1) = c(1, 0) = off;
        return c;
    };
    GaussianMixture p({{0.5, m1, eye}, {0.5, m2, eye}});
    GaussianMixture q({{0.5, m1, tilted(0.5)}, {0.5, m2, tilted(-0.5)}});
    return DensityPair(std::move(p), std::move(q));
}

DensityPair make_mean_shift(const Eigen::VectorXd& mu1, const Eigen::VectorXd& mu2, const Eigen::MatrixXd& cov) {
    if (mu1.size() != mu2.size()) throw std::invalid_argument("mean shift: mean dimensions differ");
    return DensityPair(GaussianMixture({{1.0, mu1, cov}}), GaussianMixture({{1.0, mu2, cov}}));
}

namespace {

nlohmann::json mixture_json(const GaussianMixture& g) {
    auto arr = nlohmann::json::array();
    for (const auto& c : g.components()) {
        std::vector<double> mean(c.mean.data(), c.mean.data() + c.mean.size());
        std::vector<std::vector<double>> cov;
        for (Eigen::Index r = 0; r < c.cov.rows(); ++r) {
            std::vector<double> row(c.cov.cols());
            for (Eigen::Index k = 0; k < c.cov.cols(); ++k) row[k] = c.cov(r, k);
            cov.push_back(std::move(row));
        }
        arr.push_back({{"w", c.weight}, {"mean", mean}, {"cov", cov}});
    }
    return arr;
}

GaussianMixture mixture_from_json(const nlohmann::json& arr, int d) {
    std::vector<GaussianComponent> comps;
    for (const auto& c : arr) {
        auto mean = c.at("mean").get<std::vector<double>>();
        auto cov = c.at("cov").get<std::vector<std::vector<double>>>();
        if (static_cast<int>(mean.size()) != d || static_cast<int>(cov.size()) != d)
            throw FormatError("density pair: component dimension differs from d");
        GaussianComponent gc{c.at("w").get<double>(), Eigen::Map<Eigen::VectorXd>(mean.data(), d),
                             Eigen::MatrixXd(d, d)};
        for (int r = 0; r < d; ++r) {
            if (static_cast<int>(cov[r].size()) != d) throw FormatError("density pair: ragged covariance");
            for (int k = 0; k < d; ++k) gc.cov(r, k) = cov[r][k];
        }
        comps.push_back(std::move(gc));
    }
    return GaussianMixture(std::move(comps));
}

}  // namespace

nlohmann::json to_json(const DensityPair& pair) {
    return {{"format_version", kFormatVersion},
            {"d", pair.dim()},
            {"p", mixture_json(pair.p())},
            {"q", mixture_json(pair.q())}};
}

DensityPair density_pair_from_json(const nlohmann::json& j) {
    // Hand-written pair files may omit the version; a present one must match.
    if (j.contains("format_version")) check_format_version(j, "density pair");
    int d = j.at("d").get<int>();
    return DensityPair(mixture_from_json(j.at("p"), d), mixture_from_json(j.at("q"), d));
}

void write_samples(const SampleSet& s, const std::filesystem::path& csv) {
    std::vector<std::string> header;
    for (Eigen::Index k = 0; k < s.dim(); ++k) header.push_back("x" + std::to_string(k));
    {
        CsvWriter w(csv, header);
        std::vector<double> row(s.dim());
        for (Eigen::Index r = 0; r < s.size(); ++r) {
            for (Eigen::Index k = 0; k < s.dim(); ++k) row[k] = s.points(r, k);
            w.row(row);
        }
    }
    auto side = csv;
    side += ".json";
    write_json(side, {{"source", to_string(s.source)}, {"seed", s.seed}, {"n", s.size()}, {"d", s.dim()}});
}

SampleSet read_samples(const std::filesystem::path& csv) {
    auto side = csv;
    side += ".json";
    auto meta = read_versioned_json(side);
    auto table = read_csv(csv);
    auto n = meta.at("n").get<Eigen::Index>();
    if (static_cast<Eigen::Index>(table.rows.size()) != n) throw FormatError("sample count differs from sidecar");
    Eigen::MatrixXd pts(n, static_cast<Eigen::Index>(table.header.size()));
    for (Eigen::Index r = 0; r < n; ++r)
        for (std::size_t k = 0; k < table.header.size(); ++k) pts(r, static_cast<Eigen::Index>(k)) = std::stod(table.rows[r][k]);
    return SampleSet(std::move(pts), source_from_string(meta.at("source").get<std::string>()),
                     meta.at("seed").get<std::uint64_t>());
}

}  // namespace ntktst
