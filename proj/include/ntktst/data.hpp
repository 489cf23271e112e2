#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <json.hpp>

namespace ntktst {

struct GaussianComponent {
    double weight;
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

class GaussianMixture {
public:
    explicit GaussianMixture(std::vector<GaussianComponent> components);

    int dim() const noexcept { return dim_; }
    const std::vector<GaussianComponent>& components() const noexcept { return comps_; }

    double density(const Eigen::Ref<const Eigen::VectorXd>& x) const;
    double log_density(const Eigen::Ref<const Eigen::VectorXd>& x) const;
    // Row-wise log density of an n×d matrix.
    Eigen::VectorXd log_density_rows(const Eigen::Ref<const Eigen::MatrixXd>& x) const;

    Eigen::VectorXd mean() const;
    const Eigen::MatrixXd& chol(std::size_t i) const { return lower_[i]; }

private:
    std::vector<GaussianComponent> comps_;
    std::vector<Eigen::MatrixXd> lower_;
    std::vector<double> log_norm_;
    int dim_ = 0;
};

enum class Source { P, Q, Pooled };
std::string to_string(Source s);
Source source_from_string(const std::string& s);

struct SampleSet {
    SampleSet(Eigen::MatrixXd points, Source source, std::uint64_t seed);

    Eigen::Index size() const noexcept { return points.rows(); }
    Eigen::Index dim() const noexcept { return points.cols(); }

    Eigen::MatrixXd points;
    Source source;
    std::uint64_t seed;
};

SampleSet sample(const GaussianMixture& dist, Eigen::Index n, std::uint64_t seed, Source tag = Source::P);

// Row-stacks a then b; the caller tracks the split sizes.
SampleSet pool(const SampleSet& a, const SampleSet& b);

class DensityPair {
public:
    DensityPair(GaussianMixture p, GaussianMixture q);

    int dim() const noexcept { return p_.dim(); }
    const GaussianMixture& p() const noexcept { return p_; }
    const GaussianMixture& q() const noexcept { return q_; }

    double witness(const Eigen::Ref<const Eigen::VectorXd>& x) const;
    Eigen::VectorXd witness_rows(const Eigen::Ref<const Eigen::MatrixXd>& x) const;

    DensityPair swapped() const { return DensityPair(q_, p_); }
    // Null problem: both sides equal to p.
    DensityPair null_of() const { return DensityPair(p_, p_); }

private:
    GaussianMixture p_;
    GaussianMixture q_;
};

DensityPair make_hard_problem(int d);
DensityPair make_mean_shift(const Eigen::VectorXd& mu1, const Eigen::VectorXd& mu2, const Eigen::MatrixXd& cov);

nlohmann::json to_json(const DensityPair& pair);
DensityPair density_pair_from_json(const nlohmann::json& j);

// CSV with header x0..x{d-1} plus <path>.json sidecar {format_version, source, seed, n, d}.
void write_samples(const SampleSet& s, const std::filesystem::path& csv);
SampleSet read_samples(const std::filesystem::path& csv);

}  // namespace ntktst
