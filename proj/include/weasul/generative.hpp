#pragma once

// Matrix-completion label model with the expert-label penalty.
//
// The base loss is the Frobenius norm of (Sigma^-1 + z z^T) restricted to the
// conditionally independent pairs. Parameters z are turned into moments
// mu_j = E[psi_j * y] and from there into per-factor conditionals and a Bayes
// posterior p(y = 1 | weak labels).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "weasul/core_data.hpp"
#include "weasul/labeled_set.hpp"

namespace weasul {

struct FitConfig {
    double alpha = 1.0;
    bool auto_alpha = false;  // resolved by the caller via auto_alpha()
    double step_size = 0.1;
    std::size_t max_iters = 2000;
    double tolerance = 1e-7;
    std::uint64_t seed = 0;
    double epsilon = 1e-4;

    void validate() const;
};

struct GenerativeParams {
    Eigen::VectorXd z;
    double class_prior = 0.5;
    Eigen::VectorXd moments;  // E[psi_j * y]
    int sign = 1;
};

struct FitDiagnostics {
    std::vector<double> loss_trace;  // combined objective after each accepted step
    bool converged = false;
    double alpha = 0.0;
    std::size_t iterations = 0;
    double base_loss = 0.0;
    double penalty = 0.0;
};

struct FitResult {
    GenerativeParams params;
    FitDiagnostics diagnostics;
};

struct ProbabilisticLabels {
    std::vector<double> per_bucket;
    std::vector<double> per_point;
    std::size_t iteration = 0;
};

// Expert labels grouped by weak-label configuration: the penalty only depends
// on how many positives and negatives sit in each bucket.
struct PenaltyTerm {
    std::vector<std::vector<std::uint8_t>> configs;
    std::vector<double> positives;
    std::vector<double> negatives;

    [[nodiscard]] bool empty() const noexcept { return configs.empty(); }
};

PenaltyTerm make_penalty_term(const LabeledSet& labeled, const BucketIndex& buckets);

struct RecoveredMoments {
    Eigen::VectorXd moments;
    int sign = 1;
    double c = 0.0;
};

inline constexpr double kMinCouplingScale = 1e-12;

RecoveredMoments recover_moments(const Eigen::VectorXd& z, const MomentInput& mi, double prior);

double loss_base(const Eigen::VectorXd& z, const MomentInput& mi);
Eigen::VectorXd loss_base_gradient(const Eigen::VectorXd& z, const MomentInput& mi);

// Posterior p(y = 1 | config) given moments. Conditionals are clamped to
// [eps, 1 - eps] and renormalized within each factor.
double predict_from_moments(const Eigen::VectorXd& moments, std::span<const std::uint8_t> config,
                            const MomentInput& mi, double prior, double eps);

double predict_bucket(const GenerativeParams& params, std::span<const std::uint8_t> config,
                      const MomentInput& mi, double eps);

double penalty(const Eigen::VectorXd& z, const PenaltyTerm& term, const MomentInput& mi,
               double prior, double eps);
double penalty(const Eigen::VectorXd& z, const LabeledSet& labeled, const BucketIndex& buckets,
               const MomentInput& mi, double prior, double eps);

double objective(const Eigen::VectorXd& z, const MomentInput& mi, double prior,
                 const PenaltyTerm& term, double alpha, double eps);

// Gradient of objective(); the penalty part is differentiated through moment
// recovery, the clamped conditionals and the Bayes ratio.
Eigen::VectorXd gradient(const Eigen::VectorXd& z, const MomentInput& mi, double prior,
                         const PenaltyTerm& term, double alpha, double eps);

FitResult fit(const MomentInput& mi, double prior, const PenaltyTerm& term, const FitConfig& cfg,
              const std::optional<Eigen::VectorXd>& warm_start = std::nullopt);

GenerativeParams make_params(const Eigen::VectorXd& z, const MomentInput& mi, double prior);

// Largest central-difference second derivative over coordinates.
double max_curvature(const std::function<double(const Eigen::VectorXd&)>& loss,
                     const Eigen::VectorXd& z0, double h = 1e-4);

// Penalty weight that makes the penalty competitive with the base loss at z0,
// floored at 1.
double auto_alpha(const MomentInput& mi, const Eigen::VectorXd& z0);

ProbabilisticLabels make_probabilistic_labels(const GenerativeParams& params,
                                              const MomentInput& mi, const BucketIndex& buckets,
                                              double eps, std::size_t iteration);

}  // namespace weasul
