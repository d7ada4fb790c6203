#pragma once

// Noise-aware logistic regression trained on probabilistic labels.

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "weasul/labeled_set.hpp"

namespace weasul {

struct SoftTargets {
    std::vector<double> targets;
    std::vector<bool> overridden;  // true where the target is an expert label
};

// Expert labels replace probabilistic labels for the points in `labeled`.
SoftTargets make_targets(const std::vector<double>& per_point, const LabeledSet& labeled);

struct TrainConfig {
    std::size_t epochs = 100;
    double step = 0.1;
    std::size_t patience = 5;
    double val_fraction = 0.1;
    std::uint64_t seed = 0;
    double l2 = 1e-4;

    void validate() const;
};

struct LinearClassifier {
    Eigen::VectorXd weights;
    double bias = 0.0;
    std::size_t epochs_run = 0;
    double best_validation_loss = 0.0;
};

// Mean soft cross-entropy plus 0.5 * l2 * |w|^2 over the rows in `rows`
// (all rows when empty). Gradient layout: [weights..., bias].
double soft_cross_entropy(const Eigen::VectorXd& weights, double bias, const Eigen::MatrixXd& x,
                          const std::vector<double>& targets, double l2,
                          const std::vector<std::size_t>& rows = {},
                          Eigen::VectorXd* gradient = nullptr);

// Early-stopped training on a seeded hold-out drawn from the soft targets.
LinearClassifier train_soft(const Eigen::MatrixXd& x, const SoftTargets& targets,
                            const TrainConfig& cfg);

// Plain full-batch training on every row, no hold-out; used where only a
// handful of labelled points exist.
LinearClassifier fit_logistic(const Eigen::MatrixXd& x, const std::vector<double>& targets,
                              double l2, std::size_t epochs, double step);

std::vector<double> predict_proba(const LinearClassifier& model, const Eigen::MatrixXd& x);

}  // namespace weasul
