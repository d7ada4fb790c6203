#include "weasul/discriminative.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "weasul/errors.hpp"

namespace weasul {

SoftTargets make_targets(const std::vector<double>& per_point, const LabeledSet& labeled) {
    SoftTargets out{per_point, std::vector<bool>(per_point.size(), false)};
    for (std::size_t point : labeled.order()) {
        if (point >= per_point.size()) {
            throw Error(ErrorKind::UnknownPoint, "labelled point " + std::to_string(point) + " is unknown");
        }
        out.targets[point] = labeled.label(point);
        out.overridden[point] = true;
    }
    return out;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw Error(ErrorKind::InvalidArgument, "epochs must be >= 1");
    if (!(step > 0.0)) throw Error(ErrorKind::InvalidArgument, "step must be positive");
    if (!(val_fraction > 0.0 && val_fraction <= 0.5)) {
        throw Error(ErrorKind::InvalidArgument, "val_fraction must lie in (0, 0.5]");
    }
    if (!(l2 >= 0.0)) throw Error(ErrorKind::InvalidArgument, "l2 must be >= 0");
}

namespace {

double softplus(double a) { return a > 0.0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a)); }

double sigmoid(double a) {
    if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
    const double e = std::exp(a);
    return e / (1.0 + e);
}

// One backtracking gradient step. Returns the new loss; `step` carries the
// last accepted step size between calls.
double descend(Eigen::VectorXd& w, double& b, double& step, const Eigen::MatrixXd& x,
               const std::vector<double>& targets, double l2, const std::vector<std::size_t>& rows) {
    Eigen::VectorXd grad;
    const double current = soft_cross_entropy(w, b, x, targets, l2, rows, &grad);
    if (!std::isfinite(current) || !grad.allFinite()) {
        throw Error(ErrorKind::NonFinite, "cross-entropy or its gradient is not finite");
    }
    const Eigen::Index p = w.size();
    double trial = step * 2.0;
    for (int h = 0; h < 40; ++h, trial *= 0.5) {
        const Eigen::VectorXd w_new = w - trial * grad.head(p);
        const double b_new = b - trial * grad(p);
        const double value = soft_cross_entropy(w_new, b_new, x, targets, l2, rows);
        if (std::isfinite(value) && value < current) {
            w = w_new;
            b = b_new;
            step = trial;
            return value;
        }
    }
    return current;
}

}  // namespace

double soft_cross_entropy(const Eigen::VectorXd& weights, double bias, const Eigen::MatrixXd& x,
                          const std::vector<double>& targets, double l2,
                          const std::vector<std::size_t>& rows, Eigen::VectorXd* gradient) {
    if (weights.size() != x.cols() || targets.size() != static_cast<std::size_t>(x.rows())) {
        throw Error(ErrorKind::DimensionMismatch, "weights, features and targets do not line up");
    }
    const std::size_t count = rows.empty() ? targets.size() : rows.size();
    if (count == 0) throw Error(ErrorKind::EmptyInput, "no rows to evaluate");
    const Eigen::Index p = x.cols();
    if (gradient) gradient->setZero(p + 1);

    double total = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
        const std::size_t i = rows.empty() ? k : rows[k];
        const auto ii = static_cast<Eigen::Index>(i);
        const double a = x.row(ii).dot(weights) + bias;
        total += softplus(a) - targets[i] * a;
        if (gradient) {
            const double r = sigmoid(a) - targets[i];
            gradient->head(p) += r * x.row(ii).transpose();
            (*gradient)(p) += r;
        }
    }
    const auto n = static_cast<double>(count);
    if (gradient) {
        *gradient /= n;
        gradient->head(p) += l2 * weights;
    }
    return total / n + 0.5 * l2 * weights.squaredNorm();
}

LinearClassifier train_soft(const Eigen::MatrixXd& x, const SoftTargets& targets,
                            const TrainConfig& cfg) {
    cfg.validate();
    const std::size_t n = targets.targets.size();
    if (n < 10) throw Error(ErrorKind::InvalidArgument, "soft training needs at least 10 points");
    if (static_cast<std::size_t>(x.rows()) != n) {
        throw Error(ErrorKind::DimensionMismatch, "feature rows differ from target count");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(cfg.seed);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(cfg.val_fraction * static_cast<double>(n))));
    const std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
    std::sort(train.begin(), train.end());

    Eigen::VectorXd w = Eigen::VectorXd::Zero(x.cols());
    double b = 0.0;
    double step = cfg.step;

    LinearClassifier best{w, b, 0, soft_cross_entropy(w, b, x, targets.targets, 0.0, val)};
    std::size_t stale = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        descend(w, b, step, x, targets.targets, cfg.l2, train);
        const double val_loss = soft_cross_entropy(w, b, x, targets.targets, 0.0, val);
        best.epochs_run = epoch;
        if (val_loss < best.best_validation_loss) {
            best.weights = w;
            best.bias = b;
            best.best_validation_loss = val_loss;
            stale = 0;
        } else if (++stale >= cfg.patience) {
            break;
        }
    }
    return best;
}

LinearClassifier fit_logistic(const Eigen::MatrixXd& x, const std::vector<double>& targets,
                              double l2, std::size_t epochs, double step) {
    if (targets.empty()) throw Error(ErrorKind::EmptyInput, "no training points");
    Eigen::VectorXd w = Eigen::VectorXd::Zero(x.cols());
    double b = 0.0;
    double loss = 0.0;
    std::size_t epoch = 0;
    for (; epoch < epochs; ++epoch) {
        const double next = descend(w, b, step, x, targets, l2, {});
        if (epoch > 0 && loss - next < 1e-12) break;
        loss = next;
    }
    return LinearClassifier{w, b, epoch, loss};
}

std::vector<double> predict_proba(const LinearClassifier& model, const Eigen::MatrixXd& x) {
    if (model.weights.size() != x.cols()) {
        throw Error(ErrorKind::DimensionMismatch,
                    "model expects " + std::to_string(model.weights.size()) + " features, got " +
                        std::to_string(x.cols()));
    }
    std::vector<double> out(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        out[static_cast<std::size_t>(i)] = sigmoid(x.row(i).dot(model.weights) + model.bias);
    }
    return out;
}

}  // namespace weasul
