#include "weasul/generative.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "weasul/errors.hpp"

namespace weasul {

void FitConfig::validate() const {
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
        throw Error(ErrorKind::InvalidArgument, "alpha must be a finite value >= 0");
    }
    if (!(step_size > 0.0)) throw Error(ErrorKind::InvalidArgument, "step_size must be positive");
    if (max_iters < 1) throw Error(ErrorKind::InvalidArgument, "max_iters must be >= 1");
    if (!(tolerance >= 0.0)) throw Error(ErrorKind::InvalidArgument, "tolerance must be >= 0");
    if (!(epsilon > 0.0 && epsilon <= 0.01)) {
        throw Error(ErrorKind::InvalidArgument, "epsilon must lie in (0, 0.01]");
    }
}

namespace {

void check_prior(double prior) {
    if (!(prior > 0.0 && prior < 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "class prior must lie strictly inside (0, 1)");
    }
}

void check_dim(const Eigen::VectorXd& z, const MomentInput& mi) {
    const auto d = static_cast<Eigen::Index>(mi.dim());
    if (z.size() != d || mi.sigma_inv.rows() != d || mi.sigma_inv.cols() != d) {
        throw Error(ErrorKind::DimensionMismatch,
                    "parameter vector has length " + std::to_string(z.size()) +
                        " but the statistics have dimension " + std::to_string(d));
    }
}

// constant + sum(coef * mu[col]), divided by the class probability.
struct LinearForm {
    double constant = 0.0;
    std::array<std::size_t, 3> cols{};
    std::array<double, 3> coefs{};
    int terms = 0;

    LinearForm& add(std::size_t col, double coef) {
        cols[static_cast<std::size_t>(terms)] = col;
        coefs[static_cast<std::size_t>(terms)] = coef;
        ++terms;
        return *this;
    }
    [[nodiscard]] double eval(const Eigen::VectorXd& mu) const {
        double v = constant;
        for (int t = 0; t < terms; ++t) {
            v += coefs[static_cast<std::size_t>(t)] * mu(static_cast<Eigen::Index>(cols[static_cast<std::size_t>(t)]));
        }
        return v;
    }
};

struct FactorCells {
    std::array<LinearForm, 4> cells;
    int count = 0;
    double norm = 1.0;
};

// Joint cells of a factor with y, expressed through moments. Cell index for a
// singleton is lambda_j; for a pair it is 2 * lambda_a + lambda_b.
FactorCells factor_cells(const Factor& factor, int y, const Eigen::VectorXd& means, double prior) {
    FactorCells fc;
    fc.norm = y == 1 ? prior : 1.0 - prior;
    auto mean = [&](std::size_t col) { return means(static_cast<Eigen::Index>(col)); };

    if (factor.columns.size() == 1) {
        const std::size_t j = factor.columns[0];
        fc.count = 2;
        if (y == 1) {
            fc.cells[1] = LinearForm{}.add(j, 1.0);
            fc.cells[0] = LinearForm{prior}.add(j, -1.0);
        } else {
            fc.cells[1] = LinearForm{mean(j)}.add(j, -1.0);
            fc.cells[0] = LinearForm{1.0 - prior - mean(j)}.add(j, 1.0);
        }
        return fc;
    }

    const std::size_t a = factor.columns[0];
    const std::size_t b = factor.columns[1];
    const std::size_t k = factor.columns[2];
    fc.count = 4;
    if (y == 1) {
        fc.cells[3] = LinearForm{}.add(k, 1.0);
        fc.cells[2] = LinearForm{}.add(a, 1.0).add(k, -1.0);
        fc.cells[1] = LinearForm{}.add(b, 1.0).add(k, -1.0);
        fc.cells[0] = LinearForm{prior}.add(a, -1.0).add(b, -1.0).add(k, 1.0);
    } else {
        fc.cells[3] = LinearForm{mean(k)}.add(k, -1.0);
        fc.cells[2] = LinearForm{mean(a) - mean(k)}.add(a, -1.0).add(k, 1.0);
        fc.cells[1] = LinearForm{mean(b) - mean(k)}.add(b, -1.0).add(k, 1.0);
        fc.cells[0] = LinearForm{1.0 - prior - mean(a) - mean(b) + mean(k)}
                          .add(a, 1.0)
                          .add(b, 1.0)
                          .add(k, -1.0);
    }
    return fc;
}

std::size_t cell_of(const Factor& factor, std::span<const std::uint8_t> config) {
    if (factor.lfs.size() == 1) return config[factor.lfs[0]];
    return 2u * config[factor.lfs[0]] + config[factor.lfs[1]];
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Posterior and, optionally, its gradient with respect to the moments.
double posterior(const Eigen::VectorXd& mu, std::span<const std::uint8_t> config,
                 const MomentInput& mi, double prior, double eps, Eigen::VectorXd* dmu) {
    if (config.size() != mi.num_lfs) {
        throw Error(ErrorKind::DimensionMismatch,
                    "configuration has " + std::to_string(config.size()) + " entries, expected " +
                        std::to_string(mi.num_lfs));
    }
    double log_odds = std::log(prior) - std::log1p(-prior);
    if (dmu) dmu->setZero(mu.size());

    for (const Factor& factor : mi.factors) {
        const std::size_t observed = cell_of(factor, config);
        for (int y : {1, 0}) {
            const double direction = y == 1 ? 1.0 : -1.0;
            const FactorCells fc = factor_cells(factor, y, mi.col_means, prior);
            std::array<double, 4> clamped{};
            std::array<bool, 4> interior{};
            double total = 0.0;
            for (int c = 0; c < fc.count; ++c) {
                const auto cu = static_cast<std::size_t>(c);
                const double raw = fc.cells[cu].eval(mu) / fc.norm;
                interior[cu] = raw > eps && raw < 1.0 - eps;
                clamped[cu] = std::clamp(raw, eps, 1.0 - eps);
                total += clamped[cu];
            }
            log_odds += direction * (std::log(clamped[observed]) - std::log(total));

            if (!dmu) continue;
            // d log(u_o / sum u) = du_o / u_o - sum(du_c) / sum(u)
            for (int c = 0; c < fc.count; ++c) {
                const auto cu = static_cast<std::size_t>(c);
                if (!interior[cu]) continue;
                double weight = -1.0 / total;
                if (cu == observed) weight += 1.0 / clamped[cu];
                const LinearForm& form = fc.cells[cu];
                for (int t = 0; t < form.terms; ++t) {
                    const auto tu = static_cast<std::size_t>(t);
                    (*dmu)(static_cast<Eigen::Index>(form.cols[tu])) +=
                        direction * weight * form.coefs[tu] / fc.norm;
                }
            }
        }
    }

    const double p = sigmoid(log_odds);
    if (dmu) *dmu *= p * (1.0 - p);
    return p;
}

// d mu / d z for the recovery mu = sign * Sigma z / sqrt(c) + E[psi] * prior.
Eigen::MatrixXd moments_jacobian(const Eigen::VectorXd& z, const MomentInput& mi, double prior,
                                 const RecoveredMoments& rec) {
    const double label_var = prior * (1.0 - prior);
    const Eigen::VectorXd s = mi.sigma * z;
    const double sqrt_c = std::sqrt(rec.c);
    Eigen::MatrixXd jac = mi.sigma / sqrt_c;
    const double raw_c = (1.0 + z.dot(s)) / label_var;
    if (raw_c > kMinCouplingScale) {
        jac -= (s * s.transpose()) / (label_var * rec.c * sqrt_c);
    }
    return static_cast<double>(rec.sign) * jac;
}

}  // namespace

PenaltyTerm make_penalty_term(const LabeledSet& labeled, const BucketIndex& buckets) {
    PenaltyTerm term;
    std::vector<std::optional<std::size_t>> slot(buckets.size());
    for (std::size_t point : labeled.order()) {
        if (point >= buckets.point_to_bucket.size()) {
            throw Error(ErrorKind::UnknownPoint,
                        "labelled point " + std::to_string(point) + " is not in the dataset");
        }
        const std::size_t b = buckets.point_to_bucket[point];
        if (!slot[b]) {
            slot[b] = term.configs.size();
            const auto row = buckets.configs.row(b);
            term.configs.emplace_back(row.begin(), row.end());
            term.positives.push_back(0.0);
            term.negatives.push_back(0.0);
        }
        if (labeled.label(point) == 1) {
            term.positives[*slot[b]] += 1.0;
        } else {
            term.negatives[*slot[b]] += 1.0;
        }
    }
    return term;
}

RecoveredMoments recover_moments(const Eigen::VectorXd& z, const MomentInput& mi, double prior) {
    check_prior(prior);
    if (z.size() != static_cast<Eigen::Index>(mi.dim()) || mi.sigma.rows() != z.size()) {
        throw Error(ErrorKind::DimensionMismatch, "parameter vector does not match the statistics");
    }
    const double label_var = prior * (1.0 - prior);
    const Eigen::VectorXd s = mi.sigma * z;
    RecoveredMoments rec;
    rec.c = std::max((1.0 + z.dot(s)) / label_var, kMinCouplingScale);
    if (!std::isfinite(rec.c)) {
        throw Error(ErrorKind::NonFinite, "moment recovery produced a non-finite scale");
    }
    const Eigen::VectorXd cov = s / std::sqrt(rec.c);
    // Labelling functions are taken to be better than random on average.
    const double lf_sum = cov.head(static_cast<Eigen::Index>(mi.num_lfs)).sum();
    rec.sign = lf_sum >= 0.0 ? 1 : -1;
    rec.moments = static_cast<double>(rec.sign) * cov + mi.col_means * prior;
    if (!rec.moments.allFinite()) {
        throw Error(ErrorKind::NonFinite, "moment recovery produced non-finite moments");
    }
    return rec;
}

double loss_base(const Eigen::VectorXd& z, const MomentInput& mi) {
    check_dim(z, mi);
    double sum = 0.0;
    for (const auto& [i, j] : mi.omega) {
        const auto ii = static_cast<Eigen::Index>(i);
        const auto jj = static_cast<Eigen::Index>(j);
        const double r = mi.sigma_inv(ii, jj) + z(ii) * z(jj);
        sum += r * r;
    }
    return std::sqrt(sum);
}

Eigen::VectorXd loss_base_gradient(const Eigen::VectorXd& z, const MomentInput& mi) {
    const double loss = loss_base(z, mi);
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(z.size());
    if (loss == 0.0) return grad;
    for (const auto& [i, j] : mi.omega) {
        const auto ii = static_cast<Eigen::Index>(i);
        const auto jj = static_cast<Eigen::Index>(j);
        const double r = mi.sigma_inv(ii, jj) + z(ii) * z(jj);
        grad(ii) += r * z(jj);
        grad(jj) += r * z(ii);
    }
    return grad / loss;
}

double predict_from_moments(const Eigen::VectorXd& moments, std::span<const std::uint8_t> config,
                            const MomentInput& mi, double prior, double eps) {
    check_prior(prior);
    return posterior(moments, config, mi, prior, eps, nullptr);
}

double predict_bucket(const GenerativeParams& params, std::span<const std::uint8_t> config,
                      const MomentInput& mi, double eps) {
    return predict_from_moments(params.moments, config, mi, params.class_prior, eps);
}

double penalty(const Eigen::VectorXd& z, const PenaltyTerm& term, const MomentInput& mi,
               double prior, double eps) {
    if (term.empty()) return 0.0;
    const RecoveredMoments rec = recover_moments(z, mi, prior);
    double total = 0.0;
    for (std::size_t b = 0; b < term.configs.size(); ++b) {
        const double f = posterior(rec.moments, term.configs[b], mi, prior, eps, nullptr);
        total += term.positives[b] * (f - 1.0) * (f - 1.0) + term.negatives[b] * f * f;
    }
    return total;
}

double penalty(const Eigen::VectorXd& z, const LabeledSet& labeled, const BucketIndex& buckets,
               const MomentInput& mi, double prior, double eps) {
    return penalty(z, make_penalty_term(labeled, buckets), mi, prior, eps);
}

double objective(const Eigen::VectorXd& z, const MomentInput& mi, double prior,
                 const PenaltyTerm& term, double alpha, double eps) {
    double value = loss_base(z, mi);
    if (alpha != 0.0 && !term.empty()) value += alpha * penalty(z, term, mi, prior, eps);
    return value;
}

Eigen::VectorXd gradient(const Eigen::VectorXd& z, const MomentInput& mi, double prior,
                         const PenaltyTerm& term, double alpha, double eps) {
    Eigen::VectorXd grad = loss_base_gradient(z, mi);
    if (alpha != 0.0 && !term.empty()) {
        const RecoveredMoments rec = recover_moments(z, mi, prior);
        Eigen::VectorXd dpen_dmu = Eigen::VectorXd::Zero(z.size());
        Eigen::VectorXd dmu(z.size());
        for (std::size_t b = 0; b < term.configs.size(); ++b) {
            const double f = posterior(rec.moments, term.configs[b], mi, prior, eps, &dmu);
            const double outer = 2.0 * (term.positives[b] * (f - 1.0) + term.negatives[b] * f);
            dpen_dmu += outer * dmu;
        }
        grad += alpha * moments_jacobian(z, mi, prior, rec).transpose() * dpen_dmu;
    }
    if (!grad.allFinite()) throw Error(ErrorKind::NonFinite, "objective gradient is not finite");
    return grad;
}

GenerativeParams make_params(const Eigen::VectorXd& z, const MomentInput& mi, double prior) {
    const RecoveredMoments rec = recover_moments(z, mi, prior);
    return GenerativeParams{z, prior, rec.moments, rec.sign};
}

FitResult fit(const MomentInput& mi, double prior, const PenaltyTerm& term, const FitConfig& cfg,
              const std::optional<Eigen::VectorXd>& warm_start) {
    cfg.validate();
    check_prior(prior);
    if (mi.omega.empty()) {
        throw Error(ErrorKind::InvalidArgument, "no conditionally independent pairs to fit against");
    }
    const auto d = static_cast<Eigen::Index>(mi.dim());

    Eigen::VectorXd z(d);
    if (warm_start) {
        z = *warm_start;
    } else {
        std::mt19937_64 rng(cfg.seed);
        std::uniform_real_distribution<double> init(-0.1, 0.1);
        for (Eigen::Index i = 0; i < d; ++i) z(i) = init(rng);
    }
    check_dim(z, mi);

    auto value_at = [&](const Eigen::VectorXd& point) {
        return objective(point, mi, prior, term, cfg.alpha, cfg.epsilon);
    };

    FitDiagnostics diag;
    diag.alpha = cfg.alpha;
    double current = value_at(z);
    if (!std::isfinite(current)) throw Error(ErrorKind::NonFinite, "objective is not finite at the start");
    diag.loss_trace.push_back(current);

    // Quasi-Newton (BFGS) with a weak Wolfe line search. The base loss is a norm
    // and has a kink on its zero set; this search copes with that, where plain
    // gradient steps stall on the first iterate near the kink.
    constexpr double kArmijo = 1e-4;
    constexpr double kCurvature = 0.9;
    constexpr int kMaxTrials = 60;
    constexpr int kPatience = 3;
    Eigen::VectorXd grad = gradient(z, mi, prior, term, cfg.alpha, cfg.epsilon);
    // Initial inverse Hessian: the first trial step is at most step_size long.
    auto reset_h_inv = [&] {
        return (cfg.step_size / std::max(1.0, grad.norm())) * Eigen::MatrixXd::Identity(d, d);
    };
    Eigen::MatrixXd h_inv = reset_h_inv();
    bool fresh = true;
    int flat = 0;
    for (std::size_t it = 0; it < cfg.max_iters; ++it) {
        if (!grad.allFinite()) throw Error(ErrorKind::NonFinite, "gradient is not finite");
        if (grad.squaredNorm() == 0.0) {
            diag.converged = true;
            break;
        }
        Eigen::VectorXd dir = -h_inv * grad;
        double slope = grad.dot(dir);
        if (!(slope < 0.0)) {
            h_inv = reset_h_inv();
            fresh = true;
            dir = -h_inv * grad;
            slope = grad.dot(dir);
        }

        // Bracketing line search: shrink on insufficient decrease, expand while
        // the directional derivative is still steeply negative.
        double lo = 0.0;
        double hi = std::numeric_limits<double>::infinity();
        double step = 1.0;
        bool accepted = false;
        Eigen::VectorXd candidate;
        Eigen::VectorXd candidate_grad;
        double candidate_value = current;
        Eigen::VectorXd fallback;
        double fallback_value = current;
        for (int trial = 0; trial < kMaxTrials; ++trial) {
            candidate = z + step * dir;
            candidate_value = value_at(candidate);
            if (!std::isfinite(candidate_value) || candidate_value > current + kArmijo * step * slope) {
                hi = step;
            } else {
                if (candidate_value < fallback_value) {
                    fallback = candidate;
                    fallback_value = candidate_value;
                }
                candidate_grad = gradient(candidate, mi, prior, term, cfg.alpha, cfg.epsilon);
                if (candidate_grad.dot(dir) < kCurvature * slope) {
                    lo = step;
                } else {
                    accepted = true;
                    break;
                }
            }
            step = std::isfinite(hi) ? 0.5 * (lo + hi) : 2.0 * lo;
        }
        if (!accepted) {
            // Keep any sufficient-decrease point found along the way.
            if (fallback.size() == 0 || !(fallback_value < current)) {
                if (!fresh) {
                    // Retry once from a scaled identity before giving up.
                    h_inv = reset_h_inv();
                    fresh = true;
                    continue;
                }
                diag.converged = true;
                break;
            }
            candidate = std::move(fallback);
            candidate_value = fallback_value;
            candidate_grad = gradient(candidate, mi, prior, term, cfg.alpha, cfg.epsilon);
        }

        const Eigen::VectorXd s = candidate - z;
        const Eigen::VectorXd y = candidate_grad - grad;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            const double rho = 1.0 / sy;
            const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
            h_inv = (eye - rho * s * y.transpose()) * h_inv * (eye - rho * y * s.transpose()) +
                    rho * s * s.transpose();
            fresh = false;
        }

        const double improvement = current - candidate_value;
        z = std::move(candidate);
        grad = std::move(candidate_grad);
        current = candidate_value;
        diag.loss_trace.push_back(current);
        diag.iterations = it + 1;
        flat = improvement < cfg.tolerance ? flat + 1 : 0;
        if (flat >= kPatience) {
            diag.converged = true;
            break;
        }
    }

    diag.base_loss = loss_base(z, mi);
    diag.penalty = penalty(z, term, mi, prior, cfg.epsilon);
    return FitResult{make_params(z, mi, prior), std::move(diag)};
}

double max_curvature(const std::function<double(const Eigen::VectorXd&)>& loss,
                     const Eigen::VectorXd& z0, double h) {
    if (!z0.allFinite()) throw Error(ErrorKind::NonFinite, "curvature point is not finite");
    const double center = loss(z0);
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < z0.size(); ++i) {
        Eigen::VectorXd plus = z0;
        Eigen::VectorXd minus = z0;
        plus(i) += h;
        minus(i) -= h;
        best = std::max(best, (loss(plus) - 2.0 * center + loss(minus)) / (h * h));
    }
    if (!std::isfinite(best)) throw Error(ErrorKind::NonFinite, "curvature estimate is not finite");
    return best;
}

double auto_alpha(const MomentInput& mi, const Eigen::VectorXd& z0) {
    const double curvature =
        max_curvature([&](const Eigen::VectorXd& z) { return loss_base(z, mi); }, z0, 1e-4);
    return std::max(curvature, 1.0);
}

ProbabilisticLabels make_probabilistic_labels(const GenerativeParams& params,
                                              const MomentInput& mi, const BucketIndex& buckets,
                                              double eps, std::size_t iteration) {
    ProbabilisticLabels out;
    out.iteration = iteration;
    out.per_bucket.resize(buckets.size());
    for (std::size_t b = 0; b < buckets.size(); ++b) {
        out.per_bucket[b] = predict_bucket(params, buckets.configs.row(b), mi, eps);
    }
    out.per_point.resize(buckets.point_to_bucket.size());
    for (std::size_t i = 0; i < out.per_point.size(); ++i) {
        out.per_point[i] = out.per_bucket[buckets.point_to_bucket[i]];
    }
    return out;
}

}  // namespace weasul
