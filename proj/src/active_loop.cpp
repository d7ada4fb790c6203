#include "weasul/active_loop.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "weasul/errors.hpp"
#include "weasul/metrics.hpp"

namespace weasul {

std::string_view to_string(Method m) noexcept {
    switch (m) {
        case Method::ActiveWeasul: return "active-weasul";
        case Method::Nashaat: return "nashaat";
        case Method::ActiveLearning: return "active-learning";
        case Method::WeakOnly: return "weak-only";
    }
    return "unknown";
}

Method parse_method(std::string_view name) {
    if (name == "active-weasul") return Method::ActiveWeasul;
    if (name == "nashaat") return Method::Nashaat;
    if (name == "active-learning") return Method::ActiveLearning;
    if (name == "weak-only") return Method::WeakOnly;
    throw Error(ErrorKind::InvalidArgument,
                "unknown method '" + std::string(name) +
                    "' (expected active-weasul, nashaat, active-learning or weak-only)");
}

GroundTruthOracle::GroundTruthOracle(const Dataset& data) : labels_(nullptr) {
    if (!data.labels) throw Error(ErrorKind::OracleFailure, "dataset has no ground truth to answer queries");
    labels_ = &*data.labels;
}

int GroundTruthOracle::label(std::size_t point) {
    if (point >= labels_->size()) {
        throw Error(ErrorKind::OracleFailure, "oracle asked about unknown point " + std::to_string(point));
    }
    return (*labels_)[point];
}

namespace {

const Dataset& eval_set(const ExperimentData& data) { return data.test ? *data.test : data.train; }

struct Scores {
    std::optional<double> accuracy;
    std::optional<double> f1;
};

Scores score(const std::vector<double>& probabilities, const Dataset& eval) {
    if (!eval.labels || probabilities.empty()) return {};
    const auto predicted = binarize(probabilities);
    return {accuracy(predicted, *eval.labels), f1(predicted, *eval.labels)};
}

Scores score_constant(int label, const Dataset& eval) {
    if (!eval.labels || eval.labels->empty()) return {};
    const std::vector<int> predicted(eval.labels->size(), label);
    return {accuracy(predicted, *eval.labels), f1(predicted, *eval.labels)};
}

Scores train_and_score_disc(const ExperimentData& data, const std::vector<double>& per_point,
                            const LabeledSet& labeled, const LoopConfig& cfg) {
    TrainConfig disc = cfg.disc;
    disc.seed = cfg.seed;
    const auto model = train_soft(data.train.features, make_targets(per_point, labeled), disc);
    const Dataset& eval = eval_set(data);
    return score(predict_proba(model, eval.features), eval);
}

std::optional<double> diversity_of(const std::vector<std::size_t>& queried) {
    if (queried.empty()) return std::nullopt;
    return diversity_entropy(queried);
}

std::vector<std::size_t> queried_buckets(const LabeledSet& labeled, const BucketIndex& buckets) {
    std::vector<std::size_t> out;
    for (std::size_t p : labeled.order()) out.push_back(buckets.point_to_bucket[p]);
    return out;
}

void require_prior(double prior) {
    if (!(prior > 0.0 && prior < 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "class prior must lie strictly inside (0, 1)");
    }
}

}  // namespace

std::vector<double> predict_points(const GenerativeParams& params, const MomentInput& mi,
                                   const LabelMatrix& lm, double eps) {
    std::unordered_map<std::string, double> cache;
    std::vector<double> out(lm.rows());
    for (std::size_t i = 0; i < lm.rows(); ++i) {
        auto [it, inserted] = cache.try_emplace(config_key(lm.row(i)), 0.0);
        if (inserted) it->second = predict_bucket(params, lm.row(i), mi, eps);
        out[i] = it->second;
    }
    return out;
}

ActiveWeasulSession::ActiveWeasulSession(std::shared_ptr<const ExperimentData> data, LoopConfig cfg,
                                         Method method_tag)
    : data_(std::move(data)), cfg_(std::move(cfg)), method_(to_string(method_tag)), rng_(cfg_.seed) {
    if (!data_) throw Error(ErrorKind::InvalidArgument, "session needs a dataset");
    data_->train.validate();
    if (data_->test) data_->test->validate();
    require_prior(data_->prior);
    cfg_.fit.validate();

    buckets_ = build_buckets(data_->train.label_matrix);
    moments_ = make_moment_input(data_->train.label_matrix, data_->dependency);

    const FitResult initial = fit(moments_, data_->prior, PenaltyTerm{}, cfg_.fit);
    params_ = initial.params;
    diagnostics_ = initial.diagnostics;
    alpha_ = cfg_.fit.auto_alpha ? auto_alpha(moments_, params_.z) : cfg_.fit.alpha;
    initial_ = make_probabilistic_labels(params_, moments_, buckets_, cfg_.fit.epsilon, 0);
    current_ = initial_;
    record(std::nullopt);
    queue_next_query();
}

void ActiveWeasulSession::refit() {
    FitConfig fc = cfg_.fit;
    fc.alpha = alpha_;
    const FitResult result =
        fit(moments_, data_->prior, make_penalty_term(labeled_, buckets_), fc, params_.z);
    params_ = result.params;
    diagnostics_ = result.diagnostics;
    current_ = make_probabilistic_labels(params_, moments_, buckets_, cfg_.fit.epsilon, t());
}

void ActiveWeasulSession::record(const std::optional<QueryDecision>& decision) {
    IterationRecord rec;
    rec.t = t();
    rec.method = method_;
    rec.strategy = std::string(to_string(cfg_.strategy));
    if (decision) {
        rec.point_id = decision->point;
        rec.bucket = decision->bucket;
        rec.score_max = decision->chosen_score();
        rec.scores = decision->scores;
        rec.alpha = alpha_;
    }
    const Dataset& eval = eval_set(*data_);
    const auto gen = score(predict_points(params_, moments_, eval.label_matrix, cfg_.fit.epsilon), eval);
    rec.gen_accuracy = gen.accuracy;
    rec.gen_f1 = gen.f1;
    if (cfg_.train_discriminative) {
        const auto disc = train_and_score_disc(*data_, current_.per_point, labeled_, cfg_);
        rec.disc_accuracy = disc.accuracy;
        rec.disc_f1 = disc.f1;
    }
    rec.loss = diagnostics_.loss_trace.empty() ? diagnostics_.base_loss : diagnostics_.loss_trace.back();
    rec.diversity = diversity_of(queried_buckets(labeled_, buckets_));
    rec.bucket_probs = current_.per_bucket;
    history_.records.push_back(std::move(rec));
}

void ActiveWeasulSession::queue_next_query() {
    pending_.reset();
    if (t() >= cfg_.budget) return;
    try {
        switch (cfg_.strategy) {
            case Strategy::MaxKL:
                pending_ = select_maxkl(current_, labeled_, buckets_, initial_, cfg_.fit.epsilon, rng_);
                break;
            case Strategy::Margin:
                pending_ = select_margin(current_.per_point, labeled_, buckets_, rng_);
                break;
            case Strategy::Random:
                pending_ = select_random(buckets_, labeled_, rng_);
                break;
        }
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::Exhausted) throw;
    }
}

void ActiveWeasulSession::submit(std::size_t point, int label) {
    if (!pending_) throw Error(ErrorKind::Exhausted, "no query is pending");
    if (point != pending_->point) {
        throw Error(ErrorKind::InvalidArgument,
                    "point " + std::to_string(point) + " is not the pending query (" +
                        std::to_string(pending_->point) + ")");
    }
    if (label != 0 && label != 1) throw Error(ErrorKind::InvalidArgument, "label must be 0 or 1");
    const QueryDecision decision = *pending_;
    labeled_.add(point, label);
    refit();
    record(decision);
    queue_next_query();
}

RunHistory run_active_weasul(std::shared_ptr<const ExperimentData> data, const LoopConfig& cfg,
                             Oracle& oracle) {
    ActiveWeasulSession session(std::move(data), cfg);
    while (!session.finished()) {
        const std::size_t point = session.pending()->point;
        session.submit(point, oracle.label(point));
    }
    return session.history();
}

RunHistory run_nashaat(std::shared_ptr<const ExperimentData> data, const LoopConfig& cfg,
                       Oracle& oracle) {
    if (!data) throw Error(ErrorKind::InvalidArgument, "run needs a dataset");
    data->train.validate();
    require_prior(data->prior);
    FitConfig fc = cfg.fit;
    fc.alpha = 0.0;
    fc.validate();

    const BucketIndex original = build_buckets(data->train.label_matrix);
    const Dataset& eval = eval_set(*data);
    LabelMatrix lm = data->train.label_matrix;
    BucketIndex buckets = original;
    MomentInput mi = make_moment_input(lm, data->dependency);
    FitResult result = fit(mi, data->prior, PenaltyTerm{}, fc);
    ProbabilisticLabels labels = make_probabilistic_labels(result.params, mi, buckets, fc.epsilon, 0);

    LabeledSet labeled;
    Rng rng(cfg.seed);
    RunHistory history;
    auto record = [&](const std::optional<QueryDecision>& decision) {
        IterationRecord rec;
        rec.t = labeled.size();
        rec.method = std::string(to_string(Method::Nashaat));
        rec.strategy = std::string(to_string(Strategy::Margin));
        if (decision) {
            rec.point_id = decision->point;
            rec.bucket = original.point_to_bucket[decision->point];
            rec.score_max = decision->chosen_score();
            rec.scores = decision->scores;
            rec.alpha = 0.0;
        }
        const auto gen = score(predict_points(result.params, mi, eval.label_matrix, fc.epsilon), eval);
        rec.gen_accuracy = gen.accuracy;
        rec.gen_f1 = gen.f1;
        if (cfg.train_discriminative) {
            const auto disc = train_and_score_disc(*data, labels.per_point, labeled, cfg);
            rec.disc_accuracy = disc.accuracy;
            rec.disc_f1 = disc.f1;
        }
        rec.loss = result.diagnostics.loss_trace.back();
        rec.diversity = diversity_of(queried_buckets(labeled, original));
        rec.bucket_probs = labels.per_bucket;
        history.records.push_back(std::move(rec));
    };

    record(std::nullopt);
    for (std::size_t t = 1; t <= cfg.budget; ++t) {
        QueryDecision decision;
        try {
            decision = select_margin(labels.per_point, labeled, buckets, rng);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::Exhausted) break;
            throw;
        }
        const int y = oracle.label(decision.point);
        labeled.add(decision.point, y);
        lm = lm.with_row_filled(decision.point, static_cast<std::uint8_t>(y));
        buckets = build_buckets(lm);
        mi = make_moment_input(lm, data->dependency);
        result = fit(mi, data->prior, PenaltyTerm{}, fc, result.params.z);
        labels = make_probabilistic_labels(result.params, mi, buckets, fc.epsilon, t);
        record(decision);
    }
    return history;
}

RunHistory run_pure_active_learning(std::shared_ptr<const ExperimentData> data,
                                    const LoopConfig& cfg, Oracle& oracle) {
    if (!data) throw Error(ErrorKind::InvalidArgument, "run needs a dataset");
    data->train.validate();
    const Dataset& train = data->train;
    const Dataset& eval = eval_set(*data);
    if (train.features.cols() == 0) {
        throw Error(ErrorKind::InvalidArgument, "active learning needs feature columns");
    }
    const BucketIndex original = build_buckets(train.label_matrix);

    LabeledSet labeled;
    Rng rng(cfg.seed);
    RunHistory history;
    std::optional<LinearClassifier> model;
    int seen_mask = 0;  // bit y set once class y has been labelled

    auto record = [&](std::optional<std::size_t> point, std::optional<double> score_value) {
        IterationRecord rec;
        rec.t = labeled.size();
        rec.method = std::string(to_string(Method::ActiveLearning));
        rec.strategy = "boundary";
        if (point) {
            rec.point_id = *point;
            rec.bucket = original.point_to_bucket[*point];
            rec.score_max = score_value;
        }
        Scores disc;
        if (model) {
            disc = score(predict_proba(*model, eval.features), eval);
        } else {
            disc = score_constant(labeled.empty() ? 1 : labeled.label(labeled.order().front()), eval);
        }
        rec.disc_accuracy = disc.accuracy;
        rec.disc_f1 = disc.f1;
        rec.diversity = diversity_of(queried_buckets(labeled, original));
        history.records.push_back(std::move(rec));
    };

    record(std::nullopt, std::nullopt);
    for (std::size_t t = 1; t <= cfg.budget && labeled.size() < train.size(); ++t) {
        std::size_t point = 0;
        std::optional<double> distance;
        if (!model) {
            std::vector<std::size_t> free;
            for (std::size_t i = 0; i < train.size(); ++i) {
                if (!labeled.contains(i)) free.push_back(i);
            }
            std::uniform_int_distribution<std::size_t> dist(0, free.size() - 1);
            point = free[dist(rng)];
        } else {
            const double norm = std::max(model->weights.norm(), 1e-12);
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < train.size(); ++i) {
                if (labeled.contains(i)) continue;
                const double d =
                    std::abs(train.features.row(static_cast<Eigen::Index>(i)).dot(model->weights) +
                             model->bias) / norm;
                if (d < best) {
                    best = d;
                    point = i;
                }
            }
            distance = best;
        }
        const int y = oracle.label(point);
        labeled.add(point, y);
        seen_mask |= 1 << y;

        if (seen_mask == 3) {
            Eigen::MatrixXd x(static_cast<Eigen::Index>(labeled.size()), train.features.cols());
            std::vector<double> targets;
            for (std::size_t k = 0; k < labeled.size(); ++k) {
                const std::size_t i = labeled.order()[k];
                x.row(static_cast<Eigen::Index>(k)) = train.features.row(static_cast<Eigen::Index>(i));
                targets.push_back(labeled.label(i));
            }
            model = fit_logistic(x, targets, cfg.disc.l2, cfg.al_epochs, cfg.disc.step);
        }
        record(point, distance);
    }
    return history;
}

RunHistory run_method(Method method, std::shared_ptr<const ExperimentData> data,
                      const LoopConfig& cfg, Oracle& oracle) {
    switch (method) {
        case Method::ActiveWeasul: return run_active_weasul(std::move(data), cfg, oracle);
        case Method::Nashaat: return run_nashaat(std::move(data), cfg, oracle);
        case Method::ActiveLearning: return run_pure_active_learning(std::move(data), cfg, oracle);
        case Method::WeakOnly: {
            LoopConfig weak = cfg;
            weak.budget = 0;
            ActiveWeasulSession session(std::move(data), weak, Method::WeakOnly);
            return session.history();
        }
    }
    throw Error(ErrorKind::InvalidArgument, "unknown method");
}

}  // namespace weasul
