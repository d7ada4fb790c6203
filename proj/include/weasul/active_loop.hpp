#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "weasul/core_data.hpp"
#include "weasul/dataset.hpp"
#include "weasul/discriminative.hpp"
#include "weasul/generative.hpp"
#include "weasul/labeled_set.hpp"
#include "weasul/query.hpp"

namespace weasul {

struct ExperimentData {
    Dataset train;
    std::optional<Dataset> test;  // metrics use test when present, else train
    DependencyStructure dependency;
    double prior = 0.5;
};

enum class Method { ActiveWeasul, Nashaat, ActiveLearning, WeakOnly };

std::string_view to_string(Method m) noexcept;
Method parse_method(std::string_view name);

struct LoopConfig {
    FitConfig fit;
    Strategy strategy = Strategy::MaxKL;
    std::size_t budget = 0;
    std::uint64_t seed = 0;  // query randomness and discriminative hold-out split
    bool train_discriminative = false;
    TrainConfig disc;
    std::size_t al_epochs = 500;  // logistic fits of the pure active-learning baseline
};

struct IterationRecord {
    std::size_t t = 0;
    std::string method;
    std::string strategy;
    std::optional<std::size_t> point_id;
    std::optional<std::size_t> bucket;  // index into the buckets of the uncorrected weak labels
    std::optional<double> score_max;
    std::optional<double> gen_accuracy;
    std::optional<double> gen_f1;
    std::optional<double> disc_accuracy;
    std::optional<double> disc_f1;
    std::optional<double> loss;
    std::optional<double> alpha;
    std::optional<double> diversity;

    // Not part of the JSON-lines record.
    std::vector<double> scores;
    std::vector<double> bucket_probs;
};

struct RunHistory {
    std::vector<IterationRecord> records;
};

class Oracle {
public:
    virtual ~Oracle() = default;
    virtual int label(std::size_t point) = 0;
};

// Answers with the dataset's ground truth.
class GroundTruthOracle final : public Oracle {
public:
    explicit GroundTruthOracle(const Dataset& data);
    int label(std::size_t point) override;

private:
    const std::vector<int>* labels_;
};

// One Active WeaSuL run driven one label at a time; the batch runner and the
// label server both step through this.
class ActiveWeasulSession {
public:
    ActiveWeasulSession(std::shared_ptr<const ExperimentData> data, LoopConfig cfg,
                        Method method_tag = Method::ActiveWeasul);

    [[nodiscard]] std::size_t t() const noexcept { return labeled_.size(); }
    [[nodiscard]] bool finished() const noexcept { return !pending_.has_value(); }
    [[nodiscard]] const std::optional<QueryDecision>& pending() const noexcept { return pending_; }
    [[nodiscard]] const RunHistory& history() const noexcept { return history_; }
    [[nodiscard]] const ProbabilisticLabels& labels() const noexcept { return current_; }
    [[nodiscard]] const ProbabilisticLabels& initial_labels() const noexcept { return initial_; }
    [[nodiscard]] const GenerativeParams& params() const noexcept { return params_; }
    [[nodiscard]] const FitDiagnostics& diagnostics() const noexcept { return diagnostics_; }
    [[nodiscard]] double alpha() const noexcept { return alpha_; }
    [[nodiscard]] const BucketIndex& buckets() const noexcept { return buckets_; }
    [[nodiscard]] const LabeledSet& labeled() const noexcept { return labeled_; }
    [[nodiscard]] const ExperimentData& data() const noexcept { return *data_; }
    [[nodiscard]] const LoopConfig& config() const noexcept { return cfg_; }

    // Accepts the expert label for the pending query, refits and queues the
    // next query. Throws InvalidArgument if `point` is not the pending point.
    void submit(std::size_t point, int label);

private:
    void refit();
    void record(const std::optional<QueryDecision>& decision);
    void queue_next_query();

    std::shared_ptr<const ExperimentData> data_;
    LoopConfig cfg_;
    std::string method_;
    Rng rng_;
    BucketIndex buckets_;
    MomentInput moments_;
    LabeledSet labeled_;
    GenerativeParams params_;
    FitDiagnostics diagnostics_;
    double alpha_ = 0.0;
    ProbabilisticLabels initial_;
    ProbabilisticLabels current_;
    std::optional<QueryDecision> pending_;
    RunHistory history_;
};

RunHistory run_active_weasul(std::shared_ptr<const ExperimentData> data, const LoopConfig& cfg,
                             Oracle& oracle);

// Corrects the queried point's weak labels to the expert label and refits the
// unpenalized model; points are chosen by margin.
RunHistory run_nashaat(std::shared_ptr<const ExperimentData> data, const LoopConfig& cfg,
                       Oracle& oracle);

// Logistic regression on the expert-labelled points only, querying the point
// closest to the decision boundary once both classes have been seen.
RunHistory run_pure_active_learning(std::shared_ptr<const ExperimentData> data,
                                    const LoopConfig& cfg, Oracle& oracle);

RunHistory run_method(Method method, std::shared_ptr<const ExperimentData> data,
                      const LoopConfig& cfg, Oracle& oracle);

// Generative predictions for an arbitrary weak-label matrix.
std::vector<double> predict_points(const GenerativeParams& params, const MomentInput& mi,
                                   const LabelMatrix& lm, double eps);

}  // namespace weasul
