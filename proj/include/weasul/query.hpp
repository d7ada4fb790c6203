#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "weasul/core_data.hpp"
#include "weasul/generative.hpp"
#include "weasul/labeled_set.hpp"

namespace weasul {

using Rng = std::mt19937_64;

enum class Strategy { MaxKL, Margin, Random };

std::string_view to_string(Strategy s) noexcept;
Strategy parse_strategy(std::string_view name);

struct QueryDecision {
    std::size_t bucket = 0;
    std::size_t point = 0;
    std::vector<double> scores;  // per bucket: KL divergence, |p - 0.5|, or empty for random

    // Score of the chosen bucket; 0 when the strategy does not score buckets.
    [[nodiscard]] double chosen_score() const;
};

// Expert estimate of p(y = 1) per bucket; buckets without labels fall back to
// the t = 0 model estimate rounded half-up.
std::vector<double> empirical_q(const LabeledSet& labeled, const BucketIndex& buckets,
                                const ProbabilisticLabels& p0);

// Bernoulli KL(p || q) in nats, q clamped to [eps, 1 - eps], 0 log 0 = 0.
double kl_div(double p, double q, double eps);

QueryDecision select_maxkl(const ProbabilisticLabels& pt, const LabeledSet& labeled,
                           const BucketIndex& buckets, const ProbabilisticLabels& p0, double eps,
                           Rng& rng);

QueryDecision select_margin(const std::vector<double>& per_point, const LabeledSet& labeled,
                            const BucketIndex& buckets, Rng& rng);

QueryDecision select_random(const BucketIndex& buckets, const LabeledSet& labeled, Rng& rng);

}  // namespace weasul
