#include "weasul/query.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "weasul/errors.hpp"

namespace weasul {

std::string_view to_string(Strategy s) noexcept {
    switch (s) {
        case Strategy::MaxKL: return "maxkl";
        case Strategy::Margin: return "margin";
        case Strategy::Random: return "random";
    }
    return "unknown";
}

Strategy parse_strategy(std::string_view name) {
    if (name == "maxkl") return Strategy::MaxKL;
    if (name == "margin") return Strategy::Margin;
    if (name == "random") return Strategy::Random;
    throw Error(ErrorKind::InvalidArgument,
                "unknown strategy '" + std::string(name) + "' (expected maxkl, margin or random)");
}

double QueryDecision::chosen_score() const {
    return bucket < scores.size() ? scores[bucket] : 0.0;
}

namespace {

std::vector<std::size_t> unlabelled_members(const BucketIndex& buckets, std::size_t b,
                                            const LabeledSet& labeled) {
    std::vector<std::size_t> free;
    for (std::size_t point : buckets.members[b]) {
        if (!labeled.contains(point)) free.push_back(point);
    }
    return free;
}

std::size_t pick(const std::vector<std::size_t>& candidates, Rng& rng) {
    std::uniform_int_distribution<std::size_t> dist(0, candidates.size() - 1);
    return candidates[dist(rng)];
}

}  // namespace

std::vector<double> empirical_q(const LabeledSet& labeled, const BucketIndex& buckets,
                                const ProbabilisticLabels& p0) {
    if (p0.per_bucket.size() != buckets.size()) {
        throw Error(ErrorKind::DimensionMismatch, "initial labels do not match the bucket index");
    }
    std::vector<double> positives(buckets.size(), 0.0);
    std::vector<double> totals(buckets.size(), 0.0);
    for (std::size_t point : labeled.order()) {
        if (point >= buckets.point_to_bucket.size()) {
            throw Error(ErrorKind::UnknownPoint, "labelled point " + std::to_string(point) + " is unknown");
        }
        const std::size_t b = buckets.point_to_bucket[point];
        positives[b] += labeled.label(point);
        totals[b] += 1.0;
    }
    std::vector<double> q(buckets.size());
    for (std::size_t b = 0; b < buckets.size(); ++b) {
        q[b] = totals[b] > 0.0 ? positives[b] / totals[b] : (p0.per_bucket[b] >= 0.5 ? 1.0 : 0.0);
    }
    return q;
}

double kl_div(double p, double q, double eps) {
    q = std::clamp(q, eps, 1.0 - eps);
    double kl = 0.0;
    if (p > 0.0) kl += p * std::log(p / q);
    if (p < 1.0) kl += (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
    return std::max(kl, 0.0);
}

QueryDecision select_maxkl(const ProbabilisticLabels& pt, const LabeledSet& labeled,
                           const BucketIndex& buckets, const ProbabilisticLabels& p0, double eps,
                           Rng& rng) {
    if (pt.per_bucket.size() != buckets.size()) {
        throw Error(ErrorKind::DimensionMismatch, "probabilistic labels do not match the bucket index");
    }
    const std::vector<double> q = empirical_q(labeled, buckets, p0);
    QueryDecision decision;
    decision.scores.resize(buckets.size());
    for (std::size_t b = 0; b < buckets.size(); ++b) {
        decision.scores[b] = kl_div(pt.per_bucket[b], q[b], eps);
    }

    // Descending KL; stable sort keeps the lowest bucket index first on ties.
    std::vector<std::size_t> ranking(buckets.size());
    std::iota(ranking.begin(), ranking.end(), std::size_t{0});
    std::stable_sort(ranking.begin(), ranking.end(), [&](std::size_t a, std::size_t b) {
        return decision.scores[a] > decision.scores[b];
    });
    for (std::size_t b : ranking) {
        const auto free = unlabelled_members(buckets, b, labeled);
        if (free.empty()) continue;
        decision.bucket = b;
        decision.point = pick(free, rng);
        return decision;
    }
    throw Error(ErrorKind::Exhausted, "every point is already labelled");
}

QueryDecision select_margin(const std::vector<double>& per_point, const LabeledSet& labeled,
                            const BucketIndex& buckets, Rng& rng) {
    if (per_point.size() != buckets.point_to_bucket.size()) {
        throw Error(ErrorKind::DimensionMismatch, "per-point labels do not match the bucket index");
    }
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> tied;
    for (std::size_t i = 0; i < per_point.size(); ++i) {
        if (labeled.contains(i)) continue;
        const double margin = std::abs(per_point[i] - 0.5);
        if (margin < best) {
            best = margin;
            tied.clear();
        }
        if (margin == best) tied.push_back(i);
    }
    if (tied.empty()) throw Error(ErrorKind::Exhausted, "every point is already labelled");

    QueryDecision decision;
    decision.point = pick(tied, rng);
    decision.bucket = buckets.point_to_bucket[decision.point];
    decision.scores.assign(buckets.size(), 0.0);
    for (std::size_t b = 0; b < buckets.size(); ++b) {
        decision.scores[b] = std::abs(per_point[buckets.members[b].front()] - 0.5);
    }
    return decision;
}

QueryDecision select_random(const BucketIndex& buckets, const LabeledSet& labeled, Rng& rng) {
    std::vector<std::size_t> open;
    for (std::size_t b = 0; b < buckets.size(); ++b) {
        for (std::size_t point : buckets.members[b]) {
            if (!labeled.contains(point)) {
                open.push_back(b);
                break;
            }
        }
    }
    if (open.empty()) throw Error(ErrorKind::Exhausted, "every point is already labelled");
    QueryDecision decision;
    decision.bucket = pick(open, rng);
    decision.point = pick(unlabelled_members(buckets, decision.bucket, labeled), rng);
    return decision;
}

}  // namespace weasul
