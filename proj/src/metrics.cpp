#include "weasul/metrics.hpp"

#include <cmath>
#include <map>

#include "weasul/errors.hpp"

namespace weasul {

namespace {

void check_pair(std::span<const int> predicted, std::span<const int> truth) {
    if (predicted.empty()) throw Error(ErrorKind::EmptyInput, "no predictions");
    if (predicted.size() != truth.size()) {
        throw Error(ErrorKind::DimensionMismatch, "predictions and labels differ in length");
    }
}

}  // namespace

std::vector<int> binarize(std::span<const double> probabilities) {
    std::vector<int> out(probabilities.size());
    for (std::size_t i = 0; i < probabilities.size(); ++i) out[i] = probabilities[i] >= 0.5 ? 1 : 0;
    return out;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
    check_pair(predicted, truth);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) hits += predicted[i] == truth[i];
    return static_cast<double>(hits) / static_cast<double>(predicted.size());
}

double f1(std::span<const int> predicted, std::span<const int> truth) {
    check_pair(predicted, truth);
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i] == 1 && truth[i] == 1) tp += 1;
        if (predicted[i] == 1 && truth[i] == 0) fp += 1;
        if (predicted[i] == 0 && truth[i] == 1) fn += 1;
    }
    const double denom = 2 * tp + fp + fn;
    return denom == 0.0 ? 0.0 : 2 * tp / denom;
}

double diversity_entropy(std::span<const std::size_t> queried_buckets) {
    if (queried_buckets.empty()) {
        throw Error(ErrorKind::EmptyInput, "diversity needs at least one query");
    }
    std::map<std::size_t, double> counts;
    for (std::size_t b : queried_buckets) counts[b] += 1.0;
    const auto t = static_cast<double>(queried_buckets.size());
    double h = 0.0;
    for (const auto& [bucket, n] : counts) {
        const double r = n / t;
        h -= r * std::log(r);
    }
    return h;
}

double diversity_entropy(const LabeledSet& labeled, const BucketIndex& buckets) {
    std::vector<std::size_t> queried;
    queried.reserve(labeled.size());
    for (std::size_t point : labeled.order()) {
        if (point >= buckets.point_to_bucket.size()) {
            throw Error(ErrorKind::UnknownPoint, "labelled point " + std::to_string(point) + " is unknown");
        }
        queried.push_back(buckets.point_to_bucket[point]);
    }
    return diversity_entropy(queried);
}

}  // namespace weasul
