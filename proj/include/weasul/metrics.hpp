#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "weasul/core_data.hpp"
#include "weasul/labeled_set.hpp"

namespace weasul {

// 1[p >= 0.5]; the same half-up rule as the expert-estimate fallback.
std::vector<int> binarize(std::span<const double> probabilities);

double accuracy(std::span<const int> predicted, std::span<const int> truth);

// F1 of the positive class; 0 when precision + recall is 0.
double f1(std::span<const int> predicted, std::span<const int> truth);

// Entropy (nats) of the distribution of queried points over buckets.
double diversity_entropy(const LabeledSet& labeled, const BucketIndex& buckets);
double diversity_entropy(std::span<const std::size_t> queried_buckets);

}  // namespace weasul
