#pragma once

// Weak-label matrix, dependency structure, buckets and the second-moment
// statistics the label model is fitted against.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace weasul {

using IndexPair = std::pair<std::size_t, std::size_t>;

// n x m matrix of binary votes, one row per data point, one column per
// labelling function.
class LabelMatrix {
public:
    using Storage = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    LabelMatrix() = default;
    explicit LabelMatrix(Storage values);

    static LabelMatrix from_rows(const std::vector<std::vector<int>>& rows);

    [[nodiscard]] std::size_t rows() const noexcept { return static_cast<std::size_t>(values_.rows()); }
    [[nodiscard]] std::size_t cols() const noexcept { return static_cast<std::size_t>(values_.cols()); }
    [[nodiscard]] std::uint8_t operator()(std::size_t i, std::size_t j) const {
        return values_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    [[nodiscard]] std::span<const std::uint8_t> row(std::size_t i) const {
        return {values_.data() + i * cols(), cols()};
    }
    [[nodiscard]] const Storage& values() const noexcept { return values_; }

    // Copy with row i replaced by `value` in every column.
    [[nodiscard]] LabelMatrix with_row_filled(std::size_t i, std::uint8_t value) const;

    friend bool operator==(const LabelMatrix& a, const LabelMatrix& b) {
        return a.values_.rows() == b.values_.rows() && a.values_.cols() == b.values_.cols() &&
               a.values_ == b.values_;
    }

private:
    Storage values_;
};

// Disjoint groups of labelling functions that are dependent given y. Functions
// outside every clique are singletons. Only pairs are supported.
struct DependencyStructure {
    std::vector<std::vector<std::size_t>> cliques;

    // Throws InvalidArgument for out-of-range, overlapping, or unsupported cliques.
    void validate(std::size_t num_lfs) const;
};

// A factor of the label model: a singleton {j} with its indicator column, or a
// pair {a, b} with columns {a, b, joint}.
struct Factor {
    std::vector<std::size_t> lfs;
    std::vector<std::size_t> columns;
};

struct BucketIndex {
    LabelMatrix configs;                        // r x m, first-occurrence order
    std::vector<std::size_t> point_to_bucket;   // length n
    std::vector<std::size_t> counts;            // length r
    std::vector<std::vector<std::size_t>> members;

    [[nodiscard]] std::size_t size() const noexcept { return counts.size(); }
    [[nodiscard]] std::optional<std::size_t> find(std::span<const std::uint8_t> config) const;
};

BucketIndex build_buckets(const LabelMatrix& lm);

struct CovarianceResult {
    Eigen::MatrixXd sigma;
    Eigen::MatrixXd sigma_inv;
    bool ridged = false;
    double condition_number = 0.0;
};

// Expanded indicator statistics of the weak labels plus their moments.
struct MomentInput {
    std::size_t num_lfs = 0;
    Eigen::MatrixXd psi;
    Eigen::VectorXd col_means;
    Eigen::MatrixXd sigma;
    Eigen::MatrixXd sigma_inv;
    bool ridged = false;
    std::vector<IndexPair> omega;
    std::vector<Factor> factors;

    [[nodiscard]] std::size_t dim() const noexcept { return static_cast<std::size_t>(col_means.size()); }
};

// psi/col_means/factors only; sigma and omega are left empty.
MomentInput psi_expand(const LabelMatrix& lm, const DependencyStructure& dep);

inline constexpr double kMaxConditionNumber = 1e10;

CovarianceResult covariance(const Eigen::MatrixXd& psi);

// Column-owner factor for each psi column.
std::vector<std::size_t> column_owners(const DependencyStructure& dep, std::size_t num_lfs);

std::vector<IndexPair> omega_pairs(const DependencyStructure& dep, std::size_t num_lfs);

std::vector<Factor> factor_layout(const DependencyStructure& dep, std::size_t num_lfs);

// psi_expand + covariance + omega_pairs. Rejects an empty omega.
MomentInput make_moment_input(const LabelMatrix& lm, const DependencyStructure& dep);

std::string config_key(std::span<const std::uint8_t> config);

}  // namespace weasul
