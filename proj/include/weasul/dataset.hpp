#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "weasul/core_data.hpp"

namespace weasul {

struct Dataset {
    Eigen::MatrixXd features;                 // n x p
    std::optional<std::vector<int>> labels;   // ground truth y, when known
    LabelMatrix label_matrix;                 // n x m weak labels
    std::string split;

    [[nodiscard]] std::size_t size() const noexcept { return label_matrix.rows(); }
    void validate() const;
};

// Two Gaussian classes in the plane with three threshold labelling functions:
// lf1 on the second feature, lf2 and lf3 on the first.
struct SyntheticSpec {
    std::array<std::array<double, 2>, 2> class_means{{{-1.5, -1.0}, {1.5, 1.0}}};
    std::array<std::array<double, 2>, 2> class_stddevs{{{0.6, 1.0}, {0.6, 1.0}}};
    std::size_t n_train = 10000;
    std::size_t n_test = 3000;
    std::uint64_t seed = 0;
    std::array<double, 3> thresholds{0.0, -0.3, 0.6};

    // Classes are generated balanced.
    static constexpr double prior = 0.5;

    void validate() const;
};

// lf2 and lf3 share the first feature, so they form the one dependent pair.
DependencyStructure synthetic_dependency();

LabelMatrix apply_labelling_functions(const Eigen::MatrixXd& features,
                                      const std::array<double, 3>& thresholds);

std::pair<Dataset, Dataset> generate_gaussian_mixture(const SyntheticSpec& spec);

struct TableSchema {
    std::vector<std::string> feature_columns;
    std::vector<std::string> label_matrix_columns;
    std::optional<std::string> label_column;
};

TableSchema synthetic_schema();

Dataset load_table(const std::filesystem::path& path, const TableSchema& schema);

// Writes features, weak labels and (if present) ground truth with a header row.
void write_table(const std::filesystem::path& path, const Dataset& data, const TableSchema& schema);

}  // namespace weasul
