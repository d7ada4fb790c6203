#include "weasul/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_map>

#include "weasul/errors.hpp"

namespace weasul {

void Dataset::validate() const {
    const auto n = static_cast<Eigen::Index>(label_matrix.rows());
    if (features.rows() != n) {
        throw Error(ErrorKind::DimensionMismatch,
                    "feature rows (" + std::to_string(features.rows()) +
                        ") differ from label matrix rows (" + std::to_string(n) + ")");
    }
    if (labels && static_cast<Eigen::Index>(labels->size()) != n) {
        throw Error(ErrorKind::DimensionMismatch, "ground truth length differs from the point count");
    }
    if (labels) {
        for (int y : *labels) {
            if (y != 0 && y != 1) throw Error(ErrorKind::InvalidArgument, "ground truth labels must be 0 or 1");
        }
    }
}

void SyntheticSpec::validate() const {
    for (const auto& cls : class_stddevs) {
        for (double s : cls) {
            if (!(s > 0.0) || !std::isfinite(s)) {
                throw Error(ErrorKind::InvalidArgument, "class_stddevs must be positive");
            }
        }
    }
    for (const auto& cls : class_means) {
        for (double m : cls) {
            if (!std::isfinite(m)) throw Error(ErrorKind::InvalidArgument, "class_means must be finite");
        }
    }
    for (double t : thresholds) {
        if (!std::isfinite(t)) throw Error(ErrorKind::InvalidArgument, "thresholds must be finite");
    }
    if (n_train < 1) throw Error(ErrorKind::InvalidArgument, "n_train must be >= 1");
    if (n_test < 1) throw Error(ErrorKind::InvalidArgument, "n_test must be >= 1");
}

DependencyStructure synthetic_dependency() { return DependencyStructure{{{1, 2}}}; }

LabelMatrix apply_labelling_functions(const Eigen::MatrixXd& features,
                                      const std::array<double, 3>& thresholds) {
    if (features.cols() < 2) {
        throw Error(ErrorKind::DimensionMismatch, "threshold labelling functions need 2 feature columns");
    }
    LabelMatrix::Storage votes(features.rows(), 3);
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        votes(i, 0) = features(i, 1) >= thresholds[0] ? 1 : 0;
        votes(i, 1) = features(i, 0) >= thresholds[1] ? 1 : 0;
        votes(i, 2) = features(i, 0) >= thresholds[2] ? 1 : 0;
    }
    return LabelMatrix(std::move(votes));
}

namespace {

Dataset draw_split(const SyntheticSpec& spec, std::size_t n, const std::string& split,
                   std::mt19937_64& rng) {
    std::vector<int> y(n, 0);
    std::fill(y.begin() + static_cast<std::ptrdiff_t>(n / 2), y.end(), 1);
    std::shuffle(y.begin(), y.end(), rng);

    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 2);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& mean = spec.class_means[static_cast<std::size_t>(y[i])];
        const auto& sd = spec.class_stddevs[static_cast<std::size_t>(y[i])];
        for (std::size_t k = 0; k < 2; ++k) {
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = mean[k] + sd[k] * normal(rng);
        }
    }
    Dataset out;
    out.label_matrix = apply_labelling_functions(x, spec.thresholds);
    out.features = std::move(x);
    out.labels = std::move(y);
    out.split = split;
    return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    for (auto& c : cells) {
        const auto first = c.find_first_not_of(" \t\r");
        const auto last = c.find_last_not_of(" \t\r");
        c = first == std::string::npos ? std::string{} : c.substr(first, last - first + 1);
    }
    return cells;
}

double parse_double(const std::string& cell, std::size_t row, const std::string& column) {
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
    if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(value)) {
        throw ParseError(row, column, "'" + cell + "' is not a finite number");
    }
    return value;
}

int parse_binary(const std::string& cell, std::size_t row, const std::string& column) {
    if (cell == "0") return 0;
    if (cell == "1") return 1;
    throw ParseError(row, column, "'" + cell + "' is not 0 or 1");
}

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

}  // namespace

std::pair<Dataset, Dataset> generate_gaussian_mixture(const SyntheticSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    Dataset train = draw_split(spec, spec.n_train, "train", rng);
    Dataset test = draw_split(spec, spec.n_test, "test", rng);
    return {std::move(train), std::move(test)};
}

TableSchema synthetic_schema() { return TableSchema{{"x1", "x2"}, {"lf1", "lf2", "lf3"}, "y"}; }

Dataset load_table(const std::filesystem::path& path, const TableSchema& schema) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::SchemaError, path.string() + " is empty");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = split_csv_line(line);
    std::unordered_map<std::string, std::size_t> position;
    for (std::size_t c = 0; c < header.size(); ++c) position.emplace(header[c], c);

    auto resolve = [&](const std::vector<std::string>& names) {
        std::vector<std::size_t> idx;
        for (const auto& name : names) {
            auto it = position.find(name);
            if (it == position.end()) {
                throw Error(ErrorKind::SchemaError, "column '" + name + "' not found in " + path.string());
            }
            idx.push_back(it->second);
        }
        return idx;
    };
    if (schema.label_matrix_columns.size() < 2) {
        throw Error(ErrorKind::SchemaError, "schema needs at least 2 label-matrix columns");
    }
    const auto feature_idx = resolve(schema.feature_columns);
    const auto lf_idx = resolve(schema.label_matrix_columns);
    std::optional<std::size_t> y_idx;
    if (schema.label_column) y_idx = resolve({*schema.label_column}).front();

    std::vector<std::vector<double>> feature_rows;
    std::vector<std::vector<std::uint8_t>> lf_rows;
    std::vector<int> y;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ++row;
        const auto cells = split_csv_line(line);
        auto cell = [&](std::size_t c, const std::string& name) -> const std::string& {
            if (c >= cells.size() || cells[c].empty()) throw ParseError(row, name, "missing value");
            return cells[c];
        };
        std::vector<double> f;
        for (std::size_t k = 0; k < feature_idx.size(); ++k) {
            f.push_back(parse_double(cell(feature_idx[k], schema.feature_columns[k]), row,
                                     schema.feature_columns[k]));
        }
        std::vector<std::uint8_t> l;
        for (std::size_t k = 0; k < lf_idx.size(); ++k) {
            l.push_back(static_cast<std::uint8_t>(parse_binary(
                cell(lf_idx[k], schema.label_matrix_columns[k]), row, schema.label_matrix_columns[k])));
        }
        if (y_idx) y.push_back(parse_binary(cell(*y_idx, *schema.label_column), row, *schema.label_column));
        feature_rows.push_back(std::move(f));
        lf_rows.push_back(std::move(l));
    }
    if (row == 0) throw Error(ErrorKind::SchemaError, path.string() + " has no data rows");

    Dataset out;
    const auto n = static_cast<Eigen::Index>(row);
    out.features.resize(n, static_cast<Eigen::Index>(feature_idx.size()));
    LabelMatrix::Storage votes(n, static_cast<Eigen::Index>(lf_idx.size()));
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto iu = static_cast<std::size_t>(i);
        for (std::size_t k = 0; k < feature_idx.size(); ++k) {
            out.features(i, static_cast<Eigen::Index>(k)) = feature_rows[iu][k];
        }
        for (std::size_t k = 0; k < lf_idx.size(); ++k) {
            votes(i, static_cast<Eigen::Index>(k)) = lf_rows[iu][k];
        }
    }
    out.label_matrix = LabelMatrix(std::move(votes));
    if (y_idx) out.labels = std::move(y);
    out.split = path.stem().string();
    out.validate();
    return out;
}

void write_table(const std::filesystem::path& path, const Dataset& data, const TableSchema& schema) {
    data.validate();
    if (schema.feature_columns.size() != static_cast<std::size_t>(data.features.cols()) ||
        schema.label_matrix_columns.size() != data.label_matrix.cols()) {
        throw Error(ErrorKind::SchemaError, "schema does not match the dataset's column counts");
    }
    const bool with_y = schema.label_column.has_value() && data.labels.has_value();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    std::string header;
    for (const auto& name : schema.feature_columns) header += name + ",";
    for (const auto& name : schema.label_matrix_columns) header += name + ",";
    if (with_y) header += *schema.label_column + ",";
    header.pop_back();
    out << header << '\n';

    std::string line;
    for (std::size_t i = 0; i < data.size(); ++i) {
        line.clear();
        for (Eigen::Index k = 0; k < data.features.cols(); ++k) {
            line += format_double(data.features(static_cast<Eigen::Index>(i), k));
            line += ',';
        }
        for (std::size_t j = 0; j < data.label_matrix.cols(); ++j) {
            line += static_cast<char>('0' + data.label_matrix(i, j));
            line += ',';
        }
        if (with_y) {
            line += static_cast<char>('0' + (*data.labels)[i]);
            line += ',';
        }
        line.pop_back();
        out << line << '\n';
    }
    if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

}  // namespace weasul
