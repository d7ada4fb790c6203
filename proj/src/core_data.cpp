#include "weasul/core_data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "weasul/errors.hpp"

namespace weasul {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::NumericallySingular: return "NumericallySingular";
        case ErrorKind::NonFinite: return "NonFinite";
        case ErrorKind::UnknownPoint: return "UnknownPoint";
        case ErrorKind::Exhausted: return "Exhausted";
        case ErrorKind::EmptyInput: return "EmptyInput";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::SchemaError: return "SchemaError";
        case ErrorKind::OracleFailure: return "OracleFailure";
        case ErrorKind::Io: return "Io";
    }
    return "Unknown";
}

ParseError::ParseError(std::size_t row, std::string column, const std::string& reason)
    : Error(ErrorKind::ParseError,
            "row " + std::to_string(row) + ", column '" + column + "': " + reason),
      row_(row),
      column_(std::move(column)) {}

LabelMatrix::LabelMatrix(Storage values) : values_(std::move(values)) {
    if (values_.cols() < 2) {
        throw Error(ErrorKind::InvalidArgument,
                    "label matrix needs at least 2 labelling functions, got " +
                        std::to_string(values_.cols()));
    }
    for (Eigen::Index i = 0; i < values_.rows(); ++i) {
        for (Eigen::Index j = 0; j < values_.cols(); ++j) {
            if (values_(i, j) > 1) {
                throw Error(ErrorKind::InvalidArgument,
                            "label matrix entry (" + std::to_string(i) + ", " + std::to_string(j) +
                                ") is not 0 or 1");
            }
        }
    }
}

LabelMatrix LabelMatrix::from_rows(const std::vector<std::vector<int>>& rows) {
    const std::size_t m = rows.empty() ? 0 : rows.front().size();
    Storage values(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != m) {
            throw Error(ErrorKind::DimensionMismatch, "ragged label matrix rows");
        }
        for (std::size_t j = 0; j < m; ++j) {
            const int v = rows[i][j];
            if (v != 0 && v != 1) {
                throw Error(ErrorKind::InvalidArgument,
                            "label matrix entry (" + std::to_string(i) + ", " + std::to_string(j) +
                                ") is not 0 or 1");
            }
            values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                static_cast<std::uint8_t>(v);
        }
    }
    return LabelMatrix(std::move(values));
}

LabelMatrix LabelMatrix::with_row_filled(std::size_t i, std::uint8_t value) const {
    if (i >= rows()) {
        throw Error(ErrorKind::UnknownPoint, "point " + std::to_string(i) + " out of range");
    }
    LabelMatrix copy = *this;
    copy.values_.row(static_cast<Eigen::Index>(i)).setConstant(value);
    return copy;
}

void DependencyStructure::validate(std::size_t num_lfs) const {
    std::vector<bool> used(num_lfs, false);
    for (const auto& clique : cliques) {
        if (clique.size() < 2) {
            throw Error(ErrorKind::InvalidArgument, "a clique needs at least 2 labelling functions");
        }
        if (clique.size() > 2) {
            throw Error(ErrorKind::InvalidArgument,
                        "cliques larger than 2 labelling functions are not supported");
        }
        for (std::size_t j : clique) {
            if (j >= num_lfs) {
                throw Error(ErrorKind::InvalidArgument,
                            "clique index " + std::to_string(j) + " out of range for " +
                                std::to_string(num_lfs) + " labelling functions");
            }
            if (used[j]) {
                throw Error(ErrorKind::InvalidArgument,
                            "labelling function " + std::to_string(j) + " appears in two cliques");
            }
            used[j] = true;
        }
    }
}

std::string config_key(std::span<const std::uint8_t> config) {
    std::string key(config.size(), '0');
    for (std::size_t j = 0; j < config.size(); ++j) {
        key[j] = static_cast<char>('0' + config[j]);
    }
    return key;
}

std::optional<std::size_t> BucketIndex::find(std::span<const std::uint8_t> config) const {
    if (config.size() != configs.cols()) return std::nullopt;
    for (std::size_t b = 0; b < size(); ++b) {
        if (std::equal(config.begin(), config.end(), configs.row(b).begin())) return b;
    }
    return std::nullopt;
}

BucketIndex build_buckets(const LabelMatrix& lm) {
    const std::size_t n = lm.rows();
    const std::size_t m = lm.cols();
    BucketIndex index;
    index.point_to_bucket.resize(n);

    std::unordered_map<std::string, std::size_t> seen;
    std::vector<std::size_t> first_row;
    for (std::size_t i = 0; i < n; ++i) {
        auto [it, inserted] = seen.try_emplace(config_key(lm.row(i)), first_row.size());
        if (inserted) {
            first_row.push_back(i);
            index.counts.push_back(0);
            index.members.emplace_back();
        }
        index.point_to_bucket[i] = it->second;
        ++index.counts[it->second];
        index.members[it->second].push_back(i);
    }

    LabelMatrix::Storage configs(static_cast<Eigen::Index>(first_row.size()),
                                 static_cast<Eigen::Index>(m));
    for (std::size_t b = 0; b < first_row.size(); ++b) {
        configs.row(static_cast<Eigen::Index>(b)) =
            lm.values().row(static_cast<Eigen::Index>(first_row[b]));
    }
    index.configs = LabelMatrix(std::move(configs));
    return index;
}

std::vector<Factor> factor_layout(const DependencyStructure& dep, std::size_t num_lfs) {
    dep.validate(num_lfs);
    std::vector<std::optional<std::size_t>> clique_of(num_lfs);
    for (std::size_t k = 0; k < dep.cliques.size(); ++k) {
        for (std::size_t j : dep.cliques[k]) clique_of[j] = k;
    }
    std::vector<Factor> factors;
    for (std::size_t j = 0; j < num_lfs; ++j) {
        if (!clique_of[j]) {
            factors.push_back({{j}, {j}});
            continue;
        }
        const auto& clique = dep.cliques[*clique_of[j]];
        const std::size_t a = std::min(clique[0], clique[1]);
        const std::size_t b = std::max(clique[0], clique[1]);
        if (j == a) factors.push_back({{a, b}, {a, b, num_lfs + *clique_of[j]}});
    }
    return factors;
}

std::vector<std::size_t> column_owners(const DependencyStructure& dep, std::size_t num_lfs) {
    const auto factors = factor_layout(dep, num_lfs);
    std::vector<std::size_t> owner(num_lfs + dep.cliques.size(), 0);
    for (std::size_t f = 0; f < factors.size(); ++f) {
        for (std::size_t col : factors[f].columns) owner[col] = f;
    }
    return owner;
}

std::vector<IndexPair> omega_pairs(const DependencyStructure& dep, std::size_t num_lfs) {
    const auto owner = column_owners(dep, num_lfs);
    std::vector<IndexPair> omega;
    for (std::size_t i = 0; i < owner.size(); ++i) {
        for (std::size_t j = i + 1; j < owner.size(); ++j) {
            if (owner[i] != owner[j]) omega.emplace_back(i, j);
        }
    }
    return omega;
}

MomentInput psi_expand(const LabelMatrix& lm, const DependencyStructure& dep) {
    const std::size_t n = lm.rows();
    const std::size_t m = lm.cols();
    MomentInput out;
    out.num_lfs = m;
    out.factors = factor_layout(dep, m);

    const std::size_t d = m + dep.cliques.size();
    out.psi.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    out.psi.leftCols(static_cast<Eigen::Index>(m)) = lm.values().cast<double>();
    for (std::size_t k = 0; k < dep.cliques.size(); ++k) {
        const auto a = static_cast<Eigen::Index>(dep.cliques[k][0]);
        const auto b = static_cast<Eigen::Index>(dep.cliques[k][1]);
        out.psi.col(static_cast<Eigen::Index>(m + k)) =
            out.psi.col(a).cwiseProduct(out.psi.col(b));
    }
    if (n > 0) {
        out.col_means = out.psi.colwise().mean().transpose();
    } else {
        out.col_means = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    }
    return out;
}

namespace {

Eigen::MatrixXd spectral_inverse(const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>& eig) {
    const Eigen::VectorXd inv_values = eig.eigenvalues().cwiseInverse();
    return eig.eigenvectors() * inv_values.asDiagonal() * eig.eigenvectors().transpose();
}

double condition_of(const Eigen::VectorXd& eigenvalues) {
    const double hi = eigenvalues.cwiseAbs().maxCoeff();
    const double lo = eigenvalues.minCoeff();
    if (lo <= 0.0) return std::numeric_limits<double>::infinity();
    return hi / lo;
}

}  // namespace

CovarianceResult covariance(const Eigen::MatrixXd& psi) {
    if (psi.rows() < 2) {
        throw Error(ErrorKind::InvalidArgument, "covariance needs at least 2 rows");
    }
    const auto n = static_cast<double>(psi.rows());
    const Eigen::RowVectorXd mean = psi.colwise().mean();
    const Eigen::MatrixXd centered = psi.rowwise() - mean;

    CovarianceResult out;
    out.sigma = (centered.transpose() * centered) / n;
    out.sigma = 0.5 * (out.sigma + out.sigma.transpose());

    const Eigen::Index d = out.sigma.rows();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.sigma);
    out.condition_number = condition_of(eig.eigenvalues());
    if (out.condition_number <= kMaxConditionNumber) {
        out.sigma_inv = spectral_inverse(eig);
        return out;
    }

    // Constant or duplicated statistic columns: regularize and retry.
    const double delta = 1e-6 * out.sigma.trace() / static_cast<double>(d);
    if (!(delta > 0.0)) {
        throw Error(ErrorKind::NumericallySingular,
                    "covariance is identically zero; every statistic column is constant");
    }
    const Eigen::MatrixXd ridged =
        out.sigma + delta * Eigen::MatrixXd::Identity(d, d);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ridged_eig(ridged);
    out.sigma_inv = spectral_inverse(ridged_eig);
    out.ridged = true;
    if (!out.sigma_inv.allFinite() ||
        !(ridged * out.sigma_inv).isApprox(Eigen::MatrixXd::Identity(d, d), 1e-6)) {
        throw Error(ErrorKind::NumericallySingular, "covariance could not be inverted after ridging");
    }
    return out;
}

MomentInput make_moment_input(const LabelMatrix& lm, const DependencyStructure& dep) {
    MomentInput mi = psi_expand(lm, dep);
    mi.omega = omega_pairs(dep, lm.cols());
    if (mi.omega.empty()) {
        throw Error(ErrorKind::InvalidArgument,
                    "dependency structure leaves no conditionally independent pairs");
    }
    auto cov = covariance(mi.psi);
    mi.sigma = std::move(cov.sigma);
    mi.sigma_inv = std::move(cov.sigma_inv);
    mi.ridged = cov.ridged;
    return mi;
}

}  // namespace weasul
