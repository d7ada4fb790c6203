#include "weasul/json_io.hpp"

#include <fstream>
#include <sstream>

#include "weasul/errors.hpp"

namespace weasul {

namespace {

template <typename T>
Json optional_value(const std::optional<T>& v) {
    return v ? Json(*v) : Json(nullptr);
}

template <typename T>
std::optional<T> optional_from(const Json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<T>();
}

template <typename T>
T field_or(const Json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error(ErrorKind::SchemaError, std::string("field '") + key + "' has the wrong type");
    }
}

}  // namespace

Json record_to_json(const IterationRecord& rec) {
    Json j;
    j["t"] = rec.t;
    j["method"] = rec.method;
    j["strategy"] = rec.strategy;
    j["point_id"] = optional_value(rec.point_id);
    j["bucket"] = optional_value(rec.bucket);
    j["score_max"] = optional_value(rec.score_max);
    j["gen_accuracy"] = optional_value(rec.gen_accuracy);
    j["gen_f1"] = optional_value(rec.gen_f1);
    j["disc_accuracy"] = optional_value(rec.disc_accuracy);
    j["disc_f1"] = optional_value(rec.disc_f1);
    j["loss"] = optional_value(rec.loss);
    j["alpha"] = optional_value(rec.alpha);
    j["diversity"] = optional_value(rec.diversity);
    return j;
}

IterationRecord record_from_json(const Json& j) {
    IterationRecord rec;
    try {
        rec.t = j.at("t").get<std::size_t>();
        rec.method = field_or<std::string>(j, "method", "");
        rec.strategy = field_or<std::string>(j, "strategy", "");
        rec.point_id = optional_from<std::size_t>(j, "point_id");
        rec.bucket = optional_from<std::size_t>(j, "bucket");
        rec.score_max = optional_from<double>(j, "score_max");
        rec.gen_accuracy = optional_from<double>(j, "gen_accuracy");
        rec.gen_f1 = optional_from<double>(j, "gen_f1");
        rec.disc_accuracy = optional_from<double>(j, "disc_accuracy");
        rec.disc_f1 = optional_from<double>(j, "disc_f1");
        rec.loss = optional_from<double>(j, "loss");
        rec.alpha = optional_from<double>(j, "alpha");
        rec.diversity = optional_from<double>(j, "diversity");
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::SchemaError, std::string("malformed history record: ") + e.what());
    }
    return rec;
}

Json history_to_json(const RunHistory& history) {
    Json arr = Json::array();
    for (const auto& rec : history.records) arr.push_back(record_to_json(rec));
    return arr;
}

std::string history_to_jsonl(const RunHistory& history) {
    std::string out;
    for (const auto& rec : history.records) {
        out += record_to_json(rec).dump();
        out += '\n';
    }
    return out;
}

void write_jsonl(const std::filesystem::path& path, const RunHistory& history) {
    write_text_file(path, history_to_jsonl(history));
}

RunHistory read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    RunHistory history;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        Json j;
        try {
            j = Json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::SchemaError,
                        path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        history.records.push_back(record_from_json(j));
    }
    return history;
}

Json diagnostics_to_json(const FitDiagnostics& diag, bool with_trace) {
    Json j;
    j["converged"] = diag.converged;
    j["alpha"] = diag.alpha;
    j["iterations"] = diag.iterations;
    j["base_loss"] = diag.base_loss;
    j["penalty"] = diag.penalty;
    if (with_trace) j["loss_trace"] = diag.loss_trace;
    return j;
}

Json query_to_json(const QueryDecision& decision, const BucketIndex& buckets) {
    Json j;
    j["point_id"] = decision.point;
    j["bucket"] = decision.bucket;
    std::vector<int> config;
    for (auto v : buckets.configs.row(decision.bucket)) config.push_back(v);
    j["bucket_config"] = config;
    j["scores"] = decision.scores;
    return j;
}

Json classifier_to_json(const LinearClassifier& model) {
    Json j;
    j["weights"] = std::vector<double>(model.weights.data(), model.weights.data() + model.weights.size());
    j["bias"] = model.bias;
    j["epochs_run"] = model.epochs_run;
    j["best_validation_loss"] = model.best_validation_loss;
    return j;
}

LinearClassifier classifier_from_json(const Json& j) {
    LinearClassifier model;
    const auto w = j.at("weights").get<std::vector<double>>();
    model.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
    model.bias = j.at("bias").get<double>();
    model.epochs_run = field_or<std::size_t>(j, "epochs_run", 0);
    model.best_validation_loss = field_or<double>(j, "best_validation_loss", 0.0);
    return model;
}

Json spec_to_json(const SyntheticSpec& spec) {
    Json j;
    j["seed"] = spec.seed;
    j["n_train"] = spec.n_train;
    j["n_test"] = spec.n_test;
    j["class_means"] = spec.class_means;
    j["class_stddevs"] = spec.class_stddevs;
    j["thresholds"] = spec.thresholds;
    j["prior"] = SyntheticSpec::prior;
    return j;
}

SyntheticSpec spec_from_json(const Json& j) {
    if (!j.is_object()) throw Error(ErrorKind::SchemaError, "synthetic config must be a JSON object");
    if (!j.contains("seed")) throw Error(ErrorKind::SchemaError, "synthetic config is missing 'seed'");
    SyntheticSpec spec;
    spec.seed = field_or<std::uint64_t>(j, "seed", 0);
    spec.n_train = field_or<std::size_t>(j, "n_train", spec.n_train);
    spec.n_test = field_or<std::size_t>(j, "n_test", spec.n_test);
    spec.class_means = field_or(j, "class_means", spec.class_means);
    spec.class_stddevs = field_or(j, "class_stddevs", spec.class_stddevs);
    spec.thresholds = field_or(j, "thresholds", spec.thresholds);
    if (j.contains("prior") && j.at("prior").get<double>() != SyntheticSpec::prior) {
        throw Error(ErrorKind::SchemaError, "'prior' must be 0.5; synthetic classes are balanced");
    }
    spec.validate();
    return spec;
}

Json schema_to_json(const TableSchema& schema) {
    Json j;
    j["feature_columns"] = schema.feature_columns;
    j["label_matrix_columns"] = schema.label_matrix_columns;
    j["label_column"] = optional_value(schema.label_column);
    return j;
}

TableSchema schema_from_json(const Json& j) {
    if (!j.is_object()) throw Error(ErrorKind::SchemaError, "table schema must be a JSON object");
    if (!j.contains("label_matrix_columns")) {
        throw Error(ErrorKind::SchemaError, "table schema is missing 'label_matrix_columns'");
    }
    TableSchema schema;
    schema.feature_columns = field_or<std::vector<std::string>>(j, "feature_columns", {});
    schema.label_matrix_columns = field_or<std::vector<std::string>>(j, "label_matrix_columns", {});
    schema.label_column = optional_from<std::string>(j, "label_column");
    return schema;
}

Json dependency_to_json(const DependencyStructure& dep) {
    Json j;
    j["cliques"] = dep.cliques;
    return j;
}

DependencyStructure dependency_from_json(const Json& j) {
    DependencyStructure dep;
    dep.cliques = field_or<std::vector<std::vector<std::size_t>>>(j, "cliques", {});
    return dep;
}

FitConfig fit_config_from_json(const Json& j, FitConfig base) {
    if (!j.is_object()) throw Error(ErrorKind::SchemaError, "fit config must be a JSON object");
    if (j.contains("alpha")) {
        const auto& a = j.at("alpha");
        if (a.is_string() && a.get<std::string>() == "auto") {
            base.auto_alpha = true;
        } else if (a.is_number()) {
            base.alpha = a.get<double>();
            base.auto_alpha = false;
        } else {
            throw Error(ErrorKind::SchemaError, "'alpha' must be a number or \"auto\"");
        }
    }
    base.step_size = field_or(j, "step_size", base.step_size);
    base.max_iters = field_or(j, "max_iters", base.max_iters);
    base.tolerance = field_or(j, "tolerance", base.tolerance);
    base.seed = field_or(j, "seed", base.seed);
    base.epsilon = field_or(j, "epsilon", base.epsilon);
    try {
        base.validate();
    } catch (const Error& e) {
        throw Error(ErrorKind::SchemaError, e.what());
    }
    return base;
}

Json fit_config_to_json(const FitConfig& cfg) {
    Json j;
    j["alpha"] = cfg.auto_alpha ? Json("auto") : Json(cfg.alpha);
    j["step_size"] = cfg.step_size;
    j["max_iters"] = cfg.max_iters;
    j["tolerance"] = cfg.tolerance;
    j["seed"] = cfg.seed;
    j["epsilon"] = cfg.epsilon;
    return j;
}

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::SchemaError, path.string() + ": " + e.what());
    }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorKind::Io, "failed writing " + path.string());
}

}  // namespace weasul
