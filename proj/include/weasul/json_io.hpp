#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "weasul/active_loop.hpp"
#include "weasul/core_data.hpp"
#include "weasul/dataset.hpp"
#include "weasul/discriminative.hpp"
#include "weasul/generative.hpp"
#include "weasul/query.hpp"

namespace weasul {

using Json = nlohmann::ordered_json;

// One JSON-lines history record. Field order is fixed:
// t, method, strategy, point_id, bucket, score_max, gen_accuracy, gen_f1,
// disc_accuracy, disc_f1, loss, alpha, diversity. Absent values are null.
Json record_to_json(const IterationRecord& rec);
IterationRecord record_from_json(const Json& j);

Json history_to_json(const RunHistory& history);
std::string history_to_jsonl(const RunHistory& history);
void write_jsonl(const std::filesystem::path& path, const RunHistory& history);
RunHistory read_jsonl(const std::filesystem::path& path);

Json diagnostics_to_json(const FitDiagnostics& diag, bool with_trace = true);
Json query_to_json(const QueryDecision& decision, const BucketIndex& buckets);
Json classifier_to_json(const LinearClassifier& model);
LinearClassifier classifier_from_json(const Json& j);

Json spec_to_json(const SyntheticSpec& spec);
// Missing fields take defaults except "seed", which is required.
SyntheticSpec spec_from_json(const Json& j);

Json schema_to_json(const TableSchema& schema);
TableSchema schema_from_json(const Json& j);

Json dependency_to_json(const DependencyStructure& dep);
DependencyStructure dependency_from_json(const Json& j);

// Overlays fields present in `j` on `base`. "alpha" may be a number or "auto".
FitConfig fit_config_from_json(const Json& j, FitConfig base = {});
Json fit_config_to_json(const FitConfig& cfg);

Json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace weasul
