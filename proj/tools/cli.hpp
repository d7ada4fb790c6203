#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "weasul/active_loop.hpp"
#include "weasul/json_io.hpp"

namespace weasul::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kDataError = 2, kNumericFailure = 3 };

// Maps a module error to the documented exit code.
int exit_code_for(const Error& e) noexcept;

// Manifest layout (written by `synth`, may be hand-authored for other data):
//   {"train": "train.csv", "test": "test.csv", "schema": {...},
//    "dependency": {"cliques": [[1, 2]]}, "prior": 0.5, ...}
// Relative table paths resolve against the manifest's directory. Explicit
// train/test paths override the manifest's entries.
std::shared_ptr<ExperimentData> load_experiment(const std::optional<std::filesystem::path>& manifest,
                                                const std::optional<std::filesystem::path>& train,
                                                const std::optional<std::filesystem::path>& test);

Json make_manifest(const SyntheticSpec& spec);

std::string history_file_name(Method method, Strategy strategy, std::uint64_t seed);

struct NamedHistory {
    std::string file;
    RunHistory history;
};

// Per-iteration mean, min and max of `metric` across the histories of each
// (method, strategy) group. Throws SchemaError when histories in a group have
// different lengths, naming the files.
Json compare_histories(const std::vector<NamedHistory>& histories, const std::string& metric);
std::string render_table(const Json& summary);

// {t, value} pairs per history, one JSON object per line.
std::string plot_data(const std::vector<NamedHistory>& histories, const std::string& metric);

std::optional<double> metric_value(const IterationRecord& rec, const std::string& metric);

// Full command-line entry point; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace weasul::cli
