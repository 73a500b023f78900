#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ssd/augmentation.hpp"
#include "ssd/cascade.hpp"
#include "ssd/classifier.hpp"
#include "ssd/dataset.hpp"
#include "ssd/features.hpp"
#include "ssd/hpo.hpp"
#include "ssd/metrics.hpp"
#include "ssd/reporting.hpp"

namespace ssd {

enum class Backend { stand_in, external_probs };

struct ExperimentConfig {
  std::filesystem::path manifest;
  std::string experiment_id = "exp";
  std::uint64_t split_seed = 0;
  SplitRatios ratios;
  AugmentationPolicy policy;
  TrainConfig train;
  std::vector<Task> tasks{Task::t1, Task::t2, Task::t3};
  std::string mode = "cascade";  ///< cascade | flat | both
  ScoringMode scoring = ScoringMode::subset;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  Backend backend = Backend::stand_in;
  std::optional<std::filesystem::path> external_probs;
  std::filesystem::path output_dir = "out";
  double max_seconds = 12.0;  ///< clips are trimmed to this length
  bool class_weighting = false;
  int oversampling = 1;  ///< M_os; 1 disables
  /// Every seed trains with the same seed, so all runs are identical.
  bool deterministic = false;
  std::optional<double> threshold;
  FeatureConfig features;
  int jobs = 1;

  /// Throws usage errors; checks that referenced files exist.
  void validate() const;
  bool runs_cascade() const noexcept { return mode == "cascade" || mode == "both"; }
  bool runs_flat() const noexcept { return mode == "flat" || mode == "both"; }
};

nlohmann::json to_json(const ExperimentConfig& c);
/// Fields missing from `j` keep the values already in `base`.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, ExperimentConfig base = {});

std::string_view to_string(Backend b) noexcept;
std::optional<Backend> parse_backend(std::string_view s) noexcept;

struct ExperimentResult {
  std::vector<RunResult> runs;
  MetricReport report;
  std::size_t trainer_invocations = 0;
  std::filesystem::path output_dir;
};

/// Audio paths relative to the manifest are resolved against its directory.
std::filesystem::path resolve_audio_path(const std::filesystem::path& manifest, const SampleRecord& r);

/// Loads, resamples and trims one record's audio.
AudioClip load_record_audio(const std::filesystem::path& manifest, const SampleRecord& r, double max_seconds);

/// Writes runs/<id>_seed<k>.jsonl, models/, report.{json,md,csv} under
/// config.output_dir. On failure a FAILED marker is written and the error is
/// rethrown; files already produced are kept.
ExperimentResult run_experiment(const ExperimentConfig& config);

struct SplitCommandResult {
  SplitAssignment assignment;
  std::map<Split, std::map<std::string, int>> counts;
  std::string table;  ///< human-readable per-split class x gender counts
};

SplitCommandResult run_split_command(const std::filesystem::path& manifest, const SplitRatios& ratios,
                                     std::uint64_t seed, const std::filesystem::path& out);

/// Objective for hyperparameter search: validation Macro F1 of a stand-in
/// model trained with the trial's settings on the fixed train split.
struct SearchCommandConfig {
  ExperimentConfig base;
  std::string space = "classification";  ///< classification | asr
  Task task = Task::t1;
  hpo::SearchOptions options;
  /// Searched learning rates are sized for fine-tuning large encoders; the
  /// stand-in trainer uses lr * lr_scale.
  double lr_scale = 100.0;
};

hpo::SearchResult run_search_command(const SearchCommandConfig& config);

struct AugmentCommandResult {
  std::vector<AugmentationLog> logs;
  std::size_t written = 0;
};

/// Writes <out>/<id>.wav for every record and <out>/augment_log.jsonl.
AugmentCommandResult run_augment_command(const std::filesystem::path& manifest, const AugmentationPolicy& policy,
                                         std::uint64_t seed, const std::filesystem::path& out, double max_seconds);

}  // namespace ssd
