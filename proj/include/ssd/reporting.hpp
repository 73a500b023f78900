#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ssd/cascade.hpp"
#include "ssd/dataset.hpp"
#include "ssd/metrics.hpp"

namespace ssd {

struct GenderScores {
  double macro_f1 = 0.0;
  double macro_recall = 0.0;
  std::size_t records = 0;
  bool operator==(const GenderScores&) const = default;
};

/// One (model, task, pipeline mode, seed) evaluation.
struct RunResult {
  std::string run_id;
  std::string model = "stand-in";
  Task task = Task::t1;
  std::string mode = "cascade";  ///< cascade | flat
  std::string scoring = "subset";
  std::uint64_t seed = 0;
  double macro_f1 = 0.0;
  double macro_recall = 0.0;
  std::size_t records = 0;
  std::map<Gender, GenderScores> per_gender;
  ConfusionMatrix confusion;
  std::optional<nlohmann::json> asr;
};

nlohmann::json to_json(const RunResult& r);
RunResult run_result_from_json(const nlohmann::json& j);
void write_runs(const std::filesystem::path& path, const std::vector<RunResult>& runs);
std::vector<RunResult> read_runs(const std::filesystem::path& path);
/// Every *.jsonl file in `dir`, in file-name order.
std::vector<RunResult> read_run_store(const std::filesystem::path& dir);

/// One RunResult per evaluated task.
std::vector<RunResult> run_results(const Evaluation& ev, const std::string& model, std::uint64_t seed,
                                   const std::string& run_prefix);

struct Stat {
  double mean = 0.0;
  double std = 0.0;  ///< sample (n-1); 0 for n = 1
  std::size_t n = 0;
  bool operator==(const Stat&) const = default;
};

Stat mean_std(const std::vector<double>& values);

struct Summary {
  std::string model;
  Task task = Task::t1;
  std::string mode;
  Stat macro_f1, macro_recall;
  std::map<Gender, Stat> gender_f1, gender_recall;
  std::vector<std::string> run_ids;
  bool single_run = false;
  bool operator==(const Summary&) const = default;
};

/// mu and sample sigma over homogeneous runs (same model, task, mode).
Summary aggregate_seeds(const std::vector<RunResult>& runs);

struct DeltaF1 {
  std::string model;
  Task task = Task::t1;
  double value = 0.0;  ///< cascade mean - flat mean
  bool operator==(const DeltaF1&) const = default;
};

struct MetricReport {
  std::string scoring = "subset";
  std::vector<Summary> summaries;  ///< ordered by (model, mode, task)
  std::vector<DeltaF1> deltas;     ///< only where both modes exist
  nlohmann::json metadata = nlohmann::json::object();

  const Summary* find(const std::string& model, Task task, const std::string& mode) const;
  bool operator==(const MetricReport&) const = default;
};

MetricReport build_report(const std::vector<RunResult>& runs);

nlohmann::json to_json(const MetricReport& r);
MetricReport metric_report_from_json(const nlohmann::json& j);

struct GenderTable {
  struct Row {
    std::string model, mode;
    std::map<std::pair<std::string, Task>, Stat> cells;  ///< (gender or "all", task)
  };
  std::vector<std::string> genders;  ///< columns present, "all" excluded
  std::vector<Task> tasks;
  std::vector<Row> rows;
  std::vector<std::string> notices;
};

GenderTable gender_table(const std::vector<RunResult>& runs);

enum class ReportFormat { markdown, csv, json };
std::optional<ReportFormat> parse_report_format(std::string_view s) noexcept;

std::string render_markdown(const MetricReport& report, const std::vector<RunResult>& runs);
std::string render_csv(const MetricReport& report);
void emit(const MetricReport& report, const std::vector<RunResult>& runs, ReportFormat format,
          const std::filesystem::path& path);

}  // namespace ssd
