#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ssd/classifier.hpp"
#include "ssd/dataset.hpp"
#include "ssd/metrics.hpp"

namespace ssd {

/// T1 gates T2/T3: only samples predicted disordered reach the downstream backends.
struct CascadeConfig {
  std::shared_ptr<ProbBackend> t1;
  std::shared_ptr<ProbBackend> t2;  ///< may be null: T2 not evaluated
  std::shared_ptr<ProbBackend> t3;  ///< may be null: T3 not evaluated
  /// Route when p(disordered) >= threshold. Unset means argmax, with a tie
  /// going to disordered (equivalent to 0.5).
  std::optional<double> threshold;

  /// Backends must use exactly the plain T1/T2/T3 spaces; threshold in (0, 1).
  void validate() const;
};

struct CascadePrediction {
  std::string id;
  int t1_pred = t1::typical;
  std::optional<int> t2_pred;
  std::optional<int> t3_pred;
  bool routed = false;
};

nlohmann::json to_json(const CascadePrediction& p);

int decide_t1(const ProbDist& dist, std::optional<double> threshold);

CascadePrediction route(const CascadeConfig& config, const std::string& record_id);

/// subset: T2/T3 scored over gold-disordered records in the plain space; an
///   unrouted record counts as a miss for its gold class.
/// end_to_end: T2/T3 scored over every record in the space extended with
///   "typical"; an unrouted record is predicted typical.
/// T1 is always scored over every record.
enum class ScoringMode { subset, end_to_end };

std::string_view to_string(ScoringMode m) noexcept;
std::optional<ScoringMode> parse_scoring_mode(std::string_view s) noexcept;

struct TaskEvaluation {
  Task task = Task::t1;
  LabelSpace space;  ///< the space the scores refer to
  std::vector<std::string> ids;
  std::vector<int> golds;
  std::vector<int> preds;  ///< kNoPrediction for misses
  std::vector<Gender> genders;
  ConfusionMatrix confusion;
  ClassScores scores;
  std::map<Gender, ClassScores> per_gender;
};

struct Evaluation {
  std::string pipeline;  ///< "cascade" or "flat"
  ScoringMode mode = ScoringMode::subset;
  std::map<Task, TaskEvaluation> tasks;
  std::vector<CascadePrediction> predictions;  ///< cascade only
};

Evaluation evaluate_cascade(const CascadeConfig& config, const std::vector<SampleRecord>& test, ScoringMode mode);

/// Independent per-task backends. T2/T3 backends may use the plain space or
/// the space extended with "typical"; a "typical" prediction on a
/// gold-disordered record counts as a miss in subset mode.
struct FlatBackends {
  std::shared_ptr<ProbBackend> t1;
  std::shared_ptr<ProbBackend> t2;
  std::shared_ptr<ProbBackend> t3;
  std::optional<double> threshold;
};

Evaluation evaluate_flat(const FlatBackends& backends, const std::vector<SampleRecord>& test, ScoringMode mode);

/// Builds a TaskEvaluation (confusion, scores, per-gender scores) from parallel vectors.
TaskEvaluation make_task_evaluation(Task task, LabelSpace space, std::vector<std::string> ids, std::vector<int> golds,
                                    std::vector<int> preds, std::vector<Gender> genders);

}  // namespace ssd
