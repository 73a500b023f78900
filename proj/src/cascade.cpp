#include "ssd/cascade.hpp"

namespace ssd {

using nlohmann::json;

void CascadeConfig::validate() const {
  if (!t1) throw usage_error("cascade needs a T1 backend");
  if (t1->labels() != LabelSpace::of(Task::t1)) throw usage_error("T1 backend must use the T1 label space");
  if (t2 && t2->labels() != LabelSpace::of(Task::t2)) throw usage_error("T2 backend must use the plain T2 label space");
  if (t3 && t3->labels() != LabelSpace::of(Task::t3)) throw usage_error("T3 backend must use the plain T3 label space");
  if (threshold && !(*threshold > 0.0 && *threshold < 1.0)) throw usage_error("T1 threshold must be in (0, 1)");
}

json to_json(const CascadePrediction& p) {
  json j{{"id", p.id},
         {"t1_pred", LabelSpace::of(Task::t1).classes[static_cast<std::size_t>(p.t1_pred)]},
         {"routed", p.routed}};
  j["t2_pred"] = p.t2_pred ? json(LabelSpace::of(Task::t2).classes[static_cast<std::size_t>(*p.t2_pred)]) : json();
  j["t3_pred"] = p.t3_pred ? json(LabelSpace::of(Task::t3).classes[static_cast<std::size_t>(*p.t3_pred)]) : json();
  return j;
}

int decide_t1(const ProbDist& dist, std::optional<double> threshold) {
  if (dist.size() != 2) throw usage_error("T1 distribution must have two entries");
  return dist.p[t1::disordered] >= threshold.value_or(0.5) ? t1::disordered : t1::typical;
}

CascadePrediction route(const CascadeConfig& config, const std::string& record_id) {
  CascadePrediction p;
  p.id = record_id;
  p.t1_pred = decide_t1(config.t1->probs(record_id), config.threshold);
  p.routed = p.t1_pred == t1::disordered;
  if (!p.routed) return p;
  if (config.t2) p.t2_pred = static_cast<int>(config.t2->probs(record_id).argmax());
  if (config.t3) p.t3_pred = static_cast<int>(config.t3->probs(record_id).argmax());
  return p;
}

std::string_view to_string(ScoringMode m) noexcept {
  return m == ScoringMode::subset ? "subset" : "end-to-end";
}

std::optional<ScoringMode> parse_scoring_mode(std::string_view s) noexcept {
  if (s == "subset") return ScoringMode::subset;
  if (s == "end-to-end" || s == "end_to_end") return ScoringMode::end_to_end;
  return std::nullopt;
}

TaskEvaluation make_task_evaluation(Task task, LabelSpace space, std::vector<std::string> ids, std::vector<int> golds,
                                    std::vector<int> preds, std::vector<Gender> genders) {
  TaskEvaluation e;
  e.task = task;
  e.confusion = confusion(preds, golds, space.size());
  e.scores = score(e.confusion);
  std::map<Gender, std::pair<std::vector<int>, std::vector<int>>> split_by_gender;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    auto& [p, g] = split_by_gender[genders[i]];
    p.push_back(preds[i]);
    g.push_back(golds[i]);
  }
  for (const auto& [gender, pg] : split_by_gender)
    e.per_gender[gender] = score(confusion(pg.first, pg.second, space.size()));
  e.space = std::move(space);
  e.ids = std::move(ids);
  e.golds = std::move(golds);
  e.preds = std::move(preds);
  e.genders = std::move(genders);
  return e;
}

namespace {

/// Accumulates scored rows for one task.
struct Rows {
  std::vector<std::string> ids;
  std::vector<int> golds, preds;
  std::vector<Gender> genders;
  void add(const SampleRecord& r, int gold, int pred) {
    ids.push_back(r.id);
    golds.push_back(gold);
    preds.push_back(pred);
    genders.push_back(r.gender);
  }
};

LabelSpace scored_space(Task task, ScoringMode mode) {
  return mode == ScoringMode::subset ? LabelSpace::of(task) : LabelSpace::flat(task);
}

void finish(Evaluation& ev, Task task, ScoringMode mode, Rows&& rows) {
  if (rows.golds.empty()) return;  // nothing scorable (e.g. no disordered test records)
  ev.tasks[task] = make_task_evaluation(task, scored_space(task, mode), std::move(rows.ids), std::move(rows.golds),
                                        std::move(rows.preds), std::move(rows.genders));
}

/// Maps an argmax in `backend_space` to the scored space.
int convert_prediction(int pred, const LabelSpace& backend_space, ScoringMode mode) {
  if (mode == ScoringMode::subset) {
    if (!backend_space.includes_typical) return pred;
    return pred == 0 ? kNoPrediction : pred - 1;
  }
  return backend_space.includes_typical ? pred : pred + 1;
}

}  // namespace

Evaluation evaluate_cascade(const CascadeConfig& config, const std::vector<SampleRecord>& test, ScoringMode mode) {
  config.validate();
  if (test.empty()) throw data_error("empty test set");
  Evaluation ev;
  ev.pipeline = "cascade";
  ev.mode = mode;
  Rows t1_rows, t2_rows, t3_rows;
  for (const auto& r : test) {
    CascadePrediction p = route(config, r.id);
    t1_rows.add(r, r.t1_label, p.t1_pred);
    auto add_downstream = [&](Task task, Rows& rows, const std::optional<int>& pred) {
      const auto gold = gold_label(r, scored_space(task, mode));
      if (!gold) return;
      if (mode == ScoringMode::subset) rows.add(r, *gold, p.routed ? *pred : kNoPrediction);
      else rows.add(r, *gold, p.routed ? *pred + 1 : 0);
    };
    if (config.t2) add_downstream(Task::t2, t2_rows, p.t2_pred);
    if (config.t3) add_downstream(Task::t3, t3_rows, p.t3_pred);
    ev.predictions.push_back(std::move(p));
  }
  finish(ev, Task::t1, mode, std::move(t1_rows));
  finish(ev, Task::t2, mode, std::move(t2_rows));
  finish(ev, Task::t3, mode, std::move(t3_rows));
  return ev;
}

Evaluation evaluate_flat(const FlatBackends& backends, const std::vector<SampleRecord>& test, ScoringMode mode) {
  if (test.empty()) throw data_error("empty test set");
  if (backends.t1 && backends.t1->labels() != LabelSpace::of(Task::t1))
    throw usage_error("flat T1 backend must use the T1 label space");
  Evaluation ev;
  ev.pipeline = "flat";
  ev.mode = mode;
  Rows t1_rows, t2_rows, t3_rows;
  for (const auto& r : test) {
    if (backends.t1) t1_rows.add(r, r.t1_label, decide_t1(backends.t1->probs(r.id), backends.threshold));
    auto add = [&](Task task, const std::shared_ptr<ProbBackend>& backend, Rows& rows) {
      if (!backend) return;
      if (backend->labels().task != task) throw usage_error("flat backend label space does not match its task");
      const auto gold = gold_label(r, scored_space(task, mode));
      if (!gold) return;
      const int raw = static_cast<int>(backend->probs(r.id).argmax());
      rows.add(r, *gold, convert_prediction(raw, backend->labels(), mode));
    };
    add(Task::t2, backends.t2, t2_rows);
    add(Task::t3, backends.t3, t3_rows);
  }
  finish(ev, Task::t1, mode, std::move(t1_rows));
  finish(ev, Task::t2, mode, std::move(t2_rows));
  finish(ev, Task::t3, mode, std::move(t3_rows));
  return ev;
}

}  // namespace ssd
