#include "ssd/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

namespace ssd {

using nlohmann::json;

namespace {

Gender gender_or_throw(const std::string& s) {
  auto g = parse_gender(s);
  if (!g) throw data_error("unknown gender '" + s + "'");
  return *g;
}

Task task_or_throw(const std::string& s) {
  auto t = parse_task(s);
  if (!t) throw data_error("unknown task '" + s + "'");
  return *t;
}

json stat_json(const Stat& s) { return json{{"mean", s.mean}, {"std", s.std}, {"n", s.n}}; }
Stat stat_from(const json& j) { return {j.at("mean").get<double>(), j.at("std").get<double>(), j.at("n").get<std::size_t>()}; }

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::string pm(const Stat& s) { return fmt(s.mean) + " ± " + fmt(s.std); }

}  // namespace

json to_json(const RunResult& r) {
  json g = json::object();
  for (const auto& [gender, s] : r.per_gender)
    g[std::string(to_string(gender))] = {{"macro_f1", s.macro_f1}, {"macro_recall", s.macro_recall}, {"records", s.records}};
  json j{{"run_id", r.run_id}, {"model", r.model},         {"task", std::string(to_string(r.task))},
         {"mode", r.mode},     {"scoring", r.scoring},     {"seed", r.seed},
         {"macro_f1", r.macro_f1}, {"macro_recall", r.macro_recall}, {"records", r.records},
         {"per_gender", g},    {"confusion", to_json(r.confusion)}};
  if (r.asr) j["asr"] = *r.asr;
  return j;
}

RunResult run_result_from_json(const json& j) {
  RunResult r;
  try {
    r.run_id = j.at("run_id").get<std::string>();
    r.model = j.at("model").get<std::string>();
    r.task = task_or_throw(j.at("task").get<std::string>());
    r.mode = j.at("mode").get<std::string>();
    r.scoring = j.value("scoring", "subset");
    r.seed = j.at("seed").get<std::uint64_t>();
    r.macro_f1 = j.at("macro_f1").get<double>();
    r.macro_recall = j.at("macro_recall").get<double>();
    r.records = j.value("records", std::size_t{0});
    for (const auto& [name, s] : j.at("per_gender").items())
      r.per_gender[gender_or_throw(name)] = {s.at("macro_f1").get<double>(), s.at("macro_recall").get<double>(),
                                             s.value("records", std::size_t{0})};
    if (j.contains("confusion")) r.confusion = confusion_from_json(j.at("confusion"));
    if (j.contains("asr")) r.asr = j.at("asr");
  } catch (const json::exception& e) {
    throw data_error(std::string("malformed run result: ") + e.what());
  }
  return r;
}

void write_runs(const std::filesystem::path& path, const std::vector<RunResult>& runs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw runtime_error("cannot write run results: " + path.string());
  for (const auto& r : runs) out << to_json(r).dump() << '\n';
}

std::vector<RunResult> read_runs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open run results: " + path.string());
  std::vector<RunResult> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(run_result_from_json(json::parse(line)));
    } catch (const json::parse_error& e) {
      throw data_error("malformed run results in " + path.string() + ": " + e.what());
    }
  }
  return out;
}

std::vector<RunResult> read_run_store(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<RunResult> out;
  for (const auto& f : files) {
    auto runs = read_runs(f);
    out.insert(out.end(), runs.begin(), runs.end());
  }
  return out;
}

std::vector<RunResult> run_results(const Evaluation& ev, const std::string& model, std::uint64_t seed,
                                   const std::string& run_prefix) {
  std::vector<RunResult> out;
  for (const auto& [task, te] : ev.tasks) {
    RunResult r;
    r.model = model;
    r.task = task;
    r.mode = ev.pipeline;
    r.scoring = std::string(to_string(ev.mode));
    r.seed = seed;
    r.run_id = run_prefix + "/" + ev.pipeline + "/" + std::string(to_string(task)) + "/seed" + std::to_string(seed);
    r.macro_f1 = te.scores.macro_f1;
    r.macro_recall = te.scores.macro_recall;
    r.records = te.golds.size();
    for (const auto& [g, s] : te.per_gender) {
      const auto n = static_cast<std::size_t>(std::count(te.genders.begin(), te.genders.end(), g));
      r.per_gender[g] = {s.macro_f1, s.macro_recall, n};
    }
    r.confusion = te.confusion;
    out.push_back(std::move(r));
  }
  return out;
}

Stat mean_std(const std::vector<double>& values) {
  Stat s;
  s.n = values.size();
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(s.n);
  // Identical values report their exact value and zero spread, which the
  // rounded division above does not guarantee.
  if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values.front(); })) {
    s.mean = values.front();
    return s;
  }
  if (s.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.n - 1));
  }
  return s;
}

Summary aggregate_seeds(const std::vector<RunResult>& runs) {
  if (runs.empty()) throw usage_error("aggregate_seeds: no runs");
  // Canonical order so the result does not depend on input order.
  std::vector<const RunResult*> sorted;
  for (const auto& r : runs) sorted.push_back(&r);
  std::sort(sorted.begin(), sorted.end(), [](const RunResult* a, const RunResult* b) {
    return std::tie(a->seed, a->run_id) < std::tie(b->seed, b->run_id);
  });
  const RunResult& first = *sorted.front();
  Summary s;
  s.model = first.model;
  s.task = first.task;
  s.mode = first.mode;
  std::vector<double> f1, recall;
  std::map<Gender, std::vector<double>> gf1, grec;
  for (const RunResult* r : sorted) {
    if (r->task != first.task || r->mode != first.mode || r->model != first.model)
      throw usage_error("aggregate_seeds: runs mix tasks, modes or models");
    f1.push_back(r->macro_f1);
    recall.push_back(r->macro_recall);
    for (const auto& [g, gs] : r->per_gender) {
      gf1[g].push_back(gs.macro_f1);
      grec[g].push_back(gs.macro_recall);
    }
    s.run_ids.push_back(r->run_id);
  }
  s.macro_f1 = mean_std(f1);
  s.macro_recall = mean_std(recall);
  for (const auto& [g, v] : gf1) s.gender_f1[g] = mean_std(v);
  for (const auto& [g, v] : grec) s.gender_recall[g] = mean_std(v);
  s.single_run = sorted.size() == 1;
  return s;
}

const Summary* MetricReport::find(const std::string& model, Task task, const std::string& mode) const {
  for (const auto& s : summaries)
    if (s.model == model && s.task == task && s.mode == mode) return &s;
  return nullptr;
}

MetricReport build_report(const std::vector<RunResult>& runs) {
  if (runs.empty()) throw usage_error("build_report: no runs");
  MetricReport report;
  report.scoring = runs.front().scoring;
  std::map<std::tuple<std::string, std::string, Task>, std::vector<RunResult>> groups;
  for (const auto& r : runs) groups[{r.model, r.mode, r.task}].push_back(r);
  for (const auto& [key, group] : groups) report.summaries.push_back(aggregate_seeds(group));
  std::set<std::pair<std::string, Task>> keys;
  for (const auto& s : report.summaries) keys.insert({s.model, s.task});
  for (const auto& [model, task] : keys) {
    const Summary* c = report.find(model, task, "cascade");
    const Summary* f = report.find(model, task, "flat");
    if (c && f) report.deltas.push_back({model, task, c->macro_f1.mean - f->macro_f1.mean});
  }
  json ids = json::array();
  for (const auto& r : runs) ids.push_back(r.run_id);
  report.metadata["run_ids"] = ids;
  report.metadata["run_count"] = runs.size();
  return report;
}

json to_json(const MetricReport& r) {
  json summaries = json::array();
  for (const auto& s : r.summaries) {
    json gf1 = json::object(), grec = json::object();
    for (const auto& [g, st] : s.gender_f1) gf1[std::string(to_string(g))] = stat_json(st);
    for (const auto& [g, st] : s.gender_recall) grec[std::string(to_string(g))] = stat_json(st);
    summaries.push_back({{"model", s.model},
                         {"task", std::string(to_string(s.task))},
                         {"mode", s.mode},
                         {"macro_f1", stat_json(s.macro_f1)},
                         {"macro_recall", stat_json(s.macro_recall)},
                         {"gender_macro_f1", gf1},
                         {"gender_macro_recall", grec},
                         {"run_ids", s.run_ids},
                         {"single_run", s.single_run}});
  }
  json deltas = json::array();
  for (const auto& d : r.deltas)
    deltas.push_back({{"model", d.model}, {"task", std::string(to_string(d.task))}, {"delta_f1", d.value}});
  return json{{"scoring", r.scoring}, {"summaries", summaries}, {"delta_f1", deltas}, {"metadata", r.metadata}};
}

MetricReport metric_report_from_json(const json& j) {
  MetricReport r;
  try {
    r.scoring = j.at("scoring").get<std::string>();
    for (const auto& s : j.at("summaries")) {
      Summary x;
      x.model = s.at("model").get<std::string>();
      x.task = task_or_throw(s.at("task").get<std::string>());
      x.mode = s.at("mode").get<std::string>();
      x.macro_f1 = stat_from(s.at("macro_f1"));
      x.macro_recall = stat_from(s.at("macro_recall"));
      for (const auto& [g, st] : s.at("gender_macro_f1").items()) x.gender_f1[gender_or_throw(g)] = stat_from(st);
      for (const auto& [g, st] : s.at("gender_macro_recall").items()) x.gender_recall[gender_or_throw(g)] = stat_from(st);
      x.run_ids = s.at("run_ids").get<std::vector<std::string>>();
      x.single_run = s.at("single_run").get<bool>();
      r.summaries.push_back(std::move(x));
    }
    for (const auto& d : j.at("delta_f1"))
      r.deltas.push_back({d.at("model").get<std::string>(), task_or_throw(d.at("task").get<std::string>()),
                          d.at("delta_f1").get<double>()});
    r.metadata = j.at("metadata");
  } catch (const json::exception& e) {
    throw data_error(std::string("malformed metric report: ") + e.what());
  }
  return r;
}

GenderTable gender_table(const std::vector<RunResult>& runs) {
  GenderTable t;
  std::set<Gender> genders;
  std::set<Task> tasks;
  std::map<std::pair<std::string, std::string>, std::vector<const RunResult*>> rows;
  for (const auto& r : runs) {
    for (const auto& [g, _] : r.per_gender) genders.insert(g);
    tasks.insert(r.task);
    rows[{r.model, r.mode}].push_back(&r);
  }
  t.tasks.assign(tasks.begin(), tasks.end());
  for (Gender g : {Gender::female, Gender::male}) {
    if (genders.count(g)) t.genders.emplace_back(to_string(g));
    else t.notices.push_back("no runs carry " + std::string(to_string(g)) + " records; column omitted");
  }
  if (genders.count(Gender::unknown)) t.genders.emplace_back(to_string(Gender::unknown));
  if (!genders.count(Gender::female) && !genders.count(Gender::male))
    t.notices.push_back("runs lack gender labels; overall-only table");

  for (const auto& [key, group] : rows) {
    GenderTable::Row row;
    row.model = key.first;
    row.mode = key.second;
    for (Task task : t.tasks) {
      std::vector<double> all;
      std::map<std::string, std::vector<double>> per;
      for (const RunResult* r : group) {
        if (r->task != task) continue;
        all.push_back(r->macro_f1);
        for (const auto& [g, s] : r->per_gender) per[std::string(to_string(g))].push_back(s.macro_f1);
      }
      if (all.empty()) continue;
      row.cells[{"all", task}] = mean_std(all);
      for (const auto& g : t.genders)
        if (per.count(g)) row.cells[{g, task}] = mean_std(per[g]);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::optional<ReportFormat> parse_report_format(std::string_view s) noexcept {
  if (s == "markdown" || s == "md") return ReportFormat::markdown;
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  return std::nullopt;
}

std::string render_markdown(const MetricReport& report, const std::vector<RunResult>& runs) {
  std::ostringstream md;
  std::set<std::string> models, modes;
  for (const auto& s : report.summaries) {
    models.insert(s.model);
    modes.insert(s.mode);
  }
  const bool has_flat = modes.count("flat") != 0;
  const bool has_cascade = modes.count("cascade") != 0;
  const std::string main_mode = has_cascade ? "cascade" : "flat";
  auto cell = [&](const std::string& model, Task task, const std::string& mode, bool recall) {
    const Summary* s = report.find(model, task, mode);
    return s ? pm(recall ? s->macro_recall : s->macro_f1) : std::string("-");
  };
  auto delta = [&](const std::string& model, Task task) {
    for (const auto& d : report.deltas)
      if (d.model == model && d.task == task) return std::string(d.value >= 0 ? "+" : "") + fmt(d.value);
    return std::string("-");
  };

  md << "## Main results (" << main_mode << ", scoring: " << report.scoring << ")\n\n";
  md << "| Model | T1 F1 | T1 Recall | T2 F1 |" << (has_flat && has_cascade ? " T2 Δ F1 |" : "")
     << " T2 Recall | T3 F1 |" << (has_flat && has_cascade ? " T3 Δ F1 |" : "") << " T3 Recall |\n";
  md << "|---|---|---|---|" << (has_flat && has_cascade ? "---|" : "") << "---|---|"
     << (has_flat && has_cascade ? "---|" : "") << "---|\n";
  for (const auto& m : models) {
    md << "| " << m << " | " << cell(m, Task::t1, main_mode, false) << " | " << cell(m, Task::t1, main_mode, true)
       << " | " << cell(m, Task::t2, main_mode, false) << " | ";
    if (has_flat && has_cascade) md << delta(m, Task::t2) << " | ";
    md << cell(m, Task::t2, main_mode, true) << " | " << cell(m, Task::t3, main_mode, false) << " | ";
    if (has_flat && has_cascade) md << delta(m, Task::t3) << " | ";
    md << cell(m, Task::t3, main_mode, true) << " |\n";
  }

  if (has_flat && has_cascade) {
    md << "\n## Ablation (flat, no cascade)\n\n";
    md << "| Model | T2 F1 | T2 Recall | T3 F1 | T3 Recall |\n|---|---|---|---|---|\n";
    for (const auto& m : models)
      md << "| " << m << " | " << cell(m, Task::t2, "flat", false) << " | " << cell(m, Task::t2, "flat", true) << " | "
         << cell(m, Task::t3, "flat", false) << " | " << cell(m, Task::t3, "flat", true) << " |\n";
  }

  const GenderTable gt = gender_table(runs);
  md << "\n## Gender-stratified Macro F1\n\n";
  for (const auto& n : gt.notices) md << "> " << n << "\n";
  if (!gt.notices.empty()) md << "\n";
  std::vector<std::string> cols = gt.genders.empty() ? std::vector<std::string>{"all"} : gt.genders;
  md << "| Model | Mode | Gender |";
  for (Task task : gt.tasks) md << " " << to_string(task) << " |";
  md << "\n|---|---|---|";
  for (std::size_t i = 0; i < gt.tasks.size(); ++i) md << "---|";
  md << "\n";
  for (const auto& row : gt.rows)
    for (const auto& g : cols) {
      md << "| " << row.model << " | " << row.mode << " | " << g << " |";
      for (Task task : gt.tasks) {
        auto it = row.cells.find({g, task});
        md << " " << (it == row.cells.end() ? std::string("-") : pm(it->second)) << " |";
      }
      md << "\n";
    }
  md << "\nRuns: " << report.metadata.value("run_count", std::size_t{0}) << " (μ ± sample σ over seeds)\n";
  return md.str();
}

std::string render_csv(const MetricReport& report) {
  std::ostringstream csv;
  csv << "model,mode,task,gender,metric,mean,std,n\n";
  std::set<Gender> genders;
  for (const auto& s : report.summaries)
    for (const auto& [g, _] : s.gender_f1) genders.insert(g);
  auto row = [&](const Summary& s, const std::string& g, const char* metric, const Stat& st) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%zu", st.mean, st.std, st.n);
    csv << s.model << ',' << s.mode << ',' << to_string(s.task) << ',' << g << ',' << metric << ',' << buf << '\n';
  };
  for (const auto& s : report.summaries) {
    row(s, "all", "macro_f1", s.macro_f1);
    row(s, "all", "macro_recall", s.macro_recall);
    for (Gender g : genders) {
      const std::string name(to_string(g));
      auto f = s.gender_f1.find(g);
      auto r = s.gender_recall.find(g);
      row(s, name, "macro_f1", f == s.gender_f1.end() ? Stat{} : f->second);
      row(s, name, "macro_recall", r == s.gender_recall.end() ? Stat{} : r->second);
    }
  }
  return csv.str();
}

void emit(const MetricReport& report, const std::vector<RunResult>& runs, ReportFormat format,
          const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw runtime_error("cannot write report: " + path.string());
  switch (format) {
    case ReportFormat::markdown: out << render_markdown(report, runs); break;
    case ReportFormat::csv: out << render_csv(report); break;
    case ReportFormat::json: out << to_json(report).dump(2) << '\n'; break;
  }
  if (!out) throw runtime_error("short write: " + path.string());
}

}  // namespace ssd
