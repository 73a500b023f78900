#include <algorithm>
#include <sstream>

#include "doctest.h"
#include "ssd/reporting.hpp"
#include "support.hpp"

using namespace ssd;

namespace {

RunResult run(Task task, const std::string& mode, std::uint64_t seed, double f1, double rec = 0.5,
              bool genders = true) {
  RunResult r;
  r.task = task;
  r.mode = mode;
  r.seed = seed;
  r.run_id = "x/" + mode + "/" + std::string(to_string(task)) + "/seed" + std::to_string(seed);
  r.macro_f1 = f1;
  r.macro_recall = rec;
  r.records = 10;
  if (genders) {
    r.per_gender[Gender::female] = {f1 + 0.01, rec, 5};
    r.per_gender[Gender::male] = {f1 - 0.01, rec, 5};
  }
  r.confusion = ConfusionMatrix(2);
  return r;
}

std::vector<RunResult> full_fixture() {
  std::vector<RunResult> runs;
  for (std::uint64_t s = 0; s < 3; ++s)
    for (Task t : kAllTasks) {
      runs.push_back(run(t, "cascade", s, 0.6 + 0.1 * s));
      if (t != Task::t1) runs.push_back(run(t, "flat", s, 0.5 + 0.05 * s));
    }
  for (std::uint64_t s = 0; s < 3; ++s) runs.push_back(run(Task::t1, "flat", s, 0.6 + 0.1 * s));
  return runs;
}

}  // namespace

TEST_CASE("mean and sample std") {
  const auto s = mean_std({0.5, 0.7});
  CHECK(s.mean == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(s.std == doctest::Approx(std::sqrt(0.02)).epsilon(1e-12));
  CHECK(s.std == doctest::Approx(0.1414).epsilon(1e-3));
  const auto one = mean_std({0.3});
  CHECK(one.mean == 0.3);
  CHECK(one.std == 0.0);
  CHECK(one.n == 1);
}

TEST_CASE("aggregate_seeds") {
  std::vector<RunResult> same(10, run(Task::t2, "cascade", 0, 0.42));
  for (std::size_t i = 0; i < same.size(); ++i) same[i].seed = i;
  const auto s = aggregate_seeds(same);
  CHECK(s.macro_f1.std == 0.0);
  CHECK(s.macro_recall.std == 0.0);
  for (const auto& [g, st] : s.gender_f1) CHECK(st.std == 0.0);
  CHECK(s.run_ids.size() == 10);
  CHECK_FALSE(s.single_run);
  CHECK(aggregate_seeds({same[0]}).single_run);

  auto mixed = same;
  mixed[3].task = Task::t3;
  CHECK_THROWS_AS(aggregate_seeds(mixed), Error);
  CHECK_THROWS_AS(aggregate_seeds({}), Error);

  auto runs = full_fixture();
  std::vector<RunResult> t2c;
  for (const auto& r : runs)
    if (r.task == Task::t2 && r.mode == "cascade") t2c.push_back(r);
  auto permuted = t2c;
  std::reverse(permuted.begin(), permuted.end());
  CHECK(aggregate_seeds(permuted) == aggregate_seeds(t2c));
}

TEST_CASE("report deltas") {
  auto runs = full_fixture();
  const auto report = build_report(runs);
  CHECK(report.summaries.size() == 6);
  REQUIRE(report.deltas.size() == 3);
  for (const auto& d : report.deltas) {
    const auto* c = report.find("stand-in", d.task, "cascade");
    const auto* f = report.find("stand-in", d.task, "flat");
    CHECK(std::abs(d.value - (c->macro_f1.mean - f->macro_f1.mean)) <= 1e-12);
  }
  // T2: cascade mean 0.7, flat mean 0.55.
  const auto it = std::find_if(report.deltas.begin(), report.deltas.end(), [](const DeltaF1& d) { return d.task == Task::t2; });
  CHECK(it->value == doctest::Approx(0.15).epsilon(1e-12));

  std::vector<RunResult> cascade_only;
  for (const auto& r : runs)
    if (r.mode == "cascade") cascade_only.push_back(r);
  CHECK(build_report(cascade_only).deltas.empty());

  auto permuted = runs;
  std::reverse(permuted.begin(), permuted.end());
  CHECK(build_report(permuted).summaries == report.summaries);
}

TEST_CASE("JSON round trips") {
  const auto runs = full_fixture();
  const auto report = build_report(runs);
  CHECK(metric_report_from_json(nlohmann::json::parse(to_json(report).dump())) == report);
  for (const auto& r : runs) {
    const auto back = run_result_from_json(nlohmann::json::parse(to_json(r).dump()));
    CHECK(to_json(back) == to_json(r));
  }
  testing::TempDir dir("runs");
  write_runs(dir / "a.jsonl", runs);
  const auto loaded = read_run_store(dir.path());
  REQUIRE(loaded.size() == runs.size());
  CHECK(build_report(loaded) == report);
}

TEST_CASE("CSV row count") {
  const auto report = build_report(full_fixture());
  const std::string csv = render_csv(report);
  const auto lines = static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n'));
  // models x modes x tasks x (genders + 1) x metrics, plus the header.
  CHECK(lines == 1 * 2 * 3 * (2 + 1) * 2 + 1);
  CHECK(csv.rfind("model,mode,task,gender,metric,mean,std,n\n", 0) == 0);
}

TEST_CASE("markdown has a delta column iff flat runs exist") {
  const auto runs = full_fixture();
  const std::string with = render_markdown(build_report(runs), runs);
  CHECK(with.find("Δ F1") != std::string::npos);
  CHECK(with.find("Ablation") != std::string::npos);
  std::vector<RunResult> cascade_only;
  for (const auto& r : runs)
    if (r.mode == "cascade") cascade_only.push_back(r);
  const std::string without = render_markdown(build_report(cascade_only), cascade_only);
  CHECK(without.find("Δ F1") == std::string::npos);
  CHECK(without.find("0.700 ± 0.100") != std::string::npos);
}

TEST_CASE("gender table") {
  SUBCASE("identical subsets give identical columns") {
    std::vector<RunResult> runs;
    for (std::uint64_t s = 0; s < 3; ++s) {
      auto r = run(Task::t1, "cascade", s, 0.5 + 0.1 * s);
      r.per_gender[Gender::female] = r.per_gender[Gender::male] = {0.3 * s, 0.5, 5};
      runs.push_back(r);
    }
    const auto t = gender_table(runs);
    CHECK(t.genders == std::vector<std::string>{"female", "male"});
    const auto& row = t.rows.at(0);
    CHECK(row.cells.at({"female", Task::t1}) == row.cells.at({"male", Task::t1}));
    CHECK(row.cells.at({"all", Task::t1}).mean == doctest::Approx(0.6));
  }
  SUBCASE("hand-computed cells") {
    auto a = run(Task::t2, "flat", 0, 0.5);
    auto b = run(Task::t2, "flat", 1, 0.5);
    a.per_gender = {{Gender::female, {0.2, 0.1, 3}}};
    b.per_gender = {{Gender::female, {0.6, 0.1, 3}}};
    const auto t = gender_table({a, b});
    const auto cell = t.rows.at(0).cells.at({"female", Task::t2});
    CHECK(cell.mean == doctest::Approx(0.4));
    CHECK(cell.std == doctest::Approx(std::sqrt(0.08)));
    CHECK(t.genders == std::vector<std::string>{"female"});
    REQUIRE(t.notices.size() == 1);
    CHECK(t.notices[0].find("male") != std::string::npos);
  }
  SUBCASE("no gender labels") {
    const auto t = gender_table({run(Task::t1, "cascade", 0, 0.5, 0.5, false)});
    CHECK(t.genders.empty());
    CHECK(std::any_of(t.notices.begin(), t.notices.end(),
                      [](const std::string& n) { return n.find("lack gender") != std::string::npos; }));
    CHECK(t.rows.at(0).cells.count({"all", Task::t1}) == 1);
  }
}

TEST_CASE("emit") {
  testing::TempDir dir("emit");
  const auto runs = full_fixture();
  const auto report = build_report(runs);
  emit(report, runs, ReportFormat::json, dir / "r.json");
  CHECK(metric_report_from_json(nlohmann::json::parse(testing::read_text(dir / "r.json"))) == report);
  CHECK_THROWS_AS(emit(report, runs, ReportFormat::csv, dir / "no/such/dir/r.csv"), Error);
  CHECK(parse_report_format("md") == ReportFormat::markdown);
  CHECK_FALSE(parse_report_format("pdf"));
}
