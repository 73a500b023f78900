#include <set>
#include <map>

#include "doctest.h"
#include "ssd/cascade.hpp"
#include "support.hpp"

using namespace ssd;

namespace {

/// Table-driven backend that counts calls per record.
class StubBackend final : public ProbBackend {
 public:
  explicit StubBackend(LabelSpace s) : space_(std::move(s)) {}
  const LabelSpace& labels() const override { return space_; }
  ProbDist probs(const std::string& id) override {
    ++calls[id];
    auto it = table.find(id);
    if (it == table.end()) throw data_error("stub has no entry for " + id);
    return it->second;
  }
  void set_class(const std::string& id, int c) {
    ProbDist d;
    d.p.assign(space_.size(), 0.0);
    d.p[static_cast<std::size_t>(c)] = 1.0;
    table[id] = d;
  }
  std::map<std::string, ProbDist> table;
  std::map<std::string, int> calls;
  int total_calls() const {
    int n = 0;
    for (const auto& [_, c] : calls) n += c;
    return n;
  }

 private:
  LabelSpace space_;
};

SampleRecord rec(const std::string& id, Gender g, int t1, std::optional<int> t2 = {}, std::optional<int> t3 = {}) {
  SampleRecord r;
  r.id = id;
  r.speaker_id = id;
  r.gender = g;
  r.t1_label = t1;
  r.t2_label = t2;
  r.t3_label = t3;
  return r;
}

struct Fixture {
  std::vector<SampleRecord> test;
  std::shared_ptr<StubBackend> t1 = std::make_shared<StubBackend>(LabelSpace::of(Task::t1));
  std::shared_ptr<StubBackend> t2 = std::make_shared<StubBackend>(LabelSpace::of(Task::t2));
  std::shared_ptr<StubBackend> t3 = std::make_shared<StubBackend>(LabelSpace::of(Task::t3));
};

Fixture random_fixture(Rng& rng, bool oracle_t1) {
  Fixture f;
  const std::size_t n = 5 + uniform_index(rng, 30);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = "r" + std::to_string(i);
    const bool dis = uniform01(rng) < 0.6;
    const Gender g = uniform01(rng) < 0.5 ? Gender::female : Gender::male;
    f.test.push_back(dis ? rec(id, g, 1, static_cast<int>(uniform_index(rng, 2)), static_cast<int>(uniform_index(rng, 4)))
                         : rec(id, g, 0));
    f.t1->set_class(id, oracle_t1 ? static_cast<int>(dis) : static_cast<int>(uniform_index(rng, 2)));
    f.t2->set_class(id, static_cast<int>(uniform_index(rng, 2)));
    f.t3->set_class(id, static_cast<int>(uniform_index(rng, 4)));
  }
  return f;
}

}  // namespace

TEST_CASE("routing") {
  auto t1 = std::make_shared<StubBackend>(LabelSpace::of(Task::t1));
  auto t2 = std::make_shared<StubBackend>(LabelSpace::of(Task::t2));
  auto t3 = std::make_shared<StubBackend>(LabelSpace::of(Task::t3));
  t1->table["lo"] = ProbDist{{0.9, 0.1}};
  t1->table["hi"] = ProbDist{{0.1, 0.9}};
  t1->table["tie"] = ProbDist{{0.5, 0.5}};
  for (const char* id : {"lo", "hi", "tie"}) t2->set_class(id, 1), t3->set_class(id, 2);
  CascadeConfig cfg{t1, t2, t3, std::nullopt};

  const auto lo = route(cfg, "lo");
  CHECK(lo.t1_pred == t1::typical);
  CHECK_FALSE(lo.routed);
  CHECK_FALSE(lo.t2_pred);
  CHECK(t2->calls.count("lo") == 0);
  CHECK(t3->calls.count("lo") == 0);

  const auto hi = route(cfg, "hi");
  CHECK(hi.routed);
  CHECK(hi.t2_pred == 1);
  CHECK(hi.t3_pred == 2);
  CHECK(to_json(hi)["t2_pred"] == "phonological");

  cfg.threshold = 0.5;
  CHECK(route(cfg, "tie").routed);
  cfg.threshold = 0.95;
  CHECK_FALSE(route(cfg, "hi").routed);

  cfg.threshold = 1.5;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg.threshold.reset();
  cfg.t2 = std::make_shared<StubBackend>(LabelSpace::flat(Task::t2));
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("oracle T1 makes cascade subset scores equal flat scores") {
  Rng rng(12);
  for (int t = 0; t < 50; ++t) {
    Fixture f = random_fixture(rng, true);
    if (std::none_of(f.test.begin(), f.test.end(), [](const SampleRecord& r) { return r.disordered(); })) continue;
    const auto c = evaluate_cascade({f.t1, f.t2, f.t3, std::nullopt}, f.test, ScoringMode::subset);
    const auto fl = evaluate_flat({f.t1, f.t2, f.t3, std::nullopt}, f.test, ScoringMode::subset);
    for (Task task : {Task::t2, Task::t3}) {
      CHECK(c.tasks.at(task).confusion == fl.tasks.at(task).confusion);
      CHECK(c.tasks.at(task).scores.macro_f1 == fl.tasks.at(task).scores.macro_f1);
      CHECK(c.tasks.at(task).scores.macro_recall == fl.tasks.at(task).scores.macro_recall);
    }
  }
}

TEST_CASE("gate soundness: no downstream calls for unrouted records") {
  Rng rng(99);
  for (int t = 0; t < 20; ++t) {
    Fixture f = random_fixture(rng, false);
    const auto ev = evaluate_cascade({f.t1, f.t2, f.t3, std::nullopt}, f.test, ScoringMode::subset);
    for (const auto& p : ev.predictions) {
      const int expected = p.routed ? 1 : 0;
      CHECK(f.t2->calls[p.id] == expected);
      CHECK(f.t3->calls[p.id] == expected);
    }
  }
}

TEST_CASE("always-typical T1 zeroes downstream recall") {
  Rng rng(5);
  Fixture f = random_fixture(rng, true);
  for (const auto& r : f.test) f.t1->set_class(r.id, 0);
  f.test.push_back(rec("extra", Gender::male, 1, 0, 0));
  f.t1->set_class("extra", 0);
  const auto ev = evaluate_cascade({f.t1, f.t2, f.t3, std::nullopt}, f.test, ScoringMode::subset);
  CHECK(ev.tasks.at(Task::t2).scores.macro_recall == 0.0);
  CHECK(ev.tasks.at(Task::t3).scores.macro_recall == 0.0);
  CHECK(f.t2->total_calls() == 0);
}

TEST_CASE("hand-computed cascade fixture") {
  Fixture f;
  // id, gold T1, gold T2, T1 pred, T2 pred
  struct Row { const char* id; int t1; int t2; int p1; int p2; };
  const Row rows[] = {{"a", 1, 0, 1, 0}, {"b", 1, 0, 1, 1}, {"c", 1, 1, 1, 1}, {"d", 1, 1, 0, 0},
                      {"e", 0, -1, 0, 1}, {"f", 0, -1, 1, 0}, {"g", 1, 0, 1, 0}};
  for (const auto& r : rows) {
    f.test.push_back(r.t1 ? rec(r.id, Gender::female, 1, r.t2, 0) : rec(r.id, Gender::male, 0));
    f.t1->set_class(r.id, r.p1);
    f.t2->set_class(r.id, r.p2);
  }
  SUBCASE("subset") {
    const auto ev = evaluate_cascade({f.t1, f.t2, nullptr, std::nullopt}, f.test, ScoringMode::subset);
    CHECK_FALSE(ev.tasks.count(Task::t3));
    const auto& t2 = ev.tasks.at(Task::t2);
    // Gold-disordered: a(0->0) b(0->1) c(1->1) d(1->miss) g(0->0).
    // art: tp 2, fp 0, fn 1 -> P 1, R 2/3, F1 0.8. phon: tp 1, fp 1, fn 1 -> P 0.5, R 0.5, F1 0.5.
    CHECK(t2.scores.f1[0] == doctest::Approx(0.8));
    CHECK(t2.scores.f1[1] == doctest::Approx(0.5));
    CHECK(t2.scores.macro_f1 == doctest::Approx(0.65));
    CHECK(t2.scores.macro_recall == doctest::Approx((2.0 / 3.0 + 0.5) / 2));
    CHECK(t2.confusion.missed[1] == 1);
    // T1 over every record: typical tp 1 (e), fp 1 (d), fn 1 (f).
    const auto& t1 = ev.tasks.at(Task::t1);
    CHECK(t1.scores.f1[0] == doctest::Approx(0.5));
    CHECK(t1.scores.f1[1] == doctest::Approx(2.0 * (4.0 / 5) * (4.0 / 5) / (8.0 / 5)));
    CHECK(t1.per_gender.at(Gender::male).recall[0] == 0.5);
  }
  SUBCASE("end to end") {
    const auto ev = evaluate_cascade({f.t1, f.t2, nullptr, std::nullopt}, f.test, ScoringMode::end_to_end);
    const auto& t2 = ev.tasks.at(Task::t2);
    CHECK(t2.space == LabelSpace::flat(Task::t2));
    CHECK(t2.golds.size() == 7);
    // typical: e->typical (unrouted), f->art (routed, pred 0 -> 1), d is phon->typical.
    CHECK(t2.confusion.at(0, 0) == 1);
    CHECK(t2.confusion.at(0, 1) == 1);
    CHECK(t2.confusion.at(2, 0) == 1);
  }
}

TEST_CASE("flat backends in the extended space") {
  auto t2f = std::make_shared<StubBackend>(LabelSpace::flat(Task::t2));
  std::vector<SampleRecord> test{rec("a", Gender::female, 1, 0, 0), rec("b", Gender::female, 1, 1, 0),
                                 rec("c", Gender::male, 0)};
  t2f->set_class("a", 1);
  t2f->set_class("b", 0);  // typical on a disordered record
  t2f->set_class("c", 0);
  const auto sub = evaluate_flat({nullptr, t2f, nullptr, std::nullopt}, test, ScoringMode::subset);
  CHECK(sub.tasks.at(Task::t2).preds == std::vector<int>{0, kNoPrediction});
  const auto e2e = evaluate_flat({nullptr, t2f, nullptr, std::nullopt}, test, ScoringMode::end_to_end);
  CHECK(e2e.tasks.at(Task::t2).preds == std::vector<int>{1, 0, 0});
  CHECK(e2e.tasks.at(Task::t2).golds == std::vector<int>{1, 2, 0});
}

TEST_CASE("perfect backends score 1 and uniform random scores about 0.5") {
  Rng rng(21);
  Fixture f = random_fixture(rng, true);
  for (const auto& r : f.test)
    if (r.disordered()) f.t2->set_class(r.id, *r.t2_label), f.t3->set_class(r.id, *r.t3_label);
  const auto ev = evaluate_cascade({f.t1, f.t2, f.t3, std::nullopt}, f.test, ScoringMode::subset);
  for (const auto& [task, te] : ev.tasks) {
    CHECK(te.golds == te.preds);
    // A class absent from a small fixture scores 0, so compare against present classes only.
    std::set<int> present(te.golds.begin(), te.golds.end());
    CHECK(te.scores.macro_f1 == doctest::Approx(static_cast<double>(present.size()) / te.space.size()));
  }

  Fixture big;
  for (int i = 0; i < 1000; ++i) {
    const std::string id = "r" + std::to_string(i);
    big.test.push_back(rec(id, Gender::female, 1, i % 2, 0));
    big.t1->set_class(id, 1);
    ProbDist d{{uniform01(rng), 0.0}};
    d.p[1] = 1.0 - d.p[0];
    big.t2->table[id] = d;
  }
  const auto r = evaluate_flat({nullptr, big.t2, nullptr, std::nullopt}, big.test, ScoringMode::subset);
  CHECK(std::abs(r.tasks.at(Task::t2).scores.macro_f1 - 0.5) <= 0.05);
  CHECK_THROWS_AS(evaluate_flat({nullptr, big.t2, nullptr, std::nullopt}, {}, ScoringMode::subset), Error);
}
