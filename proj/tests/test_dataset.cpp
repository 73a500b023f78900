#include <set>
#include <sstream>

#include "doctest.h"
#include "ssd/dataset.hpp"
#include "support.hpp"

using namespace ssd;

namespace {

std::vector<SampleRecord> parse(const std::string& text) {
  std::istringstream in(text);
  return parse_manifest(in);
}

SampleRecord make(const std::string& id, const std::string& speaker, Gender g, int t1, std::optional<int> t2 = {},
                  std::optional<int> t3 = {}) {
  SampleRecord r;
  r.id = id;
  r.speaker_id = speaker;
  r.gender = g;
  r.t1_label = t1;
  r.t2_label = t2;
  r.t3_label = t3;
  return r;
}

std::size_t count_label(const std::vector<SampleRecord>& rs, const LabelSpace& s, int c) {
  std::size_t n = 0;
  for (const auto& r : rs) n += gold_label(r, s) == c;
  return n;
}

}  // namespace

TEST_CASE("label spaces") {
  CHECK(LabelSpace::of(Task::t1).classes == std::vector<std::string>{"typical", "disordered"});
  CHECK(LabelSpace::of(Task::t2).classes == std::vector<std::string>{"articulation", "phonological"});
  CHECK(LabelSpace::of(Task::t3).classes ==
        std::vector<std::string>{"addition", "substitution", "omission", "stuttering"});
  const auto flat = LabelSpace::flat(Task::t2);
  CHECK(flat.classes == std::vector<std::string>{"typical", "articulation", "phonological"});
  CHECK(flat.name() == "T2+typical");
  CHECK(flat.index_of("phonological") == 2);
  CHECK(flat.index_of("lisp") == -1);

  const auto r = make("a", "s", Gender::male, t1::disordered, 1, 3);
  CHECK(gold_label(r, LabelSpace::of(Task::t2)) == 1);
  CHECK(gold_label(r, flat) == 2);
  const auto t = make("b", "s", Gender::male, t1::typical);
  CHECK_FALSE(gold_label(t, LabelSpace::of(Task::t2)).has_value());
  CHECK(gold_label(t, flat) == 0);
}

TEST_CASE("manifest parsing") {
  CHECK(parse("").empty());
  std::string ten;
  for (int i = 0; i < 10; ++i)
    ten += R"({"id":"r)" + std::to_string(i) + R"(","audio_path":"a.wav","speaker_id":"s)" + std::to_string(i % 3) +
           R"(","gender":"female","t1_label":"disordered","t2_label":"articulation","t3_label":"omission"})" "\n";
  const auto rs = parse(ten);
  REQUIRE(rs.size() == 10);
  for (int i = 0; i < 10; ++i) CHECK(rs[static_cast<std::size_t>(i)].id == "r" + std::to_string(i));
  CHECK(rs[0].t3_label == 2);

  SUBCASE("typical record with a T3 label fails at that line") {
    const std::string bad = ten + R"({"id":"x","speaker_id":"s","t1_label":"typical","t3_label":"omission"})" "\n";
    try {
      parse(bad);
      FAIL("expected error");
    } catch (const ManifestError& e) {
      CHECK(e.line() == 11);
      CHECK(e.kind() == ErrorKind::data);
    }
  }
  SUBCASE("other schema errors") {
    CHECK_THROWS_AS(parse(R"({"id":"x","speaker_id":"s","t1_label":"maybe"})"), ManifestError);
    CHECK_THROWS_AS(parse(R"({"id":"x","t1_label":"typical"})"), ManifestError);
    CHECK_THROWS_AS(parse("{not json"), ManifestError);
    CHECK_THROWS_AS(parse(R"({"id":"x","speaker_id":"s","t1_label":"typical"})" "\n"
                          R"({"id":"x","speaker_id":"t","t1_label":"typical"})"),
                    ManifestError);
  }
  SUBCASE("write and reload") {
    testing::TempDir dir("manifest");
    write_manifest(dir / "m.jsonl", rs);
    CHECK(load_manifest(dir / "m.jsonl") == rs);
  }
}

TEST_CASE("split of 100 single-record speakers") {
  std::vector<SampleRecord> rs;
  for (int i = 0; i < 100; ++i)
    rs.push_back(make("r" + std::to_string(i), "s" + std::to_string(i), i % 2 ? Gender::male : Gender::female,
                      i % 4 < 2 ? t1::typical : t1::disordered));
  const auto a = split(rs, {}, 11);
  const auto parts = apply_split(rs, a);
  CHECK(std::abs(static_cast<int>(parts[0].size()) - 64) <= 2);
  CHECK(std::abs(static_cast<int>(parts[1].size()) - 16) <= 2);
  CHECK(std::abs(static_cast<int>(parts[2].size()) - 20) <= 2);
  // Stratification: every T1 x gender cell reaches every split.
  for (const auto& part : parts)
    for (Gender g : {Gender::female, Gender::male})
      for (int c : {0, 1}) {
        bool found = false;
        for (const auto& r : part) found |= r.gender == g && r.t1_label == c;
        CHECK(found);
      }
}

TEST_CASE("a dominant speaker stays in one split") {
  std::vector<SampleRecord> rs;
  for (int i = 0; i < 40; ++i) rs.push_back(make("big" + std::to_string(i), "big", Gender::female, t1::typical));
  for (int i = 0; i < 60; ++i)
    rs.push_back(make("r" + std::to_string(i), "s" + std::to_string(i % 20), Gender::male, i % 2));
  const auto a = split(rs, {}, 3);
  std::set<Split> where;
  for (const auto& r : rs)
    if (r.speaker_id == "big") where.insert(a.of(r));
  CHECK(where.size() == 1);
}

TEST_CASE("split is invariant to input order and leak-free") {
  std::vector<SampleRecord> rs;
  Rng rng(5);
  for (int i = 0; i < 150; ++i) {
    const int spk = static_cast<int>(uniform_index(rng, 30));
    const bool dis = spk % 3 == 0;
    rs.push_back(make("r" + std::to_string(i), "s" + std::to_string(spk), spk % 2 ? Gender::male : Gender::female,
                      dis, dis ? std::optional<int>(i % 2) : std::nullopt));
  }
  const auto a = split(rs, {}, 21);
  auto shuffled = rs;
  shuffle(shuffled, rng);
  const auto b = split(shuffled, {}, 21);
  CHECK(a.speakers == b.speakers);

  std::map<std::string, std::set<Split>> seen;
  for (const auto& r : rs) seen[r.speaker_id].insert(a.of(r));
  for (const auto& [spk, splits] : seen) CHECK(splits.size() == 1);

  SUBCASE("JSON round trip and metadata") {
    const auto j = to_json(a, rs);
    CHECK(split_from_json(j).speakers == a.speakers);
    CHECK(j["metadata"]["seed"] == 21);
    CHECK(j["metadata"]["ratios"]["train"] == 0.64);
  }
}

TEST_CASE("split errors") {
  std::vector<SampleRecord> rs{make("a", "s1", Gender::female, 0), make("b", "s2", Gender::male, 1)};
  try {
    split(rs, {}, 0);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("fewer than 3 speakers") != std::string::npos);
    CHECK(e.kind() == ErrorKind::data);
  }
  rs.push_back(make("c", "s3", Gender::male, 0));
  CHECK_THROWS_AS(split(rs, {0.5, 0.5, 0.5}, 0), Error);
  CHECK_THROWS_AS(split(rs, {1.0, 0.0, 0.0}, 0), Error);
}

TEST_CASE("pathological filter") {
  std::vector<SampleRecord> rs;
  CHECK(filter_pathological(rs).empty());
  for (int i = 0; i < 10; ++i) rs.push_back(make("r" + std::to_string(i), "s", Gender::female, i < 7 ? 1 : 0));
  std::swap(rs[1], rs[8]);
  const auto f = filter_pathological(rs);
  REQUIRE(f.size() == 7);
  std::vector<SampleRecord> expect;
  for (const auto& r : rs)
    if (r.disordered()) expect.push_back(r);
  CHECK(f == expect);
  CHECK(filter_pathological(f) == f);
}

TEST_CASE("class weights") {
  const auto t1 = LabelSpace::of(Task::t1);
  std::vector<SampleRecord> rs;
  for (int i = 0; i < 10; ++i) rs.push_back(make("r" + std::to_string(i), "s", Gender::female, i % 2));
  auto w = class_weights(rs, t1);
  CHECK(w == std::vector<double>{1.0, 1.0});

  rs.clear();
  for (int i = 0; i < 523; ++i) rs.push_back(make("t" + std::to_string(i), "s", Gender::female, 0));
  for (int i = 0; i < 29; ++i) rs.push_back(make("d" + std::to_string(i), "s", Gender::female, 1));
  w = class_weights(rs, t1);
  CHECK(w[0] == doctest::Approx(552.0 / (2 * 523)).epsilon(1e-12));
  CHECK(w[1] == doctest::Approx(552.0 / (2 * 29)).epsilon(1e-12));
  CHECK(w[0] == doctest::Approx(0.5277).epsilon(1e-4));
  CHECK(w[1] == doctest::Approx(9.5172).epsilon(1e-4));

  std::vector<SampleRecord> one(5, make("x", "s", Gender::female, 0));
  CHECK_THROWS_AS(class_weights(one, t1), Error);
}

TEST_CASE("oversampling") {
  const auto t1 = LabelSpace::of(Task::t1);
  std::vector<SampleRecord> rs;
  for (int i = 0; i < 523; ++i) rs.push_back(make("t" + std::to_string(i), "s", Gender::female, 0));
  for (int i = 0; i < 29; ++i) rs.push_back(make("d" + std::to_string(i), "s", Gender::female, 1));
  Rng rng(1);
  SUBCASE("m = 1 keeps the multiset") {
    auto o = oversample(rs, t1, 1, rng);
    auto key = [](const SampleRecord& r) { return r.id; };
    std::multiset<std::string> a, b;
    for (auto& r : rs) a.insert(key(r));
    for (auto& r : o) b.insert(key(r));
    CHECK(a == b);
  }
  SUBCASE("m = 5 gives 145 minority copies") {
    auto o = oversample(rs, t1, 5, rng);
    CHECK(count_label(o, t1, 1) == 145);
    CHECK(count_label(o, t1, 0) == 523);
  }
  SUBCASE("single class unchanged") {
    std::vector<SampleRecord> one(rs.begin(), rs.begin() + 20);
    CHECK(oversample(one, t1, 5, rng).size() == 20);
  }
}
