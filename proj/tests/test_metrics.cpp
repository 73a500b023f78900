#include "doctest.h"
#include "ssd/metrics.hpp"
#include "support.hpp"

using namespace ssd;

namespace {

std::vector<std::string> words(const std::string& s) { return normalize_transcript(s); }

/// Per-class precision/recall/F1 straight from their definitions.
std::pair<double, double> definitional_macro(const std::vector<int>& pred, const std::vector<int>& gold, int k) {
  double f1 = 0.0, rec = 0.0;
  for (int c = 0; c < k; ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      if (pred[i] == c && gold[i] == c) ++tp;
      if (pred[i] == c && gold[i] != c) ++fp;
      if (pred[i] != c && gold[i] == c) ++fn;
    }
    const double p = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double r = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    f1 += p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    rec += r;
  }
  return {f1 / k, rec / k};
}

}  // namespace

TEST_CASE("macro F1 and recall") {
  const auto t1 = LabelSpace::of(Task::t1);
  const std::vector<int> gold{0, 0, 1, 1};
  CHECK(macro_f1(gold, gold, t1) == 1.0);
  CHECK(macro_recall(gold, gold, t1) == 1.0);
  const std::vector<int> all_a{0, 0, 0, 0};
  CHECK(macro_f1(all_a, gold, t1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(macro_recall(all_a, gold, t1) == 0.5);

  SUBCASE("hand-built 4-class confusion") {
    const auto t3 = LabelSpace::of(Task::t3);
    std::vector<int> p, g;
    const int counts[4][4] = {{5, 1, 0, 2}, {0, 3, 3, 0}, {1, 0, 0, 0}, {2, 2, 1, 7}};
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        for (int n = 0; n < counts[a][b]; ++n) g.push_back(a), p.push_back(b);
    const auto [f1, rec] = definitional_macro(p, g, 4);
    CHECK(macro_f1(p, g, t3) == doctest::Approx(f1).epsilon(1e-12));
    CHECK(macro_recall(p, g, t3) == doctest::Approx(rec).epsilon(1e-12));
    const auto cm = confusion(p, g, 4);
    CHECK(cm.at(3, 3) == 7);
    CHECK(cm.total() == static_cast<long>(g.size()));
    CHECK(confusion_from_json(to_json(cm)) == cm);
  }
  SUBCASE("missing predictions count against recall only") {
    const std::vector<int> p{0, kNoPrediction, 1, 1}, g{0, 0, 1, 1};
    const auto cm = confusion(p, g, 2);
    CHECK(cm.missed[0] == 1);
    const auto s = score(cm);
    CHECK(s.recall[0] == 0.5);
    CHECK(s.precision[0] == 1.0);
  }
  SUBCASE("absent classes score zero and are listed") {
    const auto t3 = LabelSpace::of(Task::t3);
    const std::vector<int> p{0, 1}, g{0, 1};
    const auto s = score(confusion(p, g, 4));
    CHECK(s.absent == std::vector<std::size_t>{2, 3});
    CHECK(s.macro_f1 == 0.5);
  }
  CHECK_THROWS_AS(macro_f1(std::vector<int>{}, std::vector<int>{}, t1), Error);
}

TEST_CASE("random fixtures match the definitional oracle") {
  Rng rng(17);
  for (int t = 0; t < 300; ++t) {
    const int k = 2 + static_cast<int>(uniform_index(rng, 4));
    const std::size_t n = 1 + uniform_index(rng, 40);
    std::vector<int> p(n), g(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(k)));
      g[i] = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(k)));
    }
    LabelSpace s;
    for (int c = 0; c < k; ++c) s.classes.push_back("c" + std::to_string(c));
    const auto [f1, rec] = definitional_macro(p, g, k);
    CHECK(std::abs(macro_f1(p, g, s) - f1) <= 1e-12);
    CHECK(std::abs(macro_recall(p, g, s) - rec) <= 1e-12);
  }
}

TEST_CASE("alignment counts") {
  auto a = [](const std::string& r, const std::string& h) { return align_words(words(r), words(h)); };
  CHECK(a("a b c", "a b c") == AlignmentCounts{3, 0, 0, 0});
  CHECK(a("a b c", "a c") == AlignmentCounts{2, 0, 1, 0});
  CHECK(a("", "x y") == AlignmentCounts{0, 0, 0, 2});
  CHECK(a("a b", "b a") == AlignmentCounts{0, 2, 0, 0});

  Rng rng(4);
  for (int t = 0; t < 300; ++t) {
    std::vector<int> r(uniform_index(rng, 8)), h(uniform_index(rng, 8));
    for (auto& v : r) v = static_cast<int>(uniform_index(rng, 3));
    for (auto& v : h) v = static_cast<int>(uniform_index(rng, 3));
    const auto c = align<int>(r, h);
    const auto o = testing::oracle_align(r, h);
    CHECK(c.edits() == testing::edit_distance(r, h));
    CHECK(c == AlignmentCounts{o.hits, o.subs, o.dels, o.ins});
  }
}

TEST_CASE("ASR rates") {
  auto rates = [](const std::string& r, const std::string& h) { return asr_rates(align_words(words(r), words(h))); };
  auto same = rates("a b c", "a b c");
  CHECK(*same.wer == 0.0);
  CHECK(same.mer == 0.0);
  CHECK(same.wip == 1.0);
  auto del = rates("a b c", "a c");
  CHECK(*del.wer == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(del.mer == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(del.wip == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  auto empty_hyp = rates("a b c", "");
  CHECK(*empty_hyp.wer == 1.0);
  CHECK(empty_hyp.mer == 1.0);
  CHECK(empty_hyp.wip == 0.0);
  auto both_empty = rates("", "");
  CHECK(*both_empty.wer == 0.0);
  CHECK(both_empty.wip == 1.0);
  CHECK_FALSE(rates("", "x").wer.has_value());
  CHECK(*rates("a", "x y z").wer == 3.0);
}

TEST_CASE("character error rate") {
  CHECK(*cer("hello", "hello") == 0.0);
  CHECK(*cer("cat", "cut") == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK_FALSE(cer("", "ab").has_value());
  CHECK(*cer("ü", "u") == 1.0);  // one code point, not two bytes
}

TEST_CASE("exact match and token F1") {
  CHECK(exact_match("The cat.", "the cat"));
  CHECK(token_f1("a b", "a b") == 1.0);
  CHECK_FALSE(exact_match("the cat sat", "the cat"));
  CHECK(token_f1("the cat sat", "the cat") == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(token_f1("a b", "c d") == 0.0);
  CHECK(token_f1("", "") == 1.0);
  CHECK(token_f1("a a b", "a b b") == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("normalization") {
  CHECK(words("The CAT, sat.") == std::vector<std::string>{"the", "cat", "sat"});
  CHECK(words("close-front-round-vowel") == std::vector<std::string>{"close-front-round-vowel"});
  CHECK(words("  ").empty());
  CHECK(words("don't -- stop") == std::vector<std::string>{"don't", "stop"});
  CHECK(normalized_string(" A  b ") == "a b");
}

TEST_CASE("vowel-description detector") {
  CHECK(contains_vowel_description("close-front-round-vowel post-test no-context"));
  CHECK(contains_vowel_description("open-back-unrounded-vowel"));
  CHECK_FALSE(contains_vowel_description("the cat sat on the mat"));
  CHECK_FALSE(contains_vowel_description("vowel"));
  CHECK_FALSE(contains_vowel_description("a well-known front door"));
}

TEST_CASE("corpus evaluation") {
  std::vector<AsrPair> pairs{{"1", "the cat sat", "the cat sat"},
                             {"2", "close-front-round-vowel post-test no-context", "close front"},
                             {"3", "a b c", "a c"}};
  const auto all = evaluate_asr(pairs, false);
  CHECK(all.utterances == 3);
  const auto filtered = evaluate_asr(pairs, true);
  CHECK(filtered.utterances == 2);
  CHECK(filtered.excluded == 1);
  CHECK(filtered.wer == doctest::Approx(1.0 / 6.0).epsilon(1e-15));  // pooled: 1 edit over 6 words
  CHECK(filtered.em == 0.5);
  CHECK_THROWS_AS(evaluate_asr({}, false), Error);
  CHECK_THROWS_AS(evaluate_asr({pairs[1]}, true), Error);

  SUBCASE("undefined per-utterance WER is flagged, not dropped") {
    const auto r = evaluate_asr({{"x", "", "a b"}, {"y", "c", "c"}}, false);
    CHECK(r.undefined_wer == 1);
    CHECK(r.wer == 2.0);  // pooled: 2 insertions over 1 reference word
  }
  SUBCASE("pairs file") {
    testing::TempDir dir("asr");
    testing::write_text(dir / "p.jsonl", R"({"id":"1","reference":"a b","hypothesis":"a b"})" "\n");
    const auto loaded = load_asr_pairs(dir / "p.jsonl");
    REQUIRE(loaded.size() == 1);
    CHECK(loaded[0].reference == "a b");
    const auto j = to_json(evaluate_asr(loaded, false), true);
    CHECK(j["wer"] == 0.0);
    CHECK(j["em"] == 1.0);
    CHECK(j["per_utterance"].size() == 1);
  }
}
