#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "ssd/dataset.hpp"

namespace ssd {

// ---------------------------------------------------------------------------
// Classification

/// Marks a record that received no prediction in the scored space (for
/// example a cascade sample that was never routed past T1).
inline constexpr int kNoPrediction = -1;

/// Rows gold, columns predicted. `missed[g]` counts gold-g records with no prediction.
struct ConfusionMatrix {
  std::size_t k = 0;
  std::vector<long> counts;
  std::vector<long> missed;

  explicit ConfusionMatrix(std::size_t classes = 0) : k(classes), counts(classes * classes, 0), missed(classes, 0) {}
  long at(std::size_t gold, std::size_t pred) const { return counts[gold * k + pred]; }
  long total() const noexcept;
  bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> golds, std::size_t classes);

struct ClassScores {
  std::vector<double> precision, recall, f1;
  std::vector<std::size_t> absent;  ///< classes in neither golds nor preds (score 0)
  double macro_f1 = 0.0;
  double macro_recall = 0.0;
};

/// Per-class precision/recall/F1 (0 when the denominator is 0) and their unweighted means.
ClassScores score(const ConfusionMatrix& cm);

double macro_f1(std::span<const int> preds, std::span<const int> golds, const LabelSpace& space);
double macro_recall(std::span<const int> preds, std::span<const int> golds, const LabelSpace& space);

nlohmann::json to_json(const ConfusionMatrix& cm);
ConfusionMatrix confusion_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// ASR

struct AlignmentCounts {
  std::size_t hits = 0, substitutions = 0, deletions = 0, insertions = 0;

  std::size_t ref_length() const noexcept { return hits + substitutions + deletions; }
  std::size_t hyp_length() const noexcept { return hits + substitutions + insertions; }
  std::size_t edits() const noexcept { return substitutions + deletions + insertions; }
  AlignmentCounts& operator+=(const AlignmentCounts& o) noexcept {
    hits += o.hits;
    substitutions += o.substitutions;
    deletions += o.deletions;
    insertions += o.insertions;
    return *this;
  }
  bool operator==(const AlignmentCounts&) const = default;
};

/// Unit-cost Levenshtein alignment. Backtrace from the end prefers the
/// diagonal (hit/substitution), then insertion, then deletion.
template <typename T>
AlignmentCounts align(std::span<const T> ref, std::span<const T> hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t diag = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({diag, at(i, j - 1) + 1, at(i - 1, j) + 1});
    }
  AlignmentCounts c;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const bool same = ref[i - 1] == hyp[j - 1];
      if (at(i, j) == at(i - 1, j - 1) + (same ? 0 : 1)) {
        same ? ++c.hits : ++c.substitutions;
        --i, --j;
        continue;
      }
    }
    if (j > 0 && at(i, j) == at(i, j - 1) + 1) {
      ++c.insertions;
      --j;
    } else {
      ++c.deletions;
      --i;
    }
  }
  return c;
}

AlignmentCounts align_words(const std::vector<std::string>& ref, const std::vector<std::string>& hyp);

struct AsrRates {
  std::optional<double> wer;  ///< undefined when the reference is empty but the hypothesis is not
  double mer = 0.0;
  double wip = 0.0;
};

/// wer = (S+D+I)/N, mer = (S+D+I)/(H+S+D+I), wip = (H/N)(H/N2). Both empty: wer 0, mer 0, wip 1.
AsrRates asr_rates(const AlignmentCounts& c);

/// Lowercase, drop punctuation except hyphens and apostrophes between word
/// characters, split on whitespace.
std::vector<std::string> normalize_transcript(std::string_view text);
std::string normalized_string(std::string_view text);

/// Character alignment over the normalized transcript (tokens joined by one space).
AlignmentCounts char_counts(std::string_view ref, std::string_view hyp);
/// nullopt when the normalized reference is empty and the hypothesis is not.
std::optional<double> cer(std::string_view ref, std::string_view hyp);

bool exact_match(std::string_view ref, std::string_view hyp);
/// Multiset token F1 of the normalized transcripts; 1 when both are empty.
double token_f1(std::string_view ref, std::string_view hyp);

/// True when a token is "post-test"/"no-context", or a hyphenated compound
/// containing "vowel" and a vowel-feature term (close, open, mid, near, front,
/// central, back, round(ed), unround(ed)).
bool contains_vowel_description(std::string_view text);

struct AsrPair {
  std::string id, reference, hypothesis;
};

struct UtteranceScore {
  std::string id;
  bool em = false;
  double token_f1 = 0.0;
  AlignmentCounts words, chars;
  std::optional<double> wer, cer;
  double mer = 0.0, wip = 0.0;
};

UtteranceScore score_utterance(const AsrPair& pair);

struct AsrCorpusResult {
  std::size_t utterances = 0;
  std::size_t excluded = 0;
  std::size_t undefined_wer = 0;  ///< utterances whose per-utterance WER is undefined
  double em = 0.0;                ///< mean over utterances
  double token_f1 = 0.0;          ///< mean over utterances
  double wer = 0.0, mer = 0.0, wip = 0.0, cer = 0.0;  ///< pooled counts
  std::optional<double> mean_utterance_wer;
  AlignmentCounts words, chars;
  std::vector<UtteranceScore> per_utterance;
};

/// Throws data_error on an empty (post-filter) corpus.
AsrCorpusResult evaluate_asr(const std::vector<AsrPair>& pairs, bool exclude_vowel_descriptions);
std::vector<AsrPair> load_asr_pairs(const std::filesystem::path& path);
nlohmann::json to_json(const AsrCorpusResult& r, bool include_utterances = false);

}  // namespace ssd
