#include "ssd/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

namespace ssd {

using nlohmann::json;

long ConfusionMatrix::total() const noexcept {
  return std::accumulate(counts.begin(), counts.end(), 0L) + std::accumulate(missed.begin(), missed.end(), 0L);
}

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> golds, std::size_t classes) {
  if (preds.size() != golds.size()) throw usage_error("predictions and golds differ in length");
  ConfusionMatrix cm(classes);
  const auto k = static_cast<int>(classes);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int g = golds[i], p = preds[i];
    if (g < 0 || g >= k) throw usage_error("gold label " + std::to_string(g) + " outside label space");
    if (p == kNoPrediction) {
      ++cm.missed[static_cast<std::size_t>(g)];
      continue;
    }
    if (p < 0 || p >= k) throw usage_error("predicted label " + std::to_string(p) + " outside label space");
    ++cm.counts[static_cast<std::size_t>(g) * classes + static_cast<std::size_t>(p)];
  }
  return cm;
}

ClassScores score(const ConfusionMatrix& cm) {
  ClassScores s;
  const std::size_t k = cm.k;
  s.precision.assign(k, 0.0);
  s.recall.assign(k, 0.0);
  s.f1.assign(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    double tp = static_cast<double>(cm.at(c, c));
    double gold_total = static_cast<double>(cm.missed[c]);
    double pred_total = 0.0;
    for (std::size_t o = 0; o < k; ++o) {
      gold_total += static_cast<double>(cm.at(c, o));
      pred_total += static_cast<double>(cm.at(o, c));
    }
    if (gold_total == 0.0 && pred_total == 0.0) s.absent.push_back(c);
    const double p = pred_total > 0.0 ? tp / pred_total : 0.0;
    const double r = gold_total > 0.0 ? tp / gold_total : 0.0;
    s.precision[c] = p;
    s.recall[c] = r;
    s.f1[c] = (p + r) > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  if (k > 0) {
    s.macro_f1 = std::accumulate(s.f1.begin(), s.f1.end(), 0.0) / static_cast<double>(k);
    s.macro_recall = std::accumulate(s.recall.begin(), s.recall.end(), 0.0) / static_cast<double>(k);
  }
  return s;
}

double macro_f1(std::span<const int> preds, std::span<const int> golds, const LabelSpace& space) {
  if (golds.empty()) throw data_error("macro_f1: empty input");
  return score(confusion(preds, golds, space.size())).macro_f1;
}

double macro_recall(std::span<const int> preds, std::span<const int> golds, const LabelSpace& space) {
  if (golds.empty()) throw data_error("macro_recall: empty input");
  return score(confusion(preds, golds, space.size())).macro_recall;
}

json to_json(const ConfusionMatrix& cm) {
  json rows = json::array();
  for (std::size_t g = 0; g < cm.k; ++g) {
    json row = json::array();
    for (std::size_t p = 0; p < cm.k; ++p) row.push_back(cm.at(g, p));
    rows.push_back(row);
  }
  return json{{"counts", rows}, {"missed", cm.missed}};
}

ConfusionMatrix confusion_from_json(const json& j) {
  const auto& rows = j.at("counts");
  ConfusionMatrix cm(rows.size());
  for (std::size_t g = 0; g < cm.k; ++g)
    for (std::size_t p = 0; p < cm.k; ++p) cm.counts[g * cm.k + p] = rows.at(g).at(p).get<long>();
  cm.missed = j.at("missed").get<std::vector<long>>();
  return cm;
}

// ---------------------------------------------------------------------------

AlignmentCounts align_words(const std::vector<std::string>& ref, const std::vector<std::string>& hyp) {
  return align<std::string>(ref, hyp);
}

AsrRates asr_rates(const AlignmentCounts& c) {
  AsrRates r;
  const double n = static_cast<double>(c.ref_length());
  const double n2 = static_cast<double>(c.hyp_length());
  const double h = static_cast<double>(c.hits);
  const double e = static_cast<double>(c.edits());
  if (n == 0.0 && n2 == 0.0) {
    r.wer = 0.0;
    r.mer = 0.0;
    r.wip = 1.0;
    return r;
  }
  if (n > 0.0) r.wer = e / n;
  r.mer = e / (h + e);
  r.wip = (n > 0.0 && n2 > 0.0) ? (h / n) * (h / n2) : 0.0;
  return r;
}

namespace {

bool is_word_byte(unsigned char c) { return std::isalnum(c) != 0 || c >= 0x80; }

std::u32string decode_utf8(std::string_view s) {
  std::u32string out;
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    char32_t cp = c;
    std::size_t len = 1;
    if (c >= 0xF0) len = 4, cp = c & 0x07;
    else if (c >= 0xE0) len = 3, cp = c & 0x0F;
    else if (c >= 0xC0) len = 2, cp = c & 0x1F;
    if (i + len > s.size()) len = 1, cp = c;
    for (std::size_t k = 1; k < len; ++k) cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
    out.push_back(cp);
    i += len;
  }
  return out;
}

}  // namespace

std::vector<std::string> normalize_transcript(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_word_byte(c)) {
      cleaned.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    } else if (c == '-' || c == '\'') {
      const bool inner = i > 0 && i + 1 < text.size() && is_word_byte(static_cast<unsigned char>(text[i - 1])) &&
                         is_word_byte(static_cast<unsigned char>(text[i + 1]));
      cleaned.push_back(inner ? static_cast<char>(c) : ' ');
    } else {
      cleaned.push_back(' ');
    }
  }
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < cleaned.size()) {
    while (i < cleaned.size() && cleaned[i] == ' ') ++i;
    std::size_t j = i;
    while (j < cleaned.size() && cleaned[j] != ' ') ++j;
    if (j > i) tokens.emplace_back(cleaned.substr(i, j - i));
    i = j;
  }
  return tokens;
}

std::string normalized_string(std::string_view text) {
  std::string out;
  for (const auto& t : normalize_transcript(text)) {
    if (!out.empty()) out.push_back(' ');
    out += t;
  }
  return out;
}

AlignmentCounts char_counts(std::string_view ref, std::string_view hyp) {
  const std::u32string r = decode_utf8(normalized_string(ref));
  const std::u32string h = decode_utf8(normalized_string(hyp));
  return align<char32_t>(std::span<const char32_t>(r.data(), r.size()), std::span<const char32_t>(h.data(), h.size()));
}

std::optional<double> cer(std::string_view ref, std::string_view hyp) {
  const AlignmentCounts c = char_counts(ref, hyp);
  if (c.ref_length() == 0) return c.hyp_length() == 0 ? std::optional<double>(0.0) : std::nullopt;
  return static_cast<double>(c.edits()) / static_cast<double>(c.ref_length());
}

bool exact_match(std::string_view ref, std::string_view hyp) {
  return normalize_transcript(ref) == normalize_transcript(hyp);
}

double token_f1(std::string_view ref, std::string_view hyp) {
  const auto r = normalize_transcript(ref);
  const auto h = normalize_transcript(hyp);
  if (r.empty() && h.empty()) return 1.0;
  if (r.empty() || h.empty()) return 0.0;
  std::map<std::string, long> bag;
  for (const auto& t : r) ++bag[t];
  long common = 0;
  for (const auto& t : h) {
    auto it = bag.find(t);
    if (it != bag.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(h.size());
  const double recall = static_cast<double>(common) / static_cast<double>(r.size());
  return 2.0 * precision * recall / (precision + recall);
}

bool contains_vowel_description(std::string_view text) {
  static const std::vector<std::string> features{"close",   "open",  "mid",     "near",     "front",    "central",
                                                 "back",    "round", "rounded", "unround",  "unrounded"};
  for (const auto& token : normalize_transcript(text)) {
    if (token == "post-test" || token == "no-context") return true;
    if (token.find('-') == std::string::npos) continue;
    bool has_vowel = false, has_feature = false;
    std::size_t start = 0;
    while (start <= token.size()) {
      const std::size_t end = std::min(token.find('-', start), token.size());
      const std::string part = token.substr(start, end - start);
      if (part == "vowel") has_vowel = true;
      if (std::find(features.begin(), features.end(), part) != features.end()) has_feature = true;
      start = end + 1;
    }
    if (has_vowel && has_feature) return true;
  }
  return false;
}

UtteranceScore score_utterance(const AsrPair& pair) {
  UtteranceScore s;
  s.id = pair.id;
  s.em = exact_match(pair.reference, pair.hypothesis);
  s.token_f1 = token_f1(pair.reference, pair.hypothesis);
  s.words = align_words(normalize_transcript(pair.reference), normalize_transcript(pair.hypothesis));
  s.chars = char_counts(pair.reference, pair.hypothesis);
  const AsrRates r = asr_rates(s.words);
  s.wer = r.wer;
  s.mer = r.mer;
  s.wip = r.wip;
  s.cer = cer(pair.reference, pair.hypothesis);
  return s;
}

AsrCorpusResult evaluate_asr(const std::vector<AsrPair>& pairs, bool exclude_vowel_descriptions) {
  AsrCorpusResult out;
  double em_sum = 0.0, f1_sum = 0.0, wer_sum = 0.0;
  std::size_t wer_n = 0;
  for (const auto& p : pairs) {
    if (exclude_vowel_descriptions && contains_vowel_description(p.reference)) {
      ++out.excluded;
      continue;
    }
    UtteranceScore s = score_utterance(p);
    em_sum += s.em ? 1.0 : 0.0;
    f1_sum += s.token_f1;
    if (s.wer) {
      wer_sum += *s.wer;
      ++wer_n;
    } else {
      ++out.undefined_wer;
    }
    out.words += s.words;
    out.chars += s.chars;
    out.per_utterance.push_back(std::move(s));
  }
  out.utterances = out.per_utterance.size();
  if (out.utterances == 0) throw data_error("no utterances");
  const double n = static_cast<double>(out.utterances);
  out.em = em_sum / n;
  out.token_f1 = f1_sum / n;
  const AsrRates pooled = asr_rates(out.words);
  out.wer = pooled.wer.value_or(std::numeric_limits<double>::infinity());
  out.mer = pooled.mer;
  out.wip = pooled.wip;
  out.cer = out.chars.ref_length() > 0
                ? static_cast<double>(out.chars.edits()) / static_cast<double>(out.chars.ref_length())
                : (out.chars.hyp_length() == 0 ? 0.0 : std::numeric_limits<double>::infinity());
  if (wer_n > 0) out.mean_utterance_wer = wer_sum / static_cast<double>(wer_n);
  return out;
}

std::vector<AsrPair> load_asr_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open ASR pairs file: " + path.string());
  std::vector<AsrPair> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(text);
      out.push_back({j.at("id").get<std::string>(), j.at("reference").get<std::string>(),
                     j.at("hypothesis").get<std::string>()});
    } catch (const json::exception& e) {
      throw data_error("ASR pairs line " + std::to_string(line) + ": " + e.what());
    }
  }
  return out;
}

namespace {
json counts_json(const AlignmentCounts& c) {
  return json{{"hits", c.hits}, {"substitutions", c.substitutions}, {"deletions", c.deletions},
              {"insertions", c.insertions}};
}
json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
}  // namespace

json to_json(const AsrCorpusResult& r, bool include_utterances) {
  json j{{"utterances", r.utterances},
         {"excluded", r.excluded},
         {"undefined_wer", r.undefined_wer},
         {"em", r.em},
         {"token_f1", r.token_f1},
         {"wer", r.wer},
         {"mer", r.mer},
         {"wip", r.wip},
         {"cer", r.cer},
         {"mean_utterance_wer", opt(r.mean_utterance_wer)},
         {"word_counts", counts_json(r.words)},
         {"char_counts", counts_json(r.chars)}};
  if (include_utterances) {
    json u = json::array();
    for (const auto& s : r.per_utterance)
      u.push_back({{"id", s.id}, {"em", s.em}, {"token_f1", s.token_f1}, {"wer", opt(s.wer)}, {"mer", s.mer},
                   {"wip", s.wip}, {"cer", opt(s.cer)}, {"word_counts", counts_json(s.words)}});
    j["per_utterance"] = u;
  }
  return j;
}

}  // namespace ssd
