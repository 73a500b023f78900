#include "ssd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace ssd {

using nlohmann::json;

std::string_view to_string(Task t) noexcept {
  switch (t) {
    case Task::t1: return "T1";
    case Task::t2: return "T2";
    case Task::t3: return "T3";
  }
  return "?";
}

std::string_view to_string(Gender g) noexcept {
  switch (g) {
    case Gender::female: return "female";
    case Gender::male: return "male";
    case Gender::unknown: return "unknown";
  }
  return "?";
}

std::string_view to_string(Split s) noexcept {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

std::optional<Task> parse_task(std::string_view s) noexcept {
  if (s == "T1" || s == "t1") return Task::t1;
  if (s == "T2" || s == "t2") return Task::t2;
  if (s == "T3" || s == "t3") return Task::t3;
  return std::nullopt;
}

std::optional<Gender> parse_gender(std::string_view s) noexcept {
  if (s == "female") return Gender::female;
  if (s == "male") return Gender::male;
  if (s == "unknown") return Gender::unknown;
  return std::nullopt;
}

LabelSpace LabelSpace::of(Task task) {
  switch (task) {
    case Task::t1: return {task, {"typical", "disordered"}, false};
    case Task::t2: return {task, {"articulation", "phonological"}, false};
    case Task::t3: return {task, {"addition", "substitution", "omission", "stuttering"}, false};
  }
  return {};
}

LabelSpace LabelSpace::flat(Task task) {
  LabelSpace s = of(task);
  if (task == Task::t1) return s;
  s.classes.insert(s.classes.begin(), "typical");
  s.includes_typical = true;
  return s;
}

int LabelSpace::index_of(std::string_view name) const noexcept {
  for (std::size_t i = 0; i < classes.size(); ++i)
    if (classes[i] == name) return static_cast<int>(i);
  return -1;
}

std::string LabelSpace::name() const {
  std::string n(to_string(task));
  if (includes_typical) n += "+typical";
  return n;
}

std::optional<int> gold_label(const SampleRecord& r, const LabelSpace& space) noexcept {
  if (space.task == Task::t1) return r.t1_label;
  const auto& label = space.task == Task::t2 ? r.t2_label : r.t3_label;
  if (space.includes_typical) {
    if (!r.disordered()) return 0;
    if (!label) return std::nullopt;
    return *label + 1;
  }
  if (!r.disordered()) return std::nullopt;
  return label;
}

double SplitRatios::operator[](Split s) const noexcept {
  switch (s) {
    case Split::train: return train;
    case Split::val: return val;
    case Split::test: return test;
  }
  return 0.0;
}

Split SplitAssignment::of(const SampleRecord& r) const {
  auto it = speakers.find(r.speaker_id);
  if (it == speakers.end()) throw data_error("speaker '" + r.speaker_id + "' has no split assignment");
  return it->second;
}

// ---------------------------------------------------------------------------
// Manifest I/O

json to_json(const SampleRecord& r) {
  json j;
  j["id"] = r.id;
  j["audio_path"] = r.audio_path;
  j["speaker_id"] = r.speaker_id;
  j["gender"] = std::string(to_string(r.gender));
  j["t1_label"] = LabelSpace::of(Task::t1).classes[static_cast<std::size_t>(r.t1_label)];
  if (r.t2_label) j["t2_label"] = LabelSpace::of(Task::t2).classes[static_cast<std::size_t>(*r.t2_label)];
  if (r.t3_label) j["t3_label"] = LabelSpace::of(Task::t3).classes[static_cast<std::size_t>(*r.t3_label)];
  if (r.transcript) j["transcript"] = *r.transcript;
  return j;
}

namespace {

std::string required_string(const json& j, const char* key, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end()) throw ManifestError(line, std::string("missing field '") + key + "'");
  if (!it->is_string()) throw ManifestError(line, std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

std::optional<int> optional_label(const json& j, const char* key, Task task, std::size_t line) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) throw ManifestError(line, std::string("field '") + key + "' must be a string");
  const int idx = LabelSpace::of(task).index_of(it->get<std::string>());
  if (idx < 0) throw ManifestError(line, std::string("label '") + it->get<std::string>() + "' not in " + key + " space");
  return idx;
}

}  // namespace

SampleRecord record_from_json(const json& j, std::size_t line) {
  if (!j.is_object()) throw ManifestError(line, "expected a JSON object");
  SampleRecord r;
  r.id = required_string(j, "id", line);
  if (r.id.empty()) throw ManifestError(line, "empty id");
  r.audio_path = j.contains("audio_path") && j["audio_path"].is_string() ? j["audio_path"].get<std::string>() : "";
  r.speaker_id = required_string(j, "speaker_id", line);

  if (auto it = j.find("gender"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw ManifestError(line, "field 'gender' must be a string");
    auto g = parse_gender(it->get<std::string>());
    if (!g) throw ManifestError(line, "gender '" + it->get<std::string>() + "' not in {female, male, unknown}");
    r.gender = *g;
  }

  const std::string t1 = required_string(j, "t1_label", line);
  r.t1_label = LabelSpace::of(Task::t1).index_of(t1);
  if (r.t1_label < 0) throw ManifestError(line, "label '" + t1 + "' not in t1_label space");
  r.t2_label = optional_label(j, "t2_label", Task::t2, line);
  r.t3_label = optional_label(j, "t3_label", Task::t3, line);
  if (!r.disordered() && (r.t2_label || r.t3_label))
    throw ManifestError(line, "t2_label/t3_label present on a typical sample");

  if (auto it = j.find("transcript"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw ManifestError(line, "field 'transcript' must be a string");
    r.transcript = it->get<std::string>();
  }
  return r;
}

std::vector<SampleRecord> parse_manifest(std::istream& in) {
  std::vector<SampleRecord> out;
  std::unordered_set<std::string> seen;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ManifestError(line, std::string("invalid JSON: ") + e.what());
    }
    SampleRecord r = record_from_json(j, line);
    if (!seen.insert(r.id).second) throw ManifestError(line, "duplicate id '" + r.id + "'");
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<SampleRecord> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open manifest: " + path.string());
  return parse_manifest(in);
}

void write_manifest(const std::filesystem::path& path, const std::vector<SampleRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw runtime_error("cannot write manifest: " + path.string());
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Splitting

namespace {

std::vector<std::string> record_cells(const SampleRecord& r) {
  std::vector<std::string> cells;
  const std::string g(to_string(r.gender));
  for (Task task : kAllTasks) {
    const LabelSpace space = LabelSpace::of(task);
    if (auto label = gold_label(r, space))
      cells.push_back(std::string(to_string(task)) + ":" + space.classes[static_cast<std::size_t>(*label)] + ":" + g);
  }
  return cells;
}

struct SpeakerInfo {
  std::size_t records = 0;
  std::set<std::string> cells;
};

}  // namespace

SplitAssignment split(const std::vector<SampleRecord>& records, const SplitRatios& ratios, std::uint64_t seed) {
  if (!(ratios.train > 0 && ratios.val > 0 && ratios.test > 0))
    throw usage_error("split ratios must all be positive");
  const double ratio_sum = ratios.train + ratios.val + ratios.test;
  if (std::abs(ratio_sum - 1.0) > 1e-6) throw usage_error("split ratios must sum to 1");

  std::map<std::string, SpeakerInfo> info;
  for (const auto& r : records) {
    if (r.speaker_id.empty()) throw data_error("record '" + r.id + "' has no speaker_id");
    auto& s = info[r.speaker_id];
    ++s.records;
    for (auto& c : record_cells(r)) s.cells.insert(std::move(c));
  }
  if (info.size() < 3) throw data_error("fewer than 3 speakers (" + std::to_string(info.size()) + ")");

  // Sorted ids -> seeded shuffle -> stable sort by size: independent of input order.
  std::vector<std::string> order;
  order.reserve(info.size());
  for (const auto& [id, _] : info) order.push_back(id);
  Rng rng(mix64(seed));
  shuffle(order, rng);
  std::stable_sort(order.begin(), order.end(),
                   [&](const std::string& a, const std::string& b) { return info[a].records > info[b].records; });
  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < order.size(); ++i) position[order[i]] = i;

  std::map<std::string, std::vector<std::string>> cell_speakers;
  for (const auto& id : order)
    for (const auto& c : info[id].cells) cell_speakers[c].push_back(id);

  SplitAssignment out;
  out.ratios = ratios;
  out.seed = seed;
  std::array<double, 3> count{0, 0, 0};
  const double total = static_cast<double>(records.size());
  std::array<double, 3> target{ratios.train * total, ratios.val * total, ratios.test * total};

  auto assign = [&](const std::string& id, Split s) {
    out.speakers[id] = s;
    count[static_cast<std::size_t>(s)] += static_cast<double>(info[id].records);
  };

  // Coverage pass, rarest cells first.
  std::vector<std::string> cells;
  for (const auto& [c, spk] : cell_speakers)
    if (spk.size() >= 3) cells.push_back(c);
  std::stable_sort(cells.begin(), cells.end(), [&](const std::string& a, const std::string& b) {
    return cell_speakers[a].size() < cell_speakers[b].size();
  });
  // Smallest splits first so scarce speakers reach them.
  std::array<Split, 3> coverage_order{Split::val, Split::test, Split::train};
  std::stable_sort(coverage_order.begin(), coverage_order.end(),
                   [&](Split a, Split b) { return ratios[a] < ratios[b]; });
  for (const auto& c : cells) {
    const auto& members = cell_speakers[c];
    for (Split s : coverage_order) {
      const bool covered = std::any_of(members.begin(), members.end(), [&](const std::string& id) {
        auto it = out.speakers.find(id);
        return it != out.speakers.end() && it->second == s;
      });
      if (covered) continue;
      const std::string* pick = nullptr;
      for (const auto& id : members) {
        if (out.speakers.count(id)) continue;
        if (pick == nullptr || info[id].records < info[*pick].records ||
            (info[id].records == info[*pick].records && position[id] < position[*pick]))
          pick = &id;
      }
      if (pick == nullptr) break;
      assign(*pick, s);
    }
  }

  // Fill pass: largest first into the most deficient split.
  for (const auto& id : order) {
    if (out.speakers.count(id)) continue;
    Split best = Split::train;
    double best_deficit = -1e300;
    for (Split s : kAllSplits) {
      const double deficit = target[static_cast<std::size_t>(s)] - count[static_cast<std::size_t>(s)];
      if (deficit > best_deficit) {
        best_deficit = deficit;
        best = s;
      }
    }
    assign(id, best);
  }
  return out;
}

std::array<std::vector<SampleRecord>, 3> apply_split(const std::vector<SampleRecord>& records,
                                                     const SplitAssignment& assignment) {
  std::array<std::vector<SampleRecord>, 3> out;
  for (const auto& r : records) out[static_cast<std::size_t>(assignment.of(r))].push_back(r);
  return out;
}

std::map<Split, std::map<std::string, int>> cell_counts(const std::vector<SampleRecord>& records,
                                                        const SplitAssignment& assignment) {
  std::map<Split, std::map<std::string, int>> out;
  for (Split s : kAllSplits) out[s];
  for (const auto& r : records)
    for (const auto& c : record_cells(r)) ++out[assignment.of(r)][c];
  return out;
}

json to_json(const SplitAssignment& a, const std::vector<SampleRecord>& records) {
  json speakers = json::object();
  for (const auto& [id, s] : a.speakers) speakers[id] = std::string(to_string(s));
  json counts = json::object();
  json sizes = json::object();
  const auto parts = apply_split(records, a);
  for (const auto& [s, cells] : cell_counts(records, a)) {
    counts[std::string(to_string(s))] = cells;
    sizes[std::string(to_string(s))] = parts[static_cast<std::size_t>(s)].size();
  }
  json speaker_counts = json::object();
  for (Split s : kAllSplits) {
    speaker_counts[std::string(to_string(s))] =
        std::count_if(a.speakers.begin(), a.speakers.end(), [s](const auto& kv) { return kv.second == s; });
  }
  return json{{"assignment", speakers},
              {"metadata",
               {{"seed", a.seed},
                {"ratios", {{"train", a.ratios.train}, {"val", a.ratios.val}, {"test", a.ratios.test}}},
                {"records", sizes},
                {"speakers", speaker_counts},
                {"counts", counts}}}};
}

SplitAssignment split_from_json(const json& j) {
  SplitAssignment a;
  try {
    for (const auto& [id, name] : j.at("assignment").items()) {
      const auto s = name.get<std::string>();
      if (s == "train") a.speakers[id] = Split::train;
      else if (s == "val") a.speakers[id] = Split::val;
      else if (s == "test") a.speakers[id] = Split::test;
      else throw data_error("unknown split name '" + s + "'");
    }
    const auto& meta = j.at("metadata");
    a.seed = meta.at("seed").get<std::uint64_t>();
    a.ratios = {meta.at("ratios").at("train").get<double>(), meta.at("ratios").at("val").get<double>(),
                meta.at("ratios").at("test").get<double>()};
  } catch (const json::exception& e) {
    throw data_error(std::string("malformed split file: ") + e.what());
  }
  return a;
}

std::vector<SampleRecord> filter_pathological(const std::vector<SampleRecord>& records) {
  std::vector<SampleRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [](const SampleRecord& r) { return r.disordered(); });
  return out;
}

std::vector<double> class_weights(const std::vector<SampleRecord>& records, const LabelSpace& space) {
  if (space.size() < 2) throw usage_error("class weights need at least two classes");
  std::vector<double> counts(space.size(), 0.0);
  double total = 0.0;
  for (const auto& r : records) {
    if (auto label = gold_label(r, space)) {
      counts[static_cast<std::size_t>(*label)] += 1.0;
      total += 1.0;
    }
  }
  std::vector<double> w(space.size());
  const double k = static_cast<double>(space.size());
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0.0)
      throw data_error("class '" + space.classes[c] + "' of " + space.name() + " has no records");
    w[c] = total / (k * counts[c]);
  }
  return w;
}

std::vector<SampleRecord> oversample(const std::vector<SampleRecord>& records, const LabelSpace& space, int multiplier,
                                     Rng& rng) {
  if (multiplier < 1) throw usage_error("oversampling multiplier must be >= 1");
  std::vector<std::size_t> counts(space.size(), 0);
  for (const auto& r : records)
    if (auto label = gold_label(r, space)) ++counts[static_cast<std::size_t>(*label)];
  const auto majority = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());

  std::vector<SampleRecord> out;
  out.reserve(records.size() * static_cast<std::size_t>(multiplier));
  for (const auto& r : records) {
    auto label = gold_label(r, space);
    const int copies = (label && *label != majority) ? multiplier : 1;
    for (int i = 0; i < copies; ++i) out.push_back(r);
  }
  shuffle(out, rng);
  return out;
}

}  // namespace ssd
