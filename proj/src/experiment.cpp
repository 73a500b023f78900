#include "ssd/experiment.hpp"

#include <atomic>
#include <cstdio>
#include <fstream>
#include <future>
#include <set>
#include <sstream>
#include <unordered_map>

namespace ssd {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(Backend b) noexcept { return b == Backend::stand_in ? "stand-in" : "external-probs"; }

std::optional<Backend> parse_backend(std::string_view s) noexcept {
  if (s == "stand-in") return Backend::stand_in;
  if (s == "external-probs") return Backend::external_probs;
  return std::nullopt;
}

void ExperimentConfig::validate() const {
  if (manifest.empty()) throw usage_error("no manifest given");
  if (!fs::exists(manifest)) throw usage_error("manifest not found: " + manifest.string());
  if (seeds.empty()) throw usage_error("seed list is empty");
  if (tasks.empty()) throw usage_error("task list is empty");
  if (mode != "cascade" && mode != "flat" && mode != "both") throw usage_error("mode must be cascade, flat or both");
  if (backend == Backend::external_probs) {
    if (!external_probs) throw usage_error("external-probs backend needs a probabilities file");
    if (!fs::exists(*external_probs)) throw usage_error("probabilities file not found: " + external_probs->string());
  }
  if (!(max_seconds > 0.0)) throw usage_error("max_seconds must be positive");
  if (oversampling < 1) throw usage_error("oversampling multiplier must be >= 1");
  if (jobs < 1) throw usage_error("jobs must be >= 1");
  if (threshold && !(*threshold > 0.0 && *threshold < 1.0)) throw usage_error("threshold must be in (0, 1)");
  policy.validate();
  train.validate();
  const double sum = ratios.train + ratios.val + ratios.test;
  if (!(ratios.train > 0 && ratios.val > 0 && ratios.test > 0) || std::abs(sum - 1.0) > 1e-9)
    throw usage_error("split ratios must be positive and sum to 1");
}

json to_json(const ExperimentConfig& c) {
  json tasks = json::array();
  for (Task t : c.tasks) tasks.push_back(std::string(to_string(t)));
  json j{{"manifest", c.manifest.string()},
         {"experiment_id", c.experiment_id},
         {"split_seed", c.split_seed},
         {"ratios", {c.ratios.train, c.ratios.val, c.ratios.test}},
         {"policy", to_json(c.policy)},
         {"train", to_json(c.train)},
         {"tasks", tasks},
         {"mode", c.mode},
         {"scoring", std::string(to_string(c.scoring))},
         {"seeds", c.seeds},
         {"backend", std::string(to_string(c.backend))},
         {"output_dir", c.output_dir.string()},
         {"max_seconds", c.max_seconds},
         {"class_weighting", c.class_weighting},
         {"oversampling", c.oversampling},
         {"deterministic", c.deterministic},
         {"n_mels", c.features.n_mels},
         {"jobs", c.jobs}};
  j["external_probs"] = c.external_probs ? json(c.external_probs->string()) : json(nullptr);
  j["threshold"] = c.threshold ? json(*c.threshold) : json(nullptr);
  return j;
}

ExperimentConfig experiment_config_from_json(const json& patch, ExperimentConfig base) {
  if (!patch.is_object()) throw usage_error("experiment config must be a JSON object");
  json j = to_json(base);
  j.merge_patch(patch);
  ExperimentConfig c;
  try {
    c.manifest = j.at("manifest").get<std::string>();
    c.experiment_id = j.at("experiment_id").get<std::string>();
    c.split_seed = j.at("split_seed").get<std::uint64_t>();
    const auto r = j.at("ratios").get<std::vector<double>>();
    if (r.size() != 3) throw usage_error("ratios must have three entries");
    c.ratios = {r[0], r[1], r[2]};
    c.policy = policy_from_json(j.at("policy"));
    c.train = train_config_from_json(j.at("train"));
    c.tasks.clear();
    for (const auto& t : j.at("tasks")) {
      auto task = parse_task(t.get<std::string>());
      if (!task) throw usage_error("unknown task '" + t.get<std::string>() + "'");
      c.tasks.push_back(*task);
    }
    c.mode = j.at("mode").get<std::string>();
    auto scoring = parse_scoring_mode(j.at("scoring").get<std::string>());
    if (!scoring) throw usage_error("unknown scoring mode '" + j.at("scoring").get<std::string>() + "'");
    c.scoring = *scoring;
    c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    auto backend = parse_backend(j.at("backend").get<std::string>());
    if (!backend) throw usage_error("unknown backend '" + j.at("backend").get<std::string>() + "'");
    c.backend = *backend;
    // A null in the patch removes the field; absent and null both mean unset.
    if (auto it = j.find("external_probs"); it != j.end() && !it->is_null()) c.external_probs = it->get<std::string>();
    c.output_dir = j.at("output_dir").get<std::string>();
    c.max_seconds = j.at("max_seconds").get<double>();
    c.class_weighting = j.at("class_weighting").get<bool>();
    c.oversampling = j.at("oversampling").get<int>();
    c.deterministic = j.at("deterministic").get<bool>();
    c.features.n_mels = j.at("n_mels").get<int>();
    if (auto it = j.find("threshold"); it != j.end() && !it->is_null()) c.threshold = it->get<double>();
  } catch (const json::exception& e) {
    throw usage_error(std::string("malformed experiment config: ") + e.what());
  }
  return c;
}

fs::path resolve_audio_path(const fs::path& manifest, const SampleRecord& r) {
  if (r.audio_path.empty()) throw data_error("record '" + r.id + "' has no audio_path");
  fs::path p(r.audio_path);
  return p.is_absolute() ? p : manifest.parent_path() / p;
}

AudioClip load_record_audio(const fs::path& manifest, const SampleRecord& r, double max_seconds) {
  return trim(load_wav_canonical(resolve_audio_path(manifest, r)), max_seconds);
}

namespace {

using FeatureMap = std::unordered_map<std::string, FeatureVector>;

/// Everything that does not change across seeds.
struct Prepared {
  std::vector<SampleRecord> records;
  SplitAssignment assignment;
  std::array<std::vector<SampleRecord>, 3> parts;
  std::unordered_map<std::string, AudioClip> audio;  ///< kept only when augmenting
  std::shared_ptr<FeatureMap> features = std::make_shared<FeatureMap>();
};

Prepared prepare(const ExperimentConfig& config, bool need_audio, bool keep_audio) {
  Prepared p;
  p.records = load_manifest(config.manifest);
  p.assignment = split(p.records, config.ratios, config.split_seed);
  p.parts = apply_split(p.records, p.assignment);
  if (!need_audio) return p;
  for (const auto& r : p.records) {
    AudioClip clip = load_record_audio(config.manifest, r, config.max_seconds);
    (*p.features)[r.id] = extract(clip, config.features);
    if (keep_audio) p.audio.emplace(r.id, std::move(clip));
  }
  return p;
}

LabeledFeatures labeled(const std::vector<SampleRecord>& records, const LabelSpace& space, const FeatureMap& feats) {
  LabeledFeatures out;
  for (const auto& r : records) {
    auto g = gold_label(r, space);
    if (!g) continue;
    out.x.push_back(feats.at(r.id));
    out.y.push_back(*g);
  }
  return out;
}

std::vector<SampleRecord> labeled_records(const std::vector<SampleRecord>& records, const LabelSpace& space) {
  std::vector<SampleRecord> out;
  for (const auto& r : records)
    if (gold_label(r, space)) out.push_back(r);
  return out;
}

/// Trains one stand-in model. T2/T3 in their plain spaces see pathological
/// records only; flat spaces see every labeled record.
TrainResult train_model(const Prepared& data, const LabelSpace& space, const ExperimentConfig& config,
                        std::uint64_t seed, std::atomic<std::size_t>& invocations) {
  const auto& train_part = data.parts[static_cast<int>(Split::train)];
  const auto& val_part = data.parts[static_cast<int>(Split::val)];
  std::vector<SampleRecord> train_records = labeled_records(train_part, space);
  if (train_records.empty()) throw data_error("no training records for " + space.name());

  TrainConfig cfg = config.train;
  cfg.seed = derive_seed(seed, space.name());
  if (config.class_weighting) cfg.class_weights = class_weights(train_records, space);
  if (config.oversampling > 1) {
    Rng rng(derive_seed(cfg.seed, std::string_view("oversample")));
    train_records = oversample(train_records, space, config.oversampling, rng);
  }
  const LabeledFeatures val = labeled(val_part, space, *data.features);

  EpochData epochs;
  if (config.policy.is_noop()) {
    auto fixed = std::make_shared<LabeledFeatures>(labeled(train_records, space, *data.features));
    epochs = [fixed](int) { return *fixed; };
  } else {
    const auto aug_seed = derive_seed(cfg.seed, std::string_view("augment"));
    epochs = [&data, &config, &space, train_records, aug_seed](int epoch) {
      const std::uint64_t epoch_seed = derive_seed(aug_seed, static_cast<std::uint64_t>(epoch));
      const bool planned = config.policy.gender_strategy == GenderStrategy::stratified_rate;
      std::vector<PitchDecision> plan;
      if (planned) plan = plan_pitch_decisions(train_records, config.policy, epoch_seed);
      LabeledFeatures out;
      for (std::size_t i = 0; i < train_records.size(); ++i) {
        const SampleRecord& r = train_records[i];
        const std::uint64_t s = derive_seed(record_seed(epoch_seed, r.id), static_cast<std::uint64_t>(i));
        auto [clip, log] = apply_policy(r, data.audio.at(r.id), config.policy, s,
                                        planned ? std::optional<PitchDecision>(plan[i]) : std::nullopt);
        out.x.push_back(extract(clip, config.features));
        out.y.push_back(*gold_label(r, space));
      }
      return out;
    };
  }
  ++invocations;
  return train(epochs, val, space, cfg);
}

std::shared_ptr<ProbBackend> external(const fs::path& path, const LabelSpace& space) {
  auto b = std::make_shared<ExternalProbsBackend>(load_external_probs(path, space));
  if (b->size() == 0) return nullptr;
  return b;
}

bool wants(const ExperimentConfig& c, Task t) { return std::find(c.tasks.begin(), c.tasks.end(), t) != c.tasks.end(); }

void drop_unwanted(Evaluation& ev, const ExperimentConfig& c) {
  for (auto it = ev.tasks.begin(); it != ev.tasks.end();)
    it = wants(c, it->first) ? std::next(it) : ev.tasks.erase(it);
}

std::string seed_tag(const ExperimentConfig& c, std::uint64_t seed) {
  return c.experiment_id + "_seed" + std::to_string(seed);
}

std::vector<RunResult> run_one_seed(const Prepared& data, const ExperimentConfig& config, std::uint64_t seed,
                                    std::atomic<std::size_t>& invocations) {
  const auto& test = data.parts[static_cast<int>(Split::test)];
  if (test.empty()) throw data_error("test split is empty");
  const std::uint64_t train_seed = config.deterministic ? config.train.seed : derive_seed(config.train.seed, seed);
  const fs::path model_dir = config.output_dir / "models";
  const std::string tag = seed_tag(config, seed);

  std::shared_ptr<ProbBackend> t1, t2, t3, flat_t2, flat_t3;
  if (config.backend == Backend::external_probs) {
    const fs::path& probs = *config.external_probs;
    t1 = external(probs, LabelSpace::of(Task::t1));
    if (!t1) throw data_error("probabilities file has no T1 entries");
    if (wants(config, Task::t2)) t2 = external(probs, LabelSpace::of(Task::t2));
    if (wants(config, Task::t3)) t3 = external(probs, LabelSpace::of(Task::t3));
    if (config.runs_flat()) {
      if (wants(config, Task::t2)) flat_t2 = external(probs, LabelSpace::flat(Task::t2));
      if (wants(config, Task::t3)) flat_t3 = external(probs, LabelSpace::flat(Task::t3));
      if (!flat_t2) flat_t2 = t2;
      if (!flat_t3) flat_t3 = t3;
    }
  } else {
    auto fit = [&](const LabelSpace& space, const std::string& name) -> std::shared_ptr<ProbBackend> {
      TrainResult r = train_model(data, space, config, train_seed, invocations);
      r.model.save(model_dir / (tag + "_" + name + ".model"));
      return std::make_shared<ModelBackend>(std::move(r.model), data.features);
    };
    t1 = fit(LabelSpace::of(Task::t1), "T1");
    if (config.runs_cascade()) {
      if (wants(config, Task::t2)) t2 = fit(LabelSpace::of(Task::t2), "T2");
      if (wants(config, Task::t3)) t3 = fit(LabelSpace::of(Task::t3), "T3");
    }
    if (config.runs_flat()) {
      if (wants(config, Task::t2)) flat_t2 = fit(LabelSpace::flat(Task::t2), "T2-flat");
      if (wants(config, Task::t3)) flat_t3 = fit(LabelSpace::flat(Task::t3), "T3-flat");
    }
  }

  std::vector<RunResult> runs;
  if (config.runs_cascade()) {
    CascadeConfig cc{t1, t2, t3, config.threshold};
    Evaluation ev = evaluate_cascade(cc, test, config.scoring);
    drop_unwanted(ev, config);
    auto r = run_results(ev, "stand-in", seed, config.experiment_id);
    runs.insert(runs.end(), r.begin(), r.end());
  }
  if (config.runs_flat()) {
    FlatBackends fb{t1, flat_t2, flat_t3, config.threshold};
    Evaluation ev = evaluate_flat(fb, test, config.scoring);
    drop_unwanted(ev, config);
    auto r = run_results(ev, "stand-in", seed, config.experiment_id);
    runs.insert(runs.end(), r.begin(), r.end());
  }
  write_runs(config.output_dir / "runs" / (tag + ".jsonl"), runs);
  return runs;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw runtime_error("cannot write " + path.string());
  out << text;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const fs::path failed = config.output_dir / "FAILED";
  std::error_code ec;
  fs::create_directories(config.output_dir / "runs", ec);
  fs::create_directories(config.output_dir / "models", ec);
  if (ec) throw runtime_error("cannot create output directory " + config.output_dir.string() + ": " + ec.message());
  fs::remove(failed, ec);

  try {
    const bool stand_in = config.backend == Backend::stand_in;
    const Prepared data = prepare(config, stand_in, stand_in && !config.policy.is_noop());
    write_text(config.output_dir / "split.json", to_json(data.assignment, data.records).dump(2) + "\n");

    std::atomic<std::size_t> invocations{0};
    std::vector<std::vector<RunResult>> per_seed(config.seeds.size());
    for (std::size_t start = 0; start < config.seeds.size(); start += static_cast<std::size_t>(config.jobs)) {
      const std::size_t end = std::min(config.seeds.size(), start + static_cast<std::size_t>(config.jobs));
      if (end - start == 1) {
        per_seed[start] = run_one_seed(data, config, config.seeds[start], invocations);
        continue;
      }
      std::vector<std::future<std::vector<RunResult>>> batch;
      for (std::size_t i = start; i < end; ++i)
        batch.push_back(std::async(std::launch::async, [&, i] {
          return run_one_seed(data, config, config.seeds[i], invocations);
        }));
      for (std::size_t i = start; i < end; ++i) per_seed[i] = batch[i - start].get();
    }

    ExperimentResult result;
    result.output_dir = config.output_dir;
    for (auto& runs : per_seed) result.runs.insert(result.runs.end(), runs.begin(), runs.end());
    result.trainer_invocations = invocations.load();
    result.report = build_report(result.runs);
    result.report.metadata["experiment_id"] = config.experiment_id;
    result.report.metadata["trainer_invocations"] = result.trainer_invocations;
    result.report.metadata["config"] = to_json(config);

    emit(result.report, result.runs, ReportFormat::json, config.output_dir / "report.json");
    emit(result.report, result.runs, ReportFormat::markdown, config.output_dir / "report.md");
    emit(result.report, result.runs, ReportFormat::csv, config.output_dir / "report.csv");
    return result;
  } catch (const std::exception& e) {
    std::ofstream marker(failed, std::ios::trunc);
    marker << e.what() << '\n';
    throw;
  }
}

SplitCommandResult run_split_command(const fs::path& manifest, const SplitRatios& ratios, std::uint64_t seed,
                                     const fs::path& out) {
  const auto records = load_manifest(manifest);
  SplitCommandResult res;
  res.assignment = split(records, ratios, seed);
  res.counts = cell_counts(records, res.assignment);
  if (!out.empty()) {
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_text(out, to_json(res.assignment, records).dump(2) + "\n");
  }
  std::ostringstream table;
  std::set<std::string> cells;
  for (const auto& [_, m] : res.counts)
    for (const auto& [cell, __] : m) cells.insert(cell);
  char line[160];
  std::snprintf(line, sizeof line, "%-36s %7s %7s %7s\n", "cell", "train", "val", "test");
  table << line;
  for (const auto& cell : cells) {
    auto get = [&](Split s) {
      auto it = res.counts.find(s);
      if (it == res.counts.end()) return 0;
      auto c = it->second.find(cell);
      return c == it->second.end() ? 0 : c->second;
    };
    std::snprintf(line, sizeof line, "%-36s %7d %7d %7d\n", cell.c_str(), get(Split::train), get(Split::val),
                  get(Split::test));
    table << line;
  }
  res.table = table.str();
  return res;
}

hpo::SearchResult run_search_command(const SearchCommandConfig& sc) {
  const ExperimentConfig& base = sc.base;
  base.validate();
  hpo::SearchSpace space;
  if (sc.space == "classification") space = hpo::classification_space();
  else if (sc.space == "asr") space = hpo::asr_space();
  else throw usage_error("unknown search space '" + sc.space + "' (expected classification or asr)");
  if (!(sc.lr_scale > 0.0)) throw usage_error("lr_scale must be positive");

  const Prepared data = prepare(base, true, true);
  if (data.parts[static_cast<int>(Split::val)].empty()) throw data_error("validation split is empty");
  const LabelSpace labels = LabelSpace::of(sc.task);
  std::atomic<std::size_t> invocations{0};

  hpo::Objective objective = [&](const hpo::Config& trial, std::uint64_t trial_seed) -> std::optional<double> {
    ExperimentConfig c = base;
    auto get = [&](const char* name) -> std::optional<double> {
      auto it = trial.find(name);
      return it == trial.end() ? std::nullopt : std::optional<double>(it->second);
    };
    if (auto v = get("learning_rate")) c.train.learning_rate = *v * sc.lr_scale;
    if (auto v = get("grad_accum_steps")) c.train.grad_accum_steps = static_cast<int>(*v);
    if (auto v = get("oversampling")) c.oversampling = static_cast<int>(*v);
    if (auto v = get("noise_prob")) c.policy.noise_prob = *v;
    if (auto v = get("noise_max_amplitude")) c.policy.noise_max_amplitude = *v;
    if (auto v = get("pitch_prob")) c.policy.pitch_prob = *v;
    if (auto v = get("pitch_min_semitones")) c.policy.pitch_min_semitones = static_cast<int>(*v);
    if (auto v = get("pitch_max_semitones")) c.policy.pitch_max_semitones = static_cast<int>(*v);
    if (c.policy.pitch_min_semitones > c.policy.pitch_max_semitones)
      std::swap(c.policy.pitch_min_semitones, c.policy.pitch_max_semitones);
    if (!get("pitch_prob") && get("pitch_max_semitones") && base.policy.pitch_prob == 0.0) c.policy.pitch_prob = 0.5;
    c.policy.validate();
    TrainResult r = train_model(data, labels, c, trial_seed, invocations);
    for (const auto& e : r.trace)
      if (e.epoch == r.best_epoch) return e.val_macro_f1;
    return std::nullopt;
  };
  return hpo::run_search(space, objective, sc.options);
}

AugmentCommandResult run_augment_command(const fs::path& manifest, const AugmentationPolicy& policy,
                                         std::uint64_t seed, const fs::path& out, double max_seconds) {
  policy.validate();
  const auto records = load_manifest(manifest);
  fs::create_directories(out);
  const bool planned = policy.gender_strategy == GenderStrategy::stratified_rate;
  std::vector<PitchDecision> plan;
  if (planned) plan = plan_pitch_decisions(records, policy, seed);

  AugmentCommandResult res;
  std::ofstream log(out / "augment_log.jsonl", std::ios::trunc);
  if (!log) throw runtime_error("cannot write augmentation log in " + out.string());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    const AudioClip clip = load_record_audio(manifest, r, max_seconds);
    auto [augmented, entry] = apply_policy(r, clip, policy, record_seed(seed, r.id),
                                           planned ? std::optional<PitchDecision>(plan[i]) : std::nullopt);
    std::string name = r.id;
    for (char& ch : name)
      if (ch == '/' || ch == '\\') ch = '_';
    write_wav16(out / (name + ".wav"), augmented);
    log << to_json(entry).dump() << '\n';
    res.logs.push_back(std::move(entry));
    ++res.written;
  }
  return res;
}

}  // namespace ssd
