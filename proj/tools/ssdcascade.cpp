// ssdcascade: command-line front end over the C API.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ssd/ssd.h"

using nlohmann::json;

namespace {

struct Owned {
  char* s = nullptr;
  ~Owned() { ssd_string_free(s); }
  std::string str() const { return s ? s : ""; }
};

int report_status(ssd_status s) {
  if (s != SSD_OK) std::cerr << "error: " << ssd_last_error() << '\n';
  return static_cast<int>(s);
}

std::string output_root() {
  const char* env = std::getenv("SSD_OUTPUT_ROOT");
  return env && *env ? env : "ssd_out";
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  try {
    json j = json::parse(read_file(path));
    if (!j.is_object()) throw UsageError("config file must hold a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw UsageError("config file " + path + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw UsageError(e.what());
  }
}

std::vector<double> parse_ratios(const std::string& s) {
  std::vector<double> r;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      r.push_back(std::stod(part));
    } catch (const std::exception&) {
      throw UsageError("bad ratio '" + part + "'");
    }
  }
  if (r.size() != 3) throw UsageError("--ratios needs three comma-separated values");
  return r;
}

// Shared experiment flags. Only flags given on the command line override the config file.
struct ExperimentFlags {
  std::string config, manifest, mode, backend, probs, out, scoring, exp_id, tasks, ratios, seed_list;
  int seeds = 0, jobs = 0, epochs = 0, oversampling = 0, hidden = 0, batch = 0, accum = 0;
  double lr = 0.0, threshold = 0.0, max_seconds = 0.0;
  std::uint64_t split_seed = 0, train_seed = 0;
  bool class_weighting = false, deterministic = false;

  void add(CLI::App* app) {
    app->add_option("--config", config, "experiment config JSON (flags override it)");
    app->add_option("--manifest", manifest, "manifest JSON-Lines file");
    app->add_option("--mode", mode, "cascade | flat | both")->check(CLI::IsMember({"cascade", "flat", "both"}));
    app->add_option("--seeds", seeds, "run seeds 0..N-1")->check(CLI::PositiveNumber);
    app->add_option("--seed-list", seed_list, "comma-separated seed list");
    app->add_option("--backend", backend, "stand-in | external-probs")
        ->check(CLI::IsMember({"stand-in", "external-probs"}));
    app->add_option("--probs", probs, "external probabilities JSON-Lines (implies --backend external-probs)");
    app->add_option("--out", out, "output directory (default $SSD_OUTPUT_ROOT/<experiment id>)");
    app->add_option("--scoring", scoring, "subset | end-to-end")->check(CLI::IsMember({"subset", "end-to-end"}));
    app->add_option("--experiment-id", exp_id, "experiment id used in run file names");
    app->add_option("--tasks", tasks, "comma-separated subset of T1,T2,T3");
    app->add_option("--ratios", ratios, "train,val,test split ratios");
    app->add_option("--split-seed", split_seed, "split seed");
    app->add_option("--train-seed", train_seed, "base training seed");
    app->add_option("--jobs", jobs, "seeds run concurrently")->check(CLI::PositiveNumber);
    app->add_option("--epochs", epochs, "training epochs")->check(CLI::PositiveNumber);
    app->add_option("--lr", lr, "learning rate")->check(CLI::PositiveNumber);
    app->add_option("--batch-size", batch, "mini-batch size")->check(CLI::PositiveNumber);
    app->add_option("--grad-accum", accum, "gradient accumulation steps")->check(CLI::PositiveNumber);
    app->add_option("--hidden-units", hidden, "hidden layer width (0: linear)")->check(CLI::NonNegativeNumber);
    app->add_option("--oversampling", oversampling, "oversampling multiplier M_os")->check(CLI::PositiveNumber);
    app->add_option("--threshold", threshold, "T1 routing threshold on p(disordered)");
    app->add_option("--max-seconds", max_seconds, "trim clips to this length")->check(CLI::PositiveNumber);
    app->add_flag("--class-weighting", class_weighting, "inverse-frequency class weights");
    app->add_flag("--deterministic", deterministic, "train every seed identically");
  }

  json patch(CLI::App* app) const {
    json j = load_config(config);
    auto given = [&](const char* name) { return app->count(name) > 0; };
    if (given("--manifest")) j["manifest"] = manifest;
    if (given("--mode")) j["mode"] = mode;
    if (given("--seeds")) {
      std::vector<int> s;
      for (int i = 0; i < seeds; ++i) s.push_back(i);
      j["seeds"] = s;
    }
    if (given("--seed-list")) {
      std::vector<std::uint64_t> s;
      std::stringstream ss(seed_list);
      std::string part;
      while (std::getline(ss, part, ',')) {
        try {
          s.push_back(std::stoull(part));
        } catch (const std::exception&) {
          throw UsageError("bad seed '" + part + "'");
        }
      }
      j["seeds"] = s;
    }
    if (given("--backend")) j["backend"] = backend;
    if (given("--probs")) {
      j["external_probs"] = probs;
      if (!given("--backend")) j["backend"] = "external-probs";
    }
    if (given("--scoring")) j["scoring"] = scoring;
    if (given("--experiment-id")) j["experiment_id"] = exp_id;
    if (given("--tasks")) {
      std::vector<std::string> t;
      std::stringstream ss(tasks);
      std::string part;
      while (std::getline(ss, part, ',')) t.push_back(part);
      j["tasks"] = t;
    }
    if (given("--ratios")) j["ratios"] = parse_ratios(ratios);
    if (given("--split-seed")) j["split_seed"] = split_seed;
    if (given("--jobs")) j["jobs"] = jobs;
    if (given("--oversampling")) j["oversampling"] = oversampling;
    if (given("--threshold")) j["threshold"] = threshold;
    if (given("--max-seconds")) j["max_seconds"] = max_seconds;
    if (given("--class-weighting")) j["class_weighting"] = class_weighting;
    if (given("--deterministic")) j["deterministic"] = deterministic;
    json train = j.value("train", json::object());
    if (given("--epochs")) train["epochs"] = epochs;
    if (given("--lr")) train["learning_rate"] = lr;
    if (given("--batch-size")) train["batch_size"] = batch;
    if (given("--grad-accum")) train["grad_accum_steps"] = accum;
    if (given("--hidden-units")) train["hidden_units"] = hidden;
    if (given("--train-seed")) train["seed"] = train_seed;
    if (!train.empty()) j["train"] = train;
    if (given("--out")) j["output_dir"] = out;
    if (!j.contains("output_dir")) j["output_dir"] = output_root() + "/" + j.value("experiment_id", std::string("exp"));
    return j;
  }
};

struct PolicyFlags {
  std::string policy_file, strategy;
  double noise_prob = 0, noise_max = 0, pitch_prob = 0;
  int pitch_min = 0, pitch_max = 0;

  void add(CLI::App* app) {
    app->add_option("--policy", policy_file, "augmentation policy JSON (flags override it)");
    app->add_option("--noise-prob", noise_prob, "p_N")->check(CLI::Range(0.0, 1.0));
    app->add_option("--noise-max", noise_max, "maximum noise sigma")->check(CLI::NonNegativeNumber);
    app->add_option("--pitch-prob", pitch_prob, "p_G")->check(CLI::Range(0.0, 1.0));
    app->add_option("--pitch-min", pitch_min, "minimum shift in semitones")->check(CLI::NonNegativeNumber);
    app->add_option("--pitch-max", pitch_max, "maximum shift in semitones")->check(CLI::NonNegativeNumber);
    app->add_option("--gender-strategy", strategy, "toward-opposite | random-sign | stratified-rate")
        ->check(CLI::IsMember({"toward-opposite", "random-sign", "stratified-rate"}));
  }

  json patch(CLI::App* app) const {
    json j = load_config(policy_file);
    auto given = [&](const char* name) { return app->count(name) > 0; };
    if (given("--noise-prob")) j["noise_prob"] = noise_prob;
    if (given("--noise-max")) j["noise_max_amplitude"] = noise_max;
    if (given("--pitch-prob")) j["pitch_prob"] = pitch_prob;
    if (given("--pitch-min")) j["pitch_min_semitones"] = pitch_min;
    if (given("--pitch-max")) j["pitch_max_semitones"] = pitch_max;
    if (given("--gender-strategy")) j["gender_strategy"] = strategy;
    return j;
  }
};

void print_asr(const json& r) {
  std::printf("utterances  %zu\n", r.value("utterances", std::size_t{0}));
  std::printf("excluded    %zu\n", r.value("excluded", std::size_t{0}));
  for (const char* k : {"wer", "mer", "wip", "cer", "em", "token_f1"})
    if (r.contains(k) && r[k].is_number()) std::printf("%-11s %.4f\n", k, r[k].get<double>());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Speech-sound-disorder cascade toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", ssd_version());

  // split
  auto* split = app.add_subcommand("split", "speaker-disjoint stratified split");
  std::string split_manifest, split_out, split_ratios = "0.64,0.16,0.20";
  std::uint64_t split_seed = 0;
  split->add_option("--manifest", split_manifest, "manifest JSON-Lines file")->required();
  split->add_option("--ratios", split_ratios, "train,val,test ratios")->capture_default_str();
  split->add_option("--seed", split_seed, "split seed");
  split->add_option("--out", split_out, "assignment JSON output");

  // run
  auto* run = app.add_subcommand("run", "train and evaluate cascade and/or flat pipelines over seeds");
  ExperimentFlags run_flags;
  PolicyFlags run_policy;
  run_flags.add(run);
  run_policy.add(run);

  // asr-eval
  auto* asr = app.add_subcommand("asr-eval", "score ASR hypotheses against references");
  std::string asr_pairs, asr_out;
  bool asr_exclude = false, asr_per_utt = false;
  asr->add_option("--pairs", asr_pairs, "JSON-Lines of {id, reference, hypothesis}")->required();
  asr->add_flag("--exclude-vowel-descriptions", asr_exclude, "drop references with vowel-shape descriptions");
  asr->add_flag("--per-utterance", asr_per_utt, "include per-utterance scores in the JSON output");
  asr->add_option("--out", asr_out, "write the result JSON here");

  // search
  auto* search = app.add_subcommand("search", "hyperparameter search over the stand-in pipeline");
  ExperimentFlags search_flags;
  PolicyFlags search_policy;
  std::string search_space = "classification", search_strategy = "tpe", search_history, search_task = "T1";
  int search_budget = 50, search_parallel = 1;
  std::uint64_t search_seed = 0;
  bool search_dedup = false;
  double lr_scale = 100.0;
  search_flags.add(search);
  search_policy.add(search);
  search->add_option("--space", search_space, "classification | asr")
      ->check(CLI::IsMember({"classification", "asr"}));
  search->add_option("--strategy", search_strategy, "tpe | bayesian | random")
      ->check(CLI::IsMember({"tpe", "bayesian", "random"}));
  search->add_option("--budget", search_budget, "total trials")->check(CLI::PositiveNumber);
  search->add_option("--search-seed", search_seed, "search seed");
  search->add_option("--history", search_history, "trial history JSON-Lines (resumed if present)");
  search->add_option("--task", search_task, "task whose validation Macro F1 is maximized")
      ->check(CLI::IsMember({"T1", "T2", "T3"}));
  search->add_option("--parallelism", search_parallel, "concurrent trials")->check(CLI::PositiveNumber);
  search->add_flag("--dedup", search_dedup, "walk the grid without repeats (random strategy, discrete spaces)");
  search->add_option("--lr-scale", lr_scale, "stand-in learning rate = searched rate x scale")
      ->check(CLI::PositiveNumber);

  // augment
  auto* augment = app.add_subcommand("augment", "write augmented WAVs and an augmentation log");
  PolicyFlags aug_policy;
  std::string aug_manifest, aug_out;
  std::uint64_t aug_seed = 0;
  double aug_max_seconds = 12.0;
  aug_policy.add(augment);
  augment->add_option("--manifest", aug_manifest, "manifest JSON-Lines file")->required();
  augment->add_option("--seed", aug_seed, "global augmentation seed");
  augment->add_option("--out", aug_out, "output directory (default $SSD_OUTPUT_ROOT/augment)");
  augment->add_option("--max-seconds", aug_max_seconds, "trim clips to this length")->check(CLI::PositiveNumber);

  // make-synthetic
  auto* synth = app.add_subcommand("make-synthetic", "write a synthetic tone-texture corpus");
  std::string synth_out;
  int synth_speakers = 40, synth_clips = 8;
  std::uint64_t synth_seed = 0;
  bool synth_no_gender = false;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--speakers", synth_speakers, "number of speakers")->check(CLI::PositiveNumber);
  synth->add_option("--clips", synth_clips, "clips per speaker")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_flag("--no-gender", synth_no_gender, "leave gender unknown");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return SSD_ERR_USAGE;
  }

  try {
    if (split->parsed()) {
      const auto r = parse_ratios(split_ratios);
      Owned table;
      const int rc = report_status(ssd_split_run(split_manifest.c_str(), r[0], r[1], r[2], split_seed,
                                                 split_out.empty() ? nullptr : split_out.c_str(), &table.s));
      if (rc == 0) std::cout << table.str();
      return rc;
    }
    if (run->parsed()) {
      json cfg = run_flags.patch(run);
      json policy = run_policy.patch(run);
      if (!policy.empty()) {
        json merged = cfg.value("policy", json::object());
        merged.update(policy);
        cfg["policy"] = merged;
      }
      Owned result;
      const int rc = report_status(ssd_experiment_run(cfg.dump().c_str(), &result.s));
      if (rc != 0) return rc;
      const json r = json::parse(result.str());
      const std::string dir = r["output_dir"].get<std::string>();
      std::cout << read_file(dir + "/report.md");
      std::cout << "\ntrainer invocations: " << r["trainer_invocations"].get<std::size_t>() << "\noutputs: " << dir
                << '\n';
      return 0;
    }
    if (asr->parsed()) {
      Owned result;
      const int rc = report_status(ssd_asr_eval(asr_pairs.c_str(), asr_exclude, asr_per_utt, &result.s));
      if (rc != 0) return rc;
      const json r = json::parse(result.str());
      print_asr(r);
      if (asr_exclude) std::cout << "removed " << r.value("excluded", std::size_t{0}) << " utterance(s) with vowel descriptions\n";
      if (!asr_out.empty()) {
        std::ofstream out(asr_out);
        if (!out) {
          std::cerr << "error: cannot write " << asr_out << '\n';
          return SSD_ERR_RUNTIME;
        }
        out << r.dump(2) << '\n';
      }
      return 0;
    }
    if (search->parsed()) {
      json exp = search_flags.patch(search);
      json policy = search_policy.patch(search);
      if (!policy.empty()) {
        json merged = exp.value("policy", json::object());
        merged.update(policy);
        exp["policy"] = merged;
      }
      json cfg{{"experiment", exp},          {"space", search_space},  {"task", search_task},
               {"strategy", search_strategy}, {"budget", search_budget}, {"seed", search_seed},
               {"deduplicate", search_dedup}, {"parallelism", search_parallel}, {"lr_scale", lr_scale}};
      cfg["history"] = search_history.empty() ? json(exp["output_dir"].get<std::string>() + "/search_history.jsonl")
                                              : json(search_history);
      if (search_history.empty()) std::filesystem::create_directories(exp["output_dir"].get<std::string>());
      Owned result;
      const int rc = report_status(ssd_search_run(cfg.dump().c_str(), &result.s));
      if (rc != 0) return rc;
      const json r = json::parse(result.str());
      std::cout << "trials: " << r["trials"] << "\nhistory: " << cfg["history"].get<std::string>() << '\n';
      if (!r["best"].is_null())
        std::cout << "best objective: " << r["best"]["objective"] << "\nbest config: " << r["best"]["config"].dump()
                  << '\n';
      return 0;
    }
    if (augment->parsed()) {
      const json policy = aug_policy.patch(augment);
      const std::string out = aug_out.empty() ? output_root() + "/augment" : aug_out;
      Owned summary;
      const int rc = report_status(ssd_augment_run(aug_manifest.c_str(), policy.dump().c_str(), aug_seed, out.c_str(),
                                                   aug_max_seconds, &summary.s));
      if (rc != 0) return rc;
      const json s = json::parse(summary.str());
      std::cout << "wrote " << s["written"] << " clips to " << out << " (noise " << s["noise_applied"] << ", pitch "
                << s["pitch_applied"] << ")\n";
      return 0;
    }
    if (synth->parsed()) {
      const json cfg{{"speakers", synth_speakers},
                     {"clips_per_speaker", synth_clips},
                     {"seed", synth_seed},
                     {"with_gender", !synth_no_gender}};
      Owned manifest;
      const int rc = report_status(ssd_synthetic_write(cfg.dump().c_str(), synth_out.c_str(), &manifest.s));
      if (rc == 0) std::cout << manifest.str() << '\n';
      return rc;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return SSD_ERR_USAGE;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return SSD_ERR_RUNTIME;
  }
  return SSD_ERR_USAGE;
}
