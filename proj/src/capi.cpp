#include "ssd/ssd.h"

#include <cstdlib>
#include <cstring>
#include <new>
#include <string>

#include "json.hpp"
#include "ssd/audio_io.hpp"
#include "ssd/augmentation.hpp"
#include "ssd/dataset.hpp"
#include "ssd/experiment.hpp"
#include "ssd/features.hpp"
#include "ssd/metrics.hpp"
#include "ssd/synthetic.hpp"

struct ssd_clip {
  ssd::AudioClip clip;
};

struct ssd_manifest {
  std::vector<ssd::SampleRecord> records;
};

namespace {

using nlohmann::json;

thread_local std::string g_last_error;

ssd_status fail(ssd_status s, const std::string& what) {
  g_last_error = what;
  return s;
}

template <typename F>
ssd_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return SSD_OK;
  } catch (const ssd::Error& e) {
    return fail(static_cast<ssd_status>(static_cast<int>(e.kind())), e.what());
  } catch (const json::exception& e) {
    return fail(SSD_ERR_USAGE, std::string("invalid JSON: ") + e.what());
  } catch (const std::bad_alloc&) {
    return fail(SSD_ERR_RUNTIME, "out of memory");
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(SSD_ERR_RUNTIME, e.what());
  } catch (const std::exception& e) {
    return fail(SSD_ERR_RUNTIME, e.what());
  }
}

void require(const void* p, const char* what) {
  if (!p) throw ssd::usage_error(std::string(what) + " is NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put(char** out, const std::string& s) {
  if (out) *out = dup_string(s);
}

json parse_object(const char* text, const char* what) {
  if (!text || !*text) return json::object();
  json j = json::parse(text);
  if (!j.is_object()) throw ssd::usage_error(std::string(what) + " must be a JSON object");
  return j;
}

}  // namespace

extern "C" {

const char* ssd_last_error(void) { return g_last_error.c_str(); }
const char* ssd_version(void) { return "1.0.0"; }
void ssd_string_free(char* s) { std::free(s); }

ssd_status ssd_clip_load(const char* path, ssd_clip** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new ssd_clip{ssd::load_wav_canonical(path)};
  });
}

ssd_status ssd_clip_from_samples(const double* samples, size_t n, int sample_rate, ssd_clip** out) {
  return guarded([&] {
    require(out, "out");
    if (n > 0) require(samples, "samples");
    if (sample_rate <= 0) throw ssd::usage_error("sample rate must be positive");
    auto* c = new ssd_clip;
    c->clip.samples.assign(samples, samples + n);
    c->clip.sample_rate = sample_rate;
    *out = c;
  });
}

void ssd_clip_free(ssd_clip* clip) { delete clip; }
size_t ssd_clip_length(const ssd_clip* clip) { return clip ? clip->clip.size() : 0; }
int ssd_clip_sample_rate(const ssd_clip* clip) { return clip ? clip->clip.sample_rate : 0; }
const double* ssd_clip_samples(const ssd_clip* clip) { return clip ? clip->clip.samples.data() : nullptr; }

ssd_status ssd_clip_write(const ssd_clip* clip, const char* path) {
  return guarded([&] {
    require(clip, "clip");
    require(path, "path");
    ssd::write_wav16(path, clip->clip);
  });
}

ssd_status ssd_clip_pitch_shift(const ssd_clip* clip, double semitones, ssd_clip** out) {
  return guarded([&] {
    require(clip, "clip");
    require(out, "out");
    *out = new ssd_clip{ssd::pitch_shift(clip->clip, semitones)};
  });
}

ssd_status ssd_clip_add_noise(const ssd_clip* clip, double sigma, uint64_t seed, ssd_clip** out) {
  return guarded([&] {
    require(clip, "clip");
    require(out, "out");
    if (!(sigma >= 0.0)) throw ssd::usage_error("sigma must be >= 0");
    ssd::Rng rng(seed);
    *out = new ssd_clip{ssd::add_gaussian_noise(clip->clip, sigma, rng)};
  });
}

ssd_status ssd_clip_features(const ssd_clip* clip, double* out, size_t cap, size_t* dim) {
  return guarded([&] {
    require(clip, "clip");
    ssd::FeatureConfig cfg;
    if (dim) *dim = cfg.dimension();
    if (cap < cfg.dimension()) throw ssd::usage_error("feature buffer too small");
    require(out, "out");
    const ssd::FeatureVector f = ssd::extract(clip->clip, cfg);
    std::copy(f.values.begin(), f.values.end(), out);
  });
}

ssd_status ssd_manifest_load(const char* path, ssd_manifest** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new ssd_manifest{ssd::load_manifest(path)};
  });
}

void ssd_manifest_free(ssd_manifest* m) { delete m; }
size_t ssd_manifest_size(const ssd_manifest* m) { return m ? m->records.size() : 0; }

ssd_status ssd_manifest_record(const ssd_manifest* m, size_t i, char** json_out) {
  return guarded([&] {
    require(m, "manifest");
    require(json_out, "json_out");
    if (i >= m->records.size()) throw ssd::usage_error("record index out of range");
    *json_out = dup_string(ssd::to_json(m->records[i]).dump());
  });
}

ssd_status ssd_split_run(const char* manifest, double train, double val, double test, uint64_t seed,
                         const char* out_path, char** table_out) {
  return guarded([&] {
    require(manifest, "manifest");
    auto res = ssd::run_split_command(manifest, {train, val, test}, seed, out_path ? out_path : "");
    put(table_out, res.table);
  });
}

ssd_status ssd_experiment_run(const char* config_json, char** result_json) {
  return guarded([&] {
    const auto config = ssd::experiment_config_from_json(parse_object(config_json, "experiment config"));
    const auto res = ssd::run_experiment(config);
    put(result_json, json{{"report", ssd::to_json(res.report)},
                          {"trainer_invocations", res.trainer_invocations},
                          {"output_dir", res.output_dir.string()}}
                         .dump());
  });
}

ssd_status ssd_asr_eval(const char* pairs_path, int exclude_vowel_descriptions, int per_utterance,
                        char** result_json) {
  return guarded([&] {
    require(pairs_path, "pairs_path");
    const auto res = ssd::evaluate_asr(ssd::load_asr_pairs(pairs_path), exclude_vowel_descriptions != 0);
    put(result_json, ssd::to_json(res, per_utterance != 0).dump());
  });
}

ssd_status ssd_asr_score_pair(const char* reference, const char* hypothesis, char** result_json) {
  return guarded([&] {
    require(reference, "reference");
    require(hypothesis, "hypothesis");
    const auto res = ssd::evaluate_asr({{"pair", reference, hypothesis}}, false);
    put(result_json, ssd::to_json(res).dump());
  });
}

int ssd_is_vowel_description(const char* text) { return text && ssd::contains_vowel_description(text) ? 1 : 0; }

ssd_status ssd_search_run(const char* config_json, char** result_json) {
  return guarded([&] {
    const json j = parse_object(config_json, "search config");
    ssd::SearchCommandConfig sc;
    sc.base = ssd::experiment_config_from_json(j.value("experiment", json::object()));
    sc.space = j.value("space", sc.space);
    const auto task = ssd::parse_task(j.value("task", std::string("T1")));
    if (!task) throw ssd::usage_error("unknown task '" + j.value("task", std::string()) + "'");
    sc.task = *task;
    const auto strategy = ssd::hpo::parse_strategy(j.value("strategy", std::string("tpe")));
    if (!strategy) throw ssd::usage_error("unknown strategy '" + j.value("strategy", std::string()) + "'");
    sc.options.strategy = *strategy;
    sc.options.budget = j.value("budget", sc.options.budget);
    sc.options.seed = j.value("seed", sc.options.seed);
    sc.options.deduplicate = j.value("deduplicate", sc.options.deduplicate);
    sc.options.parallelism = j.value("parallelism", sc.options.parallelism);
    if (j.contains("history") && !j["history"].is_null()) sc.options.history_path = j["history"].get<std::string>();
    sc.lr_scale = j.value("lr_scale", sc.lr_scale);
    if (sc.options.budget < 1) throw ssd::usage_error("budget must be >= 1");
    const auto res = ssd::run_search_command(sc);
    json history = json::array();
    for (const auto& t : res.history) history.push_back(ssd::hpo::to_json(t));
    put(result_json, json{{"best", res.best ? ssd::hpo::to_json(*res.best) : json(nullptr)},
                          {"trials", res.history.size()},
                          {"history", history}}
                         .dump());
  });
}

ssd_status ssd_augment_run(const char* manifest, const char* policy_json, uint64_t seed, const char* out_dir,
                           double max_seconds, char** summary_json) {
  return guarded([&] {
    require(manifest, "manifest");
    require(out_dir, "out_dir");
    const auto policy = ssd::policy_from_json(parse_object(policy_json, "policy"));
    const auto res = ssd::run_augment_command(manifest, policy, seed, out_dir, max_seconds);
    std::size_t noise = 0, pitch = 0;
    for (const auto& l : res.logs) {
      noise += l.noise_applied;
      pitch += l.pitch_applied;
    }
    put(summary_json, json{{"written", res.written}, {"noise_applied", noise}, {"pitch_applied", pitch}}.dump());
  });
}

ssd_status ssd_synthetic_write(const char* config_json, const char* dir, char** manifest_out) {
  return guarded([&] {
    require(dir, "dir");
    const json j = parse_object(config_json, "synthetic config");
    ssd::SyntheticConfig c;
    c.speakers = j.value("speakers", c.speakers);
    c.clips_per_speaker = j.value("clips_per_speaker", c.clips_per_speaker);
    c.seconds = j.value("seconds", c.seconds);
    c.disordered_speaker_fraction = j.value("disordered_speaker_fraction", c.disordered_speaker_fraction);
    c.phonological_share = j.value("phonological_share", c.phonological_share);
    c.texture_spread = j.value("texture_spread", c.texture_spread);
    c.with_gender = j.value("with_gender", c.with_gender);
    c.seed = j.value("seed", c.seed);
    const auto ds = ssd::write_synthetic_dataset(c, dir);
    put(manifest_out, ds.manifest.string());
  });
}

}  // extern "C"
