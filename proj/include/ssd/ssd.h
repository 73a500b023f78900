/* C interface to the speech-sound-disorder toolkit. */
#ifndef SSD_SSD_H
#define SSD_SSD_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  ifdef SSD_BUILDING_LIBRARY
#    define SSD_API __declspec(dllexport)
#  else
#    define SSD_API __declspec(dllimport)
#  endif
#else
#  define SSD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Values double as process exit codes. */
typedef enum ssd_status {
  SSD_OK = 0,
  SSD_ERR_USAGE = 2,
  SSD_ERR_DATA = 3,
  SSD_ERR_RUNTIME = 4
} ssd_status;

/* Message of the last failure on the calling thread ("" if none). */
SSD_API const char* ssd_last_error(void);
SSD_API const char* ssd_version(void);
/* Frees strings returned through char** out-parameters. */
SSD_API void ssd_string_free(char* s);

/* ---- audio ---- */
typedef struct ssd_clip ssd_clip;

/* Loads a WAV file and resamples it to 16 kHz mono. */
SSD_API ssd_status ssd_clip_load(const char* path, ssd_clip** out);
SSD_API ssd_status ssd_clip_from_samples(const double* samples, size_t n, int sample_rate, ssd_clip** out);
SSD_API void ssd_clip_free(ssd_clip* clip);
SSD_API size_t ssd_clip_length(const ssd_clip* clip);
SSD_API int ssd_clip_sample_rate(const ssd_clip* clip);
/* Valid until the clip is freed. */
SSD_API const double* ssd_clip_samples(const ssd_clip* clip);
SSD_API ssd_status ssd_clip_write(const ssd_clip* clip, const char* path);
SSD_API ssd_status ssd_clip_pitch_shift(const ssd_clip* clip, double semitones, ssd_clip** out);
SSD_API ssd_status ssd_clip_add_noise(const ssd_clip* clip, double sigma, uint64_t seed, ssd_clip** out);
/* Pooled log-mel statistics; *dim receives the vector length. Fails with
   SSD_ERR_USAGE when cap is too small. */
SSD_API ssd_status ssd_clip_features(const ssd_clip* clip, double* out, size_t cap, size_t* dim);

/* ---- manifests ---- */
typedef struct ssd_manifest ssd_manifest;

SSD_API ssd_status ssd_manifest_load(const char* path, ssd_manifest** out);
SSD_API void ssd_manifest_free(ssd_manifest* m);
SSD_API size_t ssd_manifest_size(const ssd_manifest* m);
/* JSON of record i. */
SSD_API ssd_status ssd_manifest_record(const ssd_manifest* m, size_t i, char** json_out);

/* ---- commands ---- */

/* Writes the split assignment to out_path (skipped when NULL) and returns the
   per-split count table in *table_out (may be NULL). */
SSD_API ssd_status ssd_split_run(const char* manifest, double train, double val, double test, uint64_t seed,
                                 const char* out_path, char** table_out);

/* config_json: experiment configuration object. *result_json receives
   {"report", "trainer_invocations", "output_dir"}. */
SSD_API ssd_status ssd_experiment_run(const char* config_json, char** result_json);

/* Scores a JSON-Lines file of {id, reference, hypothesis}. */
SSD_API ssd_status ssd_asr_eval(const char* pairs_path, int exclude_vowel_descriptions, int per_utterance,
                                char** result_json);
SSD_API ssd_status ssd_asr_score_pair(const char* reference, const char* hypothesis, char** result_json);
SSD_API int ssd_is_vowel_description(const char* text);

/* config_json: {"experiment": {...}, "space", "task", "strategy", "budget",
   "seed", "deduplicate", "parallelism", "history", "lr_scale"}. */
SSD_API ssd_status ssd_search_run(const char* config_json, char** result_json);

/* Writes augmented WAVs and augment_log.jsonl into out_dir. */
SSD_API ssd_status ssd_augment_run(const char* manifest, const char* policy_json, uint64_t seed, const char* out_dir,
                                   double max_seconds, char** summary_json);

/* Writes a synthetic tone-texture corpus; *manifest_out receives the manifest path. */
SSD_API ssd_status ssd_synthetic_write(const char* config_json, const char* dir, char** manifest_out);

#ifdef __cplusplus
}
#endif

#endif
