#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ssd/audio_io.hpp"
#include "ssd/dataset.hpp"
#include "ssd/rng.hpp"

namespace ssd {

/// How the sign of a pitch shift depends on speaker gender.
///  - toward_opposite: female shifts down, male shifts up (needs gender).
///  - random_sign: sign is a fair coin, gender ignored.
///  - stratified_rate: random sign; when planned over a batch with
///    plan_pitch_decisions, exactly round(p_G * n_g) records of each gender are
///    shifted (needs gender).
enum class GenderStrategy { toward_opposite, random_sign, stratified_rate };

std::string_view to_string(GenderStrategy s) noexcept;
std::optional<GenderStrategy> parse_gender_strategy(std::string_view s) noexcept;

struct AugmentationPolicy {
  double noise_prob = 0.0;           ///< p_N
  double noise_max_amplitude = 0.0;  ///< upper bound of the per-call sigma
  double pitch_prob = 0.0;           ///< p_G
  int pitch_min_semitones = 0;
  int pitch_max_semitones = 0;
  GenderStrategy gender_strategy = GenderStrategy::toward_opposite;

  /// Throws usage errors on out-of-range fields.
  void validate() const;
  bool is_noop() const noexcept { return noise_prob <= 0.0 && pitch_prob <= 0.0; }
};

nlohmann::json to_json(const AugmentationPolicy& p);
AugmentationPolicy policy_from_json(const nlohmann::json& j);

struct AugmentationLog {
  std::string record_id;
  bool noise_applied = false;
  double noise_sigma = 0.0;
  bool pitch_applied = false;
  double semitones = 0.0;
  std::uint64_t seed = 0;

  bool operator==(const AugmentationLog&) const = default;
};

nlohmann::json to_json(const AugmentationLog& log);
AugmentationLog augmentation_log_from_json(const nlohmann::json& j);

/// output[i] = clamp(input[i] + n_i, -1, 1), n_i ~ N(0, sigma^2).
AudioClip add_gaussian_noise(const AudioClip& clip, double sigma, Rng& rng);

/// Duration-preserving pitch shift: phase-vocoder time stretch by
/// 2^(semitones/12) followed by band-limited resampling back to the input length.
AudioClip pitch_shift(const AudioClip& clip, double semitones);

/// Per-record seed for a batch run: hash(global_seed, record id).
std::uint64_t record_seed(std::uint64_t global_seed, std::string_view record_id) noexcept;

/// Forces the pitch application decision (used by batch planning).
struct PitchDecision {
  bool apply = false;
};

/// Draws (in order): noise gate, sigma, pitch gate, magnitude, sign. All draws
/// come from a generator seeded with `seed`, so the result is a pure function of
/// (record, clip, policy, seed). Pitch is applied before noise.
std::pair<AudioClip, AugmentationLog> apply_policy(const SampleRecord& record, const AudioClip& clip,
                                                   const AugmentationPolicy& policy, std::uint64_t seed,
                                                   std::optional<PitchDecision> forced = std::nullopt);

/// Rebuilds the augmented waveform from its log.
AudioClip replay(const AudioClip& clip, const AugmentationLog& log);

/// For stratified_rate: which records receive a pitch shift, with exact
/// per-gender quotas. The selection depends on the record set, not its order.
/// Other strategies return independent Bernoulli(p_G) decisions per record.
std::vector<PitchDecision> plan_pitch_decisions(const std::vector<SampleRecord>& records,
                                                const AugmentationPolicy& policy, std::uint64_t global_seed);

}  // namespace ssd
