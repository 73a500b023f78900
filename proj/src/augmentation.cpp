#include "ssd/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>

#include "ssd/fft.hpp"

namespace ssd {

using nlohmann::json;

std::string_view to_string(GenderStrategy s) noexcept {
  switch (s) {
    case GenderStrategy::toward_opposite: return "toward-opposite";
    case GenderStrategy::random_sign: return "random-sign";
    case GenderStrategy::stratified_rate: return "stratified-rate";
  }
  return "?";
}

std::optional<GenderStrategy> parse_gender_strategy(std::string_view s) noexcept {
  if (s == "toward-opposite") return GenderStrategy::toward_opposite;
  if (s == "random-sign") return GenderStrategy::random_sign;
  if (s == "stratified-rate") return GenderStrategy::stratified_rate;
  return std::nullopt;
}

void AugmentationPolicy::validate() const {
  if (!(noise_prob >= 0.0 && noise_prob <= 1.0)) throw usage_error("noise_prob must be in [0, 1]");
  if (!(pitch_prob >= 0.0 && pitch_prob <= 1.0)) throw usage_error("pitch_prob must be in [0, 1]");
  if (!(noise_max_amplitude >= 0.0)) throw usage_error("noise_max_amplitude must be >= 0");
  if (pitch_min_semitones < 0) throw usage_error("pitch_min_semitones must be >= 0");
  if (pitch_max_semitones < pitch_min_semitones) throw usage_error("pitch_max_semitones < pitch_min_semitones");
  if (pitch_max_semitones > 24) throw usage_error("pitch shifts are limited to 24 semitones");
}

json to_json(const AugmentationPolicy& p) {
  return json{{"noise_prob", p.noise_prob},
              {"noise_max_amplitude", p.noise_max_amplitude},
              {"pitch_prob", p.pitch_prob},
              {"pitch_min_semitones", p.pitch_min_semitones},
              {"pitch_max_semitones", p.pitch_max_semitones},
              {"gender_strategy", std::string(to_string(p.gender_strategy))}};
}

AugmentationPolicy policy_from_json(const json& j) {
  AugmentationPolicy p;
  try {
    p.noise_prob = j.value("noise_prob", p.noise_prob);
    p.noise_max_amplitude = j.value("noise_max_amplitude", p.noise_max_amplitude);
    p.pitch_prob = j.value("pitch_prob", p.pitch_prob);
    p.pitch_min_semitones = j.value("pitch_min_semitones", p.pitch_min_semitones);
    p.pitch_max_semitones = j.value("pitch_max_semitones", p.pitch_max_semitones);
    if (j.contains("gender_strategy")) {
      auto s = parse_gender_strategy(j["gender_strategy"].get<std::string>());
      if (!s) throw usage_error("unknown gender_strategy '" + j["gender_strategy"].get<std::string>() + "'");
      p.gender_strategy = *s;
    }
  } catch (const json::exception& e) {
    throw usage_error(std::string("malformed augmentation policy: ") + e.what());
  }
  p.validate();
  return p;
}

json to_json(const AugmentationLog& log) {
  return json{{"id", log.record_id},
              {"noise_applied", log.noise_applied},
              {"noise_sigma", log.noise_sigma},
              {"pitch_applied", log.pitch_applied},
              {"semitones", log.semitones},
              {"seed", log.seed}};
}

AugmentationLog augmentation_log_from_json(const json& j) {
  AugmentationLog log;
  log.record_id = j.at("id").get<std::string>();
  log.noise_applied = j.at("noise_applied").get<bool>();
  log.noise_sigma = j.at("noise_sigma").get<double>();
  log.pitch_applied = j.at("pitch_applied").get<bool>();
  log.semitones = j.at("semitones").get<double>();
  log.seed = j.at("seed").get<std::uint64_t>();
  return log;
}

AudioClip add_gaussian_noise(const AudioClip& clip, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw usage_error("noise sigma must be >= 0");
  AudioClip out = clip;
  if (sigma == 0.0) return out;
  for (double& s : out.samples) s = std::clamp(s + sigma * standard_normal(rng), -1.0, 1.0);
  return out;
}

namespace {

constexpr std::size_t kFrame = 1024;
constexpr std::size_t kSynthesisHop = kFrame / 4;

double wrap_phase(double p) {
  return p - 2.0 * std::numbers::pi * std::round(p / (2.0 * std::numbers::pi));
}

/// Phase-vocoder time stretch; output is about `factor` times longer.
std::vector<double> time_stretch(const std::vector<double>& x, double factor) {
  const std::size_t n = kFrame;
  const std::size_t half = n / 2;
  std::vector<double> window(n);
  for (std::size_t i = 0; i < n; ++i) window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);

  const auto input_len = static_cast<double>(x.size());
  const auto out_len = static_cast<std::size_t>(std::ceil(input_len * factor));
  const std::size_t frames = out_len / kSynthesisHop + 2;

  // Input is centered: frame m analyses x[p_m - half, p_m + half).
  auto sample_at = [&](std::ptrdiff_t i) {
    return (i < 0 || i >= static_cast<std::ptrdiff_t>(x.size())) ? 0.0 : x[static_cast<std::size_t>(i)];
  };

  RealFft fft(n);
  const std::size_t bins = fft.bins();
  std::vector<double> frame(n);
  std::vector<std::complex<double>> spec(bins);
  std::vector<double> prev_phase(bins, 0.0), synth_phase(bins, 0.0);
  std::vector<double> out(out_len + n, 0.0), norm(out_len + n, 0.0);

  std::ptrdiff_t prev_pos = 0;
  for (std::size_t m = 0; m < frames; ++m) {
    const auto pos = static_cast<std::ptrdiff_t>(std::llround(static_cast<double>(m * kSynthesisHop) / factor));
    for (std::size_t i = 0; i < n; ++i)
      frame[i] = window[i] * sample_at(pos - static_cast<std::ptrdiff_t>(half) + static_cast<std::ptrdiff_t>(i));
    fft.forward(frame, spec);

    const double analysis_hop = static_cast<double>(pos - prev_pos);
    for (std::size_t k = 0; k < bins; ++k) {
      const double mag = std::abs(spec[k]);
      const double phase = std::arg(spec[k]);
      if (m == 0) {
        synth_phase[k] = phase;
      } else {
        const double omega = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
        double inst = omega;
        if (analysis_hop > 0.0) inst = omega + wrap_phase(phase - prev_phase[k] - omega * analysis_hop) / analysis_hop;
        synth_phase[k] += inst * static_cast<double>(kSynthesisHop);
      }
      prev_phase[k] = phase;
      spec[k] = std::polar(mag, synth_phase[k]);
    }
    prev_pos = pos;

    fft.inverse(spec, frame);
    // Output frame m is centered at m * hop.
    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(m * kSynthesisHop) - static_cast<std::ptrdiff_t>(half);
    for (std::size_t i = 0; i < n; ++i) {
      const std::ptrdiff_t o = start + static_cast<std::ptrdiff_t>(i);
      if (o < 0 || o >= static_cast<std::ptrdiff_t>(out.size())) continue;
      out[static_cast<std::size_t>(o)] += window[i] * frame[i] / static_cast<double>(n);
      norm[static_cast<std::size_t>(o)] += window[i] * window[i];
    }
  }
  out.resize(out_len);
  for (std::size_t i = 0; i < out_len; ++i)
    if (norm[i] > 1e-3) out[i] /= norm[i];
  return out;
}

}  // namespace

AudioClip pitch_shift(const AudioClip& clip, double semitones) {
  if (!(std::abs(semitones) <= 24.0)) throw usage_error("pitch shift limited to +/-24 semitones");
  if (semitones == 0.0 || clip.samples.empty()) return clip;
  const double factor = std::pow(2.0, semitones / 12.0);
  const std::vector<double> stretched = time_stretch(clip.samples, factor);
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.samples = resample_by_step(stretched, factor, clip.size());
  for (double& s : out.samples) s = std::clamp(s, -1.0, 1.0);
  return out;
}

std::uint64_t record_seed(std::uint64_t global_seed, std::string_view record_id) noexcept {
  return derive_seed(global_seed, record_id);
}

namespace {

struct PolicyDraws {
  double noise_gate, sigma_unit, pitch_gate, magnitude_unit, sign;
};

PolicyDraws draw(std::uint64_t seed) {
  Rng rng(seed);
  PolicyDraws d{};
  d.noise_gate = uniform01(rng);
  d.sigma_unit = uniform01(rng);
  d.pitch_gate = uniform01(rng);
  d.magnitude_unit = uniform01(rng);
  d.sign = uniform01(rng);
  return d;
}

Rng noise_rng(std::uint64_t seed) { return Rng(derive_seed(seed, std::string_view("noise"))); }

bool needs_gender(const AugmentationPolicy& p) {
  return p.pitch_prob > 0.0 && p.gender_strategy != GenderStrategy::random_sign;
}

}  // namespace

std::pair<AudioClip, AugmentationLog> apply_policy(const SampleRecord& record, const AudioClip& clip,
                                                   const AugmentationPolicy& policy, std::uint64_t seed,
                                                   std::optional<PitchDecision> forced) {
  if (needs_gender(policy) && record.gender == Gender::unknown)
    throw data_error("record '" + record.id + "' has no gender but strategy " +
                     std::string(to_string(policy.gender_strategy)) + " depends on it");

  const PolicyDraws d = draw(seed);
  AugmentationLog log;
  log.record_id = record.id;
  log.seed = seed;
  log.noise_applied = d.noise_gate < policy.noise_prob;
  if (log.noise_applied) log.noise_sigma = d.sigma_unit * policy.noise_max_amplitude;
  log.pitch_applied = forced ? forced->apply : d.pitch_gate < policy.pitch_prob;
  if (log.pitch_applied) {
    const double magnitude = policy.pitch_min_semitones +
                             d.magnitude_unit * (policy.pitch_max_semitones - policy.pitch_min_semitones);
    double sign = d.sign < 0.5 ? 1.0 : -1.0;
    if (policy.gender_strategy == GenderStrategy::toward_opposite) sign = record.gender == Gender::female ? -1.0 : 1.0;
    log.semitones = sign * magnitude;
  }
  return {replay(clip, log), log};
}

AudioClip replay(const AudioClip& clip, const AugmentationLog& log) {
  AudioClip out = log.pitch_applied ? pitch_shift(clip, log.semitones) : clip;
  if (log.noise_applied) {
    Rng rng = noise_rng(log.seed);
    out = add_gaussian_noise(out, log.noise_sigma, rng);
  }
  return out;
}

std::vector<PitchDecision> plan_pitch_decisions(const std::vector<SampleRecord>& records,
                                                const AugmentationPolicy& policy, std::uint64_t global_seed) {
  std::vector<PitchDecision> out(records.size());
  if (policy.gender_strategy != GenderStrategy::stratified_rate) {
    for (std::size_t i = 0; i < records.size(); ++i)
      out[i].apply = draw(record_seed(global_seed, records[i].id)).pitch_gate < policy.pitch_prob;
    return out;
  }
  std::map<Gender, std::vector<std::size_t>> by_gender;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (policy.pitch_prob > 0.0 && records[i].gender == Gender::unknown)
      throw data_error("record '" + records[i].id + "' has no gender but strategy stratified-rate depends on it");
    by_gender[records[i].gender].push_back(i);
  }
  for (auto& [g, idx] : by_gender) {
    // Rank by (hashed id, id): a set-dependent, order-independent permutation.
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      const auto ka = record_seed(global_seed, records[a].id), kb = record_seed(global_seed, records[b].id);
      return ka != kb ? ka < kb : records[a].id < records[b].id;
    });
    const auto quota = static_cast<std::size_t>(std::llround(policy.pitch_prob * static_cast<double>(idx.size())));
    for (std::size_t r = 0; r < quota && r < idx.size(); ++r) out[idx[r]].apply = true;
  }
  return out;
}

}  // namespace ssd
