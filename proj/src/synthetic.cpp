#include "ssd/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

#include "ssd/rng.hpp"

namespace ssd {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::string speaker_name(int s) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "spk%03d", s);
  return buf;
}

double speaker_f0(const SyntheticConfig& c, const SampleRecord& r) {
  Rng rng(derive_seed(c.seed, std::string_view(r.speaker_id)));
  return r.gender == Gender::male ? uniform(rng, 100.0, 140.0) : uniform(rng, 200.0, 260.0);
}

/// Two-pole resonator applied to white noise, normalized to unit RMS.
std::vector<double> band_noise(std::size_t n, double centre, double bandwidth, int rate, Rng& rng) {
  const double r = std::exp(-std::numbers::pi * bandwidth / rate);
  const double a1 = -2.0 * r * std::cos(kTwoPi * centre / rate), a2 = r * r;
  std::vector<double> y(n);
  double y1 = 0.0, y2 = 0.0, ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = standard_normal(rng) - a1 * y1 - a2 * y2;
    y2 = y1;
    y1 = v;
    y[i] = v;
    ss += v * v;
  }
  const double rms = std::sqrt(ss / static_cast<double>(std::max<std::size_t>(n, 1)));
  if (rms > 0.0)
    for (double& v : y) v /= rms;
  return y;
}

}  // namespace

std::vector<SampleRecord> synthetic_records(const SyntheticConfig& c) {
  if (c.speakers < 3) throw usage_error("synthetic corpus needs at least 3 speakers");
  if (c.clips_per_speaker < 1) throw usage_error("clips_per_speaker must be >= 1");
  Rng rng(derive_seed(c.seed, std::string_view("labels")));
  const int disordered_speakers = static_cast<int>(std::lround(c.disordered_speaker_fraction * c.speakers));
  std::vector<int> order(static_cast<std::size_t>(c.speakers));
  for (int i = 0; i < c.speakers; ++i) order[static_cast<std::size_t>(i)] = i;
  shuffle(order, rng);
  std::vector<bool> disordered(static_cast<std::size_t>(c.speakers), false);
  for (int i = 0; i < disordered_speakers; ++i) disordered[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = true;

  std::vector<SampleRecord> out;
  for (int s = 0; s < c.speakers; ++s) {
    for (int k = 0; k < c.clips_per_speaker; ++k) {
      SampleRecord r;
      r.speaker_id = speaker_name(s);
      r.id = r.speaker_id + "_" + std::to_string(k);
      r.audio_path = "audio/" + r.id + ".wav";
      r.gender = c.with_gender ? (s % 2 == 0 ? Gender::female : Gender::male) : Gender::unknown;
      if (disordered[static_cast<std::size_t>(s)]) {
        r.t1_label = t1::disordered;
        r.t2_label = uniform01(rng) < c.phonological_share ? 1 : 0;
        r.t3_label = static_cast<int>(uniform_index(rng, 4));
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

AudioClip synthetic_clip(const SyntheticConfig& c, const SampleRecord& r) {
  AudioClip clip;
  const std::size_t n = static_cast<std::size_t>(std::lround(c.seconds * clip.sample_rate));
  clip.samples.assign(n, 0.0);
  Rng rng(derive_seed(c.seed, std::string_view(r.id)));
  const double rate = clip.sample_rate;
  const double f0 = speaker_f0(c, r) * uniform(rng, 0.97, 1.03);
  const double phase0 = uniform(rng, 0.0, kTwoPi);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / rate;
    double v = 0.0;
    for (int h = 1; h <= 6; ++h) v += std::sin(kTwoPi * f0 * h * t + h * phase0) / h;
    clip.samples[i] = 0.12 * v + 0.004 * standard_normal(rng);
  }
  if (r.disordered()) {
    const double centre = (r.t2_label.value_or(0) == 1 ? 2600.0 : 4200.0) + c.texture_spread * standard_normal(rng);
    const double level = std::exp(uniform(rng, std::log(c.hiss_level_min), std::log(c.hiss_level_max)));
    const auto hiss = band_noise(n, std::clamp(centre, 500.0, 7500.0), 400.0, clip.sample_rate, rng);
    const int symptom = r.t3_label.value_or(0);
    const double rate_hz = uniform(rng, 4.0, 7.0);
    const double gap_at = uniform(rng, 0.2, 0.6);
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / rate;
      const double u = t / c.seconds;
      double env = 1.0;
      switch (symptom) {
        case 0: env = u > gap_at ? 1.6 : 0.6; break;                         // addition: late burst
        case 1: env = 1.0; clip.samples[i] += 0.04 * std::sin(kTwoPi * 900.0 * t); break;  // substitution
        case 2: if (u > gap_at && u < gap_at + 0.25) clip.samples[i] *= 0.1; break;       // omission
        case 3: env = std::sin(kTwoPi * rate_hz * t) > 0.0 ? 1.4 : 0.2; break;  // stuttering
      }
      clip.samples[i] += level * env * hiss[i];
    }
  }
  for (double& v : clip.samples) v = std::clamp(v, -1.0, 1.0);
  return clip;
}

SyntheticDataset write_synthetic_dataset(const SyntheticConfig& c, const std::filesystem::path& dir) {
  SyntheticDataset ds;
  ds.records = synthetic_records(c);
  std::filesystem::create_directories(dir / "audio");
  for (const auto& r : ds.records) write_wav16(dir / r.audio_path, synthetic_clip(c, r));
  ds.manifest = dir / "manifest.jsonl";
  write_manifest(ds.manifest, ds.records);
  return ds;
}

}  // namespace ssd
