#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ssd/audio_io.hpp"
#include "ssd/dataset.hpp"

namespace ssd {

/// Tone-texture corpus for smoke tests and demos. Each speaker has a fixed
/// fundamental (higher for female speakers); typical clips are clean harmonic
/// tones, disordered clips add a band-limited hiss whose centre frequency
/// depends on the T2 class and an envelope pattern that depends on the T3 class.
struct SyntheticConfig {
  int speakers = 40;
  int clips_per_speaker = 8;
  double seconds = 0.4;
  double disordered_speaker_fraction = 0.5;
  /// Share of phonological clips among disordered clips (rest: articulation).
  double phonological_share = 0.18;
  /// Spread of the hiss centre frequency in Hz; larger values make T2 harder.
  double texture_spread = 450.0;
  /// Hiss level of disordered clips is log-uniform in [min, max]; weak clips
  /// sit close to typical ones.
  double hiss_level_min = 0.02;
  double hiss_level_max = 0.06;
  bool with_gender = true;
  std::uint64_t seed = 0;
};

struct SyntheticDataset {
  std::filesystem::path manifest;
  std::vector<SampleRecord> records;
};

/// Labels and speakers only; audio paths are "audio/<id>.wav".
std::vector<SampleRecord> synthetic_records(const SyntheticConfig& config);

AudioClip synthetic_clip(const SyntheticConfig& config, const SampleRecord& record);

/// Writes <dir>/manifest.jsonl and <dir>/audio/*.wav.
SyntheticDataset write_synthetic_dataset(const SyntheticConfig& config, const std::filesystem::path& dir);

}  // namespace ssd
