#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ssd/audio_io.hpp"

namespace ssd {

struct FeatureConfig {
  int n_mels = 40;
  double frame_ms = 25.0;
  double hop_ms = 10.0;
  int sample_rate = kCanonicalSampleRate;

  /// Stable hash of every parameter that affects the output.
  std::uint64_t fingerprint() const noexcept;
  std::size_t dimension() const noexcept { return 3 * static_cast<std::size_t>(n_mels); }
};

/// Row-major frames x bands.
struct FrameMatrix {
  std::size_t frames = 0;
  std::size_t bands = 0;
  std::vector<double> values;

  double at(std::size_t f, std::size_t b) const { return values[f * bands + b]; }
  double& at(std::size_t f, std::size_t b) { return values[f * bands + b]; }
};

struct FeatureVector {
  std::vector<double> values;
  std::uint64_t fingerprint = 0;
};

inline constexpr double kLogMelFloor = 1e-10;

/// log(1e-10 + mel energy) per Hann-windowed frame. The clip must be at
/// config.sample_rate and at least one frame long.
FrameMatrix log_mel_frames(const AudioClip& clip, const FeatureConfig& config);

/// Per-band mean, population std, and mean first difference, concatenated.
FeatureVector pool_stats(const FrameMatrix& frames, std::uint64_t fingerprint = 0);

/// log_mel_frames + pool_stats; clips shorter than one frame are zero-padded.
FeatureVector extract(const AudioClip& clip, const FeatureConfig& config);

/// Flat float32 little-endian matrix plus a JSON sidecar (<path>.json) holding
/// dimension, fingerprint and record ids.
void write_feature_cache(const std::filesystem::path& path, const std::vector<std::string>& ids,
                         const std::vector<FeatureVector>& features);
std::pair<std::vector<std::string>, std::vector<FeatureVector>> read_feature_cache(const std::filesystem::path& path);

}  // namespace ssd
