#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ssd/error.hpp"

namespace ssd {

inline constexpr int kCanonicalSampleRate = 16000;

/// Mono waveform with amplitudes normalized to [-1, 1].
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = kCanonicalSampleRate;

  std::size_t size() const noexcept { return samples.size(); }
  double duration_seconds() const noexcept {
    return static_cast<double>(samples.size()) / static_cast<double>(sample_rate);
  }
};

class WavError : public Error {
 public:
  enum class Kind { missing_file, malformed_header, unsupported_encoding, write_failed };
  WavError(Kind kind, const std::string& what) : Error(ErrorKind::data, what), kind_(kind) {}
  Kind wav_kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

/// Reads RIFF/WAVE PCM (8/16/24/32-bit integer, 32-bit float; plain or
/// WAVE_FORMAT_EXTENSIBLE). Channels are averaged to mono. The native rate is kept.
AudioClip load_wav(const std::filesystem::path& path);

/// load_wav followed by resampling to kCanonicalSampleRate.
AudioClip load_wav_canonical(const std::filesystem::path& path);

/// Writes 16-bit PCM mono with the canonical 44-byte header.
void write_wav16(const std::filesystem::path& path, const AudioClip& clip);

/// Keeps the first round(max_seconds * rate) samples.
AudioClip trim(const AudioClip& clip, double max_seconds);

/// Band-limited (Kaiser-windowed sinc) rate conversion. Identity when the rate already matches.
AudioClip resample(const AudioClip& clip, int target_rate);

/// Band-limited evaluation of `input` at fractional positions i * step, i in [0, out_len).
/// step > 1 decimates (the kernel is widened to low-pass at the new Nyquist).
std::vector<double> resample_by_step(std::span<const double> input, double step, std::size_t out_len);

}  // namespace ssd
