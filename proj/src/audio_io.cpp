#include "ssd/audio_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>

namespace ssd {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t read_u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

double decode_sample(const unsigned char* p, std::uint16_t format, std::uint16_t bits) {
  if (format == kFormatFloat) {
    float f;
    std::uint32_t raw = read_u32(p);
    std::memcpy(&f, &raw, sizeof f);
    if (!std::isfinite(f)) return 0.0;
    return std::clamp(static_cast<double>(f), -1.0, 1.0);
  }
  switch (bits) {
    case 8:
      return (static_cast<double>(p[0]) - 128.0) / 128.0;
    case 16:
      return static_cast<double>(static_cast<std::int16_t>(read_u16(p))) / 32768.0;
    case 24: {
      std::int32_t v = static_cast<std::int32_t>(p[0] | (p[1] << 8) | (p[2] << 16));
      if (v & 0x800000) v |= ~0xFFFFFF;
      return static_cast<double>(v) / 8388608.0;
    }
    case 32:
      return static_cast<double>(static_cast<std::int32_t>(read_u32(p))) / 2147483648.0;
    default:
      return 0.0;
  }
}

double kaiser_exact(double x, double beta) {
  const double arg = 1.0 - x * x;
  if (arg <= 0.0) return 0.0;
  return std::cyl_bessel_i(0.0, beta * std::sqrt(arg)) / std::cyl_bessel_i(0.0, beta);
}

// Tabulated Kaiser window over |x| in [0, 1], linearly interpolated.
double kaiser(double x, double beta) {
  constexpr std::size_t kTable = 8192;
  static const std::vector<double> table = [beta] {
    std::vector<double> t(kTable + 1);
    for (std::size_t i = 0; i <= kTable; ++i) t[i] = kaiser_exact(static_cast<double>(i) / kTable, beta);
    return t;
  }();
  const double a = std::abs(x) * kTable;
  if (a >= kTable) return 0.0;
  const auto i = static_cast<std::size_t>(a);
  const double frac = a - static_cast<double>(i);
  return table[i] + frac * (table[i + 1] - table[i]);
}

}  // namespace

AudioClip load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WavError(WavError::Kind::missing_file, "cannot open WAV file: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw WavError(WavError::Kind::malformed_header, "not a RIFF/WAVE file: " + path.string());

  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t chunk_size = read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t available = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (chunk_size < 16 || chunk_size > available)
        throw WavError(WavError::Kind::malformed_header, "truncated fmt chunk: " + path.string());
      const unsigned char* f = bytes.data() + body;
      format = read_u16(f);
      channels = read_u16(f + 2);
      rate = read_u32(f + 4);
      block_align = read_u16(f + 12);
      bits = read_u16(f + 14);
      if (format == kFormatExtensible) {
        if (chunk_size < 40)
          throw WavError(WavError::Kind::malformed_header, "truncated extensible fmt chunk: " + path.string());
        format = read_u16(f + 24);  // first two bytes of the sub-format GUID
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      // Tolerate writers that leave the size at 0 or overstate it.
      data_size = (chunk_size == 0 || chunk_size > available) ? available : chunk_size;
      if (have_fmt) break;
    }
    if (chunk_size > available) break;
    pos = body + chunk_size + (chunk_size & 1u);
  }

  if (!have_fmt) throw WavError(WavError::Kind::malformed_header, "missing fmt chunk: " + path.string());
  if (data == nullptr) throw WavError(WavError::Kind::malformed_header, "missing data chunk: " + path.string());
  if (channels == 0 || rate == 0)
    throw WavError(WavError::Kind::malformed_header, "zero channels or sample rate: " + path.string());

  const bool pcm_ok = format == kFormatPcm && (bits == 8 || bits == 16 || bits == 24 || bits == 32);
  const bool float_ok = format == kFormatFloat && bits == 32;
  if (!pcm_ok && !float_ok)
    throw WavError(WavError::Kind::unsupported_encoding, "unsupported WAV encoding (format " + std::to_string(format) +
                                                             ", " + std::to_string(bits) + " bits): " + path.string());

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frame_bytes = std::max<std::size_t>(block_align, bytes_per_sample * channels);
  if (frame_bytes < bytes_per_sample * channels)
    throw WavError(WavError::Kind::malformed_header, "block align too small: " + path.string());

  const std::size_t frames = data_size / frame_bytes;
  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    const unsigned char* frame = data + i * frame_bytes;
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) acc += decode_sample(frame + c * bytes_per_sample, format, bits);
    clip.samples[i] = acc / static_cast<double>(channels);
  }
  return clip;
}

AudioClip load_wav_canonical(const std::filesystem::path& path) {
  return resample(load_wav(path), kCanonicalSampleRate);
}

void write_wav16(const std::filesystem::path& path, const AudioClip& clip) {
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out.append("RIFF");
  put_u32(out, 36 + data_bytes);
  out.append("WAVEfmt ");
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.append("data");
  put_u32(out, data_bytes);
  for (double s : clip.samples) {
    const double scaled = std::round(std::clamp(s, -1.0, 1.0) * 32768.0);
    const auto v = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    put_u16(out, static_cast<std::uint16_t>(v));
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw WavError(WavError::Kind::write_failed, "cannot write WAV file: " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw WavError(WavError::Kind::write_failed, "short write: " + path.string());
}

AudioClip trim(const AudioClip& clip, double max_seconds) {
  if (!(max_seconds > 0.0)) throw usage_error("trim: max_seconds must be positive");
  const auto limit = static_cast<std::size_t>(std::llround(max_seconds * clip.sample_rate));
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.samples.assign(clip.samples.begin(), clip.samples.begin() + static_cast<std::ptrdiff_t>(std::min(limit, clip.size())));
  return out;
}

std::vector<double> resample_by_step(std::span<const double> input, double step, std::size_t out_len) {
  constexpr double kZeroCrossings = 16.0;
  constexpr double kBeta = 8.6;
  const double cutoff = std::min(1.0, 1.0 / step);
  // Slightly under Nyquist so the transition band does not alias.
  const double fc = 0.97 * cutoff;
  const double half_width = kZeroCrossings / fc;
  const auto n = static_cast<std::ptrdiff_t>(input.size());

  std::vector<double> out(out_len, 0.0);
  for (std::size_t i = 0; i < out_len; ++i) {
    const double t = static_cast<double>(i) * step;
    const auto lo = std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil(t - half_width)));
    const auto hi = std::min<std::ptrdiff_t>(n - 1, static_cast<std::ptrdiff_t>(std::floor(t + half_width)));
    double acc = 0.0;
    for (std::ptrdiff_t k = lo; k <= hi; ++k) {
      const double d = t - static_cast<double>(k);
      const double x = fc * d;
      const double sinc = std::abs(x) < 1e-12 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
      acc += input[static_cast<std::size_t>(k)] * fc * sinc * kaiser(d / half_width, kBeta);
    }
    out[i] = acc;
  }
  return out;
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0) throw usage_error("resample: target rate must be positive");
  if (target_rate == clip.sample_rate) return clip;
  const double step = static_cast<double>(clip.sample_rate) / static_cast<double>(target_rate);
  const auto out_len = static_cast<std::size_t>(
      std::llround(static_cast<double>(clip.size()) * target_rate / static_cast<double>(clip.sample_rate)));
  AudioClip out;
  out.sample_rate = target_rate;
  out.samples = resample_by_step(clip.samples, step, out_len);
  for (double& s : out.samples) s = std::clamp(s, -1.0, 1.0);
  return out;
}

}  // namespace ssd
