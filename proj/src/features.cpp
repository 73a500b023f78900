#include "ssd/features.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "ssd/error.hpp"
#include "ssd/fft.hpp"
#include "ssd/rng.hpp"

namespace ssd {

std::uint64_t FeatureConfig::fingerprint() const noexcept {
  std::ostringstream s;
  s << "logmel-stats/v1;n_mels=" << n_mels << ";frame_ms=" << frame_ms << ";hop_ms=" << hop_ms
    << ";rate=" << sample_rate;
  return fnv1a(s.str());
}

namespace {

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular HTK-style filters over [0, rate/2], one row of `bins` weights per band.
std::vector<std::vector<double>> mel_filterbank(int n_mels, std::size_t n_fft, int rate) {
  const std::size_t bins = n_fft / 2 + 1;
  const double top = hz_to_mel(rate / 2.0);
  std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(n_mels + 1));

  std::vector<std::vector<double>> bank(static_cast<std::size_t>(n_mels), std::vector<double>(bins, 0.0));
  for (std::size_t m = 0; m < bank.size(); ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * rate / static_cast<double>(n_fft);
      if (f > lo && f <= mid) bank[m][k] = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) bank[m][k] = (hi - f) / (hi - mid);
    }
  }
  return bank;
}

}  // namespace

FrameMatrix log_mel_frames(const AudioClip& clip, const FeatureConfig& config) {
  if (config.n_mels < 4) throw usage_error("n_mels must be >= 4");
  if (clip.sample_rate != config.sample_rate)
    throw usage_error("clip rate " + std::to_string(clip.sample_rate) + " does not match feature rate " +
                      std::to_string(config.sample_rate));
  const auto frame_len = static_cast<std::size_t>(std::llround(config.frame_ms * config.sample_rate / 1000.0));
  const auto hop = static_cast<std::size_t>(std::llround(config.hop_ms * config.sample_rate / 1000.0));
  if (frame_len < 2 || hop < 1) throw usage_error("frame/hop too short");
  if (clip.size() < frame_len)
    throw data_error("clip of " + std::to_string(clip.size()) + " samples is shorter than one frame (" +
                     std::to_string(frame_len) + ")");

  const std::size_t n_fft = next_pow2(frame_len);
  // The filterbank only depends on the config; cache the last one per thread.
  thread_local std::uint64_t cached_fp = 0;
  thread_local std::vector<std::vector<double>> bank;
  if (cached_fp != config.fingerprint() || bank.empty()) {
    bank = mel_filterbank(config.n_mels, n_fft, config.sample_rate);
    cached_fp = config.fingerprint();
  }

  std::vector<double> window(frame_len);
  for (std::size_t i = 0; i < frame_len; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * 3.141592653589793 * static_cast<double>(i) / static_cast<double>(frame_len));

  FrameMatrix out;
  out.frames = (clip.size() - frame_len) / hop + 1;
  out.bands = static_cast<std::size_t>(config.n_mels);
  out.values.assign(out.frames * out.bands, 0.0);

  RealFft fft(n_fft);
  std::vector<double> buf(n_fft, 0.0);
  std::vector<std::complex<double>> spec(fft.bins());
  std::vector<double> power(fft.bins());
  for (std::size_t f = 0; f < out.frames; ++f) {
    const std::size_t start = f * hop;
    for (std::size_t i = 0; i < frame_len; ++i) buf[i] = clip.samples[start + i] * window[i];
    std::fill(buf.begin() + static_cast<std::ptrdiff_t>(frame_len), buf.end(), 0.0);
    fft.forward(buf, spec);
    for (std::size_t k = 0; k < spec.size(); ++k) power[k] = std::norm(spec[k]);
    for (std::size_t m = 0; m < out.bands; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < power.size(); ++k) e += bank[m][k] * power[k];
      out.at(f, m) = std::log(kLogMelFloor + e);
    }
  }
  return out;
}

FeatureVector pool_stats(const FrameMatrix& frames, std::uint64_t fingerprint) {
  if (frames.frames == 0 || frames.bands == 0) throw usage_error("pool_stats: empty frame matrix");
  const std::size_t t = frames.frames, b = frames.bands;
  FeatureVector out;
  out.fingerprint = fingerprint;
  out.values.assign(3 * b, 0.0);
  for (std::size_t m = 0; m < b; ++m) {
    double sum = 0.0;
    for (std::size_t f = 0; f < t; ++f) sum += frames.at(f, m);
    const double mean = sum / static_cast<double>(t);
    double var = 0.0;
    for (std::size_t f = 0; f < t; ++f) var += (frames.at(f, m) - mean) * (frames.at(f, m) - mean);
    var /= static_cast<double>(t);
    double delta = 0.0;
    for (std::size_t f = 1; f < t; ++f) delta += frames.at(f, m) - frames.at(f - 1, m);
    if (t > 1) delta /= static_cast<double>(t - 1);
    out.values[m] = mean;
    out.values[b + m] = std::sqrt(var);
    out.values[2 * b + m] = delta;
  }
  return out;
}

FeatureVector extract(const AudioClip& clip, const FeatureConfig& config) {
  const auto frame_len = static_cast<std::size_t>(std::llround(config.frame_ms * config.sample_rate / 1000.0));
  if (clip.size() < frame_len) {
    AudioClip padded = clip;
    padded.samples.resize(frame_len, 0.0);
    return pool_stats(log_mel_frames(padded, config), config.fingerprint());
  }
  return pool_stats(log_mel_frames(clip, config), config.fingerprint());
}

void write_feature_cache(const std::filesystem::path& path, const std::vector<std::string>& ids,
                         const std::vector<FeatureVector>& features) {
  if (ids.size() != features.size()) throw usage_error("feature cache: ids and features differ in length");
  const std::size_t dim = features.empty() ? 0 : features.front().values.size();
  const std::uint64_t fp = features.empty() ? 0 : features.front().fingerprint;
  std::ofstream bin(path, std::ios::binary | std::ios::trunc);
  if (!bin) throw runtime_error("cannot write feature cache: " + path.string());
  for (const auto& f : features) {
    if (f.values.size() != dim || f.fingerprint != fp) throw usage_error("feature cache: inconsistent vectors");
    for (double v : f.values) {
      const float x = static_cast<float>(v);
      std::uint32_t raw;
      std::memcpy(&raw, &x, sizeof raw);
      const char le[4] = {static_cast<char>(raw & 0xff), static_cast<char>((raw >> 8) & 0xff),
                          static_cast<char>((raw >> 16) & 0xff), static_cast<char>((raw >> 24) & 0xff)};
      bin.write(le, 4);
    }
  }
  nlohmann::json side{{"dimension", dim}, {"fingerprint", fp}, {"count", ids.size()}, {"ids", ids}};
  std::ofstream js(path.string() + ".json", std::ios::trunc);
  if (!js) throw runtime_error("cannot write feature cache sidecar: " + path.string() + ".json");
  js << side.dump(2) << '\n';
}

std::pair<std::vector<std::string>, std::vector<FeatureVector>> read_feature_cache(const std::filesystem::path& path) {
  std::ifstream js(path.string() + ".json");
  if (!js) throw data_error("missing feature cache sidecar: " + path.string() + ".json");
  nlohmann::json side;
  try {
    js >> side;
  } catch (const nlohmann::json::exception& e) {
    throw data_error(std::string("malformed feature cache sidecar: ") + e.what());
  }
  const auto dim = side.at("dimension").get<std::size_t>();
  const auto fp = side.at("fingerprint").get<std::uint64_t>();
  auto ids = side.at("ids").get<std::vector<std::string>>();

  std::ifstream bin(path, std::ios::binary);
  if (!bin) throw data_error("missing feature cache: " + path.string());
  std::vector<FeatureVector> out(ids.size());
  for (auto& f : out) {
    f.fingerprint = fp;
    f.values.resize(dim);
    for (double& v : f.values) {
      unsigned char le[4];
      if (!bin.read(reinterpret_cast<char*>(le), 4)) throw data_error("feature cache truncated: " + path.string());
      const std::uint32_t raw = le[0] | (le[1] << 8) | (le[2] << 16) | (static_cast<std::uint32_t>(le[3]) << 24);
      float x;
      std::memcpy(&x, &raw, sizeof x);
      v = x;
    }
  }
  return {std::move(ids), std::move(out)};
}

}  // namespace ssd
