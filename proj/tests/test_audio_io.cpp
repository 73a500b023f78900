#include <cstring>

#include "doctest.h"
#include "ssd/audio_io.hpp"
#include "support.hpp"

using namespace ssd;

namespace {

void le(std::string& s, std::uint32_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

/// Hand-assembled RIFF header around raw data bytes.
std::string wav_bytes(int format, int channels, int rate, int bits, const std::string& data) {
  std::string s = "RIFF";
  le(s, static_cast<std::uint32_t>(36 + data.size()), 4);
  s += "WAVEfmt ";
  le(s, 16, 4);
  le(s, static_cast<std::uint32_t>(format), 2);
  le(s, static_cast<std::uint32_t>(channels), 2);
  le(s, static_cast<std::uint32_t>(rate), 4);
  le(s, static_cast<std::uint32_t>(rate * channels * bits / 8), 4);
  le(s, static_cast<std::uint32_t>(channels * bits / 8), 2);
  le(s, static_cast<std::uint32_t>(bits), 2);
  s += "data";
  le(s, static_cast<std::uint32_t>(data.size()), 4);
  return s + data;
}

std::string pcm16(const std::vector<std::int16_t>& v) {
  std::string s;
  for (auto x : v) le(s, static_cast<std::uint16_t>(x), 2);
  return s;
}

}  // namespace

TEST_CASE("16-bit fixture decodes to value / 32768") {
  testing::TempDir dir("wav");
  const std::vector<std::int16_t> raw{-32768, -16384, 0, 32767};
  testing::write_text(dir / "a.wav", wav_bytes(1, 1, 16000, 16, pcm16(raw)));
  const AudioClip c = load_wav(dir / "a.wav");
  REQUIRE(c.size() == 4);
  CHECK(c.sample_rate == 16000);
  for (std::size_t i = 0; i < raw.size(); ++i) CHECK(c.samples[i] == raw[i] / 32768.0);
  CHECK(c.samples[0] == -1.0);
}

TEST_CASE("one second of 16 kHz mono has 16000 samples") {
  testing::TempDir dir("wav");
  AudioClip in;
  in.samples = testing::sine(440.0, 1.0, 16000);
  write_wav16(dir / "s.wav", in);
  const AudioClip out = load_wav(dir / "s.wav");
  CHECK(out.size() == 16000);
  CHECK(out.sample_rate == 16000);
  CHECK(std::filesystem::file_size(dir / "s.wav") == 44 + 2 * 16000);
  for (std::size_t i = 0; i < in.size(); ++i) CHECK(std::abs(out.samples[i] - in.samples[i]) <= 1.0 / 32768.0);
}

TEST_CASE("identical stereo channels average to either channel") {
  testing::TempDir dir("wav");
  std::vector<std::int16_t> inter;
  const std::vector<std::int16_t> mono{100, -200, 300, -400, 32767};
  for (auto v : mono) inter.insert(inter.end(), {v, v});
  testing::write_text(dir / "st.wav", wav_bytes(1, 2, 22050, 16, pcm16(inter)));
  const AudioClip c = load_wav(dir / "st.wav");
  REQUIRE(c.size() == mono.size());
  CHECK(c.sample_rate == 22050);
  for (std::size_t i = 0; i < mono.size(); ++i) CHECK(c.samples[i] == mono[i] / 32768.0);
}

TEST_CASE("8-bit, 24-bit and float encodings") {
  testing::TempDir dir("wav");
  SUBCASE("8-bit unsigned") {
    std::string d{static_cast<char>(0), static_cast<char>(128), static_cast<char>(255)};
    testing::write_text(dir / "u8.wav", wav_bytes(1, 1, 8000, 8, d));
    const AudioClip c = load_wav(dir / "u8.wav");
    REQUIRE(c.size() == 3);
    CHECK(c.samples[0] == -1.0);
    CHECK(c.samples[1] == 0.0);
    CHECK(c.samples[2] == doctest::Approx(127.0 / 128.0));
  }
  SUBCASE("24-bit") {
    std::string d;
    le(d, 0x800000, 3);  // most negative
    le(d, 0x400000, 3);  // +0.5
    testing::write_text(dir / "s24.wav", wav_bytes(1, 1, 16000, 24, d));
    const AudioClip c = load_wav(dir / "s24.wav");
    REQUIRE(c.size() == 2);
    CHECK(c.samples[0] == -1.0);
    CHECK(c.samples[1] == 0.5);
  }
  SUBCASE("32-bit float") {
    std::string d;
    for (float f : {0.25f, -0.75f}) {
      std::uint32_t u;
      std::memcpy(&u, &f, 4);
      le(d, u, 4);
    }
    testing::write_text(dir / "f32.wav", wav_bytes(3, 1, 16000, 32, d));
    const AudioClip c = load_wav(dir / "f32.wav");
    REQUIRE(c.size() == 2);
    CHECK(c.samples[0] == 0.25);
    CHECK(c.samples[1] == -0.75);
  }
}

TEST_CASE("load errors are typed") {
  testing::TempDir dir("wav");
  auto kind_of = [](const std::filesystem::path& p) {
    try {
      load_wav(p);
    } catch (const WavError& e) {
      CHECK(e.kind() == ErrorKind::data);
      return e.wav_kind();
    }
    FAIL("no error");
    return WavError::Kind::write_failed;
  };
  CHECK(kind_of(dir / "missing.wav") == WavError::Kind::missing_file);
  testing::write_text(dir / "junk.wav", "not a wav file at all, definitely not");
  CHECK(kind_of(dir / "junk.wav") == WavError::Kind::malformed_header);
  testing::write_text(dir / "adpcm.wav", wav_bytes(2, 1, 16000, 4, std::string(8, '\0')));
  CHECK(kind_of(dir / "adpcm.wav") == WavError::Kind::unsupported_encoding);
  std::string truncated = wav_bytes(1, 1, 16000, 16, pcm16({1, 2, 3}));
  testing::write_text(dir / "short.wav", truncated.substr(0, 30));
  CHECK(kind_of(dir / "short.wav") == WavError::Kind::malformed_header);
}

TEST_CASE("trim keeps the first max_seconds") {
  AudioClip c;
  c.samples.assign(15 * 16000, 0.1);
  CHECK(trim(c, 12.0).size() == 192000);
  c.samples.assign(5 * 16000, 0.1);
  CHECK(trim(c, 12.0).size() == 5 * 16000);
  c.samples.assign(12 * 16000, 0.1);
  CHECK(trim(c, 12.0).size() == 12 * 16000);
}

TEST_CASE("resample") {
  SUBCASE("identity at the target rate") {
    AudioClip c;
    c.samples = testing::sine(300.0, 0.1, 16000);
    const AudioClip r = resample(c, 16000);
    CHECK(r.samples == c.samples);
  }
  SUBCASE("48 kHz sine keeps its frequency") {
    AudioClip c;
    c.sample_rate = 48000;
    c.samples = testing::sine(440.0, 1.0, 48000);
    const AudioClip r = resample(c, 16000);
    CHECK(r.sample_rate == 16000);
    CHECK(r.size() == 16000);
    CHECK(std::abs(testing::dft_peak_hz(r.samples, 16000, 50, 7900) - 440.0) <= 1.0);
  }
  SUBCASE("16 kHz to 8 kHz halves the length") {
    AudioClip c;
    c.samples = testing::sine(440.0, 1.0, 16000);
    const AudioClip r = resample(c, 8000);
    CHECK(std::abs(static_cast<long>(r.size()) - 8000) <= 1);
    CHECK(std::abs(testing::dft_peak_hz(r.samples, 8000, 50, 3900) - 440.0) <= 1.0);
  }
  SUBCASE("tone above the new Nyquist is suppressed") {
    AudioClip c;
    c.samples = testing::sine(6000.0, 0.5, 16000);
    const AudioClip r = resample(c, 8000);
    double ss = 0.0;
    for (std::size_t i = 100; i + 100 < r.size(); ++i) ss += r.samples[i] * r.samples[i];
    CHECK(std::sqrt(ss / (r.size() - 200)) < 0.01);
  }
}

TEST_CASE("write then load_wav_canonical resamples") {
  testing::TempDir dir("wav");
  AudioClip c;
  c.sample_rate = 8000;
  c.samples = testing::sine(200.0, 0.5, 8000);
  write_wav16(dir / "x.wav", c);
  const AudioClip r = load_wav_canonical(dir / "x.wav");
  CHECK(r.sample_rate == kCanonicalSampleRate);
  CHECK(r.size() == 8000);
}
