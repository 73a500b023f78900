#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <algorithm>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

namespace testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("ssd_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

inline std::vector<double> sine(double freq, double seconds, int rate, double amp = 0.5) {
  std::vector<double> x(static_cast<std::size_t>(std::lround(seconds * rate)));
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = amp * std::sin(2.0 * std::numbers::pi * freq * i / rate);
  return x;
}

/// Frequency of the largest |X[k]| of a Hann-windowed direct DFT, evaluated
/// on bins whose frequency lies in [lo_hz, hi_hz]. Bin spacing is rate / n.
inline double dft_peak_hz(const std::vector<double>& x, int rate, double lo_hz, double hi_hz) {
  const std::size_t n = x.size();
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = x[i] * (0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n));
  const double df = static_cast<double>(rate) / n;
  const auto k0 = static_cast<std::size_t>(std::max(1.0, std::floor(lo_hz / df)));
  const auto k1 = static_cast<std::size_t>(std::ceil(hi_hz / df));
  double best = -1.0, best_hz = 0.0;
  for (std::size_t k = k0; k <= k1 && k < n / 2; ++k) {
    // Goertzel recurrence for bin k.
    const double c = 2.0 * std::cos(2.0 * std::numbers::pi * k / n);
    double s1 = 0.0, s2 = 0.0;
    for (double v : w) {
      const double s0 = v + c * s1 - s2;
      s2 = s1;
      s1 = s0;
    }
    const double power = s1 * s1 + s2 * s2 - c * s1 * s2;
    if (power > best) best = power, best_hz = k * df;
  }
  return best_hz;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Plain recursive-definition edit distance (full table, no backtrace).
template <typename T>
std::size_t edit_distance(const std::vector<T>& a, const std::vector<T>& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0u : 1u)});
  return d[a.size()][b.size()];
}

struct OracleCounts {
  std::size_t hits = 0, subs = 0, dels = 0, ins = 0;
};

/// Alignment counts by memoized recursion on prefix distances, walking back
/// from (n, m) and preferring a diagonal step, then an insertion, then a deletion.
template <typename T>
OracleCounts oracle_align(const std::vector<T>& a, const std::vector<T>& b) {
  std::vector<std::vector<long>> memo(a.size() + 1, std::vector<long>(b.size() + 1, -1));
  std::function<long(std::size_t, std::size_t)> dist = [&](std::size_t i, std::size_t j) -> long {
    if (i == 0) return static_cast<long>(j);
    if (j == 0) return static_cast<long>(i);
    long& m = memo[i][j];
    if (m >= 0) return m;
    m = std::min({dist(i - 1, j - 1) + (a[i - 1] == b[j - 1] ? 0 : 1), dist(i, j - 1) + 1, dist(i - 1, j) + 1});
    return m;
  };
  OracleCounts c;
  std::size_t i = a.size(), j = b.size();
  while (i > 0 || j > 0) {
    const long here = dist(i, j);
    if (i > 0 && j > 0 && here == dist(i - 1, j - 1) + (a[i - 1] == b[j - 1] ? 0 : 1)) {
      (a[i - 1] == b[j - 1] ? c.hits : c.subs)++;
      --i, --j;
    } else if (j > 0 && here == dist(i, j - 1) + 1) {
      ++c.ins, --j;
    } else {
      ++c.dels, --i;
    }
  }
  return c;
}

}  // namespace testing
