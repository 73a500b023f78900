#pragma once

#include <complex>
#include <cstddef>
#include <span>

namespace ssd {

/// Real-input FFT of fixed size n, backed by FFTW. Instances are not shareable
/// across threads; plan creation is serialized internally.
class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;
  RealFft(RealFft&&) noexcept;
  RealFft& operator=(RealFft&&) noexcept;

  std::size_t size() const noexcept { return n_; }
  std::size_t bins() const noexcept { return n_ / 2 + 1; }

  /// in.size() == size(); out.size() == bins().
  void forward(std::span<const double> in, std::span<std::complex<double>> out);
  /// Unnormalized inverse: forward then inverse scales by size().
  void inverse(std::span<const std::complex<double>> in, std::span<double> out);

 private:
  void release() noexcept;

  std::size_t n_ = 0;
  double* real_ = nullptr;
  void* spec_ = nullptr;
  void* forward_plan_ = nullptr;
  void* inverse_plan_ = nullptr;
};

std::size_t next_pow2(std::size_t n) noexcept;

}  // namespace ssd
