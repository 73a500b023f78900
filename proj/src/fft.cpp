#include "ssd/fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <mutex>
#include <stdexcept>
#include <utility>

namespace ssd {
namespace {
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

RealFft::RealFft(std::size_t n) : n_(n) {
  if (n < 2) throw std::invalid_argument("RealFft: size must be >= 2");
  std::lock_guard lock(planner_mutex());
  real_ = fftw_alloc_real(n);
  auto* spec = fftw_alloc_complex(n / 2 + 1);
  spec_ = spec;
  forward_plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), real_, spec, FFTW_ESTIMATE);
  inverse_plan_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec, real_, FFTW_ESTIMATE);
}

RealFft::~RealFft() { release(); }

RealFft::RealFft(RealFft&& o) noexcept
    : n_(std::exchange(o.n_, 0)),
      real_(std::exchange(o.real_, nullptr)),
      spec_(std::exchange(o.spec_, nullptr)),
      forward_plan_(std::exchange(o.forward_plan_, nullptr)),
      inverse_plan_(std::exchange(o.inverse_plan_, nullptr)) {}

RealFft& RealFft::operator=(RealFft&& o) noexcept {
  if (this != &o) {
    release();
    n_ = std::exchange(o.n_, 0);
    real_ = std::exchange(o.real_, nullptr);
    spec_ = std::exchange(o.spec_, nullptr);
    forward_plan_ = std::exchange(o.forward_plan_, nullptr);
    inverse_plan_ = std::exchange(o.inverse_plan_, nullptr);
  }
  return *this;
}

void RealFft::release() noexcept {
  if (real_ == nullptr) return;
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
  fftw_destroy_plan(static_cast<fftw_plan>(inverse_plan_));
  fftw_free(real_);
  fftw_free(spec_);
  real_ = nullptr;
  spec_ = nullptr;
}

void RealFft::forward(std::span<const double> in, std::span<std::complex<double>> out) {
  if (in.size() != n_ || out.size() != bins()) throw std::invalid_argument("RealFft::forward: size mismatch");
  std::copy(in.begin(), in.end(), real_);
  fftw_execute(static_cast<fftw_plan>(forward_plan_));
  const auto* spec = static_cast<const fftw_complex*>(spec_);
  for (std::size_t k = 0; k < bins(); ++k) out[k] = {spec[k][0], spec[k][1]};
}

void RealFft::inverse(std::span<const std::complex<double>> in, std::span<double> out) {
  if (in.size() != bins() || out.size() != n_) throw std::invalid_argument("RealFft::inverse: size mismatch");
  auto* spec = static_cast<fftw_complex*>(spec_);
  for (std::size_t k = 0; k < bins(); ++k) {
    spec[k][0] = in[k].real();
    spec[k][1] = in[k].imag();
  }
  fftw_execute(static_cast<fftw_plan>(inverse_plan_));
  std::copy(real_, real_ + n_, out.begin());
}

std::size_t next_pow2(std::size_t n) noexcept {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

}  // namespace ssd
