#pragma once

#include <complex>
#include <vector>

#include "resto/common.hpp"

namespace resto {

/// Iterative radix-2 FFT with precomputed twiddles and bit-reversal table.
///
/// Sizes are restricted to powers of two, which is all the toolkit needs
/// (analysis windows and overlap-add blocks are chosen as powers of two).
class FftPlan {
 public:
  explicit FftPlan(size_t n) : n_(n) {
    require(is_power_of_two(n) && n >= 2, "fft size must be a power of two >= 2");
    bitrev_.resize(n);
    int log2n = 0;
    while ((size_t{1} << log2n) < n) ++log2n;
    for (size_t i = 0; i < n; ++i) {
      size_t r = 0;
      for (int b = 0; b < log2n; ++b)
        if (i & (size_t{1} << b)) r |= size_t{1} << (log2n - 1 - b);
      bitrev_[i] = r;
    }
    twiddles_.resize(n / 2);
    for (size_t k = 0; k < n / 2; ++k) {
      double a = -2.0 * kPi * static_cast<double>(k) / static_cast<double>(n);
      twiddles_[k] = {std::cos(a), std::sin(a)};
    }
  }

  size_t size() const { return n_; }

  void forward(std::complex<double>* a) const { transform(a, false); }

  void inverse(std::complex<double>* a) const {
    transform(a, true);
    double inv = 1.0 / static_cast<double>(n_);
    for (size_t i = 0; i < n_; ++i) a[i] *= inv;
  }

 private:
  void transform(std::complex<double>* a, bool inv) const {
    const size_t n = n_;
    for (size_t i = 0; i < n; ++i) {
      size_t j = bitrev_[i];
      if (j > i) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
      size_t half = len / 2;
      size_t step = n / len;
      for (size_t base = 0; base < n; base += len) {
        for (size_t k = 0; k < half; ++k) {
          std::complex<double> w = twiddles_[k * step];
          if (inv) w = std::conj(w);
          std::complex<double> u = a[base + k];
          std::complex<double> v = a[base + k + half] * w;
          a[base + k] = u + v;
          a[base + k + half] = u - v;
        }
      }
    }
  }

  size_t n_;
  std::vector<size_t> bitrev_;
  std::vector<std::complex<double>> twiddles_;
};

/// Real-input FFT of size n (power of two, >= 4) producing n/2+1 bins.
/// Runs through a complex transform of size n/2 with a post-unpack pass.
class RealFftPlan {
 public:
  explicit RealFftPlan(size_t n) : n_(n), half_(n / 2), half_plan_(n / 2) {
    require(is_power_of_two(n) && n >= 4, "real fft size must be a power of two >= 4");
    work_.resize(half_);
    unpack_tw_.resize(half_ + 1);
    for (size_t k = 0; k <= half_; ++k) {
      double a = -2.0 * kPi * static_cast<double>(k) / static_cast<double>(n);
      unpack_tw_[k] = {std::cos(a), std::sin(a)};
    }
  }

  size_t size() const { return n_; }
  size_t bins() const { return half_ + 1; }

  /// out must hold n/2+1 complex bins.
  void forward(const double* in, std::complex<double>* out) const {
    auto& z = work_;
    for (size_t k = 0; k < half_; ++k) z[k] = {in[2 * k], in[2 * k + 1]};
    half_plan_.forward(z.data());
    out[0] = {z[0].real() + z[0].imag(), 0.0};
    out[half_] = {z[0].real() - z[0].imag(), 0.0};
    const std::complex<double> minus_i(0.0, -1.0);
    for (size_t k = 1; k < half_; ++k) {
      std::complex<double> zk = z[k];
      std::complex<double> zc = std::conj(z[half_ - k]);
      std::complex<double> even = 0.5 * (zk + zc);
      std::complex<double> odd = 0.5 * (zk - zc);
      out[k] = even + minus_i * unpack_tw_[k] * odd;
    }
  }

  /// in holds n/2+1 Hermitian half-spectrum bins; out receives n samples.
  void inverse(const std::complex<double>* in, double* out) const {
    auto& z = work_;
    const std::complex<double> plus_i(0.0, 1.0);
    z[0] = {0.5 * (in[0].real() + in[half_].real()),
            0.5 * (in[0].real() - in[half_].real())};
    for (size_t k = 1; k < half_; ++k) {
      std::complex<double> xk = in[k];
      std::complex<double> xc = std::conj(in[half_ - k]);
      std::complex<double> even = 0.5 * (xk + xc);
      std::complex<double> odd = 0.5 * (xk - xc);
      z[k] = even + plus_i * std::conj(unpack_tw_[k]) * odd;
    }
    half_plan_.inverse(z.data());
    for (size_t k = 0; k < half_; ++k) {
      out[2 * k] = z[k].real();
      out[2 * k + 1] = z[k].imag();
    }
  }

 private:
  size_t n_;
  size_t half_;
  FftPlan half_plan_;
  std::vector<std::complex<double>> unpack_tw_;
  mutable std::vector<std::complex<double>> work_;
};

}  // namespace resto
