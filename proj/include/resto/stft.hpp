#pragma once

#include <complex>
#include <string>
#include <vector>

#include "resto/audio.hpp"
#include "resto/common.hpp"
#include "resto/fft.hpp"

namespace resto {

/// Complex short-time spectrum: frames x (fft/2+1) bins, row-major.
/// Keeps the exact analysis geometry (including the source length) so the
/// inverse reproduces the input sample-for-sample.
struct Spectrogram {
  std::vector<std::complex<double>> bins;
  size_t frames = 0;
  size_t fft_size = 0;
  size_t hop = 0;
  int sample_rate = 0;
  size_t source_samples = 0;
  std::string window = "sqrt_hann";

  size_t num_bins() const { return fft_size / 2 + 1; }
  std::complex<double>& at(size_t frame, size_t bin) {
    return bins[frame * num_bins() + bin];
  }
  const std::complex<double>& at(size_t frame, size_t bin) const {
    return bins[frame * num_bins() + bin];
  }
  bool same_geometry(const Spectrogram& o) const {
    return frames == o.frames && fft_size == o.fft_size && hop == o.hop &&
           sample_rate == o.sample_rate && source_samples == o.source_samples;
  }
};

namespace detail {

inline std::vector<double> sqrt_hann_window(size_t n) {
  std::vector<double> w(n);
  for (size_t i = 0; i < n; ++i) {
    double hann = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) /
                                       static_cast<double>(n));
    w[i] = std::sqrt(hann);
  }
  return w;
}

}  // namespace detail

/// STFT with an explicit fft size and hop (hop must be fft/4 so the
/// square-root Hann analysis/synthesis pair overlap-adds to a constant).
/// Frames are centered: frame m covers samples [m*hop - fft/2, m*hop + fft/2).
inline Spectrogram stft_size(const AudioBuffer& buffer, size_t fft_size,
                             size_t hop) {
  require(is_power_of_two(fft_size), "stft: fft size must be a power of two");
  require(hop * 4 == fft_size, "stft: hop must be fft_size/4");
  require(buffer.size() >= fft_size, "stft: buffer shorter than one window");

  const size_t n = buffer.size();
  Spectrogram spec;
  spec.fft_size = fft_size;
  spec.hop = hop;
  spec.sample_rate = buffer.sample_rate;
  spec.source_samples = n;
  spec.frames = (n + hop - 1) / hop + 1;
  spec.bins.resize(spec.frames * spec.num_bins());

  const std::vector<double> win = detail::sqrt_hann_window(fft_size);
  RealFftPlan plan(fft_size);
  std::vector<double> frame(fft_size);
  const auto half = static_cast<int64_t>(fft_size / 2);

  for (size_t m = 0; m < spec.frames; ++m) {
    const int64_t center = static_cast<int64_t>(m * hop);
    for (size_t i = 0; i < fft_size; ++i) {
      int64_t idx = center - half + static_cast<int64_t>(i);
      double x = (idx >= 0 && idx < static_cast<int64_t>(n))
                     ? buffer.samples[static_cast<size_t>(idx)]
                     : 0.0;
      frame[i] = x * win[i];
    }
    plan.forward(frame.data(), &spec.at(m, 0));
  }
  return spec;
}

/// STFT from window/hop durations; the window length must land on a power
/// of two at the buffer's rate (32 ms at 16 kHz -> 512) and the hop must be
/// a quarter window (8 ms -> 128).
inline Spectrogram stft(const AudioBuffer& buffer, double window_ms = 32.0,
                        double hop_ms = 8.0) {
  require(buffer.sample_rate > 0, "stft: buffer has no sample rate");
  auto fft_size = static_cast<size_t>(
      std::llround(window_ms * buffer.sample_rate / 1000.0));
  require(is_power_of_two(fft_size),
          "stft: window of " + std::to_string(window_ms) + " ms at " +
              std::to_string(buffer.sample_rate) +
              " Hz is not a power of two samples");
  auto hop =
      static_cast<size_t>(std::llround(hop_ms * buffer.sample_rate / 1000.0));
  require(hop * 4 == fft_size, "stft: hop must be a quarter of the window");
  return stft_size(buffer, fft_size, hop);
}

/// Inverse STFT by windowed overlap-add, normalized by the accumulated
/// squared window so the round-trip is exact for every sample, including
/// the partially covered edges.
inline AudioBuffer istft(const Spectrogram& spec) {
  require(spec.frames >= 1 && spec.fft_size >= 4 &&
              spec.hop * 4 == spec.fft_size,
          "istft: inconsistent frame geometry");
  require(spec.bins.size() == spec.frames * spec.num_bins(),
          "istft: inconsistent frame geometry");

  const size_t n = spec.source_samples;
  const size_t fft_size = spec.fft_size;
  const std::vector<double> win = detail::sqrt_hann_window(fft_size);
  RealFftPlan plan(fft_size);

  std::vector<double> acc(n, 0.0);
  std::vector<double> norm(n, 0.0);
  std::vector<double> frame(fft_size);
  const auto half = static_cast<int64_t>(fft_size / 2);

  for (size_t m = 0; m < spec.frames; ++m) {
    plan.inverse(&spec.at(m, 0), frame.data());
    const int64_t center = static_cast<int64_t>(m * spec.hop);
    for (size_t i = 0; i < fft_size; ++i) {
      int64_t idx = center - half + static_cast<int64_t>(i);
      if (idx < 0 || idx >= static_cast<int64_t>(n)) continue;
      acc[static_cast<size_t>(idx)] += frame[i] * win[i];
      norm[static_cast<size_t>(idx)] += win[i] * win[i];
    }
  }
  for (size_t i = 0; i < n; ++i)
    acc[i] = norm[i] > 1e-12 ? acc[i] / norm[i] : 0.0;

  AudioBuffer out;
  out.sample_rate = spec.sample_rate;
  out.samples = std::move(acc);
  return out;
}

}  // namespace resto
