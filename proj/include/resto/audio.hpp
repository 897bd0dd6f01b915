#pragma once

#include <cmath>
#include <vector>

#include "resto/common.hpp"

namespace resto {

/// Mono sample sequence with its sample rate. Samples are stored as doubles
/// in the nominal range [-1, 1]; stages that can exceed it (loudness gain)
/// report rather than clip.
struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = 0;

  AudioBuffer() = default;
  AudioBuffer(std::vector<double> s, int rate)
      : samples(std::move(s)), sample_rate(rate) {}

  size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration_s() const {
    return sample_rate > 0
               ? static_cast<double>(samples.size()) / sample_rate
               : 0.0;
  }
};

inline double rms(const AudioBuffer& b) {
  if (b.empty()) return 0.0;
  double s = 0.0;
  for (double x : b.samples) s += x * x;
  return std::sqrt(s / static_cast<double>(b.size()));
}

inline double peak_abs(const AudioBuffer& b) {
  double p = 0.0;
  for (double x : b.samples) p = std::max(p, std::abs(x));
  return p;
}

inline double energy(const AudioBuffer& b) {
  double s = 0.0;
  for (double x : b.samples) s += x * x;
  return s;
}

inline void check_finite(const AudioBuffer& b, const char* what) {
  for (double x : b.samples)
    if (!std::isfinite(x)) fail(std::string(what) + ": non-finite sample");
}

inline AudioBuffer scaled(const AudioBuffer& b, double gain) {
  AudioBuffer out = b;
  for (double& x : out.samples) x *= gain;
  return out;
}

}  // namespace resto
