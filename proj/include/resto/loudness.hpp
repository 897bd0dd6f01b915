#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "resto/audio.hpp"
#include "resto/common.hpp"
#include "resto/resample.hpp"

namespace resto {

struct LoudnessResult {
  double integrated_lufs = -std::numeric_limits<double>::infinity();
  size_t gated_block_count = 0;

  bool silent() const { return !std::isfinite(integrated_lufs); }
};

namespace detail {

struct Biquad {
  double b0, b1, b2, a1, a2;

  void process(std::vector<double>& x) const {
    double z1 = 0.0, z2 = 0.0;  // direct form II transposed
    for (double& v : x) {
      double in = v;
      double out = b0 * in + z1;
      z1 = b1 * in - a1 * out + z2;
      z2 = b2 * in - a2 * out;
      v = out;
    }
  }
};

// ITU-R BS.1770-4 K-weighting at the 48 kHz reference rate: shelving
// pre-filter followed by the RLB high-pass.
inline const Biquad& k_shelf() {
  static const Biquad f{1.53512485958697, -2.69169618940638, 1.19839281085285,
                        -1.69065929318241, 0.73248077421585};
  return f;
}

inline const Biquad& k_highpass() {
  static const Biquad f{1.0, -2.0, 1.0, -1.99004745483398, 0.99007225036621};
  return f;
}

}  // namespace detail

/// BS.1770-4 integrated loudness. The signal is resampled to 48 kHz so the
/// published filter coefficients apply as-is, then measured in 400 ms
/// blocks with 75% overlap, gated at -70 LUFS absolute and -10 LU relative.
/// All blocks gated out (digital silence) yields the -inf sentinel.
inline LoudnessResult measure_lufs(const AudioBuffer& buffer) {
  require(buffer.sample_rate > 0, "measure_lufs: buffer has no sample rate");
  require(buffer.duration_s() >= 0.4,
          "measure_lufs: buffer shorter than one 400 ms gating block");

  AudioBuffer at48 =
      buffer.sample_rate == 48000 ? buffer : resample(buffer, 48000);
  std::vector<double> x = at48.samples;
  detail::k_shelf().process(x);
  detail::k_highpass().process(x);

  const size_t block = 19200;  // 400 ms at 48 kHz
  const size_t hop = block / 4;
  if (x.size() < block) return {};

  const size_t blocks = (x.size() - block) / hop + 1;
  std::vector<double> block_power(blocks);
  // sliding mean square via prefix sums
  std::vector<double> prefix(x.size() + 1, 0.0);
  for (size_t i = 0; i < x.size(); ++i) prefix[i + 1] = prefix[i] + x[i] * x[i];
  for (size_t j = 0; j < blocks; ++j) {
    size_t begin = j * hop;
    block_power[j] = (prefix[begin + block] - prefix[begin]) / block;
  }

  auto block_lufs = [](double power) { return -0.691 + power_to_db(power + 1e-300); };

  // absolute gate at -70 LUFS
  double sum_abs = 0.0;
  size_t count_abs = 0;
  for (double p : block_power) {
    if (block_lufs(p) > -70.0) {
      sum_abs += p;
      ++count_abs;
    }
  }
  if (count_abs == 0) return {};

  // relative gate 10 LU under the abs-gated mean
  double relative_gate = block_lufs(sum_abs / count_abs) - 10.0;
  double sum = 0.0;
  size_t count = 0;
  for (double p : block_power) {
    double l = block_lufs(p);
    if (l > -70.0 && l > relative_gate) {
      sum += p;
      ++count;
    }
  }
  if (count == 0) return {};

  LoudnessResult result;
  result.integrated_lufs = block_lufs(sum / count);
  result.gated_block_count = count;
  return result;
}

struct NormalizeResult {
  AudioBuffer audio;
  double gain = 1.0;
  double measured_lufs = -std::numeric_limits<double>::infinity();
  bool skipped = false;        // unmeasurable input returned unchanged
  size_t out_of_range = 0;     // samples now outside [-1, 1]; not clipped
};

/// Scale the buffer by a single gain so its integrated loudness lands on
/// target_lufs. Samples may leave [-1, 1]; the count is reported and the
/// values kept, since the recovery stage works in the float domain.
inline NormalizeResult normalize_loudness(const AudioBuffer& buffer,
                                          double target_lufs = -20.0) {
  NormalizeResult result;
  LoudnessResult measured = measure_lufs(buffer);
  result.measured_lufs = measured.integrated_lufs;
  if (measured.silent()) {
    result.audio = buffer;
    result.skipped = true;
    return result;
  }
  result.gain = db_to_amplitude(target_lufs - measured.integrated_lufs);
  result.audio = scaled(buffer, result.gain);
  for (double x : result.audio.samples)
    if (x > 1.0 || x < -1.0) ++result.out_of_range;
  return result;
}

}  // namespace resto
