#pragma once

#include <algorithm>
#include <memory>
#include <string>
#include <vector>

#include "resto/audio.hpp"
#include "resto/common.hpp"
#include "resto/loudness.hpp"
#include "resto/resample.hpp"
#include "resto/shell_hook.hpp"
#include "resto/stft.hpp"
#include "resto/wav.hpp"

namespace resto {

/// Discriminative enhancement behind a fixed spectrogram-in/spectrogram-out
/// contract. The pipeline treats implementations as stateless; anything
/// heavier must synchronize internally.
class Enhancer {
 public:
  virtual ~Enhancer() = default;
  virtual Spectrogram enhance(const Spectrogram& spec) const = 0;
  virtual std::string name() const = 0;
};

class IdentityEnhancer final : public Enhancer {
 public:
  Spectrogram enhance(const Spectrogram& spec) const override { return spec; }
  std::string name() const override { return "identity"; }
};

/// Magnitude-domain noise gate. Per bin, a low percentile of the magnitude
/// track estimates the stationary background: pauses in the foreground
/// reveal it, and the Rayleigh quantile factor turns the percentile into a
/// noise RMS rather than a biased-low floor. Raw oversubtraction gains are
/// then box-smoothed over time and neighboring bins, which dilutes isolated
/// noise flutter into its gated surroundings without biasing sustained
/// foreground regions; the result is floored and applied with the original
/// phase.
inline Spectrogram spectral_gate_enhance(const Spectrogram& spec,
                                         double oversubtraction = 3.0,
                                         double floor_percentile = 10.0,
                                         double gain_floor_db = -25.0) {
  require(floor_percentile > 0.0 && floor_percentile < 100.0,
          "spectral_gate: percentile out of range");
  const size_t bins = spec.num_bins();
  const size_t frames = spec.frames;
  const double gain_floor = db_to_amplitude(gain_floor_db);
  // Rayleigh magnitudes: quantile q_p = s * sqrt(-2 ln(1-p)), RMS = s * sqrt(2)
  const double rms_from_quantile =
      1.0 / std::sqrt(-std::log(1.0 - floor_percentile / 100.0));

  std::vector<double> mag(frames * bins);
  for (size_t m = 0; m < frames; ++m)
    for (size_t k = 0; k < bins; ++k)
      mag[m * bins + k] = std::abs(spec.at(m, k));

  std::vector<double> noise_rms(bins);
  {
    std::vector<double> track(frames);
    auto idx = static_cast<size_t>(
        floor_percentile / 100.0 * static_cast<double>(frames - 1) + 0.5);
    for (size_t k = 0; k < bins; ++k) {
      for (size_t m = 0; m < frames; ++m) track[m] = mag[m * bins + k];
      std::nth_element(track.begin(), track.begin() + static_cast<ptrdiff_t>(idx),
                       track.end());
      noise_rms[k] = track[idx] * rms_from_quantile;
    }
  }

  std::vector<double> raw_gain(frames * bins, 0.0);
  for (size_t m = 0; m < frames; ++m) {
    for (size_t k = 0; k < bins; ++k) {
      double level = mag[m * bins + k];
      if (level <= 1e-300) continue;
      double ratio = noise_rms[k] / level;
      double g2 = 1.0 - oversubtraction * ratio * ratio;
      raw_gain[m * bins + k] = g2 > 0.0 ? std::sqrt(g2) : 0.0;
    }
  }

  // +-3 frames x +-1 bin gain smoothing with edge clamping
  Spectrogram out = spec;
  for (size_t m = 0; m < frames; ++m) {
    for (size_t k = 0; k < bins; ++k) {
      double acc = 0.0;
      int count = 0;
      for (int dm = -3; dm <= 3; ++dm) {
        auto mm = static_cast<int64_t>(m) + dm;
        if (mm < 0 || mm >= static_cast<int64_t>(frames)) continue;
        for (int dk = -1; dk <= 1; ++dk) {
          auto kk = static_cast<int64_t>(k) + dk;
          if (kk < 0 || kk >= static_cast<int64_t>(bins)) continue;
          acc += raw_gain[static_cast<size_t>(mm) * bins + static_cast<size_t>(kk)];
          ++count;
        }
      }
      double gain = std::clamp(acc / count, gain_floor, 1.0);
      out.at(m, k) = spec.at(m, k) * gain;
    }
  }
  return out;
}

class SpectralGateEnhancer final : public Enhancer {
 public:
  SpectralGateEnhancer(double oversubtraction = 3.0,
                       double floor_percentile = 10.0,
                       double gain_floor_db = -25.0)
      : oversubtraction_(oversubtraction),
        floor_percentile_(floor_percentile),
        gain_floor_db_(gain_floor_db) {}

  Spectrogram enhance(const Spectrogram& spec) const override {
    return spectral_gate_enhance(spec, oversubtraction_, floor_percentile_,
                                 gain_floor_db_);
  }
  std::string name() const override { return "spectral_gate"; }

 private:
  double oversubtraction_;
  double floor_percentile_;
  double gain_floor_db_;
};

/// Shell-hook enhancer: hands the current time-domain estimate to an
/// external wav -> wav command and re-analyzes the result.
class ExternalEnhancer final : public Enhancer {
 public:
  explicit ExternalEnhancer(std::string command) : command_(std::move(command)) {
    require(!command_.empty(), "external enhancer: empty command");
  }

  Spectrogram enhance(const Spectrogram& spec) const override {
    AudioBuffer x = istft(spec);
    TempFile in(".wav"), out(".wav");
    save_wav(x, in.path(), WavDepth::float32);
    run_hook(command_, in.path(), out.path());
    AudioBuffer y = load_wav(out.path());
    require(y.sample_rate == spec.sample_rate,
            "external enhancer changed the sample rate");
    y.samples.resize(spec.source_samples, 0.0);
    return stft_size(y, spec.fft_size, spec.hop);
  }
  std::string name() const override { return "external"; }

 private:
  std::string command_;
};

inline std::unique_ptr<Enhancer> make_enhancer(const std::string& name,
                                               const std::string& command = {}) {
  if (name == "identity") return std::make_unique<IdentityEnhancer>();
  if (name == "spectral_gate") return std::make_unique<SpectralGateEnhancer>();
  if (name == "external") return std::make_unique<ExternalEnhancer>(command);
  fail("unknown enhancer: " + name);
}

struct RecoverResult {
  AudioBuffer audio;             // 16 kHz estimate
  bool loudness_skipped = false; // input was unmeasurable
  double loudness_gain = 1.0;
};

inline constexpr int kRecoveryRate = 16000;

/// The recovery stage: resample to 16 kHz, normalize to the target
/// loudness, enhance in the 32 ms / 8 ms complex STFT domain, invert.
inline RecoverResult recover(const AudioBuffer& input, const Enhancer& enhancer,
                             double target_lufs = -20.0) {
  require(!input.empty(), "recover: empty input");
  AudioBuffer x = resample(input, kRecoveryRate);

  RecoverResult result;
  if (x.duration_s() >= 0.4) {
    NormalizeResult norm = normalize_loudness(x, target_lufs);
    result.loudness_skipped = norm.skipped;
    result.loudness_gain = norm.gain;
    x = std::move(norm.audio);
  } else {
    result.loudness_skipped = true;
  }

  Spectrogram spec = stft(x, 32.0, 8.0);
  Spectrogram enhanced = enhancer.enhance(spec);
  require(enhanced.same_geometry(spec), "enhancer changed the geometry");
  result.audio = istft(enhanced);
  check_finite(result.audio, "recover output");
  return result;
}

}  // namespace resto
