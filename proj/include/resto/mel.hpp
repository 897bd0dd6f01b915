#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "resto/audio.hpp"
#include "resto/common.hpp"
#include "resto/stft.hpp"

namespace resto {

struct MelConfig {
  size_t fft_size = 2048;
  size_t hop = 512;
  size_t n_mels = 128;
  double f_min = 0.0;
  double f_max = 24000.0;

  bool operator==(const MelConfig&) const = default;
};

/// Real mel-domain matrix, frames x n_mels. Carries the analysis geometry
/// (fft, hop, rate, source length) so it can be inverted back to audio of
/// the exact original duration.
struct MelSpectrogram {
  std::vector<double> values;
  size_t frames = 0;
  size_t n_mels = 0;
  bool db_scale = false;
  MelConfig config;
  int sample_rate = 0;
  size_t source_samples = 0;

  double& at(size_t frame, size_t mel) { return values[frame * n_mels + mel]; }
  const double& at(size_t frame, size_t mel) const {
    return values[frame * n_mels + mel];
  }
};

inline double hz_to_mel(double hz) {
  return 2595.0 * std::log10(1.0 + hz / 700.0);
}

inline double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

inline constexpr double kDbFloor = -100.0;

/// Triangular HTK-scale filterbank over FFT bin centers. Rows are stored as
/// contiguous (offset, weights) runs; the triangles are compact so both the
/// forward apply and its transpose stay cheap.
class MelFilterbank {
 public:
  MelFilterbank(const MelConfig& cfg, int sample_rate)
      : n_mels_(cfg.n_mels), bins_(cfg.fft_size / 2 + 1) {
    require(sample_rate > 0, "mel filterbank: bad sample rate");
    double f_max = std::min(cfg.f_max, sample_rate / 2.0);
    require(cfg.f_min >= 0.0 && cfg.f_min < f_max,
            "mel filterbank: bad frequency range");
    double mel_lo = hz_to_mel(cfg.f_min);
    double mel_hi = hz_to_mel(f_max);
    std::vector<double> edges(n_mels_ + 2);
    for (size_t i = 0; i < edges.size(); ++i)
      edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                        static_cast<double>(n_mels_ + 1));

    double bin_hz = static_cast<double>(sample_rate) / cfg.fft_size;
    rows_.resize(n_mels_);
    for (size_t m = 0; m < n_mels_; ++m) {
      double lo = edges[m], center = edges[m + 1], hi = edges[m + 2];
      auto first = static_cast<size_t>(std::ceil(lo / bin_hz));
      Row row;
      row.begin = bins_;
      for (size_t k = first; k < bins_; ++k) {
        double f = static_cast<double>(k) * bin_hz;
        if (f >= hi) break;
        double w = f <= center ? (f - lo) / (center - lo)
                               : (hi - f) / (hi - center);
        if (w <= 0.0) continue;
        if (row.w.empty()) row.begin = k;
        row.w.push_back(w);
      }
      rows_[m] = std::move(row);
    }
  }

  size_t bands() const { return n_mels_; }
  size_t bins() const { return bins_; }

  bool row_empty(size_t m) const { return rows_[m].w.empty(); }

  double row_sum(size_t m) const {
    double s = 0.0;
    for (double w : rows_[m].w) s += w;
    return s;
  }

  /// mel[m] = sum_k W[m,k] * power[k]
  void apply(const double* power, double* mel) const {
    for (size_t m = 0; m < n_mels_; ++m) {
      const Row& r = rows_[m];
      double acc = 0.0;
      for (size_t j = 0; j < r.w.size(); ++j) acc += r.w[j] * power[r.begin + j];
      mel[m] = acc;
    }
  }

  /// power[k] += sum_m W[m,k] * mel[m]; caller zeroes the output first.
  void apply_transpose(const double* mel, double* power) const {
    for (size_t m = 0; m < n_mels_; ++m) {
      const Row& r = rows_[m];
      for (size_t j = 0; j < r.w.size(); ++j) power[r.begin + j] += r.w[j] * mel[m];
    }
  }

  /// Largest eigenvalue of W^T W by power iteration; the NNLS step size.
  double operator_norm() const {
    std::vector<double> v(bins_, 1.0), mel(n_mels_);
    double lambda = 1.0;
    for (int it = 0; it < 60; ++it) {
      apply(v.data(), mel.data());
      std::fill(v.begin(), v.end(), 0.0);
      apply_transpose(mel.data(), v.data());
      double norm = 0.0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
      if (norm <= 0.0) return 1.0;
      lambda = norm;
      for (double& x : v) x /= norm;
    }
    return lambda;
  }

 private:
  struct Row {
    size_t begin = 0;
    std::vector<double> w;
  };

  size_t n_mels_;
  size_t bins_;
  std::vector<Row> rows_;
};

/// Mel analysis at an arbitrary rate (used internally by the metrics).
/// Input to the filterbank is the magnitude-squared STFT.
inline MelSpectrogram mel_power(const AudioBuffer& buffer,
                                const MelConfig& cfg) {
  Spectrogram spec = stft_size(buffer, cfg.fft_size, cfg.hop);
  MelFilterbank bank(cfg, buffer.sample_rate);

  MelSpectrogram mel;
  mel.frames = spec.frames;
  mel.n_mels = cfg.n_mels;
  mel.config = cfg;
  mel.sample_rate = buffer.sample_rate;
  mel.source_samples = spec.source_samples;
  mel.values.resize(mel.frames * mel.n_mels);

  std::vector<double> power(spec.num_bins());
  for (size_t m = 0; m < spec.frames; ++m) {
    for (size_t k = 0; k < spec.num_bins(); ++k)
      power[k] = std::norm(spec.at(m, k));
    bank.apply(power.data(), &mel.at(m, 0));
  }
  return mel;
}

inline MelSpectrogram mel_to_db(const MelSpectrogram& mel) {
  require(!mel.db_scale, "mel_to_db: already dB scale");
  MelSpectrogram out = mel;
  out.db_scale = true;
  for (double& v : out.values)
    v = std::max(power_to_db(std::max(v, 0.0) + 1e-300), kDbFloor);
  return out;
}

inline MelSpectrogram mel_from_db(const MelSpectrogram& mel) {
  require(mel.db_scale, "mel_from_db: not dB scale");
  MelSpectrogram out = mel;
  out.db_scale = false;
  for (double& v : out.values) v = db_to_power(v);
  return out;
}

/// Full-band mel analysis for the restoration stage: requires 48 kHz input
/// and the 2048/512/128 geometry unless overridden.
inline MelSpectrogram mel_spectrogram(const AudioBuffer& buffer,
                                      const MelConfig& cfg = {},
                                      bool db = false) {
  require(buffer.sample_rate == 48000, "mel_spectrogram: buffer must be 48 kHz");
  MelSpectrogram mel = mel_power(buffer, cfg);
  return db ? mel_to_db(mel) : mel;
}

namespace detail {

/// Non-negative least squares || W p - v ||^2, p >= 0, solved per
/// spectrogram with FISTA projected gradient. The returned power spectrum
/// is laid out as frames-major blocks of bins, matching the magnitude
/// layout Griffin-Lim consumes.
inline std::vector<double> nnls_power(const MelFilterbank& bank,
                                      const MelSpectrogram& mel,
                                      int iterations = 80) {
  const size_t bins = bank.bins();
  const size_t frames = mel.frames;
  const double step = 1.0 / (bank.operator_norm() * 1.02);

  std::vector<double> p(bins * frames, 0.0);
  // transpose initialization, rescaled to match the observed energy
  for (size_t f = 0; f < frames; ++f)
    bank.apply_transpose(&mel.at(f, 0), &p[f * bins]);
  {
    std::vector<double> proj(mel.n_mels);
    double num = 0.0, den = 0.0;
    for (size_t f = 0; f < frames; ++f) {
      bank.apply(&p[f * bins], proj.data());
      for (size_t m = 0; m < mel.n_mels; ++m) {
        num += proj[m] * mel.at(f, m);
        den += proj[m] * proj[m];
      }
    }
    double s = den > 0.0 ? num / den : 0.0;
    for (double& x : p) x = std::max(0.0, x * s);
  }

  std::vector<double> momentum = p;
  std::vector<double> prev = p;
  std::vector<double> proj(mel.n_mels), residual(mel.n_mels), grad(bins);
  double t_acc = 1.0;
  for (int it = 0; it < iterations; ++it) {
    double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_acc * t_acc));
    double beta = (t_acc - 1.0) / t_next;
    t_acc = t_next;
    prev.swap(p);
    for (size_t f = 0; f < frames; ++f) {
      double* y = &momentum[f * bins];
      bank.apply(y, proj.data());
      for (size_t m = 0; m < mel.n_mels; ++m)
        residual[m] = proj[m] - mel.at(f, m);
      std::fill(grad.begin(), grad.end(), 0.0);
      bank.apply_transpose(residual.data(), grad.data());
      double* dst = &p[f * bins];
      const double* old = &prev[f * bins];
      for (size_t k = 0; k < bins; ++k) {
        double next = std::max(0.0, y[k] - step * grad[k]);
        dst[k] = next;
        y[k] = next + beta * (next - old[k]);
      }
    }
  }
  return p;
}

}  // namespace detail

struct GriffinLimResult {
  AudioBuffer audio;
  std::vector<double> convergence;  // ||(|stft| - target)||_F / ||target||_F
};

/// Phase retrieval from a magnitude spectrogram by accelerated Griffin-Lim.
/// `magnitude` is frames x bins in the geometry described by `shape`.
inline GriffinLimResult griffin_lim(const std::vector<double>& magnitude,
                                    const Spectrogram& shape, int iterations,
                                    double momentum = 0.99) {
  require(iterations >= 0, "griffin_lim: iterations must be >= 0");
  require(magnitude.size() == shape.frames * shape.num_bins(),
          "griffin_lim: magnitude does not match geometry");

  double target_norm = 0.0;
  for (double m : magnitude) target_norm += m * m;
  target_norm = std::sqrt(target_norm);

  GriffinLimResult result;
  Spectrogram current = shape;
  // zero-phase start: deterministic and a decent initialization for audio
  for (size_t i = 0; i < magnitude.size(); ++i) current.bins[i] = magnitude[i];
  if (target_norm <= 0.0) {
    result.audio = istft(current);
    return result;
  }

  // accelerated update with adaptive restart: when the residual rises the
  // momentum memory is dropped and the iterate reverts to the best state,
  // so the recorded convergence never climbs by more than rounding noise
  Spectrogram rebuilt_prev = shape;
  Spectrogram best = current;
  double best_err = std::numeric_limits<double>::infinity();
  bool have_prev = false;
  const double blend = momentum / (1.0 + momentum);
  for (int it = 0; it < iterations; ++it) {
    AudioBuffer x = istft(current);
    Spectrogram rebuilt = stft_size(x, shape.fft_size, shape.hop);

    double err = 0.0;
    for (size_t i = 0; i < magnitude.size(); ++i) {
      double d = std::abs(rebuilt.bins[i]) - magnitude[i];
      err += d * d;
    }
    err = std::sqrt(err) / target_norm;

    if (err > best_err) {
      // rejected accelerated candidate: restart plain from the best iterate
      current = best;
      have_prev = false;
      result.convergence.push_back(best_err);
      continue;
    }
    best_err = err;
    best = current;
    result.convergence.push_back(err);

    for (size_t i = 0; i < magnitude.size(); ++i) {
      std::complex<double> dir = rebuilt.bins[i];
      if (have_prev) dir -= blend * rebuilt_prev.bins[i];
      double len = std::abs(dir);
      std::complex<double> phase = len > 1e-300 ? dir / len : 1.0;
      current.bins[i] = magnitude[i] * phase;
    }
    rebuilt_prev.bins.swap(rebuilt.bins);
    have_prev = true;
  }
  result.audio = istft(best);
  return result;
}

/// Mel inversion: non-negative least squares back to a power spectrogram,
/// then Griffin-Lim phase retrieval. The classical stand-in for a neural
/// vocoder; expects a linear-scale mel.
inline AudioBuffer invert_mel(const MelSpectrogram& mel, int gl_iterations = 60,
                              int nnls_iterations = 80) {
  require(!mel.db_scale, "invert_mel: expected linear-scale mel");
  for (double v : mel.values)
    require(v >= 0.0, "invert_mel: negative mel values");
  require(mel.frames >= 1 && mel.n_mels >= 1, "invert_mel: empty mel");

  MelFilterbank bank(mel.config, mel.sample_rate);
  std::vector<double> power =
      detail::nnls_power(bank, mel, nnls_iterations);

  Spectrogram shape;
  shape.fft_size = mel.config.fft_size;
  shape.hop = mel.config.hop;
  shape.sample_rate = mel.sample_rate;
  shape.source_samples = mel.source_samples;
  shape.frames = mel.frames;
  shape.bins.resize(shape.frames * shape.num_bins());

  // power is bins x frames blocks per frame; magnitude wants frames x bins
  const size_t bins = shape.num_bins();
  std::vector<double> magnitude(shape.frames * bins);
  for (size_t f = 0; f < shape.frames; ++f)
    for (size_t k = 0; k < bins; ++k)
      magnitude[f * bins + k] = std::sqrt(std::max(0.0, power[f * bins + k]));

  return griffin_lim(magnitude, shape, gl_iterations).audio;
}

}  // namespace resto
