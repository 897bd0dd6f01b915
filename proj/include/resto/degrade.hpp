#pragma once

#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "resto/audio.hpp"
#include "resto/common.hpp"
#include "resto/fft.hpp"
#include "resto/rng.hpp"
#include "resto/shell_hook.hpp"
#include "resto/wav.hpp"

namespace resto {

enum class CodecMode { none, proxy, external };
enum class DegradationProfile { train, eval };

inline std::string to_string(CodecMode m) {
  switch (m) {
    case CodecMode::proxy: return "proxy";
    case CodecMode::external: return "external";
    default: return "none";
  }
}

/// Sampled distortion parameters for one item: the additive-noise SNR, the
/// reverberation time, optional clipping / low-pass / codec stages, and the
/// seed everything stochastic derives from.
struct DegradationSpec {
  double snr_db = std::numeric_limits<double>::infinity();  // +inf = no noise
  double t60_s = 0.3;
  bool apply_reverb = false;
  std::optional<double> clip_threshold;
  std::optional<double> lowpass_hz;
  CodecMode codec = CodecMode::none;
  double codec_lowpass_hz = 8000.0;  // proxy bandwidth draw
  uint64_t seed = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["snr_db"] = std::isfinite(snr_db) ? nlohmann::json(snr_db)
                                        : nlohmann::json("inf");
    j["t60_s"] = t60_s;
    j["apply_reverb"] = apply_reverb;
    if (clip_threshold) j["clip_threshold"] = *clip_threshold;
    if (lowpass_hz) j["lowpass_hz"] = *lowpass_hz;
    j["codec"] = to_string(codec);
    j["codec_lowpass_hz"] = codec_lowpass_hz;
    j["seed"] = seed;
    return j;
  }
};

// ------------------------------------------------------------------ RIR

/// Exponentially decaying white-noise impulse response: a unit direct
/// impulse followed by a Gaussian tail shaped as exp(-6.9078 t / T60), the
/// decay constant that reaches -60 dB at t = T60. The tail is scaled to the
/// requested direct-to-reverberant energy ratio.
inline AudioBuffer synth_rir(double t60_s, double duration_s, int rate,
                             uint64_t seed, double drr_db = 0.0) {
  require(t60_s > 0.0 && t60_s <= 1.0, "synth_rir: t60 must be in (0, 1] s");
  require(duration_s >= t60_s, "synth_rir: duration must cover t60");
  require(rate > 0, "synth_rir: bad sample rate");

  Rng rng(seed);
  AudioBuffer h;
  h.sample_rate = rate;
  auto n = static_cast<size_t>(std::llround(duration_s * rate));
  h.samples.resize(n, 0.0);
  h.samples[0] = 1.0;

  const double decay = 6.9078 / t60_s;  // ln(10^3)
  double tail_energy = 0.0;
  for (size_t i = 1; i < n; ++i) {
    double t = static_cast<double>(i) / rate;
    h.samples[i] = rng.normal() * std::exp(-decay * t);
    tail_energy += h.samples[i] * h.samples[i];
  }
  if (tail_energy > 0.0) {
    double target = db_to_power(-drr_db);  // tail energy per unit direct
    double g = std::sqrt(target / tail_energy);
    for (size_t i = 1; i < n; ++i) h.samples[i] *= g;
  }
  return h;
}

// ----------------------------------------------------------- Convolution

/// Full linear convolution truncated to the input length. Long kernels run
/// through FFT overlap-add; tiny kernels (delays, unit impulses) take the
/// direct path so identities hold exactly.
inline AudioBuffer apply_reverb(const AudioBuffer& speech,
                                const AudioBuffer& rir) {
  require(speech.sample_rate == rir.sample_rate,
          "apply_reverb: sample rate mismatch");
  require(!speech.empty() && !rir.empty(), "apply_reverb: empty input");

  AudioBuffer out;
  out.sample_rate = speech.sample_rate;
  out.samples.assign(speech.size(), 0.0);

  if (rir.size() <= 64) {
    for (size_t i = 0; i < speech.size(); ++i) {
      double acc = 0.0;
      size_t kmax = std::min(rir.size(), i + 1);
      for (size_t k = 0; k < kmax; ++k)
        acc += speech.samples[i - k] * rir.samples[k];
      out.samples[i] = acc;
    }
    return out;
  }

  size_t fft_size = 4;
  while (fft_size < 4 * rir.size()) fft_size <<= 1;
  const size_t block = fft_size - rir.size() + 1;

  RealFftPlan plan(fft_size);
  std::vector<double> padded(fft_size, 0.0);
  std::copy(rir.samples.begin(), rir.samples.end(), padded.begin());
  std::vector<std::complex<double>> kernel(plan.bins());
  plan.forward(padded.data(), kernel.data());

  std::vector<std::complex<double>> spec(plan.bins());
  std::vector<double> time(fft_size);
  for (size_t start = 0; start < speech.size(); start += block) {
    size_t count = std::min(block, speech.size() - start);
    std::fill(padded.begin(), padded.end(), 0.0);
    std::copy(speech.samples.begin() + static_cast<ptrdiff_t>(start),
              speech.samples.begin() + static_cast<ptrdiff_t>(start + count),
              padded.begin());
    plan.forward(padded.data(), spec.data());
    for (size_t k = 0; k < spec.size(); ++k) spec[k] *= kernel[k];
    plan.inverse(spec.data(), time.data());
    size_t limit = std::min(fft_size, speech.size() - start);
    for (size_t i = 0; i < limit; ++i) out.samples[start + i] += time[i];
  }
  return out;
}

// ------------------------------------------------------------ SNR mixing

/// speech + g * noise with g chosen so the energy ratio hits snr_db
/// exactly. Longer noise is cropped at a seeded offset, shorter noise is
/// looped.
inline AudioBuffer mix_at_snr(const AudioBuffer& speech,
                              const AudioBuffer& noise, double snr_db,
                              uint64_t seed) {
  require(speech.sample_rate == noise.sample_rate,
          "mix_at_snr: sample rate mismatch");
  require(std::isfinite(snr_db), "mix_at_snr: snr must be finite");
  require(!speech.empty() && !noise.empty(), "mix_at_snr: empty input");

  std::vector<double> cut(speech.size());
  if (noise.size() >= speech.size()) {
    Rng rng(seed);
    auto offset = static_cast<size_t>(rng.uniform_int(
        0, static_cast<int64_t>(noise.size() - speech.size())));
    std::copy(noise.samples.begin() + static_cast<ptrdiff_t>(offset),
              noise.samples.begin() + static_cast<ptrdiff_t>(offset + speech.size()),
              cut.begin());
  } else {
    for (size_t i = 0; i < speech.size(); ++i)
      cut[i] = noise.samples[i % noise.size()];
  }

  double rms_s = rms(speech);
  double rms_n = 0.0;
  for (double x : cut) rms_n += x * x;
  rms_n = std::sqrt(rms_n / static_cast<double>(cut.size()));
  require(rms_s > 0.0, "mix_at_snr: zero-RMS speech");
  require(rms_n > 0.0, "mix_at_snr: zero-RMS noise");

  double gain = (rms_s / rms_n) * db_to_amplitude(-snr_db);
  AudioBuffer out;
  out.sample_rate = speech.sample_rate;
  out.samples.resize(speech.size());
  for (size_t i = 0; i < speech.size(); ++i)
    out.samples[i] = speech.samples[i] + gain * cut[i];
  return out;
}

// ------------------------------------------------------------- Clipping

inline AudioBuffer clip(const AudioBuffer& buffer, double threshold) {
  require(threshold > 0.0 && threshold <= 1.0,
          "clip: threshold must be in (0, 1]");
  AudioBuffer out = buffer;
  for (double& x : out.samples)
    x = x > threshold ? threshold : (x < -threshold ? -threshold : x);
  return out;
}

// -------------------------------------------------------------- Lowpass

namespace detail {

struct BiquadSection {
  double b0, b1, b2, a1, a2;

  void process(std::vector<double>& x) const {
    double z1 = 0.0, z2 = 0.0;
    for (double& v : x) {
      double in = v;
      double out = b0 * in + z1;
      z1 = b1 * in - a1 * out + z2;
      z2 = b2 * in - a2 * out;
      v = out;
    }
  }
};

/// Butterworth low-pass of even order as cascaded biquads, bilinear
/// transform with prewarped cutoff.
inline std::vector<BiquadSection> butterworth_lowpass(int order,
                                                      double cutoff_hz,
                                                      int rate) {
  require(order > 0 && order % 2 == 0, "butterworth: order must be even");
  require(cutoff_hz > 0.0 && cutoff_hz < rate / 2.0,
          "butterworth: cutoff must be below Nyquist");
  double wc = std::tan(kPi * cutoff_hz / rate);
  std::vector<BiquadSection> sections;
  for (int k = 0; k < order / 2; ++k) {
    double phi = kPi * (2.0 * k + 1.0) / (2.0 * order);
    double q = 2.0 * std::sin(phi);  // 2*sin maps pole pairs to sections
    double d = 1.0 + q * wc + wc * wc;
    BiquadSection s;
    s.b0 = wc * wc / d;
    s.b1 = 2.0 * s.b0;
    s.b2 = s.b0;
    s.a1 = 2.0 * (wc * wc - 1.0) / d;
    s.a2 = (1.0 - q * wc + wc * wc) / d;
    sections.push_back(s);
  }
  return sections;
}

}  // namespace detail

/// 8th-order Butterworth low-pass run forward and backward (zero phase).
inline AudioBuffer lowpass(const AudioBuffer& buffer, double cutoff_hz) {
  require(buffer.sample_rate > 0, "lowpass: buffer has no sample rate");
  auto sections =
      detail::butterworth_lowpass(8, cutoff_hz, buffer.sample_rate);
  AudioBuffer out = buffer;
  for (const auto& s : sections) s.process(out.samples);
  std::reverse(out.samples.begin(), out.samples.end());
  for (const auto& s : sections) s.process(out.samples);
  std::reverse(out.samples.begin(), out.samples.end());
  return out;
}

// ---------------------------------------------------------------- Codec

struct CodecParams {
  double lowpass_hz = 8000.0;  // proxy band limit
  std::string encode_cmd;      // external: {in} wav -> {out} bitstream
  std::string decode_cmd;      // external: {in} bitstream -> {out} wav
};

/// Codec artifact stand-ins. The proxy band-limits and runs an 8-bit mu-law
/// quantize/dequantize; the external mode round-trips through a user
/// supplied encoder/decoder command pair on temp files.
inline AudioBuffer codec_artifact(const AudioBuffer& buffer, CodecMode mode,
                                  const CodecParams& params) {
  if (mode == CodecMode::none) return buffer;

  if (mode == CodecMode::proxy) {
    AudioBuffer out = buffer;
    if (params.lowpass_hz < buffer.sample_rate / 2.0)
      out = lowpass(out, params.lowpass_hz);
    const double mu = 255.0;
    const double log1p_mu = std::log1p(mu);
    for (double& x : out.samples) {
      double v = x > 1.0 ? 1.0 : (x < -1.0 ? -1.0 : x);
      double compressed = std::copysign(std::log1p(mu * std::abs(v)) / log1p_mu, v);
      double quantized = std::round(compressed * 127.0) / 127.0;
      x = std::copysign((std::pow(1.0 + mu, std::abs(quantized)) - 1.0) / mu,
                        quantized);
    }
    return out;
  }

  require(!params.encode_cmd.empty() && !params.decode_cmd.empty(),
          "codec_artifact: external mode needs encode and decode commands");
  TempFile in_wav(".wav"), bitstream(".bin"), out_wav(".wav");
  save_wav(buffer, in_wav.path(), WavDepth::float32);
  run_hook(params.encode_cmd, in_wav.path(), bitstream.path());
  run_hook(params.decode_cmd, bitstream.path(), out_wav.path());
  return load_wav(out_wav.path());
}

// ------------------------------------------------------------- Sampling

/// Draw the distortion parameters for one item. The eval profile follows
/// the evaluation-set distribution (SNR U[-5,10], T60 U[0.1,0.5], codec on
/// half the items); the train profile uses the wider augmentation ranges
/// recorded in the project configuration. Deterministic under seed; the
/// draw order below is part of the on-disk contract.
inline DegradationSpec sample_degradation(DegradationProfile profile,
                                          uint64_t seed) {
  Rng rng(seed);
  DegradationSpec spec;
  spec.seed = seed;
  if (profile == DegradationProfile::eval) {
    spec.snr_db = rng.uniform(-5.0, 10.0);
    spec.t60_s = rng.uniform(0.1, 0.5);
    spec.apply_reverb = true;
    if (rng.bernoulli(0.5)) {
      spec.codec = CodecMode::proxy;
      spec.codec_lowpass_hz = rng.uniform(4000.0, 12000.0);
    }
    return spec;
  }
  spec.snr_db = rng.uniform(-5.0, 20.0);
  spec.t60_s = rng.uniform(0.05, 1.0);
  spec.apply_reverb = true;
  if (rng.bernoulli(0.2)) spec.clip_threshold = rng.uniform(0.25, 0.9);
  if (rng.bernoulli(0.3)) spec.lowpass_hz = rng.uniform(2000.0, 8000.0);
  return spec;
}

// ------------------------------------------------------------- Pipeline

/// The full degradation chain in the mixing -> reverb -> distortion order:
/// x = d((y + n) * h) with d = clip, low-pass, codec applied outermost.
inline AudioBuffer degrade(const AudioBuffer& clean, const AudioBuffer& noise,
                           const AudioBuffer& rir, const DegradationSpec& spec,
                           const CodecParams& codec_params = {}) {
  AudioBuffer x = std::isfinite(spec.snr_db)
                      ? mix_at_snr(clean, noise, spec.snr_db, spec.seed)
                      : clean;
  if (spec.apply_reverb) x = apply_reverb(x, rir);
  if (spec.clip_threshold) x = clip(x, *spec.clip_threshold);
  if (spec.lowpass_hz) x = lowpass(x, *spec.lowpass_hz);
  if (spec.codec != CodecMode::none) {
    CodecParams p = codec_params;
    if (spec.codec == CodecMode::proxy) p.lowpass_hz = spec.codec_lowpass_hz;
    x = codec_artifact(x, spec.codec, p);
  }
  return x;
}

}  // namespace resto
