#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "resto/common.hpp"
#include "resto/latent.hpp"
#include "resto/mel.hpp"
#include "resto/metrics.hpp"
#include "resto/resample.hpp"
#include "resto/rng.hpp"

namespace resto {

/// Linear variance schedule with cumulative products. Index t runs 1..steps;
/// alpha_bar[0] = 1 by convention so t = 0 means "no noise".
struct NoiseSchedule {
  size_t steps = 0;
  double beta_1 = 0.0;
  double beta_t = 0.0;
  std::vector<double> betas;          // [0] unused
  std::vector<double> alphas;         // 1 - beta
  std::vector<double> alphas_cumprod; // [0] = 1
};

inline NoiseSchedule make_schedule(size_t steps = 1000, double beta_1 = 1e-4,
                                   double beta_t = 0.02) {
  require(steps >= 2, "make_schedule: need at least two steps");
  require(beta_1 > 0.0 && beta_1 < beta_t && beta_t < 1.0,
          "make_schedule: need 0 < beta_1 < beta_t < 1");
  NoiseSchedule s;
  s.steps = steps;
  s.beta_1 = beta_1;
  s.beta_t = beta_t;
  s.betas.resize(steps + 1, 0.0);
  s.alphas.resize(steps + 1, 1.0);
  s.alphas_cumprod.resize(steps + 1, 1.0);
  for (size_t t = 1; t <= steps; ++t) {
    s.betas[t] = beta_1 + (beta_t - beta_1) * static_cast<double>(t - 1) /
                              static_cast<double>(steps - 1);
    s.alphas[t] = 1.0 - s.betas[t];
    s.alphas_cumprod[t] = s.alphas_cumprod[t - 1] * s.alphas[t];
  }
  return s;
}

/// Variance-preserving forward step: sqrt(abar_t) target + sqrt(1-abar_t) noise.
inline std::vector<double> forward_diffuse(const std::vector<double>& target,
                                           size_t t,
                                           const std::vector<double>& noise,
                                           const NoiseSchedule& schedule) {
  require(t <= schedule.steps, "forward_diffuse: t out of range");
  require(noise.size() == target.size(), "forward_diffuse: dim mismatch");
  double ab = schedule.alphas_cumprod[t];
  double signal = std::sqrt(ab);
  double spread = std::sqrt(1.0 - ab);
  std::vector<double> out(target.size());
  for (size_t i = 0; i < target.size(); ++i)
    out[i] = signal * target[i] + spread * noise[i];
  return out;
}

/// A denoiser predicts the clean target latent from the noisy latent, the
/// conditioning latent, and the timestep (x0-prediction).
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual std::vector<double> predict(const std::vector<double>& noisy,
                                      const std::vector<double>& conditioning,
                                      size_t t) const = 0;
  virtual std::string name() const = 0;
};

/// Predicts the conditioning latent verbatim. The pipeline default when no
/// fitted model is supplied: the sampler then collapses onto the encoded
/// input and restoration reduces to the codec round-trip.
class ConditioningDenoiser final : public Denoiser {
 public:
  std::vector<double> predict(const std::vector<double>&,
                              const std::vector<double>& conditioning,
                              size_t) const override {
    return conditioning;
  }
  std::string name() const override { return "conditioning"; }
};

/// Closed-form posterior mean for i.i.d. Gaussian data N(mu, sigma^2 I),
/// ignoring the conditioning. The analytic oracle the sampler tests run
/// against.
class GaussianMmseDenoiser final : public Denoiser {
 public:
  GaussianMmseDenoiser(double mu, double sigma, NoiseSchedule schedule)
      : mu_(mu), sigma_(sigma), schedule_(std::move(schedule)) {
    require(sigma > 0.0, "gaussian denoiser: sigma must be positive");
  }

  std::vector<double> predict(const std::vector<double>& noisy,
                              const std::vector<double>&,
                              size_t t) const override {
    double ab = schedule_.alphas_cumprod[t];
    double s2 = sigma_ * sigma_;
    double denom = ab * s2 + 1.0 - ab;
    double gain = std::sqrt(ab) * s2 / denom;
    double bias = (1.0 - ab) * mu_ / denom;
    std::vector<double> out(noisy.size());
    for (size_t i = 0; i < noisy.size(); ++i) out[i] = gain * noisy[i] + bias;
    return out;
  }
  std::string name() const override { return "gaussian_mmse"; }

 private:
  double mu_;
  double sigma_;
  NoiseSchedule schedule_;
};

/// Per-timestep-bucket affine map: prediction = a * noisy + b * conditioning
/// + c, with scalar coefficients shared across coordinates. The smallest
/// model that trains in closed form yet responds to both inputs.
class LinearDenoiser final : public Denoiser {
 public:
  struct Bucket {
    size_t t_lo = 1;  // inclusive
    size_t t_hi = 1;  // inclusive
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
  };

  LinearDenoiser() = default;
  explicit LinearDenoiser(std::vector<Bucket> buckets)
      : buckets_(std::move(buckets)) {
    require(!buckets_.empty(), "linear denoiser: no buckets");
  }

  const std::vector<Bucket>& buckets() const { return buckets_; }

  size_t bucket_of(size_t t) const {
    size_t lo = 0, hi = buckets_.size();
    while (lo + 1 < hi) {
      size_t mid = (lo + hi) / 2;
      if (buckets_[mid].t_lo <= t)
        lo = mid;
      else
        hi = mid;
    }
    return lo;
  }

  std::vector<double> predict(const std::vector<double>& noisy,
                              const std::vector<double>& conditioning,
                              size_t t) const override {
    require(noisy.size() == conditioning.size(),
            "linear denoiser: dim mismatch");
    const Bucket& k = buckets_[bucket_of(t)];
    std::vector<double> out(noisy.size());
    for (size_t i = 0; i < noisy.size(); ++i)
      out[i] = k.a * noisy[i] + k.b * conditioning[i] + k.c;
    return out;
  }
  std::string name() const override { return "linear"; }

 private:
  std::vector<Bucket> buckets_;
};

/// Log-spaced bucket lower edges covering [1, T].
inline std::vector<size_t> log_bucket_edges(size_t steps, size_t bucket_count) {
  require(bucket_count >= 1 && bucket_count <= steps,
          "bucket count out of range");
  std::vector<size_t> edges;
  edges.push_back(1);
  for (size_t i = 1; i < bucket_count; ++i) {
    double x = std::pow(static_cast<double>(steps),
                        static_cast<double>(i) / static_cast<double>(bucket_count));
    auto e = static_cast<size_t>(std::llround(x));
    edges.push_back(std::max(e, edges.back() + 1));
  }
  require(edges.back() <= steps, "bucket edges exceed schedule");
  return edges;
}

/// Eq.-style training objective: mean squared error, per coordinate,
/// between the clean targets and the denoiser's predictions from their
/// diffused versions. `noises` carries one standard-normal draw per pair.
inline double training_loss(
    const Denoiser& denoiser,
    const std::vector<std::pair<std::vector<double>, std::vector<double>>>& batch,
    size_t t, const std::vector<std::vector<double>>& noises,
    const NoiseSchedule& schedule) {
  require(!batch.empty(), "training_loss: empty batch");
  require(noises.size() == batch.size(), "training_loss: noise count mismatch");
  double acc = 0.0;
  size_t count = 0;
  for (size_t i = 0; i < batch.size(); ++i) {
    const auto& [target, conditioning] = batch[i];
    auto noisy = forward_diffuse(target, t, noises[i], schedule);
    auto pred = denoiser.predict(noisy, conditioning, t);
    require(pred.size() == target.size(), "training_loss: dim mismatch");
    for (size_t j = 0; j < target.size(); ++j) {
      double d = target[j] - pred[j];
      acc += d * d;
    }
    count += target.size();
  }
  return acc / static_cast<double>(count);
}

/// Closed-form ridge fit of the per-bucket affine coefficients. For each
/// bucket, every pair is diffused at a timestep drawn uniformly inside the
/// bucket and the 3x3 normal equations over (noisy, conditioning, 1) are
/// solved; a singular system escalates the ridge before giving up.
inline LinearDenoiser fit_linear_denoiser(
    const std::vector<std::pair<std::vector<double>, std::vector<double>>>& pairs,
    const NoiseSchedule& schedule, double ridge_lambda = 1e-6,
    uint64_t seed = 1, size_t bucket_count = 32, size_t min_pairs = 1000) {
  require(pairs.size() >= min_pairs,
          "fit_linear_denoiser: need at least " + std::to_string(min_pairs) +
              " pairs, got " + std::to_string(pairs.size()));
  auto edges = log_bucket_edges(schedule.steps, bucket_count);

  Rng rng(seed);
  std::vector<LinearDenoiser::Bucket> buckets;
  for (size_t b = 0; b < edges.size(); ++b) {
    size_t t_lo = edges[b];
    size_t t_hi = b + 1 < edges.size() ? edges[b + 1] - 1 : schedule.steps;

    // normal equations M theta = v over features (z_t, z_cond, 1)
    double m00 = 0, m01 = 0, m02 = 0, m11 = 0, m12 = 0, m22 = 0;
    double v0 = 0, v1 = 0, v2 = 0;
    for (const auto& [target, conditioning] : pairs) {
      require(target.size() == conditioning.size(),
              "fit_linear_denoiser: dim mismatch");
      auto t = static_cast<size_t>(
          rng.uniform_int(static_cast<int64_t>(t_lo), static_cast<int64_t>(t_hi)));
      double ab = schedule.alphas_cumprod[t];
      double signal = std::sqrt(ab);
      double spread = std::sqrt(1.0 - ab);
      for (size_t j = 0; j < target.size(); ++j) {
        double zt = signal * target[j] + spread * rng.normal();
        double zc = conditioning[j];
        double y = target[j];
        m00 += zt * zt;
        m01 += zt * zc;
        m02 += zt;
        m11 += zc * zc;
        m12 += zc;
        m22 += 1.0;
        v0 += zt * y;
        v1 += zc * y;
        v2 += y;
      }
    }

    LinearDenoiser::Bucket bucket;
    bucket.t_lo = t_lo;
    bucket.t_hi = t_hi;
    double lambda = ridge_lambda * m22;  // scale-free ridge
    bool solved = false;
    for (int attempt = 0; attempt < 8 && !solved; ++attempt, lambda *= 10.0) {
      double a00 = m00 + lambda, a11 = m11 + lambda, a22 = m22 + lambda;
      double det = a00 * (a11 * a22 - m12 * m12) -
                   m01 * (m01 * a22 - m12 * m02) +
                   m02 * (m01 * m12 - a11 * m02);
      double scale = std::max({std::abs(a00), std::abs(a11), std::abs(a22), 1.0});
      if (std::abs(det) < 1e-12 * scale * scale * scale) continue;
      double inv_det = 1.0 / det;
      bucket.a = inv_det * (v0 * (a11 * a22 - m12 * m12) +
                            v1 * (m02 * m12 - m01 * a22) +
                            v2 * (m01 * m12 - m02 * a11));
      bucket.b = inv_det * (v0 * (m12 * m02 - m01 * a22) +
                            v1 * (a00 * a22 - m02 * m02) +
                            v2 * (m01 * m02 - a00 * m12));
      bucket.c = inv_det * (v0 * (m01 * m12 - a11 * m02) +
                            v1 * (m01 * m02 - a00 * m12) +
                            v2 * (a00 * a11 - m01 * m01));
      solved = std::isfinite(bucket.a) && std::isfinite(bucket.b) &&
               std::isfinite(bucket.c);
    }
    require(solved, "fit_linear_denoiser: singular normal matrix");
    buckets.push_back(bucket);
  }
  return LinearDenoiser(std::move(buckets));
}

/// Evenly spaced descending timesteps from T to 1 (step_count of them).
inline std::vector<size_t> sample_timesteps(const NoiseSchedule& schedule,
                                            size_t step_count) {
  require(step_count >= 1 && step_count <= schedule.steps,
          "ddpm_sample: step count out of range");
  std::vector<size_t> ts;
  if (step_count == 1) {
    ts.push_back(schedule.steps);
    return ts;
  }
  for (size_t i = 0; i < step_count; ++i) {
    double frac = 1.0 - static_cast<double>(i) / static_cast<double>(step_count - 1);
    auto t = 1 + static_cast<size_t>(
                     std::llround(static_cast<double>(schedule.steps - 1) * frac));
    if (ts.empty() || t < ts.back()) ts.push_back(t);
  }
  return ts;
}

/// Ancestral sampling with the x0 parameterization: start from standard
/// normal noise, alternate posterior-mean updates with scheduled noise,
/// skip the noise at the final step. Consecutive timesteps use the
/// schedule's own alpha/beta so a step_count = T run is bit-identical to
/// full sampling; strided jumps use cumulative-product ratios.
inline std::vector<double> ddpm_sample(const Denoiser& denoiser,
                                       const std::vector<double>& conditioning,
                                       const NoiseSchedule& schedule,
                                       size_t step_count, uint64_t seed) {
  auto ts = sample_timesteps(schedule, step_count);
  const size_t dim = conditioning.size();
  require(dim > 0, "ddpm_sample: empty conditioning");

  Rng rng(seed);
  std::vector<double> z(dim);
  for (auto& v : z) v = rng.normal();

  for (size_t i = 0; i < ts.size(); ++i) {
    size_t t = ts[i];
    size_t t_next = i + 1 < ts.size() ? ts[i + 1] : 0;
    double ab_t = schedule.alphas_cumprod[t];
    double ab_next = schedule.alphas_cumprod[t_next];
    double alpha_eff, beta_eff;
    if (t_next + 1 == t) {
      alpha_eff = schedule.alphas[t];
      beta_eff = schedule.betas[t];
    } else {
      alpha_eff = ab_t / ab_next;
      beta_eff = 1.0 - alpha_eff;
    }

    auto estimate = denoiser.predict(z, conditioning, t);
    require(estimate.size() == dim, "ddpm_sample: denoiser changed dims");

    double one_minus = 1.0 - ab_t;
    double mean_est = std::sqrt(ab_next) * beta_eff / one_minus;
    double mean_cur = std::sqrt(alpha_eff) * (1.0 - ab_next) / one_minus;
    bool last = i + 1 == ts.size();
    double noise_std =
        last ? 0.0
             : std::sqrt(beta_eff * (1.0 - ab_next) / one_minus);
    for (size_t j = 0; j < dim; ++j) {
      double v = mean_est * estimate[j] + mean_cur * z[j];
      if (!last) v += noise_std * rng.normal();
      z[j] = v;
    }
  }
  return z;
}

// ------------------------------------------------------- Serialization

/// Versioned JSON sidecar holding the fitted coefficients together with
/// the schedule they were trained against.
inline void save_denoiser(const LinearDenoiser& denoiser,
                          const NoiseSchedule& schedule,
                          const std::string& path) {
  nlohmann::json j;
  j["version"] = 1;
  j["type"] = "linear";
  j["schedule"] = {{"steps", schedule.steps},
                   {"beta_1", schedule.beta_1},
                   {"beta_t", schedule.beta_t}};
  auto& buckets = j["buckets"] = nlohmann::json::array();
  for (const auto& b : denoiser.buckets())
    buckets.push_back({{"t_lo", b.t_lo},
                       {"t_hi", b.t_hi},
                       {"a", b.a},
                       {"b", b.b},
                       {"c", b.c}});
  std::ofstream f(path, std::ios::trunc);
  require(f.good(), "save_denoiser: cannot write " + path);
  f << j.dump(2) << "\n";
}

struct LoadedDenoiser {
  LinearDenoiser denoiser;
  NoiseSchedule schedule;
};

inline LoadedDenoiser load_denoiser(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "load_denoiser: cannot open " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    fail("load_denoiser: bad json in " + path + ": " + e.what());
  }
  require(j.value("version", 0) == 1, "load_denoiser: unsupported version");
  require(j.value("type", "") == "linear", "load_denoiser: unsupported type");
  LoadedDenoiser out;
  const auto& s = j.at("schedule");
  out.schedule = make_schedule(s.at("steps").get<size_t>(),
                               s.at("beta_1").get<double>(),
                               s.at("beta_t").get<double>());
  std::vector<LinearDenoiser::Bucket> buckets;
  for (const auto& b : j.at("buckets")) {
    LinearDenoiser::Bucket bucket;
    bucket.t_lo = b.at("t_lo").get<size_t>();
    bucket.t_hi = b.at("t_hi").get<size_t>();
    bucket.a = b.at("a").get<double>();
    bucket.b = b.at("b").get<double>();
    bucket.c = b.at("c").get<double>();
    buckets.push_back(bucket);
  }
  out.denoiser = LinearDenoiser(std::move(buckets));
  return out;
}

// ------------------------------------------------------------- Restore

struct RestoreParams {
  size_t sample_steps = 50;
  uint64_t seed = 1;
  int gl_iterations = 60;
  int nnls_iterations = 80;
  MelConfig mel_config;
  CodecConfig codec_config;
};

/// The restoration stage: upsample the 16 kHz recovery estimate to 48 kHz,
/// encode its mel surface as the conditioning latent, draw the restored
/// latent with the conditional sampler, decode, and invert back to audio.
inline AudioBuffer restore(const AudioBuffer& recovered,
                           const Denoiser& denoiser,
                           const NoiseSchedule& schedule,
                           const RestoreParams& params = {}) {
  require(recovered.sample_rate == 16000, "restore: input must be 16 kHz");
  AudioBuffer wide = resample(recovered, 48000);
  MelSpectrogram mel = mel_spectrogram(wide, params.mel_config, true);
  Latent cond = encode(mel, params.codec_config);

  std::vector<double> sampled = ddpm_sample(denoiser, cond.coeffs, schedule,
                                            params.sample_steps, params.seed);
  Latent out = cond;
  out.coeffs = std::move(sampled);

  MelSpectrogram restored_db = decode(out);
  MelSpectrogram restored_linear = mel_from_db(restored_db);
  return invert_mel(restored_linear, params.gl_iterations,
                    params.nnls_iterations);
}

// ---------------------------------------------------------- Refinement

struct RefineStep {
  AudioBuffer audio;
  MetricRow row;
};

/// Feed the stage output back into itself `iterations` times, measuring
/// each pass against the original input.
inline std::vector<RefineStep> iterative_refine(
    const AudioBuffer& input,
    const std::function<AudioBuffer(const AudioBuffer&)>& stage,
    int iterations, const std::string& item_id = "item") {
  require(iterations >= 1, "iterative_refine: iterations must be >= 1");
  std::vector<RefineStep> steps;
  AudioBuffer current = input;
  for (int i = 1; i <= iterations; ++i) {
    current = stage(current);
    RefineStep step;
    step.row = compute_metric_row(item_id, i, input, current);
    step.audio = current;
    steps.push_back(std::move(step));
  }
  return steps;
}

}  // namespace resto
