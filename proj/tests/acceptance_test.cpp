// Acceptance suite: every criterion prints one PASS/FAIL line with its
// elapsed time. Criteria 10, 11 and 13 drive the installed CLI binary the
// way a user would; everything else exercises the library directly.

#include <gtest/gtest.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "resto/resto.hpp"
#include "support/corpus.hpp"
#include "support/test_signals.hpp"

using namespace resto;
namespace fs = std::filesystem;

namespace {

class Criterion {
 public:
  Criterion(int number, std::string what)
      : number_(number), what_(std::move(what)),
        start_(std::chrono::steady_clock::now()) {}

  ~Criterion() {
    std::chrono::duration<double> elapsed =
        std::chrono::steady_clock::now() - start_;
    bool ok = !::testing::Test::HasFailure();
    std::printf("ACCEPTANCE %2d: %s — %s (%.2f s)\n", number_,
                ok ? "PASS" : "FAIL", what_.c_str(), elapsed.count());
    std::fflush(stdout);
  }

 private:
  int number_;
  std::string what_;
  std::chrono::steady_clock::time_point start_;
};

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "resto_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  std::string cmd = std::string(RESTO_CLI_PATH) + " " + args;
  int status = std::system(cmd.c_str());
  return status == -1 ? -1 : WEXITSTATUS(status);
}

}  // namespace

TEST(Acceptance, C01_StftRoundTrip) {
  Criterion c(1, "stft/istft round-trip rel L2 < 1e-6 on 100 random buffers");
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    double seconds = rng.uniform(0.05, 0.5);
    auto buffer = testsig::white_noise(seconds, 16000, 1000 + i,
                                       rng.uniform(0.05, 1.0));
    auto back = istft(stft(buffer));
    ASSERT_EQ(back.size(), buffer.size());
    ASSERT_LT(testsig::rel_l2_error(buffer.samples, back.samples), 1e-6) << i;
  }
}

TEST(Acceptance, C02_Loudness) {
  Criterion c(2, "997 Hz full-scale sine at -3.01 +- 0.1 LUFS; normalize "
                 "hits target +- 0.2 LUFS on 20 random signals");
  auto sine = testsig::sine(997.0, 5.0, 48000, 1.0);
  EXPECT_NEAR(measure_lufs(sine).integrated_lufs, -3.01, 0.1);

  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    int rate = i % 2 == 0 ? 48000 : 16000;
    AudioBuffer sig =
        i % 3 == 0
            ? testsig::white_noise(2.0, rate, 2000 + i, rng.uniform(0.02, 0.7))
            : testsig::speech_like(2.0, rate, 2000 + i);
    auto normalized = normalize_loudness(sig, -20.0);
    ASSERT_FALSE(normalized.skipped) << i;
    auto after = measure_lufs(normalized.audio);
    EXPECT_NEAR(after.integrated_lufs, -20.0, 0.2) << "signal " << i;
  }
}

TEST(Acceptance, C03_SnrMixer) {
  Criterion c(3, "remeasured SNR within 0.01 dB across {-5, 0, 10} dB");
  auto speech = testsig::speech_like(2.0, 16000, 31);
  auto noise = testsig::white_noise(3.0, 16000, 32);
  for (double target : {-5.0, 0.0, 10.0}) {
    auto mixed = mix_at_snr(speech, noise, target, 33);
    double es = energy(speech);
    double en = 0.0;
    for (size_t i = 0; i < mixed.size(); ++i) {
      double d = mixed.samples[i] - speech.samples[i];
      en += d * d;
    }
    EXPECT_NEAR(power_to_db(es / en), target, 0.01) << target;
  }
}

TEST(Acceptance, C04_RirT60) {
  Criterion c(4, "Schroeder T60 within 10% of request for {0.1, 0.3, 0.5} s");
  for (double t60 : {0.1, 0.3, 0.5}) {
    auto rir = synth_rir(t60, 1.5 * t60, 48000, 44);
    auto est = schroeder_t60(rir);
    ASSERT_TRUE(est.valid) << t60;
    EXPECT_NEAR(est.seconds, t60, 0.1 * t60) << t60;
  }
}

TEST(Acceptance, C05_ForwardProcess) {
  Criterion c(5, "var(z_t) = 1 +- 0.02 at t in {1, T/2, T} over 1e5 draws; "
                 "alpha_bar[1000] within 5% of 4.0e-5");
  auto schedule = make_schedule();
  EXPECT_NEAR(schedule.alphas_cumprod[1000], 4.0e-5, 0.05 * 4.0e-5);
  for (size_t t : {size_t{1}, size_t{500}, size_t{1000}}) {
    Rng rng(50 + t);
    std::vector<double> samples(100000);
    std::vector<double> z(1), eta(1);
    for (auto& s : samples) {
      z[0] = rng.normal();
      eta[0] = rng.normal();
      s = forward_diffuse(z, t, eta, schedule)[0];
    }
    EXPECT_NEAR(variance(samples), 1.0, 0.02) << "t=" << t;
  }
}

TEST(Acceptance, C06_GaussianWorldSampler) {
  Criterion c(6, "MMSE-denoiser DDPM reproduces N(3, 0.25): mean 3 +- 0.05, "
                 "var 0.25 +- 0.02; 50-step strided mean 3 +- 0.1");
  auto schedule = make_schedule();
  GaussianMmseDenoiser denoiser(3.0, 0.5, schedule);
  std::vector<double> cond(4, 0.0);

  std::vector<double> values;
  values.reserve(40000);
  for (int i = 0; i < 10000; ++i) {
    auto z = ddpm_sample(denoiser, cond, schedule, schedule.steps,
                         derive_seed(6, std::to_string(i)));
    values.insert(values.end(), z.begin(), z.end());
  }
  EXPECT_NEAR(mean(values), 3.0, 0.05);
  EXPECT_NEAR(variance(values), 0.25, 0.02);

  std::vector<double> strided;
  strided.reserve(16000);
  for (int i = 0; i < 2000; ++i) {
    auto z = ddpm_sample(denoiser, cond, schedule, 50,
                         derive_seed(65, std::to_string(i)));
    strided.insert(strided.end(), z.begin(), z.end());
  }
  EXPECT_NEAR(mean(strided), 3.0, 0.1);
}

TEST(Acceptance, C07_DenoiserFitting) {
  Criterion c(7, "fitted affine denoiser matches the Gaussian posterior "
                 "within 1e-2 (uninformative) and 2e-2 (informative)");
  auto schedule = make_schedule();

  {  // uninformative conditioning: optimum is gain sqrt(abar), no bias
    Rng rng(70);
    std::vector<std::pair<std::vector<double>, std::vector<double>>> pairs;
    pairs.reserve(100000);
    for (int i = 0; i < 100000; ++i) {
      std::vector<double> target(4), cond(4, 0.0);
      for (auto& v : target) v = rng.normal();
      pairs.emplace_back(std::move(target), std::move(cond));
    }
    auto fitted = fit_linear_denoiser(pairs, schedule, 1e-8, 71);
    for (const auto& bucket : fitted.buckets()) {
      double expect = 0.0;
      for (size_t t = bucket.t_lo; t <= bucket.t_hi; ++t)
        expect += std::sqrt(schedule.alphas_cumprod[t]);
      expect /= static_cast<double>(bucket.t_hi - bucket.t_lo + 1);
      EXPECT_NEAR(bucket.a, expect, 1e-2) << "bucket " << bucket.t_lo;
      EXPECT_NEAR(bucket.b, 0.0, 1e-2);
      EXPECT_NEAR(bucket.c, 0.0, 1e-2);
    }
  }

  {  // informative conditioning: joint-Gaussian conditional mean
    const double sigma = 1.0, tau = 0.5;
    Rng rng(72);
    std::vector<std::pair<std::vector<double>, std::vector<double>>> pairs;
    pairs.reserve(100000);
    for (int i = 0; i < 100000; ++i) {
      std::vector<double> target(4), cond(4);
      for (size_t j = 0; j < 4; ++j) {
        target[j] = sigma * rng.normal();
        cond[j] = target[j] + tau * rng.normal();
      }
      pairs.emplace_back(std::move(target), std::move(cond));
    }
    auto fitted = fit_linear_denoiser(pairs, schedule, 1e-8, 73);
    for (const auto& bucket : fitted.buckets()) {
      double var_zt = 0.0, cov = 0.0;
      auto width = static_cast<double>(bucket.t_hi - bucket.t_lo + 1);
      for (size_t t = bucket.t_lo; t <= bucket.t_hi; ++t) {
        double ab = schedule.alphas_cumprod[t];
        var_zt += ab * sigma * sigma + (1.0 - ab);
        cov += std::sqrt(ab) * sigma * sigma;
      }
      var_zt /= width;
      cov /= width;
      double var_z0 = sigma * sigma + tau * tau;
      double det = var_zt * var_z0 - cov * cov;
      double expect_a = (cov * var_z0 - sigma * sigma * cov) / det;
      double expect_b = (var_zt * sigma * sigma - cov * cov) / det;
      EXPECT_NEAR(bucket.a, expect_a, 2e-2) << "bucket " << bucket.t_lo;
      EXPECT_NEAR(bucket.b, expect_b, 2e-2) << "bucket " << bucket.t_lo;
    }
  }
}

TEST(Acceptance, C08_CodecRoundTrip) {
  Criterion c(8, "patch codec: exact round trip with all coefficients; "
                 "error^2 equals truncated energy at kept = 64");
  Rng rng(80);
  MelSpectrogram mel;
  mel.frames = 32;
  mel.n_mels = 128;
  mel.db_scale = true;
  mel.sample_rate = 48000;
  mel.source_samples = 31 * 512;
  mel.values.resize(32 * 128);
  for (auto& v : mel.values) v = rng.uniform(-95.0, 15.0);

  CodecConfig all;
  all.kept = 256;
  auto z_all = encode(mel, all);
  auto back = decode(z_all);
  for (size_t i = 0; i < mel.values.size(); ++i)
    ASSERT_NEAR(back.values[i], mel.values[i], 1e-6);

  auto z_kept = encode(mel);  // kept = 64
  double full_e = 0.0, kept_e = 0.0;
  for (double v : z_all.coeffs) full_e += v * v;
  for (double v : z_kept.coeffs) kept_e += v * v;
  auto lossy = decode(z_kept);
  const double span = z_kept.config.db_ceil - z_kept.config.db_floor;
  double err = 0.0;
  for (size_t i = 0; i < mel.values.size(); ++i) {
    double d = (lossy.values[i] - mel.values[i]) * 2.0 / span;
    err += d * d;
  }
  EXPECT_NEAR(err, full_e - kept_e, 1e-6 * std::max(1.0, full_e));
}

TEST(Acceptance, C09_RecoveryEfficacy) {
  Criterion c(9, "spectral-gate recovery gains >= 5 dB SI-SNR on every item "
                 "of a 10-item corpus at 0 dB SNR");
  SpectralGateEnhancer gate;
  for (int item = 0; item < 10; ++item) {
    auto clean = testsig::speech_like(3.0, 16000, 900 + item);
    auto noise = testsig::white_noise(3.0, 16000, 950 + item);
    auto noisy = mix_at_snr(clean, noise, 0.0, 990 + static_cast<uint64_t>(item));
    auto recovered = recover(noisy, gate).audio;
    auto reference = clean;
    reference.samples.resize(recovered.size(), 0.0);
    double before = si_snr(reference, noisy);
    double after = si_snr(reference, recovered);
    EXPECT_GE(after - before, 5.0) << "item " << item;
  }
}

TEST(Acceptance, C10_EndToEndShape) {
  Criterion c(10, "pipeline on 3 items: recovered at 16 kHz, restored at "
                  "48 kHz, durations within one hop");
  auto dir = fresh_dir("c10");
  auto corpus = testsig::build_corpus(dir, 3, 2.0, 48000, 100);
  auto cfg_path = testsig::write_config(
      dir, "manifest = " + corpus.manifest_path + "\nout_dir = " +
               (dir / "runs").string() + "\njobs = 2\n");
  ASSERT_EQ(run_cli("--config " + cfg_path + " pipeline > /dev/null"), 0);

  fs::path run_dir;
  for (const auto& entry : fs::directory_iterator(dir / "runs"))
    run_dir = entry.path();
  ASSERT_FALSE(run_dir.empty());

  for (int i = 0; i < 3; ++i) {
    auto id = "speech_" + std::to_string(i);
    auto recovered = load_wav((run_dir / (id + "_recovered.wav")).string());
    auto restored = load_wav((run_dir / (id + "_restored.wav")).string());
    EXPECT_EQ(recovered.sample_rate, 16000) << id;
    EXPECT_EQ(restored.sample_rate, 48000) << id;
    EXPECT_NEAR(recovered.duration_s(), 2.0, 128.0 / 16000.0 + 1e-4) << id;
    EXPECT_NEAR(restored.duration_s(), 2.0, 512.0 / 48000.0 + 1e-4) << id;
  }
}

TEST(Acceptance, C11_IterativeRefinement) {
  Criterion c(11, "refine --iterations 5 emits 5 rows per item; identity "
                  "stage rows identical");
  auto dir = fresh_dir("c11");
  auto corpus = testsig::build_corpus(dir, 3, 2.0, 16000, 110);
  for (int i = 0; i < 3; ++i) {
    auto out_dir = (dir / ("refine_" + std::to_string(i))).string();
    ASSERT_EQ(run_cli("refine --in " + corpus.speech_paths[static_cast<size_t>(i)] +
                      " --out " + out_dir +
                      " --iterations 5 --stage identity > /dev/null"),
              0);
    auto rows = metrics_from_csv(slurp(fs::path(out_dir) / "metrics.csv"));
    ASSERT_EQ(rows.size(), 5u) << "item " << i;
    for (const auto& row : rows) {
      EXPECT_NEAR(row.estoi, rows[0].estoi, 1e-12);
      EXPECT_EQ(row.si_snr_db, rows[0].si_snr_db);
      EXPECT_NEAR(row.ssim_48k, rows[0].ssim_48k, 1e-12);
    }
  }
}

TEST(Acceptance, C12_MetricsSanity) {
  Criterion c(12, "estoi(x,x)=1, ssim(x,x)=1, si_snr scale-invariance exact, "
                  "estoi monotone over the SNR sweep");
  auto x = testsig::speech_like(3.0, 16000, 120);
  EXPECT_NEAR(estoi(x, x), 1.0, 1e-6);
  for (int rate : {16000, 24000, 44100, 48000})
    EXPECT_DOUBLE_EQ(spectrogram_ssim(x, x, rate), 1.0) << rate;

  auto noise = testsig::white_noise(3.0, 16000, 121);
  auto noisy = mix_at_snr(x, noise, 2.0, 122);
  double base = si_snr(x, noisy);
  EXPECT_EQ(si_snr(x, scaled(noisy, 2.0)), base);
  EXPECT_EQ(si_snr(x, scaled(noisy, 0.5)), base);

  double prev = -1.0;
  for (double snr : {-5.0, 0.0, 10.0}) {
    double score = estoi(x, mix_at_snr(x, noise, snr, 123));
    EXPECT_GT(score, prev) << snr;
    prev = score;
  }
}

TEST(Acceptance, C13_Determinism) {
  Criterion c(13, "two runs with identical config and master seed produce "
                  "bit-identical WAV and CSV outputs");
  auto dir = fresh_dir("c13");
  auto corpus = testsig::build_corpus(dir, 3, 1.5, 48000, 130);
  auto cfg_path = testsig::write_config(
      dir, "manifest = " + corpus.manifest_path + "\nout_dir = " +
               (dir / "runs").string() + "\njobs = 2\nmaster_seed = 7\n");

  ASSERT_EQ(run_cli("--config " + cfg_path + " pipeline > /dev/null"), 0);
  fs::path run_dir;
  for (const auto& entry : fs::directory_iterator(dir / "runs"))
    run_dir = entry.path();
  ASSERT_FALSE(run_dir.empty());

  // stash the first run's artifacts, then rerun from scratch
  auto stash = dir / "first_run";
  fs::create_directories(stash);
  std::map<std::string, std::string> first;
  for (const auto& entry : fs::directory_iterator(run_dir)) {
    auto name = entry.path().filename().string();
    if (name.ends_with(".wav") || name == "metrics.csv")
      first[name] = slurp(entry.path());
  }
  ASSERT_EQ(first.size(), 3u * 3u + 1u);  // 3 wavs per item + metrics.csv
  fs::remove_all(run_dir);

  ASSERT_EQ(run_cli("--config " + cfg_path + " pipeline > /dev/null"), 0);
  for (const auto& [name, bytes] : first) {
    auto second = slurp(run_dir / name);
    EXPECT_EQ(second.size(), bytes.size()) << name;
    EXPECT_TRUE(second == bytes) << "bytes differ: " << name;
  }
}
