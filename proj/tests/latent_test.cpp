#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "resto/latent.hpp"
#include "support/test_signals.hpp"

using namespace resto;

namespace {

// Synthetic dB mel surface; frames deliberately patch-aligned by default so
// the projection algebra is exercised without padding effects.
MelSpectrogram make_mel(size_t frames, size_t mels,
                        const std::function<double(size_t, size_t)>& fn) {
  MelSpectrogram mel;
  mel.frames = frames;
  mel.n_mels = mels;
  mel.db_scale = true;
  mel.sample_rate = 48000;
  mel.source_samples = (frames - 1) * mel.config.hop;
  mel.values.resize(frames * mels);
  for (size_t f = 0; f < frames; ++f)
    for (size_t m = 0; m < mels; ++m) mel.at(f, m) = fn(f, m);
  return mel;
}

double total_energy(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace

TEST(Zigzag, FirstEntriesAndPermutation) {
  auto order = detail::zigzag_order(4);
  // standard walk: 0, then right, then down the diagonal
  std::vector<uint16_t> expect = {0, 1, 4, 8, 5, 2, 3, 6, 9, 12, 13, 10, 7, 11, 14, 15};
  ASSERT_EQ(order.size(), 16u);
  for (size_t i = 0; i < 16; ++i) EXPECT_EQ(order[i], expect[i]) << i;
  auto big = detail::zigzag_order(16);
  std::vector<bool> seen(256, false);
  for (auto idx : big) {
    ASSERT_LT(idx, 256);
    ASSERT_FALSE(seen[idx]);
    seen[idx] = true;
  }
}

TEST(Latent, ConstantMelHasOnlyDc) {
  auto mel = make_mel(32, 128, [](size_t, size_t) { return -40.0; });
  auto z = encode(mel);
  EXPECT_EQ(z.grid_rows, 2u);
  EXPECT_EQ(z.grid_cols, 8u);
  for (size_t patch = 0; patch < z.patch_count(); ++patch)
    for (size_t j = 1; j < z.config.kept; ++j)
      ASSERT_NEAR(z.coeffs[patch * z.config.kept + j], 0.0, 1e-12);
}

TEST(Latent, FullCoefficientsRoundTripExactly) {
  Rng rng(5);
  auto mel = make_mel(32, 128, [&](size_t, size_t) {
    return rng.uniform(-90.0, 10.0);
  });
  CodecConfig cfg;
  cfg.kept = 256;
  auto z = encode(mel, cfg);
  auto back = decode(z);
  ASSERT_EQ(back.values.size(), mel.values.size());
  for (size_t i = 0; i < mel.values.size(); ++i)
    ASSERT_NEAR(back.values[i], mel.values[i], 1e-6);
}

TEST(Latent, ParsevalReconstructionError) {
  Rng rng(6);
  auto mel = make_mel(16, 128, [&](size_t, size_t) {
    return rng.uniform(-90.0, 10.0);
  });
  CodecConfig all;
  all.kept = 256;
  auto z_all = encode(mel, all);
  auto z_64 = encode(mel);

  // energy dropped by truncation, in normalized units
  double full_e = total_energy(z_all.coeffs);
  double kept_e = total_energy(z_64.coeffs);
  EXPECT_LE(kept_e, full_e + 1e-9);

  // reconstruction error^2 equals the truncated energy (orthonormality)
  auto back = decode(z_64);
  const double span = z_64.config.db_ceil - z_64.config.db_floor;
  double err_norm = 0.0;
  for (size_t i = 0; i < mel.values.size(); ++i) {
    double d = (back.values[i] - std::clamp(mel.values[i], -100.0, 20.0)) *
               2.0 / span;
    err_norm += d * d;
  }
  EXPECT_NEAR(err_norm, full_e - kept_e, 1e-6 * std::max(1.0, full_e));
}

TEST(Latent, ZeroLatentDecodesToMidRange) {
  auto mel = make_mel(16, 128, [](size_t, size_t) { return -40.0; });
  auto z = encode(mel);
  std::fill(z.coeffs.begin(), z.coeffs.end(), 0.0);
  auto back = decode(z);
  for (double v : back.values) ASSERT_NEAR(v, -40.0, 1e-9);  // (floor+ceil)/2
}

TEST(Latent, ProjectionIsIdempotent) {
  Rng rng(7);
  auto mel = make_mel(48, 128, [&](size_t f, size_t m) {
    // band-limited surface plus a little noise
    return -50.0 + 30.0 * std::sin(0.1 * static_cast<double>(f)) *
                       std::cos(0.05 * static_cast<double>(m)) +
           rng.uniform(-2.0, 2.0);
  });
  auto once = decode(encode(mel));
  auto twice = decode(encode(once));
  for (size_t i = 0; i < once.values.size(); ++i)
    ASSERT_NEAR(twice.values[i], once.values[i], 1e-9);
}

TEST(Latent, SmoothSurfaceReconstructsWell) {
  auto mel = make_mel(48, 128, [](size_t f, size_t m) {
    return -55.0 + 30.0 * std::sin(0.08 * static_cast<double>(f)) +
           20.0 * std::cos(0.06 * static_cast<double>(m));
  });
  auto back = decode(encode(mel));
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < mel.values.size(); ++i) {
    double ref = mel.values[i] + 40.0;  // distance from the affine midpoint
    double err = back.values[i] - mel.values[i];
    num += err * err;
    den += ref * ref;
  }
  EXPECT_LT(std::sqrt(num / den), 0.2);
}

TEST(Latent, DimensionalityReduction) {
  auto mel = make_mel(32, 128, [](size_t, size_t) { return -40.0; });
  auto z = encode(mel);
  EXPECT_EQ(z.dim(), z.patch_count() * 64);
  EXPECT_EQ(z.dim() * 4, z.patch_count() * 256);  // 4x reduction
}

TEST(Latent, PaddingHandlesUnalignedFrames) {
  auto mel = make_mel(37, 128, [](size_t f, size_t m) {
    return -60.0 + 0.3 * static_cast<double>(f) + 0.1 * static_cast<double>(m);
  });
  auto z = encode(mel);
  EXPECT_EQ(z.grid_rows, 3u);
  auto back = decode(z);
  EXPECT_EQ(back.frames, 37u);
  EXPECT_EQ(back.n_mels, 128u);
}

TEST(Latent, EncodeRejectsLinearScale) {
  MelSpectrogram mel;
  mel.frames = 4;
  mel.n_mels = 4;
  mel.db_scale = false;
  mel.values.assign(16, 0.5);
  EXPECT_THROW(encode(mel), Error);
}

TEST(Latent, SerializationRoundTrip) {
  Rng rng(9);
  auto mel = make_mel(32, 128, [&](size_t, size_t) {
    return rng.uniform(-90.0, 10.0);
  });
  auto z = encode(mel);
  auto dir = std::filesystem::temp_directory_path() / "resto_latent_test";
  std::filesystem::create_directories(dir);
  auto path = (dir / "z.rlt").string();
  save_latent(z, path);
  auto loaded = load_latent(path);
  EXPECT_EQ(loaded.grid_rows, z.grid_rows);
  EXPECT_EQ(loaded.grid_cols, z.grid_cols);
  EXPECT_EQ(loaded.kept_index, z.kept_index);
  ASSERT_EQ(loaded.coeffs.size(), z.coeffs.size());
  for (size_t i = 0; i < z.coeffs.size(); ++i)
    ASSERT_NEAR(loaded.coeffs[i], z.coeffs[i], 1e-6);  // float32 storage

  // corrupt the magic and expect a load failure
  {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(0);
    f.write("XXXX", 4);
  }
  EXPECT_THROW(load_latent(path), Error);
}
