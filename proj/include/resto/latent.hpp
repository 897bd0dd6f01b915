#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "resto/common.hpp"
#include "resto/mel.hpp"

namespace resto {

/// Patch-codec parameters: dB normalization window, patch size, and how
/// many zig-zag DCT coefficients survive per patch.
struct CodecConfig {
  size_t patch = 16;
  size_t kept = 64;
  double db_floor = -100.0;
  double db_ceil = 20.0;

  bool operator==(const CodecConfig&) const = default;

  uint64_t hash() const {
    uint64_t h = fnv1a(uint64_t(patch));
    h = fnv1a(uint64_t(kept), h);
    h = fnv1a(std::string_view("codec"), h);
    uint64_t bits;
    std::memcpy(&bits, &db_floor, 8);
    h = fnv1a(bits, h);
    std::memcpy(&bits, &db_ceil, 8);
    return fnv1a(bits, h);
  }
};

/// Truncated patch-DCT coefficients plus everything needed to rebuild the
/// mel surface they came from: grid geometry, kept-coefficient order, the
/// normalization window, and the source mel/audio geometry.
struct Latent {
  std::vector<double> coeffs;  // patch_count x kept, row-major
  CodecConfig config;
  size_t grid_rows = 0;  // patches along the frame axis
  size_t grid_cols = 0;  // patches along the mel axis
  size_t orig_frames = 0;
  size_t orig_mels = 0;
  std::vector<uint16_t> kept_index;  // zig-zag positions inside a patch

  MelConfig mel_config;
  int sample_rate = 0;
  size_t source_samples = 0;

  size_t patch_count() const { return grid_rows * grid_cols; }
  size_t dim() const { return coeffs.size(); }
};

namespace detail {

/// Zig-zag scan order for an n x n block (standard diagonal walk).
inline std::vector<uint16_t> zigzag_order(size_t n) {
  std::vector<uint16_t> order;
  order.reserve(n * n);
  for (size_t s = 0; s < 2 * n - 1; ++s) {
    if (s % 2 == 0) {
      size_t r = std::min(s, n - 1);
      size_t c = s - r;
      while (c < n && r != static_cast<size_t>(-1)) {
        order.push_back(static_cast<uint16_t>(r * n + c));
        if (r == 0) break;
        --r;
        ++c;
      }
    } else {
      size_t c = std::min(s, n - 1);
      size_t r = s - c;
      while (r < n && c != static_cast<size_t>(-1)) {
        order.push_back(static_cast<uint16_t>(r * n + c));
        if (c == 0) break;
        --c;
        ++r;
      }
    }
  }
  return order;
}

/// Orthonormal DCT-II basis for size n (rows are basis vectors).
inline std::vector<double> dct_basis(size_t n) {
  std::vector<double> basis(n * n);
  for (size_t u = 0; u < n; ++u) {
    double scale = std::sqrt((u == 0 ? 1.0 : 2.0) / static_cast<double>(n));
    for (size_t i = 0; i < n; ++i)
      basis[u * n + i] =
          scale * std::cos(kPi * (2.0 * static_cast<double>(i) + 1.0) *
                           static_cast<double>(u) /
                           (2.0 * static_cast<double>(n)));
  }
  return basis;
}

/// 2-D orthonormal DCT of an n x n patch via separable 1-D passes.
inline void dct2(const std::vector<double>& basis, size_t n,
                 const double* in, double* out, bool inverse) {
  std::vector<double> tmp(n * n, 0.0);
  // rows
  for (size_t r = 0; r < n; ++r)
    for (size_t u = 0; u < n; ++u) {
      double acc = 0.0;
      for (size_t i = 0; i < n; ++i)
        acc += (inverse ? basis[i * n + u] : basis[u * n + i]) * in[r * n + i];
      tmp[r * n + u] = acc;
    }
  // columns
  for (size_t c = 0; c < n; ++c)
    for (size_t u = 0; u < n; ++u) {
      double acc = 0.0;
      for (size_t i = 0; i < n; ++i)
        acc += (inverse ? basis[i * n + u] : basis[u * n + i]) * tmp[i * n + c];
      out[u * n + c] = acc;
    }
}

}  // namespace detail

/// Encode a dB mel-spectrogram into truncated patch-DCT latents: clamp to
/// the normalization window, map to [-1, 1], pad to patch multiples by edge
/// replication, per-patch orthonormal DCT, keep the first `kept` zig-zag
/// coefficients.
inline Latent encode(const MelSpectrogram& mel, const CodecConfig& cfg = {}) {
  require(mel.db_scale, "encode: expected dB-scale mel");
  require(mel.frames >= 1 && mel.n_mels >= 1, "encode: empty mel");
  require(cfg.kept >= 1 && cfg.kept <= cfg.patch * cfg.patch,
          "encode: kept out of range");

  const size_t p = cfg.patch;
  Latent z;
  z.config = cfg;
  z.orig_frames = mel.frames;
  z.orig_mels = mel.n_mels;
  z.grid_rows = (mel.frames + p - 1) / p;
  z.grid_cols = (mel.n_mels + p - 1) / p;
  auto full = detail::zigzag_order(p);
  z.kept_index.assign(full.begin(), full.begin() + static_cast<ptrdiff_t>(cfg.kept));
  z.mel_config = mel.config;
  z.sample_rate = mel.sample_rate;
  z.source_samples = mel.source_samples;

  const size_t rows = z.grid_rows * p;
  const size_t cols = z.grid_cols * p;
  const double span = cfg.db_ceil - cfg.db_floor;
  std::vector<double> norm(rows * cols);
  for (size_t r = 0; r < rows; ++r) {
    size_t mr = std::min(r, mel.frames - 1);  // edge replication
    for (size_t c = 0; c < cols; ++c) {
      size_t mc = std::min(c, mel.n_mels - 1);
      double v = std::clamp(mel.at(mr, mc), cfg.db_floor, cfg.db_ceil);
      norm[r * cols + c] = 2.0 * (v - cfg.db_floor) / span - 1.0;
    }
  }

  const auto basis = detail::dct_basis(p);
  z.coeffs.resize(z.patch_count() * cfg.kept);
  std::vector<double> patch(p * p), freq(p * p);
  for (size_t gr = 0; gr < z.grid_rows; ++gr) {
    for (size_t gc = 0; gc < z.grid_cols; ++gc) {
      for (size_t i = 0; i < p; ++i)
        for (size_t j = 0; j < p; ++j)
          patch[i * p + j] = norm[(gr * p + i) * cols + gc * p + j];
      detail::dct2(basis, p, patch.data(), freq.data(), false);
      double* dst = &z.coeffs[(gr * z.grid_cols + gc) * cfg.kept];
      for (size_t j = 0; j < cfg.kept; ++j) dst[j] = freq[z.kept_index[j]];
    }
  }
  return z;
}

/// Decode latents back to a dB mel-spectrogram: zero-fill the dropped
/// coefficients, inverse DCT per patch, crop the padding, undo the affine
/// normalization.
inline MelSpectrogram decode(const Latent& z) {
  const size_t p = z.config.patch;
  require(p >= 1 && z.kept_index.size() == z.config.kept,
          "decode: corrupted geometry");
  require(z.coeffs.size() == z.patch_count() * z.config.kept,
          "decode: corrupted geometry");
  require(z.orig_frames >= 1 && z.orig_mels >= 1 &&
              z.grid_rows * p >= z.orig_frames && z.grid_cols * p >= z.orig_mels,
          "decode: corrupted geometry");
  for (uint16_t idx : z.kept_index)
    require(idx < p * p, "decode: corrupted geometry");

  const size_t rows = z.grid_rows * p;
  const size_t cols = z.grid_cols * p;
  std::vector<double> norm(rows * cols, 0.0);
  const auto basis = detail::dct_basis(p);
  std::vector<double> patch(p * p), freq(p * p);
  for (size_t gr = 0; gr < z.grid_rows; ++gr) {
    for (size_t gc = 0; gc < z.grid_cols; ++gc) {
      std::fill(freq.begin(), freq.end(), 0.0);
      const double* src = &z.coeffs[(gr * z.grid_cols + gc) * z.config.kept];
      for (size_t j = 0; j < z.config.kept; ++j) freq[z.kept_index[j]] = src[j];
      detail::dct2(basis, p, freq.data(), patch.data(), true);
      for (size_t i = 0; i < p; ++i)
        for (size_t j = 0; j < p; ++j)
          norm[(gr * p + i) * cols + gc * p + j] = patch[i * p + j];
    }
  }

  MelSpectrogram mel;
  mel.frames = z.orig_frames;
  mel.n_mels = z.orig_mels;
  mel.db_scale = true;
  mel.config = z.mel_config;
  mel.sample_rate = z.sample_rate;
  mel.source_samples = z.source_samples;
  mel.values.resize(mel.frames * mel.n_mels);
  const double span = z.config.db_ceil - z.config.db_floor;
  for (size_t r = 0; r < mel.frames; ++r)
    for (size_t c = 0; c < mel.n_mels; ++c)
      mel.at(r, c) =
          z.config.db_floor + 0.5 * (norm[r * cols + c] + 1.0) * span;
  return mel;
}

// ------------------------------------------------------- Serialization

/// Flat binary container: magic, version, config hash, geometry, kept
/// indices, then little-endian float-32 coefficients.
inline void save_latent(const Latent& z, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), "save_latent: cannot write " + path);
  auto put_u32 = [&f](uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    f.write(reinterpret_cast<const char*>(b), 4);
  };
  auto put_u64 = [&put_u32](uint64_t v) {
    put_u32(static_cast<uint32_t>(v & 0xffffffffULL));
    put_u32(static_cast<uint32_t>(v >> 32));
  };
  auto put_f64 = [&put_u64](double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(bits);
  };

  f.write("RLT1", 4);
  put_u32(1);  // version
  put_u64(z.config.hash());
  put_u32(static_cast<uint32_t>(z.config.patch));
  put_u32(static_cast<uint32_t>(z.config.kept));
  put_f64(z.config.db_floor);
  put_f64(z.config.db_ceil);
  put_u32(static_cast<uint32_t>(z.grid_rows));
  put_u32(static_cast<uint32_t>(z.grid_cols));
  put_u32(static_cast<uint32_t>(z.orig_frames));
  put_u32(static_cast<uint32_t>(z.orig_mels));
  put_u32(static_cast<uint32_t>(z.mel_config.fft_size));
  put_u32(static_cast<uint32_t>(z.mel_config.hop));
  put_u32(static_cast<uint32_t>(z.mel_config.n_mels));
  put_f64(z.mel_config.f_min);
  put_f64(z.mel_config.f_max);
  put_u32(static_cast<uint32_t>(z.sample_rate));
  put_u64(z.source_samples);
  put_u32(static_cast<uint32_t>(z.kept_index.size()));
  for (uint16_t idx : z.kept_index) {
    unsigned char b[2] = {static_cast<unsigned char>(idx & 0xff),
                          static_cast<unsigned char>(idx >> 8)};
    f.write(reinterpret_cast<const char*>(b), 2);
  }
  put_u64(z.coeffs.size());
  for (double v : z.coeffs) {
    auto fl = static_cast<float>(v);
    uint32_t bits;
    std::memcpy(&bits, &fl, 4);
    put_u32(bits);
  }
  require(f.good(), "save_latent: short write to " + path);
}

inline Latent load_latent(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "load_latent: cannot open " + path);
  auto get_u32 = [&f, &path]() {
    unsigned char b[4];
    f.read(reinterpret_cast<char*>(b), 4);
    require(f.good(), "load_latent: truncated file " + path);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) |
           (static_cast<uint32_t>(b[3]) << 24);
  };
  auto get_u64 = [&get_u32]() {
    uint64_t lo = get_u32();
    uint64_t hi = get_u32();
    return lo | (hi << 32);
  };
  auto get_f64 = [&get_u64]() {
    uint64_t bits = get_u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  };

  char magic[4];
  f.read(magic, 4);
  require(f.good() && std::memcmp(magic, "RLT1", 4) == 0,
          "load_latent: bad magic in " + path);
  require(get_u32() == 1, "load_latent: unsupported version in " + path);
  uint64_t stored_hash = get_u64();

  Latent z;
  z.config.patch = get_u32();
  z.config.kept = get_u32();
  z.config.db_floor = get_f64();
  z.config.db_ceil = get_f64();
  z.grid_rows = get_u32();
  z.grid_cols = get_u32();
  z.orig_frames = get_u32();
  z.orig_mels = get_u32();
  z.mel_config.fft_size = get_u32();
  z.mel_config.hop = get_u32();
  z.mel_config.n_mels = get_u32();
  z.mel_config.f_min = get_f64();
  z.mel_config.f_max = get_f64();
  z.sample_rate = static_cast<int>(get_u32());
  z.source_samples = get_u64();
  require(z.config.hash() == stored_hash,
          "load_latent: config hash mismatch in " + path);

  uint32_t index_count = get_u32();
  require(index_count == z.config.kept, "load_latent: corrupted geometry");
  z.kept_index.resize(index_count);
  for (auto& idx : z.kept_index) {
    unsigned char b[2];
    f.read(reinterpret_cast<char*>(b), 2);
    require(f.good(), "load_latent: truncated file " + path);
    idx = static_cast<uint16_t>(b[0] | (b[1] << 8));
  }
  uint64_t count = get_u64();
  require(count == z.patch_count() * z.config.kept,
          "load_latent: corrupted geometry");
  z.coeffs.resize(count);
  for (auto& v : z.coeffs) {
    uint32_t bits = get_u32();
    float fl;
    std::memcpy(&fl, &bits, 4);
    v = fl;
  }
  return z;
}

}  // namespace resto
