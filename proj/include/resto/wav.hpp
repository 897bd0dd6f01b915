#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "resto/audio.hpp"
#include "resto/common.hpp"

namespace resto {

enum class WavDepth { pcm16, pcm24, float32 };

struct WavSaveInfo {
  size_t clipped = 0;  // samples saturated on write
};

namespace detail {

inline uint32_t read_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

inline uint16_t read_u16(const unsigned char* p) {
  return static_cast<uint16_t>(p[0] | (p[1] << 8));
}

inline void put_u32(std::string& s, uint32_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_u16(std::string& s, uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace detail

/// Reads a RIFF/WAVE file (PCM 16/24-bit or IEEE float-32, any channel
/// count). Multichannel audio is averaged to mono; integer PCM is scaled by
/// 1/2^(bits-1) so the most negative code maps to -1.0 exactly.
inline AudioBuffer load_wav(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "cannot open wav file: " + path);
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(f)),
                                 std::istreambuf_iterator<char>());
  require(raw.size() >= 44, "malformed RIFF header (file too short): " + path);
  require(std::memcmp(raw.data(), "RIFF", 4) == 0 &&
              std::memcmp(raw.data() + 8, "WAVE", 4) == 0,
          "malformed RIFF header: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  size_t data_off = 0, data_len = 0;
  bool have_fmt = false;

  size_t pos = 12;
  while (pos + 8 <= raw.size()) {
    const unsigned char* hdr = raw.data() + pos;
    uint32_t chunk_len = detail::read_u32(hdr + 4);
    size_t body = pos + 8;
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      require(chunk_len >= 16 && body + 16 <= raw.size(),
              "malformed fmt chunk: " + path);
      const unsigned char* p = raw.data() + body;
      format = detail::read_u16(p);
      channels = detail::read_u16(p + 2);
      rate = detail::read_u32(p + 4);
      bits = detail::read_u16(p + 14);
      if (format == 0xfffe && chunk_len >= 40 && body + 40 <= raw.size()) {
        // WAVE_FORMAT_EXTENSIBLE: first two bytes of the SubFormat GUID
        format = detail::read_u16(p + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      data_off = body;
      data_len = std::min<size_t>(chunk_len, raw.size() - body);
    }
    pos = body + chunk_len + (chunk_len & 1);
  }

  require(have_fmt, "missing fmt chunk: " + path);
  require(channels > 0 && rate > 0, "malformed fmt chunk: " + path);
  bool is_float = format == 3;
  require(format == 1 || is_float, "unsupported codec in wav file: " + path);
  require((is_float && bits == 32) ||
              (!is_float && (bits == 16 || bits == 24)),
          "unsupported sample format (" + std::to_string(bits) +
              " bit): " + path);
  require(data_off != 0 && data_len > 0, "zero-length data chunk: " + path);

  size_t bytes_per = bits / 8;
  size_t frames = data_len / (bytes_per * channels);
  require(frames > 0, "zero-length data chunk: " + path);

  AudioBuffer out;
  out.sample_rate = static_cast<int>(rate);
  out.samples.resize(frames);
  const unsigned char* d = raw.data() + data_off;
  const double inv_ch = 1.0 / channels;
  for (size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (size_t c = 0; c < channels; ++c) {
      const unsigned char* p = d + (i * channels + c) * bytes_per;
      if (is_float) {
        float v;
        uint32_t u = detail::read_u32(p);
        std::memcpy(&v, &u, 4);
        acc += v;
      } else if (bits == 16) {
        auto v = static_cast<int16_t>(detail::read_u16(p));
        acc += v / 32768.0;
      } else {  // 24-bit
        int32_t v = static_cast<int32_t>(p[0]) | (static_cast<int32_t>(p[1]) << 8) |
                    (static_cast<int32_t>(p[2]) << 16);
        if (v & 0x800000) v |= ~0xffffff;
        acc += v / 8388608.0;
      }
    }
    out.samples[i] = acc * inv_ch;
  }
  return out;
}

/// Writes a mono RIFF/WAVE file with the canonical 44-byte header.
/// Values outside [-1, 1] saturate; the count is reported, not silently
/// dropped.
inline WavSaveInfo save_wav(const AudioBuffer& buffer, const std::string& path,
                            WavDepth depth = WavDepth::float32) {
  require(buffer.sample_rate > 0, "save_wav: buffer has no sample rate");
  WavSaveInfo info;
  const size_t n = buffer.size();
  const uint16_t bits = depth == WavDepth::pcm16 ? 16
                        : depth == WavDepth::pcm24 ? 24
                                                   : 32;
  const uint16_t fmt = depth == WavDepth::float32 ? 3 : 1;
  const uint32_t byte_count = static_cast<uint32_t>(n * bits / 8);

  std::string out;
  out.reserve(44 + byte_count);
  out.append("RIFF");
  detail::put_u32(out, 36 + byte_count + (byte_count & 1));
  out.append("WAVE");
  out.append("fmt ");
  detail::put_u32(out, 16);
  detail::put_u16(out, fmt);
  detail::put_u16(out, 1);  // mono
  detail::put_u32(out, static_cast<uint32_t>(buffer.sample_rate));
  detail::put_u32(out, static_cast<uint32_t>(buffer.sample_rate) * bits / 8);
  detail::put_u16(out, bits / 8);
  detail::put_u16(out, bits);
  out.append("data");
  detail::put_u32(out, byte_count);

  for (double x : buffer.samples) {
    double v = x;
    if (depth == WavDepth::float32) {
      auto f = static_cast<float>(v);
      uint32_t u;
      std::memcpy(&u, &f, 4);
      detail::put_u32(out, u);
      continue;
    }
    if (v > 1.0 || v < -1.0) {
      ++info.clipped;
      v = v > 1.0 ? 1.0 : -1.0;
    }
    if (depth == WavDepth::pcm16) {
      auto q = static_cast<long>(std::lround(v * 32768.0));
      if (q > 32767) {
        if (v < 1.0) ++info.clipped;  // rounding pushed it over
        q = 32767;
      }
      if (q < -32768) q = -32768;
      detail::put_u16(out, static_cast<uint16_t>(static_cast<int16_t>(q)));
    } else {  // pcm24
      auto q = static_cast<long>(std::lround(v * 8388608.0));
      if (q > 8388607) {
        if (v < 1.0) ++info.clipped;
        q = 8388607;
      }
      if (q < -8388608) q = -8388608;
      auto u = static_cast<uint32_t>(static_cast<int32_t>(q)) & 0xffffff;
      out.push_back(static_cast<char>(u & 0xff));
      out.push_back(static_cast<char>((u >> 8) & 0xff));
      out.push_back(static_cast<char>((u >> 16) & 0xff));
    }
  }
  if (byte_count & 1) out.push_back('\0');  // RIFF chunk padding

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  require(f.good(), "cannot write wav file: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  require(f.good(), "short write to wav file: " + path);
  return info;
}

/// Probe duration and rate without decoding samples.
struct WavInfo {
  int sample_rate = 0;
  double duration_s = 0.0;
};

inline WavInfo probe_wav(const std::string& path) {
  AudioBuffer b = load_wav(path);  // files are small enough at desk scale
  return {b.sample_rate, b.duration_s()};
}

}  // namespace resto
