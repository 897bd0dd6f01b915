#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace resto {

/// Error type thrown for precondition violations and I/O failures.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline void require(bool cond, const std::string& msg) {
  if (!cond) fail(msg);
}

inline constexpr double kPi = 3.14159265358979323846;

inline double db_to_amplitude(double db) { return std::pow(10.0, db / 20.0); }
inline double amplitude_to_db(double a) { return 20.0 * std::log10(a); }
inline double db_to_power(double db) { return std::pow(10.0, db / 10.0); }
inline double power_to_db(double p) { return 10.0 * std::log10(p); }

inline bool is_power_of_two(size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline double mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

// FNV-1a, used for config hashes, per-item seeds and run ids.
inline uint64_t fnv1a(const void* data, size_t n,
                      uint64_t h = 14695981039346656037ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

inline uint64_t fnv1a(std::string_view s,
                      uint64_t h = 14695981039346656037ULL) {
  return fnv1a(s.data(), s.size(), h);
}

inline uint64_t fnv1a(uint64_t value, uint64_t h = 14695981039346656037ULL) {
  unsigned char bytes[8];
  std::memcpy(bytes, &value, 8);
  return fnv1a(bytes, 8, h);
}

inline std::string hex_string(uint64_t v, int digits = 16) {
  static const char* kHex = "0123456789abcdef";
  std::string out(static_cast<size_t>(digits), '0');
  for (int i = digits - 1; i >= 0 && v != 0; --i, v >>= 4)
    out[static_cast<size_t>(i)] = kHex[v & 0xf];
  return out;
}

}  // namespace resto
