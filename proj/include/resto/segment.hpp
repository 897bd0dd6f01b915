#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "resto/audio.hpp"
#include "resto/common.hpp"

namespace resto {

/// Consecutive non-overlapping chunks of `chunk_seconds`. The trailing
/// remainder is kept when it is at least `min_tail_seconds` long and
/// dropped otherwise, so no chunk is degenerately short.
inline std::vector<AudioBuffer> chunk(const AudioBuffer& buffer,
                                      double chunk_seconds = 5.12,
                                      double min_tail_seconds = 1.0) {
  require(chunk_seconds > 0.0, "chunk: chunk_seconds must be positive");
  require(buffer.sample_rate > 0, "chunk: buffer has no sample rate");

  const auto chunk_len = static_cast<size_t>(
      std::llround(chunk_seconds * buffer.sample_rate));
  const auto min_tail = static_cast<size_t>(
      std::llround(min_tail_seconds * buffer.sample_rate));
  require(chunk_len > 0, "chunk: chunk shorter than one sample");

  std::vector<AudioBuffer> out;
  size_t pos = 0;
  while (pos + chunk_len <= buffer.size()) {
    AudioBuffer c;
    c.sample_rate = buffer.sample_rate;
    c.samples.assign(buffer.samples.begin() + static_cast<ptrdiff_t>(pos),
                     buffer.samples.begin() + static_cast<ptrdiff_t>(pos + chunk_len));
    out.push_back(std::move(c));
    pos += chunk_len;
  }
  size_t tail = buffer.size() - pos;
  if (tail >= min_tail && tail > 0) {
    AudioBuffer c;
    c.sample_rate = buffer.sample_rate;
    c.samples.assign(buffer.samples.begin() + static_cast<ptrdiff_t>(pos),
                     buffer.samples.end());
    out.push_back(std::move(c));
  }
  return out;
}

struct TrimResult {
  AudioBuffer audio;
  bool all_silent = false;
};

/// Frame-energy silence trimming. Frames (default 20 ms, 10 ms hop) whose
/// energy sits below peak + threshold_db are silent: leading and trailing
/// silence is removed, interior silent runs longer than `max_gap_s` are
/// collapsed to `kept_gap_s`.
inline TrimResult trim_silence(const AudioBuffer& buffer,
                               double threshold_db = -40.0,
                               double frame_ms = 20.0,
                               double max_gap_s = 0.5,
                               double kept_gap_s = 0.2) {
  require(threshold_db < 0.0, "trim_silence: threshold must be negative");
  require(buffer.sample_rate > 0, "trim_silence: buffer has no sample rate");

  TrimResult result;
  result.audio.sample_rate = buffer.sample_rate;
  if (buffer.empty()) {
    result.all_silent = true;
    return result;
  }

  const auto frame_len = std::max<size_t>(
      1, static_cast<size_t>(std::llround(frame_ms * buffer.sample_rate / 1000.0)));
  const size_t hop = std::max<size_t>(1, frame_len / 2);
  const size_t n = buffer.size();
  const size_t frames = (n + hop - 1) / hop;

  std::vector<double> frame_db(frames);
  double peak_db = -std::numeric_limits<double>::infinity();
  for (size_t f = 0; f < frames; ++f) {
    size_t begin = f * hop;
    size_t end = std::min(begin + frame_len, n);
    double e = 0.0;
    for (size_t i = begin; i < end; ++i) e += buffer.samples[i] * buffer.samples[i];
    e /= static_cast<double>(end - begin);
    frame_db[f] = power_to_db(e + 1e-300);
    peak_db = std::max(peak_db, frame_db[f]);
  }

  std::vector<bool> active(frames);
  bool any_active = false;
  for (size_t f = 0; f < frames; ++f) {
    active[f] = frame_db[f] >= peak_db + threshold_db;
    any_active = any_active || active[f];
  }
  // relative gating cannot flag digital silence, so apply an absolute floor
  if (!any_active || peak_db < -120.0) {
    result.all_silent = true;
    return result;
  }

  size_t first = 0, last = frames - 1;
  while (!active[first]) ++first;
  while (!active[last]) --last;

  // each frame owns its hop of samples; the final active frame owns to
  // the end of its window so tails are not shaved off
  const auto max_gap_frames = static_cast<size_t>(
      std::llround(max_gap_s * buffer.sample_rate / static_cast<double>(hop)));
  const auto kept_gap_frames = static_cast<size_t>(
      std::llround(kept_gap_s * buffer.sample_rate / static_cast<double>(hop)));

  auto& out = result.audio.samples;
  out.reserve(n);
  size_t f = first;
  while (f <= last) {
    if (active[f]) {
      size_t begin = f * hop;
      size_t end = f == last ? std::min(f * hop + frame_len, n)
                             : std::min((f + 1) * hop, n);
      out.insert(out.end(), buffer.samples.begin() + static_cast<ptrdiff_t>(begin),
                 buffer.samples.begin() + static_cast<ptrdiff_t>(end));
      ++f;
      continue;
    }
    size_t run_start = f;
    while (f <= last && !active[f]) ++f;
    size_t run_len = f - run_start;
    size_t keep = run_len > max_gap_frames ? kept_gap_frames : run_len;
    size_t begin = run_start * hop;
    size_t end = std::min(begin + keep * hop, n);
    out.insert(out.end(), buffer.samples.begin() + static_cast<ptrdiff_t>(begin),
               buffer.samples.begin() + static_cast<ptrdiff_t>(end));
  }
  return result;
}

}  // namespace resto
