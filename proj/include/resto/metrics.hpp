#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "resto/audio.hpp"
#include "resto/common.hpp"
#include "resto/fft.hpp"
#include "resto/mel.hpp"
#include "resto/resample.hpp"

namespace resto {

inline constexpr double kMetricNaN = std::numeric_limits<double>::quiet_NaN();

/// One evaluation row: intelligibility, per-rate structural similarity,
/// waveform fidelity, and an externally supplied MOS when the manifest
/// carries one.
struct MetricRow {
  std::string item_id;
  int iteration = 0;
  double estoi = kMetricNaN;
  double ssim_16k = kMetricNaN;
  double ssim_24k = kMetricNaN;
  double ssim_44k = kMetricNaN;
  double ssim_48k = kMetricNaN;
  double si_snr_db = kMetricNaN;
  double external_mos = kMetricNaN;
};

// ------------------------------------------------------------------ eSTOI

namespace detail {

struct EstoiBands {
  // [band] -> [first_bin, last_bin) into a 257-bin spectrum at 10 kHz
  std::vector<std::pair<size_t, size_t>> ranges;
};

inline EstoiBands estoi_bands(int rate, size_t fft_size, int num_bands,
                              double min_freq) {
  EstoiBands bands;
  const size_t bins = fft_size / 2 + 1;
  auto nearest_bin = [&](double freq) {
    double bin_hz = static_cast<double>(rate) / static_cast<double>(fft_size);
    auto k = static_cast<int64_t>(std::llround(freq / bin_hz));
    return static_cast<size_t>(std::clamp<int64_t>(k, 0, static_cast<int64_t>(bins - 1)));
  };
  for (int b = 0; b < num_bands; ++b) {
    double lo = min_freq * std::pow(2.0, (2.0 * b - 1.0) / 6.0);
    double hi = min_freq * std::pow(2.0, (2.0 * b + 1.0) / 6.0);
    bands.ranges.emplace_back(nearest_bin(lo), nearest_bin(hi));
  }
  return bands;
}

}  // namespace detail

/// Extended short-time objective intelligibility (the 2016 revision of
/// STOI): both signals at 10 kHz, silent frames removed by the clean
/// signal's energy mask, 15 one-third-octave bands from 150 Hz, 384 ms
/// segments with row/column normalization, averaged correlation.
inline double estoi(const AudioBuffer& clean, const AudioBuffer& processed) {
  constexpr int kRate = 10000;
  constexpr size_t kFrame = 256;
  constexpr size_t kHop = 128;
  constexpr size_t kFft = 512;
  constexpr int kBands = 15;
  constexpr double kMinFreq = 150.0;
  constexpr size_t kSegment = 30;
  constexpr double kDynRange = 40.0;

  AudioBuffer x = resample(clean, kRate);
  AudioBuffer y = resample(processed, kRate);
  size_t n = std::min(x.size(), y.size());
  x.samples.resize(n);
  y.samples.resize(n);
  require(n >= kFrame, "estoi: clip shorter than one frame");

  std::vector<double> window(kFrame);
  for (size_t i = 0; i < kFrame; ++i)
    window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / kFrame);

  // silence mask from the clean signal
  const size_t frames = (n - kFrame) / kHop + 1;
  std::vector<double> frame_db(frames);
  double peak = -std::numeric_limits<double>::infinity();
  for (size_t m = 0; m < frames; ++m) {
    double e = 0.0;
    for (size_t i = 0; i < kFrame; ++i) {
      double v = x.samples[m * kHop + i] * window[i];
      e += v * v;
    }
    frame_db[m] = amplitude_to_db(std::sqrt(e) + 1e-300);
    peak = std::max(peak, frame_db[m]);
  }

  // overlap-add the retained frames back into compacted signals
  std::vector<size_t> kept;
  for (size_t m = 0; m < frames; ++m)
    if (frame_db[m] > peak - kDynRange) kept.push_back(m);
  require(kept.size() >= kSegment, "estoi: too little active signal");

  size_t out_len = (kept.size() - 1) * kHop + kFrame;
  std::vector<double> xs(out_len, 0.0), ys(out_len, 0.0);
  for (size_t j = 0; j < kept.size(); ++j) {
    size_t src = kept[j] * kHop;
    size_t dst = j * kHop;
    for (size_t i = 0; i < kFrame; ++i) {
      xs[dst + i] += x.samples[src + i] * window[i];
      ys[dst + i] += y.samples[src + i] * window[i];
    }
  }

  // band magnitudes per frame
  const size_t sframes = (out_len - kFrame) / kHop + 1;
  require(sframes >= kSegment, "estoi: too little active signal");
  auto bands = detail::estoi_bands(kRate, kFft, kBands, kMinFreq);
  RealFftPlan plan(kFft);
  std::vector<double> padded(kFft);
  std::vector<std::complex<double>> spec(plan.bins());
  std::vector<double> xb(sframes * kBands), yb(sframes * kBands);
  auto band_rows = [&](const std::vector<double>& sig, std::vector<double>& out) {
    for (size_t m = 0; m < sframes; ++m) {
      std::fill(padded.begin(), padded.end(), 0.0);
      for (size_t i = 0; i < kFrame; ++i)
        padded[i] = sig[m * kHop + i] * window[i];
      plan.forward(padded.data(), spec.data());
      for (int b = 0; b < kBands; ++b) {
        auto [lo, hi] = bands.ranges[static_cast<size_t>(b)];
        double e = 0.0;
        for (size_t k = lo; k < hi; ++k) e += std::norm(spec[k]);
        out[m * kBands + static_cast<size_t>(b)] = std::sqrt(e);
      }
    }
  };
  band_rows(xs, xb);
  band_rows(ys, yb);

  // sliding 30-frame segments; rows then columns mean/variance normalized
  auto normalize_rows_cols = [](std::vector<double>& seg) {
    // seg is kBands x kSegment, row-major
    for (int r = 0; r < kBands; ++r) {
      double* row = &seg[static_cast<size_t>(r) * kSegment];
      double m = 0.0;
      for (size_t c = 0; c < kSegment; ++c) m += row[c];
      m /= kSegment;
      double norm = 0.0;
      for (size_t c = 0; c < kSegment; ++c) {
        row[c] -= m;
        norm += row[c] * row[c];
      }
      norm = std::sqrt(norm);
      if (norm > 1e-300)
        for (size_t c = 0; c < kSegment; ++c) row[c] /= norm;
    }
    for (size_t c = 0; c < kSegment; ++c) {
      double m = 0.0;
      for (int r = 0; r < kBands; ++r) m += seg[static_cast<size_t>(r) * kSegment + c];
      m /= kBands;
      double norm = 0.0;
      for (int r = 0; r < kBands; ++r) {
        double& v = seg[static_cast<size_t>(r) * kSegment + c];
        v -= m;
        norm += v * v;
      }
      norm = std::sqrt(norm);
      if (norm > 1e-300)
        for (int r = 0; r < kBands; ++r)
          seg[static_cast<size_t>(r) * kSegment + c] /= norm;
    }
  };

  double total = 0.0;
  size_t segments = sframes - kSegment + 1;
  std::vector<double> sx(kBands * kSegment), sy(kBands * kSegment);
  for (size_t s = 0; s < segments; ++s) {
    for (int r = 0; r < kBands; ++r)
      for (size_t c = 0; c < kSegment; ++c) {
        sx[static_cast<size_t>(r) * kSegment + c] =
            xb[(s + c) * kBands + static_cast<size_t>(r)];
        sy[static_cast<size_t>(r) * kSegment + c] =
            yb[(s + c) * kBands + static_cast<size_t>(r)];
      }
    normalize_rows_cols(sx);
    normalize_rows_cols(sy);
    double d = 0.0;
    for (size_t i = 0; i < sx.size(); ++i) d += sx[i] * sy[i];
    total += d / static_cast<double>(kSegment);
  }
  return total / static_cast<double>(segments);
}

// ------------------------------------------------------------------- SSIM

/// SSIM between two equally sized images in [0, 1], 11x11 Gaussian window
/// (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2, averaged over the map. Edge
/// windows renormalize over the in-bounds support.
inline double ssim_image(const std::vector<double>& a,
                         const std::vector<double>& b, size_t rows,
                         size_t cols) {
  require(a.size() == rows * cols && b.size() == rows * cols,
          "ssim: image size mismatch");
  require(rows >= 1 && cols >= 1, "ssim: empty image");
  constexpr int kRadius = 5;
  constexpr double kC1 = 0.01 * 0.01;
  constexpr double kC2 = 0.03 * 0.03;

  std::vector<double> kernel(2 * kRadius + 1);
  for (int i = -kRadius; i <= kRadius; ++i)
    kernel[static_cast<size_t>(i + kRadius)] =
        std::exp(-0.5 * (i * i) / (1.5 * 1.5));

  // separable weighted moments with edge renormalization
  auto blur = [&](const std::vector<double>& img) {
    std::vector<double> tmp(rows * cols), out(rows * cols);
    for (size_t r = 0; r < rows; ++r)
      for (size_t c = 0; c < cols; ++c) {
        double acc = 0.0, wsum = 0.0;
        for (int d = -kRadius; d <= kRadius; ++d) {
          auto cc = static_cast<int64_t>(c) + d;
          if (cc < 0 || cc >= static_cast<int64_t>(cols)) continue;
          double w = kernel[static_cast<size_t>(d + kRadius)];
          acc += w * img[r * cols + static_cast<size_t>(cc)];
          wsum += w;
        }
        tmp[r * cols + c] = acc / wsum;
      }
    for (size_t r = 0; r < rows; ++r)
      for (size_t c = 0; c < cols; ++c) {
        double acc = 0.0, wsum = 0.0;
        for (int d = -kRadius; d <= kRadius; ++d) {
          auto rr = static_cast<int64_t>(r) + d;
          if (rr < 0 || rr >= static_cast<int64_t>(rows)) continue;
          double w = kernel[static_cast<size_t>(d + kRadius)];
          acc += w * tmp[static_cast<size_t>(rr) * cols + c];
          wsum += w;
        }
        out[r * cols + c] = acc / wsum;
      }
    return out;
  };

  std::vector<double> aa(rows * cols), bb(rows * cols), ab(rows * cols);
  for (size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  auto mu_a = blur(a), mu_b = blur(b);
  auto m_aa = blur(aa), m_bb = blur(bb), m_ab = blur(ab);

  double total = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    double va = m_aa[i] - mu_a[i] * mu_a[i];
    double vb = m_bb[i] - mu_b[i] * mu_b[i];
    double cov = m_ab[i] - mu_a[i] * mu_b[i];
    double num = (2.0 * mu_a[i] * mu_b[i] + kC1) * (2.0 * cov + kC2);
    double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1) * (va + vb + kC2);
    total += num / den;
  }
  return total / static_cast<double>(a.size());
}

/// Structural similarity between dB-mel images of the two signals at the
/// given rate (64 mels, fft 1024, hop 256; [-100, 0] dB mapped to [0, 1]).
inline double spectrogram_ssim(const AudioBuffer& clean,
                               const AudioBuffer& processed, int rate) {
  AudioBuffer x = resample(clean, rate);
  AudioBuffer y = resample(processed, rate);
  size_t n = std::min(x.size(), y.size());
  require(n >= 1024, "spectrogram_ssim: empty overlap");
  x.samples.resize(n);
  y.samples.resize(n);

  MelConfig cfg;
  cfg.fft_size = 1024;
  cfg.hop = 256;
  cfg.n_mels = 64;
  cfg.f_max = rate / 2.0;
  auto to_image = [&](const AudioBuffer& sig) {
    auto mel = mel_to_db(mel_power(sig, cfg));
    std::vector<double> img(mel.values.size());
    for (size_t i = 0; i < img.size(); ++i)
      img[i] = std::clamp((mel.values[i] + 100.0) / 100.0, 0.0, 1.0);
    return std::pair{img, mel.frames};
  };
  auto [ia, fa] = to_image(x);
  auto [ib, fb] = to_image(y);
  size_t frames = std::min(fa, fb);
  ia.resize(frames * cfg.n_mels);
  ib.resize(frames * cfg.n_mels);
  return ssim_image(ia, ib, frames, cfg.n_mels);
}

// ----------------------------------------------------------------- SI-SNR

inline constexpr double kSiSnrCapDb = 60.0;

/// Scale-invariant SNR: project the estimate onto the reference and compare
/// the projection with the residual. Reported values cap at +-60 dB.
inline double si_snr(const AudioBuffer& reference, const AudioBuffer& estimate) {
  size_t n = std::min(reference.size(), estimate.size());
  require(n > 0, "si_snr: empty input");
  double mr = 0.0, me = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mr += reference.samples[i];
    me += estimate.samples[i];
  }
  mr /= static_cast<double>(n);
  me /= static_cast<double>(n);

  double dot = 0.0, rr = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double r = reference.samples[i] - mr;
    double e = estimate.samples[i] - me;
    dot += r * e;
    rr += r * r;
  }
  require(rr > 0.0, "si_snr: zero reference");

  double scale = dot / rr;
  double target = 0.0, residual = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double t = scale * (reference.samples[i] - mr);
    double e = estimate.samples[i] - me;
    target += t * t;
    residual += (e - t) * (e - t);
  }
  if (residual <= target * 1e-12)
    return kSiSnrCapDb;
  if (target <= residual * 1e-12)
    return -kSiSnrCapDb;
  return std::clamp(power_to_db(target / residual), -kSiSnrCapDb, kSiSnrCapDb);
}

// -------------------------------------------------------------------- T60

struct T60Estimate {
  double seconds = 0.0;
  bool valid = false;  // false when the decay range is below resolution
};

/// Reverberation time from the Schroeder backward-integrated energy decay:
/// least-squares slope of the dB curve between its -5 and -25 dB crossings.
inline T60Estimate schroeder_t60(const AudioBuffer& rir) {
  require(!rir.empty() && rir.sample_rate > 0, "schroeder_t60: empty rir");
  const size_t n = rir.size();
  std::vector<double> edc(n);
  double acc = 0.0;
  for (size_t i = n; i-- > 0;) {
    acc += rir.samples[i] * rir.samples[i];
    edc[i] = acc;
  }
  if (acc <= 0.0) return {};

  size_t i5 = 0;
  while (i5 < n && power_to_db(edc[i5] / acc + 1e-300) > -5.0) ++i5;
  size_t i25 = i5;
  while (i25 < n && power_to_db(edc[i25] / acc + 1e-300) > -25.0) ++i25;
  if (i25 >= n || i25 - i5 < 8) return {};  // decay faster than resolution

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  auto count = static_cast<double>(i25 - i5 + 1);
  for (size_t i = i5; i <= i25; ++i) {
    double px = static_cast<double>(i);
    double py = power_to_db(edc[i] / acc + 1e-300);
    sx += px;
    sy += py;
    sxx += px * px;
    sxy += px * py;
  }
  double denom = count * sxx - sx * sx;
  if (denom <= 0.0) return {};
  double slope = (count * sxy - sx * sy) / denom;  // dB per sample
  if (slope >= 0.0) return {};
  T60Estimate est;
  est.seconds = -60.0 / (slope * rir.sample_rate);
  est.valid = true;
  return est;
}

// ---------------------------------------------------------------- Reports

namespace detail {

inline std::string format_metric(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

inline double parse_metric(const std::string& s) {
  if (s.empty()) return kMetricNaN;
  return std::stod(s);
}

}  // namespace detail

inline const char* kMetricsCsvHeader =
    "item_id,iteration,estoi,ssim_16k,ssim_24k,ssim_44k,ssim_48k,si_snr_db,"
    "external_mos";

inline std::string metrics_to_csv(const std::vector<MetricRow>& rows) {
  std::string out = kMetricsCsvHeader;
  out += "\n";
  for (const auto& r : rows) {
    out += r.item_id + "," + std::to_string(r.iteration) + "," +
           detail::format_metric(r.estoi) + "," +
           detail::format_metric(r.ssim_16k) + "," +
           detail::format_metric(r.ssim_24k) + "," +
           detail::format_metric(r.ssim_44k) + "," +
           detail::format_metric(r.ssim_48k) + "," +
           detail::format_metric(r.si_snr_db) + "," +
           detail::format_metric(r.external_mos) + "\n";
  }
  return out;
}

inline std::vector<MetricRow> metrics_from_csv(const std::string& text) {
  std::vector<MetricRow> rows;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (first) {
      require(line == kMetricsCsvHeader, "metrics csv: unexpected header");
      first = false;
      continue;
    }
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) fields.push_back(field);
    while (fields.size() < 9) fields.emplace_back();
    require(fields.size() == 9, "metrics csv: malformed row: " + line);
    MetricRow r;
    r.item_id = fields[0];
    r.iteration = std::stoi(fields[1]);
    r.estoi = detail::parse_metric(fields[2]);
    r.ssim_16k = detail::parse_metric(fields[3]);
    r.ssim_24k = detail::parse_metric(fields[4]);
    r.ssim_44k = detail::parse_metric(fields[5]);
    r.ssim_48k = detail::parse_metric(fields[6]);
    r.si_snr_db = detail::parse_metric(fields[7]);
    r.external_mos = detail::parse_metric(fields[8]);
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Per-iteration trend summary (mean and standard deviation per metric) plus
/// a least-squares slope per metric and a small SVG plot of the means.
inline void refinement_report(const std::vector<MetricRow>& rows,
                              const std::string& out_dir) {
  require(!rows.empty(), "refinement_report: no rows");
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);

  {
    std::ofstream f(fs::path(out_dir) / "metrics.csv");
    f << metrics_to_csv(rows);
  }

  struct Series {
    const char* name;
    double MetricRow::* field;
  };
  static const Series kSeries[] = {
      {"estoi", &MetricRow::estoi},       {"ssim_16k", &MetricRow::ssim_16k},
      {"ssim_24k", &MetricRow::ssim_24k}, {"ssim_44k", &MetricRow::ssim_44k},
      {"ssim_48k", &MetricRow::ssim_48k}, {"si_snr_db", &MetricRow::si_snr_db},
  };

  int max_iter = 0;
  for (const auto& r : rows) max_iter = std::max(max_iter, r.iteration);

  std::ofstream summary(fs::path(out_dir) / "summary.csv");
  summary << "metric,iteration,mean,std\n";
  std::ofstream trends(fs::path(out_dir) / "trends.csv");
  trends << "metric,slope_per_iteration\n";

  std::vector<std::pair<std::string, std::vector<double>>> svg_series;
  for (const auto& s : kSeries) {
    std::vector<double> means;
    for (int it = 0; it <= max_iter; ++it) {
      std::vector<double> vals;
      for (const auto& r : rows)
        if (r.iteration == it && !std::isnan(r.*(s.field)))
          vals.push_back(r.*(s.field));
      if (vals.empty()) continue;
      double m = mean(vals);
      double sd = std::sqrt(variance(vals));
      means.push_back(m);
      char buf[128];
      std::snprintf(buf, sizeof(buf), "%s,%d,%.6f,%.6f\n", s.name, it, m, sd);
      summary << buf;
    }
    if (means.size() >= 2) {
      double sx = 0, sy = 0, sxx = 0, sxy = 0;
      auto count = static_cast<double>(means.size());
      for (size_t i = 0; i < means.size(); ++i) {
        sx += static_cast<double>(i);
        sy += means[i];
        sxx += static_cast<double>(i) * static_cast<double>(i);
        sxy += static_cast<double>(i) * means[i];
      }
      double slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%s,%.8f\n", s.name, slope);
      trends << buf;
    } else if (means.size() == 1) {
      trends << s.name << ",0.00000000\n";
    }
    if (!means.empty()) svg_series.emplace_back(s.name, means);
  }

  // one polyline per metric, normalized to its own range
  std::ofstream svg(fs::path(out_dir) / "trend.svg");
  const int w = 640, h = 360, pad = 40;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
      << "\" height=\"" << h << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  static const char* kColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c",
                                  "#d62728", "#9467bd", "#8c564b"};
  int color = 0;
  for (const auto& [name, means] : svg_series) {
    double lo = *std::min_element(means.begin(), means.end());
    double hi = *std::max_element(means.begin(), means.end());
    double span = hi - lo < 1e-12 ? 1.0 : hi - lo;
    svg << "<polyline fill=\"none\" stroke=\"" << kColors[color % 6]
        << "\" stroke-width=\"2\" points=\"";
    for (size_t i = 0; i < means.size(); ++i) {
      double px = pad + (w - 2.0 * pad) * (means.size() == 1 ? 0.0 : static_cast<double>(i) / (means.size() - 1));
      double py = h - pad - (h - 2.0 * pad) * (means[i] - lo) / span;
      svg << px << "," << py << " ";
    }
    svg << "\"/>\n";
    svg << "<text x=\"" << (w - pad + 4) << "\" y=\"" << (pad + 16 * color)
        << "\" font-size=\"11\" fill=\"" << kColors[color % 6] << "\">" << name
        << "</text>\n";
    ++color;
  }
  svg << "</svg>\n";
}

/// Compute the full metric row for one clean/processed pair; metrics that
/// cannot run on the pair (too short for eSTOI, say) report as NaN instead
/// of failing the item.
inline MetricRow compute_metric_row(const std::string& item_id, int iteration,
                                    const AudioBuffer& clean,
                                    const AudioBuffer& processed,
                                    double external_mos = kMetricNaN) {
  MetricRow row;
  row.item_id = item_id;
  row.iteration = iteration;
  row.external_mos = external_mos;
  auto attempt = [](double& slot, auto&& fn) {
    try {
      slot = fn();
    } catch (const Error&) {
      // leave NaN
    }
  };
  attempt(row.estoi, [&] { return estoi(clean, processed); });
  attempt(row.ssim_16k, [&] { return spectrogram_ssim(clean, processed, 16000); });
  attempt(row.ssim_24k, [&] { return spectrogram_ssim(clean, processed, 24000); });
  attempt(row.ssim_44k, [&] { return spectrogram_ssim(clean, processed, 44100); });
  attempt(row.ssim_48k, [&] { return spectrogram_ssim(clean, processed, 48000); });
  attempt(row.si_snr_db, [&] {
    // unlike the spectral metrics, si_snr compares waveforms directly and
    // needs a common time base
    if (clean.sample_rate == processed.sample_rate)
      return si_snr(clean, processed);
    return si_snr(clean, resample(processed, clean.sample_rate));
  });
  return row;
}

}  // namespace resto
