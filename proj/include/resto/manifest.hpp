#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "resto/common.hpp"
#include "resto/rng.hpp"
#include "resto/wav.hpp"

namespace resto {

enum class AssetRole { speech, noise, rir };
enum class AssetSplit { train, eval };

inline std::string to_string(AssetRole r) {
  switch (r) {
    case AssetRole::noise: return "noise";
    case AssetRole::rir: return "rir";
    default: return "speech";
  }
}

inline std::string to_string(AssetSplit s) {
  return s == AssetSplit::train ? "train" : "eval";
}

inline AssetRole role_from_string(const std::string& s) {
  if (s == "speech") return AssetRole::speech;
  if (s == "noise") return AssetRole::noise;
  if (s == "rir") return AssetRole::rir;
  fail("manifest: unknown role '" + s + "'");
}

inline AssetSplit split_from_string(const std::string& s) {
  if (s == "train") return AssetSplit::train;
  if (s == "eval") return AssetSplit::eval;
  fail("manifest: unknown split '" + s + "'");
}

struct ManifestRecord {
  std::string path;
  double duration_s = 0.0;
  int sample_rate = 0;
  double external_mos = std::numeric_limits<double>::quiet_NaN();
  AssetSplit split = AssetSplit::train;
  AssetRole role = AssetRole::speech;
};

struct Manifest {
  std::vector<ManifestRecord> records;

  std::vector<ManifestRecord> select(AssetRole role, AssetSplit split) const {
    std::vector<ManifestRecord> out;
    for (const auto& r : records)
      if (r.role == role && r.split == split) out.push_back(r);
    return out;
  }
};

inline const char* kManifestCsvHeader =
    "path,duration_s,sample_rate,external_mos,split,role";

namespace detail {

inline ManifestRecord record_from_fields(const std::vector<std::string>& f,
                                         size_t line_no) {
  ManifestRecord r;
  r.path = f[0];
  require(!r.path.empty(), "manifest row " + std::to_string(line_no) +
                               ": empty path");
  try {
    if (!f[1].empty()) r.duration_s = std::stod(f[1]);
    if (!f[2].empty()) r.sample_rate = std::stoi(f[2]);
    if (!f[3].empty()) r.external_mos = std::stod(f[3]);
  } catch (const std::exception&) {
    fail("manifest row " + std::to_string(line_no) + ": malformed number");
  }
  r.split = split_from_string(f[4].empty() ? "train" : f[4]);
  r.role = role_from_string(f[5].empty() ? "speech" : f[5]);
  return r;
}

}  // namespace detail

/// Read a manifest from CSV (header above) or JSON-lines (one object per
/// line). Paths must exist and be unique; missing durations and rates are
/// probed from the files.
inline Manifest ingest_manifest(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "cannot open manifest: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  std::string text = ss.str();

  Manifest manifest;
  std::istringstream lines(text);
  std::string line;
  size_t line_no = 0;
  bool csv_header_seen = false;
  while (std::getline(lines, line)) {
    ++line_no;
    // tolerate trailing CR from windows-edited files
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    ManifestRecord r;
    if (line.front() == '{') {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        fail("manifest row " + std::to_string(line_no) + ": " + e.what());
      }
      r.path = j.value("path", "");
      require(!r.path.empty(),
              "manifest row " + std::to_string(line_no) + ": missing path");
      r.duration_s = j.value("duration_s", 0.0);
      r.sample_rate = j.value("sample_rate", 0);
      if (j.contains("external_mos") && !j["external_mos"].is_null())
        r.external_mos = j["external_mos"].get<double>();
      r.split = split_from_string(j.value("split", "train"));
      r.role = role_from_string(j.value("role", "speech"));
    } else {
      if (!csv_header_seen) {
        require(line == kManifestCsvHeader,
                "manifest row 1: expected header '" +
                    std::string(kManifestCsvHeader) + "'");
        csv_header_seen = true;
        continue;
      }
      std::vector<std::string> fields;
      std::string field;
      std::istringstream ls(line);
      while (std::getline(ls, field, ',')) fields.push_back(field);
      while (fields.size() < 6) fields.emplace_back();
      require(fields.size() == 6,
              "manifest row " + std::to_string(line_no) + ": expected 6 fields");
      r = detail::record_from_fields(fields, line_no);
    }

    require(std::filesystem::exists(r.path),
            "manifest row " + std::to_string(line_no) + ": missing file " +
                r.path);
    if (r.duration_s <= 0.0 || r.sample_rate <= 0) {
      WavInfo info = probe_wav(r.path);
      if (r.duration_s <= 0.0) r.duration_s = info.duration_s;
      if (r.sample_rate <= 0) r.sample_rate = info.sample_rate;
    }
    require(r.duration_s > 0.0,
            "manifest row " + std::to_string(line_no) + ": zero duration");
    manifest.records.push_back(std::move(r));
  }

  std::set<std::string> seen;
  for (const auto& r : manifest.records)
    require(seen.insert(r.path).second, "manifest: duplicate path " + r.path);
  if (manifest.records.empty())
    std::fprintf(stderr, "warning: manifest %s is empty\n", path.c_str());
  return manifest;
}

inline std::string manifest_to_csv(const Manifest& manifest) {
  std::string out = kManifestCsvHeader;
  out += "\n";
  for (const auto& r : manifest.records) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", r.duration_s);
    out += r.path + "," + buf + "," + std::to_string(r.sample_rate) + ",";
    if (!std::isnan(r.external_mos)) {
      std::snprintf(buf, sizeof(buf), "%.3f", r.external_mos);
      out += buf;
    }
    out += "," + to_string(r.split) + "," + to_string(r.role) + "\n";
  }
  return out;
}

inline void emit_manifest(const Manifest& manifest, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  require(f.good(), "cannot write manifest: " + path);
  f << manifest_to_csv(manifest);
}

/// Drop speech rows whose external MOS sits below the threshold (strictly;
/// a row at exactly the threshold stays). Speech rows without a score pass
/// with a warning counter; other roles are untouched.
struct MosFilterResult {
  Manifest manifest;
  size_t dropped = 0;
  size_t unscored = 0;  // speech rows that passed for lack of a score
};

inline MosFilterResult filter_by_mos(const Manifest& manifest,
                                     double threshold = 4.0) {
  MosFilterResult result;
  for (const auto& r : manifest.records) {
    if (r.role != AssetRole::speech) {
      result.manifest.records.push_back(r);
      continue;
    }
    if (std::isnan(r.external_mos)) {
      ++result.unscored;
      result.manifest.records.push_back(r);
      continue;
    }
    if (r.external_mos < threshold) {
      ++result.dropped;
      continue;
    }
    result.manifest.records.push_back(r);
  }
  return result;
}

/// Reassign noise and impulse-response rows to train/eval with a seeded
/// shuffle: per role, round(fraction * n) go to train, the rest to eval.
/// Speech rows keep their declared split.
inline Manifest split_assets(const Manifest& manifest, double train_fraction,
                             uint64_t seed) {
  require(train_fraction > 0.0 && train_fraction < 1.0,
          "split_assets: train fraction must be in (0, 1)");
  Manifest out = manifest;
  for (AssetRole role : {AssetRole::noise, AssetRole::rir}) {
    std::vector<size_t> idx;
    for (size_t i = 0; i < out.records.size(); ++i)
      if (out.records[i].role == role) idx.push_back(i);
    if (idx.empty()) continue;
    require(idx.size() >= 2, "split_assets: need at least 2 " +
                                 to_string(role) + " items to split");

    Rng rng(derive_seed(seed, to_string(role)));
    for (size_t i = idx.size(); i > 1; --i) {
      auto j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i - 1)));
      std::swap(idx[i - 1], idx[j]);
    }
    auto train_count = static_cast<size_t>(
        std::llround(train_fraction * static_cast<double>(idx.size())));
    train_count = std::clamp<size_t>(train_count, 1, idx.size() - 1);
    for (size_t i = 0; i < idx.size(); ++i)
      out.records[idx[i]].split =
          i < train_count ? AssetSplit::train : AssetSplit::eval;
  }
  return out;
}

}  // namespace resto
