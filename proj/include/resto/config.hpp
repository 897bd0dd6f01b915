#pragma once

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "resto/common.hpp"
#include "resto/degrade.hpp"

namespace resto {

/// Everything a pipeline run needs, loadable from a key = value text file.
/// Every key can also be overridden through the environment as
/// RESTO_<KEY-IN-UPPER-CASE>; command-line flags win over both.
struct PipelineConfig {
  std::string manifest;
  std::string out_dir = "runs";
  uint64_t master_seed = 1;
  int jobs = 2;

  double target_lufs = -20.0;
  std::string enhancer = "spectral_gate";  // identity | spectral_gate | external
  std::string enhancer_cmd;

  std::string profile = "eval";  // train | eval
  double mos_threshold = 4.0;

  size_t schedule_t = 1000;
  double beta_1 = 1e-4;
  double beta_t = 0.02;
  size_t sample_steps = 50;
  std::string denoiser_file;  // empty -> conditioning identity

  int gl_iterations = 60;
  int nnls_iterations = 80;

  size_t codec_patch = 16;
  size_t codec_kept = 64;
  double db_floor = -100.0;
  double db_ceil = 20.0;

  std::string degrade_codec = "sampled";  // sampled | none | proxy | external
  std::string codec_encode_cmd;
  std::string codec_decode_cmd;
};

namespace detail {

struct ConfigField {
  const char* key;
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

inline uint64_t parse_u64(const std::string& v, const std::string& key) {
  try {
    size_t used = 0;
    auto out = std::stoull(v, &used);
    require(used == v.size(), "config: bad integer for " + key + ": " + v);
    return out;
  } catch (const std::exception&) {
    fail("config: bad integer for " + key + ": " + v);
  }
}

inline double parse_f64(const std::string& v, const std::string& key) {
  try {
    size_t used = 0;
    double out = std::stod(v, &used);
    require(used == v.size(), "config: bad number for " + key + ": " + v);
    return out;
  } catch (const std::exception&) {
    fail("config: bad number for " + key + ": " + v);
  }
}

inline const std::vector<ConfigField>& config_fields() {
  auto str_field = [](std::string PipelineConfig::* member) {
    return std::pair{
        [member](PipelineConfig& c, const std::string& v) { c.*member = v; },
        [member](const PipelineConfig& c) { return c.*member; }};
  };
  static const std::vector<ConfigField> fields = [&] {
    std::vector<ConfigField> f;
    auto add = [&f](const char* key, auto set, auto get) {
      f.push_back({key, set, get});
    };
    auto add_str = [&](const char* key, std::string PipelineConfig::* m) {
      auto [set, get] = str_field(m);
      add(key, set, get);
    };
    auto add_u64 = [&](const char* key, auto m) {
      add(key,
          [m, key](PipelineConfig& c, const std::string& v) {
            c.*m = static_cast<std::remove_reference_t<decltype(c.*m)>>(
                parse_u64(v, key));
          },
          [m](const PipelineConfig& c) { return std::to_string(c.*m); });
    };
    auto add_f64 = [&](const char* key, double PipelineConfig::* m) {
      add(key,
          [m, key](PipelineConfig& c, const std::string& v) {
            c.*m = parse_f64(v, key);
          },
          [m](const PipelineConfig& c) {
            char buf[48];
            std::snprintf(buf, sizeof(buf), "%.10g", c.*m);
            return std::string(buf);
          });
    };
    add_str("manifest", &PipelineConfig::manifest);
    add_str("out_dir", &PipelineConfig::out_dir);
    add_u64("master_seed", &PipelineConfig::master_seed);
    add_u64("jobs", &PipelineConfig::jobs);
    add_f64("target_lufs", &PipelineConfig::target_lufs);
    add_str("enhancer", &PipelineConfig::enhancer);
    add_str("enhancer_cmd", &PipelineConfig::enhancer_cmd);
    add_str("profile", &PipelineConfig::profile);
    add_f64("mos_threshold", &PipelineConfig::mos_threshold);
    add_u64("schedule_t", &PipelineConfig::schedule_t);
    add_f64("beta_1", &PipelineConfig::beta_1);
    add_f64("beta_t", &PipelineConfig::beta_t);
    add_u64("sample_steps", &PipelineConfig::sample_steps);
    add_str("denoiser_file", &PipelineConfig::denoiser_file);
    add_u64("gl_iterations", &PipelineConfig::gl_iterations);
    add_u64("nnls_iterations", &PipelineConfig::nnls_iterations);
    add_u64("codec_patch", &PipelineConfig::codec_patch);
    add_u64("codec_kept", &PipelineConfig::codec_kept);
    add_f64("db_floor", &PipelineConfig::db_floor);
    add_f64("db_ceil", &PipelineConfig::db_ceil);
    add_str("degrade_codec", &PipelineConfig::degrade_codec);
    add_str("codec_encode_cmd", &PipelineConfig::codec_encode_cmd);
    add_str("codec_decode_cmd", &PipelineConfig::codec_decode_cmd);
    return f;
  }();
  return fields;
}

}  // namespace detail

inline void apply_env_overrides(PipelineConfig& cfg) {
  for (const auto& field : detail::config_fields()) {
    std::string env_key = "RESTO_";
    for (const char* p = field.key; *p; ++p)
      env_key.push_back(*p == '.' ? '_' : static_cast<char>(std::toupper(*p)));
    if (const char* v = std::getenv(env_key.c_str())) field.set(cfg, v);
  }
}

/// Parse a key = value config file ('#' starts a comment, unknown keys are
/// errors), then apply RESTO_* environment overrides.
inline PipelineConfig load_config(const std::string& path,
                                  bool apply_env = true) {
  PipelineConfig cfg;
  std::ifstream f(path);
  require(f.good(), "cannot open config: " + path);
  const auto& fields = detail::config_fields();
  std::string line;
  size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r'; };
    auto trim = [&is_space](std::string s) {
      while (!s.empty() && is_space(s.front())) s.erase(s.begin());
      while (!s.empty() && is_space(s.back())) s.pop_back();
      return s;
    };
    std::string trimmed = trim(line);
    if (trimmed.empty()) continue;
    auto eq = trimmed.find('=');
    require(eq != std::string::npos,
            "config line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(trimmed.substr(0, eq));
    std::string value = trim(trimmed.substr(eq + 1));
    auto it = std::find_if(fields.begin(), fields.end(),
                           [&key](const auto& fl) { return key == fl.key; });
    require(it != fields.end(),
            "config line " + std::to_string(line_no) + ": unknown key '" +
                key + "'");
    it->set(cfg, value);
  }
  if (apply_env) apply_env_overrides(cfg);
  return cfg;
}

/// Canonical text form: the config hash and run id derive from this, so a
/// rerun with identical settings lands in the same run directory.
inline std::string config_snapshot(const PipelineConfig& cfg) {
  std::string out;
  for (const auto& field : detail::config_fields())
    out += std::string(field.key) + " = " + field.get(cfg) + "\n";
  return out;
}

inline uint64_t config_hash(const PipelineConfig& cfg) {
  return fnv1a(config_snapshot(cfg));
}

inline std::string run_id(const PipelineConfig& cfg) {
  return hex_string(config_hash(cfg), 12);
}

/// Collect everything wrong with a config; empty means runnable.
inline std::vector<std::string> validate_config(const PipelineConfig& cfg) {
  std::vector<std::string> errors;
  if (cfg.manifest.empty())
    errors.push_back("manifest: not set");
  else if (!std::filesystem::exists(cfg.manifest))
    errors.push_back("manifest: no such file: " + cfg.manifest);
  if (cfg.jobs < 1) errors.push_back("jobs: must be >= 1");
  if (cfg.enhancer != "identity" && cfg.enhancer != "spectral_gate" &&
      cfg.enhancer != "external")
    errors.push_back("enhancer: unknown name '" + cfg.enhancer + "'");
  if (cfg.enhancer == "external" && cfg.enhancer_cmd.empty())
    errors.push_back("enhancer_cmd: required for the external enhancer");
  if (cfg.profile != "train" && cfg.profile != "eval")
    errors.push_back("profile: must be train or eval");
  if (!(cfg.beta_1 > 0.0 && cfg.beta_1 < cfg.beta_t && cfg.beta_t < 1.0))
    errors.push_back("schedule: need 0 < beta_1 < beta_t < 1");
  if (cfg.schedule_t < 2) errors.push_back("schedule_t: must be >= 2");
  if (cfg.sample_steps < 1 || cfg.sample_steps > cfg.schedule_t)
    errors.push_back("sample_steps: must be in [1, schedule_t]");
  if (!cfg.denoiser_file.empty() &&
      !std::filesystem::exists(cfg.denoiser_file))
    errors.push_back("denoiser_file: no such file: " + cfg.denoiser_file);
  if (cfg.codec_patch < 1) errors.push_back("codec_patch: must be >= 1");
  if (cfg.codec_kept < 1 || cfg.codec_kept > cfg.codec_patch * cfg.codec_patch)
    errors.push_back("codec_kept: must be in [1, patch^2]");
  if (cfg.db_floor >= cfg.db_ceil)
    errors.push_back("db range: floor must sit below ceiling");
  if (cfg.degrade_codec != "sampled" && cfg.degrade_codec != "none" &&
      cfg.degrade_codec != "proxy" && cfg.degrade_codec != "external")
    errors.push_back("degrade_codec: unknown mode '" + cfg.degrade_codec + "'");
  if (cfg.degrade_codec == "external" &&
      (cfg.codec_encode_cmd.empty() || cfg.codec_decode_cmd.empty()))
    errors.push_back("codec commands: required for the external codec");
  if (cfg.gl_iterations < 0) errors.push_back("gl_iterations: must be >= 0");
  if (cfg.nnls_iterations < 1) errors.push_back("nnls_iterations: must be >= 1");
  return errors;
}

}  // namespace resto
