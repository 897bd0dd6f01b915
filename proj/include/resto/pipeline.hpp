#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "resto/config.hpp"
#include "resto/degrade.hpp"
#include "resto/diffusion.hpp"
#include "resto/manifest.hpp"
#include "resto/metrics.hpp"
#include "resto/recovery.hpp"

namespace resto {

struct ItemResult {
  std::string item_id;
  bool ok = false;
  bool skipped = false;  // outputs already present for this config
  std::string error;
  MetricRow row;
  nlohmann::json degradation;
  double seconds = 0.0;
};

struct RunReport {
  std::string run_id;
  uint64_t config_hash = 0;
  std::string run_dir;
  std::vector<ItemResult> items;
  size_t failed = 0;
  double degrade_seconds = 0.0;
  double recover_seconds = 0.0;
  double restore_seconds = 0.0;
  double evaluate_seconds = 0.0;
};

namespace detail {

inline std::string item_id_from_path(const std::string& path) {
  auto stem = std::filesystem::path(path).stem().string();
  for (char& c : stem)
    if (c == ',' || c == ' ') c = '_';
  return stem;
}

struct StageClock {
  double& slot;
  std::mutex& mu;
  std::chrono::steady_clock::time_point start =
      std::chrono::steady_clock::now();
  ~StageClock() {
    std::chrono::duration<double> d = std::chrono::steady_clock::now() - start;
    std::lock_guard<std::mutex> lock(mu);
    slot += d.count();
  }
};

}  // namespace detail

/// Run degrade -> recover -> restore -> evaluate over the manifest's eval
/// speech items. Artifacts land under out_dir/<run-id>/ with a config
/// snapshot; items already completed under the same config hash are skipped,
/// so interrupted runs resume. Per-item failures are logged and counted, the
/// rest of the run continues.
inline RunReport run_pipeline(const PipelineConfig& cfg) {
  namespace fs = std::filesystem;
  auto errors = validate_config(cfg);
  if (!errors.empty()) {
    std::string all = "invalid config:";
    for (const auto& e : errors) all += "\n  " + e;
    fail(all);
  }

  RunReport report;
  report.config_hash = config_hash(cfg);
  report.run_id = run_id(cfg);
  fs::path run_dir = fs::path(cfg.out_dir) / report.run_id;
  report.run_dir = run_dir.string();
  fs::create_directories(run_dir);
  {
    std::ofstream snap(run_dir / "config.txt");
    snap << config_snapshot(cfg);
  }

  Manifest manifest = ingest_manifest(cfg.manifest);
  auto speech = manifest.select(AssetRole::speech, AssetSplit::eval);
  auto noise_assets = manifest.select(AssetRole::noise, AssetSplit::eval);
  auto rir_assets = manifest.select(AssetRole::rir, AssetSplit::eval);
  require(!speech.empty(), "run_pipeline: no eval speech items in manifest");

  NoiseSchedule schedule;
  std::unique_ptr<Denoiser> denoiser;
  if (cfg.denoiser_file.empty()) {
    schedule = make_schedule(cfg.schedule_t, cfg.beta_1, cfg.beta_t);
    denoiser = std::make_unique<ConditioningDenoiser>();
  } else {
    auto loaded = load_denoiser(cfg.denoiser_file);
    schedule = std::move(loaded.schedule);
    denoiser = std::make_unique<LinearDenoiser>(std::move(loaded.denoiser));
  }
  auto enhancer = make_enhancer(cfg.enhancer, cfg.enhancer_cmd);
  DegradationProfile profile = cfg.profile == "train"
                                   ? DegradationProfile::train
                                   : DegradationProfile::eval;

  std::mutex mu;
  std::atomic<size_t> next{0};
  std::vector<ItemResult> results(speech.size());

  auto process_item = [&](size_t index) {
    const ManifestRecord& record = speech[index];
    ItemResult result;
    result.item_id = detail::item_id_from_path(record.path);
    auto t0 = std::chrono::steady_clock::now();

    fs::path degraded_path = run_dir / (result.item_id + "_degraded.wav");
    fs::path recovered_path = run_dir / (result.item_id + "_recovered.wav");
    fs::path restored_path = run_dir / (result.item_id + "_restored.wav");
    fs::path done_path = run_dir / (result.item_id + ".done.json");

    try {
      if (fs::exists(done_path) && fs::exists(degraded_path) &&
          fs::exists(recovered_path) && fs::exists(restored_path)) {
        std::ifstream f(done_path);
        nlohmann::json j;
        f >> j;
        auto rows = metrics_from_csv(std::string(kMetricsCsvHeader) + "\n" +
                                     j.at("metrics_csv_row").get<std::string>());
        require(rows.size() == 1, "corrupt done marker");
        result.row = rows[0];
        result.degradation = j.value("degradation", nlohmann::json());
        result.ok = true;
        result.skipped = true;
        results[index] = std::move(result);
        return;
      }

      uint64_t item_seed = derive_seed(cfg.master_seed, record.path);
      Rng rng(item_seed);

      AudioBuffer clean = load_wav(record.path);
      AudioBuffer clean48 = resample(clean, 48000);

      DegradationSpec spec = sample_degradation(profile, item_seed);
      if (cfg.degrade_codec == "none")
        spec.codec = CodecMode::none;
      else if (cfg.degrade_codec == "proxy")
        spec.codec = CodecMode::proxy;
      else if (cfg.degrade_codec == "external")
        spec.codec = CodecMode::external;
      result.degradation = spec.to_json();

      AudioBuffer noise;
      if (!noise_assets.empty()) {
        auto pick = static_cast<size_t>(rng.uniform_int(
            0, static_cast<int64_t>(noise_assets.size() - 1)));
        noise = resample(load_wav(noise_assets[pick].path), 48000);
        result.degradation["noise_asset"] = noise_assets[pick].path;
      } else {
        // self-contained fallback: seeded white noise
        noise.sample_rate = 48000;
        noise.samples.resize(clean48.size());
        Rng noise_rng = rng.fork(1);
        for (auto& v : noise.samples) v = 0.1 * noise_rng.normal();
        result.degradation["noise_asset"] = "white:internal";
      }

      AudioBuffer rir;
      if (!rir_assets.empty()) {
        auto pick = static_cast<size_t>(rng.uniform_int(
            0, static_cast<int64_t>(rir_assets.size() - 1)));
        rir = resample(load_wav(rir_assets[pick].path), 48000);
        result.degradation["rir_asset"] = rir_assets[pick].path;
      } else {
        double duration = std::max(1.5 * spec.t60_s, 0.2);
        rir = synth_rir(spec.t60_s, duration, 48000, rng.fork(2).next());
        result.degradation["rir_asset"] = "synth:exponential";
      }

      CodecParams codec_params;
      codec_params.encode_cmd = cfg.codec_encode_cmd;
      codec_params.decode_cmd = cfg.codec_decode_cmd;

      AudioBuffer degraded;
      {
        detail::StageClock clock{report.degrade_seconds, mu};
        degraded = degrade(clean48, noise, rir, spec, codec_params);
        save_wav(degraded, degraded_path.string(), WavDepth::float32);
      }

      AudioBuffer recovered;
      {
        detail::StageClock clock{report.recover_seconds, mu};
        recovered = recover(degraded, *enhancer, cfg.target_lufs).audio;
        save_wav(recovered, recovered_path.string(), WavDepth::float32);
      }

      AudioBuffer restored;
      {
        detail::StageClock clock{report.restore_seconds, mu};
        RestoreParams params;
        params.sample_steps = cfg.sample_steps;
        params.seed = derive_seed(item_seed, "restore");
        params.gl_iterations = cfg.gl_iterations;
        params.nnls_iterations = cfg.nnls_iterations;
        params.codec_config = {cfg.codec_patch, cfg.codec_kept, cfg.db_floor,
                               cfg.db_ceil};
        restored = restore(recovered, *denoiser, schedule, params);
        save_wav(restored, restored_path.string(), WavDepth::float32);
      }

      {
        detail::StageClock clock{report.evaluate_seconds, mu};
        result.row = compute_metric_row(result.item_id, 0, clean48, restored,
                                        record.external_mos);
      }

      nlohmann::json done;
      done["item_id"] = result.item_id;
      done["seed"] = item_seed;
      done["degradation"] = result.degradation;
      {
        std::vector<MetricRow> one = {result.row};
        auto csv = metrics_to_csv(one);
        done["metrics_csv_row"] = csv.substr(csv.find('\n') + 1,
                                             csv.rfind('\n') - csv.find('\n') - 1);
      }
      std::ofstream f(done_path);
      f << done.dump(2) << "\n";
      result.ok = true;
    } catch (const std::exception& e) {
      result.ok = false;
      result.error = e.what();
      std::lock_guard<std::mutex> lock(mu);
      std::fprintf(stderr, "[pipeline] item %s failed: %s\n",
                   result.item_id.c_str(), e.what());
    }
    std::chrono::duration<double> d = std::chrono::steady_clock::now() - t0;
    result.seconds = d.count();
    results[index] = std::move(result);
  };

  size_t workers = std::min<size_t>(static_cast<size_t>(cfg.jobs), speech.size());
  if (workers <= 1) {
    for (size_t i = 0; i < speech.size(); ++i) process_item(i);
  } else {
    std::vector<std::thread> pool;
    for (size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (size_t i = next.fetch_add(1); i < speech.size();
             i = next.fetch_add(1))
          process_item(i);
      });
    for (auto& t : pool) t.join();
  }

  report.items = std::move(results);
  std::sort(report.items.begin(), report.items.end(),
            [](const ItemResult& a, const ItemResult& b) {
              return a.item_id < b.item_id;
            });

  std::vector<MetricRow> rows;
  for (const auto& item : report.items) {
    if (!item.ok) {
      ++report.failed;
      continue;
    }
    rows.push_back(item.row);
  }
  {
    std::ofstream f(run_dir / "metrics.csv");
    f << metrics_to_csv(rows);
  }

  nlohmann::json j;
  j["run_id"] = report.run_id;
  j["config_hash"] = hex_string(report.config_hash);
  j["failed"] = report.failed;
  j["stage_seconds"] = {{"degrade", report.degrade_seconds},
                        {"recover", report.recover_seconds},
                        {"restore", report.restore_seconds},
                        {"evaluate", report.evaluate_seconds}};
  auto& items = j["items"] = nlohmann::json::array();
  for (const auto& item : report.items) {
    nlohmann::json ij;
    ij["item_id"] = item.item_id;
    ij["ok"] = item.ok;
    ij["skipped"] = item.skipped;
    if (!item.error.empty()) ij["error"] = item.error;
    ij["seconds"] = item.seconds;
    ij["degradation"] = item.degradation;
    items.push_back(std::move(ij));
  }
  std::ofstream f(run_dir / "report.json");
  f << j.dump(2) << "\n";
  return report;
}

}  // namespace resto
