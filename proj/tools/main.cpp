// resto: two-stage speech restoration toolkit.
//
// Subcommands cover the individual stages (degrade, recover, restore), the
// full manifest-driven pipeline, evaluation, iterative refinement, denoiser
// fitting, impulse-response synthesis, and manifest curation. Exit codes:
// 0 success, 1 any item failed, 2 invalid configuration or usage.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "resto/resto.hpp"

namespace fs = std::filesystem;
using namespace resto;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitItemFailed = 1;
constexpr int kExitBadConfig = 2;

PipelineConfig resolve_config(const std::string& config_path) {
  PipelineConfig cfg;
  if (!config_path.empty()) {
    cfg = load_config(config_path);
  } else {
    apply_env_overrides(cfg);
  }
  return cfg;
}

std::unique_ptr<Denoiser> resolve_denoiser(const PipelineConfig& cfg,
                                           NoiseSchedule& schedule) {
  if (cfg.denoiser_file.empty()) {
    schedule = make_schedule(cfg.schedule_t, cfg.beta_1, cfg.beta_t);
    return std::make_unique<ConditioningDenoiser>();
  }
  auto loaded = load_denoiser(cfg.denoiser_file);
  schedule = std::move(loaded.schedule);
  return std::make_unique<LinearDenoiser>(std::move(loaded.denoiser));
}

RestoreParams restore_params_from(const PipelineConfig& cfg, uint64_t seed) {
  RestoreParams params;
  params.sample_steps = cfg.sample_steps;
  params.seed = seed;
  params.gl_iterations = cfg.gl_iterations;
  params.nnls_iterations = cfg.nnls_iterations;
  params.codec_config = {cfg.codec_patch, cfg.codec_kept, cfg.db_floor,
                         cfg.db_ceil};
  return params;
}

// degrade -> recover -> restore as one callable, the refinement stage
std::function<AudioBuffer(const AudioBuffer&)> full_stage(
    const PipelineConfig& cfg, const Enhancer& enhancer,
    const Denoiser& denoiser, const NoiseSchedule& schedule, uint64_t seed) {
  return [&, seed](const AudioBuffer& in) {
    AudioBuffer recovered = recover(in, enhancer, cfg.target_lufs).audio;
    return restore(recovered, denoiser, schedule,
                   restore_params_from(cfg, seed));
  };
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-stage speech restoration toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "key = value configuration file")
      ->envname("RESTO_CONFIG");

  // ---- degrade ----
  auto* cmd_degrade = app.add_subcommand(
      "degrade", "synthesize a degraded copy of a clean recording");
  std::string deg_in, deg_noise, deg_rir, deg_out, deg_spec_out;
  std::string deg_profile = "eval";
  uint64_t deg_seed = 1;
  cmd_degrade->add_option("--in", deg_in, "clean wav")->required();
  cmd_degrade->add_option("--out", deg_out, "degraded wav")->required();
  cmd_degrade->add_option("--noise", deg_noise, "noise wav (white noise if absent)");
  cmd_degrade->add_option("--rir", deg_rir, "impulse response wav (synthesized if absent)");
  cmd_degrade->add_option("--profile", deg_profile, "train | eval")
      ->check(CLI::IsMember({"train", "eval"}));
  cmd_degrade->add_option("--seed", deg_seed, "draw seed");
  cmd_degrade->add_option("--spec-out", deg_spec_out,
                          "write the sampled degradation as json");

  // ---- recover ----
  auto* cmd_recover =
      app.add_subcommand("recover", "loudness-normalized enhancement to 16 kHz");
  std::string rec_in, rec_out;
  cmd_recover->add_option("--in", rec_in, "input wav")->required();
  cmd_recover->add_option("--out", rec_out, "recovered wav (16 kHz)")->required();

  // ---- restore ----
  auto* cmd_restore = app.add_subcommand(
      "restore", "latent-diffusion restoration of a 16 kHz estimate to 48 kHz");
  std::string res_in, res_out;
  std::optional<uint64_t> res_seed;
  std::optional<size_t> res_steps;
  cmd_restore->add_option("--in", res_in, "16 kHz wav")->required();
  cmd_restore->add_option("--out", res_out, "restored wav (48 kHz)")->required();
  cmd_restore->add_option("--seed", res_seed, "sampler seed");
  cmd_restore->add_option("--steps", res_steps, "sampler steps");

  // ---- pipeline ----
  auto* cmd_pipeline = app.add_subcommand(
      "pipeline", "degrade, recover, restore and evaluate a manifest");
  std::optional<uint64_t> pipe_seed;
  std::optional<std::string> pipe_out;
  std::optional<int> pipe_jobs;
  cmd_pipeline->add_option("--seed", pipe_seed, "master seed override");
  cmd_pipeline->add_option("--out", pipe_out, "output directory override");
  cmd_pipeline->add_option("--jobs", pipe_jobs, "worker count override");

  // ---- evaluate ----
  auto* cmd_evaluate =
      app.add_subcommand("evaluate", "objective metrics for a clean/processed pair");
  std::string eval_clean, eval_processed, eval_out, eval_id = "pair";
  cmd_evaluate->add_option("--clean", eval_clean, "reference wav")->required();
  cmd_evaluate->add_option("--processed", eval_processed, "estimate wav")->required();
  cmd_evaluate->add_option("--out", eval_out, "append the row to this csv");
  cmd_evaluate->add_option("--item-id", eval_id, "row label");

  // ---- refine ----
  auto* cmd_refine = app.add_subcommand(
      "refine", "feed the restoration output back through the pipeline");
  std::string ref_in, ref_out_dir, ref_stage = "full";
  int ref_iterations = 5;
  std::optional<uint64_t> ref_seed;
  cmd_refine->add_option("--in", ref_in, "input wav")->required();
  cmd_refine->add_option("--out", ref_out_dir, "output directory")->required();
  cmd_refine->add_option("--iterations", ref_iterations, "refinement passes");
  cmd_refine->add_option("--stage", ref_stage, "full | restore | identity")
      ->check(CLI::IsMember({"full", "restore", "identity"}));
  cmd_refine->add_option("--seed", ref_seed, "sampler seed");

  // ---- fit-denoiser ----
  auto* cmd_fit = app.add_subcommand(
      "fit-denoiser", "fit the bucketed affine denoiser from a manifest");
  std::string fit_out;
  double fit_ridge = 1e-6;
  std::optional<uint64_t> fit_seed;
  size_t fit_buckets = 32;
  cmd_fit->add_option("--out", fit_out, "denoiser sidecar json")->required();
  cmd_fit->add_option("--ridge", fit_ridge, "ridge regularizer");
  cmd_fit->add_option("--seed", fit_seed, "fit seed");
  cmd_fit->add_option("--buckets", fit_buckets, "timestep buckets");

  // ---- synth-rir ----
  auto* cmd_rir = app.add_subcommand("synth-rir", "synthesize an impulse response");
  double rir_t60 = 0.3, rir_duration = 0.0;
  int rir_rate = 48000;
  uint64_t rir_seed = 1;
  std::string rir_out;
  cmd_rir->add_option("--t60", rir_t60, "reverberation time, seconds")->required();
  cmd_rir->add_option("--duration", rir_duration, "length, seconds (default 1.5 x t60)");
  cmd_rir->add_option("--rate", rir_rate, "sample rate");
  cmd_rir->add_option("--seed", rir_seed, "tail seed");
  cmd_rir->add_option("--out", rir_out, "output wav")->required();

  // ---- manifest ----
  auto* cmd_manifest = app.add_subcommand("manifest", "curation utilities");
  cmd_manifest->require_subcommand(1);
  auto* cmd_filter = cmd_manifest->add_subcommand(
      "filter", "drop speech rows scored below the MOS threshold");
  std::string man_in, man_out;
  double man_threshold = 4.0;
  cmd_filter->add_option("--in", man_in, "manifest in")->required();
  cmd_filter->add_option("--out", man_out, "manifest out")->required();
  cmd_filter->add_option("--threshold", man_threshold, "MOS threshold");
  auto* cmd_split = cmd_manifest->add_subcommand(
      "split", "reassign noise/rir rows to train and eval");
  std::string split_in, split_out;
  double split_fraction = 0.8;
  uint64_t split_seed = 1;
  cmd_split->add_option("--in", split_in, "manifest in")->required();
  cmd_split->add_option("--out", split_out, "manifest out")->required();
  cmd_split->add_option("--train-fraction", split_fraction, "train share");
  cmd_split->add_option("--seed", split_seed, "shuffle seed");

  CLI11_PARSE(app, argc, argv);

  try {
    PipelineConfig cfg = resolve_config(config_path);

    if (*cmd_degrade) {
      AudioBuffer clean = load_wav(deg_in);
      DegradationSpec spec = sample_degradation(
          deg_profile == "train" ? DegradationProfile::train
                                 : DegradationProfile::eval,
          deg_seed);
      AudioBuffer noise;
      if (!deg_noise.empty()) {
        noise = resample(load_wav(deg_noise), clean.sample_rate);
      } else {
        noise.sample_rate = clean.sample_rate;
        noise.samples.resize(clean.size());
        Rng rng(derive_seed(deg_seed, "white-noise"));
        for (auto& v : noise.samples) v = 0.1 * rng.normal();
      }
      AudioBuffer rir;
      if (!deg_rir.empty())
        rir = resample(load_wav(deg_rir), clean.sample_rate);
      else
        rir = synth_rir(spec.t60_s, std::max(1.5 * spec.t60_s, 0.2),
                        clean.sample_rate, derive_seed(deg_seed, "rir"));
      CodecParams codec{0.0, cfg.codec_encode_cmd, cfg.codec_decode_cmd};
      AudioBuffer degraded = degrade(clean, noise, rir, spec, codec);
      save_wav(degraded, deg_out, WavDepth::float32);
      std::string spec_json = spec.to_json().dump(2);
      if (!deg_spec_out.empty()) {
        std::ofstream f(deg_spec_out);
        f << spec_json << "\n";
      }
      std::printf("%s\n", spec_json.c_str());
      return kExitOk;
    }

    if (*cmd_recover) {
      auto enhancer = make_enhancer(cfg.enhancer, cfg.enhancer_cmd);
      AudioBuffer in = load_wav(rec_in);
      RecoverResult result = recover(in, *enhancer, cfg.target_lufs);
      auto info = save_wav(result.audio, rec_out, WavDepth::float32);
      std::printf("recovered %s -> %s (16 kHz, gain %.4f%s%s)\n", rec_in.c_str(),
                  rec_out.c_str(), result.loudness_gain,
                  result.loudness_skipped ? ", loudness skipped" : "",
                  info.clipped ? ", clipped" : "");
      return kExitOk;
    }

    if (*cmd_restore) {
      NoiseSchedule schedule;
      auto denoiser = resolve_denoiser(cfg, schedule);
      if (res_steps) cfg.sample_steps = *res_steps;
      AudioBuffer in = load_wav(res_in);
      AudioBuffer out =
          restore(in, *denoiser, schedule,
                  restore_params_from(cfg, res_seed.value_or(cfg.master_seed)));
      save_wav(out, res_out, WavDepth::float32);
      std::printf("restored %s -> %s (48 kHz, %zu steps, %s denoiser)\n",
                  res_in.c_str(), res_out.c_str(), cfg.sample_steps,
                  denoiser->name().c_str());
      return kExitOk;
    }

    if (*cmd_pipeline) {
      if (pipe_seed) cfg.master_seed = *pipe_seed;
      if (pipe_out) cfg.out_dir = *pipe_out;
      if (pipe_jobs) cfg.jobs = *pipe_jobs;
      auto errors = validate_config(cfg);
      if (!errors.empty()) {
        for (const auto& e : errors)
          std::fprintf(stderr, "config error: %s\n", e.c_str());
        return kExitBadConfig;
      }
      RunReport report = run_pipeline(cfg);
      std::printf("run %s: %zu items, %zu failed -> %s\n", report.run_id.c_str(),
                  report.items.size(), report.failed, report.run_dir.c_str());
      return report.failed == 0 ? kExitOk : kExitItemFailed;
    }

    if (*cmd_evaluate) {
      AudioBuffer clean = load_wav(eval_clean);
      AudioBuffer processed = load_wav(eval_processed);
      MetricRow row = compute_metric_row(eval_id, 0, clean, processed);
      std::vector<MetricRow> rows = {row};
      std::string csv = metrics_to_csv(rows);
      std::printf("%s", csv.c_str());
      if (!eval_out.empty()) {
        bool fresh = !fs::exists(eval_out);
        std::ofstream f(eval_out, std::ios::app);
        if (fresh)
          f << csv;
        else
          f << csv.substr(csv.find('\n') + 1);
      }
      return kExitOk;
    }

    if (*cmd_refine) {
      NoiseSchedule schedule;
      auto denoiser = resolve_denoiser(cfg, schedule);
      auto enhancer = make_enhancer(cfg.enhancer, cfg.enhancer_cmd);
      uint64_t seed = ref_seed.value_or(cfg.master_seed);

      std::function<AudioBuffer(const AudioBuffer&)> stage;
      if (ref_stage == "identity")
        stage = [](const AudioBuffer& b) { return b; };
      else if (ref_stage == "restore")
        stage = [&](const AudioBuffer& b) {
          return restore(b, *denoiser, schedule, restore_params_from(cfg, seed));
        };
      else
        stage = full_stage(cfg, *enhancer, *denoiser, schedule, seed);

      AudioBuffer in = load_wav(ref_in);
      std::string item_id = fs::path(ref_in).stem().string();
      auto steps = iterative_refine(in, stage, ref_iterations, item_id);

      fs::create_directories(ref_out_dir);
      std::vector<MetricRow> rows;
      for (const auto& step : steps) {
        rows.push_back(step.row);
        auto name = item_id + "_iter" + std::to_string(step.row.iteration) + ".wav";
        save_wav(step.audio, (fs::path(ref_out_dir) / name).string(),
                 WavDepth::float32);
      }
      refinement_report(rows, ref_out_dir);
      std::printf("refined %s for %d iterations -> %s\n", ref_in.c_str(),
                  ref_iterations, ref_out_dir.c_str());
      return kExitOk;
    }

    if (*cmd_fit) {
      // pairs: clean latents vs latents of the degraded-then-recovered copy,
      // patch by patch, over the manifest's train speech items
      require(!cfg.manifest.empty(), "fit-denoiser: config needs a manifest");
      Manifest manifest = ingest_manifest(cfg.manifest);
      auto speech = manifest.select(AssetRole::speech, AssetSplit::train);
      require(!speech.empty(), "fit-denoiser: no train speech in manifest");
      auto noise_assets = manifest.select(AssetRole::noise, AssetSplit::train);
      auto enhancer = make_enhancer(cfg.enhancer, cfg.enhancer_cmd);
      NoiseSchedule schedule = make_schedule(cfg.schedule_t, cfg.beta_1, cfg.beta_t);
      CodecConfig codec_cfg{cfg.codec_patch, cfg.codec_kept, cfg.db_floor,
                            cfg.db_ceil};

      std::vector<std::pair<std::vector<double>, std::vector<double>>> pairs;
      for (const auto& record : speech) {
        uint64_t item_seed = derive_seed(cfg.master_seed, record.path);
        Rng rng(item_seed);
        AudioBuffer clean48 = resample(load_wav(record.path), 48000);
        DegradationSpec spec =
            sample_degradation(DegradationProfile::train, item_seed);
        spec.codec = CodecMode::none;
        AudioBuffer noise;
        if (!noise_assets.empty()) {
          auto pick = static_cast<size_t>(rng.uniform_int(
              0, static_cast<int64_t>(noise_assets.size() - 1)));
          noise = resample(load_wav(noise_assets[pick].path), 48000);
        } else {
          noise.sample_rate = 48000;
          noise.samples.resize(clean48.size());
          Rng noise_rng = rng.fork(1);
          for (auto& v : noise.samples) v = 0.1 * noise_rng.normal();
        }
        AudioBuffer rir =
            synth_rir(spec.t60_s, std::max(1.5 * spec.t60_s, 0.2), 48000,
                      rng.fork(2).next());
        AudioBuffer degraded = degrade(clean48, noise, rir, spec);
        AudioBuffer recovered = recover(degraded, *enhancer, cfg.target_lufs).audio;
        AudioBuffer wide = resample(recovered, 48000);

        size_t common = std::min(clean48.size(), wide.size());
        clean48.samples.resize(common);
        wide.samples.resize(common);
        Latent target = encode(mel_spectrogram(clean48, {}, true), codec_cfg);
        Latent cond = encode(mel_spectrogram(wide, {}, true), codec_cfg);
        size_t patches = std::min(target.patch_count(), cond.patch_count());
        for (size_t pidx = 0; pidx < patches; ++pidx) {
          auto begin_t = target.coeffs.begin() +
                         static_cast<ptrdiff_t>(pidx * codec_cfg.kept);
          auto begin_c = cond.coeffs.begin() +
                         static_cast<ptrdiff_t>(pidx * codec_cfg.kept);
          pairs.emplace_back(
              std::vector<double>(begin_t, begin_t + static_cast<ptrdiff_t>(codec_cfg.kept)),
              std::vector<double>(begin_c, begin_c + static_cast<ptrdiff_t>(codec_cfg.kept)));
        }
      }
      std::printf("fit-denoiser: %zu patch pairs from %zu items\n", pairs.size(),
                  speech.size());
      auto fitted = fit_linear_denoiser(pairs, schedule, fit_ridge,
                                        fit_seed.value_or(cfg.master_seed),
                                        fit_buckets);
      save_denoiser(fitted, schedule, fit_out);
      std::printf("wrote %s (%zu buckets)\n", fit_out.c_str(),
                  fitted.buckets().size());
      return kExitOk;
    }

    if (*cmd_rir) {
      if (rir_duration <= 0.0) rir_duration = std::max(1.5 * rir_t60, 0.2);
      AudioBuffer rir = synth_rir(rir_t60, rir_duration, rir_rate, rir_seed);
      save_wav(rir, rir_out, WavDepth::float32);
      auto est = schroeder_t60(rir);
      std::printf("synth-rir t60 %.3f s (schroeder estimate %.3f s) -> %s\n",
                  rir_t60, est.valid ? est.seconds : 0.0, rir_out.c_str());
      return kExitOk;
    }

    if (*cmd_filter) {
      Manifest manifest = ingest_manifest(man_in);
      MosFilterResult result = filter_by_mos(manifest, man_threshold);
      emit_manifest(result.manifest, man_out);
      std::printf("filter: kept %zu rows, dropped %zu, %zu unscored passed\n",
                  result.manifest.records.size(), result.dropped,
                  result.unscored);
      if (result.manifest.records.empty())
        std::fprintf(stderr, "warning: manifest is now empty\n");
      return kExitOk;
    }

    if (*cmd_split) {
      Manifest manifest = ingest_manifest(split_in);
      Manifest out = split_assets(manifest, split_fraction, split_seed);
      emit_manifest(out, split_out);
      std::printf("split: %zu rows -> %s\n", out.records.size(),
                  split_out.c_str());
      return kExitOk;
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return std::string(e.what()).find("invalid config") != std::string::npos
               ? kExitBadConfig
               : kExitItemFailed;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitItemFailed;
  }
  return kExitOk;
}
