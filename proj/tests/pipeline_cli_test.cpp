#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "resto/config.hpp"
#include "resto/manifest.hpp"
#include "resto/pipeline.hpp"
#include "support/corpus.hpp"

using namespace resto;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "resto_pipeline_test" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream f(path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  std::string cmd = std::string(RESTO_CLI_PATH) + " " + args;
  int status = std::system(cmd.c_str());
  return status == -1 ? -1 : WEXITSTATUS(status);
}

}  // namespace

// ---------------------------------------------------------------- Manifest

TEST(Manifest, EmptyFileYieldsEmptyManifest) {
  auto dir = fresh_dir("empty_manifest");
  auto path = (dir / "empty.csv").string();
  std::ofstream(path).close();
  auto manifest = ingest_manifest(path);
  EXPECT_TRUE(manifest.records.empty());
}

TEST(Manifest, MissingFileNamesTheRow) {
  auto dir = fresh_dir("missing_file");
  auto path = (dir / "manifest.csv").string();
  std::ofstream f(path);
  f << kManifestCsvHeader << "\n";
  f << (dir / "nope.wav").string() << ",1.0,16000,,eval,speech\n";
  f.close();
  try {
    ingest_manifest(path);
    FAIL() << "expected ingest to fail";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("nope.wav"), std::string::npos);
  }
}

TEST(Manifest, DuplicatePathRejected) {
  auto dir = fresh_dir("dup_path");
  auto corpus = testsig::build_corpus(dir, 1, 1.0, 16000, 3);
  std::ofstream f(dir / "dup.csv");
  f << kManifestCsvHeader << "\n";
  f << corpus.speech_paths[0] << ",,,,eval,speech\n";
  f << corpus.speech_paths[0] << ",,,,train,speech\n";
  f.close();
  EXPECT_THROW(ingest_manifest((dir / "dup.csv").string()), Error);
}

TEST(Manifest, ProbesDurationAndRoundTrips) {
  auto dir = fresh_dir("probe");
  auto corpus = testsig::build_corpus(dir, 2, 1.5, 16000, 5, true, true);
  auto manifest = ingest_manifest(corpus.manifest_path);
  ASSERT_EQ(manifest.records.size(), 3u);
  for (const auto& r : manifest.records) {
    EXPECT_GT(r.duration_s, 0.0);
    EXPECT_EQ(r.sample_rate, 16000);
  }
  auto copy = (dir / "copy.csv").string();
  emit_manifest(manifest, copy);
  auto again = ingest_manifest(copy);
  ASSERT_EQ(again.records.size(), manifest.records.size());
  for (size_t i = 0; i < again.records.size(); ++i) {
    EXPECT_EQ(again.records[i].path, manifest.records[i].path);
    EXPECT_EQ(again.records[i].role, manifest.records[i].role);
    EXPECT_EQ(again.records[i].split, manifest.records[i].split);
    EXPECT_NEAR(again.records[i].duration_s, manifest.records[i].duration_s, 1e-6);
  }
}

TEST(Manifest, JsonLinesSupported) {
  auto dir = fresh_dir("jsonl");
  auto corpus = testsig::build_corpus(dir, 1, 1.0, 16000, 7);
  auto path = (dir / "manifest.jsonl").string();
  std::ofstream f(path);
  f << R"({"path":")" << corpus.speech_paths[0]
    << R"(","split":"eval","role":"speech","external_mos":4.4})" << "\n";
  f.close();
  auto manifest = ingest_manifest(path);
  ASSERT_EQ(manifest.records.size(), 1u);
  EXPECT_NEAR(manifest.records[0].external_mos, 4.4, 1e-9);
  EXPECT_GT(manifest.records[0].duration_s, 0.9);
}

TEST(MosFilter, StrictThreshold) {
  Manifest manifest;
  for (double mos : {3.9, 4.0, 4.5}) {
    ManifestRecord r;
    r.path = "p" + std::to_string(mos);
    r.duration_s = 1.0;
    r.external_mos = mos;
    manifest.records.push_back(r);
  }
  auto result = filter_by_mos(manifest, 4.0);
  ASSERT_EQ(result.manifest.records.size(), 2u);  // 4.0 stays, 3.9 dropped
  EXPECT_EQ(result.dropped, 1u);
  EXPECT_EQ(result.manifest.records[0].external_mos, 4.0);

  auto identity = filter_by_mos(manifest, 0.0);
  EXPECT_EQ(identity.manifest.records.size(), 3u);

  auto none = filter_by_mos(manifest, 5.0);
  EXPECT_TRUE(none.manifest.records.empty());
  EXPECT_EQ(none.dropped, 3u);
}

TEST(MosFilter, UnscoredSpeechPassesWithWarning) {
  Manifest manifest;
  ManifestRecord r;
  r.path = "unscored.wav";
  r.duration_s = 1.0;
  manifest.records.push_back(r);
  auto result = filter_by_mos(manifest, 4.0);
  EXPECT_EQ(result.manifest.records.size(), 1u);
  EXPECT_EQ(result.unscored, 1u);
}

TEST(SplitAssets, EightyTwenty) {
  Manifest manifest;
  for (int i = 0; i < 10; ++i) {
    ManifestRecord r;
    r.path = "noise" + std::to_string(i) + ".wav";
    r.duration_s = 1.0;
    r.role = AssetRole::noise;
    manifest.records.push_back(r);
  }
  auto out = split_assets(manifest, 0.8, 42);
  size_t train = 0, eval = 0;
  for (const auto& r : out.records)
    (r.split == AssetSplit::train ? train : eval) += 1;
  EXPECT_EQ(train, 8u);
  EXPECT_EQ(eval, 2u);

  auto again = split_assets(manifest, 0.8, 42);
  for (size_t i = 0; i < out.records.size(); ++i)
    EXPECT_EQ(out.records[i].split, again.records[i].split);

  // union preserved, disjoint by construction
  EXPECT_EQ(out.records.size(), manifest.records.size());

  Manifest tiny;
  ManifestRecord r;
  r.path = "only.wav";
  r.duration_s = 1.0;
  r.role = AssetRole::rir;
  tiny.records.push_back(r);
  EXPECT_THROW(split_assets(tiny, 0.8, 1), Error);
}

// ---------------------------------------------------------------- Config

TEST(Config, LoadValidateSnapshot) {
  auto dir = fresh_dir("config");
  auto corpus = testsig::build_corpus(dir, 1, 1.0, 16000, 11);
  auto path = testsig::write_config(dir, "manifest = " + corpus.manifest_path +
                                             "\n# comment line\n"
                                             "master_seed = 7\n"
                                             "jobs = 1\n"
                                             "sample_steps = 25\n");
  auto cfg = load_config(path, false);
  EXPECT_EQ(cfg.master_seed, 7u);
  EXPECT_EQ(cfg.sample_steps, 25u);
  EXPECT_TRUE(validate_config(cfg).empty());

  cfg.sample_steps = 5000;  // > schedule_t
  EXPECT_FALSE(validate_config(cfg).empty());

  auto bad = testsig::write_config(dir, "unknown_key = 3\n");
  EXPECT_THROW(load_config(bad, false), Error);
}

TEST(Config, EnvOverride) {
  auto dir = fresh_dir("config_env");
  auto corpus = testsig::build_corpus(dir, 1, 1.0, 16000, 13);
  auto path = testsig::write_config(dir, "manifest = " + corpus.manifest_path +
                                             "\nmaster_seed = 1\n");
  setenv("RESTO_MASTER_SEED", "99", 1);
  auto cfg = load_config(path, true);
  unsetenv("RESTO_MASTER_SEED");
  EXPECT_EQ(cfg.master_seed, 99u);
}

TEST(Config, HashTracksContent) {
  PipelineConfig a, b;
  a.manifest = b.manifest = "m.csv";
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.master_seed = 2;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(run_id(a).size(), 12u);
}

// ---------------------------------------------------------------- Pipeline

TEST(Pipeline, ThreeItemShapeContract) {
  auto dir = fresh_dir("run3");
  auto corpus = testsig::build_corpus(dir, 3, 1.2, 48000, 17);
  PipelineConfig cfg;
  cfg.manifest = corpus.manifest_path;
  cfg.out_dir = (dir / "runs").string();
  cfg.jobs = 2;
  cfg.sample_steps = 8;
  cfg.gl_iterations = 6;
  cfg.nnls_iterations = 15;

  auto report = run_pipeline(cfg);
  EXPECT_EQ(report.failed, 0u);
  ASSERT_EQ(report.items.size(), 3u);

  for (const auto& item : report.items) {
    auto degraded = load_wav(report.run_dir + "/" + item.item_id + "_degraded.wav");
    auto recovered = load_wav(report.run_dir + "/" + item.item_id + "_recovered.wav");
    auto restored = load_wav(report.run_dir + "/" + item.item_id + "_restored.wav");
    EXPECT_EQ(degraded.sample_rate, 48000);
    EXPECT_EQ(recovered.sample_rate, 16000);
    EXPECT_EQ(restored.sample_rate, 48000);
    EXPECT_NEAR(recovered.duration_s(), 1.2, 0.011);
    EXPECT_NEAR(restored.duration_s(), 1.2, 0.011);
  }
  auto rows = metrics_from_csv(slurp(fs::path(report.run_dir) / "metrics.csv"));
  EXPECT_EQ(rows.size(), 3u);
  EXPECT_TRUE(fs::exists(fs::path(report.run_dir) / "config.txt"));
  EXPECT_TRUE(fs::exists(fs::path(report.run_dir) / "report.json"));
}

TEST(Pipeline, ResumeSkipsCompletedItems) {
  auto dir = fresh_dir("resume");
  auto corpus = testsig::build_corpus(dir, 2, 1.0, 16000, 19);
  PipelineConfig cfg;
  cfg.manifest = corpus.manifest_path;
  cfg.out_dir = (dir / "runs").string();
  cfg.jobs = 1;
  cfg.sample_steps = 5;
  cfg.gl_iterations = 4;
  cfg.nnls_iterations = 10;

  auto first = run_pipeline(cfg);
  EXPECT_EQ(first.failed, 0u);
  auto csv_first = slurp(fs::path(first.run_dir) / "metrics.csv");

  auto second = run_pipeline(cfg);
  EXPECT_EQ(second.run_dir, first.run_dir);
  EXPECT_EQ(second.failed, 0u);
  for (const auto& item : second.items) EXPECT_TRUE(item.skipped);
  EXPECT_EQ(slurp(fs::path(second.run_dir) / "metrics.csv"), csv_first);
}

TEST(Pipeline, SeedChangesDegradationDraws) {
  auto dir = fresh_dir("seeds");
  auto corpus = testsig::build_corpus(dir, 1, 1.0, 16000, 23);
  PipelineConfig cfg;
  cfg.manifest = corpus.manifest_path;
  cfg.out_dir = (dir / "runs").string();
  cfg.jobs = 1;
  cfg.sample_steps = 5;
  cfg.gl_iterations = 2;
  cfg.nnls_iterations = 8;

  auto a = run_pipeline(cfg);
  cfg.master_seed = 2;
  auto b = run_pipeline(cfg);
  ASSERT_EQ(a.items.size(), 1u);
  ASSERT_EQ(b.items.size(), 1u);
  EXPECT_NE(a.run_id, b.run_id);
  EXPECT_NE(a.items[0].degradation.at("snr_db").get<double>(),
            b.items[0].degradation.at("snr_db").get<double>());
}

TEST(Pipeline, FailedItemLoggedRunContinues) {
  auto dir = fresh_dir("failure");
  auto corpus = testsig::build_corpus(dir, 2, 1.0, 16000, 29);
  // rewrite the manifest with explicit durations so ingest skips probing,
  // then sabotage one speech file: the damage only surfaces in the worker
  {
    std::ofstream m(corpus.manifest_path, std::ios::trunc);
    m << kManifestCsvHeader << "\n";
    for (const auto& p : corpus.speech_paths)
      m << p << ",1.0,16000,,eval,speech\n";
  }
  {
    std::ofstream f(corpus.speech_paths[0], std::ios::trunc | std::ios::binary);
    f << "RIFFxxxxWAVE";
  }
  PipelineConfig cfg;
  cfg.manifest = corpus.manifest_path;
  cfg.out_dir = (dir / "runs").string();
  cfg.jobs = 1;
  cfg.sample_steps = 5;
  cfg.gl_iterations = 2;
  cfg.nnls_iterations = 8;

  auto report = run_pipeline(cfg);
  EXPECT_EQ(report.failed, 1u);
  size_t ok = 0;
  for (const auto& item : report.items) ok += item.ok ? 1 : 0;
  EXPECT_EQ(ok, 1u);
}

// ---------------------------------------------------------------- CLI

TEST(Cli, EndToEndSubcommands) {
  auto dir = fresh_dir("cli");
  auto corpus = testsig::build_corpus(dir, 1, 1.2, 48000, 31);
  auto clean = corpus.speech_paths[0];

  auto degraded = (dir / "degraded.wav").string();
  ASSERT_EQ(run_cli("degrade --in " + clean + " --out " + degraded +
                    " --seed 4 --spec-out " + (dir / "spec.json").string() +
                    " > /dev/null"),
            0);
  EXPECT_TRUE(fs::exists(degraded));

  auto recovered = (dir / "recovered.wav").string();
  ASSERT_EQ(run_cli("recover --in " + degraded + " --out " + recovered +
                    " > /dev/null"),
            0);
  EXPECT_EQ(load_wav(recovered).sample_rate, 16000);

  auto cfg_path = testsig::write_config(
      dir, "sample_steps = 6\ngl_iterations = 4\nnnls_iterations = 10\n");
  auto restored = (dir / "restored.wav").string();
  ASSERT_EQ(run_cli("--config " + cfg_path + " restore --in " + recovered +
                    " --out " + restored + " --seed 9 > /dev/null"),
            0);
  EXPECT_EQ(load_wav(restored).sample_rate, 48000);

  auto metrics_csv = (dir / "eval.csv").string();
  ASSERT_EQ(run_cli("evaluate --clean " + clean + " --processed " + restored +
                    " --item-id demo --out " + metrics_csv + " > /dev/null"),
            0);
  auto rows = metrics_from_csv(slurp(metrics_csv));
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].item_id, "demo");
}

TEST(Cli, PipelineExitCodes) {
  auto dir = fresh_dir("cli_pipeline");
  auto corpus = testsig::build_corpus(dir, 2, 1.0, 16000, 37);
  auto cfg_path = testsig::write_config(
      dir, "manifest = " + corpus.manifest_path + "\nout_dir = " +
               (dir / "runs").string() +
               "\njobs = 2\nsample_steps = 5\ngl_iterations = 2\n"
               "nnls_iterations = 8\n");
  EXPECT_EQ(run_cli("--config " + cfg_path + " pipeline > /dev/null 2>&1"), 0);

  // invalid config: bad enhancer name
  auto bad_cfg = testsig::write_config(
      dir, "manifest = " + corpus.manifest_path + "\nenhancer = neural\n");
  EXPECT_EQ(run_cli("--config " + bad_cfg + " pipeline > /dev/null 2>&1"), 2);

  // one item sabotaged after probing: run finishes but exits 1
  auto broken_dir = fresh_dir("cli_pipeline_broken");
  auto broken = testsig::build_corpus(broken_dir, 2, 1.0, 16000, 38);
  {
    std::ofstream m(broken.manifest_path, std::ios::trunc);
    m << kManifestCsvHeader << "\n";
    for (const auto& p : broken.speech_paths) m << p << ",1.0,16000,,eval,speech\n";
  }
  std::ofstream(broken.speech_paths[0], std::ios::trunc) << "junk";
  auto broken_cfg = testsig::write_config(
      broken_dir, "manifest = " + broken.manifest_path + "\nout_dir = " +
                      (broken_dir / "runs").string() +
                      "\njobs = 1\nsample_steps = 5\ngl_iterations = 2\n"
                      "nnls_iterations = 8\n");
  EXPECT_EQ(run_cli("--config " + broken_cfg + " pipeline > /dev/null 2>&1"), 1);
}

TEST(Cli, RefineIdentityEmitsIdenticalRows) {
  auto dir = fresh_dir("cli_refine");
  auto corpus = testsig::build_corpus(dir, 1, 2.0, 16000, 41);
  auto out_dir = (dir / "refine_out").string();
  ASSERT_EQ(run_cli("refine --in " + corpus.speech_paths[0] + " --out " +
                    out_dir + " --iterations 5 --stage identity > /dev/null"),
            0);
  auto rows = metrics_from_csv(slurp(fs::path(out_dir) / "metrics.csv"));
  ASSERT_EQ(rows.size(), 5u);
  for (const auto& r : rows) {
    EXPECT_NEAR(r.estoi, rows[0].estoi, 1e-12);
    EXPECT_EQ(r.si_snr_db, rows[0].si_snr_db);
  }
  EXPECT_TRUE(fs::exists(fs::path(out_dir) / "summary.csv"));
  EXPECT_TRUE(fs::exists(fs::path(out_dir) / "trends.csv"));
  EXPECT_TRUE(fs::exists(fs::path(out_dir) / "trend.svg"));
}

TEST(Cli, ManifestFilterAndSplit) {
  auto dir = fresh_dir("cli_manifest");
  auto corpus = testsig::build_corpus(dir, 5, 1.0, 16000, 43, true, true);
  auto filtered = (dir / "filtered.csv").string();
  ASSERT_EQ(run_cli("manifest filter --in " + corpus.manifest_path + " --out " +
                    filtered + " --threshold 4.0 > /dev/null"),
            0);
  auto manifest = ingest_manifest(filtered);
  for (const auto& r : manifest.records)
    if (r.role == AssetRole::speech) EXPECT_GE(r.external_mos, 4.0);

  // split: build a manifest with several noise rows
  Manifest noisy;
  for (int i = 0; i < 6; ++i) {
    auto path = (dir / ("n" + std::to_string(i) + ".wav")).string();
    save_wav(testsig::white_noise(0.5, 16000, 500 + static_cast<uint64_t>(i)),
             path, WavDepth::float32);
    ManifestRecord r;
    r.path = path;
    r.duration_s = 0.5;
    r.sample_rate = 16000;
    r.role = AssetRole::noise;
    noisy.records.push_back(r);
  }
  auto noisy_path = (dir / "noisy.csv").string();
  emit_manifest(noisy, noisy_path);
  auto split_path = (dir / "split.csv").string();
  ASSERT_EQ(run_cli("manifest split --in " + noisy_path + " --out " +
                    split_path + " --train-fraction 0.8 --seed 3 > /dev/null"),
            0);
  auto split = ingest_manifest(split_path);
  size_t train = 0;
  for (const auto& r : split.records)
    train += r.split == AssetSplit::train ? 1 : 0;
  EXPECT_EQ(train, 5u);  // round(0.8 * 6)
}

TEST(Cli, FitDenoiserProducesLoadableSidecar) {
  auto dir = fresh_dir("cli_fit");
  // train split corpus: 8 x 3 s gives ~1150 patch pairs, above the minimum
  Manifest manifest;
  for (int i = 0; i < 8; ++i) {
    auto path = (dir / ("train_" + std::to_string(i) + ".wav")).string();
    save_wav(testsig::speech_like(3.0, 16000, 600 + static_cast<uint64_t>(i)),
             path, WavDepth::float32);
    ManifestRecord r;
    r.path = path;
    r.role = AssetRole::speech;
    r.split = AssetSplit::train;
    manifest.records.push_back(r);
  }
  auto manifest_path = (dir / "train.csv").string();
  emit_manifest(manifest, manifest_path);
  auto cfg_path = testsig::write_config(dir, "manifest = " + manifest_path + "\n");
  auto model_path = (dir / "denoiser.json").string();
  ASSERT_EQ(run_cli("--config " + cfg_path + " fit-denoiser --out " +
                    model_path + " --buckets 8 > /dev/null"),
            0);
  auto loaded = load_denoiser(model_path);
  EXPECT_EQ(loaded.denoiser.buckets().size(), 8u);
  EXPECT_EQ(loaded.schedule.steps, 1000u);
}
