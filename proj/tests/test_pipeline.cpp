// Copyright 2026 The EvoScene Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <signal.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <thread>

#include "evoscene/evoscene.hpp"

namespace evoscene {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const fs::path kScenes = fs::path(EVOSCENE_SOURCE_DIR) / "bench" / "scenes";

// Small enough that a three-iteration run takes about a second.
PipelineConfig small_config(int T = 3) {
  PipelineConfig c = PipelineConfig::bench();
  c.S = 16;
  c.P = 8;
  c.overlap = 4;
  c.N = 5;
  c.tto.render_size = 48;
  c.T = T;
  return c;
}

json small_config_json() {
  return {{"preset", "bench"}, {"S", 16}, {"P", 8}, {"overlap", 4}, {"N", 5}, {"optimization", {{"render_size", 48}}}};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("evoscene_pipeline_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  return p;
}

struct Oracles {
  SceneSpec scene;
  OracleDepth depth;
  OracleCompleter completer;
  OracleSynthesizer synth;
  explicit Oracles(const std::string& name, double noise = 0.0)
      : scene(load_scene(kScenes / (name + ".json"))), depth(scene, noise), synth(scene) {}
  Backends backends() { return {&depth, &completer, &synth}; }
  Image seed_image() const { return render_gt(scene, scene.K, scene.E).image; }
};

RunResult run_scene(const std::string& name, const PipelineConfig& cfg, const fs::path& out = {},
                    int max_stages = -1) {
  Oracles o(name);
  RunOptions opt;
  opt.out_dir = out;
  opt.max_stages = max_stages;
  opt.reference = &o.scene;
  return Pipeline(cfg, o.backends(), opt).run(o.seed_image());
}

std::vector<json> stage_records(const json& metrics, const std::string& stage) {
  std::vector<json> out;
  for (const auto& r : metrics)
    if (r.at("stage") == stage) out.push_back(r);
  return out;
}

// ---------------------------------------------------------------------------
// Loop accounting

TEST(Pipeline, ViewSetGrowsByNPerIteration) {
  const auto r = run_scene("box", small_config(3));
  ASSERT_TRUE(r.finished);
  const auto a = stage_records(r.state.metrics, "A");
  ASSERT_EQ(a.size(), 3u);
  EXPECT_EQ(a[0].at("views"), 1);
  EXPECT_EQ(a[1].at("views"), 6);
  EXPECT_EQ(a[2].at("views"), 11);
  EXPECT_EQ(stage_records(r.state.metrics, "C").size(), 2u);  // none after the last iteration
  // The prior is a union: it never shrinks.
  for (std::size_t i = 1; i < a.size(); ++i)
    EXPECT_GE(a[i].at("prior_points").get<int>(), a[i - 1].at("prior_points").get<int>());
  for (const auto& v : r.state.views) EXPECT_LE(v.iteration_of_origin, r.state.iteration);
}

TEST(Pipeline, SingleIterationRunsStagesAAndBOnly) {
  Oracles o("box");
  Backends b = o.backends();
  b.synthesizer = nullptr;  // not needed for T = 1
  const auto r = Pipeline(small_config(1), b).run(o.seed_image());
  ASSERT_TRUE(r.finished);
  ASSERT_EQ(r.state.metrics.size(), 2u);
  EXPECT_EQ(r.state.metrics[0].at("stage"), "A");
  EXPECT_EQ(r.state.metrics[1].at("stage"), "B");
  EXPECT_EQ(r.state.views.size(), 1u);
  EXPECT_FALSE(r.mesh.empty());
}

TEST(Pipeline, TwoIterationArtifacts) {
  const auto dir = fresh_dir("t2");
  const auto r = run_scene("box", small_config(2), dir);
  ASSERT_TRUE(r.finished);
  for (const char* f : {"scene.glb", "report.json", "config.json", "input.png", "timings.json"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_TRUE(fs::exists(dir / "iter_0" / "checksum"));
  EXPECT_TRUE(fs::exists(dir / "iter_1" / "latent.json"));
  const auto mesh = import_glb(io::read_file(dir / "scene.glb"));
  EXPECT_NO_THROW(mesh.validate());
  EXPECT_TRUE(mesh.watertight());
  const auto report = json::parse(io::read_text(dir / "report.json"));
  EXPECT_EQ(report.at("iterations").size(), 2u);
  EXPECT_EQ(report.at("coverage").size(), 2u);
  EXPECT_TRUE(report.at("final").at("watertight").get<bool>());
  for (const auto& e : fs::directory_iterator(dir)) EXPECT_FALSE(e.path().string().ends_with(".partial"));
}

TEST(Pipeline, MissingBackendFailsBeforeCompute) {
  Oracles o("box");
  Backends b = o.backends();
  b.synthesizer = nullptr;
  EXPECT_THROW(Pipeline(small_config(2), b), UsageError);
  b = o.backends();
  b.depth = nullptr;
  EXPECT_THROW(Pipeline(small_config(1), b), UsageError);
  auto bad = small_config();
  bad.tto.weights.lpips = 1.0;
  EXPECT_THROW(Pipeline(bad, o.backends()), UsageError);
}

TEST(Pipeline, RunIterationAdvancesOneIteration) {
  Oracles o("sphere");
  const auto cfg = small_config(3);
  IterationState s;
  View seed;
  seed.id = "seed";
  seed.image = quantize8(o.seed_image());
  seed.K = CameraIntrinsics::from_fov(seed.image.width, seed.image.height, cfg.fallback_hfov_deg);
  s.views.add(seed);
  const auto next = run_iteration(s, cfg, o.backends());
  EXPECT_EQ(next.iteration, 1);
  EXPECT_EQ(next.next, Stage::kA);
  EXPECT_EQ(next.views.size(), 6u);
  EXPECT_TRUE(next.latent.has_value());
  EXPECT_NO_THROW(next.validate());
}

// ---------------------------------------------------------------------------
// Determinism, checkpoints and resume

TEST(Pipeline, IdenticalRunsGiveIdenticalArtifacts) {
  const auto a = fresh_dir("det_a"), b = fresh_dir("det_b");
  run_scene("two_box", small_config(), a);
  run_scene("two_box", small_config(), b);
  EXPECT_EQ(io::read_file(a / "report.json"), io::read_file(b / "report.json"));
  EXPECT_EQ(io::read_file(a / "scene.glb"), io::read_file(b / "scene.glb"));
  EXPECT_EQ(io::read_file(a / "iter_2" / "metrics.json"), io::read_file(b / "iter_2" / "metrics.json"));
}

TEST(Pipeline, ResumeFromAnyStageMatchesUninterrupted) {
  const auto full = fresh_dir("full");
  run_scene("ground_box", small_config(), full);
  const auto report = io::read_file(full / "report.json");
  const auto glb = io::read_file(full / "scene.glb");
  for (int stop : {1, 2, 3, 5, 7, 8}) {
    const auto dir = fresh_dir("resume_" + std::to_string(stop));
    const auto partial = run_scene("ground_box", small_config(), dir, stop);
    ASSERT_FALSE(partial.finished);
    EXPECT_FALSE(fs::exists(dir / "scene.glb"));
    Oracles o("ground_box");
    RunOptions opt;
    opt.out_dir = dir;
    opt.reference = &o.scene;
    const auto r = Pipeline(small_config(), o.backends(), opt).resume();
    ASSERT_TRUE(r.finished);
    EXPECT_EQ(io::read_file(dir / "report.json"), report) << "stopped after " << stop << " stages";
    EXPECT_EQ(io::read_file(dir / "scene.glb"), glb) << "stopped after " << stop << " stages";
  }
}

TEST(Pipeline, CheckpointRoundTrip) {
  const auto dir = fresh_dir("ckpt");
  const auto r = run_scene("box", small_config(2), dir, 2);  // after A0 and B0
  const auto s = load_checkpoint(dir / "iter_0");
  EXPECT_EQ(s.iteration, 0);
  EXPECT_EQ(s.next, Stage::kC);
  EXPECT_EQ(s.prior.points.size(), r.state.prior.points.size());
  EXPECT_EQ(s.prior.points.front().position, r.state.prior.points.front().position);
  EXPECT_EQ(*s.latent, *r.state.latent);
  EXPECT_EQ(s.views[0].image, r.state.views[0].image);
  EXPECT_EQ(s.views[0].E, r.state.views[0].E);
  EXPECT_EQ(s.metrics, r.state.metrics);
  EXPECT_EQ(latest_checkpoint(dir), dir / "iter_0");
}

TEST(Pipeline, CorruptedCheckpointIsRefused) {
  const auto dir = fresh_dir("corrupt");
  run_scene("box", small_config(2), dir, 4);  // through A1
  EXPECT_NO_THROW(verify_checkpoint(dir / "iter_1"));
  auto bytes = io::read_file(dir / "iter_1" / "prior.ply");
  bytes[bytes.size() / 2] ^= 0x40;
  io::write_file(dir / "iter_1" / "prior.ply", bytes);
  EXPECT_THROW(load_checkpoint(dir / "iter_1"), IntegrityError);
  Oracles o("box");
  RunOptions opt;
  opt.out_dir = dir;
  EXPECT_THROW(Pipeline(small_config(2), o.backends(), opt).resume(), IntegrityError);

  io::write_text(dir / "iter_0" / "extra.txt", "x");
  EXPECT_THROW(verify_checkpoint(dir / "iter_0"), IntegrityError);
  fs::remove(dir / "iter_0" / "extra.txt");
  EXPECT_NO_THROW(verify_checkpoint(dir / "iter_0"));
  fs::remove(dir / "iter_0" / "metrics.json");
  EXPECT_THROW(verify_checkpoint(dir / "iter_0"), IntegrityError);
  fs::remove(dir / "iter_0" / "checksum");
  EXPECT_THROW(verify_checkpoint(dir / "iter_0"), IntegrityError);
}

TEST(Pipeline, RecordedResponsesReplayToTheSameRun) {
  // Backend interchangeability: a run driven purely by recorded wire
  // responses reproduces the oracle run.
  Oracles o("box_sphere", 0.02);
  Tape tape;
  RecordingDepth rd(o.depth, tape);
  RecordingCompleter rc(o.completer, tape);
  RecordingSynthesizer rs(o.synth, tape);
  RunOptions opt;
  opt.reference = &o.scene;
  const auto recorded = Pipeline(small_config(), {&rd, &rc, &rs}, opt).run(o.seed_image());
  const Tape loaded = Tape::from_json(json::parse(tape.to_json().dump()));
  ReplayDepth pd(loaded);
  ReplayCompleter pc(loaded);
  ReplaySynthesizer ps(loaded);
  const auto replayed = Pipeline(small_config(), {&pd, &pc, &ps}, opt).run(o.seed_image());
  EXPECT_EQ(replayed.report, recorded.report);
  EXPECT_EQ(export_glb(replayed.mesh), export_glb(recorded.mesh));
}

TEST(Pipeline, CoverageGrowsOnTheBox) {
  const auto r = run_scene("box", small_config());
  const auto cov = r.report.at("coverage");
  ASSERT_EQ(cov.size(), 3u);
  EXPECT_GT(cov[2].get<double>(), cov[0].get<double>() + 0.15);
}

// ---------------------------------------------------------------------------
// CLI

struct CliResult {
  int code = -1;
  std::string out;
};

CliResult cli(const std::string& args) {
  const std::string cmd = std::string(EVOSCENE_CLI) + " --log-level silent " + args + " 2>/dev/null";
  FILE* p = ::popen(cmd.c_str(), "r");
  CliResult r;
  if (!p) return r;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, p)) r.out += buf;
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

fs::path small_config_file() {
  const auto p = fresh_dir("cfg") / "small.json";
  fs::create_directories(p.parent_path());
  io::write_text(p, small_config_json().dump());
  return p;
}

// Every file of a run directory except wall-clock timings.
std::map<std::string, io::Bytes> tree(const fs::path& dir) {
  std::map<std::string, io::Bytes> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "timings.json")
      out[fs::relative(e.path(), dir).generic_string()] = io::read_file(e.path());
  return out;
}

TEST(Cli, EvolveWritesArtifacts) {
  const auto out = fresh_dir("cli_evolve");
  const auto r = cli("evolve --scene " + q(kScenes / "box.json") + " --backends oracle --iters 2 --config " +
                     q(small_config_file()) + " --out " + q(out));
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_TRUE(fs::exists(out / "scene.glb"));
  const auto summary = json::parse(r.out);
  EXPECT_TRUE(summary.at("ok").get<bool>());
  EXPECT_EQ(json::parse(io::read_text(out / "report.json")).at("iterations").size(), 2u);
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(cli("evolve --scene " + q(kScenes / "box.json")).code, 2);  // missing --out
  EXPECT_EQ(cli("evolve --out /tmp/x").code, 2);                         // no input
  EXPECT_EQ(cli("frobnicate").code, 2);
  EXPECT_EQ(cli("evolve --scene " + q(kScenes / "box.json") + " --preset huge --out /tmp/x").code, 2);
  EXPECT_EQ(cli("export --checkpoint /tmp --format stl --out /tmp/x.stl").code, 2);
  EXPECT_EQ(cli("eval --run /tmp").code, 2);  // missing --scene
  // A non-empty output directory is refused rather than overwritten.
  const auto out = fresh_dir("cli_nonempty");
  fs::create_directories(out);
  io::write_text(out / "keep.txt", "x");
  const auto r = cli("evolve --scene " + q(kScenes / "box.json") + " --out " + q(out));
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(json::parse(r.out).at("kind"), "usage");
  // Image input with oracle backends has no scene to bind.
  write_png(out / "seed.png", Image(8, 8, 0.5f));
  EXPECT_EQ(cli("evolve --image " + q(out / "seed.png") + " --out " + q(out / "run")).code, 2);
}

TEST(Cli, FullScalePresetConstants) {
  const auto c = preset_config("paper");
  EXPECT_EQ(c.S, 128);
  EXPECT_EQ(c.P, 64);
  EXPECT_EQ(c.overlap, 48);
  EXPECT_EQ(c.N, 121);
  EXPECT_EQ(c.azimuth_amplitude, 45.0);
  EXPECT_EQ(c.T, 3);
  EXPECT_EQ(c.tto.steps, 5);
  EXPECT_EQ(c.tto.lr, 1.0);
  EXPECT_EQ(c.voting.depth_tolerance, 0.1);
  EXPECT_EQ(c.voting.min_support, 3);
  EXPECT_EQ(c.bin_size, 0.05);
  EXPECT_EQ(c.controlnet_scale, 0.4);
  const auto file = load_config(fs::path(EVOSCENE_SOURCE_DIR) / "config" / "paper.json");
  EXPECT_EQ(to_json(file), to_json(c));
  const auto bench = load_config(fs::path(EVOSCENE_SOURCE_DIR) / "config" / "bench.json");
  EXPECT_EQ(to_json(bench), to_json(PipelineConfig::bench()));
  EXPECT_THROW(config_from_json({{"voting", {{"tolerance", 0.1}}}}), UsageError);
}

TEST(Cli, ContractViolationExitsThree) {
  // A completion service that answers without the occupancy payload.
  httplib::Server stub;
  stub.Post("/complete", [](const httplib::Request&, httplib::Response& rs) {
    rs.set_content(json({{"proto", proto::kVersion}, {"attributes", json::array()}}).dump(), "application/json");
  });
  const int port = stub.bind_to_any_port("127.0.0.1");
  std::thread t([&] { stub.listen_after_bind(); });
  stub.wait_until_ready();
  const auto out = fresh_dir("cli_contract");
  const auto r = cli("evolve --scene " + q(kScenes / "box.json") + " --config " + q(small_config_file()) +
                     " --backends depth=oracle,complete=remote:127.0.0.1:" + std::to_string(port) +
                     ",synthesize=oracle --out " + q(out));
  stub.stop();
  t.join();
  EXPECT_EQ(r.code, 3) << r.out;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j.at("kind"), "contract");
  EXPECT_NE(j.at("error").get<std::string>().find("occupancy"), std::string::npos);
}

TEST(Cli, UnreachableBackendIsARuntimeError) {
  const auto out = fresh_dir("cli_transport");
  const auto r = cli("evolve --scene " + q(kScenes / "box.json") + " --config " + q(small_config_file()) +
                     " --backends remote:127.0.0.1:9 --retry-delay 0 --out " + q(out));
  EXPECT_EQ(r.code, 1) << r.out;
  EXPECT_EQ(json::parse(r.out).at("kind"), "transport");
}

TEST(Cli, RerunIntoFreshDirectoryIsByteIdentical) {
  const auto a = fresh_dir("cli_a"), b = fresh_dir("cli_b");
  const std::string args = "evolve --scene " + q(kScenes / "open_box.json") + " --config " + q(small_config_file());
  ASSERT_EQ(cli(args + " --out " + q(a)).code, 0);
  ASSERT_EQ(cli(args + " --out " + q(b)).code, 0);
  EXPECT_EQ(tree(a), tree(b));
}

TEST(Cli, ResumeCompletesAnInterruptedRun) {
  const auto full = fresh_dir("cli_full"), part = fresh_dir("cli_part");
  const std::string args = "evolve --scene " + q(kScenes / "room.json") + " --config " + q(small_config_file());
  ASSERT_EQ(cli(args + " --out " + q(full)).code, 0);
  const auto r1 = cli(args + " --max-stages 4 --out " + q(part));
  ASSERT_EQ(r1.code, 0);
  EXPECT_FALSE(json::parse(r1.out).at("finished").get<bool>());
  EXPECT_EQ(cli("resume --run " + q(part)).code, 0);
  EXPECT_EQ(tree(full), tree(part));
  EXPECT_EQ(cli("resume --run " + q(fresh_dir("cli_nothing").parent_path() / "does_not_exist")).code, 2);
}

TEST(Cli, ExportAndEvalMatchTheRun) {
  const auto run = fresh_dir("cli_export");
  ASSERT_EQ(cli("evolve --scene " + q(kScenes / "sphere.json") + " --config " + q(small_config_file()) + " --out " +
                q(run))
                .code,
            0);
  // Re-export from the last checkpoint reproduces the run's GLB bit for bit.
  ASSERT_EQ(cli("export --checkpoint " + q(run) + " --format glb --out " + q(run.parent_path() / "re.glb")).code, 0);
  EXPECT_EQ(io::read_file(run.parent_path() / "re.glb"), io::read_file(run / "scene.glb"));
  ASSERT_EQ(cli("export --checkpoint " + q(run / "iter_0") + " --format obj --out " + q(run.parent_path() / "m.obj")).code, 0);
  EXPECT_NE(io::read_text(run.parent_path() / "m.obj").find("\nf "), std::string::npos);
  ASSERT_EQ(cli("export --checkpoint " + q(run) + " --format ply --out " + q(run.parent_path() / "m.ply")).code, 0);
  EXPECT_EQ(io::read_text(run.parent_path() / "m.ply").substr(0, 4), "ply\n");

  const auto r = cli("eval --run " + q(run) + " --scene " + q(kScenes / "sphere.json") + " --out " +
                     q(run.parent_path() / "eval.json"));
  ASSERT_EQ(r.code, 0) << r.out;
  const auto ev = json::parse(r.out);
  const auto report = json::parse(io::read_text(run / "report.json"));
  EXPECT_EQ(ev.at("coverage"), report.at("coverage"));
  EXPECT_EQ(ev.at("chamfer"), report.at("final").at("chamfer"));
  EXPECT_TRUE(ev.at("watertight").get<bool>());
  EXPECT_EQ(ev.at("loss_curves").size(), 3u);
  EXPECT_EQ(json::parse(io::read_text(run.parent_path() / "eval.json")), ev);
  // A directory without a run is a usage error.
  EXPECT_EQ(cli("eval --run " + q(run / "iter_0") + " --scene " + q(kScenes / "sphere.json")).code, 2);
}

TEST(Cli, ServeMockHostsTheOracles) {
  // serve-mock prints {"ok":true,"port":P} once bound.
  const std::string cmd = "echo $$; exec " + std::string(EVOSCENE_CLI) + " --log-level silent serve-mock --scene " +
                          q(kScenes / "box.json") + " --port 0";
  FILE* p = ::popen(cmd.c_str(), "r");
  ASSERT_NE(p, nullptr);
  char buf[512];
  ASSERT_TRUE(std::fgets(buf, sizeof buf, p));
  const pid_t pid = std::stoi(buf);
  ASSERT_TRUE(std::fgets(buf, sizeof buf, p));
  const int port = json::parse(buf).at("port").get<int>();

  const auto remote = fresh_dir("cli_remote"), local = fresh_dir("cli_local");
  const std::string args = "evolve --scene " + q(kScenes / "box.json") + " --config " + q(small_config_file());
  const auto r = cli(args + " --backends remote:127.0.0.1:" + std::to_string(port) + " --out " + q(remote));
  ::kill(pid, SIGTERM);
  ::pclose(p);
  ASSERT_EQ(r.code, 0) << r.out;
  ASSERT_EQ(cli(args + " --out " + q(local)).code, 0);
  // Same run over the wire: the PNG/float32 payloads match the precision
  // views and depths are kept in.
  EXPECT_EQ(io::read_file(remote / "report.json"), io::read_file(local / "report.json"));
  EXPECT_EQ(io::read_file(remote / "scene.glb"), io::read_file(local / "scene.glb"));
}

}  // namespace
}  // namespace evoscene
