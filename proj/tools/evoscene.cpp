// Copyright 2026 The EvoScene Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// evoscene command-line driver: evolve, resume, eval, export, serve-mock.
// Exit codes: 0 success, 1 runtime error, 2 usage error, 3 backend contract
// violation. Failures are also reported as one JSON object on stdout.

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "evoscene/evoscene.hpp"

namespace {

using namespace evoscene;
namespace fs = std::filesystem;

// Backend spec: "oracle", "remote:URL", or a comma list of
// "depth=...", "complete=...", "synthesize=..." bindings.
struct BackendSpec {
  std::string depth = "oracle", complete = "oracle", synthesize = "oracle";

  static BackendSpec parse(const std::string& s) {
    BackendSpec b;
    if (s.find('=') == std::string::npos) {
      check(s);
      b.depth = b.complete = b.synthesize = s;
      return b;
    }
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw UsageError("--backends: expected name=binding, got " + item);
      const std::string key = item.substr(0, eq), val = item.substr(eq + 1);
      check(val);
      if (key == "depth") b.depth = val;
      else if (key == "complete") b.complete = val;
      else if (key == "synthesize") b.synthesize = val;
      else throw UsageError("--backends: unknown interface " + key);
    }
    return b;
  }

  bool needs_scene() const { return depth == "oracle" || synthesize == "oracle"; }

 private:
  static void check(const std::string& v) {
    if (v == "oracle") return;
    if (v.starts_with("remote:") && v.size() > 7) return;
    throw UsageError("--backends: expected oracle or remote:URL, got " + v);
  }
};

struct BackendSet {
  std::unique_ptr<DepthEstimator> depth;
  std::unique_ptr<SceneCompleter> completer;
  std::unique_ptr<ViewSynthesizer> synthesizer;

  Backends view() { return {depth.get(), completer.get(), synthesizer.get()}; }
};

BackendSet make_backends(const BackendSpec& spec, const std::optional<SceneSpec>& scene, const PipelineConfig& cfg,
                         double depth_noise, const RetryPolicy& retry) {
  if (spec.needs_scene() && !scene)
    throw UsageError("oracle backends need a scene (--scene); bind remote:URL backends for image input");
  BackendSet b;
  if (spec.depth == "oracle") b.depth = std::make_unique<OracleDepth>(*scene, depth_noise, cfg.seed);
  else b.depth = std::make_unique<RemoteDepth>(spec.depth.substr(7), retry);
  if (spec.complete == "oracle") b.completer = std::make_unique<OracleCompleter>(cfg.completion_radius);
  else b.completer = std::make_unique<RemoteCompleter>(spec.complete.substr(7), retry);
  if (spec.synthesize == "oracle") b.synthesizer = std::make_unique<OracleSynthesizer>(*scene, 0.0, cfg.seed);
  else b.synthesizer = std::make_unique<RemoteSynthesizer>(spec.synthesize.substr(7), retry);
  return b;
}

int exit_code_of(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return 2;
  if (dynamic_cast<const ContractError*>(&e)) return 3;
  return 1;
}

const char* kind_of(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return "usage";
  if (dynamic_cast<const ContractError*>(&e)) return "contract";
  if (dynamic_cast<const TransportError*>(&e)) return "transport";
  if (dynamic_cast<const IntegrityError*>(&e)) return "integrity";
  return "runtime";
}

int report_failure(const std::string& command, const std::exception& e) {
  const int code = exit_code_of(e);
  std::cout << nlohmann::json({{"ok", false}, {"command", command}, {"kind", kind_of(e)}, {"error", e.what()},
                               {"exit_code", code}})
                   .dump()
            << std::endl;
  Log::instance().emit(LogLevel::kError, "cli.failed", {{"command", command}, {"error", e.what()}});
  return code;
}

std::atomic<bool> g_stop{false};

void summarize(const RunResult& r, const fs::path& out) {
  nlohmann::json j = {{"ok", true}, {"finished", r.finished}, {"out", out.string()}};
  if (r.finished) j["final"] = r.report.at("final");
  std::cout << j.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"evoscene: single-image scene evolution"};
  app.require_subcommand(1);
  bool human = false;
  std::string log_level = "info";
  app.add_flag("--human", human, "Human-readable log lines instead of JSON");
  app.add_option("--log-level", log_level, "debug|info|warn|error|silent")
      ->check(CLI::IsMember({"debug", "info", "warn", "error", "silent"}));

  // Shared by evolve and resume.
  std::string backends_arg = "oracle";
  std::string scene_path, image_path, config_path, preset, out_dir, checkpoint;
  int iters = -1, max_stages = -1;
  std::optional<std::uint64_t> seed;
  double depth_noise = 0.0, retry_delay = 1.0;

  auto* evolve = app.add_subcommand("evolve", "Run the pipeline from a scene spec or an image");
  auto* in = evolve->add_option_group("input");
  in->add_option("--scene", scene_path, "Synthbench scene spec (JSON)")->check(CLI::ExistingFile);
  in->add_option("--image", image_path, "Seed image (PNG)")->check(CLI::ExistingFile);
  in->require_option(1);
  evolve->add_option("--backends", backends_arg, "oracle | remote:URL | depth=..,complete=..,synthesize=..");
  evolve->add_option("--config", config_path, "Config JSON")->check(CLI::ExistingFile);
  evolve->add_option("--preset", preset, "paper | bench")->check(CLI::IsMember({"paper", "bench"}));
  evolve->add_option("--iters", iters, "Self-evolution iterations T")->check(CLI::PositiveNumber);
  evolve->add_option("--seed", seed, "Run seed");
  evolve->add_option("--out", out_dir, "Output directory")->required();
  evolve->add_option("--depth-noise", depth_noise, "Oracle depth noise sigma (m)")->check(CLI::NonNegativeNumber);
  evolve->add_option("--max-stages", max_stages, "Stop after this many stages (resume later)");
  evolve->add_option("--retry-delay", retry_delay, "Base backoff of remote retries (s)")->check(CLI::NonNegativeNumber);

  auto* resume = app.add_subcommand("resume", "Continue an interrupted run");
  resume->add_option("--run", out_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  resume->add_option("--checkpoint", checkpoint, "Checkpoint directory (default: latest)")
      ->check(CLI::ExistingDirectory);
  resume->add_option("--scene", scene_path, "Scene spec for oracle backends")->check(CLI::ExistingFile);
  resume->add_option("--backends", backends_arg, "Backend bindings");
  resume->add_option("--depth-noise", depth_noise, "Oracle depth noise sigma (m)")->check(CLI::NonNegativeNumber);
  resume->add_option("--max-stages", max_stages, "Stop after this many stages");
  resume->add_option("--retry-delay", retry_delay, "Base backoff of remote retries (s)")->check(CLI::NonNegativeNumber);

  std::string eval_out;
  auto* eval = app.add_subcommand("eval", "Score a finished run against its scene");
  eval->add_option("--run", out_dir, "Run directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--scene", scene_path, "Scene spec")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", eval_out, "Write the evaluation JSON here as well");

  std::string format = "glb", export_out;
  auto* exp = app.add_subcommand("export", "Re-export the mesh of a checkpoint or run");
  exp->add_option("--checkpoint", checkpoint, "Checkpoint or run directory")->required()->check(CLI::ExistingDirectory);
  exp->add_option("--format", format, "glb | ply | obj")->check(CLI::IsMember({"glb", "ply", "obj"}));
  exp->add_option("--out", export_out, "Output file")->required();

  int port = 8080;
  std::string host = "127.0.0.1";
  auto* serve = app.add_subcommand("serve-mock", "Host oracle backends over the wire protocol");
  serve->add_option("--scene", scene_path, "Scene spec")->required()->check(CLI::ExistingFile);
  serve->add_option("--port", port, "Port (0 picks a free one)");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--depth-noise", depth_noise, "Oracle depth noise sigma (m)")->check(CLI::NonNegativeNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (human) Log::instance().use_human_format();
  static const std::map<std::string, LogLevel> kLevels = {{"debug", LogLevel::kDebug}, {"info", LogLevel::kInfo},
                                                          {"warn", LogLevel::kWarn},   {"error", LogLevel::kError},
                                                          {"silent", LogLevel::kSilent}};
  Log::instance().set_level(kLevels.at(log_level));

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    RetryPolicy retry;
    retry.base_delay_s = retry_delay;

    if (*evolve) {
      PipelineConfig cfg;
      // Scenes default to the bench preset, images to the full-scale one.
      const std::string base = !preset.empty() ? preset : (!scene_path.empty() ? "bench" : "paper");
      cfg = config_path.empty() ? preset_config(base) : load_config(config_path, preset);
      if (iters > 0) cfg.T = iters;
      if (seed) cfg.seed = *seed;
      cfg.validate();
      std::optional<SceneSpec> scene;
      if (!scene_path.empty()) scene = load_scene(scene_path);
      const BackendSpec spec = BackendSpec::parse(backends_arg);
      BackendSet b = make_backends(spec, scene, cfg, depth_noise, retry);
      RunOptions opt;
      opt.out_dir = out_dir;
      opt.max_stages = max_stages;
      if (scene) opt.reference = &*scene;
      Pipeline pipeline(cfg, b.view(), opt);
      if (fs::exists(out_dir) && !fs::is_empty(out_dir))
        throw UsageError("--out " + out_dir + " is not empty (use resume to continue a run)");
      const Image seed_image = scene ? render_gt(*scene, scene->K, scene->E).image : read_png(image_path);
      fs::create_directories(out_dir);
      nlohmann::json run_meta = {{"backends", backends_arg}, {"depth_noise", depth_noise}};
      if (scene) run_meta["scene"] = fs::absolute(scene_path).string();
      io::write_text(fs::path(out_dir) / "run.json", run_meta.dump(2));
      summarize(pipeline.run(seed_image), out_dir);
      return 0;
    }

    if (*resume) {
      const fs::path run_dir = out_dir;
      if (!fs::exists(run_dir / "config.json")) throw UsageError("resume: " + out_dir + " has no config.json");
      const PipelineConfig cfg = load_config(run_dir / "config.json");
      nlohmann::json run_meta = nlohmann::json::object();
      if (fs::exists(run_dir / "run.json")) run_meta = nlohmann::json::parse(io::read_text(run_dir / "run.json"));
      if (scene_path.empty() && run_meta.contains("scene")) scene_path = run_meta["scene"].get<std::string>();
      if (!resume->count("--backends") && run_meta.contains("backends"))
        backends_arg = run_meta["backends"].get<std::string>();
      if (!resume->count("--depth-noise") && run_meta.contains("depth_noise"))
        depth_noise = run_meta["depth_noise"].get<double>();
      std::optional<SceneSpec> scene;
      if (!scene_path.empty()) scene = load_scene(scene_path);
      BackendSet b = make_backends(BackendSpec::parse(backends_arg), scene, cfg, depth_noise, retry);
      RunOptions opt;
      opt.out_dir = run_dir;
      opt.max_stages = max_stages;
      if (scene) opt.reference = &*scene;
      Pipeline pipeline(cfg, b.view(), opt);
      summarize(pipeline.resume(checkpoint), run_dir);
      return 0;
    }

    if (*eval) {
      const nlohmann::json result = evaluate_run(out_dir, load_scene(scene_path));
      if (!eval_out.empty()) io::write_text(eval_out, result.dump(2));
      std::cout << result.dump() << std::endl;
      return 0;
    }

    if (*exp) {
      fs::path dir = checkpoint;
      if (!fs::exists(dir / "state.json")) {
        const auto latest = latest_checkpoint(dir);
        if (!latest) throw UsageError("export: no checkpoint under " + checkpoint);
        dir = *latest;
      }
      const IterationState s = load_checkpoint(dir);
      if (!s.latent) throw UsageError("export: checkpoint " + dir.string() + " has no scene latent yet");
      PipelineConfig cfg;
      if (fs::exists(dir.parent_path() / "config.json")) cfg = load_config(dir.parent_path() / "config.json");
      TexturedMesh mesh = marching_cubes(s.latent->occupancy());
      if (mesh.empty()) throw Error("export: the checkpoint's occupancy is empty");
      std::vector<DepthMap> depths;
      for (const auto& v : s.views) depths.push_back(render_depth(mesh, v.K, v.E, v.image.width, v.image.height));
      mesh = bake_textures(mesh, s.views, depths, s.latent->geom.pitch, cfg.bake);
      if (format == "glb") io::write_file(export_out, export_glb(mesh));
      else if (format == "ply") io::write_file(export_out, export_ply(mesh));
      else io::write_text(export_out, export_obj(mesh));
      std::cout << nlohmann::json({{"ok", true}, {"out", export_out}, {"checkpoint", dir.string()},
                                   {"vertices", mesh.vertices.size()}, {"triangles", mesh.triangles.size()}})
                       .dump()
                << std::endl;
      return 0;
    }

    if (*serve) {
      const SceneSpec scene = load_scene(scene_path);
      const PipelineConfig cfg;
      OracleDepth depth(scene, depth_noise, cfg.seed);
      OracleCompleter completer(cfg.completion_radius);
      OracleSynthesizer synth(scene, 0.0, cfg.seed);
      MockServer server(&depth, &completer, &synth);
      const int bound = server.start(host, port);
      std::signal(SIGINT, [](int) { g_stop = true; });
      std::signal(SIGTERM, [](int) { g_stop = true; });
      log_info("serve.ready", {{"host", host}, {"port", bound}, {"proto", proto::kVersion}});
      std::cout << nlohmann::json({{"ok", true}, {"port", bound}}).dump() << std::endl;
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
      server.stop();
      return 0;
    }
  } catch (const std::exception& e) {
    return report_failure(command, e);
  }
  return 0;
}
