// Copyright 2026 The EvoScene Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// The self-evolution loop. Iterations are numbered from 0; each runs
// Stage A (depth, voting, merge), Stage B (grid, carving, completion,
// blending, optimization) and, except on the last iteration, Stage C
// (orbit, disparity, synthesis). The state is checkpointed after every
// stage under iter_<i>/.

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evoscene/completion.hpp"
#include "evoscene/config.hpp"
#include "evoscene/errors.hpp"
#include "evoscene/interfaces.hpp"
#include "evoscene/io.hpp"
#include "evoscene/latent.hpp"
#include "evoscene/log.hpp"
#include "evoscene/meshing.hpp"
#include "evoscene/occupancy.hpp"
#include "evoscene/optimize.hpp"
#include "evoscene/rendering.hpp"
#include "evoscene/spatial_prior.hpp"
#include "evoscene/synthbench.hpp"
#include "evoscene/trajectory.hpp"
#include "evoscene/views.hpp"
#include "json.hpp"

namespace evoscene {

namespace fs = std::filesystem;

struct Backends {
  DepthEstimator* depth = nullptr;
  SceneCompleter* completer = nullptr;
  ViewSynthesizer* synthesizer = nullptr;

  // Fails before any compute when a required binding is missing.
  void validate(const PipelineConfig& cfg) const {
    if (!depth) throw UsageError("no depth backend bound");
    if (!completer) throw UsageError("no completion backend bound");
    if (cfg.T > 1 && !synthesizer) throw UsageError("no view-synthesis backend bound (needed when T > 1)");
  }
};

enum class Stage { kA, kB, kC, kFinal };

inline const char* stage_name(Stage s) {
  switch (s) {
    case Stage::kA: return "A";
    case Stage::kB: return "B";
    case Stage::kC: return "C";
    case Stage::kFinal: return "final";
  }
  return "?";
}

inline Stage stage_from_name(const std::string& s) {
  if (s == "A") return Stage::kA;
  if (s == "B") return Stage::kB;
  if (s == "C") return Stage::kC;
  if (s == "final") return Stage::kFinal;
  throw Error("unknown stage name " + s);
}

struct IterationState {
  int iteration = 0;              // iteration the next stage belongs to
  Stage next = Stage::kA;
  ViewSet views;
  std::vector<DepthMap> depths;   // latest estimate per view
  ConfidencePointCloud prior;
  std::optional<OccupancyGrid> grid;
  std::optional<SceneLatent> latent;
  nlohmann::json metrics = nlohmann::json::array();  // one record per executed stage

  void validate() const {
    if (iteration < 0) throw Error("state: negative iteration");
    if (views.empty()) throw Error("state: no views");
    if (iteration >= 1 && prior.empty()) throw Error("state: empty prior after iteration 0");
    for (const auto& v : views)
      if (v.iteration_of_origin > iteration) throw Error("state: view " + v.id + " comes from a future iteration");
  }
};

// Depth maps cross stage boundaries in float precision, the precision they
// are checkpointed in, so resumed and uninterrupted runs agree exactly.
inline DepthMap quantize_depth(DepthMap d) {
  for (std::size_t i = 0; i < d.values.size(); ++i)
    if (d.mask[i]) d.set(static_cast<int>(i % d.width), static_cast<int>(i / d.width), static_cast<float>(d.values[i]));
  return d;
}

inline std::string format_view_id(int iteration, int k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "t%d_f%03d", iteration, k);
  return buf;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace detail {

inline nlohmann::json checksum_of_dir(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() != "checksum") files.push_back(fs::relative(e.path(), dir));
  std::sort(files.begin(), files.end());
  nlohmann::json j = nlohmann::json::object();
  for (const auto& f : files) j[f.generic_string()] = io::crc32_of(io::read_file(dir / f));
  return j;
}

}  // namespace detail

inline void save_checkpoint(const fs::path& dir, const IterationState& s) {
  const fs::path tmp = dir.string() + ".partial";
  fs::remove_all(tmp);
  fs::create_directories(tmp / "views");
  fs::create_directories(tmp / "depths");
  nlohmann::json views = nlohmann::json::array();
  for (std::size_t k = 0; k < s.views.size(); ++k) {
    const View& v = s.views[k];
    write_png(tmp / "views" / (v.id + ".png"), v.image);
    const nlohmann::json meta = {{"id", v.id}, {"K", to_json(v.K)}, {"E", to_json(v.E)},
                                 {"iteration_of_origin", v.iteration_of_origin}};
    io::write_text(tmp / "views" / (v.id + ".json"), meta.dump(2));
    views.push_back(v.id);
  }
  for (std::size_t k = 0; k < s.depths.size(); ++k)
    io::write_file(tmp / "depths" / (s.views[k].id + ".evdm"), encode_evdm(s.depths[k]));
  io::write_file(tmp / "prior.ply", encode_ply(s.prior));
  if (s.grid) io::write_file(tmp / "grid.evog", encode_evog(*s.grid));
  if (s.latent) write_latent(tmp, *s.latent);
  io::write_text(tmp / "metrics.json", s.metrics.dump(2));
  const nlohmann::json state = {{"format", "evoscene-state/1"},
                                {"iteration", s.iteration},
                                {"next_stage", stage_name(s.next)},
                                {"views", views},
                                {"depths", s.depths.size()},
                                {"has_grid", s.grid.has_value()},
                                {"has_latent", s.latent.has_value()}};
  io::write_text(tmp / "state.json", state.dump(2));
  io::write_text(tmp / "checksum", detail::checksum_of_dir(tmp).dump(2));
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

inline void verify_checkpoint(const fs::path& dir) {
  if (!fs::exists(dir / "checksum")) throw IntegrityError("checkpoint " + dir.string() + ": missing checksum");
  nlohmann::json expected;
  try {
    expected = nlohmann::json::parse(io::read_text(dir / "checksum"));
  } catch (const nlohmann::json::exception&) {
    throw IntegrityError("checkpoint " + dir.string() + ": unreadable checksum file");
  }
  const nlohmann::json actual = detail::checksum_of_dir(dir);
  for (const auto& [file, crc] : expected.items()) {
    if (!actual.contains(file)) throw IntegrityError("checkpoint " + dir.string() + ": missing file " + file);
    if (actual[file] != crc) throw IntegrityError("checkpoint " + dir.string() + ": checksum mismatch in " + file);
  }
  for (const auto& [file, crc] : actual.items())
    if (!expected.contains(file)) throw IntegrityError("checkpoint " + dir.string() + ": unexpected file " + file);
}

inline IterationState load_checkpoint(const fs::path& dir) {
  verify_checkpoint(dir);
  try {
    const auto state = nlohmann::json::parse(io::read_text(dir / "state.json"));
    if (state.value("format", "") != "evoscene-state/1") throw Error("unknown state format");
    IterationState s;
    s.iteration = state.at("iteration").get<int>();
    s.next = stage_from_name(state.at("next_stage").get<std::string>());
    for (const auto& id_json : state.at("views")) {
      const auto id = id_json.get<std::string>();
      const auto meta = nlohmann::json::parse(io::read_text(dir / "views" / (id + ".json")));
      View v;
      v.id = id;
      v.image = read_png(dir / "views" / (id + ".png"));
      v.K = intrinsics_from_json(meta.at("K"));
      v.E = pose_from_json(meta.at("E"));
      v.iteration_of_origin = meta.at("iteration_of_origin").get<int>();
      s.views.add(std::move(v));
    }
    const auto ndepth = state.at("depths").get<std::size_t>();
    for (std::size_t k = 0; k < ndepth; ++k)
      s.depths.push_back(decode_evdm(io::read_file(dir / "depths" / (s.views[k].id + ".evdm"))));
    s.prior = decode_ply(io::read_file(dir / "prior.ply"));
    if (state.at("has_grid").get<bool>()) s.grid = decode_evog(io::read_file(dir / "grid.evog"));
    if (state.at("has_latent").get<bool>()) s.latent = read_latent(dir);
    s.metrics = nlohmann::json::parse(io::read_text(dir / "metrics.json"));
    s.validate();
    return s;
  } catch (const IntegrityError&) {
    throw;
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError("checkpoint " + dir.string() + ": " + e.what());
  } catch (const Error& e) {
    throw IntegrityError("checkpoint " + dir.string() + ": " + e.what());
  }
}

// Most advanced checkpoint under a run directory, if any.
inline std::optional<fs::path> latest_checkpoint(const fs::path& run_dir) {
  std::optional<fs::path> best;
  int best_key = -1;
  if (!fs::exists(run_dir)) return best;
  for (const auto& e : fs::directory_iterator(run_dir)) {
    const std::string name = e.path().filename().string();
    if (!e.is_directory() || !name.starts_with("iter_") || name.ends_with(".partial")) continue;
    if (!fs::exists(e.path() / "state.json")) continue;
    int i = 0;
    try {
      i = std::stoi(name.substr(5));
    } catch (const std::exception&) {
      continue;
    }
    if (i > best_key) {
      best_key = i;
      best = e.path();
    }
  }
  return best;
}

// ---------------------------------------------------------------------------

struct RunOptions {
  fs::path out_dir;               // empty: no files are written
  int max_stages = -1;            // stop after this many stages (tests use it to interrupt runs)
  const SceneSpec* reference = nullptr;  // enables coverage and chamfer metrics
  std::size_t reference_samples = 10000;
};

struct RunResult {
  bool finished = false;
  IterationState state;
  TexturedMesh mesh;
  nlohmann::json report;
  nlohmann::json timings = nlohmann::json::array();
};

class Pipeline {
 public:
  Pipeline(PipelineConfig cfg, Backends backends, RunOptions opt = {})
      : cfg_(std::move(cfg)), be_(backends), opt_(std::move(opt)) {
    cfg_.validate();
    be_.validate(cfg_);
    if (opt_.reference) reference_ = reference_samples(*opt_.reference, opt_.reference_samples, cfg_.seed);
  }

  const PipelineConfig& config() const { return cfg_; }

  // Fresh run from the seed image (quantized to 8 bits, as stored).
  RunResult run(const Image& seed_image) {
    if (seed_image.empty()) throw UsageError("empty seed image");
    IterationState s;
    View seed;
    seed.id = "seed";
    seed.image = quantize8(seed_image);
    seed.K = CameraIntrinsics::from_fov(seed.image.width, seed.image.height, cfg_.fallback_hfov_deg);
    seed.iteration_of_origin = 0;
    s.views.add(std::move(seed));
    if (!opt_.out_dir.empty()) {
      fs::create_directories(opt_.out_dir);
      io::write_text(opt_.out_dir / "config.json", to_json(cfg_).dump(2));
      write_png(opt_.out_dir / "input.png", s.views[0].image);
    }
    return drive(std::move(s));
  }

  // Continues from a checkpoint directory, or from the latest checkpoint of
  // the run directory; a run interrupted before its first checkpoint starts
  // over from its stored input.
  RunResult resume(const fs::path& checkpoint = {}) {
    fs::path dir = checkpoint;
    if (dir.empty()) {
      if (opt_.out_dir.empty()) throw UsageError("resume: no run directory");
      const auto latest = latest_checkpoint(opt_.out_dir);
      if (!latest) {
        if (!fs::exists(opt_.out_dir / "input.png")) throw UsageError("resume: nothing to resume in " + opt_.out_dir.string());
        return run(read_png(opt_.out_dir / "input.png"));
      }
      dir = *latest;
    }
    if (!opt_.out_dir.empty() && fs::exists(opt_.out_dir / "timings.json"))
      timings_ = nlohmann::json::parse(io::read_text(opt_.out_dir / "timings.json"));
    log_info("pipeline.resume", {{"checkpoint", dir.string()}});
    return drive(load_checkpoint(dir));
  }

  // --- Stages -------------------------------------------------------------

  void stage_a(IterationState& s) {
    const int i = s.iteration;
    nlohmann::json rec = {{"iteration", i}, {"stage", "A"}};
    if (i == 0) {
      InitialPrior ip = initial_prior(s.views[0].image, *be_.depth, s.views[0].id, cfg_.fallback_hfov_deg,
                                      cfg_.confidence_sigma);
      s.views.set_camera(0, ip.K, ip.E);
      s.depths = {quantize_depth(std::move(ip.depth))};
      const auto cloud = candidates_from_view(s.depths[0], s.views[0].image, ip.K, ip.E, 0, cfg_.confidence_sigma);
      s.prior = merge_point_clouds({}, cloud, cfg_.bin_size);
      rec["candidates"] = cloud.size();
      rec["filtered"] = cloud.size();
    } else {
      s.depths.clear();
      ConfidencePointCloud candidates;
      for (std::size_t k = 0; k < s.views.size(); ++k) {
        const View& v = s.views[k];
        DepthRequest req{v.id, v.image, v.K, v.E};
        DepthResult res = be_.depth->estimate(req);
        check_depth_result(req, res);
        if (cfg_.trust_backend_poses && k > 0 && res.E) s.views.set_camera(k, res.K.value_or(v.K), *res.E);
        s.depths.push_back(quantize_depth(std::move(res.depth)));
        const View& cur = s.views[k];
        auto c = candidates_from_view(s.depths[k], cur.image, cur.K, cur.E, static_cast<std::uint32_t>(k),
                                      cfg_.confidence_sigma);
        candidates.points.insert(candidates.points.end(), c.points.begin(), c.points.end());
      }
      const ConfidencePointCloud filtered =
          cfg_.voting_enabled ? multi_view_filter(candidates, s.views, s.depths, cfg_.voting) : candidates;
      s.prior = merge_point_clouds(s.prior, filtered, cfg_.bin_size);
      rec["candidates"] = candidates.size();
      rec["filtered"] = filtered.size();
    }
    if (s.prior.empty()) throw Error("stage A: the spatial prior is empty");
    rec["views"] = s.views.size();
    rec["prior_points"] = s.prior.size();
    s.metrics.push_back(rec);
    s.next = Stage::kB;
  }

  void stage_b(IterationState& s) {
    const int i = s.iteration;
    const GridGeometry geom = fit_bounds(s.prior, cfg_.S, cfg_.fit_margin);
    std::size_t outside = 0;
    const OccupancyGrid voxels = voxelize(s.prior, geom, &outside);
    OccupancyGrid grid = carve_free_space(voxels, s.views, s.depths, cfg_.carve_epsilon_pitches * geom.pitch);
    const PatchSet patches = decompose_patches(grid, cfg_.P, cfg_.overlap, s.views);
    const CompletionResult comp = complete_structure(grid, patches, *be_.completer, s.views, s.depths);
    const SceneLatent blended = blend_patch_latents(patch_latents_of(patches, comp), cfg_.P, geom);
    const SceneLatent assembled =
        assemble_latent(comp.occupied, blended, s.prior, s.latent ? &*s.latent : nullptr);
    const TtoResult tto = test_time_optimize(assembled, s.views, cfg_.tto);
    tto.latent.validate();

    nlohmann::json rec = {{"iteration", i},
                          {"stage", "B"},
                          {"grid", {{"S", geom.S}, {"pitch", geom.pitch}, {"origin", to_json(geom.origin)}}},
                          {"points_outside_grid", outside},
                          {"observed", grid.count(VoxelState::kObserved)},
                          {"free", grid.count(VoxelState::kFree)},
                          {"unknown", grid.count(VoxelState::kUnknown)},
                          {"patches", patches.patches.size()},
                          {"occupied", comp.occupied.count()},
                          {"losses", tto.losses},
                          {"optimization_steps", tto.steps_taken}};
    if (!reference_.empty()) rec["coverage"] = latent_coverage(tto.latent);
    s.grid = std::move(grid);
    s.latent = tto.latent;
    s.metrics.push_back(rec);
    s.next = i + 1 < cfg_.T ? Stage::kC : Stage::kFinal;
  }

  void stage_c(IterationState& s) {
    const int i = s.iteration;
    const SceneLatent& latent = s.latent.value();
    const TexturedMesh mesh = marching_cubes(latent.occupancy());
    const View& seed = s.views[0];
    const Vec3 center = s.prior.weighted_centroid();
    const double radius = (seed.E.center() - center).norm();
    if (!(radius > 1e-9)) throw Error("stage C: seed camera coincides with the scene center");
    const AzimuthRange range = iteration_schedule(i + 1, cfg_.azimuth_amplitude, cfg_.schedule_table);
    OrbitSpec orbit;
    orbit.center = center;
    orbit.radius = radius;
    orbit.base = seed.E;
    orbit.a0 = range.a0;
    orbit.a1 = range.a1;
    orbit.N = cfg_.N;

    SynthesisRequest req;
    req.seed_image = seed.image;
    req.K = seed.K;
    req.trajectory = orbital_trajectory(orbit);
    req.prompt = cfg_.prompt();
    req.controlnet_scale = cfg_.controlnet_scale;
    req.inject_first_frame = cfg_.inject_first_frame;
    std::size_t empty_disparity = 0;
    for (const auto& f : req.trajectory) {
      const DepthMap d = render_depth(mesh, seed.K, f.pose, seed.K.width, seed.K.height);
      if (d.valid_count() == 0) {
        ++empty_disparity;
        req.disparities.push_back({d.width, d.height, std::vector<double>(d.values.size(), 0.0),
                                   std::vector<double>(d.values.size(), 0.0)});
      } else {
        req.disparities.push_back(to_disparity(d));
      }
    }
    SynthesisResponse res = be_.synthesizer->synthesize(req);
    check_synthesis_response(req, res);
    for (std::size_t k = 0; k < res.frames.size(); ++k) {
      View v;
      v.id = format_view_id(i + 1, static_cast<int>(k));
      v.image = quantize8(res.frames[k]);
      v.K = req.K;
      v.E = cfg_.trust_backend_poses && res.poses ? (*res.poses)[k] : req.trajectory[k].pose;
      v.iteration_of_origin = i + 1;
      s.views.add(std::move(v));
    }
    s.metrics.push_back({{"iteration", i},
                         {"stage", "C"},
                         {"azimuth_range", {range.a0, range.a1}},
                         {"orbit_center", to_json(center)},
                         {"orbit_radius", radius},
                         {"guide_mesh_triangles", mesh.triangles.size()},
                         {"empty_disparity_frames", empty_disparity},
                         {"new_views", res.frames.size()},
                         {"views", s.views.size()}});
    s.iteration = i + 1;
    s.next = Stage::kA;
  }

  // Mesh extraction, texture baking and the report.
  void stage_final(IterationState& s, RunResult& out) {
    const SceneLatent& latent = s.latent.value();
    TexturedMesh mesh = marching_cubes(latent.occupancy());
    if (mesh.empty()) throw Error("final mesh is empty");
    std::vector<DepthMap> mesh_depths;
    mesh_depths.reserve(s.views.size());
    for (const auto& v : s.views) mesh_depths.push_back(render_depth(mesh, v.K, v.E, v.image.width, v.image.height));
    mesh = bake_textures(mesh, s.views, mesh_depths, latent.geom.pitch, cfg_.bake);
    mesh.validate();
    out.mesh = mesh;
    out.report = build_report(s, mesh);
    if (!opt_.out_dir.empty()) {
      io::write_file(opt_.out_dir / "scene.glb", export_glb(mesh));
      fs::create_directories(opt_.out_dir / "latent");
      write_latent(opt_.out_dir / "latent", latent);
      io::write_text(opt_.out_dir / "report.json", out.report.dump(2));
    }
  }

  double latent_coverage(const SceneLatent& latent) const {
    std::vector<Vec3> centers;
    centers.reserve(latent.size());
    for (std::size_t n = 0; n < latent.size(); ++n) centers.push_back(latent.center(n));
    return coverage_fraction(centers, reference_, 2.0 * latent.geom.pitch);
  }

  nlohmann::json build_report(const IterationState& s, const TexturedMesh& mesh) const {
    std::map<int, nlohmann::json> per_iter;
    for (const auto& rec : s.metrics) {
      const int i = rec.at("iteration").get<int>();
      auto& it = per_iter[i];
      if (it.is_null()) it = {{"iteration", i}, {"stages", nlohmann::json::object()}};
      it["stages"][rec.at("stage").get<std::string>()] = rec;
    }
    nlohmann::json iterations = nlohmann::json::array();
    nlohmann::json coverage = nlohmann::json::array();
    for (auto& [i, it] : per_iter) {
      if (it["stages"].contains("B") && it["stages"]["B"].contains("coverage"))
        coverage.push_back(it["stages"]["B"]["coverage"]);
      iterations.push_back(it);
    }
    nlohmann::json final_ = {{"vertices", mesh.vertices.size()},
                             {"triangles", mesh.triangles.size()},
                             {"watertight", mesh.watertight()},
                             {"euler_characteristic", mesh.euler_characteristic()},
                             {"views", s.views.size()},
                             {"prior_points", s.prior.size()},
                             {"latent_voxels", s.latent ? s.latent->size() : 0}};
    if (!reference_.empty()) {
      const double pitch = s.latent->geom.pitch;
      const auto samples = sample_mesh(mesh, opt_.reference_samples, cfg_.seed);
      final_["chamfer"] = chamfer_distance(samples, reference_, pitch);
      final_["mesh_coverage"] = coverage_fraction(samples, reference_, 2.0 * pitch);
    }
    nlohmann::json report = {{"format", "evoscene-report/1"},
                             {"config", to_json(cfg_)},
                             {"iterations", iterations},
                             {"final", final_}};
    if (opt_.reference) {
      report["scene"] = opt_.reference->name;
      report["coverage"] = coverage;
    }
    return report;
  }

 private:
  RunResult drive(IterationState s) {
    RunResult out;
    int executed = 0;
    while (true) {
      if (opt_.max_stages >= 0 && executed >= opt_.max_stages) {
        log_info("pipeline.interrupted", {{"iteration", s.iteration}, {"next_stage", stage_name(s.next)}});
        out.state = std::move(s);
        flush_timings(out);
        return out;
      }
      const Stage stage = s.next;
      const int iteration = s.iteration;
      log_info("pipeline.stage_begin", {{"iteration", iteration}, {"stage", stage_name(stage)}});
      const auto t0 = std::chrono::steady_clock::now();
      switch (stage) {
        case Stage::kA: stage_a(s); break;
        case Stage::kB: stage_b(s); break;
        case Stage::kC: stage_c(s); break;
        case Stage::kFinal: stage_final(s, out); break;
      }
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      timings_.push_back({{"iteration", iteration}, {"stage", stage_name(stage)}, {"seconds", secs}});
      log_info("pipeline.stage_end", {{"iteration", iteration}, {"stage", stage_name(stage)}, {"seconds", secs}});
      ++executed;
      if (stage == Stage::kFinal) {
        out.finished = true;
        out.state = std::move(s);
        flush_timings(out);
        return out;
      }
      // A checkpoint belongs to the iteration of the stage that produced it.
      if (!opt_.out_dir.empty()) save_checkpoint(opt_.out_dir / ("iter_" + std::to_string(iteration)), s);
    }
  }

  void flush_timings(RunResult& out) {
    out.timings = timings_;
    if (!opt_.out_dir.empty()) io::write_text(opt_.out_dir / "timings.json", timings_.dump(2));
  }

  PipelineConfig cfg_;
  Backends be_;
  RunOptions opt_;
  std::vector<Vec3> reference_;
  nlohmann::json timings_ = nlohmann::json::array();
};

// One full iteration (A, B and, unless it is the last, C) without
// checkpoints.
inline IterationState run_iteration(IterationState state, const PipelineConfig& cfg, Backends backends) {
  Pipeline p(cfg, backends);
  if (state.next != Stage::kA) throw Error("run_iteration: state is not at the start of an iteration");
  p.stage_a(state);
  p.stage_b(state);
  if (state.next == Stage::kC) p.stage_c(state);
  return state;
}

}  // namespace evoscene
