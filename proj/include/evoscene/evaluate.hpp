// Copyright 2026 The EvoScene Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Scores a finished run directory against its analytic scene.

#pragma once

#include <filesystem>
#include <string>

#include "evoscene/meshing.hpp"
#include "evoscene/pipeline.hpp"
#include "evoscene/synthbench.hpp"
#include "json.hpp"

namespace evoscene {

struct EvaluateOptions {
  std::size_t samples = 10000;
  std::uint64_t seed = 0;
};

// Coverage of every iteration's latent, chamfer and watertightness of the
// exported mesh, and the optimization loss curves.
inline nlohmann::json evaluate_run(const std::filesystem::path& run_dir, const SceneSpec& spec,
                                   const EvaluateOptions& opt = {}) {
  namespace fs = std::filesystem;
  if (!fs::exists(run_dir / "scene.glb")) throw UsageError("evaluate: " + run_dir.string() + " has no scene.glb");
  const auto reference = reference_samples(spec, opt.samples, opt.seed);
  nlohmann::json coverage = nlohmann::json::array();
  nlohmann::json losses = nlohmann::json::array();
  for (int i = 0;; ++i) {
    const fs::path dir = run_dir / ("iter_" + std::to_string(i));
    if (!fs::exists(dir)) break;
    verify_checkpoint(dir);
    if (!fs::exists(dir / "latent.json")) break;
    const SceneLatent latent = read_latent(dir);
    std::vector<Vec3> centers;
    for (std::size_t n = 0; n < latent.size(); ++n) centers.push_back(latent.center(n));
    coverage.push_back(coverage_fraction(centers, reference, 2.0 * latent.geom.pitch));
    const auto metrics = nlohmann::json::parse(io::read_text(dir / "metrics.json"));
    for (const auto& rec : metrics)
      if (rec.at("iteration") == i && rec.at("stage") == "B") losses.push_back(rec.at("losses"));
  }
  const TexturedMesh mesh = import_glb(io::read_file(run_dir / "scene.glb"));
  const SceneLatent final_latent = read_latent(run_dir / "latent");
  const double pitch = final_latent.geom.pitch;
  const auto samples = sample_mesh(mesh, opt.samples, opt.seed);
  return {{"scene", spec.name},
          {"coverage", coverage},
          {"chamfer", chamfer_distance(samples, reference, pitch)},
          {"chamfer_pitches", chamfer_distance(samples, reference, pitch) / pitch},
          {"mesh_coverage", coverage_fraction(samples, reference, 2.0 * pitch)},
          {"watertight", mesh.watertight()},
          {"vertices", mesh.vertices.size()},
          {"triangles", mesh.triangles.size()},
          {"loss_curves", losses}};
}

}  // namespace evoscene
