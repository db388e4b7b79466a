// Copyright 2026 The EvoScene Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Pipeline configuration, its JSON form and the two presets.

#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "evoscene/errors.hpp"
#include "evoscene/io.hpp"
#include "evoscene/meshing.hpp"
#include "evoscene/optimize.hpp"
#include "evoscene/spatial_prior.hpp"
#include "evoscene/trajectory.hpp"
#include "json.hpp"

namespace evoscene {

inline constexpr const char* kDefaultPromptTemplate =
    "An orbiting camera circles a static 3D scene; fill the unseen regions with realistic detail that stays "
    "geometrically consistent with the visible ones. {caption}";

struct PipelineConfig {
  // Grid and patches.
  int S = 128;
  int P = 64;
  int overlap = 48;
  double fit_margin = 0.05;  // fraction of the grid side added on every face

  // Schedule.
  int T = 3;
  int N = 121;
  double azimuth_amplitude = 45.0;
  std::vector<AzimuthRange> schedule_table;

  // Stage A.
  double confidence_sigma = 0.5;
  VotingConfig voting;
  bool voting_enabled = true;
  double bin_size = 0.05;
  double fallback_hfov_deg = 60.0;

  // Stage B.
  double carve_epsilon_pitches = 1.0;
  int completion_radius = 2;
  TtoConfig tto;

  // Stage C.
  std::string prompt_template = kDefaultPromptTemplate;
  std::string caption;
  double controlnet_scale = 0.4;
  bool inject_first_frame = true;
  bool trust_backend_poses = false;

  // Mesh.
  BakeConfig bake;

  std::uint64_t seed = 0;

  std::string prompt() const {
    std::string p = prompt_template;
    if (const auto at = p.find("{caption}"); at != std::string::npos) p.replace(at, 9, caption);
    while (!p.empty() && p.back() == ' ') p.pop_back();
    return p;
  }

  void validate() const {
    if (T < 1) throw UsageError("config: T must be >= 1");
    if (S < 2) throw UsageError("config: S must be >= 2");
    if (P < 1 || P > S) throw UsageError("config: P must satisfy 1 <= P <= S");
    if (overlap < 0 || overlap >= P) throw UsageError("config: overlap must satisfy 0 <= overlap < P");
    if (N < 2) throw UsageError("config: N must be >= 2");
    if (!(azimuth_amplitude > 0.0)) throw UsageError("config: azimuth amplitude must be positive");
    if (!(bin_size > 0.0)) throw UsageError("config: bin size must be positive");
    if (!(confidence_sigma > 0.0)) throw UsageError("config: confidence sigma must be positive");
    if (!(fit_margin >= 0.0)) throw UsageError("config: fit margin must be non-negative");
    if (!(carve_epsilon_pitches >= 0.0)) throw UsageError("config: carving epsilon must be non-negative");
    if (completion_radius < 0) throw UsageError("config: completion radius must be >= 0");
    if (tto.steps < 0 || !(tto.lr > 0.0)) throw UsageError("config: optimization steps >= 0 and lr > 0 required");
    if (!(fallback_hfov_deg > 0.0 && fallback_hfov_deg < 180.0)) throw UsageError("config: fallback FOV out of range");
    try {
      voting.validate();
      tto.weights.require_native();
    } catch (const UsageError&) {
      throw;
    } catch (const Error& e) {
      throw UsageError(std::string("config: ") + e.what());
    }
  }

  static PipelineConfig paper() { return PipelineConfig{}; }

  // Desk-scale settings for the synthetic suite.
  static PipelineConfig bench() {
    PipelineConfig c;
    c.S = 32;
    c.P = 16;
    c.overlap = 8;
    c.N = 9;
    c.bin_size = 0.025;
    c.fit_margin = 0.1;
    c.tto.render_size = 96;
    return c;
  }
};

inline nlohmann::json to_json(const PipelineConfig& c) {
  nlohmann::json table = nlohmann::json::array();
  for (const auto& r : c.schedule_table) table.push_back({r.a0, r.a1});
  return {
      {"S", c.S},
      {"P", c.P},
      {"overlap", c.overlap},
      {"fit_margin", c.fit_margin},
      {"T", c.T},
      {"N", c.N},
      {"azimuth_amplitude", c.azimuth_amplitude},
      {"schedule_table", table},
      {"confidence_sigma", c.confidence_sigma},
      {"voting",
       {{"enabled", c.voting_enabled},
        {"depth_tolerance", c.voting.depth_tolerance},
        {"min_support", c.voting.min_support},
        {"occlusion_margin", c.voting.occlusion_margin}}},
      {"bin_size", c.bin_size},
      {"fallback_hfov_deg", c.fallback_hfov_deg},
      {"carve_epsilon_pitches", c.carve_epsilon_pitches},
      {"completion_radius", c.completion_radius},
      {"optimization",
       {{"steps", c.tto.steps},
        {"lr", c.tto.lr},
        {"render_size", c.tto.render_size},
        {"optimize_opacity", c.tto.optimize_opacity},
        {"preconditioned", c.tto.preconditioned},
        {"line_search", c.tto.line_search},
        {"lambda", {c.tto.weights.l1, c.tto.weights.lpips, c.tto.weights.ssim}}}},
      {"synthesis",
       {{"prompt_template", c.prompt_template},
        {"caption", c.caption},
        {"controlnet_scale", c.controlnet_scale},
        {"inject_first_frame", c.inject_first_frame},
        {"trust_backend_poses", c.trust_backend_poses}}},
      {"bake",
       {{"visibility_pitches", c.bake.visibility_pitches},
        {"seed_weight", c.bake.seed_weight},
        {"later_weight", c.bake.later_weight}}},
      {"seed", c.seed},
  };
}

namespace detail {
// Rejects keys the schema does not know, so typos fail loudly.
inline void check_keys(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw UsageError("config: " + where + " must be an object");
  for (const auto& [k, v] : j.items())
    if (!known.count(k) && !k.starts_with("_")) throw UsageError("config: unknown key " + where + k);
}

template <typename T>
void read_if(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}
}  // namespace detail

// Overlays `j` on `base`. Keys beginning with "_" are comments.
inline PipelineConfig config_from_json(const nlohmann::json& j, PipelineConfig c = {}) {
  using detail::read_if;
  try {
    detail::check_keys(j,
                       {"preset", "S", "P", "overlap", "fit_margin", "T", "N", "azimuth_amplitude", "schedule_table",
                        "confidence_sigma", "voting", "bin_size", "fallback_hfov_deg", "carve_epsilon_pitches",
                        "completion_radius", "optimization", "synthesis", "bake", "seed"},
                       "");
    read_if(j, "S", c.S);
    read_if(j, "P", c.P);
    read_if(j, "overlap", c.overlap);
    read_if(j, "fit_margin", c.fit_margin);
    read_if(j, "T", c.T);
    read_if(j, "N", c.N);
    read_if(j, "azimuth_amplitude", c.azimuth_amplitude);
    if (j.contains("schedule_table")) {
      c.schedule_table.clear();
      for (const auto& r : j["schedule_table"]) c.schedule_table.push_back({r.at(0).get<double>(), r.at(1).get<double>()});
    }
    read_if(j, "confidence_sigma", c.confidence_sigma);
    if (j.contains("voting")) {
      const auto& v = j["voting"];
      detail::check_keys(v, {"enabled", "depth_tolerance", "min_support", "occlusion_margin"}, "voting.");
      read_if(v, "enabled", c.voting_enabled);
      read_if(v, "depth_tolerance", c.voting.depth_tolerance);
      read_if(v, "min_support", c.voting.min_support);
      read_if(v, "occlusion_margin", c.voting.occlusion_margin);
    }
    read_if(j, "bin_size", c.bin_size);
    read_if(j, "fallback_hfov_deg", c.fallback_hfov_deg);
    read_if(j, "carve_epsilon_pitches", c.carve_epsilon_pitches);
    read_if(j, "completion_radius", c.completion_radius);
    if (j.contains("optimization")) {
      const auto& o = j["optimization"];
      detail::check_keys(o,
                         {"steps", "lr", "render_size", "optimize_opacity", "preconditioned", "line_search", "lambda"},
                         "optimization.");
      read_if(o, "steps", c.tto.steps);
      read_if(o, "lr", c.tto.lr);
      read_if(o, "render_size", c.tto.render_size);
      read_if(o, "optimize_opacity", c.tto.optimize_opacity);
      read_if(o, "preconditioned", c.tto.preconditioned);
      read_if(o, "line_search", c.tto.line_search);
      if (o.contains("lambda")) {
        const auto& l = o["lambda"];
        c.tto.weights.l1 = l.at(0).get<double>();
        c.tto.weights.lpips = l.at(1).get<double>();
        c.tto.weights.ssim = l.at(2).get<double>();
      }
    }
    if (j.contains("synthesis")) {
      const auto& s = j["synthesis"];
      detail::check_keys(s, {"prompt_template", "caption", "controlnet_scale", "inject_first_frame", "trust_backend_poses"},
                         "synthesis.");
      read_if(s, "prompt_template", c.prompt_template);
      read_if(s, "caption", c.caption);
      read_if(s, "controlnet_scale", c.controlnet_scale);
      read_if(s, "inject_first_frame", c.inject_first_frame);
      read_if(s, "trust_backend_poses", c.trust_backend_poses);
    }
    if (j.contains("bake")) {
      const auto& b = j["bake"];
      detail::check_keys(b, {"visibility_pitches", "seed_weight", "later_weight"}, "bake.");
      read_if(b, "visibility_pitches", c.bake.visibility_pitches);
      read_if(b, "seed_weight", c.bake.seed_weight);
      read_if(b, "later_weight", c.bake.later_weight);
    }
    read_if(j, "seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  return c;
}

inline PipelineConfig preset_config(const std::string& name) {
  if (name == "paper") return PipelineConfig::paper();
  if (name == "bench") return PipelineConfig::bench();
  throw UsageError("unknown preset: " + name + " (expected paper or bench)");
}

// A config file may name a preset to start from; its other keys override it.
inline PipelineConfig load_config(const std::filesystem::path& path, const std::string& preset = "") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text(path));
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config " + path.string() + ": " + e.what());
  }
  const std::string base = !preset.empty() ? preset : j.value("preset", "paper");
  return config_from_json(j, preset_config(base));
}

}  // namespace evoscene
