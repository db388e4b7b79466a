// Copyright 2026 The EvoScene Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Deterministic stand-ins for the depth and view-synthesis services, backed
// by an analytic synthbench scene.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <utility>

#include "evoscene/interfaces.hpp"
#include "evoscene/log.hpp"
#include "evoscene/synthbench.hpp"

namespace evoscene {

namespace detail {
// FNV-1a over the id, mixed with the run seed.
inline std::uint64_t stream_seed(std::uint64_t seed, const std::string& id) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : id) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h ^ (seed * 0x9E3779B97F4A7C15ull);
}
}  // namespace detail

// Exact depth and camera for views it knows: the seed view ("seed") plus any
// registered id. Unregistered ids fall back to the host's camera hints.
class OracleDepth : public DepthEstimator {
 public:
  explicit OracleDepth(SceneSpec spec, double noise_sigma = 0.0, std::uint64_t seed = 0)
      : spec_(std::move(spec)), sigma_(noise_sigma), seed_(seed) {
    register_view("seed", spec_.K, spec_.E);
  }

  void register_view(const std::string& id, const CameraIntrinsics& K, const CameraPose& E) { known_[id] = {K, E}; }

  DepthCapabilities capabilities() const override { return {true, true}; }

  DepthResult estimate(const DepthRequest& req) override {
    CameraIntrinsics K;
    CameraPose E;
    if (const auto it = known_.find(req.view_id); it != known_.end()) {
      std::tie(K, E) = it->second;
    } else if (req.K_hint && req.E_hint) {
      K = *req.K_hint;
      E = *req.E_hint;
    } else {
      throw Error("oracle depth: unknown view id " + req.view_id);
    }
    if (req.image.width != K.width || req.image.height != K.height) K = K.scaled_to(req.image.width, req.image.height);
    DepthResult res;
    res.depth = render_gt(spec_, K, E).depth;
    if (sigma_ > 0.0) {
      std::mt19937_64 rng(detail::stream_seed(seed_, req.view_id));
      std::normal_distribution<double> n(0.0, sigma_);
      for (std::size_t i = 0; i < res.depth.values.size(); ++i)
        if (res.depth.mask[i]) {
          const double v = res.depth.values[i] + n(rng);
          res.depth.values[i] = v;
          if (!(v > 0.0)) {
            res.depth.mask[i] = 0;
            res.depth.values[i] = std::numeric_limits<double>::quiet_NaN();
          }
        }
    }
    res.K = K;
    res.E = E;
    return res;
  }

  const SceneSpec& scene() const { return spec_; }

 private:
  SceneSpec spec_;
  double sigma_;
  std::uint64_t seed_;
  std::map<std::string, std::pair<CameraIntrinsics, CameraPose>> known_;
};

// Renders the ground-truth scene along the requested trajectory. Prompt and
// disparity conditioning are accepted and ignored.
class OracleSynthesizer : public ViewSynthesizer {
 public:
  explicit OracleSynthesizer(SceneSpec spec, double noise_sigma = 0.0, std::uint64_t seed = 0)
      : spec_(std::move(spec)), sigma_(noise_sigma), seed_(seed) {}

  SynthesisResponse synthesize(const SynthesisRequest& req) override {
    if (!req.disparities.empty())
      log_debug("oracle.disparity_unused", {{"frames", req.disparities.size()}});
    SynthesisResponse res;
    res.frames.reserve(req.trajectory.size());
    for (std::size_t k = 0; k < req.trajectory.size(); ++k) {
      if (k == 0 && req.inject_first_frame && req.seed_image.width == req.K.width &&
          req.seed_image.height == req.K.height) {
        res.frames.push_back(req.seed_image);
        continue;
      }
      Image img = render_gt(spec_, req.K, req.trajectory[k].pose).image;
      if (sigma_ > 0.0) {
        // Keyed by the frame's azimuth so resumed runs draw the same noise.
        std::mt19937_64 rng(detail::stream_seed(seed_, "frame@" + std::to_string(req.trajectory[k].azimuth_deg)));
        std::normal_distribution<double> n(0.0, sigma_);
        for (auto& v : img.data) v = static_cast<float>(std::clamp(v + n(rng), 0.0, 1.0));
      }
      res.frames.push_back(std::move(img));
    }
    return res;
  }

 private:
  SceneSpec spec_;
  double sigma_;
  std::uint64_t seed_;
};

}  // namespace evoscene
