// Copyright 2026 The EvoScene Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Depth estimation and view synthesis backends, plus the host-side checks
// every response must pass regardless of which implementation produced it.
// The structure-completion interface lives with the completion stage.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "evoscene/errors.hpp"
#include "evoscene/geometry.hpp"
#include "evoscene/image.hpp"

namespace evoscene {

struct DepthCapabilities {
  bool returns_intrinsics = false;
  bool returns_pose = false;
};

struct DepthRequest {
  std::string view_id;
  Image image;
  // Camera already known to the host (synthesized views); backends may use
  // it or ignore it.
  std::optional<CameraIntrinsics> K_hint;
  std::optional<CameraPose> E_hint;
};

struct DepthResult {
  DepthMap depth;
  std::optional<CameraIntrinsics> K;
  std::optional<CameraPose> E;
};

class DepthEstimator {
 public:
  virtual ~DepthEstimator() = default;
  virtual DepthCapabilities capabilities() const = 0;
  virtual DepthResult estimate(const DepthRequest& request) = 0;
};

inline void check_depth_result(const DepthRequest& req, const DepthResult& res) {
  const DepthMap& d = res.depth;
  if (d.width != req.image.width || d.height != req.image.height)
    throw ContractError("depth: map size does not match the request image");
  if (d.values.size() != static_cast<std::size_t>(d.width) * d.height || d.mask.size() != d.values.size())
    throw ContractError("depth: sample count does not match map size");
  for (std::size_t i = 0; i < d.values.size(); ++i)
    if (d.mask[i] && !(std::isfinite(d.values[i]) && d.values[i] > 0.0))
      throw ContractError("depth: valid sample is not finite and positive");
  if (res.K) res.K->validate();
  if (res.E) res.E->validate(1e-6);
}

struct TrajectoryFrame {
  double azimuth_deg = 0.0;
  CameraPose pose;
};

struct SynthesisRequest {
  Image seed_image;
  CameraIntrinsics K;  // shared by every frame
  std::vector<TrajectoryFrame> trajectory;
  std::vector<DisparityMap> disparities;  // one per trajectory frame
  std::string prompt;
  double controlnet_scale = 0.4;  // opaque to local backends
  bool inject_first_frame = true;
};

struct SynthesisResponse {
  std::vector<Image> frames;
  // Poses re-estimated by the backend, if it reports any.
  std::optional<std::vector<CameraPose>> poses;
};

class ViewSynthesizer {
 public:
  virtual ~ViewSynthesizer() = default;
  virtual SynthesisResponse synthesize(const SynthesisRequest& request) = 0;
};

// Exactly one frame per trajectory pose at the requested size; with
// first-frame injection, frame 0 must reproduce the seed image (>= 40 dB).
inline void check_synthesis_response(const SynthesisRequest& req, const SynthesisResponse& res,
                                     double min_first_frame_psnr = 40.0) {
  if (res.frames.size() != req.trajectory.size())
    throw ContractError("frames: expected " + std::to_string(req.trajectory.size()) + " frames, got " +
                        std::to_string(res.frames.size()));
  for (std::size_t i = 0; i < res.frames.size(); ++i)
    if (res.frames[i].width != req.K.width || res.frames[i].height != req.K.height)
      throw ContractError("frames[" + std::to_string(i) + "]: size does not match the request");
  if (res.poses && res.poses->size() != res.frames.size()) throw ContractError("poses: count does not match frames");
  if (req.inject_first_frame && !res.frames.empty() && req.seed_image.width == req.K.width &&
      req.seed_image.height == req.K.height) {
    const double p = psnr(res.frames[0], req.seed_image);
    if (p < min_first_frame_psnr)
      throw ContractError("frames[0]: does not reproduce the seed image (PSNR " + std::to_string(p) + " dB)");
  }
}

}  // namespace evoscene
