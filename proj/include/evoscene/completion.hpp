// Copyright 2026 The EvoScene Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Structure completion under the observed-voxel clamp, the built-in
// morphological completer, hat-window blending of per-patch attributes and
// assembly of the scene latent.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evoscene/errors.hpp"
#include "evoscene/geometry.hpp"
#include "evoscene/image.hpp"
#include "evoscene/latent.hpp"
#include "evoscene/occupancy.hpp"
#include "evoscene/spatial_prior.hpp"
#include "evoscene/views.hpp"

namespace evoscene {

// One view's crop of a patch. K is the full view's; crop pixel (x, y) is
// frame pixel (rect.x0 + x, rect.y0 + y). Shifting K instead would move the
// principal point outside the crop, which intrinsics do not allow.
struct CropView {
  std::size_t view_index = 0;
  PixelRect rect;  // in the full frame
  Image image;
  DepthMap depth;
  CameraIntrinsics K;
  CameraPose E;

  // Projection in crop pixel coordinates.
  std::optional<Projection> project(const Vec3& world) const {
    auto p = evoscene::project(world, K, E);
    if (p) p->pixel -= Vec2(rect.x0, rect.y0);
    return p;
  }
};

struct CompletionRequest {
  std::size_t patch_index = 0;
  int P = 0;
  Index3 min_corner{};
  GridGeometry patch_geom;  // S = P, origin at the patch's min corner
  std::vector<VoxelState> states;        // P^3, x-fastest
  std::vector<std::uint8_t> clamp_mask;  // 1 where Observed
  std::vector<CropView> crops;
};

struct PatchVoxelAttribute {
  std::uint32_t local_index = 0;
  VoxelAttributes attrs;
};

struct CompletionResponse {
  std::vector<std::uint8_t> occupancy;  // P^3 binary
  std::vector<PatchVoxelAttribute> attributes;
};

class SceneCompleter {
 public:
  virtual ~SceneCompleter() = default;
  virtual CompletionResponse complete(const CompletionRequest& request) = 0;
};

inline CompletionRequest make_completion_request(const OccupancyGrid& grid, const PatchSet& patches, std::size_t p,
                                                 const ViewSet& views, std::span<const DepthMap> depths) {
  const Patch& patch = patches.patches.at(p);
  const int P = patches.patch_size;
  CompletionRequest req;
  req.patch_index = p;
  req.P = P;
  req.min_corner = patch.min_corner;
  req.patch_geom.S = P;
  req.patch_geom.pitch = grid.geom.pitch;
  req.patch_geom.origin =
      grid.geom.origin + grid.geom.pitch * Vec3(patch.min_corner[0], patch.min_corner[1], patch.min_corner[2]);
  req.states = patch.states;
  req.clamp_mask.resize(patch.states.size());
  for (std::size_t i = 0; i < patch.states.size(); ++i) req.clamp_mask[i] = patch.states[i] == VoxelState::kObserved;
  for (const auto& c : patch.crops) {
    const View& v = views[c.view_index];
    CropView cv;
    cv.view_index = c.view_index;
    cv.rect = c.rect;
    cv.image = crop(v.image, c.rect);
    cv.K = v.K;
    cv.E = v.E;
    if (c.view_index < depths.size()) {
      const DepthMap& d = depths[c.view_index];
      cv.depth = DepthMap(c.rect.width(), c.rect.height());
      for (int y = 0; y < c.rect.height(); ++y)
        for (int x = 0; x < c.rect.width(); ++x)
          if (d.valid(c.rect.x0 + x, c.rect.y0 + y)) cv.depth.set(x, y, d.at(c.rect.x0 + x, c.rect.y0 + y));
    }
    req.crops.push_back(std::move(cv));
  }
  return req;
}

// Host-side contract: a P^3 binary occupancy that keeps every clamped voxel,
// and attributes that address voxels the response marks occupied.
inline void check_completion_response(const CompletionRequest& req, const CompletionResponse& res) {
  const std::size_t n = static_cast<std::size_t>(req.P) * req.P * req.P;
  if (res.occupancy.size() != n)
    throw ContractError("occupancy: expected " + std::to_string(n) + " entries, got " +
                        std::to_string(res.occupancy.size()));
  for (std::size_t i = 0; i < n; ++i) {
    if (res.occupancy[i] > 1) throw ContractError("occupancy[" + std::to_string(i) + "]: value is not binary");
    if (req.clamp_mask[i] && !res.occupancy[i]) {
      const auto c = req.patch_geom.coords(i);
      throw ContractError("occupancy: observed voxel (" + std::to_string(c[0]) + "," + std::to_string(c[1]) + "," +
                          std::to_string(c[2]) + ") was emptied");
    }
  }
  for (std::size_t a = 0; a < res.attributes.size(); ++a) {
    const auto& pa = res.attributes[a];
    const std::string where = "attributes[" + std::to_string(a) + "]";
    if (pa.local_index >= n) throw ContractError(where + ".index: out of range");
    if (!res.occupancy[pa.local_index]) throw ContractError(where + ".index: voxel is not occupied");
    const auto& v = pa.attrs;
    if (!v.color.allFinite() || (v.color.array() < 0.0).any() || (v.color.array() > 1.0).any())
      throw ContractError(where + ".color: outside [0,1]");
    if (!(v.opacity > 0.0 && v.opacity <= 1.0)) throw ContractError(where + ".opacity: outside (0,1]");
    if (!(std::isfinite(v.scale) && v.scale > 0.0)) throw ContractError(where + ".scale: must be positive");
  }
}

struct CompletionResult {
  BinaryField occupied;
  std::vector<CompletionResponse> responses;  // one per patch, in patch order
};

// Sends every patch to the backend, checks each answer, and fuses the
// answers by majority vote over the patches covering each voxel (ties count
// as occupied). Free voxels are forced empty and Observed voxels occupied.
inline CompletionResult complete_structure(const OccupancyGrid& grid, const PatchSet& patches,
                                           SceneCompleter& backend, const ViewSet& views,
                                           std::span<const DepthMap> depths) {
  const int P = patches.patch_size;
  const GridGeometry& g = grid.geom;
  std::vector<std::uint16_t> votes(g.voxel_count(), 0), cover(g.voxel_count(), 0);
  CompletionResult out;
  out.responses.reserve(patches.patches.size());
  for (std::size_t p = 0; p < patches.patches.size(); ++p) {
    const CompletionRequest req = make_completion_request(grid, patches, p, views, depths);
    CompletionResponse res;
    try {
      res = backend.complete(req);
      check_completion_response(req, res);
    } catch (const ContractError& e) {
      throw ContractError("patch " + std::to_string(p) + ": " + e.what());
    } catch (const std::exception& e) {
      throw Error("completion backend failed on patch " + std::to_string(p) + ": " + e.what());
    }
    const Index3& c = patches.patches[p].min_corner;
    std::size_t n = 0;
    for (int k = 0; k < P; ++k)
      for (int j = 0; j < P; ++j)
        for (int i = 0; i < P; ++i, ++n) {
          const std::size_t gi = g.index(c[0] + i, c[1] + j, c[2] + k);
          ++cover[gi];
          votes[gi] += res.occupancy[n];
        }
    out.responses.push_back(std::move(res));
  }
  out.occupied = BinaryField(g);
  for (std::size_t i = 0; i < g.voxel_count(); ++i) {
    bool occ = cover[i] > 0 && 2 * votes[i] >= cover[i];
    if (grid.states[i] == VoxelState::kFree) occ = false;
    if (grid.states[i] == VoxelState::kObserved) occ = true;
    out.occupied.occupied[i] = occ;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Built-in completer: morphological closing of the Observed set that may
// only claim Unknown voxels.

namespace detail {

// r steps of 26-neighbour growth, i.e. dilation by the cube of half-width r.
// The 6-neighbour diamond is too thin: its tip passes through a one-voxel
// hole in a surface, so holes are never closed.
inline std::vector<std::uint8_t> dilate26(const std::vector<std::uint8_t>& in, int P, int r,
                                          const std::vector<std::uint8_t>& allowed) {
  std::vector<std::uint8_t> cur = in, next;
  auto idx = [P](int i, int j, int k) { return static_cast<std::size_t>(i) + P * (j + static_cast<std::size_t>(P) * k); };
  for (int step = 0; step < r; ++step) {
    next = cur;
    for (int k = 0; k < P; ++k)
      for (int j = 0; j < P; ++j)
        for (int i = 0; i < P; ++i) {
          const std::size_t c = idx(i, j, k);
          if (cur[c] || !allowed[c]) continue;
          bool hit = false;
          for (int e = std::max(0, k - 1); e <= std::min(P - 1, k + 1) && !hit; ++e)
            for (int b = std::max(0, j - 1); b <= std::min(P - 1, j + 1) && !hit; ++b)
              for (int a = std::max(0, i - 1); a <= std::min(P - 1, i + 1); ++a)
                if (cur[idx(a, b, e)]) {
                  hit = true;
                  break;
                }
          next[c] = hit;
        }
    cur.swap(next);
  }
  return cur;
}

}  // namespace detail

// Closing restricted to Unknown voxels. Dilation cannot enter Free voxels,
// which therefore erode whatever grew next to them. Voxels outside the patch
// are ignored by both passes so patch borders do not erode the interior.
inline std::vector<std::uint8_t> close_unknown(const std::vector<VoxelState>& states, int P, int radius) {
  const std::size_t n = states.size();
  std::vector<std::uint8_t> observed(n), not_free(n), all(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    observed[i] = states[i] == VoxelState::kObserved;
    not_free[i] = states[i] != VoxelState::kFree;
  }
  const auto grown = detail::dilate26(observed, P, radius, not_free);
  // Erosion = complement of the dilated complement.
  std::vector<std::uint8_t> outside(n);
  for (std::size_t i = 0; i < n; ++i) outside[i] = !grown[i];
  const auto outside_grown = detail::dilate26(outside, P, radius, all);
  std::vector<std::uint8_t> out(n);
  for (std::size_t i = 0; i < n; ++i)
    out[i] = observed[i] || (states[i] == VoxelState::kUnknown && grown[i] && !outside_grown[i]);
  return out;
}

class OracleCompleter : public SceneCompleter {
 public:
  explicit OracleCompleter(int radius = 2, double depth_test_pitches = 2.0)
      : radius_(radius), depth_test_pitches_(depth_test_pitches) {}

  CompletionResponse complete(const CompletionRequest& req) override {
    CompletionResponse res;
    res.occupancy = close_unknown(req.states, req.P, radius_);
    std::vector<ConfidenceMap> conf;
    conf.reserve(req.crops.size());
    for (const auto& c : req.crops) conf.push_back(depth_confidence(c.depth));
    const double pitch = req.patch_geom.pitch;
    for (std::size_t i = 0; i < res.occupancy.size(); ++i) {
      if (!res.occupancy[i] || req.clamp_mask[i]) continue;
      const Vec3 center = req.patch_geom.center(i);
      Color acc = Color::Zero();
      double w = 0.0;
      for (std::size_t c = 0; c < req.crops.size(); ++c) {
        const CropView& cv = req.crops[c];
        const auto p = cv.project(center);
        if (!p) continue;
        const long u = std::lround(p->pixel.x());
        const long v = std::lround(p->pixel.y());
        if (!cv.depth.valid(static_cast<int>(u), static_cast<int>(v))) continue;
        if (std::abs(p->depth - cv.depth.at(static_cast<int>(u), static_cast<int>(v))) > depth_test_pitches_ * pitch)
          continue;
        const double cw = conf[c].at(static_cast<int>(u), static_cast<int>(v));
        acc += cw * sample_bilinear(cv.image, p->pixel.x(), p->pixel.y());
        w += cw;
      }
      VoxelAttributes a;
      a.color = w > 0.0 ? Color((acc / w).cwiseMax(0.0).cwiseMin(1.0)) : Color::Constant(0.5);
      a.opacity = 1.0;
      a.scale = pitch;
      res.attributes.push_back({static_cast<std::uint32_t>(i), a});
    }
    return res;
  }

 private:
  int radius_;
  double depth_test_pitches_;
};

// ---------------------------------------------------------------------------
// Blending

// Separable hat window over a patch: 1 - |i + 0.5 - P/2| / (P/2) per axis.
// Strictly positive everywhere, largest at the core, near zero at the rim.
inline double hat_weight(int i, int P) {
  const double h = 0.5 * P;
  return 1.0 - std::abs(i + 0.5 - h) / h;
}

inline double hat_weight(const Index3& local, int P) {
  return hat_weight(local[0], P) * hat_weight(local[1], P) * hat_weight(local[2], P);
}

struct PatchLatent {
  Index3 min_corner{};
  std::vector<PatchVoxelAttribute> voxels;
};

// Normalized blend weights of every patch covering `voxel`, in patch order.
inline std::vector<double> blend_weights(const std::vector<Index3>& corners, int P, const Index3& voxel) {
  std::vector<double> w;
  double total = 0.0;
  for (const auto& c : corners) {
    const Index3 l{voxel[0] - c[0], voxel[1] - c[1], voxel[2] - c[2]};
    if (l[0] < 0 || l[1] < 0 || l[2] < 0 || l[0] >= P || l[1] >= P || l[2] >= P) continue;
    w.push_back(hat_weight(l, P));
    total += w.back();
  }
  for (double& x : w) x /= total;
  return w;
}

// Per-voxel attributes from overlapping patches, combined with normalized
// hat weights. Voxels reported by a single patch are copied verbatim.
inline SceneLatent blend_patch_latents(const std::vector<PatchLatent>& patches, int P, const GridGeometry& geom) {
  const std::size_t nvox = geom.voxel_count();
  std::vector<double> total(nvox, 0.0);
  auto global = [&](const PatchLatent& pl, std::uint32_t local, Index3& l) {
    l = {static_cast<int>(local % P), static_cast<int>((local / P) % P), static_cast<int>(local / (P * P))};
    return geom.index(pl.min_corner[0] + l[0], pl.min_corner[1] + l[1], pl.min_corner[2] + l[2]);
  };
  for (const auto& pl : patches)
    for (const auto& pv : pl.voxels) {
      Index3 l;
      const std::size_t gi = global(pl, pv.local_index, l);
      total[gi] += hat_weight(l, P);
    }
  std::vector<VoxelAttributes> acc(nvox, VoxelAttributes{Color::Zero(), 0.0, 0.0});
  for (const auto& pl : patches)
    for (const auto& pv : pl.voxels) {
      Index3 l;
      const std::size_t gi = global(pl, pv.local_index, l);
      const double w = hat_weight(l, P) / total[gi];
      acc[gi].color += w * pv.attrs.color;
      acc[gi].opacity += w * pv.attrs.opacity;
      acc[gi].scale += w * pv.attrs.scale;
    }
  SceneLatent out;
  out.geom = geom;
  for (std::size_t i = 0; i < nvox; ++i)
    if (total[i] > 0.0) {
      // Normalized weights can sum to 1 + ulp.
      VoxelAttributes a = acc[i];
      a.color = a.color.cwiseMax(0.0).cwiseMin(1.0);
      a.opacity = std::min(a.opacity, 1.0);
      out.voxels.push_back(static_cast<std::uint32_t>(i));
      out.attrs.push_back(a);
    }
  return out;
}

inline std::vector<PatchLatent> patch_latents_of(const PatchSet& patches, const CompletionResult& result) {
  std::vector<PatchLatent> out;
  for (std::size_t p = 0; p < patches.patches.size(); ++p)
    out.push_back({patches.patches[p].min_corner, result.responses.at(p).attributes});
  return out;
}

// Attributes for every occupied voxel, taken from the first available
// source: blended backend attributes, confidence-weighted colors of prior
// points inside the voxel, the voxel of the previous latent containing this
// voxel's center, or neutral gray.
inline SceneLatent assemble_latent(const BinaryField& occupied, const SceneLatent& blended,
                                   const ConfidencePointCloud& prior, const SceneLatent* previous = nullptr) {
  const GridGeometry& g = occupied.geom;
  std::vector<Color> prior_color(g.voxel_count(), Color::Zero());
  std::vector<double> prior_w(g.voxel_count(), 0.0);
  for (const auto& p : prior.points) {
    const auto v = g.voxel_of(p.world());
    if (!v) continue;
    const std::size_t i = g.index(*v);
    const double w = std::max<double>(p.confidence, 1e-6);
    prior_color[i] += w * p.rgb();
    prior_w[i] += w;
  }
  SceneLatent out;
  out.geom = g;
  for (std::size_t i = 0; i < g.voxel_count(); ++i) {
    if (!occupied.occupied[i]) continue;
    VoxelAttributes a;
    a.scale = g.pitch;
    if (const auto b = blended.find(static_cast<std::uint32_t>(i))) {
      a = blended.attrs[*b];
    } else if (prior_w[i] > 0.0) {
      a.color = (prior_color[i] / prior_w[i]).cwiseMax(0.0).cwiseMin(1.0);
    } else if (previous) {
      const auto pv = previous->geom.voxel_of(g.center(i));
      if (pv)
        if (const auto n = previous->find(static_cast<std::uint32_t>(previous->geom.index(*pv))))
          a.color = previous->attrs[*n].color;
    }
    out.voxels.push_back(static_cast<std::uint32_t>(i));
    out.attrs.push_back(a);
  }
  return out;
}

}  // namespace evoscene
