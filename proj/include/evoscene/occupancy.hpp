// Copyright 2026 The EvoScene Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Three-state voxel occupancy: grid fitting, voxelization of the prior,
// free-space carving along camera rays, and overlapping patch layout.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "evoscene/errors.hpp"
#include "evoscene/geometry.hpp"
#include "evoscene/image.hpp"
#include "evoscene/io.hpp"
#include "evoscene/log.hpp"
#include "evoscene/spatial_prior.hpp"
#include "evoscene/views.hpp"

namespace evoscene {

// Numeric encoding is part of the EVOG file format.
enum class VoxelState : std::uint8_t { kUnknown = 0, kFree = 1, kObserved = 2 };

using Index3 = std::array<int, 3>;

struct GridGeometry {
  int S = 1;
  Vec3 origin = Vec3::Zero();  // min corner, meters
  double pitch = 1.0;          // meters per voxel

  std::size_t voxel_count() const { return static_cast<std::size_t>(S) * S * S; }
  // x-fastest linear order.
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(S) * (j + static_cast<std::size_t>(S) * k);
  }
  std::size_t index(const Index3& v) const { return index(v[0], v[1], v[2]); }
  Index3 coords(std::size_t idx) const {
    const int i = static_cast<int>(idx % S);
    const int j = static_cast<int>((idx / S) % S);
    const int k = static_cast<int>(idx / (static_cast<std::size_t>(S) * S));
    return {i, j, k};
  }
  bool contains(int i, int j, int k) const { return i >= 0 && j >= 0 && k >= 0 && i < S && j < S && k < S; }
  Vec3 center(int i, int j, int k) const { return origin + pitch * Vec3(i + 0.5, j + 0.5, k + 0.5); }
  Vec3 center(std::size_t idx) const {
    const auto c = coords(idx);
    return center(c[0], c[1], c[2]);
  }
  Vec3 max_corner() const { return origin + Vec3::Constant(pitch * S); }

  std::optional<Index3> voxel_of(const Vec3& p) const {
    const Vec3 q = (p - origin) / pitch;
    const Index3 v{static_cast<int>(std::floor(q.x())), static_cast<int>(std::floor(q.y())),
                   static_cast<int>(std::floor(q.z()))};
    if (!contains(v[0], v[1], v[2])) return std::nullopt;
    return v;
  }

  void validate() const {
    if (S < 1) throw Error("grid: S must be >= 1");
    if (!(pitch > 0.0)) throw Error("grid: pitch must be positive");
    if (!origin.allFinite()) throw Error("grid: non-finite origin");
  }

  bool operator==(const GridGeometry&) const = default;
};

struct OccupancyGrid {
  GridGeometry geom;
  std::vector<VoxelState> states;

  OccupancyGrid() = default;
  explicit OccupancyGrid(const GridGeometry& g) : geom(g), states(g.voxel_count(), VoxelState::kUnknown) {
    g.validate();
  }

  int S() const { return geom.S; }
  VoxelState at(int i, int j, int k) const { return states[geom.index(i, j, k)]; }
  VoxelState& at(int i, int j, int k) { return states[geom.index(i, j, k)]; }

  std::size_t count(VoxelState s) const { return static_cast<std::size_t>(std::count(states.begin(), states.end(), s)); }

  bool operator==(const OccupancyGrid&) const = default;
};

// Linear-interpolated percentile of an unsorted sample (q in [0,1]).
inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw Error("percentile of empty sample");
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
  const double a = values[lo];
  if (hi == lo) return a;
  const double b = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
  return a + (pos - static_cast<double>(lo)) * (b - a);
}

// Cubic bounds around the per-axis [1st, 99th] percentile box of the cloud,
// grown by `margin` of the side on each face.
inline GridGeometry fit_bounds(const ConfidencePointCloud& cloud, int S, double margin = 0.05) {
  if (cloud.empty()) throw Error("no prior");
  if (S < 2) throw Error("fit_bounds: S must be >= 2");
  if (!(margin >= 0.0)) throw Error("fit_bounds: margin must be non-negative");
  Vec3 lo, hi;
  for (int a = 0; a < 3; ++a) {
    std::vector<double> v;
    v.reserve(cloud.size());
    for (const auto& p : cloud.points) v.push_back(p.position[a]);
    lo[a] = percentile(v, 0.01);
    hi[a] = percentile(std::move(v), 0.99);
  }
  double side = (hi - lo).maxCoeff();
  if (side <= 0.0) side = 1e-3;
  side *= 1.0 + 2.0 * margin;
  GridGeometry g;
  g.S = S;
  g.pitch = side / S;
  g.origin = 0.5 * (lo + hi) - Vec3::Constant(0.5 * side);
  return g;
}

// Voxels holding at least one point become Observed; the rest stay Unknown.
inline OccupancyGrid voxelize(const ConfidencePointCloud& cloud, const GridGeometry& geom,
                              std::size_t* outside_count = nullptr) {
  OccupancyGrid grid(geom);
  std::size_t outside = 0;
  for (const auto& p : cloud.points) {
    const auto v = geom.voxel_of(p.world());
    if (!v) {
      ++outside;
      continue;
    }
    grid.states[geom.index(*v)] = VoxelState::kObserved;
  }
  if (outside > 0) log_warn("voxelize.points_outside_grid", {{"count", outside}});
  if (outside_count) *outside_count = outside;
  return grid;
}

// Parameter interval [t_lo, t_hi] over which the ray o + t d lies inside the
// axis-aligned box [lo, hi]. Shared by the DDA and the brute-force check so
// that both see bit-identical plane crossings.
struct RayInterval {
  double lo, hi;
};

inline RayInterval slab_interval(const Vec3& o, const Vec3& d, const Vec3& lo, const Vec3& hi) {
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (o[a] < lo[a] || o[a] > hi[a]) return {1.0, 0.0};
      continue;
    }
    double ta = (lo[a] - o[a]) / d[a];
    double tb = (hi[a] - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return {t0, t1};
}

inline RayInterval voxel_interval(const GridGeometry& g, const Vec3& o, const Vec3& d, int i, int j, int k) {
  const Vec3 lo = g.origin + g.pitch * Vec3(i, j, k);
  const Vec3 hi = g.origin + g.pitch * Vec3(i + 1, j + 1, k + 1);
  return slab_interval(o, d, lo, hi);
}

// A voxel is carved by a ray when the ray crosses it with positive length at
// t >= 0 and its center sits more than epsilon in front of the observed depth.
inline bool carves(const GridGeometry& g, const CameraPose& E, const Vec3& o, const Vec3& d, double observed_depth,
                   double epsilon, int i, int j, int k) {
  const RayInterval iv = voxel_interval(g, o, d, i, j, k);
  if (!(std::max(iv.lo, 0.0) < iv.hi)) return false;
  return E.to_camera(g.center(i, j, k)).z() < observed_depth - epsilon;
}

// Walks one pixel ray through the grid with 3D DDA and marks qualifying
// Unknown voxels Free.
inline void carve_ray(OccupancyGrid& grid, const CameraPose& E, const Vec3& o, const Vec3& d, double observed_depth,
                      double epsilon) {
  const GridGeometry& g = grid.geom;
  const RayInterval box = slab_interval(o, d, g.origin, g.max_corner());
  const double t_start = std::max(box.lo, 0.0);
  if (!(t_start < box.hi)) return;
  // Past this depth no voxel center can lie in front of the surface.
  const double t_stop = std::min(box.hi, observed_depth + g.pitch);
  if (t_start >= t_stop) return;

  const Vec3 entry = o + t_start * d;
  Index3 v;
  int step[3];
  double t_next[3];
  for (int a = 0; a < 3; ++a) {
    v[a] = std::clamp(static_cast<int>(std::floor((entry[a] - g.origin[a]) / g.pitch)), 0, g.S - 1);
    step[a] = d[a] > 0 ? 1 : (d[a] < 0 ? -1 : 0);
  }
  auto plane_t = [&](int a) {
    if (step[a] == 0) return std::numeric_limits<double>::infinity();
    const int plane = step[a] > 0 ? v[a] + 1 : v[a];
    return (g.origin[a] + plane * g.pitch - o[a]) / d[a];
  };
  for (int a = 0; a < 3; ++a) t_next[a] = plane_t(a);

  while (true) {
    VoxelState& s = grid.at(v[0], v[1], v[2]);
    if (s == VoxelState::kUnknown && carves(g, E, o, d, observed_depth, epsilon, v[0], v[1], v[2]))
      s = VoxelState::kFree;
    int a = 0;
    if (t_next[1] < t_next[a]) a = 1;
    if (t_next[2] < t_next[a]) a = 2;
    if (!(t_next[a] < t_stop)) break;
    v[a] += step[a];
    if (v[a] < 0 || v[a] >= g.S) break;
    t_next[a] = plane_t(a);
  }
}

// Marks Unknown voxels Free when a valid pixel's ray passes through them in
// front of the observed surface. Observed voxels are never demoted.
inline OccupancyGrid carve_free_space(const OccupancyGrid& grid, const ViewSet& views, std::span<const DepthMap> depths,
                                      double epsilon) {
  if (depths.size() != views.size()) throw Error("carve_free_space: one depth map per view required");
  if (!(epsilon >= 0.0)) throw Error("carve_free_space: epsilon must be non-negative");
  OccupancyGrid out = grid;
  for (std::size_t k = 0; k < views.size(); ++k) {
    const auto& K = views[k].K;
    const auto& E = views[k].E;
    const DepthMap& d = depths[k];
    const Vec3 o = E.center();
    for (int y = 0; y < d.height; ++y)
      for (int x = 0; x < d.width; ++x)
        if (d.valid(x, y)) carve_ray(out, E, o, pixel_ray(x, y, K, E), d.at(x, y), epsilon);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Patch layout

struct PatchCrop {
  std::size_t view_index = 0;
  PixelRect rect;
};

struct Patch {
  Index3 min_corner{};
  std::vector<VoxelState> states;  // P^3, x-fastest
  std::vector<PatchCrop> crops;
};

struct PatchSet {
  int patch_size = 0;
  int overlap = 0;
  std::vector<Patch> patches;

  int stride() const { return patch_size - overlap; }
};

// Corner positions along one axis: every multiple of the stride that fits,
// plus a final corner clamped to S - P when the multiples leave a gap.
inline std::vector<int> patch_corners(int S, int P, int overlap) {
  if (P < 1 || P > S) throw Error("patch size must satisfy 1 <= P <= S");
  if (overlap < 0 || overlap >= P) throw Error("patch overlap must satisfy 0 <= overlap < P");
  const int stride = P - overlap;
  std::vector<int> corners;
  for (int c = 0; c + P <= S; c += stride) corners.push_back(c);
  if (corners.back() + P < S) corners.push_back(S - P);
  return corners;
}

// Pixel bounding box of a world-space box in one view. Empty when the box is
// entirely behind the camera or projects outside the frame; the full frame
// when it straddles the camera plane.
inline PixelRect project_box(const Vec3& lo, const Vec3& hi, const CameraIntrinsics& K, const CameraPose& E) {
  double u0 = INFINITY, v0 = INFINITY, u1 = -INFINITY, v1 = -INFINITY;
  int behind = 0;
  for (int c = 0; c < 8; ++c) {
    const Vec3 corner((c & 1) ? hi.x() : lo.x(), (c & 2) ? hi.y() : lo.y(), (c & 4) ? hi.z() : lo.z());
    const auto p = project(corner, K, E);
    if (!p) {
      ++behind;
      continue;
    }
    u0 = std::min(u0, p->pixel.x());
    v0 = std::min(v0, p->pixel.y());
    u1 = std::max(u1, p->pixel.x());
    v1 = std::max(v1, p->pixel.y());
  }
  if (behind == 8) return {};
  if (behind > 0) return {0, 0, K.width - 1, K.height - 1};
  PixelRect r;
  r.x0 = static_cast<int>(std::max(0.0, std::floor(u0)));
  r.y0 = static_cast<int>(std::max(0.0, std::floor(v0)));
  r.x1 = static_cast<int>(std::min<double>(K.width - 1, std::ceil(u1)));
  r.y1 = static_cast<int>(std::min<double>(K.height - 1, std::ceil(v1)));
  if (u1 < 0 || v1 < 0 || u0 > K.width - 1 || v0 > K.height - 1) return {};
  return r;
}

inline PatchSet decompose_patches(const OccupancyGrid& grid, int P, int overlap, const ViewSet& views) {
  const int S = grid.S();
  const auto corners = patch_corners(S, P, overlap);
  const GridGeometry& g = grid.geom;
  PatchSet set;
  set.patch_size = P;
  set.overlap = overlap;
  for (int ck : corners)
    for (int cj : corners)
      for (int ci : corners) {
        Patch patch;
        patch.min_corner = {ci, cj, ck};
        patch.states.resize(static_cast<std::size_t>(P) * P * P);
        std::size_t n = 0;
        for (int k = 0; k < P; ++k)
          for (int j = 0; j < P; ++j)
            for (int i = 0; i < P; ++i) patch.states[n++] = grid.at(ci + i, cj + j, ck + k);
        const Vec3 lo = g.origin + g.pitch * Vec3(ci, cj, ck);
        const Vec3 hi = lo + Vec3::Constant(g.pitch * P);
        for (std::size_t v = 0; v < views.size(); ++v) {
          const PixelRect r = project_box(lo, hi, views[v].K, views[v].E);
          if (!r.empty()) patch.crops.push_back({v, r});
        }
        set.patches.push_back(std::move(patch));
      }
  return set;
}

// ---------------------------------------------------------------------------
// EVOG: "EVOG", u32 S, f64 origin[3], f64 pitch, S^3 state bytes x-fastest.

inline io::Bytes encode_evog(const OccupancyGrid& grid) {
  io::ByteWriter w;
  w.put_string("EVOG");
  w.put<std::uint32_t>(static_cast<std::uint32_t>(grid.geom.S));
  for (int a = 0; a < 3; ++a) w.put<double>(grid.geom.origin[a]);
  w.put<double>(grid.geom.pitch);
  w.put_bytes(grid.states.data(), grid.states.size());
  return w.take();
}

inline OccupancyGrid decode_evog(const io::Bytes& bytes) {
  io::ByteReader r(bytes);
  if (r.get_string(4) != "EVOG") throw Error("EVOG: bad magic");
  GridGeometry g;
  g.S = static_cast<int>(r.get<std::uint32_t>());
  for (int a = 0; a < 3; ++a) g.origin[a] = r.get<double>();
  g.pitch = r.get<double>();
  g.validate();
  OccupancyGrid grid(g);
  if (r.remaining() != grid.states.size()) throw Error("EVOG: state payload has wrong size");
  r.get_bytes(grid.states.data(), grid.states.size());
  for (auto s : grid.states)
    if (static_cast<std::uint8_t>(s) > 2) throw Error("EVOG: invalid state byte");
  return grid;
}

}  // namespace evoscene
