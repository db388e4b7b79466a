// Copyright 2026 The EvoScene Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Analytic test scenes built from boxes, spheres and finite planes: exact
// ray-cast color and depth, reference surface samples, and point-set
// distance metrics.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "evoscene/errors.hpp"
#include "evoscene/geometry.hpp"
#include "evoscene/image.hpp"
#include "evoscene/io.hpp"
#include "evoscene/mesh.hpp"
#include "json.hpp"

namespace evoscene {

struct Texture {
  enum class Kind { kSolid, kChecker, kGradient };
  Kind kind = Kind::kSolid;
  Color a = Color::Constant(0.8);  // solid color, checker even cells, gradient start
  Color b = Color::Constant(0.2);  // checker odd cells, gradient end
  double cell = 0.25;              // checker cell size, meters
  Vec3 axis = Vec3::UnitY();       // gradient direction
  double lo = 0.0, hi = 1.0;       // gradient extent along axis

  // `q` is the primitive-local texture coordinate (see Primitive::hit).
  Color eval(const Vec3& q, const Vec3& world) const {
    switch (kind) {
      case Kind::kSolid:
        return a;
      case Kind::kChecker: {
        const long s = static_cast<long>(std::floor(q.x() / cell)) + static_cast<long>(std::floor(q.y() / cell)) +
                       static_cast<long>(std::floor(q.z() / cell));
        return (s & 1) ? b : a;
      }
      case Kind::kGradient: {
        const double t = std::clamp((world.dot(axis) - lo) / (hi - lo), 0.0, 1.0);
        return (1 - t) * a + t * b;
      }
    }
    return a;
  }
};

struct Hit {
  double t = std::numeric_limits<double>::infinity();
  Vec3 normal = Vec3::Zero();  // unit, facing the ray origin
  Color color = Color::Zero();
  int primitive = -1;
};

struct Primitive {
  enum class Kind { kBox, kSphere, kPlane };
  Kind kind = Kind::kBox;
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Ones();      // box extents; plane uses x, y as width, height
  double radius = 0.5;           // sphere
  double yaw_deg = 0.0;          // box rotation about +Y
  Vec3 normal = Vec3::UnitZ();   // plane normal
  Vec3 up = Vec3::UnitY();       // plane in-plane "height" direction hint
  std::vector<std::string> open_faces;  // box faces left out: "+x", "-x", ...
  Texture texture;

  // Orthonormal frame: box axes after yaw, or plane (u, v, n).
  Mat3 frame() const {
    if (kind == Kind::kPlane) {
      const Vec3 n = normal.normalized();
      Vec3 v = up - up.dot(n) * n;
      if (v.norm() < 1e-9) v = n.unitOrthogonal();
      v.normalize();
      const Vec3 u = v.cross(n);
      Mat3 F;
      F.col(0) = u;
      F.col(1) = v;
      F.col(2) = n;
      return F;
    }
    return Eigen::AngleAxisd(yaw_deg * std::numbers::pi / 180.0, Vec3::UnitY()).toRotationMatrix();
  }

  bool face_open(int axis, int sign) const {
    const std::string name = std::string(sign > 0 ? "+" : "-") + "xyz"[axis];
    return std::find(open_faces.begin(), open_faces.end(), name) != open_faces.end();
  }

  double area() const {
    switch (kind) {
      case Kind::kSphere:
        return 4.0 * std::numbers::pi * radius * radius;
      case Kind::kPlane:
        return size.x() * size.y();
      case Kind::kBox: {
        double a = 0.0;
        for (int ax = 0; ax < 3; ++ax)
          for (int s : {-1, 1})
            if (!face_open(ax, s)) a += size[(ax + 1) % 3] * size[(ax + 2) % 3];
        return a;
      }
    }
    return 0.0;
  }

  // Nearest intersection with t > t_min, or nullopt. Faces are two-sided.
  std::optional<Hit> hit(const Vec3& o, const Vec3& d, double t_min = 1e-9) const {
    if (kind == Kind::kSphere) {
      const Vec3 oc = o - center;
      const double a = d.squaredNorm(), b = oc.dot(d), c = oc.squaredNorm() - radius * radius;
      const double disc = b * b - a * c;
      if (disc < 0) return std::nullopt;
      const double sq = std::sqrt(disc);
      for (double t : {(-b - sq) / a, (-b + sq) / a}) {
        if (t <= t_min) continue;
        const Vec3 p = o + t * d;
        Hit h;
        h.t = t;
        h.normal = (p - center) / radius;
        if (h.normal.dot(d) > 0) h.normal = -h.normal;
        h.color = texture.eval(p - center, p);
        return h;
      }
      return std::nullopt;
    }
    const Mat3 F = frame();
    const Vec3 lo_ = F.transpose() * (o - center);
    const Vec3 ld = F.transpose() * d;
    std::optional<Hit> best;
    auto try_face = [&](int axis, double offset, const Vec2& half) {
      if (ld[axis] == 0.0) return;
      const double t = (offset - lo_[axis]) / ld[axis];
      if (t <= t_min || (best && t >= best->t)) return;
      const Vec3 lp = lo_ + t * ld;
      const int u = (axis + 1) % 3, v = (axis + 2) % 3;
      if (std::abs(lp[u]) > half.x() || std::abs(lp[v]) > half.y()) return;
      Hit h;
      h.t = t;
      Vec3 ln = Vec3::Zero();
      ln[axis] = 1.0;
      h.normal = F * ln;
      if (h.normal.dot(d) > 0) h.normal = -h.normal;
      Vec3 q = lp;
      q[axis] = 0.0;  // texture lives in the face's tangent coordinates
      h.color = texture.eval(q, o + t * d);
      best = h;
    };
    if (kind == Kind::kPlane) {
      try_face(2, 0.0, {0.5 * size.x(), 0.5 * size.y()});
      return best;
    }
    for (int ax = 0; ax < 3; ++ax)
      for (int s : {-1, 1}) {
        if (face_open(ax, s)) continue;
        try_face(ax, 0.5 * s * size[ax], {0.5 * size[(ax + 1) % 3], 0.5 * size[(ax + 2) % 3]});
      }
    return best;
  }

  // Closed-solid membership with tolerance; planes count their own surface.
  bool contains_or_touches(const Vec3& p, double tol) const {
    switch (kind) {
      case Kind::kSphere:
        return (p - center).norm() <= radius + tol;
      case Kind::kPlane: {
        const Vec3 l = frame().transpose() * (p - center);
        return std::abs(l.z()) <= tol && std::abs(l.x()) <= 0.5 * size.x() + tol &&
               std::abs(l.y()) <= 0.5 * size.y() + tol;
      }
      case Kind::kBox: {
        const Vec3 l = frame().transpose() * (p - center);
        return (l.cwiseAbs() - 0.5 * size).maxCoeff() <= tol;
      }
    }
    return false;
  }

  // Unsigned distance from p to the primitive's (rendered) surface.
  double surface_distance(const Vec3& p) const {
    if (kind == Kind::kSphere) return std::abs((p - center).norm() - radius);
    const Mat3 F = frame();
    const Vec3 l = F.transpose() * (p - center);
    auto rect_dist = [&](int axis, double offset, const Vec2& half) {
      const int u = (axis + 1) % 3, v = (axis + 2) % 3;
      const double du = std::max(std::abs(l[u]) - half.x(), 0.0);
      const double dv = std::max(std::abs(l[v]) - half.y(), 0.0);
      const double dn = l[axis] - offset;
      return std::sqrt(du * du + dv * dv + dn * dn);
    };
    if (kind == Kind::kPlane) return rect_dist(2, 0.0, {0.5 * size.x(), 0.5 * size.y()});
    double best = std::numeric_limits<double>::infinity();
    for (int ax = 0; ax < 3; ++ax)
      for (int s : {-1, 1})
        if (!face_open(ax, s))
          best = std::min(best, rect_dist(ax, 0.5 * s * size[ax], {0.5 * size[(ax + 1) % 3], 0.5 * size[(ax + 2) % 3]}));
    return best;
  }

  // Uniform sample on the rendered surface from two uniforms and a face pick.
  Vec3 sample(std::mt19937_64& rng) const {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    if (kind == Kind::kSphere) {
      const double z = 2.0 * U(rng) - 1.0, phi = 2.0 * std::numbers::pi * U(rng);
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      return center + radius * Vec3(r * std::cos(phi), r * std::sin(phi), z);
    }
    const Mat3 F = frame();
    if (kind == Kind::kPlane)
      return center + F * Vec3((U(rng) - 0.5) * size.x(), (U(rng) - 0.5) * size.y(), 0.0);
    double pick = U(rng) * area();
    for (int ax = 0; ax < 3; ++ax)
      for (int s : {-1, 1}) {
        if (face_open(ax, s)) continue;
        const int u = (ax + 1) % 3, v = (ax + 2) % 3;
        const double a = size[u] * size[v];
        if (pick > a) {
          pick -= a;
          continue;
        }
        Vec3 l;
        l[ax] = 0.5 * s * size[ax];
        l[u] = (U(rng) - 0.5) * size[u];
        l[v] = (U(rng) - 0.5) * size[v];
        return center + F * l;
      }
    return center + F * Vec3(0.5 * size.x(), 0.0, 0.0);
  }
};

struct SceneSpec {
  std::string name;
  std::vector<Primitive> primitives;
  CameraIntrinsics K;
  CameraPose E;
  std::uint64_t seed = 0;
  Vec3 light = Vec3(0.3, 0.8, -0.5).normalized();  // direction toward the light

  void validate() const {
    if (primitives.empty()) throw Error("scene: at least one primitive is required");
    for (const auto& p : primitives) {
      const double reach = p.kind == Primitive::Kind::kSphere ? p.radius : 0.5 * p.size.norm();
      if (!p.center.allFinite() || p.center.cwiseAbs().maxCoeff() + reach > 5.0)
        throw Error("scene: primitives must lie within the 10 m bounding region");
      if (p.kind == Primitive::Kind::kSphere && !(p.radius > 0)) throw Error("scene: sphere radius must be positive");
      if (p.kind != Primitive::Kind::kSphere && !(p.size.minCoeff() >= 0 && p.size.x() > 0 && p.size.y() > 0))
        throw Error("scene: primitive size must be positive");
    }
    K.validate();
    E.validate(1e-6);
  }

  std::optional<Hit> cast(const Vec3& o, const Vec3& d) const {
    std::optional<Hit> best;
    for (std::size_t i = 0; i < primitives.size(); ++i) {
      auto h = primitives[i].hit(o, d);
      if (h && (!best || h->t < best->t)) {
        best = h;
        best->primitive = static_cast<int>(i);
      }
    }
    return best;
  }

  // View-independent Lambert shading, so every view sees the same colors.
  Color shade(const Hit& h) const {
    const double lambert = std::abs(h.normal.dot(light));
    return (h.color * (0.55 + 0.45 * lambert)).cwiseMin(1.0);
  }
};

struct GroundTruthFrame {
  Image image;
  DepthMap depth;
};

// Exact ray casting; misses are black with invalid depth.
inline GroundTruthFrame render_gt(const SceneSpec& spec, const CameraIntrinsics& K, const CameraPose& E) {
  GroundTruthFrame f{Image(K.width, K.height, 0.0f), DepthMap(K.width, K.height)};
  const Vec3 o = E.center();
  for (int y = 0; y < K.height; ++y)
    for (int x = 0; x < K.width; ++x) {
      const auto h = spec.cast(o, pixel_ray(x, y, K, E));
      if (!h) {
        f.depth.invalidate(x, y);
        continue;
      }
      f.depth.set(x, y, h->t);
      f.image.set_pixel(x, y, spec.shade(*h));
    }
  return f;
}

// Distance from p to the nearest primitive surface.
inline double scene_surface_distance(const SceneSpec& spec, const Vec3& p) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& prim : spec.primitives) d = std::min(d, prim.surface_distance(p));
  return d;
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {
inline Color color_from_json(const nlohmann::json& j) { return vec3_from_json(j); }

inline Texture texture_from_json(const nlohmann::json& j) {
  Texture t;
  const std::string type = j.value("type", "solid");
  if (type == "solid") {
    t.kind = Texture::Kind::kSolid;
    t.a = color_from_json(j.at("color"));
  } else if (type == "checker") {
    t.kind = Texture::Kind::kChecker;
    t.cell = j.value("cell", 0.25);
    t.a = color_from_json(j.at("colors").at(0));
    t.b = color_from_json(j.at("colors").at(1));
    if (!(t.cell > 0)) throw Error("scene: checker cell must be positive");
  } else if (type == "gradient") {
    t.kind = Texture::Kind::kGradient;
    t.a = color_from_json(j.at("from"));
    t.b = color_from_json(j.at("to"));
    if (j.contains("axis")) t.axis = vec3_from_json(j.at("axis")).normalized();
    t.lo = j.at("range").at(0).get<double>();
    t.hi = j.at("range").at(1).get<double>();
    if (!(t.hi > t.lo)) throw Error("scene: gradient range must be increasing");
  } else {
    throw Error("scene: unknown texture type " + type);
  }
  return t;
}
}  // namespace detail

inline SceneSpec scene_from_json(const nlohmann::json& j) {
  SceneSpec s;
  s.name = j.value("name", "");
  s.seed = j.value("seed", std::uint64_t{0});
  for (const auto& pj : j.at("primitives")) {
    Primitive p;
    const std::string kind = pj.at("kind").get<std::string>();
    p.center = vec3_from_json(pj.at("center"));
    if (kind == "box") {
      p.kind = Primitive::Kind::kBox;
      p.size = vec3_from_json(pj.at("size"));
      p.yaw_deg = pj.value("yaw_deg", 0.0);
      p.open_faces = pj.value("open_faces", std::vector<std::string>{});
      for (const auto& f : p.open_faces)
        if (f.size() != 2 || (f[0] != '+' && f[0] != '-') || std::string("xyz").find(f[1]) == std::string::npos)
          throw Error("scene: bad open face name " + f);
    } else if (kind == "sphere") {
      p.kind = Primitive::Kind::kSphere;
      p.radius = pj.at("radius").get<double>();
    } else if (kind == "plane") {
      p.kind = Primitive::Kind::kPlane;
      p.normal = vec3_from_json(pj.at("normal")).normalized();
      const auto sz = pj.at("size");
      p.size = Vec3(sz.at(0).get<double>(), sz.at(1).get<double>(), 0.0);
      if (pj.contains("up")) p.up = vec3_from_json(pj.at("up"));
    } else {
      throw Error("scene: unknown primitive kind " + kind);
    }
    if (pj.contains("texture")) p.texture = detail::texture_from_json(pj.at("texture"));
    s.primitives.push_back(p);
  }
  const auto& cam = j.at("camera");
  const int w = cam.at("width").get<int>(), h = cam.at("height").get<int>();
  if (cam.contains("K")) {
    s.K = intrinsics_from_json(cam.at("K"));
    if (s.K.width != w || s.K.height != h) throw Error("scene: camera K size disagrees with width/height");
  } else {
    s.K = CameraIntrinsics::from_fov(w, h, cam.value("hfov_deg", 60.0));
  }
  if (cam.contains("E")) {
    s.E = pose_from_json(cam.at("E"));
  } else {
    const Vec3 up = cam.contains("up") ? vec3_from_json(cam.at("up")) : Vec3::UnitY();
    s.E = CameraPose::look_at(vec3_from_json(cam.at("eye")), vec3_from_json(cam.at("target")), up);
  }
  if (j.contains("light")) s.light = vec3_from_json(j.at("light")).normalized();
  s.validate();
  return s;
}

inline SceneSpec load_scene(const std::filesystem::path& path) {
  try {
    return scene_from_json(nlohmann::json::parse(io::read_text(path)));
  } catch (const nlohmann::json::exception& e) {
    throw Error("scene " + path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Point sets

// Uniform hash grid for nearest-neighbour queries.
class PointIndex {
 public:
  PointIndex(std::vector<Vec3> points, double cell) : pts_(std::move(points)), cell_(cell) {
    if (!(cell_ > 0)) throw Error("PointIndex: cell must be positive");
    for (std::uint32_t i = 0; i < pts_.size(); ++i) cells_[key(cell_of(pts_[i]))].push_back(i);
  }

  std::size_t size() const { return pts_.size(); }
  const std::vector<Vec3>& points() const { return pts_; }

  // Distance to the nearest stored point; +inf when empty. Stops early once
  // a point within `stop_below` is found.
  double nearest(const Vec3& p, double stop_below = 0.0) const {
    if (pts_.empty()) return std::numeric_limits<double>::infinity();
    const auto c = cell_of(p);
    double best2 = std::numeric_limits<double>::infinity();
    for (int r = 0;; ++r) {
      // Every point in a ring of Chebyshev radius r is at least (r-1)*cell away.
      const double ring_min = std::max(0, r - 1) * cell_;
      if (ring_min * ring_min > best2) break;
      if (r > max_ring_) break;
      for (int dz = -r; dz <= r; ++dz)
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) continue;
            const auto it = cells_.find(key({c[0] + dx, c[1] + dy, c[2] + dz}));
            if (it == cells_.end()) continue;
            for (auto i : it->second) best2 = std::min(best2, (pts_[i] - p).squaredNorm());
          }
      if (best2 <= stop_below * stop_below) break;
    }
    if (!std::isfinite(best2)) {
      for (const auto& q : pts_) best2 = std::min(best2, (q - p).squaredNorm());
    }
    return std::sqrt(best2);
  }

 private:
  using Cell = std::array<std::int64_t, 3>;
  Cell cell_of(const Vec3& p) const {
    return {static_cast<std::int64_t>(std::floor(p.x() / cell_)), static_cast<std::int64_t>(std::floor(p.y() / cell_)),
            static_cast<std::int64_t>(std::floor(p.z() / cell_))};
  }
  static std::uint64_t key(const Cell& c) {
    return (static_cast<std::uint64_t>(c[0] & 0x1FFFFF) << 42) | (static_cast<std::uint64_t>(c[1] & 0x1FFFFF) << 21) |
           static_cast<std::uint64_t>(c[2] & 0x1FFFFF);
  }

  std::vector<Vec3> pts_;
  double cell_;
  int max_ring_ = 64;
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> cells_;
};

// Poisson-disk samples of the scene's visible-able surface by dart throwing:
// area-uniform candidates, rejected when closer than r to an accepted
// sample or lying inside / on another primitive (contact faces can never be
// observed). Deterministic in `seed`.
inline std::vector<Vec3> reference_samples(const SceneSpec& spec, std::size_t count = 10000, std::uint64_t seed = 0) {
  double total = 0.0;
  for (const auto& p : spec.primitives) total += p.area();
  const double r = 0.7 * std::sqrt(total / static_cast<double>(count));
  std::mt19937_64 rng(seed ^ 0x5EEDC0FFEEull);
  std::uniform_real_distribution<double> U(0.0, total);
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> grid;
  auto cell = [&](const Vec3& p) {
    return std::array<std::int64_t, 3>{static_cast<std::int64_t>(std::floor(p.x() / r)),
                                       static_cast<std::int64_t>(std::floor(p.y() / r)),
                                       static_cast<std::int64_t>(std::floor(p.z() / r))};
  };
  auto key = [](std::int64_t x, std::int64_t y, std::int64_t z) {
    return (static_cast<std::uint64_t>(x & 0x1FFFFF) << 42) | (static_cast<std::uint64_t>(y & 0x1FFFFF) << 21) |
           static_cast<std::uint64_t>(z & 0x1FFFFF);
  };
  std::vector<Vec3> out;
  const std::size_t max_tries = count * 40;
  for (std::size_t tries = 0; tries < max_tries && out.size() < count; ++tries) {
    double pick = U(rng);
    std::size_t pi = 0;
    for (; pi + 1 < spec.primitives.size(); ++pi) {
      if (pick <= spec.primitives[pi].area()) break;
      pick -= spec.primitives[pi].area();
    }
    const Vec3 p = spec.primitives[pi].sample(rng);
    bool hidden = false;
    for (std::size_t o = 0; o < spec.primitives.size() && !hidden; ++o)
      if (o != pi && spec.primitives[o].contains_or_touches(p, 1e-6)) hidden = true;
    if (hidden) continue;
    const auto c = cell(p);
    bool close = false;
    for (int dz = -1; dz <= 1 && !close; ++dz)
      for (int dy = -1; dy <= 1 && !close; ++dy)
        for (int dx = -1; dx <= 1 && !close; ++dx) {
          const auto it = grid.find(key(c[0] + dx, c[1] + dy, c[2] + dz));
          if (it == grid.end()) continue;
          for (auto i : it->second)
            if ((out[i] - p).squaredNorm() < r * r) {
              close = true;
              break;
            }
        }
    if (close) continue;
    grid[key(c[0], c[1], c[2])].push_back(static_cast<std::uint32_t>(out.size()));
    out.push_back(p);
  }
  return out;
}

// Area-uniform samples on a triangle mesh, deterministic in `seed`.
inline std::vector<Vec3> sample_mesh(const TexturedMesh& mesh, std::size_t count, std::uint64_t seed = 0) {
  std::vector<double> cdf;
  cdf.reserve(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) cdf.push_back(total += mesh.triangle_area(t));
  std::vector<Vec3> out;
  if (!(total > 0.0)) return out;
  std::mt19937_64 rng(seed ^ 0x3E5A3B1Eull);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    const double pick = U(rng) * total;
    const auto t = static_cast<std::size_t>(std::min<std::ptrdiff_t>(
        std::lower_bound(cdf.begin(), cdf.end(), pick) - cdf.begin(), static_cast<std::ptrdiff_t>(cdf.size()) - 1));
    double a = U(rng), b = U(rng);
    if (a + b > 1.0) {
      a = 1.0 - a;
      b = 1.0 - b;
    }
    const auto& tri = mesh.triangles[t];
    const Vec3 p0 = mesh.vertices[tri[0]].cast<double>();
    const Vec3 p1 = mesh.vertices[tri[1]].cast<double>();
    const Vec3 p2 = mesh.vertices[tri[2]].cast<double>();
    out.push_back(p0 + a * (p1 - p0) + b * (p2 - p0));
  }
  return out;
}

// Fraction of reference samples within `tol` of the reconstruction points.
inline double coverage_fraction(const std::vector<Vec3>& reconstruction, const std::vector<Vec3>& reference,
                                double tol) {
  if (reference.empty()) throw Error("coverage: empty reference");
  if (reconstruction.empty()) return 0.0;
  const PointIndex index(reconstruction, std::max(tol, 1e-6));
  std::size_t hit = 0;
  for (const auto& p : reference)
    if (index.nearest(p, tol) <= tol) ++hit;
  return static_cast<double>(hit) / static_cast<double>(reference.size());
}

inline double mean_nearest(const std::vector<Vec3>& from, const PointIndex& to) {
  double acc = 0.0;
  for (const auto& p : from) acc += to.nearest(p);
  return from.empty() ? 0.0 : acc / static_cast<double>(from.size());
}

// Symmetric chamfer: average of the two directed mean nearest-neighbour
// distances.
inline double chamfer_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b, double cell_hint = 0.0) {
  if (a.empty() || b.empty()) return std::numeric_limits<double>::infinity();
  if (!(cell_hint > 0)) {
    Eigen::AlignedBox3d box;
    for (const auto& p : b) box.extend(p);
    cell_hint = std::max(box.diagonal().norm() / 64.0, 1e-6);
  }
  const PointIndex ia(a, cell_hint), ib(b, cell_hint);
  return 0.5 * (mean_nearest(a, ib) + mean_nearest(b, ia));
}

}  // namespace evoscene
