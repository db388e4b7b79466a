// Copyright 2026 The EvoScene Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Pinhole cameras, depth maps and the depth-gradient confidence used to
// weight back-projected points.
//
// Conventions: poses map world to camera (x_cam = R * x_world + t), the
// camera looks down +Z with +X right and +Y down, and pixel (u, v) is the
// ray through integer coordinates (u, v) with no half-pixel offset.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "evoscene/errors.hpp"
#include "evoscene/io.hpp"
#include "json.hpp"

namespace evoscene {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct CameraIntrinsics {
  double fx = 1.0, fy = 1.0;
  double cx = 0.0, cy = 0.0;
  int width = 1, height = 1;

  // Symmetric pinhole with the given horizontal field of view.
  static CameraIntrinsics from_fov(int width, int height, double hfov_deg) {
    const double f = 0.5 * width / std::tan(0.5 * hfov_deg * std::numbers::pi / 180.0);
    return {f, f, 0.5 * (width - 1), 0.5 * (height - 1), width, height};
  }

  // Same field of view at a different resolution.
  CameraIntrinsics scaled_to(int w, int h) const {
    const double sx = static_cast<double>(w) / width;
    const double sy = static_cast<double>(h) / height;
    return {fx * sx, fy * sy, (cx + 0.5) * sx - 0.5, (cy + 0.5) * sy - 0.5, w, h};
  }

  void validate() const {
    if (!(fx > 0 && fy > 0)) throw Error("intrinsics: focal lengths must be positive");
    if (width < 1 || height < 1) throw Error("intrinsics: image size must be positive");
    if (cx < 0 || cx > width || cy < 0 || cy > height) throw Error("intrinsics: principal point outside image");
  }

  bool operator==(const CameraIntrinsics&) const = default;
};

struct CameraPose {
  Mat3 rotation = Mat3::Identity();  // world -> camera
  Vec3 translation = Vec3::Zero();   // world -> camera

  Vec3 to_camera(const Vec3& p) const { return rotation * p + translation; }
  Vec3 to_world(const Vec3& p) const { return rotation.transpose() * (p - translation); }
  Vec3 center() const { return -rotation.transpose() * translation; }
  Vec3 forward() const { return rotation.row(2).transpose(); }

  // Pose that sees the world after it has been moved by x -> A x + b.
  CameraPose after_world_transform(const Mat3& A, const Vec3& b) const {
    CameraPose out;
    out.rotation = rotation * A.transpose();
    out.translation = translation - out.rotation * b;
    return out;
  }

  static CameraPose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitY()) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 right = forward.cross(up);
    if (right.norm() < 1e-12) right = forward.cross(Vec3::UnitZ());
    right.normalize();
    const Vec3 down = forward.cross(right);
    CameraPose pose;
    pose.rotation.row(0) = right.transpose();
    pose.rotation.row(1) = down.transpose();
    pose.rotation.row(2) = forward.transpose();
    pose.translation = -pose.rotation * eye;
    return pose;
  }

  double orthonormality_error() const {
    return std::max((rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff(),
                    std::abs(rotation.determinant() - 1.0));
  }

  void validate(double tol = 1e-9) const {
    if (!rotation.allFinite() || !translation.allFinite()) throw Error("pose: non-finite entries");
    if (orthonormality_error() > tol) throw Error("pose: rotation is not a proper orthonormal matrix");
  }

  bool operator==(const CameraPose&) const = default;
};

struct Projection {
  Vec2 pixel;
  double depth = 0.0;
};

// Pinhole projection. Returns nullopt when the point is at or behind the
// camera plane (Z <= 0).
inline std::optional<Projection> project(const Vec3& world, const CameraIntrinsics& K, const CameraPose& E) {
  const Vec3 p = E.to_camera(world);
  if (!(p.z() > 0.0)) return std::nullopt;
  return Projection{{K.fx * p.x() / p.z() + K.cx, K.fy * p.y() / p.z() + K.cy}, p.z()};
}

// World-space direction of the ray through pixel (u, v), scaled so that its
// camera-frame Z component is exactly 1 (the ray parameter equals depth).
inline Vec3 pixel_ray(double u, double v, const CameraIntrinsics& K, const CameraPose& E) {
  return E.rotation.transpose() * Vec3((u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0);
}

inline Vec3 unproject(double u, double v, double depth, const CameraIntrinsics& K, const CameraPose& E) {
  return E.to_world(Vec3((u - K.cx) / K.fx * depth, (v - K.cy) / K.fy * depth, depth));
}

struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;       // metric depth along camera +Z
  std::vector<std::uint8_t> mask;   // 1 = valid

  DepthMap() = default;
  DepthMap(int w, int h)
      : width(w), height(h), values(static_cast<std::size_t>(w) * h, 0.0), mask(static_cast<std::size_t>(w) * h, 0) {}

  // Builds a map where non-finite or non-positive entries are invalid.
  static DepthMap from_values(int w, int h, std::vector<double> v) {
    if (v.size() != static_cast<std::size_t>(w) * h) throw Error("depth map: value count does not match size");
    DepthMap d;
    d.width = w;
    d.height = h;
    d.values = std::move(v);
    d.mask.resize(d.values.size());
    for (std::size_t i = 0; i < d.values.size(); ++i) {
      d.mask[i] = std::isfinite(d.values[i]) && d.values[i] > 0.0;
      if (!d.mask[i]) d.values[i] = std::numeric_limits<double>::quiet_NaN();
    }
    return d;
  }

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  bool inside(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  bool valid(int x, int y) const { return inside(x, y) && mask[index(x, y)] != 0; }
  double at(int x, int y) const { return values[index(x, y)]; }

  void set(int x, int y, double depth) {
    const std::size_t i = index(x, y);
    values[i] = depth;
    mask[i] = std::isfinite(depth) && depth > 0.0;
  }
  void invalidate(int x, int y) {
    values[index(x, y)] = std::numeric_limits<double>::quiet_NaN();
    mask[index(x, y)] = 0;
  }

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (auto m : mask) n += m;
    return n;
  }
};

// Inverse depth for view-synthesis conditioning.
struct DisparityMap {
  int width = 0;
  int height = 0;
  std::vector<double> normalized;  // [0,1]; 0 on invalid pixels
  std::vector<double> raw;         // 1/depth; 0 on invalid pixels
};

struct ConfidenceMap {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

struct BackProjectedPoint {
  Vec3 position;
  int u = 0;
  int v = 0;
};

// One world point per valid pixel, in row-major pixel order.
inline std::vector<BackProjectedPoint> back_project(const DepthMap& d, const CameraIntrinsics& K, const CameraPose& E) {
  std::vector<BackProjectedPoint> out;
  out.reserve(d.valid_count());
  for (int v = 0; v < d.height; ++v)
    for (int u = 0; u < d.width; ++u)
      if (d.valid(u, v)) out.push_back({unproject(u, v, d.at(u, v), K, E), u, v});
  return out;
}

// Per-pixel depth-gradient magnitude. Central differences where both
// neighbors are valid, one-sided where only one is, zero where neither is.
inline double depth_gradient_magnitude(const DepthMap& d, int x, int y) {
  auto axis = [&](int dx, int dy) {
    const bool lo = d.valid(x - dx, y - dy);
    const bool hi = d.valid(x + dx, y + dy);
    const double c = d.at(x, y);
    if (lo && hi) return 0.5 * (d.at(x + dx, y + dy) - d.at(x - dx, y - dy));
    if (hi) return d.at(x + dx, y + dy) - c;
    if (lo) return c - d.at(x - dx, y - dy);
    return 0.0;
  };
  const double gx = axis(1, 0);
  const double gy = axis(0, 1);
  return std::sqrt(gx * gx + gy * gy);
}

// conf = exp(-|grad d| / sigma). Invalid pixels get confidence 0.
inline ConfidenceMap depth_confidence(const DepthMap& d, double sigma = 0.5) {
  if (!(sigma > 0.0)) throw Error("depth_confidence: sigma must be positive");
  ConfidenceMap c{d.width, d.height, std::vector<double>(d.values.size(), 0.0)};
  for (int y = 0; y < d.height; ++y)
    for (int x = 0; x < d.width; ++x)
      if (d.valid(x, y)) c.values[d.index(x, y)] = std::exp(-depth_gradient_magnitude(d, x, y) / sigma);
  return c;
}

// ---------------------------------------------------------------------------
// EVDM raw depth format: "EVDM", u32 width, u32 height, then width*height
// float32 depths row-major (NaN = invalid). Disparity frames append a single
// trailing flag byte 0x01 after the samples.

inline io::Bytes encode_evdm(int width, int height, const std::vector<double>& values, bool disparity = false) {
  io::ByteWriter w;
  w.put_string("EVDM");
  w.put<std::uint32_t>(static_cast<std::uint32_t>(width));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(height));
  for (double v : values) w.put<float>(static_cast<float>(v));
  if (disparity) w.put<std::uint8_t>(1);
  return w.take();
}

inline io::Bytes encode_evdm(const DepthMap& d) {
  std::vector<double> v(d.values.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = d.mask[i] ? d.values[i] : std::numeric_limits<double>::quiet_NaN();
  return encode_evdm(d.width, d.height, v);
}

struct EvdmContents {
  int width = 0;
  int height = 0;
  std::vector<double> values;
  bool disparity = false;
};

inline EvdmContents decode_evdm_raw(const io::Bytes& bytes) {
  io::ByteReader r(bytes);
  if (r.get_string(4) != "EVDM") throw Error("EVDM: bad magic");
  EvdmContents c;
  c.width = static_cast<int>(r.get<std::uint32_t>());
  c.height = static_cast<int>(r.get<std::uint32_t>());
  const std::size_t n = static_cast<std::size_t>(c.width) * c.height;
  if (r.remaining() < n * sizeof(float)) throw Error("EVDM: truncated samples");
  c.values.resize(n);
  for (auto& v : c.values) v = r.get<float>();
  if (r.remaining() == 1) c.disparity = r.get<std::uint8_t>() == 1;
  else if (r.remaining() != 0) throw Error("EVDM: trailing bytes");
  return c;
}

inline DepthMap decode_evdm(const io::Bytes& bytes) {
  auto c = decode_evdm_raw(bytes);
  return DepthMap::from_values(c.width, c.height, std::move(c.values));
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json to_json(const CameraIntrinsics& K) {
  return {{"fx", K.fx}, {"fy", K.fy}, {"cx", K.cx}, {"cy", K.cy}, {"width", K.width}, {"height", K.height}};
}

inline CameraIntrinsics intrinsics_from_json(const nlohmann::json& j) {
  CameraIntrinsics K{j.at("fx").get<double>(), j.at("fy").get<double>(), j.at("cx").get<double>(),
                     j.at("cy").get<double>(), j.at("width").get<int>(), j.at("height").get<int>()};
  K.validate();
  return K;
}

inline nlohmann::json to_json(const CameraPose& E) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < 3; ++r) rows.push_back({E.rotation(r, 0), E.rotation(r, 1), E.rotation(r, 2)});
  return {{"rotation", rows}, {"translation", {E.translation.x(), E.translation.y(), E.translation.z()}}};
}

inline Vec3 vec3_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw Error("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline nlohmann::json to_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

inline CameraPose pose_from_json(const nlohmann::json& j) {
  CameraPose E;
  const auto& rows = j.at("rotation");
  if (!rows.is_array() || rows.size() != 3) throw Error("pose: rotation must be 3x3");
  for (int r = 0; r < 3; ++r) E.rotation.row(r) = vec3_from_json(rows[r]).transpose();
  E.translation = vec3_from_json(j.at("translation"));
  E.validate(1e-6);
  return E;
}

}  // namespace evoscene
