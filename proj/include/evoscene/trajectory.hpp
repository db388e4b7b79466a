// Copyright 2026 The EvoScene Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Orbital camera paths around the scene and the alternating azimuth
// schedule across iterations.

#pragma once

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include "evoscene/errors.hpp"
#include "evoscene/geometry.hpp"
#include "evoscene/interfaces.hpp"
#include "evoscene/log.hpp"
#include "json.hpp"

namespace evoscene {

struct OrbitSpec {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;  // <= 0 keeps the seed camera's distance to center
  CameraPose base;      // seed view
  double a0 = 0.0, a1 = 45.0;  // degrees
  int N = 121;

  void validate() const {
    if (N < 2) throw Error("orbit: N must be >= 2");
    if (!center.allFinite()) throw Error("orbit: non-finite center");
    base.validate(1e-6);
  }
};

// Rotation by `deg` about the world +Y axis (right-handed).
inline Mat3 yaw_rotation(double deg) {
  return Eigen::AngleAxisd(deg * std::numbers::pi / 180.0, Vec3::UnitY()).toRotationMatrix();
}

// N poses with azimuths linspace(a0, a1). Each pose is the seed camera
// carried around the vertical axis through `center`, so elevation, distance
// and the framing of the center are those of the seed view, and azimuth 0
// reproduces the seed pose. When `radius` is set the camera is first slid
// along its line to the center to sit at that distance.
inline std::vector<TrajectoryFrame> orbital_trajectory(const OrbitSpec& spec) {
  spec.validate();
  CameraPose base = spec.base;
  if (spec.radius > 0.0) {
    const Vec3 offset = base.center() - spec.center;
    const double dist = offset.norm();
    if (dist <= 0.0) throw Error("orbit: seed camera sits at the orbit center");
    if (std::abs(dist - spec.radius) > 1e-12 * std::max(1.0, dist)) {
      const Vec3 eye = spec.center + offset * (spec.radius / dist);
      base.translation = -base.rotation * eye;
    }
  }
  std::vector<TrajectoryFrame> out;
  out.reserve(spec.N);
  for (int k = 0; k < spec.N; ++k) {
    const double az = spec.a0 + (spec.a1 - spec.a0) * k / (spec.N - 1);
    const Mat3 R = yaw_rotation(az);
    TrajectoryFrame f;
    f.azimuth_deg = az;
    f.pose = az == 0.0 ? base : base.after_world_transform(R, spec.center - R * spec.center);
    out.push_back(f);
  }
  return out;
}

struct AzimuthRange {
  double a0 = 0.0, a1 = 0.0;
  bool operator==(const AzimuthRange&) const = default;
};

// Range for iteration t >= 1: the configured table when it has an entry,
// otherwise odd t -> [0, +A] and even t -> [0, -A].
inline AzimuthRange iteration_schedule(int t, double amplitude = 45.0, const std::vector<AzimuthRange>& table = {}) {
  if (t < 1) throw Error("iteration_schedule: t must be >= 1");
  if (!table.empty()) {
    if (t <= static_cast<int>(table.size())) return table[t - 1];
    log_info("trajectory.schedule_table_exhausted", {{"t", t}, {"table_size", table.size()}});
  } else if (t > 2) {
    log_info("trajectory.schedule_table_exhausted", {{"t", t}, {"table_size", 2}});
  }
  return t % 2 == 1 ? AzimuthRange{0.0, amplitude} : AzimuthRange{0.0, -amplitude};
}

inline nlohmann::json trajectory_to_json(const std::vector<TrajectoryFrame>& frames) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& f : frames) {
    nlohmann::json rot = nlohmann::json::array();
    for (int r = 0; r < 3; ++r) rot.push_back({f.pose.rotation(r, 0), f.pose.rotation(r, 1), f.pose.rotation(r, 2)});
    // "translation" makes the pose exact; "position" is the camera center.
    out.push_back({{"azimuth_deg", f.azimuth_deg},
                   {"position", to_json(f.pose.center())},
                   {"rotation", rot},
                   {"translation", to_json(f.pose.translation)}});
  }
  return out;
}

inline std::vector<TrajectoryFrame> trajectory_from_json(const nlohmann::json& j) {
  std::vector<TrajectoryFrame> out;
  for (const auto& e : j) {
    TrajectoryFrame f;
    f.azimuth_deg = e.at("azimuth_deg").get<double>();
    const auto& rows = e.at("rotation");
    if (!rows.is_array() || rows.size() != 3) throw Error("trajectory: rotation must be 3x3");
    for (int r = 0; r < 3; ++r) f.pose.rotation.row(r) = vec3_from_json(rows[r]).transpose();
    f.pose.translation = e.contains("translation") ? vec3_from_json(e.at("translation"))
                                                   : Vec3(-f.pose.rotation * vec3_from_json(e.at("position")));
    f.pose.validate(1e-6);
    out.push_back(f);
  }
  return out;
}

}  // namespace evoscene
