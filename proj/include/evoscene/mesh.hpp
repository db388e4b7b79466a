// Copyright 2026 The EvoScene Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "evoscene/errors.hpp"

namespace evoscene {

using RGB8 = std::array<std::uint8_t, 3>;

struct TexturedMesh {
  std::vector<Eigen::Vector3f> vertices;  // world, meters
  std::vector<std::array<std::uint32_t, 3>> triangles;
  std::vector<RGB8> colors;               // per vertex; empty when untextured
  std::vector<Eigen::Vector3f> normals;   // per vertex; optional

  bool empty() const { return triangles.empty(); }

  double triangle_area(std::size_t t) const {
    const auto& tri = triangles[t];
    const Eigen::Vector3d a = vertices[tri[0]].cast<double>();
    const Eigen::Vector3d b = vertices[tri[1]].cast<double>();
    const Eigen::Vector3d c = vertices[tri[2]].cast<double>();
    return 0.5 * (b - a).cross(c - a).norm();
  }

  // Throws with a diagnostic naming the first violated invariant.
  void validate(double min_area = 1e-12) const {
    for (const auto& v : vertices)
      if (!v.allFinite()) throw Error("mesh: non-finite vertex");
    if (!colors.empty() && colors.size() != vertices.size()) throw Error("mesh: color count != vertex count");
    if (!normals.empty() && normals.size() != vertices.size()) throw Error("mesh: normal count != vertex count");
    for (std::size_t t = 0; t < triangles.size(); ++t) {
      for (auto i : triangles[t])
        if (i >= vertices.size()) throw Error("mesh: triangle " + std::to_string(t) + " index out of range");
      if (triangle_area(t) <= min_area) throw Error("mesh: triangle " + std::to_string(t) + " has zero area");
    }
  }

  // Undirected edge -> number of incident triangles.
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> edge_use() const {
    std::map<std::pair<std::uint32_t, std::uint32_t>, int> use;
    for (const auto& tri : triangles)
      for (int e = 0; e < 3; ++e) {
        auto a = tri[e], b = tri[(e + 1) % 3];
        if (a > b) std::swap(a, b);
        ++use[{a, b}];
      }
    return use;
  }

  // Every edge borders exactly two triangles.
  bool watertight() const {
    if (triangles.empty()) return false;
    for (const auto& [edge, n] : edge_use())
      if (n != 2) return false;
    return true;
  }

  // Every directed edge is matched by its reverse exactly once.
  bool consistently_oriented() const {
    std::map<std::pair<std::uint32_t, std::uint32_t>, int> directed;
    for (const auto& tri : triangles)
      for (int e = 0; e < 3; ++e) ++directed[{tri[e], tri[(e + 1) % 3]}];
    for (const auto& [edge, n] : directed) {
      if (n != 1) return false;
      const auto it = directed.find({edge.second, edge.first});
      if (it == directed.end() || it->second != 1) return false;
    }
    return true;
  }

  long euler_characteristic() const {
    return static_cast<long>(vertices.size()) - static_cast<long>(edge_use().size()) +
           static_cast<long>(triangles.size());
  }

  // Positive for closed meshes whose normals face outward.
  double signed_volume() const {
    double vol = 0.0;
    for (const auto& tri : triangles) {
      const Eigen::Vector3d a = vertices[tri[0]].cast<double>();
      const Eigen::Vector3d b = vertices[tri[1]].cast<double>();
      const Eigen::Vector3d c = vertices[tri[2]].cast<double>();
      vol += a.dot(b.cross(c)) / 6.0;
    }
    return vol;
  }

  // Area-weighted vertex normals.
  void compute_normals() {
    std::vector<Eigen::Vector3d> acc(vertices.size(), Eigen::Vector3d::Zero());
    for (const auto& tri : triangles) {
      const Eigen::Vector3d a = vertices[tri[0]].cast<double>();
      const Eigen::Vector3d b = vertices[tri[1]].cast<double>();
      const Eigen::Vector3d c = vertices[tri[2]].cast<double>();
      const Eigen::Vector3d n = (b - a).cross(c - a);
      for (auto i : tri) acc[i] += n;
    }
    normals.resize(vertices.size());
    for (std::size_t i = 0; i < acc.size(); ++i) {
      const double len = acc[i].norm();
      normals[i] = len > 0 ? Eigen::Vector3f((acc[i] / len).cast<float>()) : Eigen::Vector3f::UnitY();
    }
  }

  bool operator==(const TexturedMesh&) const = default;
};

}  // namespace evoscene
