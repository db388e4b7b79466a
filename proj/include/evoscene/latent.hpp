// Copyright 2026 The EvoScene Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "evoscene/errors.hpp"
#include "evoscene/geometry.hpp"
#include "evoscene/image.hpp"
#include "evoscene/io.hpp"
#include "evoscene/occupancy.hpp"
#include "json.hpp"

namespace evoscene {

struct VoxelAttributes {
  Color color = Color::Constant(0.5);
  double opacity = 1.0;  // (0, 1]
  double scale = 0.0;    // splat radius parameter, meters

  bool operator==(const VoxelAttributes&) const = default;
};

// Completed binary occupancy on a grid.
struct BinaryField {
  GridGeometry geom;
  std::vector<std::uint8_t> occupied;  // S^3, x-fastest

  BinaryField() = default;
  explicit BinaryField(const GridGeometry& g) : geom(g), occupied(g.voxel_count(), 0) {}

  std::size_t count() const { return static_cast<std::size_t>(std::count(occupied.begin(), occupied.end(), 1)); }
  bool at(int i, int j, int k) const { return geom.contains(i, j, k) && occupied[geom.index(i, j, k)] != 0; }

  static BinaryField observed_of(const OccupancyGrid& grid) {
    BinaryField f(grid.geom);
    for (std::size_t i = 0; i < grid.states.size(); ++i) f.occupied[i] = grid.states[i] == VoxelState::kObserved;
    return f;
  }

  bool operator==(const BinaryField&) const = default;
};

// Explicit per-voxel splat attributes for every occupied voxel. Voxel
// indices are linear grid indices in ascending order.
struct SceneLatent {
  GridGeometry geom;
  std::vector<std::uint32_t> voxels;
  std::vector<VoxelAttributes> attrs;

  std::size_t size() const { return voxels.size(); }
  bool empty() const { return voxels.empty(); }
  Vec3 center(std::size_t n) const { return geom.center(voxels[n]); }

  std::optional<std::size_t> find(std::uint32_t voxel) const {
    const auto it = std::lower_bound(voxels.begin(), voxels.end(), voxel);
    if (it == voxels.end() || *it != voxel) return std::nullopt;
    return static_cast<std::size_t>(it - voxels.begin());
  }

  BinaryField occupancy() const {
    BinaryField f(geom);
    for (auto v : voxels) f.occupied[v] = 1;
    return f;
  }

  void validate() const {
    if (voxels.size() != attrs.size()) throw Error("latent: attribute count mismatch");
    if (!std::is_sorted(voxels.begin(), voxels.end()) ||
        std::adjacent_find(voxels.begin(), voxels.end()) != voxels.end())
      throw Error("latent: voxel indices must be strictly ascending");
    for (std::size_t n = 0; n < size(); ++n) {
      if (voxels[n] >= geom.voxel_count()) throw Error("latent: voxel index out of range");
      const auto& a = attrs[n];
      if (!a.color.allFinite() || (a.color.array() < 0.0).any() || (a.color.array() > 1.0).any())
        throw Error("latent: color outside [0,1]");
      if (!(a.opacity > 0.0 && a.opacity <= 1.0)) throw Error("latent: opacity outside (0,1]");
      if (!(std::isfinite(a.scale) && a.scale > 0.0)) throw Error("latent: scale must be positive");
    }
  }

  // Every voxel is Observed or completed-occupied.
  void validate_against(const BinaryField& completed) const {
    validate();
    for (auto v : voxels)
      if (!completed.occupied[v]) throw Error("latent: voxel " + std::to_string(v) + " is not occupied");
  }

  bool operator==(const SceneLatent&) const = default;
};

// latent.json holds the grid and count; latent.bin holds, per voxel,
// u32 index then f64 r, g, b, opacity, scale.
inline nlohmann::json latent_header(const SceneLatent& l) {
  return {{"format", "evoscene-latent/1"},
          {"S", l.geom.S},
          {"origin", to_json(l.geom.origin)},
          {"pitch", l.geom.pitch},
          {"count", l.size()}};
}

inline io::Bytes encode_latent_bin(const SceneLatent& l) {
  io::ByteWriter w;
  for (std::size_t n = 0; n < l.size(); ++n) {
    w.put<std::uint32_t>(l.voxels[n]);
    for (int c = 0; c < 3; ++c) w.put<double>(l.attrs[n].color[c]);
    w.put<double>(l.attrs[n].opacity);
    w.put<double>(l.attrs[n].scale);
  }
  return w.take();
}

inline SceneLatent decode_latent(const nlohmann::json& header, const io::Bytes& bin) {
  if (header.value("format", "") != "evoscene-latent/1") throw Error("latent: unknown format");
  SceneLatent l;
  l.geom.S = header.at("S").get<int>();
  l.geom.origin = vec3_from_json(header.at("origin"));
  l.geom.pitch = header.at("pitch").get<double>();
  l.geom.validate();
  const auto count = header.at("count").get<std::size_t>();
  io::ByteReader r(bin);
  l.voxels.resize(count);
  l.attrs.resize(count);
  for (std::size_t n = 0; n < count; ++n) {
    l.voxels[n] = r.get<std::uint32_t>();
    for (int c = 0; c < 3; ++c) l.attrs[n].color[c] = r.get<double>();
    l.attrs[n].opacity = r.get<double>();
    l.attrs[n].scale = r.get<double>();
  }
  if (r.remaining() != 0) throw Error("latent: trailing bytes");
  l.validate();
  return l;
}

inline void write_latent(const std::filesystem::path& dir, const SceneLatent& l) {
  io::write_text(dir / "latent.json", latent_header(l).dump(2));
  io::write_file(dir / "latent.bin", encode_latent_bin(l));
}

inline SceneLatent read_latent(const std::filesystem::path& dir) {
  return decode_latent(nlohmann::json::parse(io::read_text(dir / "latent.json")), io::read_file(dir / "latent.bin"));
}

}  // namespace evoscene
