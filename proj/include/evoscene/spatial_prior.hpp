// Copyright 2026 The EvoScene Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// The accumulating point-cloud prior: back-projected depth with per-point
// confidence, cross-view depth voting, and confidence-keyed spatial binning.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "evoscene/errors.hpp"
#include "evoscene/geometry.hpp"
#include "evoscene/image.hpp"
#include "evoscene/interfaces.hpp"
#include "evoscene/io.hpp"
#include "evoscene/views.hpp"

namespace evoscene {

// Storage precision matches the PLY layout so checkpoints are lossless.
struct PriorPoint {
  Eigen::Vector3f position = Eigen::Vector3f::Zero();
  std::array<std::uint8_t, 3> color{};
  float confidence = 1.0f;
  std::uint16_t support = 1;
  std::uint32_t source_view = 0;

  Vec3 world() const { return position.cast<double>(); }
  Color rgb() const { return Color(color[0], color[1], color[2]) / 255.0; }
  bool operator==(const PriorPoint&) const = default;
};

struct ConfidencePointCloud {
  std::vector<PriorPoint> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }

  void validate() const {
    for (const auto& p : points) {
      if (!p.position.allFinite()) throw Error("point cloud: non-finite position");
      if (!(p.confidence >= 0.0f && p.confidence <= 1.0f)) throw Error("point cloud: confidence outside [0,1]");
      if (p.support < 1) throw Error("point cloud: support must be >= 1");
    }
  }

  // Confidence-weighted centroid (plain mean when every confidence is zero).
  Vec3 weighted_centroid() const {
    if (points.empty()) throw Error("no prior");
    Vec3 acc = Vec3::Zero();
    double w = 0.0;
    for (const auto& p : points) {
      acc += p.confidence * p.world();
      w += p.confidence;
    }
    if (w <= 0.0) {
      acc.setZero();
      for (const auto& p : points) acc += p.world();
      return acc / static_cast<double>(points.size());
    }
    return acc / w;
  }

  bool operator==(const ConfidencePointCloud&) const = default;
};

struct VotingConfig {
  double depth_tolerance = 0.1;   // meters
  int min_support = 3;            // views, including the source view
  double occlusion_margin = 0.1;  // meters behind the stored depth before a view abstains

  void validate() const {
    if (!(depth_tolerance > 0.0)) throw Error("voting: depth_tolerance must be positive");
    if (min_support < 1) throw Error("voting: min_support must be >= 1");
    if (!(occlusion_margin >= 0.0)) throw Error("voting: occlusion_margin must be non-negative");
  }
};

// Back-projects one depth map into candidate points carrying depth-gradient
// confidence and the source pixel's color.
inline ConfidencePointCloud candidates_from_view(const DepthMap& depth, const Image& image, const CameraIntrinsics& K,
                                                 const CameraPose& E, std::uint32_t view_index,
                                                 double confidence_sigma = 0.5) {
  const ConfidenceMap conf = depth_confidence(depth, confidence_sigma);
  const bool has_color = image.width == depth.width && image.height == depth.height;
  ConfidencePointCloud cloud;
  for (const auto& bp : back_project(depth, K, E)) {
    PriorPoint p;
    p.position = bp.position.cast<float>();
    if (has_color)
      for (int c = 0; c < 3; ++c) p.color[c] = to_byte(image.at(bp.u, bp.v, c));
    p.confidence = static_cast<float>(conf.at(bp.u, bp.v));
    p.support = 1;
    p.source_view = view_index;
    cloud.points.push_back(p);
  }
  return cloud;
}

enum class VoteOutcome { kSupport, kAbstain, kContradict };

// How view k judges a candidate: agreement within tolerance supports it; a
// point hidden behind the stored surface, outside the frame or over an
// invalid pixel abstains; anything else contradicts.
inline VoteOutcome cast_vote(const Vec3& point, const CameraIntrinsics& K, const CameraPose& E, const DepthMap& depth,
                             const VotingConfig& cfg) {
  const auto proj = project(point, K, E);
  if (!proj) return VoteOutcome::kAbstain;
  const long u = std::lround(proj->pixel.x());
  const long v = std::lround(proj->pixel.y());
  if (u < 0 || v < 0 || u >= depth.width || v >= depth.height) return VoteOutcome::kAbstain;
  if (!depth.valid(static_cast<int>(u), static_cast<int>(v))) return VoteOutcome::kAbstain;
  const double diff = proj->depth - depth.at(static_cast<int>(u), static_cast<int>(v));
  if (std::abs(diff) <= cfg.depth_tolerance) return VoteOutcome::kSupport;
  if (diff > cfg.occlusion_margin) return VoteOutcome::kAbstain;
  return VoteOutcome::kContradict;
}

// Cross-view depth voting. Candidates whose vote count (source view
// included) reaches min_support survive with support = votes.
inline ConfidencePointCloud multi_view_filter(const ConfidencePointCloud& candidates, const ViewSet& views,
                                              std::span<const DepthMap> depths, const VotingConfig& cfg) {
  cfg.validate();
  if (views.empty()) throw Error("no views");
  if (depths.size() != views.size()) throw Error("multi_view_filter: one depth map per view required");
  ConfidencePointCloud out;
  for (const auto& cand : candidates.points) {
    if (cand.source_view >= views.size())
      throw Error("multi_view_filter: candidate references unknown view " + std::to_string(cand.source_view));
    const Vec3 p = cand.world();
    int votes = 0;
    for (std::size_t k = 0; k < views.size(); ++k)
      if (cast_vote(p, views[k].K, views[k].E, depths[k], cfg) == VoteOutcome::kSupport) ++votes;
    if (votes >= cfg.min_support) {
      PriorPoint kept = cand;
      kept.support = static_cast<std::uint16_t>(std::min(votes, 65535));
      out.points.push_back(kept);
    }
  }
  return out;
}

struct BinKey {
  std::int64_t x, y, z;
  bool operator==(const BinKey&) const = default;
};

struct BinKeyHash {
  std::size_t operator()(const BinKey& k) const {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 0x9E3779B97F4A7C15ull;
    h ^= static_cast<std::uint64_t>(k.y) * 0xC2B2AE3D27D4EB4Full + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.z) * 0x165667B19E3779F9ull + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

// Bins are anchored at the world origin; a point belongs to bin
// floor(position / bin_size), so a point exactly on a boundary goes to the
// upper bin.
inline BinKey bin_of(const Vec3& p, double bin_size) {
  return {static_cast<std::int64_t>(std::floor(p.x() / bin_size)),
          static_cast<std::int64_t>(std::floor(p.y() / bin_size)),
          static_cast<std::int64_t>(std::floor(p.z() / bin_size))};
}

// One survivor per occupied bin: highest confidence, then highest support,
// then earliest (prev before new, original order within each). Output is in
// order of each bin's first appearance.
inline ConfidencePointCloud merge_point_clouds(const ConfidencePointCloud& prev, const ConfidencePointCloud& next,
                                               double bin_size) {
  if (!(bin_size > 0.0)) throw Error("merge_point_clouds: bin_size must be positive");
  std::unordered_map<BinKey, std::size_t, BinKeyHash> slot;
  std::vector<PriorPoint> winners;
  auto offer = [&](const PriorPoint& p) {
    const auto [it, inserted] = slot.try_emplace(bin_of(p.world(), bin_size), winners.size());
    if (inserted) {
      winners.push_back(p);
      return;
    }
    PriorPoint& cur = winners[it->second];
    if (p.confidence > cur.confidence || (p.confidence == cur.confidence && p.support > cur.support)) cur = p;
  };
  for (const auto& p : prev.points) offer(p);
  for (const auto& p : next.points) offer(p);
  return ConfidencePointCloud{std::move(winners)};
}

struct InitialPrior {
  ConfidencePointCloud cloud;
  CameraIntrinsics K;
  CameraPose E;
  DepthMap depth;
};

// Seeds the prior from a single image: depth and camera from the backend,
// falling back to a symmetric pinhole of the given field of view and the
// identity pose when the backend does not report them.
inline InitialPrior initial_prior(const Image& image, DepthEstimator& backend, const std::string& view_id = "seed",
                                  double fallback_hfov_deg = 60.0, double confidence_sigma = 0.5) {
  DepthRequest req;
  req.view_id = view_id;
  req.image = image;
  DepthResult res = backend.estimate(req);
  check_depth_result(req, res);
  InitialPrior out;
  out.K = res.K.value_or(CameraIntrinsics::from_fov(image.width, image.height, fallback_hfov_deg));
  out.E = res.E.value_or(CameraPose{});
  out.depth = std::move(res.depth);
  out.cloud = candidates_from_view(out.depth, image, out.K, out.E, 0, confidence_sigma);
  return out;
}

// ---------------------------------------------------------------------------
// Binary little-endian PLY. Properties: x y z (float), red green blue
// (uchar), confidence (float), support (ushort), view (uint). Readers that
// only know the first eight properties may ignore "view".

inline io::Bytes encode_ply(const ConfidencePointCloud& cloud) {
  std::ostringstream header;
  header << "ply\nformat binary_little_endian 1.0\nelement vertex " << cloud.size()
         << "\nproperty float x\nproperty float y\nproperty float z\n"
            "property uchar red\nproperty uchar green\nproperty uchar blue\n"
            "property float confidence\nproperty ushort support\nproperty uint view\nend_header\n";
  io::ByteWriter w;
  w.put_string(header.str());
  for (const auto& p : cloud.points) {
    w.put<float>(p.position.x());
    w.put<float>(p.position.y());
    w.put<float>(p.position.z());
    w.put_bytes(p.color.data(), 3);
    w.put<float>(p.confidence);
    w.put<std::uint16_t>(p.support);
    w.put<std::uint32_t>(p.source_view);
  }
  return w.take();
}

inline ConfidencePointCloud decode_ply(const io::Bytes& bytes) {
  const std::string marker = "end_header\n";
  const std::string head(bytes.begin(), bytes.begin() + std::min<std::size_t>(bytes.size(), 4096));
  const auto end = head.find(marker);
  if (head.rfind("ply\n", 0) != 0 || end == std::string::npos) throw Error("PLY: missing header");
  std::istringstream hs(head.substr(0, end));
  std::string line;
  std::size_t count = 0;
  struct Prop {
    std::string name;
    std::size_t offset, size;
  };
  std::vector<Prop> props;
  std::size_t stride = 0;
  static const std::map<std::string, std::size_t> kSizes = {
      {"char", 1}, {"uchar", 1}, {"short", 2}, {"ushort", 2}, {"int", 4}, {"uint", 4}, {"float", 4}, {"double", 8},
      {"int8", 1}, {"uint8", 1}, {"int16", 2}, {"uint16", 2}, {"int32", 4}, {"uint32", 4}, {"float32", 4}, {"float64", 8}};
  while (std::getline(hs, line)) {
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt != "binary_little_endian") throw Error("PLY: only binary_little_endian is supported");
    } else if (tok == "element") {
      std::string name;
      ls >> name >> count;
      if (name != "vertex") throw Error("PLY: unexpected element " + name);
    } else if (tok == "property") {
      std::string type, name;
      ls >> type >> name;
      const auto it = kSizes.find(type);
      if (it == kSizes.end()) throw Error("PLY: unsupported property type " + type);
      props.push_back({name, stride, it->second});
      stride += it->second;
    }
  }
  auto find = [&](const std::string& name, std::size_t size) -> const Prop* {
    for (const auto& p : props)
      if (p.name == name) {
        if (p.size != size) throw Error("PLY: property " + name + " has unexpected type");
        return &p;
      }
    return nullptr;
  };
  const Prop* px = find("x", 4);
  const Prop* py = find("y", 4);
  const Prop* pz = find("z", 4);
  if (!px || !py || !pz) throw Error("PLY: x/y/z properties required");
  const Prop* pr = find("red", 1);
  const Prop* pg = find("green", 1);
  const Prop* pb = find("blue", 1);
  const Prop* pc = find("confidence", 4);
  const Prop* ps = find("support", 2);
  const Prop* pv = find("view", 4);
  const std::size_t body = end + marker.size();
  if (bytes.size() < body + count * stride) throw Error("PLY: truncated body");
  ConfidencePointCloud cloud;
  cloud.points.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint8_t* rec = bytes.data() + body + i * stride;
    auto read = [&](const Prop* p, auto& out) { std::memcpy(&out, rec + p->offset, sizeof(out)); };
    PriorPoint& pt = cloud.points[i];
    read(px, pt.position.x());
    read(py, pt.position.y());
    read(pz, pt.position.z());
    if (pr) read(pr, pt.color[0]);
    if (pg) read(pg, pt.color[1]);
    if (pb) read(pb, pt.color[2]);
    if (pc) read(pc, pt.confidence);
    if (ps) read(ps, pt.support);
    if (pv) read(pv, pt.source_view);
  }
  return cloud;
}

}  // namespace evoscene
