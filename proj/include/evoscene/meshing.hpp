// Copyright 2026 The EvoScene Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Marching Cubes on a completed binary field, per-vertex texture baking from
// posed views, and GLB / OBJ export.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <map>
#include <queue>
#include <span>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "evoscene/errors.hpp"
#include "evoscene/geometry.hpp"
#include "evoscene/image.hpp"
#include "evoscene/io.hpp"
#include "evoscene/latent.hpp"
#include "evoscene/mesh.hpp"
#include "evoscene/views.hpp"
#include "json.hpp"

namespace evoscene {

// ---------------------------------------------------------------------------
// Case table
//
// Corner c of a cell sits at offset (c & 1, (c >> 1) & 1, (c >> 2) & 1).
// The 256 cases are derived from one rule per face: walking the face's
// corners counter-clockwise as seen from outside the cell, every crossing
// where the walk enters the inside set is joined to the next crossing where
// it leaves. On a face with two diagonal inside corners this cuts each of
// them off separately, so two cells sharing a face always agree on its
// segments. Segments chain into closed loops; each loop is one polygon, and
// this walk direction makes polygon normals point out of the inside set.

namespace mc {

struct Edge {
  int a, b;  // corner ids, a < b, differing in exactly one bit
  int axis;
};

inline const std::array<Edge, 12>& edges() {
  static const auto table = [] {
    std::array<Edge, 12> e{};
    int n = 0;
    for (int axis = 0; axis < 3; ++axis)
      for (int c = 0; c < 8; ++c)
        if (!(c & (1 << axis))) e[n++] = {c, c | (1 << axis), axis};
    return e;
  }();
  return table;
}

inline int edge_between(int a, int b) {
  if (a > b) std::swap(a, b);
  const auto& e = edges();
  for (int i = 0; i < 12; ++i)
    if (e[i].a == a && e[i].b == b) return i;
  return -1;
}

// Corners of each face in counter-clockwise order seen from outside.
inline const std::array<std::array<int, 4>, 6>& faces() {
  static const auto table = [] {
    std::array<std::array<int, 4>, 6> f{};
    int n = 0;
    for (int axis = 0; axis < 3; ++axis)
      for (int side = 0; side < 2; ++side) {
        const int u = (axis + 1) % 3, v = (axis + 2) % 3;
        auto corner = [&](int du, int dv) { return (side << axis) | (du << u) | (dv << v); };
        std::array<int, 4> q{corner(0, 0), corner(1, 0), corner(1, 1), corner(0, 1)};
        // (u, v, axis) is right-handed, so this order faces +axis.
        if (side == 0) std::swap(q[1], q[3]);
        f[n++] = q;
      }
    return f;
  }();
  return table;
}

using Loops = std::vector<std::vector<int>>;  // loops of edge ids

inline Loops loops_for_case(int config) {
  std::array<int, 12> next;
  next.fill(-1);
  auto inside = [&](int c) { return (config >> c) & 1; };
  for (const auto& f : faces()) {
    for (int s = 0; s < 4; ++s) {
      const int a = f[s], b = f[(s + 1) % 4];
      if (inside(a) || !inside(b)) continue;  // need an entry: outside -> inside
      // Walk forward to the next exit (inside -> outside).
      for (int t = 1; t < 4; ++t) {
        const int c = f[(s + t) % 4], d = f[(s + t + 1) % 4];
        if (inside(c) && !inside(d)) {
          next[edge_between(a, b)] = edge_between(c, d);
          break;
        }
      }
    }
  }
  Loops loops;
  std::array<bool, 12> used{};
  for (int e = 0; e < 12; ++e) {
    if (next[e] < 0 || used[e]) continue;
    std::vector<int> loop;
    for (int cur = e; !used[cur]; cur = next[cur]) {
      used[cur] = true;
      loop.push_back(cur);
    }
    loops.push_back(std::move(loop));
  }
  return loops;
}

inline const std::array<Loops, 256>& case_table() {
  static const auto table = [] {
    std::array<Loops, 256> t;
    for (int c = 0; c < 256; ++c) t[c] = loops_for_case(c);
    return t;
  }();
  return table;
}

// Two cube edges lie on a common face.
inline bool edges_share_face(int e1, int e2) {
  const auto& E = edges();
  for (const auto& f : faces()) {
    bool h1 = false, h2 = false;
    for (int s = 0; s < 4; ++s) {
      const int ei = edge_between(f[s], f[(s + 1) % 4]);
      h1 |= ei == e1;
      h2 |= ei == e2;
    }
    if (h1 && h2) return true;
  }
  (void)E;
  return false;
}

}  // namespace mc

// Iso-field on voxel centers: half the binary value plus half its 3x3x3 box
// average (zero outside the grid). Occupied voxels stay strictly above 0.5
// and empty ones strictly below, so the surface topology is exactly that of
// the binary field while the box term smooths vertex placement.
inline std::vector<double> smoothed_field(const BinaryField& f) {
  const int S = f.geom.S;
  const std::size_t n = f.geom.voxel_count();
  std::vector<double> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = f.occupied[i];
  auto pass = [&](const std::vector<double>& in, std::vector<double>& out, int axis) {
    const std::size_t stride = axis == 0 ? 1 : (axis == 1 ? static_cast<std::size_t>(S) : static_cast<std::size_t>(S) * S);
    for (std::size_t i = 0; i < n; ++i) {
      const int c = f.geom.coords(i)[axis];
      double s = in[i];
      if (c > 0) s += in[i - stride];
      if (c < S - 1) s += in[i + stride];
      out[i] = s;
    }
  };
  pass(a, b, 0);
  pass(b, a, 1);
  pass(a, b, 2);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = 0.5 * f.occupied[i] + 0.5 * b[i] / 27.0;
  return out;
}

inline TexturedMesh marching_cubes(const BinaryField& field, double iso = 0.5) {
  TexturedMesh mesh;
  if (field.count() == 0) return mesh;
  const GridGeometry& g = field.geom;
  const int S = g.S;
  const auto values = smoothed_field(field);
  // Lattice of voxel centers padded by one empty ring: lattice point p maps
  // to voxel p - 1.
  const int L = S + 2;
  auto lattice_value = [&](int x, int y, int z) {
    const int i = x - 1, j = y - 1, k = z - 1;
    if (!g.contains(i, j, k)) return 0.0;
    return values[g.index(i, j, k)];
  };
  auto lattice_pos = [&](int x, int y, int z) -> Vec3 { return g.origin + g.pitch * Vec3(x - 0.5, y - 0.5, z - 0.5); };
  auto lidx = [L](int x, int y, int z) {
    return static_cast<std::uint64_t>(x) + static_cast<std::uint64_t>(L) * (y + static_cast<std::uint64_t>(L) * z);
  };

  std::unordered_map<std::uint64_t, std::uint32_t> vertex_of_edge;
  const auto& E = mc::edges();
  const auto& table = mc::case_table();

  for (int z = 0; z + 1 < L; ++z)
    for (int y = 0; y + 1 < L; ++y)
      for (int x = 0; x + 1 < L; ++x) {
        std::array<double, 8> v;
        int config = 0;
        for (int c = 0; c < 8; ++c) {
          v[c] = lattice_value(x + (c & 1), y + ((c >> 1) & 1), z + ((c >> 2) & 1));
          if (v[c] > iso) config |= 1 << c;
        }
        if (config == 0 || config == 255) continue;
        auto vertex = [&](int e) {
          const auto& ed = E[e];
          const int ax = x + (ed.a & 1), ay = y + ((ed.a >> 1) & 1), az = z + ((ed.a >> 2) & 1);
          const std::uint64_t key = lidx(ax, ay, az) * 3 + ed.axis;
          const auto it = vertex_of_edge.find(key);
          if (it != vertex_of_edge.end()) return it->second;
          const double t = (iso - v[ed.a]) / (v[ed.b] - v[ed.a]);
          Vec3 p = lattice_pos(ax, ay, az);
          p[ed.axis] += t * g.pitch;
          const auto id = static_cast<std::uint32_t>(mesh.vertices.size());
          mesh.vertices.push_back(p.cast<float>());
          vertex_of_edge.emplace(key, id);
          return id;
        };
        for (const auto& loop : table[config]) {
          const int m = static_cast<int>(loop.size());
          std::vector<std::uint32_t> ids(m);
          for (int i = 0; i < m; ++i) ids[i] = vertex(loop[i]);
          if (m == 3) {
            mesh.triangles.push_back({ids[0], ids[1], ids[2]});
            continue;
          }
          // Fan root: no degenerate triangle first, then diagonals that stay
          // off the cell faces (a diagonal on a face could be duplicated by
          // the neighbouring cell), then the largest smallest triangle.
          const double degenerate = 1e-6 * g.pitch * g.pitch;
          int best = 0;
          double best_area = -1.0;
          bool best_clean = false;
          for (int r = 0; r < m; ++r) {
            bool clean = true;
            for (int i = 2; i < m - 1; ++i)
              if (mc::edges_share_face(loop[r], loop[(r + i) % m])) clean = false;
            double min_area = std::numeric_limits<double>::infinity();
            for (int i = 1; i + 1 < m; ++i) {
              const Vec3 a = mesh.vertices[ids[r]].cast<double>();
              const Vec3 b = mesh.vertices[ids[(r + i) % m]].cast<double>();
              const Vec3 c = mesh.vertices[ids[(r + i + 1) % m]].cast<double>();
              min_area = std::min(min_area, 0.5 * (b - a).cross(c - a).norm());
            }
            const bool ok = min_area > degenerate, best_ok = best_area > degenerate;
            if (std::tuple(ok, clean, min_area) > std::tuple(best_ok, best_clean, best_area)) {
              best = r;
              best_area = min_area;
              best_clean = clean;
            }
          }
          for (int i = 1; i + 1 < m; ++i)
            mesh.triangles.push_back({ids[best], ids[(best + i) % m], ids[(best + i + 1) % m]});
        }
      }
  mesh.compute_normals();
  return mesh;
}

// ---------------------------------------------------------------------------
// Texture baking

struct BakeConfig {
  double visibility_pitches = 2.0;  // depth test tolerance in voxel pitches
  double seed_weight = 0.7;         // views from iteration 0
  double later_weight = 1.0;
  int max_fill_iterations = 20000;
  double fill_tolerance = 1e-9;
};

// Vertex adjacency from triangle edges, sorted and unique.
inline std::vector<std::vector<std::uint32_t>> vertex_adjacency(const TexturedMesh& mesh) {
  std::vector<std::vector<std::uint32_t>> adj(mesh.vertices.size());
  for (const auto& t : mesh.triangles)
    for (int e = 0; e < 3; ++e) {
      adj[t[e]].push_back(t[(e + 1) % 3]);
      adj[t[(e + 1) % 3]].push_back(t[e]);
    }
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  return adj;
}

// Fills unseen vertices with the discrete harmonic interpolant of the seen
// ones (each unseen vertex equals the mean of its neighbours), by
// Gauss-Seidel sweeps seeded with a breadth-first guess. Components without
// any seen vertex become gray.
inline void harmonic_fill(const std::vector<std::vector<std::uint32_t>>& adj, std::vector<Color>& colors,
                          const std::vector<std::uint8_t>& seen, int max_iterations = 20000, double tol = 1e-9) {
  const std::size_t n = colors.size();
  std::vector<std::uint8_t> known(seen.begin(), seen.end());
  std::queue<std::uint32_t> q;
  for (std::size_t i = 0; i < n; ++i)
    if (known[i]) q.push(static_cast<std::uint32_t>(i));
  while (!q.empty()) {
    const auto i = q.front();
    q.pop();
    for (auto j : adj[i]) {
      if (known[j]) continue;
      known[j] = 1;
      colors[j] = colors[i];
      q.push(j);
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    if (!known[i]) colors[i] = Color::Constant(0.5);
  for (int it = 0; it < max_iterations; ++it) {
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (seen[i] || !known[i] || adj[i].empty()) continue;
      Color acc = Color::Zero();
      for (auto j : adj[i]) acc += colors[j];
      const Color next = acc / static_cast<double>(adj[i].size());
      change = std::max(change, (next - colors[i]).cwiseAbs().maxCoeff());
      colors[i] = next;
    }
    if (change < tol) break;
  }
}

// Per-vertex colors from every view in which the vertex passes the depth
// visibility test, weighted by the facing cosine and by view recency.
inline TexturedMesh bake_textures(const TexturedMesh& in, const ViewSet& views, std::span<const DepthMap> mesh_depths,
                                  double pitch, const BakeConfig& cfg = {}) {
  if (views.empty()) throw Error("bake_textures: no views");
  if (mesh_depths.size() != views.size()) throw Error("bake_textures: one depth map per view required");
  TexturedMesh mesh = in;
  if (mesh.normals.size() != mesh.vertices.size()) mesh.compute_normals();
  const std::size_t n = mesh.vertices.size();
  std::vector<Color> acc(n, Color::Zero());
  std::vector<double> wsum(n, 0.0);
  for (std::size_t k = 0; k < views.size(); ++k) {
    const View& view = views[k];
    const DepthMap& d = mesh_depths[k];
    const Vec3 cam = view.E.center();
    const double recency = view.iteration_of_origin == 0 ? cfg.seed_weight : cfg.later_weight;
    for (std::size_t i = 0; i < n; ++i) {
      const Vec3 p = mesh.vertices[i].cast<double>();
      const auto proj = project(p, view.K, view.E);
      if (!proj) continue;
      const long u = std::lround(proj->pixel.x()), v = std::lround(proj->pixel.y());
      if (!d.valid(static_cast<int>(u), static_cast<int>(v))) continue;
      if (std::abs(proj->depth - d.at(static_cast<int>(u), static_cast<int>(v))) > cfg.visibility_pitches * pitch)
        continue;
      const double cosine = mesh.normals[i].cast<double>().dot((cam - p).normalized());
      const double w = std::max(cosine, 0.0) * recency;
      if (w <= 0.0) continue;
      acc[i] += w * sample_bilinear(view.image, proj->pixel.x(), proj->pixel.y());
      wsum[i] += w;
    }
  }
  std::vector<Color> colors(n, Color::Constant(0.5));
  std::vector<std::uint8_t> seen(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    if (wsum[i] > 0.0) {
      colors[i] = acc[i] / wsum[i];
      seen[i] = 1;
    }
  harmonic_fill(vertex_adjacency(mesh), colors, seen, cfg.max_fill_iterations, cfg.fill_tolerance);
  mesh.colors.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) mesh.colors[i][c] = to_byte(colors[i][c]);
  return mesh;
}

// ---------------------------------------------------------------------------
// GLB

namespace glb {
constexpr std::uint32_t kMagic = 0x46546C67;  // "glTF"
constexpr std::uint32_t kJson = 0x4E4F534A;   // "JSON"
constexpr std::uint32_t kBin = 0x004E4942;    // "BIN\0"
constexpr int kFloat = 5126, kUnsignedByte = 5121, kUnsignedInt = 5125;
constexpr int kArrayBuffer = 34962, kElementArrayBuffer = 34963;
}  // namespace glb

// Binary glTF 2.0 with one triangle primitive: POSITION and NORMAL as float
// VEC3, COLOR_0 as normalized unsigned-byte VEC3 (4-byte stride) and 32-bit
// indices.
inline io::Bytes export_glb(const TexturedMesh& in) {
  if (in.empty()) throw Error("export_glb: mesh has no triangles");
  in.validate();
  TexturedMesh mesh = in;
  if (mesh.normals.size() != mesh.vertices.size()) mesh.compute_normals();
  const std::size_t nv = mesh.vertices.size();
  const bool has_color = !mesh.colors.empty();

  io::ByteWriter bin;
  Eigen::Vector3f lo = Eigen::Vector3f::Constant(std::numeric_limits<float>::infinity());
  Eigen::Vector3f hi = -lo;
  for (const auto& v : mesh.vertices) {
    for (int a = 0; a < 3; ++a) bin.put<float>(v[a]);
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const std::size_t pos_len = bin.size();
  for (const auto& nrm : mesh.normals)
    for (int a = 0; a < 3; ++a) bin.put<float>(nrm[a]);
  const std::size_t nrm_off = pos_len, nrm_len = bin.size() - nrm_off;
  const std::size_t col_off = bin.size();
  if (has_color)
    for (const auto& c : mesh.colors) {
      bin.put_bytes(c.data(), 3);
      bin.put<std::uint8_t>(0);
    }
  const std::size_t col_len = bin.size() - col_off;
  const std::size_t idx_off = bin.size();
  for (const auto& t : mesh.triangles)
    for (auto i : t) bin.put<std::uint32_t>(i);
  const std::size_t idx_len = bin.size() - idx_off;
  bin.pad_to(4, 0);

  using nlohmann::json;
  json views = json::array();
  json accessors = json::array();
  json attributes = json::object();
  auto add_view = [&](std::size_t off, std::size_t len, int target, int stride) {
    json v = {{"buffer", 0}, {"byteOffset", off}, {"byteLength", len}, {"target", target}};
    if (stride) v["byteStride"] = stride;
    views.push_back(v);
    return views.size() - 1;
  };
  accessors.push_back({{"bufferView", add_view(0, pos_len, glb::kArrayBuffer, 0)},
                       {"componentType", glb::kFloat},
                       {"count", nv},
                       {"type", "VEC3"},
                       {"min", {lo.x(), lo.y(), lo.z()}},
                       {"max", {hi.x(), hi.y(), hi.z()}}});
  attributes["POSITION"] = 0;
  accessors.push_back({{"bufferView", add_view(nrm_off, nrm_len, glb::kArrayBuffer, 0)},
                       {"componentType", glb::kFloat},
                       {"count", nv},
                       {"type", "VEC3"}});
  attributes["NORMAL"] = 1;
  if (has_color) {
    accessors.push_back({{"bufferView", add_view(col_off, col_len, glb::kArrayBuffer, 4)},
                         {"componentType", glb::kUnsignedByte},
                         {"normalized", true},
                         {"count", nv},
                         {"type", "VEC3"}});
    attributes["COLOR_0"] = accessors.size() - 1;
  }
  accessors.push_back({{"bufferView", add_view(idx_off, idx_len, glb::kElementArrayBuffer, 0)},
                       {"componentType", glb::kUnsignedInt},
                       {"count", mesh.triangles.size() * 3},
                       {"type", "SCALAR"}});
  const std::size_t idx_accessor = accessors.size() - 1;
  json doc = {{"asset", {{"version", "2.0"}, {"generator", "evoscene"}}},
              {"scene", 0},
              {"scenes", {{{"nodes", {0}}}}},
              {"nodes", {{{"mesh", 0}}}},
              {"meshes", {{{"primitives", {{{"attributes", attributes}, {"indices", idx_accessor}, {"mode", 4}}}}}}},
              {"buffers", {{{"byteLength", bin.size()}}}},
              {"bufferViews", views},
              {"accessors", accessors}};
  std::string text = doc.dump();
  while (text.size() % 4) text.push_back(' ');

  io::ByteWriter out;
  const std::size_t total = 12 + 8 + text.size() + 8 + bin.size();
  out.put<std::uint32_t>(glb::kMagic);
  out.put<std::uint32_t>(2);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(total));
  out.put<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
  out.put<std::uint32_t>(glb::kJson);
  out.put_string(text);
  out.put<std::uint32_t>(static_cast<std::uint32_t>(bin.size()));
  out.put<std::uint32_t>(glb::kBin);
  out.put_bytes(bin.bytes().data(), bin.size());
  return out.take();
}

struct GlbChunks {
  std::uint32_t version = 0;
  nlohmann::json json;
  io::Bytes bin;
  std::vector<std::uint32_t> chunk_lengths;
};

inline GlbChunks read_glb_chunks(const io::Bytes& bytes) {
  io::ByteReader r(bytes);
  if (r.get<std::uint32_t>() != glb::kMagic) throw Error("GLB: bad magic");
  GlbChunks c;
  c.version = r.get<std::uint32_t>();
  if (c.version != 2) throw Error("GLB: unsupported version");
  if (r.get<std::uint32_t>() != bytes.size()) throw Error("GLB: length field does not match file size");
  bool have_json = false;
  while (r.remaining() > 0) {
    const auto len = r.get<std::uint32_t>();
    const auto type = r.get<std::uint32_t>();
    c.chunk_lengths.push_back(len);
    if (type == glb::kJson) {
      c.json = nlohmann::json::parse(r.get_string(len));
      have_json = true;
    } else if (type == glb::kBin) {
      c.bin.resize(len);
      r.get_bytes(c.bin.data(), len);
    } else {
      r.skip(len);
    }
  }
  if (!have_json) throw Error("GLB: missing JSON chunk");
  return c;
}

// Reads meshes written by export_glb (and any single-primitive GLB with the
// same accessor types).
inline TexturedMesh import_glb(const io::Bytes& bytes) {
  const GlbChunks c = read_glb_chunks(bytes);
  const auto& doc = c.json;
  const auto& prim = doc.at("meshes").at(0).at("primitives").at(0);
  auto accessor_data = [&](std::size_t a, int comp, int ncomp, std::size_t elem_size) {
    const auto& acc = doc.at("accessors").at(a);
    if (acc.at("componentType").get<int>() != comp) throw Error("GLB: unexpected component type");
    const auto& view = doc.at("bufferViews").at(acc.at("bufferView").get<std::size_t>());
    const std::size_t count = acc.at("count").get<std::size_t>();
    const std::size_t offset = view.value("byteOffset", std::size_t{0}) + acc.value("byteOffset", std::size_t{0});
    const std::size_t stride = view.value("byteStride", elem_size * ncomp);
    if (count > 0 && offset + (count - 1) * stride + elem_size * ncomp > c.bin.size())
      throw Error("GLB: accessor exceeds buffer");
    return std::make_tuple(c.bin.data() + offset, count, stride);
  };
  TexturedMesh mesh;
  const auto& attrs = prim.at("attributes");
  {
    auto [p, count, stride] = accessor_data(attrs.at("POSITION").get<std::size_t>(), glb::kFloat, 3, 4);
    mesh.vertices.resize(count);
    for (std::size_t i = 0; i < count; ++i) std::memcpy(mesh.vertices[i].data(), p + i * stride, 12);
  }
  if (attrs.contains("NORMAL")) {
    auto [p, count, stride] = accessor_data(attrs.at("NORMAL").get<std::size_t>(), glb::kFloat, 3, 4);
    mesh.normals.resize(count);
    for (std::size_t i = 0; i < count; ++i) std::memcpy(mesh.normals[i].data(), p + i * stride, 12);
  }
  if (attrs.contains("COLOR_0")) {
    auto [p, count, stride] = accessor_data(attrs.at("COLOR_0").get<std::size_t>(), glb::kUnsignedByte, 3, 1);
    mesh.colors.resize(count);
    for (std::size_t i = 0; i < count; ++i) std::memcpy(mesh.colors[i].data(), p + i * stride, 3);
  }
  {
    auto [p, count, stride] = accessor_data(prim.at("indices").get<std::size_t>(), glb::kUnsignedInt, 1, 4);
    if (count % 3) throw Error("GLB: index count is not a multiple of 3");
    mesh.triangles.resize(count / 3);
    for (std::size_t i = 0; i < count; ++i) std::memcpy(&mesh.triangles[i / 3][i % 3], p + i * stride, 4);
  }
  return mesh;
}

// ASCII OBJ for debugging. Vertex colors use the common "v x y z r g b"
// extension.
inline std::string export_obj(const TexturedMesh& mesh) {
  std::string out = "# evoscene mesh; vertex colors follow positions (v x y z r g b)\n";
  char line[160];
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    const auto& v = mesh.vertices[i];
    if (!mesh.colors.empty()) {
      const auto& c = mesh.colors[i];
      std::snprintf(line, sizeof line, "v %.9g %.9g %.9g %.6g %.6g %.6g\n", v.x(), v.y(), v.z(), c[0] / 255.0,
                    c[1] / 255.0, c[2] / 255.0);
    } else {
      std::snprintf(line, sizeof line, "v %.9g %.9g %.9g\n", v.x(), v.y(), v.z());
    }
    out += line;
  }
  for (const auto& t : mesh.triangles) {
    std::snprintf(line, sizeof line, "f %u %u %u\n", t[0] + 1, t[1] + 1, t[2] + 1);
    out += line;
  }
  return out;
}

// Binary little-endian PLY: float x y z, uchar red green blue, and
// triangles as uchar-counted uint index lists.
inline io::Bytes export_ply(const TexturedMesh& mesh) {
  mesh.validate();
  std::string header = "ply\nformat binary_little_endian 1.0\ncomment evoscene mesh\nelement vertex " +
                       std::to_string(mesh.vertices.size()) +
                       "\nproperty float x\nproperty float y\nproperty float z\n"
                       "property uchar red\nproperty uchar green\nproperty uchar blue\nelement face " +
                       std::to_string(mesh.triangles.size()) + "\nproperty list uchar uint vertex_indices\nend_header\n";
  io::ByteWriter w;
  w.put_string(header);
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    for (int a = 0; a < 3; ++a) w.put<float>(mesh.vertices[i][a]);
    const RGB8 c = mesh.colors.empty() ? RGB8{128, 128, 128} : mesh.colors[i];
    for (int a = 0; a < 3; ++a) w.put<std::uint8_t>(c[a]);
  }
  for (const auto& t : mesh.triangles) {
    w.put<std::uint8_t>(3);
    for (auto i : t) w.put<std::uint32_t>(i);
  }
  return w.take();
}

}  // namespace evoscene
