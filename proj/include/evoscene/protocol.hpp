// Copyright 2026 The EvoScene Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// JSON messages of the backend wire protocol "evoscene-proto/1". Binary
// payloads travel inline as base64 or as files in a shared session
// directory. Field lists are documented in docs/protocol.md.

#pragma once

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "evoscene/completion.hpp"
#include "evoscene/errors.hpp"
#include "evoscene/geometry.hpp"
#include "evoscene/image.hpp"
#include "evoscene/interfaces.hpp"
#include "evoscene/io.hpp"
#include "evoscene/trajectory.hpp"
#include "json.hpp"

namespace evoscene::proto {

using nlohmann::json;

inline constexpr const char* kVersion = "evoscene-proto/1";

// Where binary payloads go. With a session directory, payloads are written
// as files and referenced by path relative to it.
class PayloadCodec {
 public:
  PayloadCodec() = default;
  explicit PayloadCodec(std::filesystem::path session_dir, std::string prefix = "p")
      : dir_(std::move(session_dir)), prefix_(std::move(prefix)) {}

  // EVOSCENE_SESSION_DIR when set, inline otherwise.
  static PayloadCodec from_environment(std::string prefix = "p") {
    if (const char* d = std::getenv("EVOSCENE_SESSION_DIR"); d && *d) return PayloadCodec(d, std::move(prefix));
    return PayloadCodec();
  }

  bool uses_files() const { return !dir_.empty(); }
  const std::filesystem::path& session_dir() const { return dir_; }

  json encode(const io::Bytes& bytes, const std::string& format) {
    if (dir_.empty()) return {{"encoding", "base64"}, {"format", format}, {"data", io::base64_encode(bytes)}};
    std::filesystem::create_directories(dir_);
    const std::string name = prefix_ + "-" + std::to_string(counter_++) + "." + extension(format);
    io::write_file(dir_ / name, bytes);
    return {{"encoding", "file"}, {"format", format}, {"path", name}};
  }

  // Reads a payload, checking its declared format. `path` names the field
  // in error messages.
  io::Bytes decode(const json& j, const std::string& format, const std::string& path) const {
    if (!j.is_object()) throw ContractError(path + ": expected a payload object");
    const std::string enc = string_field(j, "encoding", path);
    const std::string fmt = string_field(j, "format", path);
    if (fmt != format) throw ContractError(path + ".format: expected " + format + ", got " + fmt);
    if (enc == "base64") {
      try {
        return io::base64_decode(string_field(j, "data", path));
      } catch (const Error& e) {
        throw ContractError(path + ".data: " + e.what());
      }
    }
    if (enc == "file") {
      if (dir_.empty()) throw ContractError(path + ".encoding: file payloads need a session directory");
      const std::filesystem::path rel = string_field(j, "path", path);
      if (rel.is_absolute() || rel.lexically_normal().string().starts_with(".."))
        throw ContractError(path + ".path: must be relative to the session directory");
      try {
        return io::read_file(dir_ / rel);
      } catch (const Error& e) {
        throw ContractError(path + ".path: " + e.what());
      }
    }
    throw ContractError(path + ".encoding: unknown encoding " + enc);
  }

  // Removes every file payload referenced anywhere inside `j`.
  void remove_files(const json& j) const {
    if (dir_.empty()) return;
    if (j.is_object()) {
      if (j.value("encoding", "") == "file" && j.contains("path") && j["path"].is_string()) {
        std::error_code ec;
        std::filesystem::remove(dir_ / j["path"].get<std::string>(), ec);
        return;
      }
      for (const auto& [k, v] : j.items()) remove_files(v);
    } else if (j.is_array()) {
      for (const auto& v : j) remove_files(v);
    }
  }

  static std::string string_field(const json& j, const std::string& key, const std::string& path) {
    if (!j.contains(key)) throw ContractError(path + "." + key + ": missing");
    if (!j.at(key).is_string()) throw ContractError(path + "." + key + ": expected a string");
    return j.at(key).get<std::string>();
  }

 private:
  static std::string extension(const std::string& format) {
    if (format == "png") return "png";
    if (format == "evdm") return "evdm";
    return "bin";
  }

  std::filesystem::path dir_;
  std::string prefix_ = "p";
  std::uint64_t counter_ = 0;
};

// ---------------------------------------------------------------------------
// Field access with path-qualified contract errors.

inline const json& field(const json& j, const std::string& key, const std::string& path = "") {
  const std::string where = path.empty() ? key : path + "." + key;
  if (!j.is_object() || !j.contains(key)) throw ContractError(where + ": missing");
  return j.at(key);
}

template <typename T>
T get_as(const json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ContractError(path + ": wrong type");
  }
}

template <typename Fn>
auto parse_as(const std::string& path, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ContractError&) {
    throw;
  } catch (const std::exception& e) {
    throw ContractError(path + ": " + e.what());
  }
}

inline void check_version(const json& j) {
  const auto v = get_as<std::string>(field(j, "proto"), "proto");
  if (v != kVersion) throw ContractError(std::string("proto: expected ") + kVersion + ", got " + v);
}

inline json encode_image(PayloadCodec& c, const Image& img) { return c.encode(encode_png(img), "png"); }

inline Image decode_image(const PayloadCodec& c, const json& j, const std::string& path) {
  const auto bytes = c.decode(j, "png", path);
  return parse_as(path, [&] { return decode_png(bytes); });
}

inline json encode_depth(PayloadCodec& c, const DepthMap& d) { return c.encode(encode_evdm(d), "evdm"); }

inline DepthMap decode_depth(const PayloadCodec& c, const json& j, const std::string& path) {
  const auto bytes = c.decode(j, "evdm", path);
  return parse_as(path, [&] { return decode_evdm(bytes); });
}

// ---------------------------------------------------------------------------
// /depth

inline json encode(PayloadCodec& c, const DepthRequest& r) {
  json j = {{"proto", kVersion}, {"view_id", r.view_id}, {"image", encode_image(c, r.image)}};
  if (r.K_hint) j["K_hint"] = to_json(*r.K_hint);
  if (r.E_hint) j["E_hint"] = to_json(*r.E_hint);
  return j;
}

inline DepthRequest decode_depth_request(const PayloadCodec& c, const json& j) {
  check_version(j);
  DepthRequest r;
  r.view_id = get_as<std::string>(field(j, "view_id"), "view_id");
  r.image = decode_image(c, field(j, "image"), "image");
  if (j.contains("K_hint")) r.K_hint = parse_as("K_hint", [&] { return intrinsics_from_json(j["K_hint"]); });
  if (j.contains("E_hint")) r.E_hint = parse_as("E_hint", [&] { return pose_from_json(j["E_hint"]); });
  return r;
}

inline json encode(PayloadCodec& c, const DepthResult& r) {
  json j = {{"proto", kVersion}, {"depth", encode_depth(c, r.depth)}};
  if (r.K) j["K"] = to_json(*r.K);
  if (r.E) j["E"] = to_json(*r.E);
  return j;
}

inline DepthResult decode_depth_result(const PayloadCodec& c, const json& j) {
  check_version(j);
  DepthResult r;
  r.depth = decode_depth(c, field(j, "depth"), "depth");
  if (j.contains("K")) r.K = parse_as("K", [&] { return intrinsics_from_json(j["K"]); });
  if (j.contains("E")) r.E = parse_as("E", [&] { return pose_from_json(j["E"]); });
  return r;
}

// ---------------------------------------------------------------------------
// /complete

inline json encode_geom(const GridGeometry& g) {
  return {{"S", g.S}, {"origin", to_json(g.origin)}, {"pitch", g.pitch}};
}

inline GridGeometry decode_geom(const json& j, const std::string& path) {
  return parse_as(path, [&] {
    GridGeometry g;
    g.S = j.at("S").get<int>();
    g.origin = vec3_from_json(j.at("origin"));
    g.pitch = j.at("pitch").get<double>();
    g.validate();
    return g;
  });
}

inline json encode(PayloadCodec& c, const CompletionRequest& r) {
  io::Bytes states(r.states.size());
  for (std::size_t i = 0; i < states.size(); ++i) states[i] = static_cast<std::uint8_t>(r.states[i]);
  json crops = json::array();
  for (const auto& cv : r.crops)
    crops.push_back({{"view_index", cv.view_index},
                     {"rect", {cv.rect.x0, cv.rect.y0, cv.rect.x1, cv.rect.y1}},
                     {"image", encode_image(c, cv.image)},
                     {"depth", encode_depth(c, cv.depth)},
                     {"K", to_json(cv.K)},
                     {"E", to_json(cv.E)}});
  return {{"proto", kVersion},
          {"patch_index", r.patch_index},
          {"P", r.P},
          {"min_corner", r.min_corner},
          {"grid", encode_geom(r.patch_geom)},
          {"states", c.encode(states, "raw-u8")},
          {"crops", crops}};
}

inline CompletionRequest decode_completion_request(const PayloadCodec& c, const json& j) {
  check_version(j);
  CompletionRequest r;
  r.patch_index = get_as<std::size_t>(field(j, "patch_index"), "patch_index");
  r.P = get_as<int>(field(j, "P"), "P");
  if (r.P < 1) throw ContractError("P: must be positive");
  r.min_corner = get_as<Index3>(field(j, "min_corner"), "min_corner");
  r.patch_geom = decode_geom(field(j, "grid"), "grid");
  const auto states = c.decode(field(j, "states"), "raw-u8", "states");
  if (states.size() != static_cast<std::size_t>(r.P) * r.P * r.P) throw ContractError("states: wrong size");
  r.states.resize(states.size());
  r.clamp_mask.resize(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    if (states[i] > 2) throw ContractError("states: invalid state byte");
    r.states[i] = static_cast<VoxelState>(states[i]);
    r.clamp_mask[i] = r.states[i] == VoxelState::kObserved;
  }
  const auto& crops = field(j, "crops");
  for (std::size_t k = 0; k < crops.size(); ++k) {
    const std::string p = "crops[" + std::to_string(k) + "]";
    CropView cv;
    cv.view_index = get_as<std::size_t>(field(crops[k], "view_index", p), p + ".view_index");
    const auto rect = get_as<std::array<int, 4>>(field(crops[k], "rect", p), p + ".rect");
    cv.rect = {rect[0], rect[1], rect[2], rect[3]};
    cv.image = decode_image(c, field(crops[k], "image", p), p + ".image");
    cv.depth = decode_depth(c, field(crops[k], "depth", p), p + ".depth");
    cv.K = parse_as(p + ".K", [&] { return intrinsics_from_json(crops[k].at("K")); });
    cv.E = parse_as(p + ".E", [&] { return pose_from_json(crops[k].at("E")); });
    r.crops.push_back(std::move(cv));
  }
  return r;
}

inline json encode(PayloadCodec& c, const CompletionResponse& r) {
  json attrs = json::array();
  for (const auto& a : r.attributes)
    attrs.push_back({{"index", a.local_index},
                     {"color", to_json(Vec3(a.attrs.color))},
                     {"opacity", a.attrs.opacity},
                     {"scale", a.attrs.scale}});
  return {{"proto", kVersion}, {"occupancy", c.encode(r.occupancy, "raw-u8")}, {"attributes", attrs}};
}

inline CompletionResponse decode_completion_response(const PayloadCodec& c, const json& j) {
  check_version(j);
  CompletionResponse r;
  r.occupancy = c.decode(field(j, "occupancy"), "raw-u8", "occupancy");
  const auto& attrs = field(j, "attributes");
  if (!attrs.is_array()) throw ContractError("attributes: expected an array");
  for (std::size_t k = 0; k < attrs.size(); ++k) {
    const std::string p = "attributes[" + std::to_string(k) + "]";
    PatchVoxelAttribute a;
    a.local_index = get_as<std::uint32_t>(field(attrs[k], "index", p), p + ".index");
    a.attrs.color = parse_as(p + ".color", [&] { return vec3_from_json(attrs[k].at("color")); });
    a.attrs.opacity = get_as<double>(field(attrs[k], "opacity", p), p + ".opacity");
    a.attrs.scale = get_as<double>(field(attrs[k], "scale", p), p + ".scale");
    r.attributes.push_back(a);
  }
  return r;
}

// ---------------------------------------------------------------------------
// /synthesize

inline json encode(PayloadCodec& c, const SynthesisRequest& r) {
  json disp = json::array();
  for (const auto& d : r.disparities) disp.push_back(c.encode(encode_evdm(d.width, d.height, d.normalized, true), "evdm"));
  return {{"proto", kVersion},
          {"seed_image", encode_image(c, r.seed_image)},
          {"K", to_json(r.K)},
          {"trajectory", trajectory_to_json(r.trajectory)},
          {"disparities", disp},
          {"prompt", r.prompt},
          {"controlnet_scale", r.controlnet_scale},
          {"inject_first_frame", r.inject_first_frame}};
}

inline SynthesisRequest decode_synthesis_request(const PayloadCodec& c, const json& j) {
  check_version(j);
  SynthesisRequest r;
  r.seed_image = decode_image(c, field(j, "seed_image"), "seed_image");
  r.K = parse_as("K", [&] { return intrinsics_from_json(field(j, "K")); });
  r.trajectory = parse_as("trajectory", [&] { return trajectory_from_json(field(j, "trajectory")); });
  const auto& disp = field(j, "disparities");
  for (std::size_t k = 0; k < disp.size(); ++k) {
    const std::string p = "disparities[" + std::to_string(k) + "]";
    const auto bytes = c.decode(disp[k], "evdm", p);
    const auto raw = parse_as(p, [&] { return decode_evdm_raw(bytes); });
    DisparityMap d;
    d.width = raw.width;
    d.height = raw.height;
    d.normalized = raw.values;
    r.disparities.push_back(std::move(d));
  }
  r.prompt = get_as<std::string>(field(j, "prompt"), "prompt");
  r.controlnet_scale = get_as<double>(field(j, "controlnet_scale"), "controlnet_scale");
  r.inject_first_frame = get_as<bool>(field(j, "inject_first_frame"), "inject_first_frame");
  return r;
}

inline json encode(PayloadCodec& c, const SynthesisResponse& r) {
  json frames = json::array();
  for (const auto& f : r.frames) frames.push_back(encode_image(c, f));
  json j = {{"proto", kVersion}, {"frames", frames}};
  if (r.poses) {
    json poses = json::array();
    for (const auto& p : *r.poses) poses.push_back(to_json(p));
    j["poses"] = poses;
  }
  return j;
}

inline SynthesisResponse decode_synthesis_response(const PayloadCodec& c, const json& j) {
  check_version(j);
  SynthesisResponse r;
  const auto& frames = field(j, "frames");
  if (!frames.is_array()) throw ContractError("frames: expected an array");
  for (std::size_t k = 0; k < frames.size(); ++k)
    r.frames.push_back(decode_image(c, frames[k], "frames[" + std::to_string(k) + "]"));
  if (j.contains("poses")) {
    std::vector<CameraPose> poses;
    for (std::size_t k = 0; k < j["poses"].size(); ++k)
      poses.push_back(parse_as("poses[" + std::to_string(k) + "]", [&] { return pose_from_json(j["poses"][k]); }));
    r.poses = std::move(poses);
  }
  return r;
}

}  // namespace evoscene::proto
