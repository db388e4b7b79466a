// Copyright 2026 The EvoScene Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <unordered_set>
#include <vector>

#include "evoscene/errors.hpp"
#include "evoscene/geometry.hpp"
#include "evoscene/image.hpp"

namespace evoscene {

// One posed observation: the seed image or a synthesized frame.
struct View {
  std::string id;
  Image image;
  CameraIntrinsics K;
  CameraPose E;
  int iteration_of_origin = 0;
};

// Accumulated observations. Ids are unique; views are only ever appended.
class ViewSet {
 public:
  void add(View v) {
    if (!ids_.insert(v.id).second) throw Error("duplicate view id: " + v.id);
    views_.push_back(std::move(v));
  }

  std::size_t size() const { return views_.size(); }
  bool empty() const { return views_.empty(); }
  const View& operator[](std::size_t i) const { return views_[i]; }
  const std::vector<View>& all() const { return views_; }
  auto begin() const { return views_.begin(); }
  auto end() const { return views_.end(); }
  bool contains(const std::string& id) const { return ids_.count(id) != 0; }

  // Camera updates are the only in-place edit (the seed camera becomes known
  // once depth is estimated).
  void set_camera(std::size_t i, const CameraIntrinsics& K, const CameraPose& E) {
    views_.at(i).K = K;
    views_.at(i).E = E;
  }

 private:
  std::vector<View> views_;
  std::unordered_set<std::string> ids_;
};

}  // namespace evoscene
