// Copyright 2026 The EvoScene Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Photometric test-time refinement of per-voxel appearance against the
// accumulated views, with analytic gradients through the splat renderer.

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "evoscene/errors.hpp"
#include "evoscene/latent.hpp"
#include "evoscene/log.hpp"
#include "evoscene/rendering.hpp"
#include "evoscene/views.hpp"

namespace evoscene {

struct TtoConfig {
  int steps = 5;
  double lr = 1.0;
  PhotometricWeights weights;
  int render_size = 256;  // longest side of optimization renders
  bool optimize_opacity = false;
  // Scale each voxel's step by its inverse compositing mass and halve the
  // step until the loss does not increase. Plain mode takes raw gradient
  // steps of size lr.
  bool preconditioned = true;
  bool line_search = true;
  int max_halvings = 12;
  SplatOptions splat;
};

// Targets and cameras at optimization resolution.
struct TtoProblem {
  std::vector<CameraIntrinsics> K;
  std::vector<CameraPose> E;
  std::vector<ImageD> targets;
  PhotometricWeights weights;
  SplatOptions splat;

  std::size_t size() const { return targets.size(); }
};

inline TtoProblem make_tto_problem(const ViewSet& views, const TtoConfig& cfg) {
  cfg.weights.require_native();
  if (views.empty()) throw Error("test_time_optimize: no views");
  TtoProblem prob;
  prob.weights = cfg.weights;
  prob.splat = cfg.splat;
  for (const auto& v : views) {
    int w = v.image.width, h = v.image.height;
    const int longest = std::max(w, h);
    if (cfg.render_size > 0 && longest > cfg.render_size) {
      w = std::max(1, static_cast<int>(std::lround(static_cast<double>(w) * cfg.render_size / longest)));
      h = std::max(1, static_cast<int>(std::lround(static_cast<double>(h) * cfg.render_size / longest)));
    }
    prob.K.push_back(v.K.width == w && v.K.height == h ? v.K : v.K.scaled_to(w, h));
    prob.E.push_back(v.E);
    prob.targets.push_back(ImageD(resize(v.image, w, h)));
  }
  return prob;
}

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> per_view;
  RenderGradient grad;
  std::vector<double> precond;  // per voxel: sum over views of mass / (3 * pixels)
};

inline double evaluate_loss(const SceneLatent& latent, const TtoProblem& prob, std::vector<double>* per_view = nullptr) {
  double total = 0.0;
  if (per_view) per_view->assign(prob.size(), 0.0);
  for (std::size_t k = 0; k < prob.size(); ++k) {
    const auto frame = render(latent, prob.K[k], prob.E[k], prob.targets[k].width, prob.targets[k].height, prob.splat);
    const double l = photometric_term(frame.rgb, prob.targets[k], prob.weights);
    if (per_view) (*per_view)[k] = l;
    total += l;
  }
  return total;
}

inline LossAndGradient loss_and_gradient(const SceneLatent& latent, const TtoProblem& prob, bool want_opacity = false) {
  LossAndGradient out;
  out.grad = RenderGradient(latent.size());
  out.precond.assign(latent.size(), 0.0);
  out.per_view.assign(prob.size(), 0.0);
  for (std::size_t k = 0; k < prob.size(); ++k) {
    const ImageD& target = prob.targets[k];
    const auto frame = render(latent, prob.K[k], prob.E[k], target.width, target.height, prob.splat);
    out.per_view[k] = photometric_term(frame.rgb, target, prob.weights);
    out.loss += out.per_view[k];
    const ImageD g = photometric_gradient(frame.rgb, target, prob.weights);
    RenderGradient gk(latent.size());
    render_backward(latent, prob.K[k], prob.E[k], frame, g, gk, want_opacity, prob.splat);
    const double norm = 1.0 / (3.0 * static_cast<double>(target.pixel_count()));
    for (std::size_t n = 0; n < latent.size(); ++n) {
      out.grad.color[n] += gk.color[n];
      out.grad.opacity[n] += gk.opacity[n];
      out.grad.mass[n] += gk.mass[n];
      out.precond[n] += gk.mass[n] * norm;
    }
  }
  return out;
}

struct TtoResult {
  SceneLatent latent;
  std::vector<double> losses;  // initial loss, then one entry per accepted step
  int steps_taken = 0;
};

inline void check_finite_losses(const std::vector<double>& per_view, int step) {
  for (std::size_t k = 0; k < per_view.size(); ++k)
    if (!std::isfinite(per_view[k]))
      throw Error("test_time_optimize: non-finite loss at step " + std::to_string(step) + ", view " +
                  std::to_string(k));
}

inline TtoResult test_time_optimize(const SceneLatent& latent, const TtoProblem& prob, const TtoConfig& cfg) {
  TtoResult res;
  res.latent = latent;
  if (latent.empty() || cfg.steps <= 0) {
    res.losses.push_back(evaluate_loss(latent, prob));
    return res;
  }
  constexpr double kOpacityMin = 1e-3, kOpacityMax = 0.99;
  if (cfg.optimize_opacity)
    for (auto& a : res.latent.attrs) a.opacity = std::clamp(a.opacity, kOpacityMin, kOpacityMax);

  for (int step = 0; step < cfg.steps; ++step) {
    const LossAndGradient lg = loss_and_gradient(res.latent, prob, cfg.optimize_opacity);
    check_finite_losses(lg.per_view, step);
    if (step == 0) res.losses.push_back(lg.loss);
    const std::size_t n = res.latent.size();
    std::vector<Color> dir(n);
    std::vector<double> dir_op(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 1.0;
      if (cfg.preconditioned) s = lg.precond[i] > 1e-300 ? 1.0 / lg.precond[i] : 0.0;
      dir[i] = s * lg.grad.color[i];
      if (cfg.optimize_opacity) dir_op[i] = s * lg.grad.opacity[i];
    }
    auto apply = [&](double t) {
      SceneLatent cand = res.latent;
      for (std::size_t i = 0; i < n; ++i) {
        cand.attrs[i].color = (cand.attrs[i].color - t * dir[i]).cwiseMax(0.0).cwiseMin(1.0);
        if (cfg.optimize_opacity)
          cand.attrs[i].opacity = std::clamp(cand.attrs[i].opacity - t * dir_op[i], kOpacityMin, kOpacityMax);
      }
      return cand;
    };
    double t = cfg.lr;
    bool accepted = false;
    for (int h = 0; h <= (cfg.line_search ? cfg.max_halvings : 0); ++h, t *= 0.5) {
      SceneLatent cand = apply(t);
      std::vector<double> per_view;
      const double l = evaluate_loss(cand, prob, &per_view);
      check_finite_losses(per_view, step);
      if (!cfg.line_search || l <= lg.loss) {
        res.latent = std::move(cand);
        res.losses.push_back(l);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      log_debug("tto.line_search_exhausted", {{"step", step}});
      break;
    }
    ++res.steps_taken;
  }
  return res;
}

inline TtoResult test_time_optimize(const SceneLatent& latent, const ViewSet& views, const TtoConfig& cfg) {
  return test_time_optimize(latent, make_tto_problem(views, cfg), cfg);
}

}  // namespace evoscene
