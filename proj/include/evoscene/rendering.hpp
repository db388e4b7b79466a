// Copyright 2026 The EvoScene Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Differentiable splat rendering of a SceneLatent, exact ray-cast depth of a
// mesh, disparity conditioning maps, and the L1 / SSIM photometric losses.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "evoscene/errors.hpp"
#include "evoscene/geometry.hpp"
#include "evoscene/image.hpp"
#include "evoscene/latent.hpp"
#include "evoscene/mesh.hpp"

namespace evoscene {

struct SplatOptions {
  Color background = Color::Zero();
  // Screen-space standard deviation is sigma_factor * f * scale / depth,
  // floored at min_sigma_px.
  double sigma_factor = 0.5;
  double min_sigma_px = 0.35;
  double cutoff_sigmas = 3.0;
};

struct RenderedFrame {
  ImageD rgb;
  std::vector<double> alpha;  // per pixel, [0,1]
  std::vector<double> depth;  // alpha-weighted splat depth; +inf where alpha == 0

  int width() const { return rgb.width; }
  int height() const { return rgb.height; }
};

namespace detail {

struct Splat {
  double u, v;   // projected center, pixels
  double depth;  // camera Z
  double sigma;  // pixels
  std::uint32_t slot;  // index into the latent
};

// Projected splats ordered front to back; equal depths resolve by voxel
// index. Compositing front to back with transmittance is the same operator
// as back-to-front "over".
inline std::vector<Splat> prepare_splats(const SceneLatent& latent, const CameraIntrinsics& K, const CameraPose& E,
                                         const SplatOptions& opt) {
  std::vector<Splat> splats;
  splats.reserve(latent.size());
  const double f = 0.5 * (K.fx + K.fy);
  for (std::size_t n = 0; n < latent.size(); ++n) {
    const auto p = project(latent.center(n), K, E);
    if (!p || p->depth < 1e-6) continue;
    const double sigma = std::max(opt.sigma_factor * f * latent.attrs[n].scale / p->depth, opt.min_sigma_px);
    splats.push_back({p->pixel.x(), p->pixel.y(), p->depth, sigma, static_cast<std::uint32_t>(n)});
  }
  std::sort(splats.begin(), splats.end(), [&](const Splat& a, const Splat& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    return latent.voxels[a.slot] < latent.voxels[b.slot];
  });
  return splats;
}

// Calls fn(pixel_index, splat, gaussian, alpha, transmittance_before) for
// every splat/pixel pair in compositing order, updating transmittance.
template <typename Fn>
void composite(const std::vector<Splat>& splats, const SceneLatent& latent, int width, int height,
               const SplatOptions& opt, std::vector<double>& trans, Fn&& fn) {
  for (const Splat& s : splats) {
    const double r = opt.cutoff_sigmas * s.sigma;
    const int x0 = std::max(0, static_cast<int>(std::ceil(s.u - r)));
    const int x1 = std::min(width - 1, static_cast<int>(std::floor(s.u + r)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(s.v - r)));
    const int y1 = std::min(height - 1, static_cast<int>(std::floor(s.v + r)));
    if (x0 > x1 || y0 > y1) continue;
    const double opacity = latent.attrs[s.slot].opacity;
    const double inv2s2 = 1.0 / (2.0 * s.sigma * s.sigma);
    const double r2 = r * r;
    for (int y = y0; y <= y1; ++y) {
      const double dy = y - s.v;
      for (int x = x0; x <= x1; ++x) {
        const double dx = x - s.u;
        const double d2 = dx * dx + dy * dy;
        if (d2 > r2) continue;
        const double g = std::exp(-d2 * inv2s2);
        const double a = opacity * g;
        const std::size_t p = static_cast<std::size_t>(y) * width + x;
        const double T = trans[p];
        fn(p, s, g, a, T);
        trans[p] = T * (1.0 - a);
      }
    }
  }
}

}  // namespace detail

inline RenderedFrame render(const SceneLatent& latent, const CameraIntrinsics& K, const CameraPose& E, int width,
                            int height, const SplatOptions& opt = {}) {
  if (width <= 0 || height <= 0) throw Error("render: zero-size image");
  const std::size_t n = static_cast<std::size_t>(width) * height;
  RenderedFrame out;
  out.rgb = ImageD(width, height, 0.0);
  out.alpha.assign(n, 0.0);
  out.depth.assign(n, 0.0);
  std::vector<double> trans(n, 1.0);
  const auto splats = detail::prepare_splats(latent, K, E, opt);
  detail::composite(splats, latent, width, height, opt, trans,
                    [&](std::size_t p, const detail::Splat& s, double, double a, double T) {
                      const double w = a * T;
                      const Color& c = latent.attrs[s.slot].color;
                      for (int k = 0; k < 3; ++k) out.rgb.data[p * 3 + k] += w * c[k];
                      out.depth[p] += w * s.depth;
                    });
  for (std::size_t p = 0; p < n; ++p) {
    for (int k = 0; k < 3; ++k) out.rgb.data[p * 3 + k] += trans[p] * opt.background[k];
    out.alpha[p] = 1.0 - trans[p];
    out.depth[p] = out.alpha[p] > 0.0 ? out.depth[p] / out.alpha[p] : std::numeric_limits<double>::infinity();
  }
  return out;
}

// Gradient accumulators, one entry per latent voxel.
struct RenderGradient {
  std::vector<Color> color;
  std::vector<double> opacity;
  std::vector<double> mass;  // total compositing weight, summed over pixels

  explicit RenderGradient(std::size_t n = 0) : color(n, Color::Zero()), opacity(n, 0.0), mass(n, 0.0) {}
};

// Back-propagates dL/d(rgb) of one rendered frame into per-voxel gradients.
// With geometry fixed, each pixel is affine in voxel colors and
// d pixel / d color_i is the compositing weight of splat i at that pixel.
inline void render_backward(const SceneLatent& latent, const CameraIntrinsics& K, const CameraPose& E,
                            const RenderedFrame& frame, const ImageD& grad_rgb, RenderGradient& grad,
                            bool want_opacity = false, const SplatOptions& opt = {}) {
  const int width = frame.width();
  const int height = frame.height();
  if (grad_rgb.width != width || grad_rgb.height != height) throw Error("render_backward: gradient size mismatch");
  const std::size_t n = static_cast<std::size_t>(width) * height;
  std::vector<double> trans(n, 1.0);
  std::vector<double> running;
  if (want_opacity) running.assign(n * 3, 0.0);
  const auto splats = detail::prepare_splats(latent, K, E, opt);
  detail::composite(splats, latent, width, height, opt, trans,
                    [&](std::size_t p, const detail::Splat& s, double g, double a, double T) {
                      const double w = a * T;
                      const Color& c = latent.attrs[s.slot].color;
                      const double* gp = &grad_rgb.data[p * 3];
                      for (int k = 0; k < 3; ++k) grad.color[s.slot][k] += w * gp[k];
                      grad.mass[s.slot] += w;
                      if (!want_opacity) return;
                      // dC/da = T c - (contribution behind this splat) / (1 - a)
                      double dl_da = 0.0;
                      for (int k = 0; k < 3; ++k) {
                        running[p * 3 + k] += w * c[k];
                        const double behind = frame.rgb.data[p * 3 + k] - running[p * 3 + k];
                        const double dC = T * c[k] - (1.0 - a > 1e-12 ? behind / (1.0 - a) : 0.0);
                        dl_da += gp[k] * dC;
                      }
                      grad.opacity[s.slot] += dl_da * g;
                    });
}

// ---------------------------------------------------------------------------
// Mesh depth

// Moller-Trumbore. Returns the ray parameter of the hit or nullopt.
inline std::optional<double> intersect_triangle(const Vec3& o, const Vec3& d, const Vec3& a, const Vec3& b,
                                                const Vec3& c) {
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 pv = d.cross(e2);
  const double det = e1.dot(pv);
  if (std::abs(det) < 1e-300) return std::nullopt;
  const double inv = 1.0 / det;
  const Vec3 tv = o - a;
  const double u = tv.dot(pv) * inv;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 qv = tv.cross(e1);
  const double v = d.dot(qv) * inv;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = e2.dot(qv) * inv;
  if (!(t > 0.0)) return std::nullopt;
  return t;
}

// Nearest-hit depth per pixel. Each triangle is tested only against the
// pixels of its projected bounding box (the whole frame when it crosses the
// camera plane); misses are invalid.
inline DepthMap render_depth(const TexturedMesh& mesh, const CameraIntrinsics& K, const CameraPose& E, int width,
                             int height) {
  DepthMap d(width, height);
  std::vector<double> best(static_cast<std::size_t>(width) * height, std::numeric_limits<double>::infinity());
  const Vec3 o = E.center();
  for (const auto& tri : mesh.triangles) {
    const Vec3 a = mesh.vertices[tri[0]].cast<double>();
    const Vec3 b = mesh.vertices[tri[1]].cast<double>();
    const Vec3 c = mesh.vertices[tri[2]].cast<double>();
    int x0 = 0, y0 = 0, x1 = width - 1, y1 = height - 1;
    const auto pa = project(a, K, E), pb = project(b, K, E), pc = project(c, K, E);
    if (pa && pb && pc) {
      x0 = std::max(x0, static_cast<int>(std::floor(std::min({pa->pixel.x(), pb->pixel.x(), pc->pixel.x()}))));
      x1 = std::min(x1, static_cast<int>(std::ceil(std::max({pa->pixel.x(), pb->pixel.x(), pc->pixel.x()}))));
      y0 = std::max(y0, static_cast<int>(std::floor(std::min({pa->pixel.y(), pb->pixel.y(), pc->pixel.y()}))));
      y1 = std::min(y1, static_cast<int>(std::ceil(std::max({pa->pixel.y(), pb->pixel.y(), pc->pixel.y()}))));
    } else if (!pa && !pb && !pc) {
      continue;
    }
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const auto t = intersect_triangle(o, pixel_ray(x, y, K, E), a, b, c);
        const std::size_t p = static_cast<std::size_t>(y) * width + x;
        if (t && *t < best[p]) best[p] = *t;
      }
  }
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const double t = best[static_cast<std::size_t>(y) * width + x];
      if (std::isfinite(t)) d.set(x, y, t);
    }
  return d;
}

// ---------------------------------------------------------------------------
// Disparity

// raw = 1/depth, normalized = (raw - min) / (max - min) over valid pixels.
// A constant map normalizes to 1 everywhere valid.
inline DisparityMap to_disparity(const DepthMap& d) {
  DisparityMap out{d.width, d.height, std::vector<double>(d.values.size(), 0.0),
                   std::vector<double>(d.values.size(), 0.0)};
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    if (!d.mask[i]) continue;
    out.raw[i] = 1.0 / d.values[i];
    lo = std::min(lo, out.raw[i]);
    hi = std::max(hi, out.raw[i]);
  }
  if (!(lo <= hi)) throw Error("to_disparity: no valid pixel");
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    if (!d.mask[i]) continue;
    out.normalized[i] = hi > lo ? (out.raw[i] - lo) / (hi - lo) : 1.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses

template <typename A, typename B>
void check_same_size(const BasicImage<A>& a, const BasicImage<B>& b) {
  if (a.width != b.width || a.height != b.height) throw Error("image size mismatch");
}

// Mean absolute difference over all pixels and channels.
template <typename A, typename B>
double loss_l1(const BasicImage<A>& a, const BasicImage<B>& b) {
  check_same_size(a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) acc += std::abs(double(a.data[i]) - double(b.data[i]));
  return a.data.empty() ? 0.0 : acc / static_cast<double>(a.data.size());
}

template <typename A, typename B>
ImageD loss_l1_gradient(const BasicImage<A>& a, const BasicImage<B>& b) {
  check_same_size(a, b);
  ImageD g(a.width, a.height, 0.0);
  const double scale = 1.0 / static_cast<double>(std::max<std::size_t>(a.data.size(), 1));
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = double(a.data[i]) - double(b.data[i]);
    g.data[i] = d > 0 ? scale : (d < 0 ? -scale : 0.0);
  }
  return g;
}

namespace detail {

struct SsimConstants {
  static constexpr int kRadius = 5;  // 11x11 window
  static constexpr double kSigma = 1.5;
  static constexpr double kC1 = 0.01 * 0.01;
  static constexpr double kC2 = 0.03 * 0.03;

  static const std::array<double, 2 * kRadius + 1>& taps() {
    static const auto t = [] {
      std::array<double, 2 * kRadius + 1> w{};
      for (int i = -kRadius; i <= kRadius; ++i) w[i + kRadius] = std::exp(-(i * i) / (2.0 * kSigma * kSigma));
      return w;
    }();
    return t;
  }
};

// Sum of in-bounds window taps around each coordinate along one axis.
inline std::vector<double> window_mass(int n) {
  const auto& w = SsimConstants::taps();
  const int R = SsimConstants::kRadius;
  std::vector<double> m(n, 0.0);
  for (int i = 0; i < n; ++i)
    for (int k = -R; k <= R; ++k)
      if (i + k >= 0 && i + k < n) m[i] += w[k + R];
  return m;
}

// Truncated (unnormalized) separable Gaussian correlation of one plane.
inline std::vector<double> gauss_filter(const std::vector<double>& in, int width, int height) {
  const auto& w = SsimConstants::taps();
  const int R = SsimConstants::kRadius;
  std::vector<double> tmp(in.size(), 0.0), out(in.size(), 0.0);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int k = std::max(-R, -x); k <= std::min(R, width - 1 - x); ++k)
        acc += w[k + R] * in[static_cast<std::size_t>(y) * width + x + k];
      tmp[static_cast<std::size_t>(y) * width + x] = acc;
    }
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int k = std::max(-R, -y); k <= std::min(R, height - 1 - y); ++k)
        acc += w[k + R] * tmp[static_cast<std::size_t>(y + k) * width + x];
      out[static_cast<std::size_t>(y) * width + x] = acc;
    }
  return out;
}

// Local statistics use the window renormalized over in-bounds pixels, so the
// index is defined for any image size, including ones smaller than 11x11.
struct SsimPlanes {
  int width, height;
  std::vector<double> norm;  // per-pixel window mass
  std::vector<double> mu_a, mu_b, e_aa, e_bb, e_ab;
};

inline SsimPlanes ssim_planes(const std::vector<double>& a, const std::vector<double>& b, int width, int height) {
  SsimPlanes s{width, height, {}, {}, {}, {}, {}, {}};
  const auto mx = window_mass(width), my = window_mass(height);
  s.norm.resize(a.size());
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) s.norm[static_cast<std::size_t>(y) * width + x] = mx[x] * my[y];
  auto local_mean = [&](const std::vector<double>& v) {
    auto f = gauss_filter(v, width, height);
    for (std::size_t i = 0; i < f.size(); ++i) f[i] /= s.norm[i];
    return f;
  };
  std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  s.mu_a = local_mean(a);
  s.mu_b = local_mean(b);
  s.e_aa = local_mean(aa);
  s.e_bb = local_mean(bb);
  s.e_ab = local_mean(ab);
  return s;
}

template <typename T>
std::vector<double> channel_plane(const BasicImage<T>& img, int c) {
  std::vector<double> p(img.pixel_count());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = double(img.data[i * 3 + c]);
  return p;
}

}  // namespace detail

// Mean local SSIM over pixels and channels: 11x11 Gaussian window, sigma
// 1.5, K1 = 0.01, K2 = 0.03, dynamic range 1.
template <typename A, typename B>
double ssim(const BasicImage<A>& a, const BasicImage<B>& b) {
  check_same_size(a, b);
  using C = detail::SsimConstants;
  double acc = 0.0;
  for (int c = 0; c < 3; ++c) {
    const auto s = detail::ssim_planes(detail::channel_plane(a, c), detail::channel_plane(b, c), a.width, a.height);
    for (std::size_t i = 0; i < s.mu_a.size(); ++i) {
      const double ma = s.mu_a[i], mb = s.mu_b[i];
      const double va = s.e_aa[i] - ma * ma, vb = s.e_bb[i] - mb * mb, cov = s.e_ab[i] - ma * mb;
      acc += ((2 * ma * mb + C::kC1) * (2 * cov + C::kC2)) / ((ma * ma + mb * mb + C::kC1) * (va + vb + C::kC2));
    }
  }
  return acc / (3.0 * static_cast<double>(a.pixel_count()));
}

template <typename A, typename B>
double loss_ssim(const BasicImage<A>& a, const BasicImage<B>& b) {
  return 1.0 - ssim(a, b);
}

// d ssim(a, b) / d a.
template <typename A, typename B>
ImageD ssim_gradient(const BasicImage<A>& a, const BasicImage<B>& b) {
  check_same_size(a, b);
  using C = detail::SsimConstants;
  const int W = a.width, H = a.height;
  const double inv_n = 1.0 / (3.0 * static_cast<double>(a.pixel_count()));
  ImageD grad(W, H, 0.0);
  for (int c = 0; c < 3; ++c) {
    const auto pa = detail::channel_plane(a, c);
    const auto pb = detail::channel_plane(b, c);
    const auto s = detail::ssim_planes(pa, pb, W, H);
    const std::size_t n = pa.size();
    // Partials of the local index with respect to mu_a, E[a^2], E[ab], each
    // pre-divided by the window mass so the transposed filter is a plain
    // truncated Gaussian.
    std::vector<double> d_mu(n), d_eaa(n), d_eab(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double ma = s.mu_a[i], mb = s.mu_b[i];
      const double va = s.e_aa[i] - ma * ma, vb = s.e_bb[i] - mb * mb, cov = s.e_ab[i] - ma * mb;
      const double A1 = 2 * ma * mb + C::kC1, A2 = 2 * cov + C::kC2;
      const double B1 = ma * ma + mb * mb + C::kC1, B2 = va + vb + C::kC2;
      const double S = (A1 * A2) / (B1 * B2);
      const double dmu = (2 * mb * A2 - 2 * mb * A1) / (B1 * B2) - S * (2 * ma / B1 - 2 * ma / B2);
      d_mu[i] = dmu / s.norm[i];
      d_eaa[i] = (-S / B2) / s.norm[i];
      d_eab[i] = (2 * A1 / (B1 * B2)) / s.norm[i];
    }
    const auto t_mu = detail::gauss_filter(d_mu, W, H);
    const auto t_eaa = detail::gauss_filter(d_eaa, W, H);
    const auto t_eab = detail::gauss_filter(d_eab, W, H);
    for (std::size_t i = 0; i < n; ++i)
      grad.data[i * 3 + c] = inv_n * (t_mu[i] + 2 * pa[i] * t_eaa[i] + pb[i] * t_eab[i]);
  }
  return grad;
}

// Loss weights: l1, lpips, ssim. The LPIPS term needs a pretrained network
// and is not evaluated natively; it must stay 0 here.
struct PhotometricWeights {
  double l1 = 1.0;
  double lpips = 0.0;
  double ssim = 1.0;

  void require_native() const {
    if (lpips != 0.0) throw Error("photometric loss: the LPIPS weight must be 0 without a remote loss backend");
  }
};

template <typename A, typename B>
double photometric_term(const BasicImage<A>& render, const BasicImage<B>& target, const PhotometricWeights& w) {
  double v = 0.0;
  if (w.l1 != 0.0) v += w.l1 * loss_l1(render, target);
  if (w.ssim != 0.0) v += w.ssim * loss_ssim(render, target);
  return v;
}

template <typename A, typename B>
ImageD photometric_gradient(const BasicImage<A>& render, const BasicImage<B>& target, const PhotometricWeights& w) {
  ImageD g(render.width, render.height, 0.0);
  if (w.l1 != 0.0) {
    const auto gl = loss_l1_gradient(render, target);
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += w.l1 * gl.data[i];
  }
  if (w.ssim != 0.0) {
    const auto gs = ssim_gradient(render, target);
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] -= w.ssim * gs.data[i];
  }
  return g;
}

// Sum over views of l1 * L1 + ssim * (1 - SSIM).
template <typename A, typename B>
double photometric_loss(const std::vector<BasicImage<A>>& frames, const std::vector<BasicImage<B>>& targets,
                        const PhotometricWeights& w) {
  w.require_native();
  if (frames.size() != targets.size()) throw Error("photometric_loss: frame/target count mismatch");
  double total = 0.0;
  for (std::size_t k = 0; k < frames.size(); ++k) total += photometric_term(frames[k], targets[k], w);
  return total;
}

}  // namespace evoscene
