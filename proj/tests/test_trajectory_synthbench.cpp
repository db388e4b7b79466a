// Copyright 2026 The EvoScene Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "evoscene/oracle.hpp"
#include "evoscene/synthbench.hpp"
#include "evoscene/trajectory.hpp"

namespace evoscene {
namespace {

const std::filesystem::path kScenes = std::filesystem::path(EVOSCENE_SOURCE_DIR) / "bench" / "scenes";

OrbitSpec orbit_of(const Vec3& eye, const Vec3& center, double a0, double a1, int N, double radius = 0.0) {
  OrbitSpec s;
  s.center = center;
  s.base = CameraPose::look_at(eye, center);
  s.radius = radius;
  s.a0 = a0;
  s.a1 = a1;
  s.N = N;
  return s;
}

// ---------------------------------------------------------------------------
// Orbits

TEST(Orbit, LinearlySpacedAzimuths) {
  const auto f = orbital_trajectory(orbit_of({0, 1, -3}, Vec3::Zero(), 0, 45, 3));
  ASSERT_EQ(f.size(), 3u);
  EXPECT_EQ(f[0].azimuth_deg, 0.0);
  EXPECT_EQ(f[1].azimuth_deg, 22.5);
  EXPECT_EQ(f[2].azimuth_deg, 45.0);
  EXPECT_EQ(orbital_trajectory(OrbitSpec{.base = CameraPose::look_at({0, 0, -2}, Vec3::Zero())}).size(), 121u);
}

TEST(Orbit, FrameZeroIsTheSeedPose) {
  const auto s = orbit_of({0.3, 0.9, -2.6}, Vec3(0.1, 0, 0.2), 0, -45, 7);
  const auto f = orbital_trajectory(s);
  EXPECT_LT((f[0].pose.rotation - s.base.rotation).norm(), 1e-9);
  EXPECT_LT((f[0].pose.translation - s.base.translation).norm(), 1e-9);
}

TEST(Orbit, CircleConstraintAndLookAt) {
  const Vec3 c(0.2, -0.1, 0.4), eye(1.0, 1.1, -2.0);
  const auto K = CameraIntrinsics::from_fov(64, 48, 50);
  for (double radius : {0.0, 1.7}) {
    const auto s = orbit_of(eye, c, 0, 45, 121, radius);
    const double expect_r = radius > 0 ? radius : (eye - c).norm();
    const double elevation = eye.y() - c.y();
    for (const auto& fr : orbital_trajectory(s)) {
      const Vec3 p = fr.pose.center();
      EXPECT_NEAR((p - c).norm(), expect_r, 1e-9);
      if (radius == 0.0) { EXPECT_NEAR(p.y() - c.y(), elevation, 1e-9); }
      EXPECT_LT((fr.pose.rotation.transpose() * fr.pose.rotation - Mat3::Identity()).norm(), 1e-9);
      EXPECT_NEAR(fr.pose.rotation.determinant(), 1.0, 1e-9);
      // Center projects to the principal point: every frame looks at it.
      const auto pr = project(c, K, fr.pose);
      ASSERT_TRUE(pr);
      EXPECT_NEAR(pr->pixel.x(), K.cx, 1e-6);
      EXPECT_NEAR(pr->pixel.y(), K.cy, 1e-6);
      // Up stays world +Y: the camera's x axis is horizontal.
      EXPECT_NEAR(fr.pose.rotation.row(0).y(), 0.0, 1e-9);
    }
  }
}

TEST(Orbit, AzimuthIsARotationAboutVerticalAxis) {
  const Vec3 c = Vec3::Zero();
  const auto f = orbital_trajectory(orbit_of({0, 0.5, -2}, c, 0, 90, 3));
  const Vec3 p0 = f[0].pose.center(), p2 = f[2].pose.center();
  EXPECT_NEAR(p0.dot(p2) - p0.y() * p2.y(), 0.0, 1e-9);  // horizontal parts orthogonal
  EXPECT_LT((yaw_rotation(90) * p0 - p2).norm(), 1e-9);
}

TEST(Orbit, SeedViewAnchoring) {
  // The seed camera need not aim at the orbit center; frame 0 still
  // re-projects the center to the seed's pixel.
  const auto K = CameraIntrinsics::from_fov(96, 96, 50);
  OrbitSpec s;
  s.center = Vec3(0.3, -0.2, 0.1);
  s.base = CameraPose::look_at({0, 0.9, -2.6}, Vec3::Zero());
  s.a1 = 45;
  const auto f = orbital_trajectory(s);
  const auto a = project(s.center, K, s.base), b = project(s.center, K, f[0].pose);
  ASSERT_TRUE(a && b);
  EXPECT_LE((a->pixel - b->pixel).norm(), 0.5);
}

TEST(Orbit, RejectsInvalidSpecs) {
  auto s = orbit_of({0, 0, -2}, Vec3::Zero(), 0, 45, 1);
  EXPECT_THROW(orbital_trajectory(s), Error);
  s = orbit_of({0, 0, -2}, Vec3::Zero(), 0, 45, 5, 1.0);
  s.base.translation = -s.base.rotation * s.center;  // camera at the center
  EXPECT_THROW(orbital_trajectory(s), Error);
}

TEST(Orbit, JsonRoundTripIsExact) {
  const auto f = orbital_trajectory(orbit_of({0.4, 0.8, -2.2}, Vec3(0.1, 0, 0), 0, -45, 9));
  const auto back = trajectory_from_json(nlohmann::json::parse(trajectory_to_json(f).dump()));
  ASSERT_EQ(back.size(), f.size());
  for (std::size_t k = 0; k < f.size(); ++k) {
    EXPECT_EQ(back[k].azimuth_deg, f[k].azimuth_deg);
    EXPECT_EQ(back[k].pose, f[k].pose);
  }
  // Without "translation" the pose comes back from the position.
  auto j = trajectory_to_json(f);
  for (auto& e : j) e.erase("translation");
  const auto approx = trajectory_from_json(j);
  for (std::size_t k = 0; k < f.size(); ++k)
    EXPECT_LT((approx[k].pose.translation - f[k].pose.translation).norm(), 1e-12);
}

// ---------------------------------------------------------------------------
// Schedule

TEST(Schedule, DefaultAlternation) {
  EXPECT_EQ(iteration_schedule(1), (AzimuthRange{0, 45}));
  EXPECT_EQ(iteration_schedule(2), (AzimuthRange{0, -45}));
  EXPECT_EQ(iteration_schedule(3), (AzimuthRange{0, 45}));
  EXPECT_EQ(iteration_schedule(2, 30), (AzimuthRange{0, -30}));
  for (int t = 1; t < 10; ++t) {
    const auto r = iteration_schedule(t);
    EXPECT_EQ(r.a1 - r.a0 > 0, t % 2 == 1) << t;
  }
  EXPECT_THROW(iteration_schedule(0), Error);
}

TEST(Schedule, ConfiguredTableTakesPrecedence) {
  const std::vector<AzimuthRange> table{{0, 30}, {0, -30}, {-10, 60}};
  EXPECT_EQ(iteration_schedule(3, 45, table), (AzimuthRange{-10, 60}));
  EXPECT_EQ(iteration_schedule(4, 45, table), (AzimuthRange{0, -45}));
}

// ---------------------------------------------------------------------------
// Ground truth rendering

TEST(RenderGt, FrontalPlaneCheckerPhase) {
  const double z0 = 2.0, cell = 0.25;
  const auto spec = scene_from_json(
      {{"primitives",
        {{{"kind", "plane"}, {"center", {0, 0, z0}}, {"size", {4, 4}}, {"normal", {0, 0, -1}},
          {"texture", {{"type", "checker"}, {"cell", cell}, {"colors", {{1, 0, 0}, {0, 0, 1}}}}}}}},
       {"camera", {{"width", 40}, {"height", 40}, {"hfov_deg", 60}, {"eye", {0, 0, 0}}, {"target", {0, 0, 1}}}}});
  const auto gt = render_gt(spec, spec.K, spec.E);
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x) {
      ASSERT_TRUE(gt.depth.valid(x, y));
      EXPECT_NEAR(gt.depth.at(x, y), z0, 1e-12);
      const Vec3 p = unproject(x, y, z0, spec.K, spec.E);
      // Plane tangent axes are (-x, +y) for a -z normal with +y up.
      const long parity = static_cast<long>(std::floor(-p.x() / cell)) + static_cast<long>(std::floor(p.y() / cell));
      const Color c = gt.image.pixel(x, y);
      if (parity & 1)
        EXPECT_GT(c.z(), c.x()) << x << "," << y;
      else
        EXPECT_GT(c.x(), c.z()) << x << "," << y;
    }
}

TEST(RenderGt, BoxCornerMatchesSlabOracle) {
  const auto spec = scene_from_json(
      {{"primitives", {{{"kind", "box"}, {"center", {0, 0, 0}}, {"size", {1, 1, 1}}}}},
       {"camera", {{"width", 64}, {"height", 64}, {"hfov_deg", 50}, {"eye", {1.6, 1.4, -1.8}}, {"target", {0, 0, 0}}}}});
  const auto gt = render_gt(spec, spec.K, spec.E);
  const Vec3 o = spec.E.center();
  std::set<int> faces;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const Vec3 d = pixel_ray(x, y, spec.K, spec.E);
      double t_in = -1e300, t_out = 1e300;
      int face = -1;
      for (int a = 0; a < 3; ++a) {
        const double t1 = (-0.5 - o[a]) / d[a], t2 = (0.5 - o[a]) / d[a];
        const double lo = std::min(t1, t2), hi = std::max(t1, t2);
        if (lo > t_in) {
          t_in = lo;
          face = a * 2 + (t1 < t2 ? 0 : 1);  // 2a: -axis face, 2a+1: +axis face
        }
        t_out = std::min(t_out, hi);
      }
      const bool hit = t_in <= t_out && t_in > 0;
      ASSERT_EQ(gt.depth.valid(x, y), hit) << x << "," << y;
      if (!hit) continue;
      EXPECT_NEAR(gt.depth.at(x, y), t_in, 1e-9);
      faces.insert(face);
      const Vec3 p = unproject(x, y, gt.depth.at(x, y), spec.K, spec.E);
      EXPECT_NEAR(std::abs(p[face / 2]), 0.5, 1e-9);
    }
  EXPECT_EQ(faces, (std::set<int>{1, 3, 4}));  // +x, +y, -z
}

TEST(RenderGt, BackProjectedDepthLiesOnSurfaces) {
  for (const auto& entry : std::filesystem::directory_iterator(kScenes)) {
    const auto spec = load_scene(entry.path());
    const auto gt = render_gt(spec, spec.K, spec.E);
    const auto pts = back_project(gt.depth, spec.K, spec.E);
    ASSERT_FALSE(pts.empty()) << entry.path();
    double worst = 0.0;
    for (const auto& p : pts) worst = std::max(worst, scene_surface_distance(spec, p.position));
    EXPECT_LT(worst, 1e-9) << spec.name;
  }
}

TEST(RenderGt, Deterministic) {
  const auto spec = load_scene(kScenes / "ground_box.json");
  const auto a = render_gt(spec, spec.K, spec.E), b = render_gt(spec, spec.K, spec.E);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.depth.values.size(), b.depth.values.size());
  EXPECT_EQ(std::memcmp(a.depth.values.data(), b.depth.values.data(), a.depth.values.size() * sizeof(double)), 0);
}

TEST(SceneSpec, Validation) {
  EXPECT_THROW(scene_from_json({{"primitives", nlohmann::json::array()},
                                {"camera", {{"width", 8}, {"height", 8}, {"hfov_deg", 50}, {"eye", {0, 0, -2}}, {"target", {0, 0, 0}}}}}),
               Error);
  EXPECT_THROW(scene_from_json({{"primitives", {{{"kind", "sphere"}, {"center", {6, 0, 0}}, {"radius", 0.5}}}},
                                {"camera", {{"width", 8}, {"height", 8}, {"hfov_deg", 50}, {"eye", {0, 0, -2}}, {"target", {0, 0, 0}}}}}),
               Error);
  std::size_t n = 0;
  for (const auto& entry : std::filesystem::directory_iterator(kScenes)) {
    EXPECT_NO_THROW(load_scene(entry.path())) << entry.path();
    ++n;
  }
  EXPECT_EQ(n, 8u);
}

// ---------------------------------------------------------------------------
// Oracle backends

TEST(OracleDepth, NoiselessIsExactAndNoiseIsSeeded) {
  const auto spec = load_scene(kScenes / "sphere.json");
  DepthRequest req;
  req.view_id = "seed";
  req.image = render_gt(spec, spec.K, spec.E).image;
  OracleDepth exact(spec);
  const auto r = exact.estimate(req);
  const auto gt = render_gt(spec, spec.K, spec.E).depth;
  EXPECT_EQ(r.depth.mask, gt.mask);
  for (std::size_t i = 0; i < gt.values.size(); ++i)
    if (gt.mask[i]) { EXPECT_EQ(r.depth.values[i], gt.values[i]); }

  OracleDepth n1(spec, 0.05, 7), n2(spec, 0.05, 7), n3(spec, 0.05, 8);
  const auto a = n1.estimate(req), b = n2.estimate(req), c = n3.estimate(req);
  double diff = 0.0, sq = 0.0;
  std::size_t cnt = 0;
  for (std::size_t i = 0; i < gt.values.size(); ++i)
    if (gt.mask[i]) {
      EXPECT_EQ(a.depth.values[i], b.depth.values[i]);
      diff += std::abs(a.depth.values[i] - c.depth.values[i]);
      sq += std::pow(a.depth.values[i] - gt.values[i], 2);
      ++cnt;
    }
  EXPECT_GT(diff, 0.0);
  EXPECT_NEAR(std::sqrt(sq / cnt), 0.05, 0.005);
}

TEST(OracleSynthesizer, RendersTrajectoryAndInjectsFirstFrame) {
  const auto spec = load_scene(kScenes / "box.json");
  SynthesisRequest req;
  req.K = spec.K;
  req.seed_image = Image(spec.K.width, spec.K.height, 0.25f);
  req.inject_first_frame = true;
  OrbitSpec o;
  o.base = spec.E;
  o.N = 4;
  req.trajectory = orbital_trajectory(o);
  OracleSynthesizer syn(spec);
  const auto res = syn.synthesize(req);
  ASSERT_EQ(res.frames.size(), 4u);
  EXPECT_EQ(res.frames[0], req.seed_image);
  EXPECT_EQ(res.frames[3], render_gt(spec, spec.K, req.trajectory[3].pose).image);
}

// ---------------------------------------------------------------------------
// Metrics

TEST(Reference, PoissonSamplesOnVisibleSurface) {
  const auto spec = load_scene(kScenes / "ground_box.json");
  const auto s = reference_samples(spec, 4000, 3);
  EXPECT_EQ(s.size(), 4000u);
  EXPECT_EQ(s, reference_samples(spec, 4000, 3));
  double area = 0.0;
  for (const auto& p : spec.primitives) area += p.area();
  const double r = 0.7 * std::sqrt(area / 4000);
  const PointIndex idx(s, r);
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_LT(scene_surface_distance(spec, s[i]), 1e-9);
    // No sample on the box's bottom, which rests on the ground.
    EXPECT_FALSE(spec.primitives[1].contains_or_touches(s[i], 1e-6) && spec.primitives[0].contains_or_touches(s[i], 1e-6));
  }
  // Minimum spacing: brute force over a subset.
  for (std::size_t i = 0; i < 300; ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (i != j) { ASSERT_GE((s[i] - s[j]).norm(), r) << i << " " << j; }
}

TEST(Coverage, SelfComparison) {
  const auto spec = load_scene(kScenes / "box_sphere.json");
  const auto ref = reference_samples(spec, 5000);
  EXPECT_EQ(coverage_fraction(ref, ref, 1e-6), 1.0);
  EXPECT_EQ(chamfer_distance(ref, ref), 0.0);
  // An independent dense sampling of the same surface is close in chamfer.
  const auto other = reference_samples(spec, 5000, 99);
  EXPECT_LT(chamfer_distance(other, ref), 0.05);
  EXPECT_EQ(coverage_fraction({}, ref, 0.1), 0.0);
  EXPECT_THROW(coverage_fraction(ref, {}, 0.1), Error);
}

TEST(Coverage, FrontalBoxMatchesVisibleArea) {
  const auto spec = load_scene(kScenes / "box.json");
  // Dense frontal reconstruction: back-projected ground truth at 4x the
  // seed resolution.
  const auto K = spec.K.scaled_to(4 * spec.K.width, 4 * spec.K.height);
  const auto gt = render_gt(spec, K, spec.E);
  std::vector<Vec3> recon;
  for (const auto& p : back_project(gt.depth, K, spec.E)) recon.push_back(p.position);
  const auto ref = reference_samples(spec, 10000);
  // Visible-area oracle: a reference sample is visible if the ray from the
  // camera reaches it unobstructed and it is in frame.
  const Vec3 o = spec.E.center();
  std::size_t visible = 0;
  for (const auto& p : ref) {
    const auto pr = project(p, spec.K, spec.E);
    if (!pr || pr->pixel.x() < -0.5 || pr->pixel.y() < -0.5 || pr->pixel.x() > spec.K.width - 0.5 ||
        pr->pixel.y() > spec.K.height - 0.5)
      continue;
    const auto h = spec.cast(o, p - o);
    if (h && h->t > 1.0 - 1e-9) ++visible;
  }
  const double vis = static_cast<double>(visible) / ref.size();
  const double cov = coverage_fraction(recon, ref, 0.02);
  EXPECT_LE(cov, 0.55);
  EXPECT_NEAR(cov, vis, 0.03);
  // Front and top faces: two of six unit faces.
  EXPECT_NEAR(vis, 2.0 / 6.0, 0.02);
}

TEST(Chamfer, KnownOffset) {
  std::vector<Vec3> a, b;
  for (int i = 0; i < 50; ++i)
    for (int j = 0; j < 50; ++j) {
      a.emplace_back(i * 0.02, j * 0.02, 0.0);
      b.emplace_back(i * 0.02, j * 0.02, 0.01);
    }
  EXPECT_NEAR(chamfer_distance(a, b), 0.01, 1e-12);
  EXPECT_TRUE(std::isinf(chamfer_distance({}, b)));
}

TEST(SampleMesh, AreaUniformOnSurface) {
  TexturedMesh m;
  m.vertices = {Eigen::Vector3f(0, 0, 0), Eigen::Vector3f(1, 0, 0), Eigen::Vector3f(0, 1, 0),
                Eigen::Vector3f(0, 0, 1), Eigen::Vector3f(3, 0, 1), Eigen::Vector3f(0, 3, 1)};
  m.triangles = {{0, 1, 2}, {3, 4, 5}};  // areas 0.5 and 4.5
  const auto s = sample_mesh(m, 20000, 1);
  ASSERT_EQ(s.size(), 20000u);
  std::size_t upper = 0;
  for (const auto& p : s) {
    EXPECT_TRUE(p.z() == 0.0 || std::abs(p.z() - 1.0) < 1e-6);
    EXPECT_LE(p.x() + p.y(), (p.z() > 0.5 ? 3.0 : 1.0) + 1e-6);
    upper += p.z() > 0.5;
  }
  EXPECT_NEAR(static_cast<double>(upper) / s.size(), 0.9, 0.01);
  EXPECT_EQ(s, sample_mesh(m, 20000, 1));
}

}  // namespace
}  // namespace evoscene
