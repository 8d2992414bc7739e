// Copyright 2026 The exdn Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "exdn/render.hpp"

using namespace exdn;

namespace {

RadianceFieldParams test_field(GridDims res = {8, 8, 8}, int n_frames = 1) {
  return make_field({{-1, -1, -1}, {1, 1, 1}}, res, {{-0.6, -0.6, -0.6}, {0.6, 0.6, 0.6}}, res,
                    n_frames);
}

void randomize(std::vector<float>& grid, Rng& rng, double lo = -2.5, double hi = 1.5) {
  std::uniform_real_distribution<double> u(lo, hi);
  for (float& v : grid) v = static_cast<float>(u(rng));
}

void fill_channel(std::vector<float>& grid, int channel, float value) {
  for (std::size_t v = 0; v * kChannelsPerVoxel < grid.size(); ++v)
    grid[v * kChannelsPerVoxel + channel] = value;
}

Ray axis_ray(double t_near = 4.0, double t_far = 6.0) {
  Ray r;
  r.origin = {0, 0, 5};
  r.direction = {0, 0, -1};
  r.t_near = t_near;
  r.t_far = t_far;
  r.frame = 1;
  return r;
}

std::vector<Ray> random_rays(const RadianceFieldParams& params, Rng& rng, int count) {
  std::uniform_real_distribution<double> pos(-0.9, 0.9);
  std::normal_distribution<double> dirn(0.0, 1.0);
  std::vector<Ray> rays;
  while (static_cast<int>(rays.size()) < count) {
    Ray r;
    r.origin = {pos(rng) * 3, pos(rng) * 3, pos(rng) * 3};
    Vec3 d{dirn(rng), dirn(rng), dirn(rng)};
    if (norm(d) < 1e-6) continue;
    r.direction = normalized(d);
    const auto hit = ray_box_intersect(r.origin, r.direction, params.bg_bounds);
    if (!hit || hit->second - hit->first < 0.3) continue;
    r.t_near = hit->first;
    r.t_far = hit->second;
    r.frame = 1;
    rays.push_back(r);
  }
  return rays;
}

// L = sum_r dot(weights_r, outputs_r): the exact functional backward_batch
// differentiates.
double batch_objective(const RadianceFieldParams& params, const std::vector<Ray>& rays,
                       RenderMode mode, int n_samples, bool stratified, std::uint64_t seed,
                       const std::vector<RayGradWeights>& w) {
  const RenderBatch b = forward_batch(params, rays, 1, mode, n_samples, stratified, seed);
  double sum = 0.0;
  for (std::size_t i = 0; i < b.outputs.size(); ++i) {
    sum += dot(w[i].d_color, b.outputs[i].color);
    sum += w[i].d_opacity * b.outputs[i].opacity;
    sum += w[i].d_fg_opacity * b.outputs[i].fg_opacity;
  }
  return sum;
}

struct FdCheck {
  double max_rel = 0;
  std::size_t checked = 0;
};

// Central finite differences over every parameter vs backward_batch.
FdCheck fd_check(RadianceFieldParams& params, const std::vector<Ray>& rays, RenderMode mode,
                 int n_samples, bool stratified, std::uint64_t seed,
                 const std::vector<RayGradWeights>& w, double h = 1e-3, double floor = 1e-5) {
  GradientAccumulator accum;
  accum.resize(params.total_param_count());
  const RenderBatch batch = forward_batch(params, rays, 1, mode, n_samples, stratified, seed);
  backward_batch(params, batch, w, accum);

  FdCheck out;
  for (std::size_t idx = 0; idx < params.total_param_count(); ++idx) {
    float& p = params.param(idx);
    const float saved = p;
    p = static_cast<float>(saved + h);
    const double up = batch_objective(params, rays, mode, n_samples, stratified, seed, w);
    p = static_cast<float>(saved - h);
    const double dn = batch_objective(params, rays, mode, n_samples, stratified, seed, w);
    p = saved;
    const double fd = (up - dn) / (static_cast<double>(static_cast<float>(saved + h)) -
                                   static_cast<double>(static_cast<float>(saved - h)));
    const double an = accum.value(idx);
    const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), floor});
    out.max_rel = std::max(out.max_rel, rel);
    ++out.checked;
  }
  return out;
}

}  // namespace

TEST_SUITE("render") {

TEST_CASE("march produces midpoints of equal bins") {
  SplitMix rng(0);
  Ray r = axis_ray(0.0, 1.0);
  const MarchSamples s = march(r, 4, false, rng);
  REQUIRE(s.t.size() == 4);
  CHECK(s.t[0] == doctest::Approx(0.125).epsilon(1e-12));
  CHECK(s.t[1] == doctest::Approx(0.375).epsilon(1e-12));
  CHECK(s.t[2] == doctest::Approx(0.625).epsilon(1e-12));
  CHECK(s.t[3] == doctest::Approx(0.875).epsilon(1e-12));
  for (double d : s.delta) CHECK(d == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("march stratified jitter is reproducible and stays in its bin") {
  Ray r = axis_ray(2.0, 3.0);
  SplitMix a(99), b(99);
  const MarchSamples sa = march(r, 16, true, a);
  const MarchSamples sb = march(r, 16, true, b);
  CHECK(sa.t == sb.t);
  const double width = 1.0 / 16.0;
  for (int i = 0; i < 16; ++i) {
    CHECK(sa.t[i] >= 2.0 + i * width);
    CHECK(sa.t[i] < 2.0 + (i + 1) * width);
  }
}

TEST_CASE("march segment lengths sum to the interval") {
  Rng rng(7);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  for (int i = 0; i < 50; ++i) {
    const double a = u(rng), len = u(rng) + 0.01;
    Ray r = axis_ray(a, a + len);
    SplitMix jit(i);
    const MarchSamples s = march(r, 2 + (i % 61), true, jit);
    double sum = 0;
    for (double d : s.delta) sum += d;
    CHECK(sum == doctest::Approx(len).epsilon(1e-9));
  }
}

TEST_CASE("march rejects empty intervals") {
  SplitMix rng(0);
  Ray miss = axis_ray();
  miss.t_near = 0;
  miss.t_far = -1;
  CHECK_THROWS_AS(march(miss, 8, false, rng), EmptyInterval);
  CHECK_THROWS_AS(march(axis_ray(), 1, false, rng), EmptyInterval);
}

TEST_CASE("empty space renders black with zero opacity") {
  RadianceFieldParams p = test_field();
  fill_channel(p.bg, 0, -40.0f);  // softplus(-40) ~ 0
  for (auto& g : p.fg) fill_channel(g, 0, -40.0f);
  SplitMix rng(0);
  const Ray r = axis_ray(4.0, 6.0);
  const RayRender out = render_ray(p, r, 1, RenderMode::kFull, march(r, 32, false, rng));
  CHECK(out.color.x == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(out.opacity == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(out.fg_opacity == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("constant optical depth ln 2 gives opacity one half") {
  RadianceFieldParams p = test_field();
  const double sigma = std::log(2.0) / 2.0;  // interval length 2 inside the box
  fill_channel(p.bg, 0, static_cast<float>(softplus_inv(sigma)));
  for (auto& g : p.fg) fill_channel(g, 0, -40.0f);
  SplitMix rng(0);
  Ray r = axis_ray();
  r.t_near = 4.0;
  r.t_far = 6.0;  // crosses the whole box: z from 1 to -1
  const RayRender out = render_ray(p, r, 1, RenderMode::kFull, march(r, 64, false, rng));
  CHECK(out.opacity == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("constant medium matches the closed-form solution") {
  RadianceFieldParams p = test_field();
  const double sigma = 1.3;
  const double raw_rgb[3] = {0.4, -0.9, 1.6};
  fill_channel(p.bg, 0, static_cast<float>(softplus_inv(sigma)));
  for (int c = 0; c < 3; ++c)
    fill_channel(p.bg, 1 + c, static_cast<float>(raw_rgb[c]));
  for (auto& g : p.fg) fill_channel(g, 0, -40.0f);

  SplitMix rng(0);
  Ray r = axis_ray(4.0, 6.0);
  const RayRender out = render_ray(p, r, 1, RenderMode::kFull, march(r, 512, false, rng));
  const double occ = 1.0 - std::exp(-sigma * 2.0);
  CHECK(out.opacity == doctest::Approx(occ).epsilon(1e-9));
  // Activation is applied after interpolation, so the medium color is the
  // activated constant and the emission integral has a closed form.
  const float sigma_f = static_cast<float>(softplus_inv(sigma));
  const double sig_back = softplus(static_cast<double>(sigma_f));
  const double occ_f = 1.0 - std::exp(-sig_back * 2.0);
  CHECK(std::abs(out.color.x - logistic(static_cast<float>(raw_rgb[0])) * occ_f) < 1e-6);
  CHECK(std::abs(out.color.y - logistic(static_cast<float>(raw_rgb[1])) * occ_f) < 1e-6);
  CHECK(std::abs(out.color.z - logistic(static_cast<float>(raw_rgb[2])) * occ_f) < 1e-6);
}

TEST_CASE("quadrature error at least halves when samples double") {
  RadianceFieldParams p = test_field({8, 8, 8});
  Rng rng(31);
  randomize(p.bg, rng, -1.5, 1.0);
  for (auto& g : p.fg) randomize(g, rng, -2.0, 0.5);

  SplitMix jit(0);
  const Ray r = axis_ray(4.05, 5.95);
  auto render_n = [&](int n) {
    return render_ray(p, r, 1, RenderMode::kFull, march(r, n, false, jit));
  };
  const RayRender ref = render_n(16384);
  auto err = [&](const RayRender& a) {
    return std::abs(a.color.x - ref.color.x) + std::abs(a.color.y - ref.color.y) +
           std::abs(a.color.z - ref.color.z) + std::abs(a.opacity - ref.opacity);
  };
  const double e1 = err(render_n(64));
  const double e2 = err(render_n(128));
  CHECK(e1 > 0.0);
  // Midpoint compositing converges at least first order; the factor-1.5
  // tolerance makes this "error at least (roughly) halves".
  CHECK(e2 <= e1 / 2.0 * 1.5);
  CHECK(e2 < e1);
}

TEST_CASE("opacity stays in [0,1] and foreground opacity is bounded by it") {
  RadianceFieldParams p = test_field();
  Rng rng(41);
  randomize(p.bg, rng, -3.0, 3.0);
  for (auto& g : p.fg) randomize(g, rng, -3.0, 3.0);
  const auto rays = random_rays(p, rng, 200);
  SplitMix jit(5);
  for (const Ray& r : rays) {
    const MarchSamples s = march(r, 32, false, jit);
    const RayRender full = render_ray(p, r, 1, RenderMode::kFull, s);
    CHECK(full.opacity >= 0.0);
    CHECK(full.opacity <= 1.0);
    CHECK(full.fg_opacity >= 0.0);
    CHECK(full.fg_opacity <= 1.0);
  }

  // With an empty background the full opacity equals the foreground one.
  fill_channel(p.bg, 0, -40.0f);
  for (const Ray& r : rays) {
    const MarchSamples s = march(r, 32, false, jit);
    const RayRender full = render_ray(p, r, 1, RenderMode::kFull, s);
    CHECK(full.fg_opacity <= full.opacity + 1e-6);
  }
}

TEST_CASE("full mode over an empty foreground matches background-only") {
  RadianceFieldParams p = test_field();
  Rng rng(43);
  randomize(p.bg, rng, -1.0, 1.0);
  for (auto& g : p.fg) fill_channel(g, 0, -40.0f);
  const auto rays = random_rays(p, rng, 50);
  SplitMix jit(1);
  for (const Ray& r : rays) {
    const MarchSamples s = march(r, 64, false, jit);
    const RayRender full = render_ray(p, r, 1, RenderMode::kFull, s);
    const RayRender bg = render_ray(p, r, 1, RenderMode::kBackgroundOnly, s);
    CHECK(std::abs(full.color.x - bg.color.x) < 1e-5);
    CHECK(std::abs(full.color.y - bg.color.y) < 1e-5);
    CHECK(std::abs(full.color.z - bg.color.z) < 1e-5);
    CHECK(std::abs(full.opacity - bg.opacity) < 1e-6);
  }
}

TEST_CASE("render_image of a zero-density field is black") {
  RadianceFieldParams p = test_field();
  fill_channel(p.bg, 0, -40.0f);
  for (auto& g : p.fg) fill_channel(g, 0, -40.0f);
  const CameraPose pose = look_at_pose({0, 0, 4}, {0, 0, 0}, {0, 1, 0}, {16, 16, 16, 16, 32, 32});
  const ImageRender img = render_image(p, pose, 1, RenderMode::kFull, 32);
  for (float v : img.rgb.data) CHECK(v == 0.0f);
  for (float v : img.opacity.data) CHECK(doctest::Approx(0.0).epsilon(1e-9) == v);
}

TEST_CASE("a single dense voxel projects into its support footprint") {
  RadianceFieldParams p = test_field({8, 8, 8});
  fill_channel(p.bg, 0, -40.0f);
  for (auto& g : p.fg) fill_channel(g, 0, -40.0f);
  // Light up one background voxel.
  const int vx = 4, vy = 3, vz = 4;
  const std::size_t vox = (static_cast<std::size_t>(vz) * 8 + vy) * 8 + vx;
  p.bg[vox * kChannelsPerVoxel] = 25.0f;

  const Intrinsics k{32, 32, 32, 32, 64, 64};
  const CameraPose pose = look_at_pose({0, 0, 3.5}, {0, 0, 0}, {0, 1, 0}, k);
  const ImageRender img = render_image(p, pose, 1, RenderMode::kFull, 256);

  // Projection oracle: the trilinear support of a voxel spans one voxel pitch
  // around its center; project the support box corners to bound the footprint.
  const Vec3 pitch = p.bg_bounds.extent() / 8.0;
  const Vec3 center{p.bg_bounds.lo.x + (vx + 0.5) * pitch.x,
                    p.bg_bounds.lo.y + (vy + 0.5) * pitch.y,
                    p.bg_bounds.lo.z + (vz + 0.5) * pitch.z};
  double min_u = 1e9, max_u = -1e9, min_v = 1e9, max_v = -1e9;
  for (int corner = 0; corner < 8; ++corner) {
    const Vec3 w = center + Vec3{(corner & 1 ? 1.0 : -1.0) * pitch.x,
                                 (corner & 2 ? 1.0 : -1.0) * pitch.y,
                                 (corner & 4 ? 1.0 : -1.0) * pitch.z};
    const Vec3 cam = pose.rotation.transposed() * (w - pose.translation);
    REQUIRE(cam.z > 0);
    min_u = std::min(min_u, k.fx * cam.x / cam.z + k.cx);
    max_u = std::max(max_u, k.fx * cam.x / cam.z + k.cx);
    min_v = std::min(min_v, k.fy * cam.y / cam.z + k.cy);
    max_v = std::max(max_v, k.fy * cam.y / cam.z + k.cy);
  }
  int hot = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      if (img.opacity.at(x, y) > 1e-3f) {
        ++hot;
        CHECK(x + 0.5 >= min_u - 1.0);
        CHECK(x + 0.5 <= max_u + 1.0);
        CHECK(y + 0.5 >= min_v - 1.0);
        CHECK(y + 0.5 <= max_v + 1.0);
      }
    }
  CHECK(hot > 0);
}

TEST_CASE("render_image is bit-identical across runs and thread counts") {
  RadianceFieldParams p = test_field();
  Rng rng(53);
  randomize(p.bg, rng);
  for (auto& g : p.fg) randomize(g, rng);
  const CameraPose pose = look_at_pose({0.2, 0.4, 3}, {0, 0, 0}, {0, 1, 0}, {24, 24, 24, 24, 48, 48});
  const ImageRender a = render_image(p, pose, 1, RenderMode::kFull, 48, 1);
  const ImageRender b = render_image(p, pose, 1, RenderMode::kFull, 48, 1);
  const ImageRender c = render_image(p, pose, 1, RenderMode::kFull, 48, 4);
  CHECK(a.rgb.data == b.rgb.data);
  CHECK(a.rgb.data == c.rgb.data);
  CHECK(a.opacity.data == c.opacity.data);
}

TEST_CASE("backward with zero weights touches nothing") {
  RadianceFieldParams p = test_field();
  Rng rng(3);
  randomize(p.bg, rng);
  const auto rays = random_rays(p, rng, 8);
  const RenderBatch batch = forward_batch(p, rays, 1, RenderMode::kFull, 16, false, 0);
  GradientAccumulator accum;
  accum.resize(p.total_param_count());
  backward_batch(p, batch, std::vector<RayGradWeights>(rays.size()), accum);
  CHECK(accum.touched().empty());
}

TEST_CASE("backward detects stale parameter caches") {
  RadianceFieldParams p = test_field();
  Rng rng(5);
  randomize(p.bg, rng);
  const auto rays = random_rays(p, rng, 4);
  const RenderBatch batch = forward_batch(p, rays, 1, RenderMode::kFull, 16, false, 0);
  ++p.version;
  GradientAccumulator accum;
  std::vector<RayGradWeights> w(rays.size());
  w[0].d_color = {1, 0, 0};
  CHECK_THROWS_AS(backward_batch(p, batch, w, accum), StaleCache);
}

TEST_CASE("single-voxel gradient matches finite differences tightly") {
  RadianceFieldParams p = make_field({{-1, -1, -1}, {1, 1, 1}}, {1, 1, 1},
                                     {{-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}}, {1, 1, 1}, 1);
  p.bg = {0.4f, 0.2f, -0.3f, 0.8f};
  p.fg[0] = {-0.7f, 1.0f, 0.1f, -0.2f};
  std::vector<Ray> rays{axis_ray(4.2, 5.8)};
  std::vector<RayGradWeights> w(1);
  w[0].d_color = {0.7, -0.4, 1.1};
  w[0].d_opacity = 0.6;
  w[0].d_fg_opacity = -0.8;
  const FdCheck check = fd_check(p, rays, RenderMode::kFull, 8, false, 0, w, 1e-3, 1e-6);
  CHECK(check.max_rel < 1e-4);
}

TEST_CASE("full-mode gradients match finite differences on random instances") {
  RadianceFieldParams p = test_field({8, 8, 8});
  Rng rng(101);
  randomize(p.bg, rng, -2.5, 1.0);
  for (auto& g : p.fg) randomize(g, rng, -2.5, 1.0);
  const auto rays = random_rays(p, rng, 32);
  std::vector<RayGradWeights> w(rays.size());
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& rw : w) {
    rw.d_color = {u(rng), u(rng), u(rng)};
    rw.d_opacity = u(rng);
    rw.d_fg_opacity = u(rng);
  }
  const FdCheck check = fd_check(p, rays, RenderMode::kFull, 16, false, 0, w);
  CHECK(check.checked == p.total_param_count());
  CHECK(check.max_rel < 1e-3);
}

TEST_CASE("foreground-only gradients match finite differences, stratified") {
  RadianceFieldParams p = test_field({8, 8, 8});
  Rng rng(113);
  randomize(p.bg, rng);
  for (auto& g : p.fg) randomize(g, rng, -2.0, 1.5);
  std::vector<Ray> candidates = random_rays(p, rng, 48);
  std::vector<Ray> rays;
  for (Ray& r : candidates) {
    const auto hit = ray_box_intersect(r.origin, r.direction, p.fg_bounds);
    if (!hit) continue;
    r.t_near = hit->first;
    r.t_far = hit->second;
    rays.push_back(r);
    if (rays.size() == 16) break;
  }
  REQUIRE(rays.size() == 16);
  std::vector<RayGradWeights> w(rays.size());
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& rw : w) {
    rw.d_color = {u(rng), u(rng), u(rng)};
    rw.d_fg_opacity = u(rng);
  }
  const FdCheck check = fd_check(p, rays, RenderMode::kForegroundOnly, 16, true, 77, w);
  CHECK(check.max_rel < 1e-3);
}

TEST_CASE("gradients are bit-identical for every worker count") {
  RadianceFieldParams p = test_field({8, 8, 8});
  Rng rng(131);
  randomize(p.bg, rng);
  for (auto& g : p.fg) randomize(g, rng);
  const auto rays = random_rays(p, rng, 64);
  std::vector<RayGradWeights> w(rays.size());
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& rw : w) {
    rw.d_color = {u(rng), u(rng), u(rng)};
    rw.d_opacity = u(rng);
    rw.d_fg_opacity = u(rng);
  }
  const RenderBatch batch = forward_batch(p, rays, 1, RenderMode::kFull, 32, true, 9, 4);

  auto run = [&](int threads) {
    GradientAccumulator accum;
    accum.resize(p.total_param_count());
    backward_batch(p, batch, w, accum, threads);
    std::vector<std::pair<std::uint32_t, double>> entries;
    for (std::uint32_t idx : accum.touched()) entries.emplace_back(idx, accum.value(idx));
    return entries;
  };
  const auto a = run(1);
  const auto b = run(2);
  const auto c = run(4);
  CHECK(a == b);
  CHECK(a == c);
}

}  // TEST_SUITE
