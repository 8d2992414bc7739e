// Copyright 2026 The exdn Authors
// SPDX-License-Identifier: Apache-2.0

#include "exdn/splat.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "exdn/parallel.hpp"

namespace exdn {

GaussianSet fit_prior(const SurfaceSampler& object, int n_gaussians, Rng& rng) {
  if (object.area() <= 0.0) throw DegenerateObject("fit_prior: object surface area is zero");
  const double scale = 1.5 * object.diameter() / std::sqrt(static_cast<double>(n_gaussians));
  GaussianSet set;
  set.primitives.reserve(n_gaussians);
  for (int i = 0; i < n_gaussians; ++i) {
    Gaussian g;
    object.sample(rng, g.mean, g.rgb);
    g.scale = {scale, scale, scale};
    g.orientation = Quat{};
    g.opacity = 0.9;
    set.primitives.push_back(g);
  }
  return set;
}

Splat2D project_gaussian(const Gaussian& g, const CameraPose& pose) {
  const Mat3 cam_from_world = pose.rotation.transposed();
  const Vec3 p = cam_from_world * (g.mean - pose.translation);
  if (p.z <= 1e-6) throw BehindCamera("project_gaussian: primitive not in front of camera");

  const Mat3 rot = g.orientation.to_mat3();
  Mat3 cov_local;
  cov_local(0, 0) = g.scale.x * g.scale.x;
  cov_local(1, 1) = g.scale.y * g.scale.y;
  cov_local(2, 2) = g.scale.z * g.scale.z;
  const Mat3 cov_world = rot * cov_local * rot.transposed();
  const Mat3 cov_cam = cam_from_world * cov_world * pose.rotation;

  const Intrinsics& k = pose.intrinsics;
  const double inv_z = 1.0 / p.z;
  // Projection Jacobian rows: d(u,v)/d(x,y,z) at p.
  const double j00 = k.fx * inv_z, j02 = -k.fx * p.x * inv_z * inv_z;
  const double j11 = k.fy * inv_z, j12 = -k.fy * p.y * inv_z * inv_z;

  Splat2D s;
  // Row u = (j00, 0, j02), row v = (0, j11, j12).
  s.cov_xx = j00 * (cov_cam(0, 0) * j00 + cov_cam(0, 2) * j02) +
             j02 * (cov_cam(2, 0) * j00 + cov_cam(2, 2) * j02) + 0.3;
  s.cov_xy = j00 * (cov_cam(0, 1) * j11 + cov_cam(0, 2) * j12) +
             j02 * (cov_cam(2, 1) * j11 + cov_cam(2, 2) * j12);
  s.cov_yy = j11 * (cov_cam(1, 1) * j11 + cov_cam(1, 2) * j12) +
             j12 * (cov_cam(2, 1) * j11 + cov_cam(2, 2) * j12) + 0.3;
  s.mean_x = k.fx * p.x * inv_z + k.cx;
  s.mean_y = k.fy * p.y * inv_z + k.cy;
  s.depth = p.z;
  return s;
}

namespace {

struct PreparedSplat {
  Splat2D s;
  Vec3 rgb;
  double opacity;
  double inv_xx, inv_xy, inv_yy;  // inverse covariance
  int x0, x1, y0, y1;             // inclusive footprint bbox
};

}  // namespace

PseudoView rasterize(const GaussianSet& set, const CameraPose& pose) {
  const Intrinsics& k = pose.intrinsics;
  PseudoView out;
  out.pose = pose;
  out.rgb = ImageBuffer(k.width, k.height, 3);
  out.mask = ImageBuffer(k.width, k.height, 1);

  std::vector<PreparedSplat> splats;
  splats.reserve(set.primitives.size());
  for (const Gaussian& g : set.primitives) {
    Splat2D s;
    try {
      s = project_gaussian(g, pose);
    } catch (const BehindCamera&) {
      continue;
    }
    PreparedSplat ps;
    ps.s = s;
    ps.rgb = g.rgb;
    ps.opacity = g.opacity;
    const double det = s.cov_xx * s.cov_yy - s.cov_xy * s.cov_xy;
    if (det <= 0.0) continue;
    ps.inv_xx = s.cov_yy / det;
    ps.inv_xy = -s.cov_xy / det;
    ps.inv_yy = s.cov_xx / det;
    const double rx = kFootprintSigma * std::sqrt(s.cov_xx);
    const double ry = kFootprintSigma * std::sqrt(s.cov_yy);
    ps.x0 = std::max(0, static_cast<int>(std::floor(s.mean_x - rx)));
    ps.x1 = std::min(k.width - 1, static_cast<int>(std::ceil(s.mean_x + rx)));
    ps.y0 = std::max(0, static_cast<int>(std::floor(s.mean_y - ry)));
    ps.y1 = std::min(k.height - 1, static_cast<int>(std::ceil(s.mean_y + ry)));
    if (ps.x0 > ps.x1 || ps.y0 > ps.y1) continue;
    splats.push_back(ps);
  }

  // Back-to-front; stable so equal depths keep input order.
  std::vector<int> order(splats.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return splats[a].s.depth > splats[b].s.depth; });

  // Row buckets preserve the depth order per scanline.
  std::vector<std::vector<int>> rows(k.height);
  for (int idx : order) {
    const PreparedSplat& ps = splats[idx];
    for (int y = ps.y0; y <= ps.y1; ++y) rows[y].push_back(idx);
  }

  for (int y = 0; y < k.height; ++y) {
    const double py = y + 0.5;
    for (int x = 0; x < k.width; ++x) {
      const double px = x + 0.5;
      double r = 0, g = 0, b = 0, a = 0;
      for (int idx : rows[y]) {
        const PreparedSplat& ps = splats[idx];
        if (x < ps.x0 || x > ps.x1) continue;
        const double dx = px - ps.s.mean_x, dy = py - ps.s.mean_y;
        const double maha2 = ps.inv_xx * dx * dx + 2.0 * ps.inv_xy * dx * dy + ps.inv_yy * dy * dy;
        if (maha2 > kFootprintSigma * kFootprintSigma) continue;
        const double alpha = ps.opacity * std::exp(-0.5 * maha2);
        if (alpha < kAlphaCutoff) continue;
        r = alpha * ps.rgb.x + (1.0 - alpha) * r;
        g = alpha * ps.rgb.y + (1.0 - alpha) * g;
        b = alpha * ps.rgb.z + (1.0 - alpha) * b;
        a = alpha + (1.0 - alpha) * a;
      }
      out.rgb.at(x, y, 0) = static_cast<float>(r);
      out.rgb.at(x, y, 1) = static_cast<float>(g);
      out.rgb.at(x, y, 2) = static_cast<float>(b);
      out.mask.at(x, y) = static_cast<float>(a);
    }
  }
  return out;
}

std::vector<PseudoGt> generate_pseudo_gt(const GaussianSet& set, const CameraPose& pose_n,
                                         const CameraPose& pose_d,
                                         const std::vector<CameraPose>& dome_prior_poses,
                                         int threads) {
  const RigidTransform t = alignment_transform(pose_n, pose_d);
  std::vector<PseudoGt> out(dome_prior_poses.size());
  parallel_for(dome_prior_poses.size(), 1, [&](std::size_t i0, std::size_t i1) {
    for (std::size_t i = i0; i < i1; ++i) {
      out[i].view = rasterize(set, dome_prior_poses[i]);
      out[i].world_pose = apply_transform(t, dome_prior_poses[i]);
    }
  }, threads);
  return out;
}

}  // namespace exdn
