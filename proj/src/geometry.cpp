// Copyright 2026 The exdn Authors
// SPDX-License-Identifier: Apache-2.0

#include "exdn/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace exdn {

bool pose_valid(const CameraPose& p, double tol) {
  const Mat3 rtr = p.rotation.transposed() * p.rotation;
  const Mat3 eye = Mat3::identity();
  for (int i = 0; i < 9; ++i)
    if (std::abs(rtr.m[i] - eye.m[i]) > tol) return false;
  if (std::abs(p.rotation.det() - 1.0) > tol) return false;
  const Intrinsics& k = p.intrinsics;
  return k.fx > 0 && k.fy > 0 && k.cx >= 0 && k.cx < k.width && k.cy >= 0 && k.cy < k.height;
}

CameraPose look_at_pose(const Vec3& eye, const Vec3& target, const Vec3& up,
                        const Intrinsics& intr) {
  const Vec3 offset = target - eye;
  if (norm(offset) <= 1e-9) throw DegenerateLookAt("look_at_pose: eye coincides with target");
  const Vec3 fwd = normalized(offset);
  const Vec3 side = cross(fwd, normalized(up));
  if (norm(side) < 1e-9) throw DegenerateLookAt("look_at_pose: up parallel to view direction");
  const Vec3 right = normalized(side);
  const Vec3 down = cross(fwd, right);
  CameraPose pose;
  pose.rotation = Mat3::from_columns(right, down, fwd);
  pose.translation = eye;
  pose.intrinsics = intr;
  return pose;
}

Vec3 spherical_position(const Vec3& center, double radius, double elevation_deg,
                        double azimuth_deg, const Vec3& bearing, const Vec3& up) {
  const Vec3 axis = normalized(up);
  // Horizontal component of bearing, i.e. azimuth zero at elevation zero.
  Vec3 b = bearing - axis * dot(bearing, axis);
  b = normalized(b);
  const Vec3 c = cross(axis, b);
  const double e = deg_to_rad(elevation_deg), a = deg_to_rad(azimuth_deg);
  const Vec3 dir = (b * std::cos(a) + c * std::sin(a)) * std::cos(e) + axis * std::sin(e);
  return center + dir * radius;
}

std::vector<CameraPose> dome_viewpoints(const Vec3& center, double radius,
                                        const std::vector<double>& azimuths_deg,
                                        const std::vector<double>& elevations_deg,
                                        const Intrinsics& intr, const Vec3& bearing,
                                        const Vec3& up) {
  std::vector<double> az = azimuths_deg;
  std::sort(az.begin(), az.end());
  std::vector<CameraPose> poses;
  poses.reserve(az.size() * elevations_deg.size());
  for (double e : elevations_deg)
    for (double a : az)
      poses.push_back(look_at_pose(spherical_position(center, radius, e, a, bearing, up),
                                   center, up, intr));
  return poses;
}

Dome make_dome(const Vec3& center, double radius, std::vector<double> azimuths_deg,
               std::vector<double> elevations_deg, const Intrinsics& intr, const Vec3& bearing,
               const Vec3& up) {
  std::sort(azimuths_deg.begin(), azimuths_deg.end());
  Dome dome;
  dome.center = center;
  dome.radius = radius;
  dome.azimuths_deg = azimuths_deg;
  dome.elevations_deg = elevations_deg;
  dome.poses = dome_viewpoints(center, radius, azimuths_deg, elevations_deg, intr, bearing, up);
  return dome;
}

RigidTransform alignment_transform(const CameraPose& pose_n, const CameraPose& pose_d) {
  RigidTransform d;
  d.m = pose_d.matrix();
  RigidTransform t;
  t.m = pose_n.matrix() * d.inverse().m;
  return t;
}

CameraPose apply_transform(const RigidTransform& t, const CameraPose& p) {
  const Mat4 m = t.m * p.matrix();
  CameraPose out;
  out.rotation = m.rotation();
  out.translation = m.translation();
  out.intrinsics = p.intrinsics;
  return out;
}

std::optional<std::pair<double, double>> ray_box_intersect(const Vec3& origin, const Vec3& dir,
                                                           const Box3& box) {
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  for (int axis = 0; axis < 3; ++axis) {
    const double o = origin[axis], d = dir[axis];
    const double lo = box.lo[axis], hi = box.hi[axis];
    if (std::abs(d) < 1e-15) {
      if (o < lo || o > hi) return std::nullopt;
      continue;
    }
    double ta = (lo - o) / d, tb = (hi - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 >= t1) return std::nullopt;
  }
  return std::make_pair(t0, t1);
}

Ray generate_ray_at(const CameraPose& pose, double x, double y, int frame, const Box3& box) {
  const Intrinsics& k = pose.intrinsics;
  const Vec3 dir_cam{(x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0};
  Ray ray;
  ray.origin = pose.eye();
  ray.direction = normalized(pose.rotation * dir_cam);
  ray.frame = frame;
  if (auto hit = ray_box_intersect(ray.origin, ray.direction, box)) {
    ray.t_near = hit->first;
    ray.t_far = hit->second;
  } else {
    ray.t_near = 0.0;
    ray.t_far = -1.0;
  }
  return ray;
}

Ray generate_ray(const CameraPose& pose, int px, int py, int frame, const Box3& box) {
  return generate_ray_at(pose, px + 0.5, py + 0.5, frame, box);
}

std::pair<int, int> symmetric_pair(Rng& rng, const Dome& dome) {
  // Eligible magnitudes: |a| > 0 with both +a and -a present.
  std::vector<double> mags;
  for (double a : dome.azimuths_deg) {
    if (a <= 1e-12) continue;
    for (double b : dome.azimuths_deg)
      if (std::abs(b + a) < 1e-9) {
        mags.push_back(a);
        break;
      }
  }
  if (mags.empty() || dome.elevations_deg.empty())
    throw EmptyDome("symmetric_pair: no symmetric azimuth pair in dome");

  const int ei = static_cast<int>(std::uniform_int_distribution<int>(
      0, static_cast<int>(dome.elevations_deg.size()) - 1)(rng));
  const double a = mags[std::uniform_int_distribution<int>(
      0, static_cast<int>(mags.size()) - 1)(rng)];

  auto find_az = [&](double target) {
    for (int i = 0; i < static_cast<int>(dome.azimuths_deg.size()); ++i)
      if (std::abs(dome.azimuths_deg[i] - target) < 1e-9) return i;
    throw EmptyDome("symmetric_pair: azimuth lookup failed");
  };
  return {dome.index(ei, find_az(a)), dome.index(ei, find_az(-a))};
}

std::array<double, 12> pose_to_rows(const CameraPose& p) {
  std::array<double, 12> rows{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) rows[r * 4 + c] = p.rotation(r, c);
    rows[r * 4 + 3] = p.translation[r];
  }
  return rows;
}

CameraPose pose_from_rows(const std::array<double, 12>& rows, const Intrinsics& intr) {
  CameraPose p;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) p.rotation(r, c) = rows[r * 4 + c];
  p.translation = {rows[3], rows[7], rows[11]};
  p.intrinsics = intr;
  return p;
}

}  // namespace exdn
