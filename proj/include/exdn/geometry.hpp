// Copyright 2026 The exdn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "exdn/math.hpp"
#include "exdn/rng.hpp"

namespace exdn {

struct DegenerateLookAt : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyDome : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Intrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;
};

/// World-from-camera rigid transform plus pinhole intrinsics. Camera frame
/// convention: +x right, +y down, +z forward; rotation columns are the camera
/// axes expressed in world coordinates.
struct CameraPose {
  Mat3 rotation;
  Vec3 translation;
  Intrinsics intrinsics;

  Vec3 eye() const { return translation; }
  Vec3 right() const { return rotation.col(0); }
  Vec3 down() const { return rotation.col(1); }
  Vec3 forward() const { return rotation.col(2); }
  Mat4 matrix() const { return Mat4::from_rt(rotation, translation); }
};

struct SphericalViewpoint {
  double elevation_deg = 0;
  double azimuth_deg = 0;
  double radius = 0;
};

/// frame is the time index the ray samples; t_near >= t_far marks a ray that
/// misses the scene bounds.
struct Ray {
  Vec3 origin;
  Vec3 direction;
  double t_near = 0;
  double t_far = -1;
  int frame = 1;

  bool misses() const { return !(t_near < t_far); }
};

struct RigidTransform {
  Mat4 m = Mat4::identity();

  static RigidTransform identity() { return {}; }
  static RigidTransform translation(const Vec3& v) {
    RigidTransform t;
    t.m = Mat4::from_rt(Mat3::identity(), v);
    return t;
  }
  static RigidTransform from_rt(const Mat3& r, const Vec3& t) {
    RigidTransform out;
    out.m = Mat4::from_rt(r, t);
    return out;
  }
  RigidTransform inverse() const {
    const Mat3 rt = m.rotation().transposed();
    return from_rt(rt, -(rt * m.translation()));
  }
  Vec3 apply_point(const Vec3& p) const { return m.rotation() * p + m.translation(); }
};

inline RigidTransform operator*(const RigidTransform& a, const RigidTransform& b) {
  RigidTransform r;
  r.m = a.m * b.m;
  return r;
}

bool pose_valid(const CameraPose& p, double tol = 1e-9);

/// Camera at eye aimed at target. Throws DegenerateLookAt when up is within
/// 1e-9 of parallel to the view direction.
CameraPose look_at_pose(const Vec3& eye, const Vec3& target, const Vec3& up,
                        const Intrinsics& intr);

/// Eye position on a sphere around center. bearing is the horizontal
/// azimuth-zero reference direction; up is the dome axis.
Vec3 spherical_position(const Vec3& center, double radius, double elevation_deg,
                        double azimuth_deg, const Vec3& bearing, const Vec3& up);

/// One pose per (elevation, azimuth) pair at distance radius from center, all
/// aimed at center. Ordering is elevation-major, azimuth ascending.
std::vector<CameraPose> dome_viewpoints(const Vec3& center, double radius,
                                        const std::vector<double>& azimuths_deg,
                                        const std::vector<double>& elevations_deg,
                                        const Intrinsics& intr,
                                        const Vec3& bearing = {1, 0, 0},
                                        const Vec3& up = {0, 1, 0});

/// Dome poses with their angle labels, in dome_viewpoints order.
struct Dome {
  Vec3 center;
  double radius = 0;
  std::vector<double> azimuths_deg;    // ascending
  std::vector<double> elevations_deg;  // as given
  std::vector<CameraPose> poses;       // elevation-major

  int index(int elevation_i, int azimuth_i) const {
    return elevation_i * static_cast<int>(azimuths_deg.size()) + azimuth_i;
  }
  SphericalViewpoint viewpoint(int pose_index) const {
    const int na = static_cast<int>(azimuths_deg.size());
    return {elevations_deg[pose_index / na], azimuths_deg[pose_index % na], radius};
  }
};

Dome make_dome(const Vec3& center, double radius, std::vector<double> azimuths_deg,
               std::vector<double> elevations_deg, const Intrinsics& intr,
               const Vec3& bearing = {1, 0, 0}, const Vec3& up = {0, 1, 0});

/// T such that apply_transform(T, pose_d) == pose_n: T = M_n * M_d^{-1}.
RigidTransform alignment_transform(const CameraPose& pose_n, const CameraPose& pose_d);

/// Rigid composition; intrinsics pass through unchanged.
CameraPose apply_transform(const RigidTransform& t, const CameraPose& p);

/// Ray through the center of pixel (px, py), clipped to box. A miss is
/// returned as an empty interval; origin and direction stay valid.
Ray generate_ray(const CameraPose& pose, int px, int py, int frame, const Box3& box);

/// Same, for a continuous pixel position (x, y) in pixel units.
Ray generate_ray_at(const CameraPose& pose, double x, double y, int frame, const Box3& box);

std::optional<std::pair<double, double>> ray_box_intersect(const Vec3& origin, const Vec3& dir,
                                                           const Box3& box);

/// Picks a symmetric azimuth pair (+a, -a), a != 0, at a uniformly chosen
/// elevation and magnitude. Returns indices into dome.poses, +a first.
/// Throws EmptyDome when no symmetric nonzero pair exists.
std::pair<int, int> symmetric_pair(Rng& rng, const Dome& dome);

std::array<double, 12> pose_to_rows(const CameraPose& p);
CameraPose pose_from_rows(const std::array<double, 12>& rows, const Intrinsics& intr);

}  // namespace exdn
