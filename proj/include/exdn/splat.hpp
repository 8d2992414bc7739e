// Copyright 2026 The exdn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <vector>

#include "exdn/geometry.hpp"
#include "exdn/image.hpp"
#include "exdn/rng.hpp"

namespace exdn {

struct DegenerateObject : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BehindCamera : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// One 3D Gaussian primitive in the prior's local coordinate frame.
struct Gaussian {
  Vec3 mean;
  Vec3 scale;       // per-axis standard deviations, > 0
  Quat orientation; // unit
  double opacity = 1.0;  // (0, 1]
  Vec3 rgb;
};

struct GaussianSet {
  std::vector<Gaussian> primitives;
};

/// Pseudo ground truth for one prior-frame pose: alpha-premultiplied RGB over
/// black plus the alpha mask.
struct PseudoView {
  CameraPose pose;
  ImageBuffer rgb;   // 3 channels, premultiplied
  ImageBuffer mask;  // 1 channel, alpha in [0,1]
};

/// Surface access the prior fitter needs from a scene object; the harness
/// implements it for its analytic shapes.
class SurfaceSampler {
 public:
  virtual ~SurfaceSampler() = default;
  virtual double area() const = 0;
  virtual double diameter() const = 0;
  /// Uniform point on the surface (local frame) and its albedo.
  virtual void sample(Rng& rng, Vec3& point, Vec3& albedo) const = 0;
};

/// Isotropic surface splats: means on the surface, scale
/// 1.5 * diameter / sqrt(n), opacity 0.9, color from the surface albedo.
GaussianSet fit_prior(const SurfaceSampler& object, int n_gaussians, Rng& rng);

/// EWA-style perspective projection of one primitive.
struct Splat2D {
  double mean_x = 0, mean_y = 0;
  double cov_xx = 0, cov_xy = 0, cov_yy = 0;  // SPD after the 0.3 px floor
  double depth = 0;
};

Splat2D project_gaussian(const Gaussian& g, const CameraPose& pose);

/// Depth-sorted alpha compositing of 2D Gaussian falloffs. Footprints are
/// clipped at kFootprintSigma with contributions below kAlphaCutoff dropped;
/// the brute-force oracle budget in the tests covers both.
constexpr double kFootprintSigma = 3.5;
constexpr double kAlphaCutoff = 1.0 / 1024.0;

PseudoView rasterize(const GaussianSet& set, const CameraPose& pose);

struct PseudoGt {
  CameraPose world_pose;  // prior pose mapped into the field's frame
  PseudoView view;        // rendered in the prior frame, content untouched
};

/// Rasterizes every prior-frame dome pose, then maps each pose through
/// T = alignment_transform(pose_n, pose_d). Order is preserved.
std::vector<PseudoGt> generate_pseudo_gt(const GaussianSet& set, const CameraPose& pose_n,
                                         const CameraPose& pose_d,
                                         const std::vector<CameraPose>& dome_prior_poses,
                                         int threads = 1);

}  // namespace exdn
