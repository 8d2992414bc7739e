// Copyright 2026 The exdn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "exdn/geometry.hpp"
#include "exdn/image.hpp"
#include "exdn/splat.hpp"

namespace exdn {

struct UnknownScene : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Two-tone checkerboard for one room face.
struct CheckerSpec {
  double cell = 0.8;
  Vec3 color_a, color_b;
};

struct RoomSpec {
  Box3 box;
  CheckerSpec faces[6];  // -x, +x, -y, +y, -z, +z
};

struct SceneObject {
  enum class Shape { kSphere, kBox };
  Shape shape = Shape::kSphere;
  double radius = 0.3;              // sphere
  Vec3 half_extent{0.2, 0.2, 0.2};  // box
  std::vector<Vec3> palette;

  /// Procedural albedo at a local-frame surface point.
  Vec3 albedo(const Vec3& local) const;
  double bounding_radius() const;
};

/// Object local-to-world placement at one frame.
struct ObjectState {
  Vec3 center;
  Mat3 orient = Mat3::identity();
};

struct SceneDef {
  std::string name;
  int n_frames = 0;
  std::uint64_t seed = 0;
  int image_size = 64;
  RoomSpec room;
  SceneObject object;
  Intrinsics intrinsics;
  std::vector<CameraPose> primary;        // one per frame
  std::vector<ObjectState> object_states; // one per frame
  std::vector<double> dome_azimuths_deg;   // default -45..45 step 5
  std::vector<double> dome_elevations_deg; // default {0, 15, 30}
  double dome_radius = 1.2;                // R_d
  int n_gaussians = 2000;                  // prior fitter budget
  Box3 bg_bounds, fg_bounds;

  /// Dome pose around the object at frame t; azimuth zero is the primary
  /// camera's horizontal bearing at that frame.
  CameraPose dome_pose(int t, double elevation_deg, double azimuth_deg) const;
  /// Primary camera pose expressed in the object's local (prior) frame.
  CameraPose prior_frame_primary(int t) const;
};

struct SceneOptions {
  int image_size = 64;
  int n_gaussians = 2000;  // carried into the manifest for the prior fitter
};

/// bouncer: striped sphere on a sinusoidal vertical path, primary camera
/// orbiting +-10 degrees of azimuth across the sequence at fixed range.
/// spinner: multicolor box rotating 360/N degrees per frame, primary camera
/// on a linear dolly. Deterministic per seed; throws UnknownScene otherwise.
SceneDef gen_scene(const std::string& name, int n_frames, std::uint64_t seed,
                   const SceneOptions& options = {});

/// Exact reference render: nearest-hit against object then room, unlit
/// albedo; mask is 1 exactly where the object is the nearest hit.
struct AnalyticRender {
  ImageBuffer rgb;
  ImageBuffer mask;
};
AnalyticRender analytic_render(const SceneDef& scene, const CameraPose& pose, int t,
                               int threads = 1);

/// Surface sampler over the scene object for the prior fitter.
std::unique_ptr<SurfaceSampler> object_model(const SceneDef& scene);

struct DomeViewEntry {
  double elevation_deg = 0, azimuth_deg = 0;
  std::vector<std::array<double, 12>> pose_rows;  // one per frame
  std::vector<std::string> files;                 // one per frame
};

struct DatasetManifest {
  int schema_version = 1;
  std::string scene_name;
  int n_frames = 0;
  std::uint64_t seed = 0;
  int image_size = 64;
  int n_gaussians = 2000;
  Intrinsics intrinsics;
  double dome_radius = 0;
  Box3 bg_bounds, fg_bounds;
  std::vector<double> dome_azimuths_deg, dome_elevations_deg;
  std::vector<std::array<double, 12>> primary_pose_rows;     // per frame
  std::vector<std::array<double, 12>> object_state_rows;     // per frame, local->world
  std::vector<std::string> frame_files, mask_files;          // per frame
  std::vector<DomeViewEntry> dome_views;                     // elevation-major
};

/// Writes frames/{t:04}.png, masks/{t:04}.png, dome/e{EE}_a{+AA}/{t:04}.png
/// and manifest.json under out_dir. File indices are 1-based frame numbers.
DatasetManifest write_dataset(const SceneDef& scene, const std::string& out_dir,
                              int threads = 1);

DatasetManifest read_manifest(const std::string& path);
void write_manifest(const DatasetManifest& m, const std::string& path);

/// Manifest plus the regenerated SceneDef and eagerly loaded primary frames.
struct Dataset {
  std::string root;
  DatasetManifest manifest;
  SceneDef scene;
  std::vector<CameraPose> primary;
  std::vector<ImageBuffer> frames;
  std::vector<ImageBuffer> masks;

  CameraPose dome_pose(const DomeViewEntry& view, int t) const;
  ImageBuffer dome_image(const DomeViewEntry& view, int t) const;
};

Dataset load_dataset(const std::string& dir);

}  // namespace exdn
