// Copyright 2026 The exdn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "exdn/math.hpp"

namespace exdn {

struct FrameOutOfRange : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BadMagic : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct VersionMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GridDims {
  int nx = 0, ny = 0, nz = 0;

  std::size_t voxels() const {
    return static_cast<std::size_t>(nx) * ny * nz;
  }
  bool operator==(const GridDims&) const = default;
};

/// Activated field sample: color in [0,1]^3, density >= 0 (1/length units).
struct FieldSample {
  Vec3 rgb;
  double density = 0;
};

constexpr int kChannelsPerVoxel = 4;  // raw density, raw r, raw g, raw b

/// The optimized scene representation: one static background grid plus one
/// foreground grid per frame t in [1, N]. Values are raw; activation is
/// softplus for density and sigmoid for color. Storage is interleaved
/// (d, r, g, b) per voxel, x fastest.
struct RadianceFieldParams {
  Box3 bg_bounds, fg_bounds;
  GridDims bg_res, fg_res;
  int n_frames = 0;
  std::vector<float> bg;
  std::vector<std::vector<float>> fg;

  // Bumped by the optimizer on every mutation; render batches use it to
  // detect stale forward caches.
  std::uint64_t version = 0;

  std::size_t bg_param_count() const { return bg_res.voxels() * kChannelsPerVoxel; }
  std::size_t fg_param_count() const { return fg_res.voxels() * kChannelsPerVoxel; }
  std::size_t total_param_count() const {
    return bg_param_count() + fg_param_count() * n_frames;
  }

  /// Flat parameter indexing: background block first, then frames ascending.
  std::size_t frame_offset(int t) const {
    return bg_param_count() + static_cast<std::size_t>(t - 1) * fg_param_count();
  }
  float& param(std::size_t flat);
  float param(std::size_t flat) const;
};

/// Near-empty initialization: densities activate to init_density, colors to
/// mid-gray.
RadianceFieldParams make_field(const Box3& bg_bounds, GridDims bg_res, const Box3& fg_bounds,
                               GridDims fg_res, int n_frames, double init_density = 0.01);

/// The 8 grid corners and weights bounding a point, with clamp-to-edge
/// handling inside the outer half-voxel shell. inside is false outside the
/// box proper.
struct TrilinearStencil {
  std::size_t voxel[8];
  double weight[8];
  bool inside = false;
};

TrilinearStencil make_stencil(const Box3& bounds, GridDims dims, const Vec3& x);

/// Raw trilinear read of the 4 voxel channels at a stencil.
void raw_at(const std::vector<float>& grid, const TrilinearStencil& st, double out[4]);

FieldSample activate(const double raw[4]);

/// Outside bg_bounds: density 0, black.
FieldSample query_background(const RadianceFieldParams& params, const Vec3& x);

/// Outside fg_bounds: density 0, black. Throws FrameOutOfRange unless
/// 1 <= t <= n_frames.
FieldSample query_foreground(const RadianceFieldParams& params, const Vec3& x, int t);

/// Density-weighted blend: sigma = sb + sf, color = (sb*cb + sf*cf)/(sigma + eps).
FieldSample composite_branches(const FieldSample& bg, const FieldSample& fg);

constexpr double kCompositeEps = 1e-8;

/// Parameter checkpoint ("EXDN" v1): bounds, resolutions, frame count, then
/// raw arrays as little-endian f32, background first, frames ascending.
void save_field(const RadianceFieldParams& params, const std::string& path);
RadianceFieldParams load_field(const std::string& path);

/// Same block written into an already-open stream (used by the trainer
/// checkpoint, which embeds a field block).
void save_field_to(std::FILE* f, const RadianceFieldParams& params, const std::string& context);
RadianceFieldParams load_field_from(std::FILE* f, const std::string& context);

}  // namespace exdn
