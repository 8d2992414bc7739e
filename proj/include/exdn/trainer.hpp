// Copyright 2026 The exdn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "exdn/harness.hpp"
#include "exdn/losses.hpp"
#include "exdn/render.hpp"
#include "exdn/sampling.hpp"
#include "exdn/splat.hpp"

namespace exdn {

struct DivergedLoss : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Which optional loss terms participate (value and gradient). Disabled
/// terms report 0 in the breakdown; the reconstruction term is always on.
struct LossMask {
  bool cont = true;
  bool sr = true;
  bool nv_c = true;
  bool nv_sigma = true;
};

LossMask parse_loss_mask(const std::string& spec);  // e.g. "full", "none", "cont+sr+nvc+nvs"
std::string loss_mask_name(const LossMask& m);

struct TrainConfig {
  int iterations = 5000;
  int rays_per_iter_primary = 512;
  int rays_per_iter_nv = 1024;  // split across the two symmetric views
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  LossWeights weights;  // nv_start_iteration < 0 resolves to 20% of iterations
  LossMask mask;
  SamplingStrategy strategy = SamplingStrategy::padded_bbox(2);
  std::uint64_t seed = 1;
  int n_samples = 128;
  bool stratified = true;
  GridDims bg_res{96, 96, 96};
  GridDims fg_res{48, 48, 48};
  int sr_patches = 4;      // K
  int sr_patch_size = 32;  // reference-resolution patch side (must be even)
  int checkpoint_every = 1000;
  int threads = 1;

  TrainConfig() { weights.nv_start_iteration = -1; }
};

/// Fills defaults that depend on other fields (currently nv_start_iteration).
TrainConfig resolve_config(TrainConfig config);

struct TrainState {
  RadianceFieldParams params;
  std::vector<float> moment1, moment2;  // flat Adam moments
  std::int64_t iteration = 0;           // completed iterations
  Rng rng;
};

TrainState init_state(const TrainConfig& config, const Dataset& dataset);

/// One pseudo-GT view: pose mapped into the field frame plus the rendered
/// prior outputs.
struct PgtView {
  CameraPose world_pose;
  double elevation_deg = 0, azimuth_deg = 0;
  ImageBuffer rgb;   // premultiplied
  ImageBuffer mask;  // alpha
};

struct PgtCache {
  std::vector<double> azimuths_deg;    // ascending
  std::vector<double> elevations_deg;
  std::vector<std::vector<PgtView>> per_frame;  // [t-1][view], elevation-major

  /// Index skeleton compatible with geometry::symmetric_pair.
  Dome pair_dome() const;
};

/// Fits the Gaussian prior to the scene object and rasterizes the dome for
/// every frame, writing pgt/t{TTTT}/v{VV}_rgb.png, v{VV}_mask.png and
/// pgt_manifest.json under out_dir.
void generate_pgt_cache(const Dataset& dataset, const std::string& out_dir, int threads = 1);

PgtCache load_pgt_cache(const std::string& dir);

/// One optimization step: primary reconstruction (+ SR patches + continuity
/// window), novel-view supervision once the schedule is active, then a
/// sparse Adam update. Deterministic given the state's rng.
LossBreakdown train_step(TrainState& state, const Dataset& dataset, const PgtCache& pgt,
                         const TrainConfig& config);

struct TrainResult {
  std::string checkpoint_path;  // trainer state ("EXDS")
  std::string field_path;       // parameters only ("EXDN")
  std::string loss_csv_path;
  LossBreakdown last;
};

/// Runs the full loop, writing checkpoint.exds, field.exdn and loss_log.csv
/// under out_dir. Resumes from out_dir/checkpoint.exds when resume is true
/// and the file exists; the loss log is truncated back to the checkpoint
/// iteration so a resumed run reproduces the uninterrupted log byte for
/// byte.
TrainResult train(const TrainConfig& config, const Dataset& dataset, const PgtCache& pgt,
                  const std::string& out_dir, bool resume = false);

/// TrainState checkpoint ("EXDS" v1): iteration, rng stream state, field
/// block, then both moment arrays. Writes are atomic (temp file + rename).
void save_checkpoint(const TrainState& state, const std::string& path);
TrainState load_checkpoint(const std::string& path);

}  // namespace exdn
