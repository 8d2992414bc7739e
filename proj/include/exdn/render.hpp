// Copyright 2026 The exdn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "exdn/field.hpp"
#include "exdn/geometry.hpp"
#include "exdn/image.hpp"
#include "exdn/rng.hpp"

namespace exdn {

struct EmptyInterval : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct StaleCache : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class RenderMode { kFull, kForegroundOnly, kBackgroundOnly };

/// Per-ray render result. fg_opacity is the foreground-only accumulated
/// opacity (1 - foreground transmittance), the quantity supervised against
/// shape masks.
struct RayRender {
  Vec3 color;
  double opacity = 0;
  double fg_opacity = 0;
};

/// Quadrature positions and segment lengths. delta are the bin widths, so
/// they sum to the interval length regardless of jitter.
struct MarchSamples {
  std::vector<double> t;
  std::vector<double> delta;
};

/// n_samples points over [t_near, t_far]: bin midpoints when stratified is
/// false, one uniform draw per bin otherwise. Throws EmptyInterval for rays
/// that miss the bounds or n_samples < 2.
MarchSamples march(const Ray& ray, int n_samples, bool stratified, SplitMix& rng);

/// Emission-absorption compositing of the field along one ray.
RayRender render_ray(const RadianceFieldParams& params, const Ray& ray, int frame,
                     RenderMode mode, const MarchSamples& samples);

struct ImageRender {
  ImageBuffer rgb;      // 3 channels
  ImageBuffer opacity;  // 1 channel
};

/// Per-pixel render_ray over the full raster; rays that miss the bounds
/// render black with zero opacity. Deterministic (midpoint sampling).
ImageRender render_image(const RadianceFieldParams& params, const CameraPose& pose, int frame,
                         RenderMode mode, int n_samples, int threads = 1);

/// dLoss/d(output channel) weights for one ray.
struct RayGradWeights {
  Vec3 d_color;
  double d_opacity = 0;
  double d_fg_opacity = 0;
};

/// Dense gradient buffer over the flat parameter space with an epoch-stamped
/// touched list, so per-iteration reset is O(touched).
class GradientAccumulator {
 public:
  void resize(std::size_t n_params);
  void clear();
  void add(std::size_t idx, double v);
  double value(std::size_t idx) const;
  const std::vector<std::uint32_t>& touched() const { return touched_; }
  std::size_t size() const { return value_.size(); }

 private:
  std::vector<double> value_;
  std::vector<std::uint32_t> stamp_;
  std::vector<std::uint32_t> touched_;
  std::uint32_t epoch_ = 0;
};

/// Forward results for a ray batch plus everything needed to replay the
/// chain in backward. Rays that miss the bounds yield zero outputs and are
/// skipped by backward.
struct RenderBatch {
  std::vector<Ray> rays;
  int frame = 1;
  RenderMode mode = RenderMode::kFull;
  int n_samples = 0;
  bool stratified = false;
  std::uint64_t jitter_seed = 0;
  std::uint64_t params_version = 0;
  std::vector<RayRender> outputs;
};

RenderBatch forward_batch(const RadianceFieldParams& params, std::vector<Ray> rays, int frame,
                          RenderMode mode, int n_samples, bool stratified,
                          std::uint64_t jitter_seed, int threads = 1);

/// Exact gradients of sum_r dot(weights_r, outputs_r) with respect to every
/// raw grid parameter touched, accumulated into accum. Deterministic for any
/// thread count (fixed ray chunks, ordered merge). Throws StaleCache when
/// params changed since forward_batch.
void backward_batch(const RadianceFieldParams& params, const RenderBatch& batch,
                    const std::vector<RayGradWeights>& weights, GradientAccumulator& accum,
                    int threads = 1);

}  // namespace exdn
