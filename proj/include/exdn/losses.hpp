// Copyright 2026 The exdn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <vector>

#include "exdn/field.hpp"
#include "exdn/image.hpp"
#include "exdn/render.hpp"

namespace exdn {

struct LossWeights {
  double lambda_c = 1.0;      // novel-view color
  double lambda_sigma = 0.1;  // novel-view density/mask
  double lambda_sr = 0.5;     // super-resolution patches
  int nv_start_iteration = 0; // novel-view terms contribute 0 before this
};

struct LossBreakdown {
  double rec = 0, cont = 0, sr = 0, nv_c = 0, nv_sigma = 0;
  double total = 0;
  int iteration = 0;
};

/// Sum of squared RGB differences over a ray batch. residuals (optional)
/// receives dLoss/dPred per ray.
double loss_rec(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt,
                std::vector<Vec3>* residuals);

/// Temporal continuity over a 3-frame window starting at frame window_start:
/// sum over adjacent pairs and voxels of squared activated-density
/// differences. Gradients (scaled by grad_scale) go straight into accum.
double loss_cont(const RadianceFieldParams& params, int window_start,
                 GradientAccumulator* accum = nullptr, double grad_scale = 1.0);

/// Novel-view targets for one ray: premultiplied pseudo-GT color and mask.
struct NvTarget {
  Vec3 rgb;
  double mask = 0;
};

struct NvLoss {
  double nv_c = 0, nv_sigma = 0;
  std::vector<Vec3> d_color;       // dNvC/dPredColor
  std::vector<double> d_fg_opacity; // dNvSigma/dPredFgOpacity
};

NvLoss loss_nv(const std::vector<RayRender>& pred, const std::vector<NvTarget>& target);

/// One feature map produced by an extractor layer; the layer weight is the
/// reciprocal of its element count.
struct FeatureLayer {
  ImageBuffer data;
  std::size_t neurons() const { return data.data.size(); }
};

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::vector<FeatureLayer> extract(const ImageBuffer& patch) const = 0;
  /// d(sum_l dot(layer_grads[l], F_l(patch))) / d(patch).
  virtual ImageBuffer backprop(const ImageBuffer& patch,
                               const std::vector<ImageBuffer>& layer_grads) const = 0;
};

/// Default deterministic extractor: identity, horizontal-gradient and
/// vertical-gradient layers (central differences, edge-clamped).
class GradientFeatureExtractor : public FeatureExtractor {
 public:
  std::vector<FeatureLayer> extract(const ImageBuffer& patch) const override;
  ImageBuffer backprop(const ImageBuffer& patch,
                       const std::vector<ImageBuffer>& layer_grads) const override;
};

/// Catmull-Rom bicubic 2x upsampling (edge-clamped) and its transpose.
ImageBuffer upsample_bicubic2x(const ImageBuffer& img);
ImageBuffer upsample_bicubic2x_transpose(const ImageBuffer& grad_hi);

struct SrLoss {
  double value = 0;
  ImageBuffer d_lowres;  // dLoss/d(low-res rendered patch)
};

/// L1 between the bicubically upsampled rendered patch and the reference,
/// plus per-layer-weighted L1 over extractor features.
SrLoss loss_sr(const ImageBuffer& lowres_pred, const ImageBuffer& highres_ref,
               const FeatureExtractor& extractor);

/// Combines the terms: total = rec + cont + lambda_sr*sr and, once iteration
/// reaches nv_start_iteration, + lambda_c*nv_c + lambda_sigma*nv_sigma.
LossBreakdown total_loss(double rec, double cont, double sr, double nv_c, double nv_sigma,
                         const LossWeights& weights, int iteration);

}  // namespace exdn
