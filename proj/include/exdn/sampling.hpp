// Copyright 2026 The exdn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "exdn/image.hpp"
#include "exdn/rng.hpp"

namespace exdn {

/// Inclusive pixel rectangle.
struct BBox2i {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;

  int width() const { return x1 - x0 + 1; }
  int height() const { return y1 - y0 + 1; }
  bool operator==(const BBox2i&) const = default;
};

struct SamplingStrategy {
  enum class Kind { kGlobal, kMaskOnly, kBlurredMask, kPaddedBBox };
  Kind kind = Kind::kPaddedBBox;
  int pad = 2;              // kPaddedBBox
  double blur_sigma = 2.0;  // kBlurredMask

  static SamplingStrategy global() { return {Kind::kGlobal, 0, 0}; }
  static SamplingStrategy mask_only() { return {Kind::kMaskOnly, 0, 0}; }
  static SamplingStrategy blurred(double sigma = 2.0) { return {Kind::kBlurredMask, 0, sigma}; }
  static SamplingStrategy padded_bbox(int pad = 2) { return {Kind::kPaddedBBox, pad, 0}; }
};

/// Parse "global" | "mask" | "blurred" | "padded"; throws std::invalid_argument.
SamplingStrategy parse_strategy(const std::string& name, int pad = 2);
std::string strategy_name(const SamplingStrategy& s);

struct PixelBatch {
  std::vector<std::pair<int, int>> pixels;  // (px, py), unique within the batch
  SamplingStrategy::Kind source = SamplingStrategy::Kind::kGlobal;
};

/// Tightest box containing all pixels with mask > threshold; nullopt if none.
std::optional<BBox2i> mask_bbox(const ImageBuffer& mask, double threshold);

/// Box grown by pad on all sides, clamped to the image rectangle.
BBox2i pad_bbox(const BBox2i& b, int pad, int image_width, int image_height);

/// Separable Gaussian blur, kernel radius ceil(3*sigma), edge-clamped.
ImageBuffer gaussian_blur_mask(const ImageBuffer& mask, double sigma);

/// n unique pixels from the strategy's region (threshold 0.5 for mask-based
/// regions); falls back to the full raster when the region is empty. n is
/// capped at the region size. Deterministic per rng state.
PixelBatch sample_pixels(const SamplingStrategy& strategy, const ImageBuffer& mask, int n,
                         Rng& rng);

}  // namespace exdn
