// Copyright 2026 The exdn Authors
// SPDX-License-Identifier: Apache-2.0

#include "exdn/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace exdn {

SamplingStrategy parse_strategy(const std::string& name, int pad) {
  if (name == "global") return SamplingStrategy::global();
  if (name == "mask") return SamplingStrategy::mask_only();
  if (name == "blurred") return SamplingStrategy::blurred();
  if (name == "padded") return SamplingStrategy::padded_bbox(pad);
  throw std::invalid_argument("unknown sampling strategy: " + name);
}

std::string strategy_name(const SamplingStrategy& s) {
  switch (s.kind) {
    case SamplingStrategy::Kind::kGlobal: return "global";
    case SamplingStrategy::Kind::kMaskOnly: return "mask";
    case SamplingStrategy::Kind::kBlurredMask: return "blurred";
    case SamplingStrategy::Kind::kPaddedBBox: return "padded";
  }
  return "?";
}

std::optional<BBox2i> mask_bbox(const ImageBuffer& mask, double threshold) {
  BBox2i b{mask.width, mask.height, -1, -1};
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      if (mask.at(x, y) > threshold) {
        b.x0 = std::min(b.x0, x);
        b.y0 = std::min(b.y0, y);
        b.x1 = std::max(b.x1, x);
        b.y1 = std::max(b.y1, y);
      }
  if (b.x1 < b.x0) return std::nullopt;
  return b;
}

BBox2i pad_bbox(const BBox2i& b, int pad, int image_width, int image_height) {
  return {std::max(0, b.x0 - pad), std::max(0, b.y0 - pad),
          std::min(image_width - 1, b.x1 + pad), std::min(image_height - 1, b.y1 + pad)};
}

ImageBuffer gaussian_blur_mask(const ImageBuffer& mask, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (double& k : kernel) k /= sum;

  const int w = mask.width, h = mask.height;
  ImageBuffer tmp(w, h, 1), out(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * mask.at(std::clamp(x + i, 0, w - 1), y);
      tmp.at(x, y) = static_cast<float>(acc);
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[i + radius] * tmp.at(x, std::clamp(y + i, 0, h - 1));
      out.at(x, y) = static_cast<float>(std::clamp(acc, 0.0, 1.0));
    }
  return out;
}

namespace {

constexpr double kMaskThreshold = 0.5;

std::vector<std::pair<int, int>> strategy_region(const SamplingStrategy& strategy,
                                                 const ImageBuffer& mask) {
  std::vector<std::pair<int, int>> region;
  switch (strategy.kind) {
    case SamplingStrategy::Kind::kGlobal:
      break;
    case SamplingStrategy::Kind::kMaskOnly:
      for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
          if (mask.at(x, y) > kMaskThreshold) region.emplace_back(x, y);
      break;
    case SamplingStrategy::Kind::kBlurredMask: {
      const ImageBuffer blurred = gaussian_blur_mask(mask, strategy.blur_sigma);
      for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
          if (blurred.at(x, y) > 0.0f) region.emplace_back(x, y);
      break;
    }
    case SamplingStrategy::Kind::kPaddedBBox: {
      if (auto b = mask_bbox(mask, kMaskThreshold)) {
        const BBox2i p = pad_bbox(*b, strategy.pad, mask.width, mask.height);
        for (int y = p.y0; y <= p.y1; ++y)
          for (int x = p.x0; x <= p.x1; ++x) region.emplace_back(x, y);
      }
      break;
    }
  }
  return region;
}

}  // namespace

PixelBatch sample_pixels(const SamplingStrategy& strategy, const ImageBuffer& mask, int n,
                         Rng& rng) {
  PixelBatch batch;
  batch.source = strategy.kind;

  std::vector<std::pair<int, int>> region = strategy_region(strategy, mask);
  const bool global = strategy.kind == SamplingStrategy::Kind::kGlobal || region.empty();

  const std::size_t region_size =
      global ? static_cast<std::size_t>(mask.width) * mask.height : region.size();
  const std::size_t want = std::min<std::size_t>(n, region_size);

  std::unordered_set<std::int64_t> seen;
  seen.reserve(want * 2);
  batch.pixels.reserve(want);
  while (batch.pixels.size() < want) {
    std::pair<int, int> px;
    if (global) {
      px.first = std::uniform_int_distribution<int>(0, mask.width - 1)(rng);
      px.second = std::uniform_int_distribution<int>(0, mask.height - 1)(rng);
    } else {
      px = region[std::uniform_int_distribution<std::size_t>(0, region.size() - 1)(rng)];
    }
    const std::int64_t key = static_cast<std::int64_t>(px.second) * mask.width + px.first;
    if (seen.insert(key).second) batch.pixels.push_back(px);
  }
  return batch;
}

}  // namespace exdn
