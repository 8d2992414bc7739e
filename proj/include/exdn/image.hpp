// Copyright 2026 The exdn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "exdn/errors.hpp"

namespace exdn {

/// Interleaved float image, values nominally in [0, 1]. channels is 1 or 3.
struct ImageBuffer {
  int width = 0, height = 0, channels = 0;
  std::vector<float> data;

  ImageBuffer() = default;
  ImageBuffer(int w, int h, int c) : width(w), height(h), channels(c),
                                     data(static_cast<std::size_t>(w) * h * c, 0.0f) {}

  float& at(int x, int y, int c = 0) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int x, int y, int c = 0) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool same_shape(const ImageBuffer& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

/// 8-bit PNG I/O. RGB for 3-channel buffers, grayscale for 1-channel.
/// Values are clamped to [0,1] and quantized with round-to-nearest.
void write_png(const std::string& path, const ImageBuffer& img);
ImageBuffer read_png(const std::string& path);

}  // namespace exdn
