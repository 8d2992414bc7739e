// Copyright 2026 The exdn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "exdn/image.hpp"

namespace exdn {

struct TooSmall : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// 10*log10(1/MSE) over float values in [0,1]; +infinity for identical
/// inputs. Throws ShapeMismatch on differing dimensions.
double psnr(const ImageBuffer& a, const ImageBuffer& b);

/// Mean local SSIM, 11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03,
/// dynamic range 1, per channel then averaged. Requires min side >= 11.
double ssim(const ImageBuffer& a, const ImageBuffer& b);

/// PSNR restricted to pixels where region > 0.5; +infinity when the region
/// is empty or error-free.
double psnr_masked(const ImageBuffer& a, const ImageBuffer& b, const ImageBuffer& region);

/// Per-pixel squared error through a fixed color ramp, normalized to the
/// image maximum. Ramp stops (t -> rgb): 0 -> (0,0,0.25), 0.25 -> (0,0,1),
/// 0.5 -> (0,1,1), 0.75 -> (1,1,0), 1 -> (1,0,0).
ImageBuffer error_heatmap(const ImageBuffer& a, const ImageBuffer& b);

struct ViewMetric {
  std::string view_id;
  double psnr = 0;
  double ssim = 0;
};

struct MetricReport {
  std::string tag;
  std::vector<ViewMetric> views;
  double mean_psnr = 0;
  double mean_ssim = 0;

  /// Recomputes the aggregates as plain arithmetic means.
  void finalize();
};

void print_table(const MetricReport& report, std::ostream& os);
void write_csv(const MetricReport& report, const std::string& path);

}  // namespace exdn
