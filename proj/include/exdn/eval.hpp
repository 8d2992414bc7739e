// Copyright 2026 The exdn Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "exdn/field.hpp"
#include "exdn/harness.hpp"
#include "exdn/metrics.hpp"

namespace exdn {

/// Quantize to the 8-bit grid in place; renders are compared post-quantization
/// so PNG round trips are part of the measured pipeline.
void quantize8(ImageBuffer& img);

/// The held-out evaluation views: elevation 0, azimuth -30..30 at 5 degree
/// steps excluding 0. Returns indices into manifest.dome_views.
std::vector<int> heldout_view_indices(const DatasetManifest& manifest);

/// Renders the field at every held-out view over all frames and scores
/// PSNR/SSIM against the dome ground truth. Per-view entries are means over
/// frames. When out_dir is non-empty, predictions and error heatmaps are
/// written there.
MetricReport evaluate_field(const RadianceFieldParams& params, const Dataset& dataset,
                            int n_samples, int threads, const std::string& tag,
                            const std::string& out_dir = "");

/// Same scoring for a directory of pre-rendered predictions laid out like the
/// dataset's dome tree (dome/e{EE}_a{+AA}/{t:04}.png).
MetricReport evaluate_prediction_dir(const std::string& pred_dir, const Dataset& dataset,
                                     const std::string& tag);

/// Foreground-focused scores for the ablation comparisons: PSNR over the
/// analytic object region of full renders, and IoU of the rendered
/// foreground opacity (threshold 0.5) against the analytic mask.
struct FgReport {
  double fg_psnr = 0;
  double mask_iou = 0;
};

FgReport evaluate_foreground(const RadianceFieldParams& params, const Dataset& dataset,
                             int n_samples, int threads);

}  // namespace exdn
