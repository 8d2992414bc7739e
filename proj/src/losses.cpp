// Copyright 2026 The exdn Authors
// SPDX-License-Identifier: Apache-2.0

#include "exdn/losses.hpp"

#include <cmath>

namespace exdn {

double loss_rec(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt,
                std::vector<Vec3>* residuals) {
  if (pred.size() != gt.size()) throw ShapeMismatch("loss_rec: batch size mismatch");
  if (residuals) residuals->resize(pred.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Vec3 d = pred[i] - gt[i];
    sum += dot(d, d);
    if (residuals) (*residuals)[i] = d * 2.0;
  }
  return sum;
}

double loss_cont(const RadianceFieldParams& params, int window_start,
                 GradientAccumulator* accum, double grad_scale) {
  if (window_start < 1 || window_start + 2 > params.n_frames)
    throw FrameOutOfRange("loss_cont: 3-frame window out of range");
  if (accum && accum->size() != params.total_param_count())
    accum->resize(params.total_param_count());

  double sum = 0.0;
  const std::size_t n_vox = params.fg_res.voxels();
  for (int t = window_start; t < window_start + 2; ++t) {
    const std::vector<float>& ga = params.fg[t - 1];
    const std::vector<float>& gb = params.fg[t];
    const std::size_t off_a = params.frame_offset(t);
    const std::size_t off_b = params.frame_offset(t + 1);
    for (std::size_t v = 0; v < n_vox; ++v) {
      const std::size_t p = v * kChannelsPerVoxel;
      const double sa = softplus(ga[p]);
      const double sb = softplus(gb[p]);
      const double d = sb - sa;
      sum += d * d;
      if (accum) {
        // softplus'(raw) = 1 - exp(-activated)
        accum->add(off_b + p, grad_scale * 2.0 * d * (1.0 - std::exp(-sb)));
        accum->add(off_a + p, grad_scale * -2.0 * d * (1.0 - std::exp(-sa)));
      }
    }
  }
  return sum;
}

NvLoss loss_nv(const std::vector<RayRender>& pred, const std::vector<NvTarget>& target) {
  if (pred.size() != target.size()) throw ShapeMismatch("loss_nv: batch size mismatch");
  NvLoss out;
  out.d_color.resize(pred.size());
  out.d_fg_opacity.resize(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Vec3 dc = pred[i].color - target[i].rgb;
    const double ds = pred[i].fg_opacity - target[i].mask;
    out.nv_c += dot(dc, dc);
    out.nv_sigma += ds * ds;
    out.d_color[i] = dc * 2.0;
    out.d_fg_opacity[i] = 2.0 * ds;
  }
  return out;
}

std::vector<FeatureLayer> GradientFeatureExtractor::extract(const ImageBuffer& patch) const {
  const int w = patch.width, h = patch.height, c = patch.channels;
  FeatureLayer ident{patch};
  FeatureLayer gx{ImageBuffer(w, h, c)}, gy{ImageBuffer(w, h, c)};
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        gx.data.at(x, y, ch) =
            0.5f * (patch.at(std::min(x + 1, w - 1), y, ch) - patch.at(std::max(x - 1, 0), y, ch));
        gy.data.at(x, y, ch) =
            0.5f * (patch.at(x, std::min(y + 1, h - 1), ch) - patch.at(x, std::max(y - 1, 0), ch));
      }
  std::vector<FeatureLayer> layers;
  layers.push_back(std::move(ident));
  layers.push_back(std::move(gx));
  layers.push_back(std::move(gy));
  return layers;
}

ImageBuffer GradientFeatureExtractor::backprop(const ImageBuffer& patch,
                                               const std::vector<ImageBuffer>& layer_grads) const {
  if (layer_grads.size() != 3) throw ShapeMismatch("GradientFeatureExtractor: expected 3 layers");
  const int w = patch.width, h = patch.height, c = patch.channels;
  ImageBuffer out(w, h, c);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = layer_grads[0].data[i];
  // Transpose of the clamped central differences: scatter +-1/2 back to the
  // clamped source pixels.
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        const float gxv = layer_grads[1].at(x, y, ch);
        out.at(std::min(x + 1, w - 1), y, ch) += 0.5f * gxv;
        out.at(std::max(x - 1, 0), y, ch) -= 0.5f * gxv;
        const float gyv = layer_grads[2].at(x, y, ch);
        out.at(x, std::min(y + 1, h - 1), ch) += 0.5f * gyv;
        out.at(x, std::max(y - 1, 0), ch) -= 0.5f * gyv;
      }
  return out;
}

namespace {

// Catmull-Rom kernel (a = -0.5).
double cubic_weight(double t) {
  t = std::abs(t);
  if (t <= 1.0) return 1.5 * t * t * t - 2.5 * t * t + 1.0;
  if (t < 2.0) return -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0;
  return 0.0;
}

// Tap table for one 2x-upsampled axis: output index o samples input around
// o/2 - 0.25 with 4 clamped taps.
struct Tap {
  int idx[4];
  double w[4];
};

std::vector<Tap> make_taps(int n_in) {
  std::vector<Tap> taps(2 * n_in);
  for (int o = 0; o < 2 * n_in; ++o) {
    const double src = 0.5 * (o + 0.5) - 0.5;
    const int base = static_cast<int>(std::floor(src)) - 1;
    Tap t;
    for (int k = 0; k < 4; ++k) {
      t.idx[k] = std::clamp(base + k, 0, n_in - 1);
      t.w[k] = cubic_weight(src - (base + k));
    }
    taps[o] = t;
  }
  return taps;
}

}  // namespace

ImageBuffer upsample_bicubic2x(const ImageBuffer& img) {
  const int w = img.width, h = img.height, c = img.channels;
  const std::vector<Tap> tx = make_taps(w), ty = make_taps(h);

  ImageBuffer mid(2 * w, h, c);  // horizontal pass
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < 2 * w; ++x) {
      const Tap& t = tx[x];
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) acc += t.w[k] * img.at(t.idx[k], y, ch);
        mid.at(x, y, ch) = static_cast<float>(acc);
      }
    }
  ImageBuffer out(2 * w, 2 * h, c);  // vertical pass
  for (int y = 0; y < 2 * h; ++y) {
    const Tap& t = ty[y];
    for (int x = 0; x < 2 * w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int k = 0; k < 4; ++k) acc += t.w[k] * mid.at(x, t.idx[k], ch);
        out.at(x, y, ch) = static_cast<float>(acc);
      }
  }
  return out;
}

ImageBuffer upsample_bicubic2x_transpose(const ImageBuffer& grad_hi) {
  const int w2 = grad_hi.width, h2 = grad_hi.height, c = grad_hi.channels;
  const int w = w2 / 2, h = h2 / 2;
  const std::vector<Tap> tx = make_taps(w), ty = make_taps(h);

  ImageBuffer mid(w2, h, c);  // transpose of the vertical pass
  for (int y = 0; y < h2; ++y) {
    const Tap& t = ty[y];
    for (int x = 0; x < w2; ++x)
      for (int ch = 0; ch < c; ++ch) {
        const float g = grad_hi.at(x, y, ch);
        if (g == 0.0f) continue;
        for (int k = 0; k < 4; ++k) mid.at(x, t.idx[k], ch) += static_cast<float>(t.w[k] * g);
      }
  }
  ImageBuffer out(w, h, c);  // transpose of the horizontal pass
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w2; ++x) {
      const Tap& t = tx[x];
      for (int ch = 0; ch < c; ++ch) {
        const float g = mid.at(x, y, ch);
        if (g == 0.0f) continue;
        for (int k = 0; k < 4; ++k) out.at(t.idx[k], y, ch) += static_cast<float>(t.w[k] * g);
      }
    }
  return out;
}

SrLoss loss_sr(const ImageBuffer& lowres_pred, const ImageBuffer& highres_ref,
               const FeatureExtractor& extractor) {
  const ImageBuffer up = upsample_bicubic2x(lowres_pred);
  if (!up.same_shape(highres_ref))
    throw ShapeMismatch("loss_sr: upsampled prediction does not match reference resolution");

  SrLoss out;
  ImageBuffer d_up(up.width, up.height, up.channels);
  for (std::size_t i = 0; i < up.data.size(); ++i) {
    const double d = static_cast<double>(up.data[i]) - highres_ref.data[i];
    out.value += std::abs(d);
    d_up.data[i] = static_cast<float>(d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0));
  }

  const std::vector<FeatureLayer> fp = extractor.extract(up);
  const std::vector<FeatureLayer> fr = extractor.extract(highres_ref);
  if (fp.size() != fr.size()) throw ShapeMismatch("loss_sr: extractor layer count mismatch");
  std::vector<ImageBuffer> layer_grads(fp.size());
  for (std::size_t l = 0; l < fp.size(); ++l) {
    if (!fp[l].data.same_shape(fr[l].data))
      throw ShapeMismatch("loss_sr: extractor layer shape mismatch");
    const double lambda_l = 1.0 / static_cast<double>(fp[l].neurons());
    ImageBuffer& g = layer_grads[l];
    g = ImageBuffer(fp[l].data.width, fp[l].data.height, fp[l].data.channels);
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      const double d = static_cast<double>(fp[l].data.data[i]) - fr[l].data.data[i];
      out.value += lambda_l * std::abs(d);
      g.data[i] = static_cast<float>(lambda_l * (d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)));
    }
  }

  const ImageBuffer feat_back = extractor.backprop(up, layer_grads);
  for (std::size_t i = 0; i < d_up.data.size(); ++i) d_up.data[i] += feat_back.data[i];
  out.d_lowres = upsample_bicubic2x_transpose(d_up);
  return out;
}

LossBreakdown total_loss(double rec, double cont, double sr, double nv_c, double nv_sigma,
                         const LossWeights& weights, int iteration) {
  LossBreakdown b;
  b.rec = rec;
  b.cont = cont;
  b.sr = sr;
  b.iteration = iteration;
  const bool nv_active = iteration >= weights.nv_start_iteration;
  b.nv_c = nv_active ? nv_c : 0.0;
  b.nv_sigma = nv_active ? nv_sigma : 0.0;
  b.total = rec + cont + weights.lambda_sr * sr +
            (nv_active ? weights.lambda_c * nv_c + weights.lambda_sigma * nv_sigma : 0.0);
  return b;
}

}  // namespace exdn
