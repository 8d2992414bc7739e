// Copyright 2026 The exdn Authors
// SPDX-License-Identifier: Apache-2.0

#include "exdn/render.hpp"

#include <cmath>
#include <cstring>

#include "exdn/parallel.hpp"

namespace exdn {

MarchSamples march(const Ray& ray, int n_samples, bool stratified, SplitMix& rng) {
  if (ray.misses()) throw EmptyInterval("march: ray misses scene bounds");
  if (n_samples < 2) throw EmptyInterval("march: need at least 2 samples");
  MarchSamples s;
  s.t.resize(n_samples);
  s.delta.resize(n_samples);
  const double width = (ray.t_far - ray.t_near) / n_samples;
  for (int i = 0; i < n_samples; ++i) {
    const double u = stratified ? rng.uniform() : 0.5;
    s.t[i] = ray.t_near + (i + u) * width;
    s.delta[i] = width;
  }
  return s;
}

namespace {

// Per-sample state cached by the forward sweep for the backward sweep.
struct SampleRec {
  TrilinearStencil st_bg, st_fg;
  FieldSample bg, fg;
  Vec3 comp_rgb;
  double alpha = 0, alpha_fg = 0;
  double trans = 1, trans_fg = 1;  // transmittance before this sample
};

struct RayChain {
  RayRender out;
  std::vector<SampleRec> recs;  // filled only when keep_recs
};

void run_chain(const RadianceFieldParams& params, const Ray& ray, int frame, RenderMode mode,
               const MarchSamples& samples, bool keep_recs, RayChain& chain) {
  const bool use_bg = mode != RenderMode::kForegroundOnly;
  const bool use_fg = mode != RenderMode::kBackgroundOnly;
  const std::vector<float>* fg_grid = use_fg ? &params.fg[frame - 1] : nullptr;

  const int n = static_cast<int>(samples.t.size());
  if (keep_recs) chain.recs.resize(n);

  Vec3 color;
  double trans = 1.0, trans_fg = 1.0;
  for (int i = 0; i < n; ++i) {
    const Vec3 x = ray.origin + ray.direction * samples.t[i];
    SampleRec rec;
    rec.trans = trans;
    rec.trans_fg = trans_fg;

    if (use_bg) {
      rec.st_bg = make_stencil(params.bg_bounds, params.bg_res, x);
      if (rec.st_bg.inside) {
        double raw[4];
        raw_at(params.bg, rec.st_bg, raw);
        rec.bg = activate(raw);
      }
    }
    if (use_fg) {
      rec.st_fg = make_stencil(params.fg_bounds, params.fg_res, x);
      if (rec.st_fg.inside) {
        double raw[4];
        raw_at(*fg_grid, rec.st_fg, raw);
        rec.fg = activate(raw);
      }
    }

    double sigma;
    if (mode == RenderMode::kFull) {
      const FieldSample comp = composite_branches(rec.bg, rec.fg);
      sigma = comp.density;
      rec.comp_rgb = comp.rgb;
    } else if (mode == RenderMode::kForegroundOnly) {
      sigma = rec.fg.density;
      rec.comp_rgb = rec.fg.rgb;
    } else {
      sigma = rec.bg.density;
      rec.comp_rgb = rec.bg.rgb;
    }

    rec.alpha = 1.0 - std::exp(-sigma * samples.delta[i]);
    rec.alpha_fg = use_fg ? 1.0 - std::exp(-rec.fg.density * samples.delta[i]) : 0.0;

    color += rec.comp_rgb * (trans * rec.alpha);
    trans *= 1.0 - rec.alpha;
    trans_fg *= 1.0 - rec.alpha_fg;

    if (keep_recs) chain.recs[i] = rec;
  }
  chain.out.color = color;
  chain.out.opacity = 1.0 - trans;
  chain.out.fg_opacity = 1.0 - trans_fg;
}

}  // namespace

RayRender render_ray(const RadianceFieldParams& params, const Ray& ray, int frame,
                     RenderMode mode, const MarchSamples& samples) {
  if (frame < 1 || frame > params.n_frames)
    throw FrameOutOfRange("render_ray: frame out of range");
  if (ray.misses()) throw EmptyInterval("render_ray: ray misses scene bounds");
  RayChain chain;
  run_chain(params, ray, frame, mode, samples, /*keep_recs=*/false, chain);
  return chain.out;
}

ImageRender render_image(const RadianceFieldParams& params, const CameraPose& pose, int frame,
                         RenderMode mode, int n_samples, int threads) {
  const Intrinsics& k = pose.intrinsics;
  ImageRender img;
  img.rgb = ImageBuffer(k.width, k.height, 3);
  img.opacity = ImageBuffer(k.width, k.height, 1);
  const Box3& box = mode == RenderMode::kForegroundOnly ? params.fg_bounds : params.bg_bounds;

  parallel_for(static_cast<std::size_t>(k.height), 1, [&](std::size_t y0, std::size_t y1) {
    SplitMix rng(0);  // unused: midpoint sampling
    RayChain chain;
    for (std::size_t y = y0; y < y1; ++y) {
      for (int x = 0; x < k.width; ++x) {
        const Ray ray = generate_ray(pose, x, static_cast<int>(y), frame, box);
        if (ray.misses()) continue;
        const MarchSamples s = march(ray, n_samples, false, rng);
        run_chain(params, ray, frame, mode, s, false, chain);
        img.rgb.at(x, static_cast<int>(y), 0) = static_cast<float>(chain.out.color.x);
        img.rgb.at(x, static_cast<int>(y), 1) = static_cast<float>(chain.out.color.y);
        img.rgb.at(x, static_cast<int>(y), 2) = static_cast<float>(chain.out.color.z);
        img.opacity.at(x, static_cast<int>(y)) =
            static_cast<float>(mode == RenderMode::kForegroundOnly ? chain.out.fg_opacity
                                                                   : chain.out.opacity);
      }
    }
  }, threads);
  return img;
}

void GradientAccumulator::resize(std::size_t n_params) {
  value_.assign(n_params, 0.0);
  stamp_.assign(n_params, 0);
  touched_.clear();
  epoch_ = 1;
}

void GradientAccumulator::clear() {
  touched_.clear();
  ++epoch_;
  if (epoch_ == 0) {  // stamp wraparound: hard reset
    std::fill(stamp_.begin(), stamp_.end(), 0);
    epoch_ = 1;
  }
}

void GradientAccumulator::add(std::size_t idx, double v) {
  if (stamp_[idx] != epoch_) {
    stamp_[idx] = epoch_;
    value_[idx] = v;
    touched_.push_back(static_cast<std::uint32_t>(idx));
  } else {
    value_[idx] += v;
  }
}

double GradientAccumulator::value(std::size_t idx) const {
  return stamp_[idx] == epoch_ ? value_[idx] : 0.0;
}

RenderBatch forward_batch(const RadianceFieldParams& params, std::vector<Ray> rays, int frame,
                          RenderMode mode, int n_samples, bool stratified,
                          std::uint64_t jitter_seed, int threads) {
  if (frame < 1 || frame > params.n_frames)
    throw FrameOutOfRange("forward_batch: frame out of range");
  RenderBatch batch;
  batch.rays = std::move(rays);
  batch.frame = frame;
  batch.mode = mode;
  batch.n_samples = n_samples;
  batch.stratified = stratified;
  batch.jitter_seed = jitter_seed;
  batch.params_version = params.version;
  batch.outputs.resize(batch.rays.size());

  parallel_for(batch.rays.size(), 8, [&](std::size_t r0, std::size_t r1) {
    RayChain chain;
    for (std::size_t r = r0; r < r1; ++r) {
      const Ray& ray = batch.rays[r];
      if (ray.misses()) {
        batch.outputs[r] = RayRender{};
        continue;
      }
      SplitMix rng(jitter_seed, r, 0);
      const MarchSamples s = march(ray, n_samples, stratified, rng);
      run_chain(params, ray, frame, mode, s, false, chain);
      batch.outputs[r] = chain.out;
    }
  }, threads);
  return batch;
}

namespace {

struct GradEntry {
  std::uint32_t idx;
  double val;
};

// Small open-addressing scratch map that dedups one ray's contributions
// before they are flushed in insertion order.
class RayScratch {
 public:
  void reset(std::size_t min_capacity) {
    std::size_t cap = 64;
    while (cap < min_capacity * 2) cap <<= 1;
    if (cap != key_.size()) {
      key_.assign(cap, kEmpty);
      val_.resize(cap);
      mask_ = cap - 1;
    }
    used_.clear();
  }

  void add(std::uint32_t idx, double v) {
    std::size_t slot = (idx * 0x9e3779b1u) & mask_;
    for (;;) {
      if (key_[slot] == idx) {
        val_[slot] += v;
        return;
      }
      if (key_[slot] == kEmpty) {
        key_[slot] = idx;
        val_[slot] = v;
        used_.push_back(static_cast<std::uint32_t>(slot));
        return;
      }
      slot = (slot + 1) & mask_;
    }
  }

  void flush(std::vector<GradEntry>& out) {
    for (std::uint32_t slot : used_) {
      out.push_back({key_[slot], val_[slot]});
      key_[slot] = kEmpty;
    }
    used_.clear();
  }

 private:
  static constexpr std::uint32_t kEmpty = 0xffffffffu;
  std::vector<std::uint32_t> key_;
  std::vector<double> val_;
  std::vector<std::uint32_t> used_;
  std::size_t mask_ = 0;
};

constexpr std::size_t kBackwardChunk = 16;  // rays per deterministic merge unit

void backward_ray(const RadianceFieldParams& params, const Ray& ray, int frame, RenderMode mode,
                  const MarchSamples& samples, const RayGradWeights& w, std::size_t fg_offset,
                  RayScratch& scratch, std::vector<GradEntry>& out) {
  RayChain chain;
  run_chain(params, ray, frame, mode, samples, /*keep_recs=*/true, chain);

  const bool use_bg = mode != RenderMode::kForegroundOnly;
  const bool use_fg = mode != RenderMode::kBackgroundOnly;
  const int n = static_cast<int>(chain.recs.size());

  scratch.reset(static_cast<std::size_t>(n) * 64 + 64);

  // Suffix state for the stable backward recurrences:
  //   dC/dalpha_i     = T_i * (c_i - S_i),  S_i = sum_{k>i} alpha_k c_k prod_{i<j<k}(1-alpha_j)
  //   dOpac/dalpha_i  = T_i * Q_i,          Q_i = prod_{j>i}(1-alpha_j)
  Vec3 suffix_color;
  double suffix_trans = 1.0, suffix_trans_fg = 1.0;

  for (int i = n - 1; i >= 0; --i) {
    const SampleRec& rec = chain.recs[i];
    const double delta = samples.delta[i];

    const Vec3 dc_dalpha = (rec.comp_rgb - suffix_color) * rec.trans;
    double g_alpha = dot(w.d_color, dc_dalpha) + w.d_opacity * rec.trans * suffix_trans;
    const double g_sigma = g_alpha * delta * (1.0 - rec.alpha);
    const Vec3 g_rgb = w.d_color * (rec.trans * rec.alpha);

    double g_sigma_bg = 0, g_sigma_fg = 0;
    Vec3 g_rgb_bg, g_rgb_fg;
    if (mode == RenderMode::kFull) {
      const double denom = rec.bg.density + rec.fg.density + kCompositeEps;
      g_sigma_bg = g_sigma;
      g_sigma_fg = g_sigma;
      g_sigma_bg += dot(g_rgb, (rec.bg.rgb - rec.comp_rgb) / denom);
      g_sigma_fg += dot(g_rgb, (rec.fg.rgb - rec.comp_rgb) / denom);
      g_rgb_bg = g_rgb * (rec.bg.density / denom);
      g_rgb_fg = g_rgb * (rec.fg.density / denom);
    } else if (mode == RenderMode::kForegroundOnly) {
      g_sigma_fg = g_sigma;
      g_rgb_fg = g_rgb;
    } else {
      g_sigma_bg = g_sigma;
      g_rgb_bg = g_rgb;
    }

    if (use_fg && w.d_fg_opacity != 0.0) {
      const double g_alpha_fg = w.d_fg_opacity * rec.trans_fg * suffix_trans_fg;
      g_sigma_fg += g_alpha_fg * delta * (1.0 - rec.alpha_fg);
    }

    // Activation chain. softplus'(raw) = logistic(raw) = 1 - exp(-sigma),
    // and sigmoid'(raw) = s * (1 - s), both recoverable from activations.
    if (use_bg && rec.st_bg.inside) {
      const double g_raw_d = g_sigma_bg * (1.0 - std::exp(-rec.bg.density));
      const double g_raw_r = g_rgb_bg.x * rec.bg.rgb.x * (1.0 - rec.bg.rgb.x);
      const double g_raw_g = g_rgb_bg.y * rec.bg.rgb.y * (1.0 - rec.bg.rgb.y);
      const double g_raw_b = g_rgb_bg.z * rec.bg.rgb.z * (1.0 - rec.bg.rgb.z);
      for (int k = 0; k < 8; ++k) {
        const double wk = rec.st_bg.weight[k];
        if (wk == 0.0) continue;
        const std::uint32_t base =
            static_cast<std::uint32_t>(rec.st_bg.voxel[k] * kChannelsPerVoxel);
        scratch.add(base + 0, wk * g_raw_d);
        scratch.add(base + 1, wk * g_raw_r);
        scratch.add(base + 2, wk * g_raw_g);
        scratch.add(base + 3, wk * g_raw_b);
      }
    }
    if (use_fg && rec.st_fg.inside) {
      const double g_raw_d = g_sigma_fg * (1.0 - std::exp(-rec.fg.density));
      const double g_raw_r = g_rgb_fg.x * rec.fg.rgb.x * (1.0 - rec.fg.rgb.x);
      const double g_raw_g = g_rgb_fg.y * rec.fg.rgb.y * (1.0 - rec.fg.rgb.y);
      const double g_raw_b = g_rgb_fg.z * rec.fg.rgb.z * (1.0 - rec.fg.rgb.z);
      for (int k = 0; k < 8; ++k) {
        const double wk = rec.st_fg.weight[k];
        if (wk == 0.0) continue;
        const std::uint32_t base =
            static_cast<std::uint32_t>(fg_offset + rec.st_fg.voxel[k] * kChannelsPerVoxel);
        scratch.add(base + 0, wk * g_raw_d);
        scratch.add(base + 1, wk * g_raw_r);
        scratch.add(base + 2, wk * g_raw_g);
        scratch.add(base + 3, wk * g_raw_b);
      }
    }

    suffix_color = rec.comp_rgb * rec.alpha + suffix_color * (1.0 - rec.alpha);
    suffix_trans *= 1.0 - rec.alpha;
    suffix_trans_fg *= 1.0 - rec.alpha_fg;
  }

  scratch.flush(out);
}

}  // namespace

void backward_batch(const RadianceFieldParams& params, const RenderBatch& batch,
                    const std::vector<RayGradWeights>& weights, GradientAccumulator& accum,
                    int threads) {
  if (batch.params_version != params.version)
    throw StaleCache("backward_batch: parameters changed since forward pass");
  if (weights.size() != batch.rays.size())
    throw ShapeMismatch("backward_batch: weights/rays size mismatch");
  if (accum.size() != params.total_param_count())
    accum.resize(params.total_param_count());

  const std::size_t fg_offset = batch.mode == RenderMode::kBackgroundOnly
                                    ? 0
                                    : params.frame_offset(batch.frame);
  const std::size_t n_rays = batch.rays.size();
  const std::size_t n_chunks = (n_rays + kBackwardChunk - 1) / kBackwardChunk;

  // Chunks are produced in parallel but merged strictly in chunk order; wave
  // processing only bounds transient memory and cannot change the merge
  // order, so gradients are bit-identical for every worker count.
  constexpr std::size_t kWaveChunks = 32;
  std::vector<std::vector<GradEntry>> wave(kWaveChunks);
  for (std::size_t wave_begin = 0; wave_begin < n_chunks; wave_begin += kWaveChunks) {
    const std::size_t wave_end = std::min(n_chunks, wave_begin + kWaveChunks);
    parallel_for(wave_end - wave_begin, 1, [&](std::size_t i0, std::size_t i1) {
      RayScratch scratch;
      for (std::size_t i = i0; i < i1; ++i) {
        const std::size_t c = wave_begin + i;
        auto& out = wave[i];
        out.clear();
        const std::size_t r_end = std::min(n_rays, (c + 1) * kBackwardChunk);
        for (std::size_t r = c * kBackwardChunk; r < r_end; ++r) {
          const Ray& ray = batch.rays[r];
          const RayGradWeights& w = weights[r];
          if (ray.misses()) continue;
          if (w.d_color.x == 0 && w.d_color.y == 0 && w.d_color.z == 0 && w.d_opacity == 0 &&
              w.d_fg_opacity == 0)
            continue;
          SplitMix rng(batch.jitter_seed, r, 0);
          const MarchSamples s = march(ray, batch.n_samples, batch.stratified, rng);
          backward_ray(params, ray, batch.frame, batch.mode, s, w, fg_offset, scratch, out);
        }
      }
    }, threads);
    for (std::size_t i = 0; i < wave_end - wave_begin; ++i)
      for (const GradEntry& e : wave[i]) accum.add(e.idx, e.val);
  }
}

}  // namespace exdn
