// Copyright 2026 The exdn Authors
// SPDX-License-Identifier: Apache-2.0

#include "exdn/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include <nlohmann/json.hpp>

namespace exdn {

namespace fs = std::filesystem;
using nlohmann::json;

LossMask parse_loss_mask(const std::string& spec) {
  if (spec.empty() || spec == "full") return LossMask{};
  LossMask m{false, false, false, false};
  if (spec == "none") return m;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, '+')) {
    if (tok == "cont") m.cont = true;
    else if (tok == "sr") m.sr = true;
    else if (tok == "nvc") m.nv_c = true;
    else if (tok == "nvs") m.nv_sigma = true;
    else throw std::invalid_argument("unknown loss term '" + tok + "'");
  }
  return m;
}

std::string loss_mask_name(const LossMask& m) {
  std::string s;
  auto app = [&](bool on, const char* name) {
    if (!on) return;
    if (!s.empty()) s += '+';
    s += name;
  };
  app(m.cont, "cont");
  app(m.sr, "sr");
  app(m.nv_c, "nvc");
  app(m.nv_sigma, "nvs");
  return s.empty() ? "none" : s;
}

TrainConfig resolve_config(TrainConfig config) {
  if (config.weights.nv_start_iteration < 0)
    config.weights.nv_start_iteration = config.iterations / 5;
  return config;
}

TrainState init_state(const TrainConfig& config, const Dataset& dataset) {
  TrainState st;
  st.params = make_field(dataset.manifest.bg_bounds, config.bg_res, dataset.manifest.fg_bounds,
                         config.fg_res, dataset.manifest.n_frames);
  st.moment1.assign(st.params.total_param_count(), 0.0f);
  st.moment2.assign(st.params.total_param_count(), 0.0f);
  st.iteration = 0;
  st.rng.seed(config.seed);
  return st;
}

Dome PgtCache::pair_dome() const {
  Dome d;
  d.azimuths_deg = azimuths_deg;
  d.elevations_deg = elevations_deg;
  return d;
}

namespace {

std::string view_name(int v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "v%02d", v);
  return buf;
}

std::string frame_dir(int t) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "t%04d", t);
  return buf;
}

Vec3 centroid_of(const GaussianSet& set) {
  Vec3 c;
  for (const Gaussian& g : set.primitives) c += g.mean;
  return c / static_cast<double>(set.primitives.size());
}

}  // namespace

void generate_pgt_cache(const Dataset& dataset, const std::string& out_dir, int threads) {
  Rng fit_rng(dataset.manifest.seed);
  const std::unique_ptr<SurfaceSampler> model = object_model(dataset.scene);
  const GaussianSet prior = fit_prior(*model, dataset.manifest.n_gaussians, fit_rng);
  const Vec3 center = centroid_of(prior);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("generate_pgt_cache: cannot create " + out_dir);

  json j;
  j["azimuths_deg"] = dataset.manifest.dome_azimuths_deg;
  j["elevations_deg"] = dataset.manifest.dome_elevations_deg;
  j["frames"] = json::array();

  for (int t = 1; t <= dataset.manifest.n_frames; ++t) {
    const CameraPose pose_n = dataset.primary[t - 1];
    const CameraPose pose_d = dataset.scene.prior_frame_primary(t);
    const double radius = norm(pose_d.eye() - center);
    Vec3 bearing = pose_d.eye() - center;
    bearing.y = 0;
    const std::vector<CameraPose> prior_dome =
        dome_viewpoints(center, radius, dataset.manifest.dome_azimuths_deg,
                        dataset.manifest.dome_elevations_deg, dataset.manifest.intrinsics,
                        normalized(bearing));
    const std::vector<PseudoGt> views =
        generate_pseudo_gt(prior, pose_n, pose_d, prior_dome, threads);

    const fs::path dir = fs::path(out_dir) / frame_dir(t);
    fs::create_directories(dir, ec);
    if (ec) throw IoError("generate_pgt_cache: cannot create " + dir.string());

    json jf;
    jf["t"] = t;
    jf["views"] = json::array();
    const auto az_sorted = [&] {
      std::vector<double> a = dataset.manifest.dome_azimuths_deg;
      std::sort(a.begin(), a.end());
      return a;
    }();
    for (std::size_t v = 0; v < views.size(); ++v) {
      const std::string rgb_file = frame_dir(t) + "/" + view_name(static_cast<int>(v)) + "_rgb.png";
      const std::string mask_file =
          frame_dir(t) + "/" + view_name(static_cast<int>(v)) + "_mask.png";
      write_png((fs::path(out_dir) / rgb_file).string(), views[v].view.rgb);
      write_png((fs::path(out_dir) / mask_file).string(), views[v].view.mask);
      const double e = dataset.manifest.dome_elevations_deg[v / az_sorted.size()];
      const double a = az_sorted[v % az_sorted.size()];
      jf["views"].push_back({{"elevation_deg", e}, {"azimuth_deg", a},
                             {"pose", pose_to_rows(views[v].world_pose)},
                             {"rgb", rgb_file}, {"mask", mask_file}});
    }
    j["frames"].push_back(std::move(jf));
  }
  std::ofstream out((fs::path(out_dir) / "pgt_manifest.json").string());
  if (!out) throw IoError("generate_pgt_cache: cannot write manifest");
  out << j.dump(1) << "\n";
  if (!out) throw IoError("generate_pgt_cache: manifest write failed");
}

PgtCache load_pgt_cache(const std::string& dir) {
  std::ifstream in((fs::path(dir) / "pgt_manifest.json").string());
  if (!in) throw IoError("load_pgt_cache: cannot open manifest in " + dir);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError(std::string("load_pgt_cache: parse error: ") + e.what());
  }
  PgtCache cache;
  cache.azimuths_deg = j.at("azimuths_deg").get<std::vector<double>>();
  std::sort(cache.azimuths_deg.begin(), cache.azimuths_deg.end());
  cache.elevations_deg = j.at("elevations_deg").get<std::vector<double>>();
  for (const json& jf : j.at("frames")) {
    std::vector<PgtView> views;
    for (const json& jv : jf.at("views")) {
      PgtView view;
      view.elevation_deg = jv.at("elevation_deg");
      view.azimuth_deg = jv.at("azimuth_deg");
      const auto rows = jv.at("pose").get<std::array<double, 12>>();
      view.rgb = read_png((fs::path(dir) / jv.at("rgb").get<std::string>()).string());
      view.mask = read_png((fs::path(dir) / jv.at("mask").get<std::string>()).string());
      Intrinsics intr;
      intr.width = view.rgb.width;
      intr.height = view.rgb.height;
      // fx etc. are restored by the dataset intrinsics at use time; store the
      // raster size here and let callers overwrite.
      view.world_pose = pose_from_rows(rows, intr);
      views.push_back(std::move(view));
    }
    cache.per_frame.push_back(std::move(views));
  }
  return cache;
}

namespace {

constexpr double kAdamEps = 1e-8;

// Builds primary-view rays and targets for a pixel batch.
void primary_rays(const Dataset& dataset, const RadianceFieldParams& params, int t,
                  const PixelBatch& batch, std::vector<Ray>& rays, std::vector<Vec3>& targets) {
  const CameraPose& pose = dataset.primary[t - 1];
  const ImageBuffer& frame = dataset.frames[t - 1];
  rays.clear();
  targets.clear();
  for (const auto& [px, py] : batch.pixels) {
    const Ray ray = generate_ray(pose, px, py, t, params.bg_bounds);
    if (ray.misses()) continue;
    rays.push_back(ray);
    targets.push_back({frame.at(px, py, 0), frame.at(px, py, 1), frame.at(px, py, 2)});
  }
}

}  // namespace

LossBreakdown train_step(TrainState& state, const Dataset& dataset, const PgtCache& pgt,
                         const TrainConfig& config) {
  const int iter = static_cast<int>(state.iteration);
  const int n_frames = dataset.manifest.n_frames;
  RadianceFieldParams& params = state.params;

  static thread_local GradientAccumulator accum;  // reused across steps
  if (accum.size() != params.total_param_count()) accum.resize(params.total_param_count());
  accum.clear();

  Rng& rng = state.rng;
  const bool nv_scheduled = iter >= config.weights.nv_start_iteration;
  const bool nv_enabled = nv_scheduled && (config.mask.nv_c || config.mask.nv_sigma) &&
                          !pgt.per_frame.empty();

  // All stochastic decisions happen here, in a fixed order, so the draw
  // sequence is independent of thread count.
  const int t = std::uniform_int_distribution<int>(1, n_frames)(rng);

  ImageBuffer raster_dummy(dataset.manifest.intrinsics.width,
                           dataset.manifest.intrinsics.height, 1);
  const PixelBatch primary_batch = sample_pixels(SamplingStrategy::global(), raster_dummy,
                                                 config.rays_per_iter_primary, rng);
  const std::uint64_t primary_seed = rng();

  struct PatchDraw {
    int x0, y0;
  };
  std::vector<PatchDraw> patches;
  std::uint64_t sr_seed = 0;
  if (config.mask.sr) {
    const int ps = config.sr_patch_size;
    const int w = dataset.manifest.intrinsics.width, h = dataset.manifest.intrinsics.height;
    for (int k = 0; k < config.sr_patches; ++k) {
      PatchDraw d;
      d.x0 = std::uniform_int_distribution<int>(0, w - ps)(rng);
      d.y0 = std::uniform_int_distribution<int>(0, h - ps)(rng);
      patches.push_back(d);
    }
    sr_seed = rng();
  }

  int pair_a = -1, pair_b = -1;
  PixelBatch nv_batch_a, nv_batch_b;
  std::uint64_t nv_seed_a = 0, nv_seed_b = 0;
  if (nv_enabled) {
    const Dome skeleton = pgt.pair_dome();
    const auto pair = symmetric_pair(rng, skeleton);
    pair_a = pair.first;
    pair_b = pair.second;
    const int per_view = std::max(1, config.rays_per_iter_nv / 2);
    nv_batch_a = sample_pixels(config.strategy, pgt.per_frame[t - 1][pair_a].mask, per_view, rng);
    nv_seed_a = rng();
    nv_batch_b = sample_pixels(config.strategy, pgt.per_frame[t - 1][pair_b].mask, per_view, rng);
    nv_seed_b = rng();
  }

  // (1) Primary reconstruction.
  std::vector<Ray> rays;
  std::vector<Vec3> targets;
  primary_rays(dataset, params, t, primary_batch, rays, targets);
  RenderBatch primary = forward_batch(params, std::move(rays), t, RenderMode::kFull,
                                      config.n_samples, config.stratified, primary_seed,
                                      config.threads);
  std::vector<Vec3> pred_colors(primary.outputs.size());
  for (std::size_t i = 0; i < primary.outputs.size(); ++i)
    pred_colors[i] = primary.outputs[i].color;
  std::vector<Vec3> residuals;
  const double rec = loss_rec(pred_colors, targets, &residuals);
  {
    std::vector<RayGradWeights> w(primary.rays.size());
    for (std::size_t i = 0; i < w.size(); ++i) w[i].d_color = residuals[i];
    backward_batch(params, primary, w, accum, config.threads);
  }

  // (2) Super-resolution patches: render at half resolution, upsample 2x,
  // compare against the full-resolution ground truth crop.
  double sr_value = 0.0;
  if (config.mask.sr) {
    const int ps = config.sr_patch_size;
    const int half = ps / 2;
    const CameraPose& pose = dataset.primary[t - 1];
    std::vector<Ray> sr_rays;
    sr_rays.reserve(static_cast<std::size_t>(config.sr_patches) * half * half);
    for (const PatchDraw& d : patches)
      for (int j = 0; j < half; ++j)
        for (int i = 0; i < half; ++i)
          sr_rays.push_back(generate_ray_at(pose, d.x0 + 2.0 * i + 1.0, d.y0 + 2.0 * j + 1.0, t,
                                            params.bg_bounds));
    RenderBatch sr_batch = forward_batch(params, std::move(sr_rays), t, RenderMode::kFull,
                                         config.n_samples, config.stratified, sr_seed,
                                         config.threads);
    std::vector<RayGradWeights> w(sr_batch.rays.size());
    const GradientFeatureExtractor extractor;
    const ImageBuffer& frame = dataset.frames[t - 1];
    for (int k = 0; k < config.sr_patches; ++k) {
      ImageBuffer lowres(half, half, 3);
      const std::size_t base = static_cast<std::size_t>(k) * half * half;
      for (int j = 0; j < half; ++j)
        for (int i = 0; i < half; ++i) {
          const RayRender& o = sr_batch.outputs[base + j * half + i];
          lowres.at(i, j, 0) = static_cast<float>(o.color.x);
          lowres.at(i, j, 1) = static_cast<float>(o.color.y);
          lowres.at(i, j, 2) = static_cast<float>(o.color.z);
        }
      ImageBuffer ref(ps, ps, 3);
      for (int j = 0; j < ps; ++j)
        for (int i = 0; i < ps; ++i)
          for (int c = 0; c < 3; ++c)
            ref.at(i, j, c) = frame.at(patches[k].x0 + i, patches[k].y0 + j, c);
      const SrLoss sl = loss_sr(lowres, ref, extractor);
      sr_value += sl.value;
      for (int j = 0; j < half; ++j)
        for (int i = 0; i < half; ++i) {
          RayGradWeights& rw = w[base + j * half + i];
          rw.d_color = {config.weights.lambda_sr * sl.d_lowres.at(i, j, 0),
                        config.weights.lambda_sr * sl.d_lowres.at(i, j, 1),
                        config.weights.lambda_sr * sl.d_lowres.at(i, j, 2)};
        }
    }
    backward_batch(params, sr_batch, w, accum, config.threads);
  }

  // (3) Temporal continuity over the sliding 3-frame window.
  double cont_value = 0.0;
  if (config.mask.cont && n_frames >= 3) {
    const int window_start = 1 + (iter % (n_frames - 2));
    cont_value = loss_cont(params, window_start, &accum, 1.0);
  }

  // (4) Novel-view pseudo-GT supervision on the symmetric pair.
  double nv_c_value = 0.0, nv_sigma_value = 0.0;
  if (nv_enabled) {
    const int pair[2] = {pair_a, pair_b};
    const PixelBatch* batches[2] = {&nv_batch_a, &nv_batch_b};
    const std::uint64_t seeds[2] = {nv_seed_a, nv_seed_b};
    for (int side = 0; side < 2; ++side) {
      const PgtView& view = pgt.per_frame[t - 1][pair[side]];
      CameraPose pose = view.world_pose;
      pose.intrinsics = dataset.manifest.intrinsics;
      std::vector<Ray> nv_rays;
      std::vector<NvTarget> nv_targets;
      for (const auto& [px, py] : batches[side]->pixels) {
        const Ray ray = generate_ray(pose, px, py, t, params.fg_bounds);
        if (ray.misses()) continue;
        nv_rays.push_back(ray);
        nv_targets.push_back({{view.rgb.at(px, py, 0), view.rgb.at(px, py, 1),
                               view.rgb.at(px, py, 2)},
                              view.mask.at(px, py)});
      }
      if (nv_rays.empty()) continue;
      RenderBatch nv_fwd = forward_batch(params, std::move(nv_rays), t,
                                         RenderMode::kForegroundOnly, config.n_samples,
                                         config.stratified, seeds[side], config.threads);
      const NvLoss nl = loss_nv(nv_fwd.outputs, nv_targets);
      if (config.mask.nv_c) nv_c_value += nl.nv_c;
      if (config.mask.nv_sigma) nv_sigma_value += nl.nv_sigma;
      std::vector<RayGradWeights> w(nv_fwd.rays.size());
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (config.mask.nv_c) w[i].d_color = nl.d_color[i] * config.weights.lambda_c;
        if (config.mask.nv_sigma)
          w[i].d_fg_opacity = nl.d_fg_opacity[i] * config.weights.lambda_sigma;
      }
      backward_batch(params, nv_fwd, w, accum, config.threads);
    }
  }

  const LossBreakdown breakdown =
      total_loss(rec, cont_value, sr_value, nv_c_value, nv_sigma_value, config.weights, iter);
  if (!std::isfinite(breakdown.total))
    throw DivergedLoss("train_step: non-finite total loss at iteration " + std::to_string(iter));

  // Sparse Adam: moments and parameters advance only where gradients landed;
  // bias correction uses the global step.
  const double step_num = static_cast<double>(state.iteration + 1);
  const double bc1 = 1.0 - std::pow(config.beta1, step_num);
  const double bc2 = 1.0 - std::pow(config.beta2, step_num);
  const double lr = config.learning_rate;
  for (std::uint32_t idx : accum.touched()) {
    const double g = accum.value(idx);
    const double m = config.beta1 * state.moment1[idx] + (1.0 - config.beta1) * g;
    const double v = config.beta2 * state.moment2[idx] + (1.0 - config.beta2) * g * g;
    state.moment1[idx] = static_cast<float>(m);
    state.moment2[idx] = static_cast<float>(v);
    const double update = lr * (m / bc1) / (std::sqrt(v / bc2) + kAdamEps);
    float& p = params.param(idx);
    p = static_cast<float>(p - update);
  }
  ++params.version;
  ++state.iteration;
  return breakdown;
}

namespace {

constexpr char kStateMagic[4] = {'E', 'X', 'D', 'S'};
constexpr std::uint32_t kStateVersion = 1;

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

std::string csv_row(const LossBreakdown& b) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", b.iteration, b.rec,
                b.cont, b.sr, b.nv_c, b.nv_sigma, b.total);
  return buf;
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::unique_ptr<std::FILE, FileCloser> f(std::fopen(tmp.c_str(), "wb"));
    if (!f) throw IoError("save_checkpoint: cannot open " + tmp);
    auto put = [&](const void* p, std::size_t n) {
      if (std::fwrite(p, 1, n, f.get()) != n) throw IoError("save_checkpoint: write failed");
    };
    put(kStateMagic, 4);
    put(&kStateVersion, 4);
    const std::int64_t it = state.iteration;
    put(&it, sizeof(it));
    std::ostringstream oss;
    oss << state.rng;
    const std::string rng_text = oss.str();
    const std::uint32_t len = static_cast<std::uint32_t>(rng_text.size());
    put(&len, 4);
    put(rng_text.data(), rng_text.size());
    save_field_to(f.get(), state.params, path);
    put(state.moment1.data(), state.moment1.size() * sizeof(float));
    put(state.moment2.data(), state.moment2.size() * sizeof(float));
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("save_checkpoint: rename failed for " + path);
}

TrainState load_checkpoint(const std::string& path) {
  std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("load_checkpoint: cannot open " + path);
  auto get = [&](void* p, std::size_t n) {
    if (std::fread(p, 1, n, f.get()) != n)
      throw BadMagic("load_checkpoint: truncated file " + path);
  };
  char magic[4];
  get(magic, 4);
  if (std::memcmp(magic, kStateMagic, 4) != 0)
    throw BadMagic("load_checkpoint: bad magic in " + path);
  std::uint32_t version = 0;
  get(&version, 4);
  if (version != kStateVersion)
    throw VersionMismatch("load_checkpoint: unsupported version " + std::to_string(version));

  TrainState st;
  std::int64_t it = 0;
  get(&it, sizeof(it));
  st.iteration = it;
  std::uint32_t len = 0;
  get(&len, 4);
  if (len > (1u << 20)) throw BadMagic("load_checkpoint: corrupt rng block in " + path);
  std::string rng_text(len, '\0');
  get(rng_text.data(), len);
  std::istringstream iss(rng_text);
  iss >> st.rng;
  if (!iss) throw BadMagic("load_checkpoint: corrupt rng state in " + path);
  st.params = load_field_from(f.get(), path);
  st.moment1.resize(st.params.total_param_count());
  st.moment2.resize(st.params.total_param_count());
  get(st.moment1.data(), st.moment1.size() * sizeof(float));
  get(st.moment2.data(), st.moment2.size() * sizeof(float));
  return st;
}

TrainResult train(const TrainConfig& user_config, const Dataset& dataset, const PgtCache& pgt,
                  const std::string& out_dir, bool resume) {
  const TrainConfig config = resolve_config(user_config);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("train: cannot create " + out_dir);

  const std::string ckpt_path = (fs::path(out_dir) / "checkpoint.exds").string();
  const std::string field_path = (fs::path(out_dir) / "field.exdn").string();
  const std::string csv_path = (fs::path(out_dir) / "loss_log.csv").string();

  TrainState state;
  std::vector<std::string> kept_rows;
  if (resume && fs::exists(ckpt_path)) {
    state = load_checkpoint(ckpt_path);
    // Keep only rows from before the checkpoint so the resumed log matches
    // an uninterrupted run byte for byte.
    std::ifstream in(csv_path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (line[0] == '#' || line.rfind("iteration,", 0) == 0) {
        kept_rows.push_back(line);
        continue;
      }
      const int row_iter = std::atoi(line.c_str());
      if (row_iter < state.iteration) kept_rows.push_back(line);
    }
  } else {
    state = init_state(config, dataset);
  }
  if (kept_rows.empty()) {
    kept_rows.push_back("# seed=" + std::to_string(config.seed));
    kept_rows.push_back("iteration,rec,cont,sr,nv_c,nv_sigma,total");
  }

  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw IoError("train: cannot open " + csv_path);
  for (const std::string& row : kept_rows) csv << row << "\n";
  csv.flush();

  TrainResult result;
  result.checkpoint_path = ckpt_path;
  result.field_path = field_path;
  result.loss_csv_path = csv_path;

  while (state.iteration < config.iterations) {
    result.last = train_step(state, dataset, pgt, config);
    csv << csv_row(result.last) << "\n";
    if (config.checkpoint_every > 0 && state.iteration % config.checkpoint_every == 0 &&
        state.iteration < config.iterations) {
      csv.flush();
      save_checkpoint(state, ckpt_path);
    }
  }
  csv.flush();
  if (!csv) throw IoError("train: loss log write failed");
  save_checkpoint(state, ckpt_path);
  save_field(state.params, field_path);
  return result;
}

}  // namespace exdn
