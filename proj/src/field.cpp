// Copyright 2026 The exdn Authors
// SPDX-License-Identifier: Apache-2.0

#include "exdn/field.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

#include "exdn/errors.hpp"

namespace exdn {

float& RadianceFieldParams::param(std::size_t flat) {
  if (flat < bg_param_count()) return bg[flat];
  const std::size_t rel = flat - bg_param_count();
  return fg[rel / fg_param_count()][rel % fg_param_count()];
}

float RadianceFieldParams::param(std::size_t flat) const {
  if (flat < bg_param_count()) return bg[flat];
  const std::size_t rel = flat - bg_param_count();
  return fg[rel / fg_param_count()][rel % fg_param_count()];
}

RadianceFieldParams make_field(const Box3& bg_bounds, GridDims bg_res, const Box3& fg_bounds,
                               GridDims fg_res, int n_frames, double init_density) {
  RadianceFieldParams p;
  p.bg_bounds = bg_bounds;
  p.fg_bounds = fg_bounds;
  p.bg_res = bg_res;
  p.fg_res = fg_res;
  p.n_frames = n_frames;
  const float raw_d = static_cast<float>(softplus_inv(init_density));
  auto fill = [&](std::vector<float>& grid, GridDims dims) {
    grid.assign(dims.voxels() * kChannelsPerVoxel, 0.0f);
    for (std::size_t v = 0; v < dims.voxels(); ++v) grid[v * kChannelsPerVoxel] = raw_d;
  };
  fill(p.bg, bg_res);
  p.fg.resize(n_frames);
  for (auto& g : p.fg) fill(g, fg_res);
  return p;
}

TrilinearStencil make_stencil(const Box3& bounds, GridDims dims, const Vec3& x) {
  TrilinearStencil st;
  st.inside = bounds.contains(x);
  if (!st.inside) return st;

  // Cell-centered samples: voxel i center sits at lo + (i + 0.5) * h.
  const Vec3 ext = bounds.extent();
  const double hx = ext.x / dims.nx, hy = ext.y / dims.ny, hz = ext.z / dims.nz;
  const double ux = (x.x - bounds.lo.x) / hx - 0.5;
  const double uy = (x.y - bounds.lo.y) / hy - 0.5;
  const double uz = (x.z - bounds.lo.z) / hz - 0.5;

  const double fx = std::floor(ux), fy = std::floor(uy), fz = std::floor(uz);
  const double wx = ux - fx, wy = uy - fy, wz = uz - fz;
  auto clampi = [](double f, int n) {
    const int i = static_cast<int>(f);
    return std::min(std::max(i, 0), n - 1);
  };
  const int x0 = clampi(fx, dims.nx), x1 = clampi(fx + 1, dims.nx);
  const int y0 = clampi(fy, dims.ny), y1 = clampi(fy + 1, dims.ny);
  const int z0 = clampi(fz, dims.nz), z1 = clampi(fz + 1, dims.nz);

  auto vox = [&](int xi, int yi, int zi) {
    return (static_cast<std::size_t>(zi) * dims.ny + yi) * dims.nx + xi;
  };
  const double w000 = (1 - wx) * (1 - wy) * (1 - wz);
  const double w100 = wx * (1 - wy) * (1 - wz);
  const double w010 = (1 - wx) * wy * (1 - wz);
  const double w110 = wx * wy * (1 - wz);
  const double w001 = (1 - wx) * (1 - wy) * wz;
  const double w101 = wx * (1 - wy) * wz;
  const double w011 = (1 - wx) * wy * wz;
  const double w111 = wx * wy * wz;

  st.voxel[0] = vox(x0, y0, z0); st.weight[0] = w000;
  st.voxel[1] = vox(x1, y0, z0); st.weight[1] = w100;
  st.voxel[2] = vox(x0, y1, z0); st.weight[2] = w010;
  st.voxel[3] = vox(x1, y1, z0); st.weight[3] = w110;
  st.voxel[4] = vox(x0, y0, z1); st.weight[4] = w001;
  st.voxel[5] = vox(x1, y0, z1); st.weight[5] = w101;
  st.voxel[6] = vox(x0, y1, z1); st.weight[6] = w011;
  st.voxel[7] = vox(x1, y1, z1); st.weight[7] = w111;
  return st;
}

void raw_at(const std::vector<float>& grid, const TrilinearStencil& st, double out[4]) {
  out[0] = out[1] = out[2] = out[3] = 0.0;
  if (!st.inside) return;
  for (int k = 0; k < 8; ++k) {
    const float* v = &grid[st.voxel[k] * kChannelsPerVoxel];
    const double w = st.weight[k];
    out[0] += w * v[0];
    out[1] += w * v[1];
    out[2] += w * v[2];
    out[3] += w * v[3];
  }
}

FieldSample activate(const double raw[4]) {
  FieldSample s;
  s.density = softplus(raw[0]);
  s.rgb = {logistic(raw[1]), logistic(raw[2]), logistic(raw[3])};
  return s;
}

FieldSample query_background(const RadianceFieldParams& params, const Vec3& x) {
  const TrilinearStencil st = make_stencil(params.bg_bounds, params.bg_res, x);
  if (!st.inside) return {};
  double raw[4];
  raw_at(params.bg, st, raw);
  return activate(raw);
}

FieldSample query_foreground(const RadianceFieldParams& params, const Vec3& x, int t) {
  if (t < 1 || t > params.n_frames)
    throw FrameOutOfRange("query_foreground: frame " + std::to_string(t) + " outside [1, " +
                          std::to_string(params.n_frames) + "]");
  const TrilinearStencil st = make_stencil(params.fg_bounds, params.fg_res, x);
  if (!st.inside) return {};
  double raw[4];
  raw_at(params.fg[t - 1], st, raw);
  return activate(raw);
}

FieldSample composite_branches(const FieldSample& bg, const FieldSample& fg) {
  FieldSample out;
  out.density = bg.density + fg.density;
  out.rgb = (bg.rgb * bg.density + fg.rgb * fg.density) / (out.density + kCompositeEps);
  return out;
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

constexpr char kFieldMagic[4] = {'E', 'X', 'D', 'N'};
constexpr std::uint32_t kFieldVersion = 1;

void write_exact(std::FILE* f, const void* p, std::size_t n, const std::string& path) {
  if (std::fwrite(p, 1, n, f) != n) throw IoError("write failed: " + path);
}

}  // namespace

void save_field_to(std::FILE* f, const RadianceFieldParams& params, const std::string& context) {
  write_exact(f, kFieldMagic, 4, context);
  write_exact(f, &kFieldVersion, 4, context);
  const double bounds[12] = {params.bg_bounds.lo.x, params.bg_bounds.lo.y, params.bg_bounds.lo.z,
                             params.bg_bounds.hi.x, params.bg_bounds.hi.y, params.bg_bounds.hi.z,
                             params.fg_bounds.lo.x, params.fg_bounds.lo.y, params.fg_bounds.lo.z,
                             params.fg_bounds.hi.x, params.fg_bounds.hi.y, params.fg_bounds.hi.z};
  write_exact(f, bounds, sizeof(bounds), context);
  const std::int32_t dims[7] = {params.bg_res.nx, params.bg_res.ny, params.bg_res.nz,
                                params.fg_res.nx, params.fg_res.ny, params.fg_res.nz,
                                params.n_frames};
  write_exact(f, dims, sizeof(dims), context);
  write_exact(f, params.bg.data(), params.bg.size() * sizeof(float), context);
  for (const auto& g : params.fg) write_exact(f, g.data(), g.size() * sizeof(float), context);
}

RadianceFieldParams load_field_from(std::FILE* f, const std::string& context) {
  auto read_exact = [&](void* p, std::size_t n) {
    if (std::fread(p, 1, n, f) != n) throw BadMagic("truncated field block in " + context);
  };
  char magic[4];
  read_exact(magic, 4);
  if (std::memcmp(magic, kFieldMagic, 4) != 0) throw BadMagic("bad magic in " + context);
  std::uint32_t version = 0;
  read_exact(&version, 4);
  if (version != kFieldVersion)
    throw VersionMismatch("unsupported field version " + std::to_string(version) + " in " +
                          context);

  double bounds[12];
  read_exact(bounds, sizeof(bounds));
  std::int32_t dims[7];
  read_exact(dims, sizeof(dims));

  RadianceFieldParams p;
  p.bg_bounds = {{bounds[0], bounds[1], bounds[2]}, {bounds[3], bounds[4], bounds[5]}};
  p.fg_bounds = {{bounds[6], bounds[7], bounds[8]}, {bounds[9], bounds[10], bounds[11]}};
  p.bg_res = {dims[0], dims[1], dims[2]};
  p.fg_res = {dims[3], dims[4], dims[5]};
  p.n_frames = dims[6];
  if (p.n_frames < 0 || p.bg_res.nx <= 0 || p.bg_res.ny <= 0 || p.bg_res.nz <= 0 ||
      p.fg_res.nx <= 0 || p.fg_res.ny <= 0 || p.fg_res.nz <= 0)
    throw BadMagic("corrupt field header in " + context);

  p.bg.resize(p.bg_param_count());
  read_exact(p.bg.data(), p.bg.size() * sizeof(float));
  p.fg.resize(p.n_frames);
  for (auto& g : p.fg) {
    g.resize(p.fg_param_count());
    read_exact(g.data(), g.size() * sizeof(float));
  }
  return p;
}

void save_field(const RadianceFieldParams& params, const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("save_field: cannot open " + path);
  save_field_to(f.get(), params, path);
}

RadianceFieldParams load_field(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("load_field: cannot open " + path);
  return load_field_from(f.get(), path);
}

}  // namespace exdn
