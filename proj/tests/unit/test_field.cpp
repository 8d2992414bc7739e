// Copyright 2026 The exdn Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "exdn/field.hpp"
#include "exdn/rng.hpp"

using namespace exdn;

namespace {

RadianceFieldParams small_field(int n_frames = 2) {
  return make_field({{-1, -1, -1}, {1, 1, 1}}, {4, 4, 4}, {{-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}},
                    {3, 3, 3}, n_frames);
}

void randomize(std::vector<float>& grid, Rng& rng) {
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (float& v : grid) v = static_cast<float>(u(rng));
}

Vec3 voxel_center(const Box3& b, GridDims d, int x, int y, int z) {
  const Vec3 ext = b.extent();
  return {b.lo.x + (x + 0.5) * ext.x / d.nx, b.lo.y + (y + 0.5) * ext.y / d.ny,
          b.lo.z + (z + 0.5) * ext.z / d.nz};
}

// Straightforward scalar trilinear oracle with clamp-to-edge semantics,
// kept independent of make_stencil.
double oracle_trilerp(const std::vector<float>& grid, const Box3& b, GridDims d, const Vec3& x,
                      int channel) {
  auto fetch = [&](int xi, int yi, int zi) {
    xi = std::clamp(xi, 0, d.nx - 1);
    yi = std::clamp(yi, 0, d.ny - 1);
    zi = std::clamp(zi, 0, d.nz - 1);
    const std::size_t v = (static_cast<std::size_t>(zi) * d.ny + yi) * d.nx + xi;
    return static_cast<double>(grid[v * kChannelsPerVoxel + channel]);
  };
  const Vec3 ext = b.extent();
  const double ux = (x.x - b.lo.x) / (ext.x / d.nx) - 0.5;
  const double uy = (x.y - b.lo.y) / (ext.y / d.ny) - 0.5;
  const double uz = (x.z - b.lo.z) / (ext.z / d.nz) - 0.5;
  const int x0 = static_cast<int>(std::floor(ux)), y0 = static_cast<int>(std::floor(uy)),
            z0 = static_cast<int>(std::floor(uz));
  const double fx = ux - x0, fy = uy - y0, fz = uz - z0;
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx) {
        const double w = (dx ? fx : 1 - fx) * (dy ? fy : 1 - fy) * (dz ? fz : 1 - fz);
        acc += w * fetch(x0 + dx, y0 + dy, z0 + dz);
      }
  return acc;
}

}  // namespace

TEST_SUITE("field") {

TEST_CASE("query at an exact voxel center returns the activated stored value") {
  RadianceFieldParams p = small_field();
  const std::size_t vox = (2 * 4 + 1) * 4 + 3;  // (x=3, y=1, z=2)
  p.bg[vox * kChannelsPerVoxel + 0] = 0.7f;
  p.bg[vox * kChannelsPerVoxel + 1] = -1.2f;
  p.bg[vox * kChannelsPerVoxel + 2] = 0.4f;
  p.bg[vox * kChannelsPerVoxel + 3] = 2.0f;
  const Vec3 c = voxel_center(p.bg_bounds, p.bg_res, 3, 1, 2);
  const FieldSample s = query_background(p, c);
  CHECK(s.density == doctest::Approx(softplus(0.7)).epsilon(1e-12));
  CHECK(s.rgb.x == doctest::Approx(logistic(-1.2)).epsilon(1e-12));
  CHECK(s.rgb.y == doctest::Approx(logistic(0.4)).epsilon(1e-12));
  CHECK(s.rgb.z == doctest::Approx(logistic(2.0)).epsilon(1e-12));
}

TEST_CASE("queries outside the bounds are black and empty") {
  const RadianceFieldParams p = small_field();
  const FieldSample s = query_background(p, {5, 0, 0});
  CHECK(s.density == 0.0);
  CHECK(s.rgb.x == 0.0);
  CHECK(s.rgb.y == 0.0);
  CHECK(s.rgb.z == 0.0);
  const FieldSample f = query_foreground(p, {0, 0.51, 0}, 1);
  CHECK(f.density == 0.0);
}

TEST_CASE("midpoint between voxel centers interpolates raw values") {
  RadianceFieldParams p = small_field();
  const double d1 = 0.3, d2 = 1.7;
  const std::size_t va = (0 * 4 + 0) * 4 + 0, vb = (0 * 4 + 0) * 4 + 1;
  p.bg[va * kChannelsPerVoxel] = static_cast<float>(d1);
  p.bg[vb * kChannelsPerVoxel] = static_cast<float>(d2);
  const Vec3 mid = (voxel_center(p.bg_bounds, p.bg_res, 0, 0, 0) +
                    voxel_center(p.bg_bounds, p.bg_res, 1, 0, 0)) * 0.5;
  const FieldSample s = query_background(p, mid);
  // Raw interpolation happens before activation.
  CHECK(s.density ==
        doctest::Approx(softplus((static_cast<float>(d1) + static_cast<float>(d2)) / 2.0))
            .epsilon(1e-12));
}

TEST_CASE("frame index is validated") {
  const RadianceFieldParams p = small_field(2);
  CHECK_THROWS_AS(query_foreground(p, {0, 0, 0}, 0), FrameOutOfRange);
  CHECK_THROWS_AS(query_foreground(p, {0, 0, 0}, 3), FrameOutOfRange);
  CHECK_NOTHROW(query_foreground(p, {0, 0, 0}, 2));
}

TEST_CASE("identical foreground grids sample identically across frames") {
  RadianceFieldParams p = small_field(2);
  Rng rng(3);
  randomize(p.fg[0], rng);
  p.fg[1] = p.fg[0];
  std::uniform_real_distribution<double> u(-0.6, 0.6);
  for (int i = 0; i < 50; ++i) {
    const Vec3 x{u(rng), u(rng), u(rng)};
    const FieldSample a = query_foreground(p, x, 1);
    const FieldSample b = query_foreground(p, x, 2);
    CHECK(a.density == b.density);
    CHECK(a.rgb.x == b.rgb.x);
  }
}

TEST_CASE("interpolation matches the scalar oracle on random points") {
  RadianceFieldParams p = small_field();
  Rng rng(17);
  randomize(p.bg, rng);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const Vec3 x{u(rng), u(rng), u(rng)};
    const TrilinearStencil st = make_stencil(p.bg_bounds, p.bg_res, x);
    REQUIRE(st.inside);
    double raw[4];
    raw_at(p.bg, st, raw);
    for (int c = 0; c < 4; ++c)
      CHECK(raw[c] == doctest::Approx(oracle_trilerp(p.bg, p.bg_bounds, p.bg_res, x, c))
                          .epsilon(1e-12));
  }
}

TEST_CASE("activations keep density nonnegative and color in range") {
  Rng rng(23);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int i = 0; i < 1000; ++i) {
    const double raw[4] = {u(rng), u(rng), u(rng), u(rng)};
    const FieldSample s = activate(raw);
    CHECK(s.density >= 0.0);
    CHECK(s.rgb.x >= 0.0);
    CHECK(s.rgb.x <= 1.0);
    CHECK(s.rgb.y >= 0.0);
    CHECK(s.rgb.y <= 1.0);
    CHECK(s.rgb.z >= 0.0);
    CHECK(s.rgb.z <= 1.0);
  }
}

TEST_CASE("composite keeps the live branch when the other is empty") {
  FieldSample bg{{0.2, 0.6, 0.9}, 1.3};
  FieldSample fg{{0, 0, 0}, 0.0};
  const FieldSample a = composite_branches(bg, fg);
  CHECK(a.density == doctest::Approx(1.3));
  CHECK(a.rgb.x == doctest::Approx(0.2).epsilon(1e-7));
  CHECK(a.rgb.z == doctest::Approx(0.9).epsilon(1e-7));

  const FieldSample b = composite_branches(fg, bg);
  CHECK(b.density == doctest::Approx(1.3));
  CHECK(b.rgb.y == doctest::Approx(0.6).epsilon(1e-7));
}

TEST_CASE("composite blends equal-density branches evenly") {
  const FieldSample red{{1, 0, 0}, 1.0};
  const FieldSample blue{{0, 0, 1}, 1.0};
  const FieldSample c = composite_branches(red, blue);
  CHECK(c.density == doctest::Approx(2.0));
  CHECK(c.rgb.x == doctest::Approx(0.5).epsilon(1e-7));
  CHECK(c.rgb.y == doctest::Approx(0.0).epsilon(1e-7));
  CHECK(c.rgb.z == doctest::Approx(0.5).epsilon(1e-7));

  // Symmetric under branch swap at equal densities.
  const FieldSample d = composite_branches(blue, red);
  CHECK(c.rgb.x == d.rgb.x);
  CHECK(c.rgb.z == d.rgb.z);
  CHECK(c.density == d.density);

  // Both empty: black.
  const FieldSample none = composite_branches({{0.5, 0.5, 0.5}, 0.0}, {{0.9, 0.9, 0.9}, 0.0});
  CHECK(none.rgb.x == 0.0);
  CHECK(none.density == 0.0);
}

TEST_CASE("field checkpoint round trips exactly") {
  RadianceFieldParams p = small_field(3);
  Rng rng(5);
  randomize(p.bg, rng);
  for (auto& g : p.fg) randomize(g, rng);

  const std::string path =
      (std::filesystem::temp_directory_path() / "exdn_field_test.exdn").string();
  save_field(p, path);
  const RadianceFieldParams q = load_field(path);
  CHECK(q.bg == p.bg);
  CHECK(q.fg == p.fg);
  CHECK(q.bg_res == p.bg_res);
  CHECK(q.fg_res == p.fg_res);
  CHECK(q.n_frames == p.n_frames);
  CHECK(q.bg_bounds.lo.x == p.bg_bounds.lo.x);
  CHECK(q.fg_bounds.hi.z == p.fg_bounds.hi.z);
  std::filesystem::remove(path);
}

TEST_CASE("corrupt field files are rejected, never partially loaded") {
  const auto tmp = std::filesystem::temp_directory_path();
  const std::string good = (tmp / "exdn_field_good.exdn").string();
  save_field(small_field(), good);

  SUBCASE("bad magic") {
    const std::string bad = (tmp / "exdn_field_badmagic.exdn").string();
    std::FILE* f = std::fopen(bad.c_str(), "wb");
    std::fwrite("NOPE", 1, 4, f);
    std::fclose(f);
    CHECK_THROWS_AS(load_field(bad), BadMagic);
    std::filesystem::remove(bad);
  }
  SUBCASE("truncated") {
    const auto size = std::filesystem::file_size(good);
    std::filesystem::resize_file(good, size / 2);
    CHECK_THROWS_AS(load_field(good), BadMagic);
  }
  SUBCASE("wrong version") {
    std::FILE* f = std::fopen(good.c_str(), "r+b");
    std::fseek(f, 4, SEEK_SET);
    const std::uint32_t v = 99;
    std::fwrite(&v, 4, 1, f);
    std::fclose(f);
    CHECK_THROWS_AS(load_field(good), VersionMismatch);
  }
  std::filesystem::remove(good);
}

}  // TEST_SUITE
