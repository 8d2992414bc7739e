// Copyright 2026 The exdn Authors
// SPDX-License-Identifier: Apache-2.0

#include "exdn/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "exdn/parallel.hpp"

namespace exdn {

namespace fs = std::filesystem;
using nlohmann::json;

Vec3 SceneObject::albedo(const Vec3& local) const {
  if (shape == Shape::kSphere) {
    // Longitude sectors crossed with latitude bands.
    const double lon = std::atan2(local.z, local.x);          // [-pi, pi]
    const double lat = std::asin(std::clamp(local.y / radius, -1.0, 1.0));
    const int sector = static_cast<int>(std::floor((lon + M_PI) / (2.0 * M_PI) * 8.0)) % 8;
    const int band = static_cast<int>(std::floor((lat + M_PI / 2) / M_PI * 4.0)) % 4;
    return palette[(sector + band) % palette.size()];
  }
  // Box: color by dominant face.
  const Vec3 q{std::abs(local.x) / half_extent.x, std::abs(local.y) / half_extent.y,
               std::abs(local.z) / half_extent.z};
  int face;
  if (q.x >= q.y && q.x >= q.z) face = local.x >= 0 ? 0 : 1;
  else if (q.y >= q.z) face = local.y >= 0 ? 2 : 3;
  else face = local.z >= 0 ? 4 : 5;
  return palette[face % palette.size()];
}

double SceneObject::bounding_radius() const {
  return shape == Shape::kSphere ? radius : norm(half_extent);
}

namespace {

Vec3 horizontal_bearing(const Vec3& from_center_to_eye) {
  Vec3 b = from_center_to_eye;
  b.y = 0;
  return normalized(b);
}

}  // namespace

CameraPose SceneDef::dome_pose(int t, double elevation_deg, double azimuth_deg) const {
  const Vec3 center = object_states[t - 1].center;
  const Vec3 bearing = horizontal_bearing(primary[t - 1].eye() - center);
  const Vec3 eye =
      spherical_position(center, dome_radius, elevation_deg, azimuth_deg, bearing, {0, 1, 0});
  return look_at_pose(eye, center, {0, 1, 0}, intrinsics);
}

CameraPose SceneDef::prior_frame_primary(int t) const {
  const ObjectState& st = object_states[t - 1];
  const RigidTransform world_from_local = RigidTransform::from_rt(st.orient, st.center);
  return apply_transform(world_from_local.inverse(), primary[t - 1]);
}

SceneDef gen_scene(const std::string& name, int n_frames, std::uint64_t seed,
                   const SceneOptions& options) {
  if (n_frames < 3) throw UnknownScene("gen_scene: need at least 3 frames");
  SceneDef s;
  s.name = name;
  s.n_frames = n_frames;
  s.seed = seed;
  s.image_size = options.image_size;
  s.n_gaussians = options.n_gaussians;

  const int sz = options.image_size;
  // 90 degree horizontal field of view on a square raster.
  s.intrinsics = {sz / 2.0, sz / 2.0, sz / 2.0, sz / 2.0, sz, sz};

  s.room.box = {{-1.6, -1.6, -1.6}, {1.6, 1.6, 1.6}};
  // Muted two-tone checkers, hue varied per face so walls are tellable apart.
  const Vec3 tints[6] = {{0.06, 0.0, 0.0},  {0.0, 0.06, 0.0}, {0.0, 0.0, 0.06},
                         {0.06, 0.06, 0.0}, {0.0, 0.06, 0.06}, {0.06, 0.0, 0.06}};
  for (int f = 0; f < 6; ++f) {
    s.room.faces[f].cell = 0.8;
    s.room.faces[f].color_a = Vec3{0.38, 0.38, 0.38} + tints[f];
    s.room.faces[f].color_b = Vec3{0.55, 0.55, 0.55} + tints[f];
  }

  s.dome_azimuths_deg.clear();
  for (int a = -45; a <= 45; a += 5) s.dome_azimuths_deg.push_back(a);
  s.dome_elevations_deg = {0.0, 15.0, 30.0};
  s.dome_radius = 1.2;

  Rng rng(seed);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);

  if (name == "bouncer") {
    s.object.shape = SceneObject::Shape::kSphere;
    s.object.radius = 0.3;
    s.object.palette = {{0.85, 0.15, 0.12}, {0.95, 0.8, 0.1}, {0.15, 0.3, 0.85},
                        {0.15, 0.7, 0.25}};
    const double phase = 0.4 + jitter(rng);
    const double amp = 0.32;
    for (int t = 1; t <= n_frames; ++t) {
      ObjectState st;
      st.center = {0.0, amp * std::sin(2.0 * M_PI * (t - 1) / n_frames + phase), 0.0};
      s.object_states.push_back(st);
    }
    // Primary camera: constant range, elevation 15, azimuth sweeping +-10
    // degrees, always aimed at the object so it sits on the frame's dome.
    for (int t = 1; t <= n_frames; ++t) {
      const double az = -10.0 + 20.0 * (t - 1) / std::max(1, n_frames - 1);
      const Vec3 eye = spherical_position(s.object_states[t - 1].center, s.dome_radius, 15.0, az,
                                          {1, 0, 0}, {0, 1, 0});
      s.primary.push_back(look_at_pose(eye, s.object_states[t - 1].center, {0, 1, 0},
                                       s.intrinsics));
    }
  } else if (name == "spinner") {
    s.object.shape = SceneObject::Shape::kBox;
    s.object.half_extent = {0.24, 0.3, 0.18};
    s.object.palette = {{0.85, 0.15, 0.12}, {0.95, 0.8, 0.1}, {0.15, 0.3, 0.85},
                        {0.15, 0.7, 0.25}, {0.9, 0.45, 0.1}, {0.6, 0.2, 0.7}};
    const Vec3 center{0.0, 0.05, 0.0};
    for (int t = 1; t <= n_frames; ++t) {
      ObjectState st;
      st.center = center;
      st.orient = Mat3::rotation_y(2.0 * M_PI * (t - 1) / n_frames);
      s.object_states.push_back(st);
    }
    const Vec3 dolly0{1.15, 0.35, -0.35}, dolly1{1.15, 0.35, 0.35};
    for (int t = 1; t <= n_frames; ++t) {
      const double u = static_cast<double>(t - 1) / std::max(1, n_frames - 1);
      const Vec3 eye = dolly0 * (1.0 - u) + dolly1 * u;
      s.primary.push_back(look_at_pose(eye, center, {0, 1, 0}, s.intrinsics));
    }
  } else {
    throw UnknownScene("gen_scene: unknown scene '" + name + "'");
  }

  // Field bounds: room plus margin for the background, motion sweep plus
  // margin for the foreground.
  s.bg_bounds = {s.room.box.lo - Vec3{0.1, 0.1, 0.1}, s.room.box.hi + Vec3{0.1, 0.1, 0.1}};
  Vec3 lo = s.object_states[0].center, hi = s.object_states[0].center;
  for (const auto& st : s.object_states) {
    lo = cwise_min(lo, st.center);
    hi = cwise_max(hi, st.center);
  }
  const double r = s.object.bounding_radius() + 0.1;
  s.fg_bounds = {lo - Vec3{r, r, r}, hi + Vec3{r, r, r}};

  // Construction invariants.
  for (int t = 1; t <= n_frames; ++t) {
    const ObjectState& st = s.object_states[t - 1];
    const double br = s.object.bounding_radius();
    for (int a = 0; a < 3; ++a)
      if (st.center[a] - br <= s.room.box.lo[a] || st.center[a] + br >= s.room.box.hi[a])
        throw UnknownScene("gen_scene: object leaves the room at frame " + std::to_string(t));
    // Projected object center must land on the raster.
    const CameraPose& p = s.primary[t - 1];
    const Vec3 cam = p.rotation.transposed() * (st.center - p.translation);
    if (cam.z <= 0) throw UnknownScene("gen_scene: object behind primary camera");
    const double u = s.intrinsics.fx * cam.x / cam.z + s.intrinsics.cx;
    const double v = s.intrinsics.fy * cam.y / cam.z + s.intrinsics.cy;
    if (u < 0 || u >= s.intrinsics.width || v < 0 || v >= s.intrinsics.height)
      throw UnknownScene("gen_scene: object out of frame at frame " + std::to_string(t));
  }
  for (int t = 2; t <= n_frames; ++t)
    for (int u = 1; u < t; ++u)
      if (norm(s.object_states[t - 1].center - s.object_states[u - 1].center) < 1e-12 &&
          name == "bouncer")
        throw UnknownScene("gen_scene: duplicate object centers");
  return s;
}

namespace {

// Smallest positive hit of a ray against the object at frame t, in [0, inf).
bool object_hit(const SceneDef& scene, int t, const Vec3& origin, const Vec3& dir,
                double& t_hit, Vec3& albedo) {
  const ObjectState& st = scene.object_states[t - 1];
  const Mat3 world_from_local = st.orient;
  const Mat3 local_from_world = world_from_local.transposed();
  const Vec3 o = local_from_world * (origin - st.center);
  const Vec3 d = local_from_world * dir;

  if (scene.object.shape == SceneObject::Shape::kSphere) {
    const double r = scene.object.radius;
    const double b = dot(o, d);
    const double c = dot(o, o) - r * r;
    const double disc = b * b - c;
    if (disc < 0) return false;
    const double sq = std::sqrt(disc);
    double th = -b - sq;
    if (th <= 1e-9) th = -b + sq;
    if (th <= 1e-9) return false;
    t_hit = th;
    albedo = scene.object.albedo(o + d * th);
    return true;
  }

  // Box slab test in the local frame.
  const Vec3 h = scene.object.half_extent;
  double t0 = 1e-9, t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double oa = o[a], da = d[a], ha = a == 0 ? h.x : (a == 1 ? h.y : h.z);
    if (std::abs(da) < 1e-15) {
      if (oa < -ha || oa > ha) return false;
      continue;
    }
    double ta = (-ha - oa) / da, tb = (ha - oa) / da;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  if (t0 <= 1e-9) return false;  // inside the box: treat as no hit
  t_hit = t0;
  albedo = scene.object.albedo(o + d * t0);
  return true;
}

// Exit hit of a ray starting inside the room box; face index and hit point.
bool room_hit(const SceneDef& scene, const Vec3& origin, const Vec3& dir, double& t_hit,
              Vec3& albedo) {
  const Box3& box = scene.room.box;
  double t_exit = std::numeric_limits<double>::infinity();
  int face = -1;
  for (int a = 0; a < 3; ++a) {
    const double da = dir[a];
    if (std::abs(da) < 1e-15) continue;
    const double target = da > 0 ? box.hi[a] : box.lo[a];
    const double tt = (target - origin[a]) / da;
    if (tt > 1e-9 && tt < t_exit) {
      t_exit = tt;
      face = a * 2 + (da > 0 ? 1 : 0);
    }
  }
  if (face < 0) return false;
  const Vec3 p = origin + dir * t_exit;
  const CheckerSpec& ck = scene.room.faces[face];
  // In-face coordinates are the two non-normal axes.
  double u, v;
  switch (face / 2) {
    case 0: u = p.y; v = p.z; break;
    case 1: u = p.x; v = p.z; break;
    default: u = p.x; v = p.y; break;
  }
  const long cu = static_cast<long>(std::floor(u / ck.cell));
  const long cv = static_cast<long>(std::floor(v / ck.cell));
  albedo = ((cu + cv) & 1) == 0 ? ck.color_a : ck.color_b;
  t_hit = t_exit;
  return true;
}

}  // namespace

AnalyticRender analytic_render(const SceneDef& scene, const CameraPose& pose, int t,
                               int threads) {
  const Intrinsics& k = pose.intrinsics;
  AnalyticRender out;
  out.rgb = ImageBuffer(k.width, k.height, 3);
  out.mask = ImageBuffer(k.width, k.height, 1);

  parallel_for(static_cast<std::size_t>(k.height), 4, [&](std::size_t y0, std::size_t y1) {
    for (std::size_t y = y0; y < y1; ++y)
      for (int x = 0; x < k.width; ++x) {
        const Vec3 dir_cam{(x + 0.5 - k.cx) / k.fx, (y + 0.5 - k.cy) / k.fy, 1.0};
        const Vec3 dir = normalized(pose.rotation * dir_cam);
        double t_obj = 0, t_room = 0;
        Vec3 a_obj, a_room;
        const bool hit_obj = object_hit(scene, t, pose.translation, dir, t_obj, a_obj);
        const bool hit_room = room_hit(scene, pose.translation, dir, t_room, a_room);
        Vec3 color;
        bool obj_front = false;
        if (hit_obj && (!hit_room || t_obj < t_room)) {
          color = a_obj;
          obj_front = true;
        } else if (hit_room) {
          color = a_room;
        }
        out.rgb.at(x, static_cast<int>(y), 0) = static_cast<float>(color.x);
        out.rgb.at(x, static_cast<int>(y), 1) = static_cast<float>(color.y);
        out.rgb.at(x, static_cast<int>(y), 2) = static_cast<float>(color.z);
        out.mask.at(x, static_cast<int>(y)) = obj_front ? 1.0f : 0.0f;
      }
  }, threads);
  return out;
}

namespace {

class SphereModel : public SurfaceSampler {
 public:
  explicit SphereModel(const SceneObject& obj) : obj_(obj) {}
  double area() const override { return 4.0 * M_PI * obj_.radius * obj_.radius; }
  double diameter() const override { return 2.0 * obj_.radius; }
  void sample(Rng& rng, Vec3& point, Vec3& albedo) const override {
    std::normal_distribution<double> n(0.0, 1.0);
    Vec3 v{n(rng), n(rng), n(rng)};
    while (norm(v) < 1e-9) v = {n(rng), n(rng), n(rng)};
    point = normalized(v) * obj_.radius;
    albedo = obj_.albedo(point);
  }

 private:
  SceneObject obj_;
};

class BoxModel : public SurfaceSampler {
 public:
  explicit BoxModel(const SceneObject& obj) : obj_(obj) {
    const Vec3 h = obj.half_extent;
    const double ax = 4 * h.y * h.z, ay = 4 * h.x * h.z, az = 4 * h.x * h.y;
    cum_ = {ax, ax, ay, ay, az, az};
    for (int i = 1; i < 6; ++i) cum_[i] += cum_[i - 1];
  }
  double area() const override { return cum_[5]; }
  double diameter() const override { return 2.0 * norm(obj_.half_extent); }
  void sample(Rng& rng, Vec3& point, Vec3& albedo) const override {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double pick = u01(rng) * cum_[5];
    int face = 0;
    while (face < 5 && pick > cum_[face]) ++face;
    const Vec3 h = obj_.half_extent;
    const double ua = 2.0 * u01(rng) - 1.0, va = 2.0 * u01(rng) - 1.0;
    const double sign = (face & 1) ? -1.0 : 1.0;
    switch (face / 2) {
      case 0: point = {sign * h.x, ua * h.y, va * h.z}; break;
      case 1: point = {ua * h.x, sign * h.y, va * h.z}; break;
      default: point = {ua * h.x, va * h.y, sign * h.z}; break;
    }
    albedo = obj_.albedo(point);
  }

 private:
  SceneObject obj_;
  std::array<double, 6> cum_{};
};

}  // namespace

std::unique_ptr<SurfaceSampler> object_model(const SceneDef& scene) {
  if (scene.object.shape == SceneObject::Shape::kSphere)
    return std::make_unique<SphereModel>(scene.object);
  return std::make_unique<BoxModel>(scene.object);
}

namespace {

std::string frame_name(int t) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d.png", t);
  return buf;
}

std::string dome_dir_name(double elevation, double azimuth) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "e%02d_a%+03d", static_cast<int>(std::lround(elevation)),
                static_cast<int>(std::lround(azimuth)));
  return buf;
}

json box_to_json(const Box3& b) {
  return json{{"lo", {b.lo.x, b.lo.y, b.lo.z}}, {"hi", {b.hi.x, b.hi.y, b.hi.z}}};
}
Box3 box_from_json(const json& j) {
  return {{j["lo"][0], j["lo"][1], j["lo"][2]}, {j["hi"][0], j["hi"][1], j["hi"][2]}};
}

std::array<double, 12> state_to_rows(const ObjectState& st) {
  std::array<double, 12> rows{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) rows[r * 4 + c] = st.orient(r, c);
    rows[r * 4 + 3] = st.center[r];
  }
  return rows;
}

}  // namespace

DatasetManifest write_dataset(const SceneDef& scene, const std::string& out_dir, int threads) {
  std::error_code ec;
  fs::create_directories(fs::path(out_dir) / "frames", ec);
  fs::create_directories(fs::path(out_dir) / "masks", ec);
  if (ec) throw IoError("write_dataset: cannot create " + out_dir);

  DatasetManifest m;
  m.scene_name = scene.name;
  m.n_frames = scene.n_frames;
  m.seed = scene.seed;
  m.image_size = scene.image_size;
  m.n_gaussians = scene.n_gaussians;
  m.intrinsics = scene.intrinsics;
  m.dome_radius = scene.dome_radius;
  m.bg_bounds = scene.bg_bounds;
  m.fg_bounds = scene.fg_bounds;
  m.dome_azimuths_deg = scene.dome_azimuths_deg;
  m.dome_elevations_deg = scene.dome_elevations_deg;

  for (int t = 1; t <= scene.n_frames; ++t) {
    const AnalyticRender r = analytic_render(scene, scene.primary[t - 1], t, threads);
    const std::string ff = "frames/" + frame_name(t);
    const std::string mf = "masks/" + frame_name(t);
    write_png((fs::path(out_dir) / ff).string(), r.rgb);
    write_png((fs::path(out_dir) / mf).string(), r.mask);
    m.frame_files.push_back(ff);
    m.mask_files.push_back(mf);
    m.primary_pose_rows.push_back(pose_to_rows(scene.primary[t - 1]));
    m.object_state_rows.push_back(state_to_rows(scene.object_states[t - 1]));
  }

  for (double e : scene.dome_elevations_deg)
    for (double a : scene.dome_azimuths_deg) {
      DomeViewEntry entry;
      entry.elevation_deg = e;
      entry.azimuth_deg = a;
      const std::string dir = "dome/" + dome_dir_name(e, a);
      fs::create_directories(fs::path(out_dir) / dir, ec);
      if (ec) throw IoError("write_dataset: cannot create dome dir");
      for (int t = 1; t <= scene.n_frames; ++t) {
        const CameraPose pose = scene.dome_pose(t, e, a);
        const AnalyticRender r = analytic_render(scene, pose, t, threads);
        const std::string file = dir + "/" + frame_name(t);
        write_png((fs::path(out_dir) / file).string(), r.rgb);
        entry.pose_rows.push_back(pose_to_rows(pose));
        entry.files.push_back(file);
      }
      m.dome_views.push_back(std::move(entry));
    }

  write_manifest(m, (fs::path(out_dir) / "manifest.json").string());
  return m;
}

void write_manifest(const DatasetManifest& m, const std::string& path) {
  json j;
  j["schema_version"] = m.schema_version;
  j["scene"] = {{"name", m.scene_name}, {"n_frames", m.n_frames}, {"seed", m.seed},
                {"image_size", m.image_size}, {"n_gaussians", m.n_gaussians}};
  j["intrinsics"] = {{"fx", m.intrinsics.fx}, {"fy", m.intrinsics.fy}, {"cx", m.intrinsics.cx},
                     {"cy", m.intrinsics.cy}, {"width", m.intrinsics.width},
                     {"height", m.intrinsics.height}};
  j["dome"] = {{"radius", m.dome_radius}, {"azimuths_deg", m.dome_azimuths_deg},
               {"elevations_deg", m.dome_elevations_deg}};
  j["bg_bounds"] = box_to_json(m.bg_bounds);
  j["fg_bounds"] = box_to_json(m.fg_bounds);
  j["frames"] = json::array();
  for (int t = 1; t <= m.n_frames; ++t) {
    j["frames"].push_back({{"t", t}, {"pose", m.primary_pose_rows[t - 1]},
                           {"object_pose", m.object_state_rows[t - 1]},
                           {"file", m.frame_files[t - 1]}, {"mask", m.mask_files[t - 1]}});
  }
  j["dome_views"] = json::array();
  for (const auto& v : m.dome_views) {
    json jv = {{"elevation_deg", v.elevation_deg}, {"azimuth_deg", v.azimuth_deg},
               {"poses", v.pose_rows}, {"files", v.files}};
    j["dome_views"].push_back(std::move(jv));
  }
  std::ofstream out(path);
  if (!out) throw IoError("write_manifest: cannot open " + path);
  out << j.dump(1) << "\n";
  if (!out) throw IoError("write_manifest: write failed " + path);
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("read_manifest: cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError("read_manifest: parse error in " + path + ": " + e.what());
  }
  DatasetManifest m;
  m.schema_version = j.at("schema_version");
  m.scene_name = j.at("scene").at("name");
  m.n_frames = j.at("scene").at("n_frames");
  m.seed = j.at("scene").at("seed");
  m.image_size = j.at("scene").at("image_size");
  m.n_gaussians = j.at("scene").value("n_gaussians", 2000);
  const json& k = j.at("intrinsics");
  m.intrinsics = {k.at("fx"), k.at("fy"), k.at("cx"), k.at("cy"), k.at("width"), k.at("height")};
  m.dome_radius = j.at("dome").at("radius");
  m.dome_azimuths_deg = j.at("dome").at("azimuths_deg").get<std::vector<double>>();
  m.dome_elevations_deg = j.at("dome").at("elevations_deg").get<std::vector<double>>();
  m.bg_bounds = box_from_json(j.at("bg_bounds"));
  m.fg_bounds = box_from_json(j.at("fg_bounds"));
  for (const json& f : j.at("frames")) {
    m.primary_pose_rows.push_back(f.at("pose").get<std::array<double, 12>>());
    m.object_state_rows.push_back(f.at("object_pose").get<std::array<double, 12>>());
    m.frame_files.push_back(f.at("file"));
    m.mask_files.push_back(f.at("mask"));
  }
  for (const json& v : j.at("dome_views")) {
    DomeViewEntry e;
    e.elevation_deg = v.at("elevation_deg");
    e.azimuth_deg = v.at("azimuth_deg");
    e.pose_rows = v.at("poses").get<std::vector<std::array<double, 12>>>();
    e.files = v.at("files").get<std::vector<std::string>>();
    m.dome_views.push_back(std::move(e));
  }
  return m;
}

CameraPose Dataset::dome_pose(const DomeViewEntry& view, int t) const {
  return pose_from_rows(view.pose_rows[t - 1], manifest.intrinsics);
}

ImageBuffer Dataset::dome_image(const DomeViewEntry& view, int t) const {
  return read_png((fs::path(root) / view.files[t - 1]).string());
}

Dataset load_dataset(const std::string& dir) {
  Dataset d;
  d.root = dir;
  d.manifest = read_manifest((fs::path(dir) / "manifest.json").string());
  SceneOptions opts;
  opts.image_size = d.manifest.image_size;
  opts.n_gaussians = d.manifest.n_gaussians;
  d.scene = gen_scene(d.manifest.scene_name, d.manifest.n_frames, d.manifest.seed, opts);
  for (int t = 1; t <= d.manifest.n_frames; ++t) {
    d.primary.push_back(pose_from_rows(d.manifest.primary_pose_rows[t - 1], d.manifest.intrinsics));
    d.frames.push_back(read_png((fs::path(dir) / d.manifest.frame_files[t - 1]).string()));
    d.masks.push_back(read_png((fs::path(dir) / d.manifest.mask_files[t - 1]).string()));
  }
  return d;
}

}  // namespace exdn
