#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "dyncog/image.hpp"
#include "dyncog/scene.hpp"
#include "dyncog/util.hpp"

namespace dyncog::synth {

// Procedural RGB-D scenes with exact ground truth: fronto-parallel textured
// boxes moving at constant velocity in front of a textured backdrop, seen by
// a translating pinhole camera. Used for fixtures, demos and calibration.

/// Counter-based uniform generator; identical sequences on every platform.
class Uniform {
 public:
  explicit Uniform(std::uint64_t seed) : state_(seed) {}
  double next() {  // [0, 1)
    state_ = splitmix64(state_);
    return static_cast<double>(state_ >> 11) * 0x1.0p-53;
  }
  double range(double lo, double hi) { return lo + (hi - lo) * next(); }

 private:
  std::uint64_t state_;
};

struct Object {
  int id = 1;
  std::string category = "object";
  Vec3 start = Vec3(0, 0, 5);     // world position of the box centre at t = 0
  Vec3 velocity = Vec3::Zero();   // m/s
  double width_m = 0.8;
  double height_m = 0.6;
  int appear_frame = 0;
  int vanish_frame = -1;          // first frame no longer drawn; -1 = never
  std::set<int> hidden_frames;    // drawn as absent (occlusion gaps)
  std::array<std::uint8_t, 3> tint = {200, 60, 40};

  Vec3 position_at(double time_s) const { return start + velocity * time_s; }
  bool visible_at(int t) const {
    return t >= appear_frame && (vanish_frame < 0 || t < vanish_frame) && !hidden_frames.contains(t);
  }
};

struct Scene {
  std::string video_id = "scripted";
  SourceDataset source = SourceDataset::dynamic_replica;
  int frames = 30;
  double fps = kProcessingFps;
  Intrinsics intrinsics{250.0, 250.0, 320.0, 240.0, 640, 480};
  std::vector<Object> objects;
  Vec3 camera_start = Vec3::Zero();
  Vec3 camera_velocity = Vec3::Zero();
  double backdrop_z = 15.0;         // world z of the textured backdrop plane
  double depth_noise_m = 0.0;       // per-pixel uniform noise amplitude
  double depth_scale = 0.001;       // metres per stored unit
  std::uint64_t seed = 1;

  CameraPose pose_at(int t) const {
    CameraPose p;
    p.translation = camera_start + camera_velocity * (t / fps);
    return p;
  }
};

struct Frame {
  RgbImage rgb;
  Image<std::uint16_t> depth;  // stored units (scene.depth_scale metres each)
  Image<std::uint16_t> mask;   // object id per pixel, 0 = background
  CameraPose pose;
};

namespace detail {

inline double hash01(std::int64_t a, std::int64_t b, std::uint64_t seed) {
  const std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(a) * 0x9E3779B1ull +
                                                        static_cast<std::uint64_t>(b)));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

/// Blocky value texture on a metric plane; `cell` is the block size in metres.
inline double texture(double x, double y, double cell, std::uint64_t seed) {
  const auto cx = static_cast<std::int64_t>(std::floor(x / cell));
  const auto cy = static_cast<std::int64_t>(std::floor(y / cell));
  return hash01(cx, cy, seed);
}

inline std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace detail

inline Frame render(const Scene& s, int t) {
  const Intrinsics& k = s.intrinsics;
  Frame f;
  f.rgb = RgbImage(k.width, k.height, 3);
  f.depth = Image<std::uint16_t>(k.width, k.height, 1);
  f.mask = Image<std::uint16_t>(k.width, k.height, 1);
  f.pose = s.pose_at(t);
  const Vec3 cam = f.pose.translation;
  const double time = t / s.fps;
  std::vector<double> zbuf(static_cast<std::size_t>(k.width) * k.height, 0.0);

  // Backdrop: plane at world z = backdrop_z, textured in world x/y.
  const double zb = s.backdrop_z - cam.z();
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      const double wx = cam.x() + (x - k.cx) * zb / k.fx;
      const double wy = cam.y() + (y - k.cy) * zb / k.fy;
      const double v = 60.0 + 120.0 * detail::texture(wx, wy, 0.12, s.seed);
      for (int c = 0; c < 3; ++c) f.rgb.at(x, y, c) = detail::to_u8(v);
      zbuf[static_cast<std::size_t>(y) * k.width + x] = zb;
    }
  }

  // Boxes, far to near.
  std::vector<const Object*> order;
  for (const auto& o : s.objects)
    if (o.visible_at(t)) order.push_back(&o);
  std::sort(order.begin(), order.end(), [&](const Object* a, const Object* b) {
    return a->position_at(time).z() > b->position_at(time).z();
  });
  for (const Object* o : order) {
    const Vec3 c = o->position_at(time) - cam;
    if (c.z() <= 0.1) continue;
    const double u = k.cx + k.fx * c.x() / c.z();
    const double v = k.cy + k.fy * c.y() / c.z();
    const double hw = 0.5 * k.fx * o->width_m / c.z();
    const double hh = 0.5 * k.fy * o->height_m / c.z();
    const int x0 = std::max(0, static_cast<int>(std::ceil(u - hw)));
    const int x1 = std::min(k.width - 1, static_cast<int>(std::floor(u + hw)));
    const int y0 = std::max(0, static_cast<int>(std::ceil(v - hh)));
    const int y1 = std::min(k.height - 1, static_cast<int>(std::floor(v + hh)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        // Texture fixed to the object surface so it moves with the object.
        const double lx = (x - u) * c.z() / k.fx;
        const double ly = (y - v) * c.z() / k.fy;
        const double shade = 0.55 + 0.45 * detail::texture(lx, ly, 0.1, s.seed ^ static_cast<std::uint64_t>(o->id));
        for (int ch = 0; ch < 3; ++ch) f.rgb.at(x, y, ch) = detail::to_u8(o->tint[static_cast<std::size_t>(ch)] * shade);
        zbuf[static_cast<std::size_t>(y) * k.width + x] = c.z();
        f.mask.at(x, y) = static_cast<std::uint16_t>(o->id);
      }
    }
  }

  Uniform noise(derive_seed(s.seed, "depth-noise-" + std::to_string(t)));
  for (std::size_t i = 0; i < zbuf.size(); ++i) {
    const double z = zbuf[i] + (s.depth_noise_m > 0.0 ? noise.range(-s.depth_noise_m, s.depth_noise_m) : 0.0);
    f.depth.data[i] = static_cast<std::uint16_t>(std::clamp(std::lround(z / s.depth_scale), 1L, 65535L));
  }
  return f;
}

/// Writes PNG assets plus manifest.json under `dir` and returns the manifest path.
inline std::filesystem::path write_scene(const Scene& s, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  VideoManifest m;
  m.video_id = s.video_id;
  m.source_dataset = s.source;
  m.fps = s.fps;
  m.intrinsics = s.intrinsics;
  m.geometry_provenance = GeometryProvenance::ground_truth;
  m.pose_convention = PoseConvention::world_from_camera;
  m.depth_scale = s.depth_scale;
  json categories = json::object();
  for (const auto& o : s.objects) categories[std::to_string(o.id)] = o.category;
  write_text_file(dir / "categories.json", categories.dump(2) + "\n");
  for (int t = 0; t < s.frames; ++t) {
    const Frame f = render(s, t);
    char name[32];
    std::snprintf(name, sizeof name, "%06d.png", t);
    FrameEntry e;
    e.rgb_ref = dir / "rgb" / name;
    e.depth_ref = dir / "depth" / name;
    e.mask_ref = dir / "mask" / name;
    e.pose = f.pose;
    e.source_index = t;
    save_rgb_png(e.rgb_ref, f.rgb);
    save_gray16_png(e.depth_ref, f.depth);
    save_gray8_png(e.mask_ref, f.mask);
    m.frames.push_back(std::move(e));
  }
  const auto path = dir / "manifest.json";
  write_text_file(path, manifest_to_json(m, dir, "categories.json").dump(2) + "\n");
  return path;
}

// Canonical scenes -------------------------------------------------------------

/// Two objects, static camera at the origin: A ("car") drives along +x at
/// 1 m/s from (0, 0, 5); B ("person") stands at (2.25, 1.6, 9). A draws level
/// with B around t = 2.2 s, so the pair goes approaching -> parallel -> receding.
inline Scene scripted_two_object(std::uint64_t seed = 7) {
  Scene s;
  s.video_id = "scripted";
  s.seed = seed;
  s.depth_noise_m = 0.01;
  Object a;
  a.id = 1;
  a.category = "car";
  a.start = Vec3(0.0, 0.0, 5.0);
  a.velocity = Vec3(1.0, 0.0, 0.0);
  a.width_m = 1.6;
  a.height_m = 1.4;
  a.tint = {210, 50, 40};
  Object b;
  b.id = 2;
  b.category = "person";
  b.start = Vec3(2.25, 1.6, 9.0);
  b.width_m = 0.6;
  b.height_m = 0.6;
  b.tint = {40, 90, 210};
  s.objects = {a, b};
  return s;
}

/// Same layout with A stopped: nothing in the scene moves.
inline Scene scripted_static(std::uint64_t seed = 7) {
  Scene s = scripted_two_object(seed);
  s.video_id = "scripted-static";
  s.objects[0].velocity = Vec3::Zero();
  return s;
}

/// Clip with a planted dynamism level k in 0..5: k moving boxes at
/// 0.25 k m/s in random image-plane directions, plus one static box.
inline Scene planted_clip(int level, std::uint64_t seed, int width = 320, int height = 240, int frames = 12) {
  Scene s;
  s.video_id = "planted-L" + std::to_string(level) + "-" + std::to_string(seed);
  s.seed = seed;
  s.frames = frames;
  const double f = 125.0 * width / 320.0;
  s.intrinsics = Intrinsics{f, f, width / 2.0, height / 2.0, width, height};
  s.depth_noise_m = 0.01;
  Uniform rng(derive_seed(seed, "planted-layout"));
  const double duration = (frames - 1) / s.fps;
  const double speed = 0.25 * level;
  for (int i = 0; i <= level; ++i) {
    Object o;
    o.id = i + 1;
    o.category = i == 0 ? "static-box" : "mover";
    const double z = rng.range(4.0, 6.0);
    o.width_m = rng.range(1.2, 2.0);
    o.height_m = rng.range(0.9, 1.5);
    const double half_x = 0.5 * width / f * z - o.width_m;
    const double half_y = 0.5 * height / f * z - o.height_m;
    const bool moving = i > 0;
    const double angle = rng.range(0.0, 2.0 * std::numbers::pi);
    o.velocity = moving ? Vec3(speed * std::cos(angle), speed * std::sin(angle), 0.0) : Vec3::Zero();
    // Pick the start so the whole path stays in view.
    const Vec3 travel = o.velocity * duration;
    const double lo_x = -half_x - std::min(0.0, travel.x()), hi_x = half_x - std::max(0.0, travel.x());
    const double lo_y = -half_y - std::min(0.0, travel.y()), hi_y = half_y - std::max(0.0, travel.y());
    o.start = Vec3(rng.range(lo_x, std::max(lo_x, hi_x)), rng.range(lo_y, std::max(lo_y, hi_y)), z);
    o.tint = {static_cast<std::uint8_t>(rng.range(40, 250)), static_cast<std::uint8_t>(rng.range(40, 250)),
              static_cast<std::uint8_t>(rng.range(40, 250))};
    s.objects.push_back(o);
  }
  return s;
}

}  // namespace dyncog::synth
