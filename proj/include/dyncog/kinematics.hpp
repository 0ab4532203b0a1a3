#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dyncog/error.hpp"
#include "dyncog/scene.hpp"

namespace dyncog {

// Per-object 3D trajectories: mask centroid -> world point -> EMA -> backward
// differences. World and camera frames follow x-right, y-down, z-forward.

struct Centroid {
  Vec2 pixel;      // mean (x, y) of the mask pixels
  double depth_m;  // median of valid depth under the mask
};

namespace detail {

/// Median with the two middle values averaged for even counts. Reorders `v`.
inline double median_inplace(std::vector<double>& v) {
  const std::size_t n = v.size();
  const std::size_t mid = n / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double hi = v[mid];
  if (n % 2 == 1) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

inline Centroid extract_centroid(const BinaryMask& mask, const DepthMap& depth) {
  if (mask.width != depth.width || mask.height != depth.height)
    throw Error(Errc::dimension_mismatch, "mask and depth map differ in size");
  double sx = 0.0, sy = 0.0;
  std::size_t n = 0;
  std::vector<double> depths;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.get(x, y)) continue;
      sx += x;
      sy += y;
      ++n;
      if (depth.is_valid(x, y)) depths.push_back(depth.at(x, y));
    }
  }
  if (n == 0) throw Error(Errc::schema_violation, "empty mask has no centroid");
  if (depths.empty()) throw Error(Errc::no_valid_depth, "no valid depth under the mask");
  return {Vec2(sx / n, sy / n), detail::median_inplace(depths)};
}

/// World point of `pixel` at metric `depth_m`: the camera-frame ray point
/// ((u-cx)d/fx, (v-cy)d/fy, d) mapped through the pose.
inline Vec3 backproject(const Intrinsics& k, const CameraPose& pose, const Vec2& pixel, double depth_m) {
  if (!(depth_m > 0.0) || !std::isfinite(depth_m)) throw Error(Errc::non_positive_depth, "depth must be > 0");
  const Vec3 cam((pixel.x() - k.cx) * depth_m / k.fx, (pixel.y() - k.cy) * depth_m / k.fy, depth_m);
  return pose.camera_to_world(cam);
}

struct Projection {
  Vec2 pixel;
  double depth_m;
};

/// Forward pinhole projection (inverse of backproject).
inline Projection project(const Intrinsics& k, const CameraPose& pose, const Vec3& world) {
  const Vec3 cam = pose.world_to_camera(world);
  if (!(cam.z() > 0.0)) throw Error(Errc::non_positive_depth, "point is behind the camera");
  return {Vec2(k.fx * cam.x() / cam.z() + k.cx, k.fy * cam.y() / cam.z() + k.cy), cam.z()};
}

/// s0 = x0, s_t = alpha * x_t + (1 - alpha) * s_{t-1}.
inline std::vector<Vec3> ema_smooth(std::span<const Vec3> series, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(Errc::alpha_out_of_range, "alpha must lie in (0, 1]");
  std::vector<Vec3> out;
  out.reserve(series.size());
  for (const Vec3& x : series) out.push_back(out.empty() ? x : Vec3(alpha * x + (1.0 - alpha) * out.back()));
  return out;
}

struct TimedPoint {
  double time_s;
  Vec3 value;
};

struct Derivatives {
  std::vector<std::optional<Vec3>> velocity;
  std::vector<std::optional<Vec3>> acceleration;
};

/// Backward differences over consecutive entries using their true elapsed
/// time, so gaps in observation stretch the step instead of being filled.
inline Derivatives differentiate(std::span<const TimedPoint> points) {
  Derivatives d;
  d.velocity.assign(points.size(), std::nullopt);
  d.acceleration.assign(points.size(), std::nullopt);
  for (std::size_t i = 1; i < points.size(); ++i) {
    const double dt = points[i].time_s - points[i - 1].time_s;
    if (!(dt > 0.0)) throw Error(Errc::schema_violation, "timestamps must be strictly increasing");
    d.velocity[i] = Vec3((points[i].value - points[i - 1].value) / dt);
    if (d.velocity[i - 1]) d.acceleration[i] = Vec3((*d.velocity[i] - *d.velocity[i - 1]) / dt);
  }
  return d;
}

struct TrajectorySample {
  int t = 0;
  double time_s = 0.0;
  bool observed = false;
  std::optional<Vec3> raw_position;  // before smoothing
  std::optional<Vec3> position;      // smoothed, world frame, metres
  std::optional<Vec3> velocity;      // m/s
  std::optional<Vec3> acceleration;  // m/s^2
  std::optional<Vec3> bbox_size;     // camera-aligned extents, metres
};

struct ObjectTrack {
  int object_id = 0;
  std::string category;
  std::vector<TrajectorySample> samples;  // sorted by t, first and last observed

  const TrajectorySample* at(int t) const {
    if (samples.empty() || t < samples.front().t || t > samples.back().t) return nullptr;
    return &samples[static_cast<std::size_t>(t - samples.front().t)];
  }
  int first_frame() const { return samples.front().t; }
  int last_frame() const { return samples.back().t; }
};

/// Unit heading of a velocity, or nullopt when effectively still.
inline std::optional<Vec3> heading_of(const Vec3& velocity, double min_speed = 1e-9) {
  const double n = velocity.norm();
  if (n <= min_speed) return std::nullopt;
  return Vec3(velocity / n);
}

struct TrackOptions {
  double alpha = 0.6;
};

struct TrackSet {
  std::vector<ObjectTrack> tracks;  // sorted by object_id
  std::vector<std::string> warnings;

  const ObjectTrack* find(int object_id) const {
    for (const auto& t : tracks)
      if (t.object_id == object_id) return &t;
    return nullptr;
  }
};

namespace detail {

struct Observation {
  Vec3 position;
  Vec3 bbox;
};

inline Observation observe(const BinaryMask& mask, const DepthMap& depth, const Intrinsics& k,
                           const CameraPose& pose) {
  const Centroid c = extract_centroid(mask, depth);
  int xmin = mask.width, xmax = -1, ymin = mask.height, ymax = -1;
  std::vector<double> depths;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.get(x, y)) continue;
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
      if (depth.is_valid(x, y)) depths.push_back(depth.at(x, y));
    }
  }
  std::sort(depths.begin(), depths.end());
  // Pixel footprint spans [min - 0.5, max + 0.5] on each axis.
  const Vec3 bbox((xmax - xmin + 1) * c.depth_m / k.fx, (ymax - ymin + 1) * c.depth_m / k.fy,
                  quantile_sorted(depths, 0.9) - quantile_sorted(depths, 0.1));
  return {backproject(k, pose, c.pixel, c.depth_m), bbox};
}

}  // namespace detail

/// Reconstructs one smoothed track per object id seen in the video.
inline TrackSet build_tracks(const VideoManifest& m, const TrackOptions& opts = {}) {
  if (!(opts.alpha > 0.0 && opts.alpha <= 1.0)) throw Error(Errc::alpha_out_of_range, "alpha must lie in (0, 1]");
  struct Raw {
    std::string category;
    std::map<int, std::optional<detail::Observation>> frames;  // present mask -> observation or gap
  };
  std::map<int, Raw> raw;
  TrackSet out;
  for (int t = 0; t < m.frame_count(); ++t) {
    const DepthMap depth = m.load_depth(t);
    const Intrinsics& k = m.intrinsics_at(t);
    const CameraPose& pose = m.frames[static_cast<std::size_t>(t)].pose;
    for (const auto& inst : m.load_masks(t)) {
      auto& r = raw[inst.object_id];
      r.category = inst.category;
      try {
        r.frames[t] = detail::observe(inst.pixels, depth, k, pose);
      } catch (const Error& e) {
        if (e.code() != Errc::no_valid_depth) throw;
        r.frames[t] = std::nullopt;
        out.warnings.push_back("object " + std::to_string(inst.object_id) + " frame " + std::to_string(t) +
                               ": no valid depth under mask, recorded as gap");
      }
    }
  }

  for (auto& [id, r] : raw) {
    std::vector<int> observed_t;
    std::vector<Vec3> positions;
    for (const auto& [t, obs] : r.frames) {
      if (!obs) continue;
      observed_t.push_back(t);
      positions.push_back(obs->position);
    }
    if (observed_t.empty()) {
      out.warnings.push_back("object " + std::to_string(id) + " dropped: no frame with valid depth");
      continue;
    }
    const std::vector<Vec3> smooth = ema_smooth(positions, opts.alpha);
    std::vector<TimedPoint> timed;
    timed.reserve(smooth.size());
    for (std::size_t i = 0; i < smooth.size(); ++i) timed.push_back({m.time_of(observed_t[i]), smooth[i]});
    const Derivatives d = differentiate(timed);

    ObjectTrack track;
    track.object_id = id;
    track.category = r.category;
    const int first = observed_t.front(), last = observed_t.back();
    std::size_t k = 0;
    for (int t = first; t <= last; ++t) {
      TrajectorySample s;
      s.t = t;
      s.time_s = m.time_of(t);
      if (k < observed_t.size() && observed_t[k] == t) {
        s.observed = true;
        s.raw_position = positions[k];
        s.position = smooth[k];
        s.velocity = d.velocity[k];
        s.acceleration = d.acceleration[k];
        s.bbox_size = r.frames.at(t)->bbox;
        ++k;
      }
      track.samples.push_back(std::move(s));
    }
    out.tracks.push_back(std::move(track));
  }
  return out;
}

// Export: one JSON record per object.
inline json track_to_json(const ObjectTrack& track) {
  auto vec = [](const std::optional<Vec3>& v) -> json {
    if (!v) return nullptr;
    return json::array({v->x(), v->y(), v->z()});
  };
  json samples = json::array();
  for (const auto& s : track.samples) {
    samples.push_back({{"t", s.t},
                       {"time_s", s.time_s},
                       {"observed", s.observed},
                       {"position", vec(s.position)},
                       {"velocity", vec(s.velocity)},
                       {"acceleration", vec(s.acceleration)},
                       {"bbox_size", vec(s.bbox_size)}});
  }
  return {{"object_id", track.object_id},
          {"category", track.category},
          {"units", {{"position", "m"}, {"velocity", "m/s"}, {"acceleration", "m/s^2"}}},
          {"samples", samples}};
}

}  // namespace dyncog
