#pragma once

#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dyncog/error.hpp"
#include "dyncog/kinematics.hpp"
#include "dyncog/scene.hpp"

namespace dyncog {

enum class Relation { approaching, receding, parallel };

inline const char* to_string(Relation r) {
  switch (r) {
    case Relation::approaching: return "approaching";
    case Relation::receding: return "receding";
    case Relation::parallel: return "parallel";
  }
  return "parallel";
}

/// Negative rate of change of |pos_b - pos_a|; positive while closing.
inline double closing_speed(const Vec3& pos_a, const Vec3& pos_b, const Vec3& vel_a, const Vec3& vel_b) {
  const Vec3 r = pos_b - pos_a;
  const double d = r.norm();
  if (d < 1e-12) throw Error(Errc::coincident, "objects coincide; closing speed undefined");
  return -r.dot(vel_b - vel_a) / d;
}

inline Relation classify_relation(double closing, double eps_rel) {
  if (closing > eps_rel) return Relation::approaching;
  if (closing < -eps_rel) return Relation::receding;
  return Relation::parallel;
}

enum class Sector { front, right, back, left };
enum class Vertical { level, above, below };

inline const char* to_string(Sector s) {
  switch (s) {
    case Sector::front: return "front";
    case Sector::right: return "right";
    case Sector::back: return "back";
    case Sector::left: return "left";
  }
  return "front";
}

inline const char* to_string(Vertical v) {
  switch (v) {
    case Vertical::level: return "level";
    case Vertical::above: return "above";
    case Vertical::below: return "below";
  }
  return "level";
}

/// Azimuth sectors (degrees, half-open):
///   front [-45, 45), right [45, 135), back [135, 180] U (-180, -135), left [-135, -45).
/// Elevation refines to above/below when |elevation| >= 30.
inline Sector sector_of(double azimuth_deg) {
  // Snap to 1e-9 deg so values like atan2(1, 1) land on the intended boundary.
  const double a = std::round(azimuth_deg * 1e9) / 1e9;
  if (a >= -45.0 && a < 45.0) return Sector::front;
  if (a >= 45.0 && a < 135.0) return Sector::right;
  if (a >= -135.0 && a < -45.0) return Sector::left;
  return Sector::back;
}

inline Vertical vertical_of(double elevation_deg) {
  const double e = std::round(elevation_deg * 1e9) / 1e9;
  if (e >= 30.0) return Vertical::above;
  if (e <= -30.0) return Vertical::below;
  return Vertical::level;
}

struct Direction {
  double azimuth_deg = 0.0;    // (-180, 180], 0 = optical axis, positive = right
  double elevation_deg = 0.0;  // [-90, 90], positive = up
  double distance_m = 0.0;     // from the camera centre
  Sector sector = Sector::front;
  Vertical vertical = Vertical::level;
};

/// Direction of a camera-frame point (x right, y down, z forward).
inline Direction direction_in_camera(const Vec3& cam) {
  const double horiz = std::hypot(cam.x(), cam.z());
  const double dist = cam.norm();
  if (dist < 1e-12) throw Error(Errc::at_camera_center, "point coincides with the camera centre");
  constexpr double deg = 180.0 / std::numbers::pi;
  Direction d;
  d.azimuth_deg = std::atan2(cam.x(), cam.z()) * deg;
  if (d.azimuth_deg <= -180.0) d.azimuth_deg = 180.0;
  d.elevation_deg = std::atan2(-cam.y(), horiz) * deg;
  d.distance_m = dist;
  d.sector = sector_of(d.azimuth_deg);
  d.vertical = vertical_of(d.elevation_deg);
  return d;
}

inline Direction camera_direction(const CameraPose& pose, const Vec3& world_point) {
  return direction_in_camera(pose.world_to_camera(world_point));
}

struct RelationSample {
  int t = 0;
  int object_a = 0;  // object_a < object_b
  int object_b = 0;
  double distance_m = 0.0;
  double closing_speed = 0.0;                 // m/s, positive = closing
  Relation relation = Relation::parallel;     // thresholded closing speed at this frame
  Relation stable = Relation::parallel;       // after the persistence filter
};

struct DirectionSample {
  int t = 0;
  int object_id = 0;
  Direction direction;
};

struct CameraSample {
  int t = 0;
  Vec3 center = Vec3::Zero();
  std::optional<double> speed;                // m/s, backward difference
  std::optional<double> angular_rate_deg_s;   // relative rotation angle / dt
};

struct RelationOptions {
  double eps_rel = 0.05;  // m/s band labelled "parallel"
  int min_persistence = 2;
};

struct RelationTimeline {
  RelationOptions options;
  std::vector<RelationSample> relations;  // by t, then pair
  std::vector<DirectionSample> directions;  // by t, then object
  std::vector<CameraSample> camera;         // one per frame
  std::vector<std::string> warnings;

  /// All samples for one pair in time order.
  std::vector<RelationSample> pair_series(int a, int b) const {
    if (a > b) std::swap(a, b);
    std::vector<RelationSample> out;
    for (const auto& r : relations)
      if (r.object_a == a && r.object_b == b) out.push_back(r);
    return out;
  }
};

/// A label change only takes effect once the new label has held for
/// `min_run` consecutive samples. Short runs inherit the surrounding stable
/// label; leading short runs take the first stable one. With no qualifying
/// run at all, the longest (earliest on ties) run's label is used throughout.
inline std::vector<Relation> debounce_labels(const std::vector<Relation>& raw, int min_run) {
  std::vector<Relation> out(raw.size());
  if (raw.empty()) return out;
  struct Run {
    std::size_t begin, end;
    Relation label;
  };
  std::vector<Run> runs;
  for (std::size_t i = 0; i < raw.size();) {
    std::size_t j = i;
    while (j < raw.size() && raw[j] == raw[i]) ++j;
    runs.push_back({i, j, raw[i]});
    i = j;
  }
  std::optional<Relation> first_stable;
  for (const auto& r : runs)
    if (static_cast<int>(r.end - r.begin) >= min_run) {
      first_stable = r.label;
      break;
    }
  if (!first_stable) {
    const Run* best = &runs.front();
    for (const auto& r : runs)
      if (r.end - r.begin > best->end - best->begin) best = &r;
    std::fill(out.begin(), out.end(), best->label);
    return out;
  }
  Relation current = *first_stable;
  for (const auto& r : runs) {
    if (static_cast<int>(r.end - r.begin) >= min_run) current = r.label;
    std::fill(out.begin() + static_cast<std::ptrdiff_t>(r.begin), out.begin() + static_cast<std::ptrdiff_t>(r.end),
              current);
  }
  return out;
}

inline double rotation_angle_deg(const Mat3& relative) {
  const double c = std::clamp((relative.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / std::numbers::pi;
}

/// Pairwise relations, camera-relative directions and camera motion per frame.
/// Relations use the smoothed kinematics; a missing velocity (first observed
/// sample of a track) counts as zero.
inline RelationTimeline infer_timeline(const TrackSet& tracks, const VideoManifest& m,
                                       const RelationOptions& opts = {}) {
  RelationTimeline tl;
  tl.options = opts;
  const int n = m.frame_count();
  for (int t = 0; t < n; ++t) {
    CameraSample cam;
    cam.t = t;
    const CameraPose& pose = m.frames[static_cast<std::size_t>(t)].pose;
    cam.center = pose.center();
    if (t > 0) {
      const CameraPose& prev = m.frames[static_cast<std::size_t>(t - 1)].pose;
      const double dt = m.time_of(t) - m.time_of(t - 1);
      cam.speed = (cam.center - prev.center()).norm() / dt;
      cam.angular_rate_deg_s =
          rotation_angle_deg(prev.world_rotation().transpose() * pose.world_rotation()) / dt;
    }
    tl.camera.push_back(cam);

    std::vector<std::pair<int, const TrajectorySample*>> present;
    for (const auto& track : tracks.tracks) {
      const TrajectorySample* s = track.at(t);
      if (s && s->observed) present.emplace_back(track.object_id, s);
    }
    for (const auto& [id, s] : present) {
      try {
        tl.directions.push_back({t, id, camera_direction(pose, *s->position)});
      } catch (const Error& e) {
        if (e.code() != Errc::at_camera_center) throw;
        tl.warnings.push_back("object " + std::to_string(id) + " at camera centre in frame " + std::to_string(t));
      }
    }
    for (std::size_t i = 0; i < present.size(); ++i) {
      for (std::size_t j = i + 1; j < present.size(); ++j) {
        const auto& [ida, sa] = present[i];
        const auto& [idb, sb] = present[j];
        RelationSample r;
        r.t = t;
        r.object_a = ida;
        r.object_b = idb;
        r.distance_m = (*sb->position - *sa->position).norm();
        try {
          r.closing_speed = closing_speed(*sa->position, *sb->position, sa->velocity.value_or(Vec3::Zero()),
                                          sb->velocity.value_or(Vec3::Zero()));
        } catch (const Error& e) {
          if (e.code() != Errc::coincident) throw;
          r.closing_speed = 0.0;
          tl.warnings.push_back("objects " + std::to_string(ida) + "," + std::to_string(idb) +
                                " coincide in frame " + std::to_string(t));
        }
        r.relation = classify_relation(r.closing_speed, opts.eps_rel);
        tl.relations.push_back(r);
      }
    }
  }

  // Persistence filter, per pair, over that pair's co-observed samples.
  std::map<std::pair<int, int>, std::vector<std::size_t>> by_pair;
  for (std::size_t i = 0; i < tl.relations.size(); ++i)
    by_pair[{tl.relations[i].object_a, tl.relations[i].object_b}].push_back(i);
  for (const auto& [pair, idx] : by_pair) {
    std::vector<Relation> raw;
    raw.reserve(idx.size());
    for (auto i : idx) raw.push_back(tl.relations[i].relation);
    const auto stable = debounce_labels(raw, opts.min_persistence);
    for (std::size_t k = 0; k < idx.size(); ++k) tl.relations[idx[k]].stable = stable[k];
  }
  return tl;
}

inline json timeline_to_json_lines(const RelationTimeline& tl) {
  json lines = json::array();
  for (const auto& r : tl.relations) {
    lines.push_back({{"t", r.t},
                     {"pair", {r.object_a, r.object_b}},
                     {"distance_m", r.distance_m},
                     {"closing_speed", r.closing_speed},
                     {"label", to_string(r.relation)},
                     {"stable_label", to_string(r.stable)}});
  }
  for (const auto& d : tl.directions) {
    lines.push_back({{"t", d.t},
                     {"object_id", d.object_id},
                     {"azimuth_deg", d.direction.azimuth_deg},
                     {"elevation_deg", d.direction.elevation_deg},
                     {"distance_m", d.direction.distance_m},
                     {"label", to_string(d.direction.sector)},
                     {"vertical", to_string(d.direction.vertical)}});
  }
  return lines;
}

}  // namespace dyncog
