#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "dyncog/error.hpp"
#include "dyncog/forest.hpp"
#include "dyncog/image.hpp"
#include "dyncog/scene.hpp"
#include "dyncog/util.hpp"

namespace dyncog {

// Dynamism filter: motion statistics, geometric stability, dynamic coverage,
// diagnostic answers, forest score and the accept/reject gate.

inline constexpr int kBlockSize = 16;
inline constexpr int kSearchRadius = 8;
inline constexpr int kWorkingSide = 320;
inline constexpr int kDiagnosticCount = 26;

struct MotionFeatures {
  double blur_degree = 0.0;
  double fps = kProcessingFps;
  double iframe_count = 0.0;
  double mv_magnitude_mean = 0.0;  // px/frame at working resolution
  double mv_magnitude_var = 0.0;

  std::array<double, 5> values() const { return {blur_degree, fps, iframe_count, mv_magnitude_mean, mv_magnitude_var}; }
};

struct GeometricFeatures {
  double depth_continuity = 0.0;             // m
  double focal_stability = 0.0;              // relative std of fx
  double angular_acceleration_deg_s2 = 0.0;  // mean
  double translational_jerk_m_s3 = 0.0;      // mean
  double max_rotation_step_deg = 0.0;        // largest frame-to-frame rotation

  std::array<double, 5> values() const {
    return {depth_continuity, focal_stability, angular_acceleration_deg_s2, translational_jerk_m_s3,
            max_rotation_step_deg};
  }
};

struct CoverageFeatures {
  double moving_pixel_ratio = 0.0;
  double spatial_dispersion = 0.0;

  std::array<double, 2> values() const { return {moving_pixel_ratio, spatial_dispersion}; }
};

struct DiagnosticVector {
  std::array<double, kDiagnosticCount> answers{};

  static DiagnosticVector constant(double v) {
    DiagnosticVector d;
    d.answers.fill(v);
    return d;
  }
  static DiagnosticVector from(const std::vector<double>& v) {
    if (v.size() != kDiagnosticCount)
      throw Error(Errc::schema_violation, "diagnostic vector needs 26 answers, got " + std::to_string(v.size()));
    DiagnosticVector d;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!(v[i] >= 0.0 && v[i] <= 1.0)) throw Error(Errc::schema_violation, "diagnostic answers must lie in [0, 1]");
      d.answers[i] = v[i];
    }
    return d;
  }
};

// Motion ------------------------------------------------------------------------

/// Integer factor that brings the longest side to at most kWorkingSide.
inline int working_factor(int width, int height) {
  const int longest = std::max(width, height);
  return std::max(1, (longest + kWorkingSide - 1) / kWorkingSide);
}

/// Variance of the 4-neighbour Laplacian over interior pixels.
inline double laplacian_variance(const GrayImage& g) {
  if (g.width < 3 || g.height < 3) return 0.0;
  double s = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (int y = 1; y + 1 < g.height; ++y) {
    for (int x = 1; x + 1 < g.width; ++x) {
      const double l = g.at(x - 1, y) + g.at(x + 1, y) + g.at(x, y - 1) + g.at(x, y + 1) - 4.0 * g.at(x, y);
      s += l;
      sq += l * l;
      ++n;
    }
  }
  const double mean = s / static_cast<double>(n);
  return std::max(0.0, sq / static_cast<double>(n) - mean * mean);
}

struct MotionVector {
  int block_x, block_y;
  int dx, dy;  // displacement from the previous frame's matching block
};

/// Exhaustive block matching. Only blocks whose whole search window lies
/// inside the frame are matched; SAD ties go to the smaller displacement.
inline std::vector<MotionVector> block_motion(const GrayImage& prev, const GrayImage& cur) {
  if (!prev.same_shape(cur)) throw Error(Errc::dimension_mismatch, "frames differ in size");
  std::vector<std::pair<int, int>> candidates;
  for (int dy = -kSearchRadius; dy <= kSearchRadius; ++dy)
    for (int dx = -kSearchRadius; dx <= kSearchRadius; ++dx) candidates.emplace_back(dx, dy);
  std::stable_sort(candidates.begin(), candidates.end(), [](auto a, auto b) {
    return a.first * a.first + a.second * a.second < b.first * b.first + b.second * b.second;
  });
  std::vector<MotionVector> out;
  for (int by = kSearchRadius; by + kBlockSize + kSearchRadius <= cur.height; by += kBlockSize) {
    for (int bx = kSearchRadius; bx + kBlockSize + kSearchRadius <= cur.width; bx += kBlockSize) {
      double best = std::numeric_limits<double>::infinity();
      std::pair<int, int> best_d{0, 0};
      for (const auto& [dx, dy] : candidates) {
        // cur(x, y) ~ prev(x - dx, y - dy)
        double sad = 0.0;
        for (int y = 0; y < kBlockSize && sad < best; ++y) {
          const double* a = &cur.data[static_cast<std::size_t>(by + y) * cur.width + bx];
          const double* b = &prev.data[static_cast<std::size_t>(by + y - dy) * prev.width + bx - dx];
          for (int x = 0; x < kBlockSize; ++x) sad += std::abs(a[x] - b[x]);
        }
        if (sad < best) {
          best = sad;
          best_d = {dx, dy};
        }
      }
      out.push_back({bx, by, best_d.first, best_d.second});
    }
  }
  return out;
}

/// Mean absolute intensity difference between consecutive frames.
inline double frame_difference_energy(const GrayImage& prev, const GrayImage& cur) {
  double s = 0.0;
  for (std::size_t i = 0; i < cur.data.size(); ++i) s += std::abs(cur.data[i] - prev.data[i]);
  return cur.data.empty() ? 0.0 : s / static_cast<double>(cur.data.size());
}

/// Transitions whose energy reaches max(48, median + 3 * MAD) of all energies.
inline int count_scene_changes(const std::vector<double>& energies) {
  if (energies.empty()) return 0;
  std::vector<double> v = energies;
  auto median = [](std::vector<double> x) {
    std::sort(x.begin(), x.end());
    const std::size_t n = x.size();
    return n % 2 ? x[n / 2] : 0.5 * (x[n / 2 - 1] + x[n / 2]);
  };
  const double med = median(v);
  for (auto& e : v) e = std::abs(e - med);
  const double threshold = std::max(48.0, med + 3.0 * median(v));
  return static_cast<int>(std::count_if(energies.begin(), energies.end(), [&](double e) { return e >= threshold; }));
}

/// Frames are grayscale at full resolution; they are reduced to the working
/// resolution here. `iframe_count` overrides the scene-change estimate.
inline MotionFeatures motion_features(std::span<const GrayImage> frames, double fps,
                                      std::optional<int> iframe_count = std::nullopt) {
  if (frames.size() < 2) throw Error(Errc::too_few_frames, "motion features need at least 2 frames");
  if (!(fps > 0.0)) throw Error(Errc::schema_violation, "fps must be positive");
  const int factor = working_factor(frames.front().width, frames.front().height);
  std::vector<GrayImage> work;
  work.reserve(frames.size());
  for (const auto& f : frames) {
    if (!f.same_shape(frames.front())) throw Error(Errc::dimension_mismatch, "frames differ in size");
    work.push_back(downscale(f, factor));
  }
  MotionFeatures m;
  m.fps = fps;
  for (const auto& w : work) m.blur_degree += laplacian_variance(w);
  m.blur_degree /= static_cast<double>(work.size());

  std::vector<double> mags, energies;
  for (std::size_t t = 1; t < work.size(); ++t) {
    for (const auto& mv : block_motion(work[t - 1], work[t])) mags.push_back(std::hypot(mv.dx, mv.dy));
    energies.push_back(frame_difference_energy(work[t - 1], work[t]));
  }
  if (!mags.empty()) {
    const double n = static_cast<double>(mags.size());
    m.mv_magnitude_mean = std::accumulate(mags.begin(), mags.end(), 0.0) / n;
    double var = 0.0;
    for (double x : mags) var += (x - m.mv_magnitude_mean) * (x - m.mv_magnitude_mean);
    m.mv_magnitude_var = var / n;
  }
  m.iframe_count = iframe_count ? *iframe_count : count_scene_changes(energies);
  return m;
}

inline std::vector<GrayImage> load_gray_frames(const VideoManifest& m) {
  std::vector<GrayImage> frames;
  frames.reserve(static_cast<std::size_t>(m.frame_count()));
  for (int t = 0; t < m.frame_count(); ++t) frames.push_back(to_gray(m.load_frame(t)));
  return frames;
}

// Geometry ----------------------------------------------------------------------

/// Camera stability from poses, intrinsics and depth. Angular rates use the
/// rotation vector of each consecutive relative rotation.
inline GeometricFeatures geometric_features(const VideoManifest& m) {
  GeometricFeatures g;
  const int n = m.frame_count();
  if (n < 2) return g;

  double depth_sum = 0.0;
  int depth_pairs = 0;
  DepthMap prev = m.load_depth(0);
  for (int t = 1; t < n; ++t) {
    DepthMap cur = m.load_depth(t);
    if (cur.width == prev.width && cur.height == prev.height) {
      double s = 0.0;
      std::size_t c = 0;
      for (int y = 0; y < cur.height; ++y)
        for (int x = 0; x < cur.width; ++x)
          if (cur.is_valid(x, y) && prev.is_valid(x, y)) {
            s += std::abs(static_cast<double>(cur.at(x, y)) - prev.at(x, y));
            ++c;
          }
      if (c) {
        depth_sum += s / static_cast<double>(c);
        ++depth_pairs;
      }
    }
    prev = std::move(cur);
  }
  if (depth_pairs) g.depth_continuity = depth_sum / depth_pairs;

  double fsum = 0.0, fsq = 0.0;
  for (int t = 0; t < n; ++t) {
    const double fx = m.intrinsics_at(t).fx;
    fsum += fx;
    fsq += fx * fx;
  }
  const double fmean = fsum / n;
  g.focal_stability = std::sqrt(std::max(0.0, fsq / n - fmean * fmean)) / fmean;

  constexpr double deg = 180.0 / std::numbers::pi;
  std::vector<Vec3> omega;     // deg/s, t = 1..n-1
  std::vector<double> omega_dt;
  std::vector<Vec3> vel;       // m/s
  for (int t = 1; t < n; ++t) {
    const auto& a = m.frames[static_cast<std::size_t>(t - 1)].pose;
    const auto& b = m.frames[static_cast<std::size_t>(t)].pose;
    const double dt = m.time_of(t) - m.time_of(t - 1);
    const Eigen::AngleAxisd rel(Mat3(a.world_rotation().transpose() * b.world_rotation()));
    g.max_rotation_step_deg = std::max(g.max_rotation_step_deg, std::abs(rel.angle()) * deg);
    omega.push_back(rel.axis() * rel.angle() * deg / dt);
    omega_dt.push_back(dt);
    vel.push_back((b.center() - a.center()) / dt);
  }
  std::vector<Vec3> acc;
  double ang = 0.0;
  for (std::size_t i = 1; i < omega.size(); ++i) {
    ang += (omega[i] - omega[i - 1]).norm() / omega_dt[i];
    acc.push_back((vel[i] - vel[i - 1]) / omega_dt[i]);
  }
  if (omega.size() > 1) g.angular_acceleration_deg_s2 = ang / static_cast<double>(omega.size() - 1);
  double jerk = 0.0;
  for (std::size_t i = 1; i < acc.size(); ++i) jerk += (acc[i] - acc[i - 1]).norm() / omega_dt[i + 1];
  if (acc.size() > 1) g.translational_jerk_m_s3 = jerk / static_cast<double>(acc.size() - 1);
  return g;
}

// Coverage ----------------------------------------------------------------------

/// Objects count as moving when their mask centroid moves more than 1 px per
/// frame on average. Dispersion is the pooled std of moving-object centroids
/// over the image diagonal.
inline CoverageFeatures dynamic_coverage(const std::map<int, Masklet>& masklets, int frame_count, int width,
                                         int height) {
  CoverageFeatures c;
  if (masklets.empty() || frame_count <= 0 || width <= 0 || height <= 0) return c;
  auto centroid = [](const BinaryMask& mk) -> std::optional<Vec2> {
    double sx = 0.0, sy = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < mk.height; ++y)
      for (int x = 0; x < mk.width; ++x)
        if (mk.get(x, y)) {
          sx += x;
          sy += y;
          ++n;
        }
    if (!n) return std::nullopt;
    return Vec2(sx / n, sy / n);
  };

  std::vector<const Masklet*> moving;
  std::vector<Vec2> points;
  for (const auto& [id, ml] : masklets) {
    std::vector<std::pair<int, Vec2>> cs;
    for (const auto& [t, mk] : ml.frames)
      if (auto p = centroid(mk)) cs.emplace_back(t, *p);
    if (cs.size() < 2) continue;
    double disp = 0.0;
    for (std::size_t i = 1; i < cs.size(); ++i)
      disp += (cs[i].second - cs[i - 1].second).norm() / (cs[i].first - cs[i - 1].first);
    if (disp / static_cast<double>(cs.size() - 1) > 1.0) {
      moving.push_back(&ml);
      for (const auto& [t, p] : cs) points.push_back(p);
    }
  }
  if (moving.empty()) return c;

  const double pixels = static_cast<double>(width) * height;
  double ratio = 0.0;
  std::vector<std::uint8_t> covered(static_cast<std::size_t>(width) * height);
  for (int t = 0; t < frame_count; ++t) {
    std::fill(covered.begin(), covered.end(), 0);
    for (const Masklet* ml : moving)
      if (const BinaryMask* mk = ml->at(t); mk && mk->width == width && mk->height == height)
        for (std::size_t i = 0; i < covered.size(); ++i) covered[i] |= mk->bits[i];
    ratio += static_cast<double>(std::count(covered.begin(), covered.end(), std::uint8_t{1})) / pixels;
  }
  c.moving_pixel_ratio = ratio / frame_count;

  Vec2 mean = Vec2::Zero();
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  double var = 0.0;
  for (const auto& p : points) var += (p - mean).squaredNorm();
  const double diag = std::hypot(width, height);
  c.spatial_dispersion = std::clamp(std::sqrt(var / static_cast<double>(points.size())) / diag, 0.0, 1.0);
  return c;
}

// Feature layout ----------------------------------------------------------------

enum class FeatureGroup { motion, diagnostic, geometric, coverage };

inline int group_size(FeatureGroup g) {
  switch (g) {
    case FeatureGroup::motion: return 5;
    case FeatureGroup::diagnostic: return kDiagnosticCount;
    case FeatureGroup::geometric: return 5;
    case FeatureGroup::coverage: return 2;
  }
  return 0;
}

inline const char* to_string(FeatureGroup g) {
  switch (g) {
    case FeatureGroup::motion: return "motion";
    case FeatureGroup::diagnostic: return "diagnostic";
    case FeatureGroup::geometric: return "geometric";
    case FeatureGroup::coverage: return "coverage";
  }
  return "motion";
}

struct FeatureLayout {
  std::vector<FeatureGroup> groups = {FeatureGroup::motion, FeatureGroup::diagnostic};

  static FeatureLayout all() {
    return {{FeatureGroup::motion, FeatureGroup::diagnostic, FeatureGroup::geometric, FeatureGroup::coverage}};
  }

  /// Comma-separated group names, e.g. "motion,diagnostic,geometric".
  static FeatureLayout parse(const std::string& text) {
    FeatureLayout l;
    l.groups.clear();
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item == "motion") l.groups.push_back(FeatureGroup::motion);
      else if (item == "diagnostic") l.groups.push_back(FeatureGroup::diagnostic);
      else if (item == "geometric") l.groups.push_back(FeatureGroup::geometric);
      else if (item == "coverage") l.groups.push_back(FeatureGroup::coverage);
      else throw Error(Errc::usage, "unknown feature group '" + item + "'");
    }
    for (std::size_t i = 0; i < l.groups.size(); ++i)
      for (std::size_t j = i + 1; j < l.groups.size(); ++j)
        if (l.groups[i] == l.groups[j]) throw Error(Errc::usage, "feature group listed twice");
    if (l.groups.empty()) throw Error(Errc::usage, "empty feature layout");
    return l;
  }

  std::string to_string() const {
    std::string s;
    for (std::size_t i = 0; i < groups.size(); ++i) s += (i ? "," : "") + std::string(dyncog::to_string(groups[i]));
    return s;
  }

  int size() const {
    int n = 0;
    for (auto g : groups) n += group_size(g);
    return n;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (auto g : groups) {
      switch (g) {
        case FeatureGroup::motion:
          for (const char* s : {"blur_degree", "fps", "iframe_count", "mv_magnitude_mean", "mv_magnitude_var"})
            out.push_back(s);
          break;
        case FeatureGroup::diagnostic:
          for (int i = 1; i <= kDiagnosticCount; ++i) out.push_back("diag_q" + std::to_string(i));
          break;
        case FeatureGroup::geometric:
          for (const char* s : {"depth_continuity", "focal_stability", "angular_acceleration", "translational_jerk",
                                "max_rotation_step"})
            out.push_back(s);
          break;
        case FeatureGroup::coverage:
          out.push_back("moving_pixel_ratio");
          out.push_back("spatial_dispersion");
          break;
      }
    }
    return out;
  }
};

inline std::vector<double> assemble_features(const MotionFeatures& motion, const GeometricFeatures& geometric,
                                             const CoverageFeatures& coverage, const DiagnosticVector& diagnostic,
                                             const FeatureLayout& layout = {}) {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(layout.size()));
  for (auto g : layout.groups) {
    switch (g) {
      case FeatureGroup::motion: for (double x : motion.values()) v.push_back(x); break;
      case FeatureGroup::diagnostic: for (double x : diagnostic.answers) v.push_back(x); break;
      case FeatureGroup::geometric: for (double x : geometric.values()) v.push_back(x); break;
      case FeatureGroup::coverage: for (double x : coverage.values()) v.push_back(x); break;
    }
  }
  return v;
}

struct DynamismScore {
  double value = 0.0;
  std::vector<double> components;
};

inline DynamismScore score_video(const ForestModel& model, const std::vector<double>& features) {
  if (static_cast<int>(features.size()) != model.n_features)
    throw Error(Errc::layout_mismatch, "feature vector has " + std::to_string(features.size()) +
                                           " entries, model expects " + std::to_string(model.n_features));
  return {model.predict(features), features};
}

// Gate --------------------------------------------------------------------------

struct GateThresholds {
  double min_score = 3.0;
  double max_focal_instability = 0.02;
  double max_rotation_step_deg = 15.0;
};

struct GateDecision {
  bool accept = false;
  std::vector<std::string> reasons;  // low_dynamism, focal_instability, pose_jump, vlm_reject
};

inline GateDecision gate_decision(double score, const GeometricFeatures& g, std::optional<bool> vlm_pass,
                                  const GateThresholds& th = {}) {
  GateDecision d;
  if (score < th.min_score) d.reasons.push_back("low_dynamism");
  if (g.focal_stability > th.max_focal_instability) d.reasons.push_back("focal_instability");
  if (g.max_rotation_step_deg > th.max_rotation_step_deg) d.reasons.push_back("pose_jump");
  if (vlm_pass && !*vlm_pass) d.reasons.push_back("vlm_reject");
  d.accept = d.reasons.empty();
  return d;
}

// Whole-video features ------------------------------------------------------------

struct VideoFeatures {
  MotionFeatures motion;
  GeometricFeatures geometric;
  CoverageFeatures coverage;
};

inline VideoFeatures extract_video_features(const VideoManifest& m) {
  VideoFeatures f;
  const auto frames = load_gray_frames(m);
  f.motion = motion_features(frames, m.fps, m.iframe_count);
  f.geometric = geometric_features(m);
  f.coverage = dynamic_coverage(load_masklets(m), m.frame_count(), m.intrinsics.width, m.intrinsics.height);
  return f;
}

}  // namespace dyncog
