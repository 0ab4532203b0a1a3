#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dyncog/error.hpp"
#include "dyncog/image.hpp"
#include "dyncog/util.hpp"

namespace dyncog {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using json = nlohmann::json;

/// Rate every video is resampled to before tracking and rendering.
inline constexpr double kProcessingFps = 6.0;

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) throw Error(Errc::schema_violation, "focal lengths must be positive");
    if (width <= 0 || height <= 0) throw Error(Errc::schema_violation, "image size must be positive");
    if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
      throw Error(Errc::schema_violation, "principal point outside the image");
  }
  friend bool operator==(const Intrinsics&, const Intrinsics&) = default;
};

enum class PoseConvention { world_from_camera, camera_from_world };

/// Rigid camera pose. `rotation`/`translation` map in the direction named by
/// `convention`; use the accessors to get either direction unambiguously.
struct CameraPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  PoseConvention convention = PoseConvention::world_from_camera;

  static CameraPose identity() { return {}; }

  static CameraPose from_row_major(const std::array<double, 12>& m, PoseConvention conv) {
    CameraPose p;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) p.rotation(r, c) = m[static_cast<std::size_t>(r * 4 + c)];
      p.translation(r) = m[static_cast<std::size_t>(r * 4 + 3)];
    }
    p.convention = conv;
    return p;
  }

  std::array<double, 12> to_row_major() const {
    std::array<double, 12> m{};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) m[static_cast<std::size_t>(r * 4 + c)] = rotation(r, c);
      m[static_cast<std::size_t>(r * 4 + 3)] = translation(r);
    }
    return m;
  }

  /// Rotation taking camera-frame vectors to world-frame vectors.
  Mat3 world_rotation() const {
    return convention == PoseConvention::world_from_camera ? rotation : Mat3(rotation.transpose());
  }
  /// Camera centre in world coordinates.
  Vec3 center() const {
    return convention == PoseConvention::world_from_camera ? translation
                                                           : Vec3(-(rotation.transpose() * translation));
  }
  Vec3 camera_to_world(const Vec3& p) const {
    if (convention == PoseConvention::world_from_camera) return rotation * p + translation;
    return rotation.transpose() * (p - translation);
  }
  Vec3 world_to_camera(const Vec3& p) const {
    if (convention == PoseConvention::world_from_camera) return rotation.transpose() * (p - translation);
    return rotation * p + translation;
  }

  void validate(double tol = 1e-6) const {
    if (!rotation.allFinite() || !translation.allFinite())
      throw Error(Errc::schema_violation, "pose contains non-finite values");
    const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (ortho > tol) throw Error(Errc::schema_violation, "pose rotation is not orthonormal");
    if (std::abs(rotation.determinant() - 1.0) > tol)
      throw Error(Errc::schema_violation, "pose rotation determinant is not +1");
  }
};

// Depth ----------------------------------------------------------------------

struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;        // metres
  std::vector<std::uint8_t> valid;  // 1 = usable
  double scale_hint = 1.0;          // metres per stored unit (integer encodings)

  bool is_valid(int x, int y) const noexcept {
    return valid[static_cast<std::size_t>(y) * width + x] != 0;
  }
  double at(int x, int y) const noexcept { return values[static_cast<std::size_t>(y) * width + x]; }
  std::size_t valid_count() const noexcept {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
  }
};

/// Magic prefix of the raw float32 depth encoding:
/// "DF32" | uint32 width | uint32 height | width*height float32, all little-endian.
inline constexpr char kDepthF32Magic[4] = {'D', 'F', '3', '2'};

inline std::vector<std::uint8_t> encode_depth_f32(int width, int height, const std::vector<float>& values) {
  std::vector<std::uint8_t> out(12 + values.size() * 4);
  std::memcpy(out.data(), kDepthF32Magic, 4);
  const std::uint32_t w = static_cast<std::uint32_t>(width), h = static_cast<std::uint32_t>(height);
  std::memcpy(out.data() + 4, &w, 4);
  std::memcpy(out.data() + 8, &h, 4);
  std::memcpy(out.data() + 12, values.data(), values.size() * 4);
  return out;
}

/// Decodes a depth asset. Integer encodings: metres = stored * scale_hint and
/// stored 0 is invalid. Float encodings: non-finite or non-positive is invalid.
inline DepthMap decode_depth_bytes(const std::vector<std::uint8_t>& bytes, double scale_hint,
                                   const std::string& name) {
  if (!(scale_hint > 0.0) || !std::isfinite(scale_hint))
    throw Error(Errc::schema_violation, "depth scale must be positive: " + name);
  DepthMap d;
  d.scale_hint = scale_hint;
  if (bytes.size() >= 4 && std::memcmp(bytes.data(), kDepthF32Magic, 4) == 0) {
    if (bytes.size() < 12) throw Error(Errc::corrupt_asset, "truncated float depth header: " + name);
    std::uint32_t w = 0, h = 0;
    std::memcpy(&w, bytes.data() + 4, 4);
    std::memcpy(&h, bytes.data() + 8, 4);
    const std::size_t n = static_cast<std::size_t>(w) * h;
    if (w == 0 || h == 0 || bytes.size() != 12 + n * 4)
      throw Error(Errc::corrupt_asset, "float depth payload size mismatch: " + name);
    d.width = static_cast<int>(w);
    d.height = static_cast<int>(h);
    d.values.resize(n);
    d.valid.resize(n);
    std::memcpy(d.values.data(), bytes.data() + 12, n * 4);
    for (std::size_t i = 0; i < n; ++i) {
      const bool ok = std::isfinite(d.values[i]) && d.values[i] > 0.0f;
      d.valid[i] = ok ? 1 : 0;
      if (!ok) d.values[i] = 0.0f;
    }
    return d;
  }
  const RawImage raw = decode_image_bytes(bytes, name);
  if (raw.channels != 1) throw Error(Errc::unsupported_encoding, "depth image must be single-channel: " + name);
  d.width = raw.width;
  d.height = raw.height;
  d.values.resize(raw.samples.size());
  d.valid.resize(raw.samples.size());
  for (std::size_t i = 0; i < raw.samples.size(); ++i) {
    d.values[i] = static_cast<float>(raw.samples[i] * scale_hint);
    d.valid[i] = raw.samples[i] != 0 ? 1 : 0;
  }
  return d;
}

inline DepthMap decode_depth(const std::filesystem::path& ref, double scale_hint) {
  if (!std::filesystem::exists(ref)) throw Error(Errc::missing_asset, ref.string());
  return decode_depth_bytes(read_binary_file(ref), scale_hint, ref.string());
}

// Masks ----------------------------------------------------------------------

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(int w, int h) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

  bool get(int x, int y) const noexcept { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v = true) noexcept { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const noexcept {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
  }
  bool empty() const noexcept { return std::none_of(bits.begin(), bits.end(), [](auto b) { return b != 0; }); }
  bool same_shape(const BinaryMask& o) const noexcept { return width == o.width && height == o.height; }
  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;
};

struct InstanceMask {
  int object_id = 0;
  std::string category;
  BinaryMask pixels;
};

/// Splits an indexed mask image (pixel value = object id, 0 = background)
/// into one non-empty mask per id, sorted by id.
inline std::vector<InstanceMask> split_indexed_mask(const RawImage& raw, const std::map<int, std::string>& categories,
                                                    const std::string& name) {
  if (raw.channels != 1) throw Error(Errc::unsupported_encoding, "mask image must be single-channel: " + name);
  std::map<int, BinaryMask> by_id;
  for (int y = 0; y < raw.height; ++y) {
    for (int x = 0; x < raw.width; ++x) {
      const int id = raw.samples[static_cast<std::size_t>(y) * raw.width + x];
      if (id == 0) continue;
      auto [it, inserted] = by_id.try_emplace(id, raw.width, raw.height);
      it->second.set(x, y);
    }
  }
  std::vector<InstanceMask> out;
  out.reserve(by_id.size());
  for (auto& [id, mask] : by_id) {
    auto cat = categories.find(id);
    out.push_back({id, cat != categories.end() ? cat->second : std::string("object"), std::move(mask)});
  }
  return out;
}

inline std::vector<InstanceMask> decode_instance_masks(const std::filesystem::path& ref,
                                                       const std::map<int, std::string>& categories) {
  return split_indexed_mask(load_raw_image(ref), categories, ref.string());
}

/// Row-major runs of set pixels as (start, length); an all-false mask has no runs.
struct MaskRuns {
  int width = 0;
  int height = 0;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> runs;
  friend bool operator==(const MaskRuns&, const MaskRuns&) = default;
};

inline MaskRuns encode_runs(const BinaryMask& m) {
  MaskRuns r{m.width, m.height, {}};
  const std::size_t n = m.bits.size();
  std::size_t i = 0;
  while (i < n) {
    if (!m.bits[i]) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && m.bits[j]) ++j;
    r.runs.emplace_back(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j - i));
    i = j;
  }
  return r;
}

inline BinaryMask decode_runs(const MaskRuns& r) {
  BinaryMask m(r.width, r.height);
  const std::size_t n = m.bits.size();
  for (auto [start, len] : r.runs) {
    if (static_cast<std::size_t>(start) + len > n) throw Error(Errc::corrupt_asset, "mask run exceeds image");
    std::fill_n(m.bits.begin() + start, len, std::uint8_t{1});
  }
  return m;
}

inline json runs_to_json(const MaskRuns& r) {
  json runs = json::array();
  for (auto [s, l] : r.runs) runs.push_back({s, l});
  return {{"width", r.width}, {"height", r.height}, {"runs", runs}};
}

inline MaskRuns runs_from_json(const json& j) {
  MaskRuns r;
  try {
    r.width = j.at("width").get<int>();
    r.height = j.at("height").get<int>();
    for (const auto& run : j.at("runs")) r.runs.emplace_back(run.at(0).get<std::uint32_t>(), run.at(1).get<std::uint32_t>());
  } catch (const json::exception& e) {
    throw Error(Errc::schema_violation, std::string("mask runs: ") + e.what());
  }
  if (r.width <= 0 || r.height <= 0) throw Error(Errc::schema_violation, "mask runs: bad dimensions");
  return r;
}

/// One object's masks across a video; frames without an entry are absent
/// (occluded or out of view).
struct Masklet {
  int object_id = 0;
  std::string category;
  int width = 0;
  int height = 0;
  std::map<int, BinaryMask> frames;

  const BinaryMask* at(int t) const {
    auto it = frames.find(t);
    return it == frames.end() ? nullptr : &it->second;
  }
  friend bool operator==(const Masklet&, const Masklet&) = default;
};

inline json masklet_to_json(const Masklet& m) {
  json frames = json::array();
  for (const auto& [t, mask] : m.frames) {
    json f = runs_to_json(encode_runs(mask));
    f["t"] = t;
    frames.push_back(std::move(f));
  }
  return {{"object_id", m.object_id}, {"category", m.category}, {"width", m.width},
          {"height", m.height}, {"frames", frames}};
}

inline Masklet masklet_from_json(const json& j) {
  Masklet m;
  try {
    m.object_id = j.at("object_id").get<int>();
    m.category = j.value("category", std::string("object"));
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    int last = std::numeric_limits<int>::min();
    for (const auto& f : j.at("frames")) {
      const int t = f.at("t").get<int>();
      if (t <= last) throw Error(Errc::schema_violation, "masklet frame indices must be strictly increasing");
      last = t;
      BinaryMask mask = decode_runs(runs_from_json(f));
      if (mask.width != m.width || mask.height != m.height)
        throw Error(Errc::schema_violation, "masklet frame size differs from masklet size");
      m.frames.emplace(t, std::move(mask));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::schema_violation, std::string("masklet: ") + e.what());
  }
  return m;
}

/// Encode every frame to runs and decode back.
inline Masklet masklet_roundtrip(const Masklet& m) {
  Masklet out = m;
  out.frames.clear();
  for (const auto& [t, mask] : m.frames) out.frames.emplace(t, decode_runs(encode_runs(mask)));
  return out;
}

// Manifest -------------------------------------------------------------------

enum class SourceDataset {
  davis,
  sa_v,
  dynpose_100k,
  youtube_vis,
  dynamic_replica,
  point_odyssey,
  spring,
  total_recon,
};

inline constexpr std::array<std::pair<SourceDataset, const char*>, 8> kSourceNames{{
    {SourceDataset::davis, "davis"},
    {SourceDataset::sa_v, "sa_v"},
    {SourceDataset::dynpose_100k, "dynpose_100k"},
    {SourceDataset::youtube_vis, "youtube_vis"},
    {SourceDataset::dynamic_replica, "dynamic_replica"},
    {SourceDataset::point_odyssey, "point_odyssey"},
    {SourceDataset::spring, "spring"},
    {SourceDataset::total_recon, "total_recon"},
}};

inline std::string to_string(SourceDataset s) {
  for (auto [v, n] : kSourceNames)
    if (v == s) return n;
  return "unknown";
}

inline SourceDataset parse_source(const std::string& s) {
  for (auto [v, n] : kSourceNames)
    if (s == n) return v;
  throw Error(Errc::schema_violation, "unknown source_dataset '" + s + "'");
}

enum class GeometryProvenance { ground_truth, estimated };

struct FrameEntry {
  std::filesystem::path rgb_ref;
  std::filesystem::path depth_ref;
  std::filesystem::path mask_ref;
  CameraPose pose;
  std::optional<Intrinsics> intrinsics;  // per-frame override (estimated calibration)
  int source_index = 0;                  // index in the manifest before resampling
};

struct VideoManifest {
  std::string video_id;
  SourceDataset source_dataset = SourceDataset::davis;
  double fps = kProcessingFps;
  Intrinsics intrinsics;
  GeometryProvenance geometry_provenance = GeometryProvenance::ground_truth;
  PoseConvention pose_convention = PoseConvention::world_from_camera;
  double depth_scale = 0.001;
  std::map<int, std::string> categories;
  std::optional<int> iframe_count;
  std::vector<FrameEntry> frames;

  int frame_count() const noexcept { return static_cast<int>(frames.size()); }
  double time_of(int t) const noexcept { return t / fps; }
  const Intrinsics& intrinsics_at(int t) const {
    const auto& o = frames[static_cast<std::size_t>(t)].intrinsics;
    return o ? *o : intrinsics;
  }

  DepthMap load_depth(int t) const { return decode_depth(frames[static_cast<std::size_t>(t)].depth_ref, depth_scale); }
  std::vector<InstanceMask> load_masks(int t) const {
    return decode_instance_masks(frames[static_cast<std::size_t>(t)].mask_ref, categories);
  }
  RgbImage load_frame(int t) const { return load_rgb(frames[static_cast<std::size_t>(t)].rgb_ref); }
};

namespace detail {

inline Intrinsics intrinsics_from_json(const json& j) {
  Intrinsics k;
  k.fx = j.at("fx").get<double>();
  k.fy = j.at("fy").get<double>();
  k.cx = j.at("cx").get<double>();
  k.cy = j.at("cy").get<double>();
  k.width = j.at("width").get<int>();
  k.height = j.at("height").get<int>();
  k.validate();
  return k;
}

inline json intrinsics_to_json(const Intrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

inline PoseConvention parse_convention(const std::string& s) {
  if (s == "world_from_camera") return PoseConvention::world_from_camera;
  if (s == "camera_from_world") return PoseConvention::camera_from_world;
  throw Error(Errc::schema_violation, "unknown pose_convention '" + s + "'");
}

inline std::map<int, std::string> load_categories(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(Errc::missing_asset, path.string());
  std::map<int, std::string> out;
  try {
    const json j = json::parse(read_text_file(path));
    for (auto it = j.begin(); it != j.end(); ++it) out[std::stoi(it.key())] = it.value().get<std::string>();
  } catch (const std::exception& e) {
    throw Error(Errc::schema_violation, "category table " + path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace detail

struct ManifestOptions {
  /// Decode every referenced asset during loading so downstream stages never
  /// hit a bad file halfway through a video.
  bool validate_assets = true;
};

/// Parses a manifest document. Relative asset paths resolve against `base_dir`.
inline VideoManifest parse_manifest(const json& j, const std::filesystem::path& base_dir,
                                    const ManifestOptions& opts = {}) {
  VideoManifest m;
  std::filesystem::path categories_ref;
  try {
    m.video_id = j.at("video_id").get<std::string>();
    if (m.video_id.empty()) throw Error(Errc::schema_violation, "video_id must be non-empty");
    m.source_dataset = parse_source(j.at("source_dataset").get<std::string>());
    m.fps = j.at("fps").get<double>();
    if (!(m.fps > 0.0) || !std::isfinite(m.fps)) throw Error(Errc::schema_violation, "fps must be positive");
    m.intrinsics = detail::intrinsics_from_json(j.at("intrinsics"));
    const std::string prov = j.at("geometry_provenance").get<std::string>();
    if (prov == "ground_truth") m.geometry_provenance = GeometryProvenance::ground_truth;
    else if (prov == "estimated") m.geometry_provenance = GeometryProvenance::estimated;
    else throw Error(Errc::schema_violation, "unknown geometry_provenance '" + prov + "'");
    m.pose_convention = detail::parse_convention(j.at("pose_convention").get<std::string>());
    m.depth_scale = j.value("depth_scale", 0.001);
    if (j.contains("iframe_count")) m.iframe_count = j.at("iframe_count").get<int>();
    if (j.contains("categories_ref")) categories_ref = base_dir / j.at("categories_ref").get<std::string>();
    const auto& frames = j.at("frames");
    if (!frames.is_array()) throw Error(Errc::schema_violation, "frames must be an array");
    int index = 0;
    for (const auto& f : frames) {
      FrameEntry e;
      e.rgb_ref = base_dir / f.at("rgb_ref").get<std::string>();
      e.depth_ref = base_dir / f.at("depth_ref").get<std::string>();
      e.mask_ref = base_dir / f.at("mask_ref").get<std::string>();
      const auto pose = f.at("pose").get<std::vector<double>>();
      if (pose.size() != 12) throw Error(Errc::schema_violation, "pose must have 12 numbers (row-major 3x4)");
      std::array<double, 12> arr{};
      std::copy(pose.begin(), pose.end(), arr.begin());
      e.pose = CameraPose::from_row_major(arr, m.pose_convention);
      e.pose.validate();
      if (f.contains("intrinsics")) e.intrinsics = detail::intrinsics_from_json(f.at("intrinsics"));
      e.source_index = index++;
      m.frames.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::schema_violation, std::string("manifest: ") + e.what());
  }
  if (m.frames.size() < 2)
    throw Error(Errc::degenerate_video, "video '" + m.video_id + "' has fewer than 2 frames");

  if (!categories_ref.empty()) m.categories = detail::load_categories(categories_ref);
  for (const auto& f : m.frames) {
    for (const auto* p : {&f.rgb_ref, &f.depth_ref, &f.mask_ref})
      if (!std::filesystem::exists(*p)) throw Error(Errc::missing_asset, p->string());
  }
  if (opts.validate_assets) {
    for (int t = 0; t < m.frame_count(); ++t) {
      const Intrinsics& k = m.intrinsics_at(t);
      const DepthMap d = m.load_depth(t);
      if (d.width != k.width || d.height != k.height)
        throw Error(Errc::schema_violation, "depth size differs from intrinsics at frame " + std::to_string(t));
      const RawImage mask = load_raw_image(m.frames[static_cast<std::size_t>(t)].mask_ref);
      if (mask.channels != 1) throw Error(Errc::unsupported_encoding, "mask image must be single-channel");
      if (mask.width != k.width || mask.height != k.height)
        throw Error(Errc::schema_violation, "mask size differs from intrinsics at frame " + std::to_string(t));
      const RawImage rgb = load_raw_image(m.frames[static_cast<std::size_t>(t)].rgb_ref);
      if (rgb.width != k.width || rgb.height != k.height)
        throw Error(Errc::schema_violation, "rgb size differs from intrinsics at frame " + std::to_string(t));
    }
  }
  return m;
}

inline VideoManifest load_manifest(const std::filesystem::path& path, const ManifestOptions& opts = {}) {
  if (!std::filesystem::exists(path)) throw Error(Errc::missing_asset, path.string());
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw Error(Errc::schema_violation, path.string() + ": " + e.what());
  }
  return parse_manifest(j, path.parent_path(), opts);
}

/// Serialises a manifest with asset paths relative to `base_dir`.
inline json manifest_to_json(const VideoManifest& m, const std::filesystem::path& base_dir,
                             const std::string& categories_ref = "") {
  json frames = json::array();
  for (const auto& f : m.frames) {
    const auto pose = f.pose.to_row_major();
    json e = {{"rgb_ref", std::filesystem::relative(f.rgb_ref, base_dir).generic_string()},
              {"depth_ref", std::filesystem::relative(f.depth_ref, base_dir).generic_string()},
              {"mask_ref", std::filesystem::relative(f.mask_ref, base_dir).generic_string()},
              {"pose", std::vector<double>(pose.begin(), pose.end())}};
    if (f.intrinsics) e["intrinsics"] = detail::intrinsics_to_json(*f.intrinsics);
    frames.push_back(std::move(e));
  }
  json j = {{"video_id", m.video_id},
            {"source_dataset", to_string(m.source_dataset)},
            {"fps", m.fps},
            {"geometry_provenance",
             m.geometry_provenance == GeometryProvenance::ground_truth ? "ground_truth" : "estimated"},
            {"pose_convention",
             m.pose_convention == PoseConvention::world_from_camera ? "world_from_camera" : "camera_from_world"},
            {"depth_scale", m.depth_scale},
            {"intrinsics", detail::intrinsics_to_json(m.intrinsics)},
            {"frames", frames}};
  if (!categories_ref.empty()) j["categories_ref"] = categories_ref;
  if (m.iframe_count) j["iframe_count"] = *m.iframe_count;
  return j;
}

/// Keeps the frames nearest to a `target_fps` grid. Videos already at or
/// below the target rate are returned unchanged.
inline VideoManifest resample_to_rate(const VideoManifest& m, double target_fps = kProcessingFps) {
  if (m.fps <= target_fps + 1e-9) return m;
  VideoManifest out = m;
  out.frames.clear();
  const double step = m.fps / target_fps;
  for (int k = 0;; ++k) {
    const auto src = static_cast<std::size_t>(std::llround(k * step));
    if (src >= m.frames.size()) break;
    out.frames.push_back(m.frames[src]);
  }
  out.fps = target_fps;
  if (out.frames.size() < 2) throw Error(Errc::degenerate_video, "fewer than 2 frames after resampling");
  return out;
}

/// Gathers per-object masklets over the whole video.
inline std::map<int, Masklet> load_masklets(const VideoManifest& m) {
  std::map<int, Masklet> out;
  for (int t = 0; t < m.frame_count(); ++t) {
    for (auto& inst : m.load_masks(t)) {
      auto& ml = out[inst.object_id];
      ml.object_id = inst.object_id;
      ml.category = inst.category;
      ml.width = inst.pixels.width;
      ml.height = inst.pixels.height;
      ml.frames.emplace(t, std::move(inst.pixels));
    }
  }
  return out;
}

}  // namespace dyncog
