#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dyncog/error.hpp"
#include "dyncog/image.hpp"
#include "dyncog/scene.hpp"

namespace dyncog {

using Color = std::array<std::uint8_t, 3>;

enum class FusionKind { raw, masked_only, fusion };
enum class FusionLayout { interleaved, side_by_side };

inline const char* to_string(FusionKind k) {
  switch (k) {
    case FusionKind::raw: return "raw";
    case FusionKind::masked_only: return "masked_only";
    case FusionKind::fusion: return "fusion";
  }
  return "raw";
}

inline FusionKind parse_fusion_kind(const std::string& s) {
  if (s == "raw") return FusionKind::raw;
  if (s == "masked_only" || s == "masked-only") return FusionKind::masked_only;
  if (s == "fusion") return FusionKind::fusion;
  throw Error(Errc::usage, "unknown fusion mode '" + s + "'");
}

/// Object id -> overlay colour.
using Palette = std::map<int, Color>;

inline constexpr std::array<Color, 20> kBaseColors = {{
    {230, 25, 75},   {60, 180, 75},   {255, 225, 25},  {0, 130, 200},   {245, 130, 48},
    {145, 30, 180},  {70, 240, 240},  {240, 50, 230},  {210, 245, 60},  {250, 190, 212},
    {0, 128, 128},   {220, 190, 255}, {170, 110, 40},  {255, 250, 200}, {128, 0, 0},
    {170, 255, 195}, {128, 128, 0},   {255, 215, 180}, {0, 0, 128},     {128, 128, 128},
}};

namespace detail {

inline Color hsv_color(double h, double s, double v) {
  const double c = v * s;
  const double hp = std::fmod(h * 6.0, 6.0);
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) r = c, g = x;
  else if (hp < 2) r = x, g = c;
  else if (hp < 3) g = c, b = x;
  else if (hp < 4) g = x, b = c;
  else if (hp < 5) r = x, b = c;
  else r = c, b = x;
  const double m = v - c;
  auto u8 = [](double f) { return static_cast<std::uint8_t>(std::lround(f * 255.0)); };
  return {u8(r + m), u8(g + m), u8(b + m)};
}

}  // namespace detail

/// Colours assigned by rank of the object id: the 20 base colours first, then
/// golden-ratio hue steps (which never repeat a base colour).
inline Palette make_palette(std::vector<int> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  Palette p;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i < kBaseColors.size()) {
      p[ids[i]] = kBaseColors[i];
    } else {
      const double h = std::fmod(0.5 + static_cast<double>(i - kBaseColors.size()) * 0.6180339887498949, 1.0);
      Color c = detail::hsv_color(h, 0.75, 0.85 - 0.1 * static_cast<double>((i / 7) % 3));
      // Nudge away from any colour already used.
      auto used = [&](const Color& x) {
        for (const auto& [_, y] : p)
          if (x == y) return true;
        return false;
      };
      while (used(c)) c[2] = static_cast<std::uint8_t>(c[2] + 1);
      p[ids[i]] = c;
    }
  }
  return p;
}

/// out = (1 - alpha) * frame + alpha * colour inside each mask, rounded half
/// up; masks are applied in ascending id order so higher ids end on top.
inline RgbImage overlay(const RgbImage& frame, const std::vector<InstanceMask>& masks, double alpha,
                        const Palette& palette) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(Errc::alpha_out_of_range, "overlay alpha must lie in [0, 1]");
  std::vector<const InstanceMask*> order;
  for (const auto& m : masks) {
    if (m.pixels.width != frame.width || m.pixels.height != frame.height)
      throw Error(Errc::dimension_mismatch, "mask and frame differ in size");
    order.push_back(&m);
  }
  std::stable_sort(order.begin(), order.end(), [](auto a, auto b) { return a->object_id < b->object_id; });
  RgbImage out = frame;
  if (alpha == 0.0) return out;
  for (const InstanceMask* m : order) {
    auto it = palette.find(m->object_id);
    if (it == palette.end()) throw Error(Errc::unknown_object, "no palette colour for object " + std::to_string(m->object_id));
    const Color& c = it->second;
    for (std::size_t p = 0; p < m->pixels.bits.size(); ++p) {
      if (!m->pixels.bits[p]) continue;
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double v = (1.0 - alpha) * out.data[p * 3 + ch] + alpha * c[ch];
        out.data[p * 3 + ch] = static_cast<std::uint8_t>(std::min(255.0, std::floor(v + 0.5)));
      }
    }
  }
  return out;
}

struct FusionMode {
  FusionKind kind = FusionKind::fusion;
  double overlay_alpha = 0.5;
  FusionLayout layout = FusionLayout::interleaved;
  Palette palette;  // empty: derived from the video's object ids
};

struct SequenceFrame {
  RgbImage image;
  std::string kind;  // raw | overlay | tiled
  int source_frame = 0;
};

/// Two frames of equal size placed left to right.
inline RgbImage tile_horizontal(const RgbImage& a, const RgbImage& b) {
  if (!a.same_shape(b)) throw Error(Errc::dimension_mismatch, "tiles differ in size");
  RgbImage out(a.width * 2, a.height, 3);
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        out.at(x, y, c) = a.at(x, y, c);
        out.at(x + a.width, y, c) = b.at(x, y, c);
      }
    }
  }
  return out;
}

inline std::vector<SequenceFrame> compose_sequence(const VideoManifest& m, const FusionMode& mode = {}) {
  Palette palette = mode.palette;
  std::vector<std::vector<InstanceMask>> masks;
  if (mode.kind != FusionKind::raw) {
    std::vector<int> ids;
    for (int t = 0; t < m.frame_count(); ++t) {
      masks.push_back(m.load_masks(t));
      for (const auto& im : masks.back()) ids.push_back(im.object_id);
    }
    if (palette.empty()) palette = make_palette(ids);
  }
  std::vector<SequenceFrame> out;
  for (int t = 0; t < m.frame_count(); ++t) {
    RgbImage raw = m.load_frame(t);
    if (mode.kind == FusionKind::raw) {
      out.push_back({std::move(raw), "raw", t});
      continue;
    }
    RgbImage over = overlay(raw, masks[static_cast<std::size_t>(t)], mode.overlay_alpha, palette);
    if (mode.kind == FusionKind::masked_only) {
      out.push_back({std::move(over), "overlay", t});
    } else if (mode.layout == FusionLayout::side_by_side) {
      out.push_back({tile_horizontal(raw, over), "tiled", t});
    } else {
      out.push_back({std::move(raw), "raw", t});
      out.push_back({std::move(over), "overlay", t});
    }
  }
  return out;
}

/// Writes 000000.png, 000001.png, ... plus index.tsv (index, kind, source frame).
inline std::vector<std::filesystem::path> write_sequence(const std::vector<SequenceFrame>& seq,
                                                         const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> paths;
  std::string index = "index\tkind\tsource_frame\n";
  for (std::size_t i = 0; i < seq.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.png", i);
    paths.push_back(dir / name);
    save_rgb_png(paths.back(), seq[i].image);
    index += std::to_string(i) + "\t" + seq[i].kind + "\t" + std::to_string(seq[i].source_frame) + "\n";
  }
  write_text_file(dir / "index.tsv", index);
  return paths;
}

}  // namespace dyncog
