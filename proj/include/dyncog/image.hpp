#pragma once

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <memory>
#include <fstream>
#include <string>
#include <vector>

#include "dyncog/error.hpp"
#include "dyncog/util.hpp"

namespace dyncog {

/// Interleaved row-major image.
template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, int c = 1, T fill = T{})
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c), fill) {}

  std::size_t index(int x, int y, int c = 0) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels) +
           static_cast<std::size_t>(c);
  }
  T& at(int x, int y, int c = 0) noexcept { return data[index(x, y, c)]; }
  const T& at(int x, int y, int c = 0) const noexcept { return data[index(x, y, c)]; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  bool same_shape(const Image& o) const noexcept {
    return width == o.width && height == o.height && channels == o.channels;
  }
  friend bool operator==(const Image&, const Image&) = default;
};

using RgbImage = Image<std::uint8_t>;   // 3 channels
using GrayImage = Image<double>;        // 1 channel, 0..255 scale

/// Samples as stored on disk, widened to 16 bits. `bit_depth` is 8 or 16.
struct RawImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  int bit_depth = 8;
  std::vector<std::uint16_t> samples;
};

namespace detail {

inline bool has_png_signature(const std::vector<std::uint8_t>& bytes) {
  static constexpr std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  return bytes.size() >= 8 && std::memcmp(bytes.data(), sig, 8) == 0;
}

struct PngReadState {
  const std::vector<std::uint8_t>* bytes;
  std::size_t offset;
};

inline void png_read_from_memory(png_structp png, png_bytep out, png_size_t count) {
  auto* state = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (state->offset + count > state->bytes->size()) png_error(png, "truncated PNG");
  std::memcpy(out, state->bytes->data() + state->offset, count);
  state->offset += count;
}

inline RawImage decode_png(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error(Errc::corrupt_asset, "libpng init failed for " + name);
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error(Errc::corrupt_asset, "libpng init failed for " + name);
  }
  RawImage img;
  PngReadState state{&bytes, 0};
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(Errc::corrupt_asset, "invalid PNG data in " + name);
  }
  png_set_read_fn(png, &state, png_read_from_memory);
  png_read_png(png, info, PNG_TRANSFORM_PACKING | PNG_TRANSFORM_STRIP_ALPHA, nullptr);
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = png_get_channels(png, info);
  img.bit_depth = png_get_bit_depth(png, info) == 16 ? 16 : 8;
  png_bytepp rows = png_get_rows(png, info);
  img.samples.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
  std::size_t k = 0;
  for (int y = 0; y < img.height; ++y) {
    const png_bytep row = rows[y];
    for (int i = 0; i < img.width * img.channels; ++i) {
      img.samples[k++] = img.bit_depth == 16
                             ? static_cast<std::uint16_t>((row[2 * i] << 8) | row[2 * i + 1])
                             : row[i];
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

// Netpbm P5 (gray) / P6 (rgb), binary, 8 or 16 bit big-endian.
inline RawImage decode_netpbm(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  std::size_t pos = 2;
  auto next_int = [&]() -> long {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    long v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      any = true;
      if (v > 1'000'000) break;
    }
    if (!any) throw Error(Errc::corrupt_asset, "malformed netpbm header in " + name);
    return v;
  };
  RawImage img;
  img.channels = bytes[1] == '6' ? 3 : 1;
  img.width = static_cast<int>(next_int());
  img.height = static_cast<int>(next_int());
  const long maxval = next_int();
  if (img.width <= 0 || img.height <= 0 || maxval <= 0 || maxval > 65535)
    throw Error(Errc::corrupt_asset, "bad netpbm dimensions in " + name);
  ++pos;  // single whitespace after maxval
  img.bit_depth = maxval > 255 ? 16 : 8;
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * img.channels;
  const std::size_t need = n * (img.bit_depth / 8);
  if (pos + need > bytes.size()) throw Error(Errc::corrupt_asset, "truncated netpbm data in " + name);
  img.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    img.samples[i] = img.bit_depth == 16
                         ? static_cast<std::uint16_t>((bytes[pos + 2 * i] << 8) | bytes[pos + 2 * i + 1])
                         : bytes[pos + i];
  }
  return img;
}

inline void png_write_to_vector(png_structp png, png_bytep data, png_size_t len) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + len);
}

}  // namespace detail

/// Decodes PNG (8/16 bit, gray/rgb/palette indices) or binary netpbm (P5/P6).
inline RawImage decode_image_bytes(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  if (detail::has_png_signature(bytes)) return detail::decode_png(bytes, name);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6'))
    return detail::decode_netpbm(bytes, name);
  throw Error(Errc::unsupported_encoding, "unrecognised image encoding: " + name);
}

inline RawImage load_raw_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(Errc::missing_asset, path.string());
  return decode_image_bytes(read_binary_file(path), path.string());
}

inline RgbImage load_rgb(const std::filesystem::path& path) {
  const RawImage raw = load_raw_image(path);
  RgbImage img(raw.width, raw.height, 3);
  const int shift = raw.bit_depth == 16 ? 8 : 0;
  for (std::size_t p = 0; p < img.pixel_count(); ++p) {
    for (int c = 0; c < 3; ++c) {
      const std::uint16_t s = raw.channels >= 3 ? raw.samples[p * raw.channels + c] : raw.samples[p * raw.channels];
      img.data[p * 3 + c] = static_cast<std::uint8_t>(s >> shift);
    }
  }
  return img;
}

/// ITU-R BT.601 luma on the 0..255 scale.
inline GrayImage to_gray(const RgbImage& rgb) {
  GrayImage g(rgb.width, rgb.height, 1);
  for (std::size_t p = 0; p < g.pixel_count(); ++p) {
    g.data[p] = 0.299 * rgb.data[p * 3] + 0.587 * rgb.data[p * 3 + 1] + 0.114 * rgb.data[p * 3 + 2];
  }
  return g;
}

/// Box-filter downscale by an integer factor (edge remainder dropped).
inline GrayImage downscale(const GrayImage& src, int factor) {
  if (factor <= 1) return src;
  GrayImage out(src.width / factor, src.height / factor, 1);
  const double norm = 1.0 / (factor * factor);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      double acc = 0.0;
      for (int dy = 0; dy < factor; ++dy)
        for (int dx = 0; dx < factor; ++dx) acc += src.at(x * factor + dx, y * factor + dy);
      out.at(x, y) = acc * norm;
    }
  }
  return out;
}

// Writers ------------------------------------------------------------------

inline std::vector<std::uint8_t> encode_png(int width, int height, int channels, int bit_depth,
                                            const std::vector<std::uint16_t>& samples) {
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) throw Error(Errc::corrupt_asset, "libpng write init failed");
  const int row_bytes = width * channels * (bit_depth / 8);
  std::vector<std::uint8_t> row(static_cast<std::size_t>(row_bytes));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(Errc::corrupt_asset, "PNG encoding failed");
  }
  png_set_write_fn(png, &out, detail::png_write_to_vector, nullptr);
  png_set_compression_level(png, 3);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y) {
    for (int i = 0; i < width * channels; ++i) {
      const std::uint16_t s = samples[static_cast<std::size_t>(y) * width * channels + i];
      if (bit_depth == 16) {
        row[2 * i] = static_cast<std::uint8_t>(s >> 8);
        row[2 * i + 1] = static_cast<std::uint8_t>(s & 0xFF);
      } else {
        row[i] = static_cast<std::uint8_t>(s);
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

inline void write_binary_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::missing_asset, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline void save_rgb_png(const std::filesystem::path& path, const RgbImage& img) {
  std::vector<std::uint16_t> s(img.data.begin(), img.data.end());
  write_binary_file(path, encode_png(img.width, img.height, 3, 8, s));
}

inline void save_gray16_png(const std::filesystem::path& path, const Image<std::uint16_t>& img) {
  write_binary_file(path, encode_png(img.width, img.height, 1, 16, img.data));
}

inline void save_gray8_png(const std::filesystem::path& path, const Image<std::uint16_t>& img) {
  write_binary_file(path, encode_png(img.width, img.height, 1, 8, img.data));
}

inline void save_ppm(const std::filesystem::path& path, const RgbImage& img) {
  std::string header = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), img.data.begin(), img.data.end());
  write_binary_file(path, bytes);
}

inline void save_pgm16(const std::filesystem::path& path, const Image<std::uint16_t>& img) {
  std::string header = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n65535\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  for (std::uint16_t s : img.data) {
    bytes.push_back(static_cast<std::uint8_t>(s >> 8));
    bytes.push_back(static_cast<std::uint8_t>(s & 0xFF));
  }
  write_binary_file(path, bytes);
}

}  // namespace dyncog
