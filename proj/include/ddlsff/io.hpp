#pragma once

#include <png.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ddlsff/depth_map.hpp"
#include "ddlsff/error.hpp"
#include "ddlsff/grid.hpp"
#include "ddlsff/parallel.hpp"
#include "ddlsff/stack.hpp"

namespace ddlsff::io {

namespace fs = std::filesystem;

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes to a temporary sibling and renames it into place, so readers never
/// observe a partial file.
inline void write_file_atomic(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move output into place at '" + path.string() + "'");
  }
}

inline std::string lowercase_extension(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

// ---------------------------------------------------------------------------
// PFM: "Pf" (one channel), negative scale = little-endian, rows stored bottom
// to top.

inline std::string encode_pfm(const Plane& plane) {
  for (double v : plane.values())
    if (!std::isfinite(v)) throw ValidationError("cannot write non-finite values to PFM");
  std::string out = "Pf\n" + std::to_string(plane.width()) + " " + std::to_string(plane.height()) + "\n-1.0\n";
  const std::size_t header = out.size();
  out.resize(header + plane.size() * 4);
  char* dst = out.data() + header;
  for (int y = plane.height() - 1; y >= 0; --y)
    for (int x = 0; x < plane.width(); ++x) {
      auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(plane(y, x)));
      for (int b = 0; b < 4; ++b) *dst++ = static_cast<char>((bits >> (8 * b)) & 0xFF);
    }
  return out;
}

inline Plane decode_pfm(std::string_view bytes, const std::string& name = "PFM") {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return std::string(bytes.substr(start, pos - start));
  };
  const std::string magic = token();
  if (magic == "PF") throw IoError(name + ": colour PFM is not supported for depth maps");
  if (magic != "Pf") throw IoError(name + ": not a PFM file");
  int width = 0;
  int height = 0;
  double scale = 0.0;
  try {
    width = std::stoi(token());
    height = std::stoi(token());
    scale = std::stod(token());
  } catch (const std::exception&) {
    throw IoError(name + ": malformed PFM header");
  }
  ++pos;  // single whitespace byte after the scale
  if (width <= 0 || height <= 0 || scale == 0.0) throw IoError(name + ": malformed PFM header");
  const std::size_t count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  if (bytes.size() < pos + 4 * count) throw IoError(name + ": truncated PFM data");
  const bool little = scale < 0.0;
  Plane plane(height, width);
  const auto* src = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  for (int y = height - 1; y >= 0; --y)
    for (int x = 0; x < width; ++x) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        const int shift = little ? 8 * b : 8 * (3 - b);
        bits |= static_cast<std::uint32_t>(*src++) << shift;
      }
      plane(y, x) = static_cast<double>(std::bit_cast<float>(bits));
    }
  return plane;
}

inline Plane read_pfm(const fs::path& path) { return decode_pfm(read_file(path), path.string()); }
inline void write_pfm(const fs::path& path, const Plane& plane) { write_file_atomic(path, encode_pfm(plane)); }

// ---------------------------------------------------------------------------
// Raw decoded pixels: interleaved integer samples plus their maximum code.

struct RawImage {
  int height = 0;
  int width = 0;
  int channels = 0;
  int max_value = 255;
  std::vector<std::uint16_t> samples;  // interleaved
};

inline Image to_image(const RawImage& raw) {
  Image img(raw.height, raw.width, raw.channels);
  const double scale = static_cast<double>(raw.max_value);
  for (int y = 0; y < raw.height; ++y)
    for (int x = 0; x < raw.width; ++x)
      for (int c = 0; c < raw.channels; ++c)
        img.at(c, y, x) =
            raw.samples[(static_cast<std::size_t>(y) * raw.width + x) * raw.channels + c] / scale;
  return img;
}

inline RawImage decode_pgm(std::string_view bytes, const std::string& name) {
  std::size_t pos = 0;
  auto token = [&]() {
    for (;;) {
      while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return std::string(bytes.substr(start, pos - start));
  };
  if (token() != "P5") throw IoError(name + ": only binary PGM (P5) is supported");
  RawImage raw;
  raw.channels = 1;
  try {
    raw.width = std::stoi(token());
    raw.height = std::stoi(token());
    raw.max_value = std::stoi(token());
  } catch (const std::exception&) {
    throw IoError(name + ": malformed PGM header");
  }
  ++pos;
  if (raw.width <= 0 || raw.height <= 0 || raw.max_value <= 0 || raw.max_value > 65535)
    throw IoError(name + ": malformed PGM header");
  const std::size_t count = static_cast<std::size_t>(raw.width) * raw.height;
  const std::size_t bytes_per = raw.max_value > 255 ? 2 : 1;
  if (bytes.size() < pos + count * bytes_per) throw IoError(name + ": truncated PGM data");
  raw.samples.resize(count);
  const auto* src = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
  for (std::size_t i = 0; i < count; ++i) {
    raw.samples[i] = bytes_per == 2 ? static_cast<std::uint16_t>((src[2 * i] << 8) | src[2 * i + 1]) : src[i];
    if (raw.samples[i] > raw.max_value) throw IoError(name + ": sample exceeds PGM maxval");
  }
  return raw;
}

inline std::string encode_pgm16(const Grid<std::uint16_t>& codes) {
  std::string out = "P5\n" + std::to_string(codes.width()) + " " + std::to_string(codes.height()) + "\n65535\n";
  for (auto v : codes.values()) {
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xFF));
  }
  return out;
}

// ---------------------------------------------------------------------------
// PNG through libpng. The setjmp frames below hold only trivially destructible
// locals created after setjmp.

namespace detail {

struct PngReadSource {
  const unsigned char* data;
  std::size_t size;
  std::size_t offset;
};

inline void png_read_from_memory(png_structp png, png_bytep out, png_size_t length) {
  auto* src = static_cast<PngReadSource*>(png_get_io_ptr(png));
  if (src->offset + length > src->size) png_error(png, "read past end of data");
  std::memcpy(out, src->data + src->offset, length);
  src->offset += length;
}

inline void png_write_to_string(png_structp png, png_bytep data, png_size_t length) {
  auto* dst = static_cast<std::string*>(png_get_io_ptr(png));
  dst->append(reinterpret_cast<const char*>(data), length);
}

inline void png_flush_noop(png_structp) {}

}  // namespace detail

inline RawImage decode_png(std::string_view bytes, const std::string& name) {
  if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8) != 0)
    throw IoError(name + ": not a PNG file");

  RawImage raw;
  std::vector<png_bytep> rows;
  std::vector<unsigned char> buffer;
  detail::PngReadSource src{reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), 0};
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(name + ": libpng initialisation failed");
  }
  volatile bool failed = false;
  if (setjmp(png_jmpbuf(png))) {
    failed = true;
  } else {
    png_set_read_fn(png, &src, detail::png_read_from_memory);
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
    if (depth == 16) png_set_swap(png);
    png_read_update_info(png, info);

    raw.width = static_cast<int>(png_get_image_width(png, info));
    raw.height = static_cast<int>(png_get_image_height(png, info));
    raw.channels = static_cast<int>(png_get_channels(png, info));
    const int out_depth = png_get_bit_depth(png, info);
    raw.max_value = out_depth == 16 ? 65535 : 255;
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    buffer.resize(rowbytes * static_cast<std::size_t>(raw.height));
    rows.resize(static_cast<std::size_t>(raw.height));
    for (int y = 0; y < raw.height; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + rowbytes * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (failed) throw IoError(name + ": corrupt PNG data");
  if (raw.channels != 1 && raw.channels != 3) throw IoError(name + ": unsupported PNG channel layout");

  const std::size_t count = static_cast<std::size_t>(raw.width) * raw.height * raw.channels;
  raw.samples.resize(count);
  for (std::size_t i = 0; i < count; ++i)
    raw.samples[i] = raw.max_value == 65535
                         ? static_cast<std::uint16_t>(buffer[2 * i] | (buffer[2 * i + 1] << 8))
                         : buffer[i];
  return raw;
}

/// Encodes interleaved samples as an 8- or 16-bit PNG.
inline std::string encode_png(const RawImage& raw) {
  if (raw.channels != 1 && raw.channels != 3) throw ValidationError("PNG output needs 1 or 3 channels");
  const bool sixteen = raw.max_value > 255;
  const int bytes_per = sixteen ? 2 : 1;
  const std::size_t rowbytes = static_cast<std::size_t>(raw.width) * raw.channels * bytes_per;
  std::vector<unsigned char> buffer(rowbytes * static_cast<std::size_t>(raw.height));
  for (std::size_t i = 0; i < raw.samples.size(); ++i) {
    if (sixteen) {
      buffer[2 * i] = static_cast<unsigned char>(raw.samples[i] >> 8);  // PNG is big-endian
      buffer[2 * i + 1] = static_cast<unsigned char>(raw.samples[i] & 0xFF);
    } else {
      buffer[i] = static_cast<unsigned char>(raw.samples[i]);
    }
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(raw.height));
  for (int y = 0; y < raw.height; ++y) rows[static_cast<std::size_t>(y)] = buffer.data() + rowbytes * y;

  std::string out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  volatile bool failed = false;
  if (setjmp(png_jmpbuf(png))) {
    failed = true;
  } else {
    png_set_write_fn(png, &out, detail::png_write_to_string, detail::png_flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(raw.width), static_cast<png_uint_32>(raw.height),
                 sixteen ? 16 : 8, raw.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
  }
  png_destroy_write_struct(&png, &info);
  if (failed) throw IoError("PNG encoding failed");
  return out;
}

/// Quantises an image with values in [0,1] to `bits` (8 or 16) per sample.
inline RawImage quantize(const Image& img, int bits) {
  require(bits == 8 || bits == 16, "bit depth must be 8 or 16");
  RawImage raw{img.height(), img.width(), img.channels(), bits == 16 ? 65535 : 255, {}};
  raw.samples.resize(img.plane_size() * static_cast<std::size_t>(img.channels()));
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) {
        const double v = std::clamp(img.at(c, y, x), 0.0, 1.0);
        raw.samples[(static_cast<std::size_t>(y) * img.width() + x) * img.channels() + c] =
            static_cast<std::uint16_t>(std::lround(v * raw.max_value));
      }
  return raw;
}

inline Image read_image(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing file '" + path.string() + "'");
  const std::string ext = lowercase_extension(path);
  const std::string bytes = read_file(path);
  if (ext == ".png") return to_image(decode_png(bytes, path.string()));
  if (ext == ".pgm") return to_image(decode_pgm(bytes, path.string()));
  if (ext == ".pfm") {
    Plane p = decode_pfm(bytes, path.string());
    return Image::from_plane(p);
  }
  throw IoError("unsupported image format '" + ext + "' for '" + path.string() + "'");
}

/// PNG at the given bit depth, or 16-bit PGM for `.pgm` paths.
inline void write_image(const fs::path& path, const Image& img, int bits = 16) {
  const std::string ext = lowercase_extension(path);
  if (ext == ".png") {
    write_file_atomic(path, encode_png(quantize(img, bits)));
  } else if (ext == ".pgm") {
    require(img.channels() == 1, "PGM output needs a single-channel image");
    RawImage raw = quantize(img, 16);
    write_file_atomic(path, encode_pgm16(Grid<std::uint16_t>(raw.height, raw.width, raw.samples)));
  } else {
    throw ValidationError("unsupported image output format '" + ext + "'");
  }
}

// ---------------------------------------------------------------------------
// Manifests and stacks.

enum class ColorMode { gray, rgb };

struct StackManifest {
  std::vector<fs::path> image_paths;
  std::vector<double> focal_distances;
  ColorMode color_mode = ColorMode::gray;
};

inline StackManifest parse_manifest(std::string_view text, const fs::path& base_dir = {}) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("manifest is not valid JSON: ") + e.what());
  }
  require(j.is_object() && j.contains("images") && j.contains("focal_distances"),
          "manifest needs 'images' and 'focal_distances'");
  require(j["images"].is_array() && j["focal_distances"].is_array(),
          "'images' and 'focal_distances' must be arrays");
  StackManifest m;
  for (const auto& p : j["images"]) {
    require(p.is_string(), "manifest image entries must be strings");
    fs::path path = p.get<std::string>();
    m.image_paths.push_back(path.is_relative() && !base_dir.empty() ? base_dir / path : path);
  }
  for (const auto& d : j["focal_distances"]) {
    require(d.is_number(), "focal distances must be numbers");
    m.focal_distances.push_back(d.get<double>());
  }
  const std::string mode = j.value("color_mode", std::string("gray"));
  require(mode == "gray" || mode == "rgb", "color_mode must be 'gray' or 'rgb'");
  m.color_mode = mode == "rgb" ? ColorMode::rgb : ColorMode::gray;
  require(m.image_paths.size() == m.focal_distances.size(), "manifest has different numbers of images and distances");
  return m;
}

/// Relative image paths resolve against the manifest's directory.
inline StackManifest read_manifest(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("missing manifest '" + path.string() + "'");
  return parse_manifest(read_file(path), path.parent_path());
}

inline nlohmann::json manifest_json(const StackManifest& m, const fs::path& relative_to = {}) {
  nlohmann::json j;
  j["images"] = nlohmann::json::array();
  for (const auto& p : m.image_paths)
    j["images"].push_back(relative_to.empty() ? p.generic_string() : p.lexically_relative(relative_to).generic_string());
  j["focal_distances"] = m.focal_distances;
  j["color_mode"] = m.color_mode == ColorMode::rgb ? "rgb" : "gray";
  return j;
}

/// Decodes every slice (in parallel) and normalises to [0,1]. gray mode
/// converts colour inputs to one channel; rgb mode replicates gray inputs.
inline FocalStack load_stack(const StackManifest& manifest, GrayFormula formula = GrayFormula::channel_mean) {
  require(manifest.image_paths.size() == manifest.focal_distances.size(),
          "manifest has different numbers of images and distances");
  require(manifest.image_paths.size() >= 2, "focal stack needs at least 2 slices");
  require(strictly_monotonic(manifest.focal_distances), "focal distances must be strictly monotonic");
  for (const auto& p : manifest.image_paths)
    if (!fs::exists(p)) throw IoError("missing file '" + p.string() + "'");

  std::vector<Image> slices(manifest.image_paths.size());
  parallel_for(0, static_cast<std::ptrdiff_t>(slices.size()), [&](std::ptrdiff_t i) {
    Image img = read_image(manifest.image_paths[static_cast<std::size_t>(i)]);
    if (manifest.color_mode == ColorMode::gray) {
      img = to_grayscale(img, formula);
    } else if (img.channels() == 1) {
      std::vector<double> data;
      for (int c = 0; c < 3; ++c) data.insert(data.end(), img.values().begin(), img.values().end());
      img = Image(img.height(), img.width(), 3, std::move(data));
    }
    slices[static_cast<std::size_t>(i)] = std::move(img);
  });
  for (const auto& s : slices)
    if (!s.same_shape(slices.front())) throw ValidationError("dimension mismatch between focal stack slices");
  return FocalStack(std::move(slices), manifest.focal_distances);
}

/// Writes slice_000.png … and manifest.json into `dir`; returns the manifest.
inline StackManifest write_stack(const fs::path& dir, const FocalStack& stack) {
  StackManifest m;
  m.focal_distances = stack.focal_distances();
  m.color_mode = stack.channels() == 3 ? ColorMode::rgb : ColorMode::gray;
  for (int s = 0; s < stack.size(); ++s) {
    char name[32];
    std::snprintf(name, sizeof name, "slice_%03d.png", s);
    write_image(dir / name, stack.slice(s), 16);
    m.image_paths.push_back(dir / name);
  }
  write_file_atomic(dir / "manifest.json", manifest_json(m, dir).dump(2) + "\n");
  return m;
}

// ---------------------------------------------------------------------------
// Depth maps: PFM (raw floats) or 16-bit PNG with a min/max sidecar.

enum class DepthFormat { pfm, png16 };

inline fs::path png16_sidecar(const fs::path& path) {
  fs::path s = path;
  s += ".minmax.txt";
  return s;
}

inline void write_depth(const DepthMap& depth, const fs::path& path, DepthFormat format) {
  if (!depth.all_finite()) throw ValidationError("depth map contains NaN or Inf");
  if (format == DepthFormat::pfm) {
    write_pfm(path, depth.values);
    return;
  }
  const auto [lo_it, hi_it] = std::minmax_element(depth.values.values().begin(), depth.values.values().end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  Grid<std::uint16_t> codes(depth.height(), depth.width());
  for (std::size_t i = 0; i < codes.size(); ++i)
    codes.values()[i] = hi > lo ? static_cast<std::uint16_t>(std::lround((depth.values.values()[i] - lo) / (hi - lo) * 65535.0)) : 0;
  write_file_atomic(path, encode_png(RawImage{depth.height(), depth.width(), 1, 65535,
                                              std::vector<std::uint16_t>(codes.values().begin(), codes.values().end())}));
  std::ostringstream side;
  side.precision(17);
  side << "min " << lo << "\nmax " << hi << "\n";
  write_file_atomic(png16_sidecar(path), side.str());
}

inline DepthFormat depth_format_for(const fs::path& path) {
  const std::string ext = lowercase_extension(path);
  if (ext == ".pfm") return DepthFormat::pfm;
  if (ext == ".png") return DepthFormat::png16;
  throw ValidationError("depth output must be .pfm or .png, got '" + path.string() + "'");
}

inline void write_depth(const DepthMap& depth, const fs::path& path) { write_depth(depth, path, depth_format_for(path)); }

/// Reads a PFM, or a 16-bit PNG whose sidecar gives the value range.
inline DepthMap read_depth(const fs::path& path, DepthUnit unit = DepthUnit::index) {
  if (!fs::exists(path)) throw IoError("missing depth map '" + path.string() + "'");
  if (depth_format_for(path) == DepthFormat::pfm) return {read_pfm(path), unit};
  RawImage raw = decode_png(read_file(path), path.string());
  if (raw.channels != 1) throw IoError(path.string() + ": depth PNG must be single channel");
  double lo = 0.0;
  double hi = static_cast<double>(raw.max_value);
  if (fs::exists(png16_sidecar(path))) {
    std::istringstream side(read_file(png16_sidecar(path)));
    std::string key_lo, key_hi;
    if (!(side >> key_lo >> lo >> key_hi >> hi) || key_lo != "min" || key_hi != "max")
      throw IoError(png16_sidecar(path).string() + ": malformed sidecar");
  }
  DepthMap d{Plane(raw.height, raw.width), unit};
  for (std::size_t i = 0; i < raw.samples.size(); ++i)
    d.values.values()[i] = lo + (hi - lo) * raw.samples[i] / static_cast<double>(raw.max_value);
  return d;
}

/// Nonzero samples mark valid pixels.
inline Mask read_mask(const fs::path& path) {
  Image img = read_image(path);
  Mask m(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) m(y, x) = img.at(0, y, x) != 0.0 ? 1 : 0;
  return m;
}

}  // namespace ddlsff::io
