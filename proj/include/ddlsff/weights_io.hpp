#pragma once

// Flat binary container for refiner weights. All integers little-endian.
//
//   magic        8 bytes  "DDLSFFW1"
//   seed         u64
//   config       u32 input_channels, u32 aggregation_depth, u32 hidden,
//                u32 fusion_channels, u32 fusion_activations (0/1)
//   layer_count  u32
//   per layer    u32 name_length, name bytes,
//                u32 in_channels, u32 out_channels, u32 kernel, u32 stride,
//                f64 weights[out·in·kernel·kernel], f64 bias[out]
//   checksum     u64 FNV-1a over every preceding byte

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>

#include "ddlsff/error.hpp"
#include "ddlsff/io.hpp"
#include "ddlsff/refiner.hpp"

namespace ddlsff::refiner {

inline constexpr std::string_view kWeightsMagic = "DDLSFFW1";

inline std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
}
inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}
  std::uint64_t u(int width) {
    if (pos_ + static_cast<std::size_t>(width) > bytes_.size()) throw IoError("weights file is truncated");
    std::uint64_t v = 0;
    for (int b = 0; b < width; ++b) v |= std::uint64_t{static_cast<unsigned char>(bytes_[pos_++])} << (8 * b);
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(u(4)); }
  std::uint64_t u64() { return u(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string_view take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw IoError("weights file is truncated");
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t position() const noexcept { return pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_weights(const RefinerWeights& w) {
  std::string out(kWeightsMagic);
  detail::put_u64(out, w.seed);
  detail::put_u32(out, static_cast<std::uint32_t>(w.config.input_channels));
  detail::put_u32(out, static_cast<std::uint32_t>(w.config.aggregation_depth));
  detail::put_u32(out, static_cast<std::uint32_t>(w.config.hidden));
  detail::put_u32(out, static_cast<std::uint32_t>(w.config.fusion_channels));
  detail::put_u32(out, w.config.fusion_activations ? 1u : 0u);
  const auto layers = w.layers();
  detail::put_u32(out, static_cast<std::uint32_t>(layers.size()));
  for (const ConvLayer* l : layers) {
    detail::put_u32(out, static_cast<std::uint32_t>(l->name.size()));
    out += l->name;
    for (int v : {l->in_channels, l->out_channels, l->kernel, l->stride}) detail::put_u32(out, static_cast<std::uint32_t>(v));
    for (double v : l->weights) detail::put_f64(out, v);
    for (double v : l->bias) detail::put_f64(out, v);
  }
  detail::put_u64(out, fnv1a64(out));
  return out;
}

/// Parses and verifies the checksum, magic and layer layout.
inline RefinerWeights decode_weights(std::string_view bytes) {
  if (bytes.size() < kWeightsMagic.size() + 8 || bytes.substr(0, kWeightsMagic.size()) != kWeightsMagic)
    throw IoError("not a refiner weights file");
  detail::Reader tail(bytes.substr(bytes.size() - 8));
  if (tail.u64() != fnv1a64(bytes.substr(0, bytes.size() - 8))) throw IoError("weights checksum mismatch");

  detail::Reader in(bytes.substr(0, bytes.size() - 8));
  in.take(kWeightsMagic.size());
  const std::uint64_t seed = in.u64();
  RefinerConfig config;
  config.input_channels = static_cast<int>(in.u32());
  config.aggregation_depth = static_cast<int>(in.u32());
  config.hidden = static_cast<int>(in.u32());
  config.fusion_channels = static_cast<int>(in.u32());
  config.fusion_activations = in.u32() != 0;

  // Shapes come from the generator; the file must agree with them.
  RefinerWeights w = RefinerWeights::generate(config, seed);
  const auto layers = w.layers();
  if (in.u32() != layers.size()) throw IoError("weights file has an unexpected layer count");
  for (ConvLayer* l : layers) {
    const std::string name(in.take(in.u32()));
    const int dims[4] = {static_cast<int>(in.u32()), static_cast<int>(in.u32()), static_cast<int>(in.u32()),
                         static_cast<int>(in.u32())};
    if (name != l->name || dims[0] != l->in_channels || dims[1] != l->out_channels || dims[2] != l->kernel ||
        dims[3] != l->stride)
      throw IoError("weights file layer '" + name + "' does not match the expected architecture");
    for (double& v : l->weights) v = in.f64();
    for (double& v : l->bias) v = in.f64();
  }
  if (in.position() != bytes.size() - 8) throw IoError("weights file has trailing data");
  return w;
}

inline void save_weights(const std::filesystem::path& path, const RefinerWeights& w) {
  io::write_file_atomic(path, encode_weights(w));
}

inline RefinerWeights load_weights(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("missing weights file '" + path.string() + "'");
  return decode_weights(io::read_file(path));
}

}  // namespace ddlsff::refiner
