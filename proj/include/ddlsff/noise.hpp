#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ddlsff/error.hpp"
#include "ddlsff/parallel.hpp"
#include "ddlsff/philox.hpp"
#include "ddlsff/stack.hpp"

namespace ddlsff {

enum class NoiseKind { gaussian, salt_pepper, speckle };

inline std::string_view to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::gaussian: return "gaussian";
    case NoiseKind::salt_pepper: return "salt_pepper";
    case NoiseKind::speckle: return "speckle";
  }
  return "?";
}

inline NoiseKind parse_noise_kind(std::string_view s) {
  if (s == "gaussian") return NoiseKind::gaussian;
  if (s == "salt_pepper" || s == "salt-pepper" || s == "sp" || s == "s&p") return NoiseKind::salt_pepper;
  if (s == "speckle") return NoiseKind::speckle;
  throw ValidationError("unknown noise kind '" + std::string(s) + "'");
}

/// `param` is the variance for gaussian/speckle and the corrupted-pixel
/// density for salt-and-pepper.
struct NoiseSpec {
  NoiseKind kind = NoiseKind::gaussian;
  double param = 1e-4;
  std::uint64_t seed = 0;

  void validate() const {
    require(std::isfinite(param) && param > 0.0, "noise parameter must be > 0");
    if (kind == NoiseKind::salt_pepper) require(param < 1.0, "salt-and-pepper density must be < 1");
  }
};

/// Corrupts one slice. Slice s draws from its own stream (seed, s), element i
/// of a plane from counter i, so output is independent of scheduling.
///
/// gaussian:    I' = clamp(I + n)       n ~ N(0, param)
/// salt_pepper: per pixel, with probability param all channels become 0 or 1
///              (fair coin)
/// speckle:     I' = clamp(I + I·n)     n ~ N(0, param)
inline Image apply_noise(const Image& img, const NoiseSpec& spec, std::uint32_t slice_index) {
  spec.validate();
  Image out = img;
  const RandomStream rng(spec.seed, slice_index, static_cast<std::uint32_t>(spec.kind));
  const double sigma = std::sqrt(spec.param);
  const std::size_t plane = img.plane_size();

  switch (spec.kind) {
    case NoiseKind::gaussian:
    case NoiseKind::speckle: {
      auto v = out.values();
      for (std::size_t i = 0; i < v.size(); ++i) {
        const double n = sigma * rng.normal(i);
        const double noisy = spec.kind == NoiseKind::gaussian ? v[i] + n : v[i] + v[i] * n;
        v[i] = std::clamp(noisy, 0.0, 1.0);
      }
      break;
    }
    case NoiseKind::salt_pepper: {
      for (std::size_t i = 0; i < plane; ++i) {
        const auto [hit, coin] = rng.uniforms(i);
        if (hit >= spec.param) continue;
        const double value = coin < 0.5 ? 0.0 : 1.0;
        for (int c = 0; c < img.channels(); ++c) out.values()[plane * c + i] = value;
      }
      break;
    }
  }
  return out;
}

inline FocalStack apply_noise(const FocalStack& stack, const NoiseSpec& spec) {
  spec.validate();
  std::vector<Image> slices(static_cast<std::size_t>(stack.size()));
  parallel_for(0, stack.size(), [&](std::ptrdiff_t s) {
    slices[static_cast<std::size_t>(s)] = apply_noise(stack.slice(static_cast<int>(s)), spec, static_cast<std::uint32_t>(s));
  });
  return FocalStack(std::move(slices), stack.focal_distances());
}

}  // namespace ddlsff
