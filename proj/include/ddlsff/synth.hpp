#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ddlsff/depth_map.hpp"
#include "ddlsff/error.hpp"
#include "ddlsff/parallel.hpp"
#include "ddlsff/philox.hpp"
#include "ddlsff/stack.hpp"

namespace ddlsff::synth {

enum class DepthPattern { staircase, slant, checker };
enum class Texture { checker, noise };

inline DepthPattern parse_pattern(std::string_view s) {
  if (s == "staircase") return DepthPattern::staircase;
  if (s == "slant") return DepthPattern::slant;
  if (s == "checker") return DepthPattern::checker;
  throw ValidationError("unknown depth pattern '" + std::string(s) + "'");
}

inline Texture parse_texture(std::string_view s) {
  if (s == "checker") return Texture::checker;
  if (s == "noise" || s == "noise-texture") return Texture::noise;
  throw ValidationError("unknown texture '" + std::string(s) + "'");
}

inline std::string_view to_string(DepthPattern p) {
  switch (p) {
    case DepthPattern::staircase: return "staircase";
    case DepthPattern::slant: return "slant";
    case DepthPattern::checker: return "checker";
  }
  return "?";
}

inline std::string_view to_string(Texture t) { return t == Texture::checker ? "checker" : "noise-texture"; }

struct SynthSpec {
  int height = 64;
  int width = 64;
  int slices = 10;
  DepthPattern pattern = DepthPattern::staircase;
  Texture texture = Texture::noise;
  double blur_scale = 1.0;  ///< Gaussian σ in pixels per slice of focus error
  std::uint64_t seed = 0;
  int steps = 4;             ///< staircase bands
  int checker_period = 10;   ///< full period of the checker texture (≥ 2·4+2)
  double contrast = 1.0;     ///< texture values span 0.5 ± contrast/2

  void validate() const {
    require(height >= 1 && width >= 1, "synthetic image dimensions must be positive");
    require(slices >= 2, "synthetic stack needs at least 2 slices");
    require(std::isfinite(blur_scale) && blur_scale > 0.0, "blur scale must be > 0");
    require(steps >= 1, "staircase needs at least one step");
    require(checker_period >= 2 && checker_period % 2 == 0, "checker period must be even and >= 2");
    require(contrast > 0.0 && contrast <= 1.0, "contrast must lie in (0,1]");
  }
};

struct SynthScene {
  FocalStack stack;
  DepthMap ground_truth;  ///< index units
  Plane sharp;            ///< the all-in-focus texture
};

inline DepthMap ground_truth(const SynthSpec& spec) {
  spec.validate();
  DepthMap gt{Plane(spec.height, spec.width), DepthUnit::index};
  const int top = spec.slices - 1;
  for (int y = 0; y < spec.height; ++y)
    for (int x = 0; x < spec.width; ++x) {
      double v = 0.0;
      switch (spec.pattern) {
        case DepthPattern::staircase: {
          const int band = x * spec.steps / spec.width;
          v = spec.steps == 1 ? 0.0 : std::round(static_cast<double>(band) * top / (spec.steps - 1));
          break;
        }
        case DepthPattern::slant:
          v = spec.width == 1 ? 0.0 : std::round(static_cast<double>(x) * top / (spec.width - 1));
          break;
        case DepthPattern::checker: {
          const int block = std::max(1, std::min(spec.height, spec.width) / 4);
          const bool odd = ((x / block) + (y / block)) % 2 == 1;
          v = std::round((odd ? 0.75 : 0.25) * top);
          break;
        }
      }
      gt.values(y, x) = v;
    }
  return gt;
}

inline Plane texture(const SynthSpec& spec) {
  spec.validate();
  Plane t(spec.height, spec.width);
  const double lo = 0.5 - 0.5 * spec.contrast;
  const RandomStream rng(spec.seed, 0xFFFF0001u);
  const int half = spec.checker_period / 2;
  for (int y = 0; y < spec.height; ++y)
    for (int x = 0; x < spec.width; ++x) {
      const double unit = spec.texture == Texture::checker
                              ? static_cast<double>(((x / half) + (y / half)) % 2)
                              : rng.uniform(static_cast<std::uint64_t>(y) * spec.width + x);
      t(y, x) = lo + spec.contrast * unit;
    }
  return t;
}

/// Blurs `sharp` with a per-pixel Gaussian of standard deviation sigma(y,x),
/// by direct weighted sum over a ±3σ window (replicated borders). σ = 0 copies
/// the pixel.
inline Plane variable_blur(const Plane& sharp, const Plane& sigma) {
  require(sharp.same_shape(sigma), "sigma map must match image size");
  Plane out(sharp.height(), sharp.width());
  const int h = sharp.height();
  const int w = sharp.width();
  parallel_for(0, h, [&](std::ptrdiff_t yy) {
    const int y = static_cast<int>(yy);
    std::vector<double> weights;
    for (int x = 0; x < w; ++x) {
      const double s = sigma(y, x);
      if (s <= 0.0) {
        out(y, x) = sharp(y, x);
        continue;
      }
      const int radius = static_cast<int>(std::ceil(3.0 * s));
      weights.resize(static_cast<std::size_t>(2 * radius + 1));
      for (int k = -radius; k <= radius; ++k)
        weights[static_cast<std::size_t>(k + radius)] = std::exp(-0.5 * k * k / (s * s));
      double acc = 0.0;
      double norm = 0.0;
      for (int dy = -radius; dy <= radius; ++dy) {
        const int sy = std::clamp(y + dy, 0, h - 1);
        const double wy = weights[static_cast<std::size_t>(dy + radius)];
        double row = 0.0;
        double row_norm = 0.0;
        for (int dx = -radius; dx <= radius; ++dx) {
          const double wx = weights[static_cast<std::size_t>(dx + radius)];
          row += wx * sharp(sy, std::clamp(x + dx, 0, w - 1));
          row_norm += wx;
        }
        acc += wy * row;
        norm += wy * row_norm;
      }
      out(y, x) = acc / norm;
    }
  });
  return out;
}

/// Builds a focal stack whose slice s blurs pixel p with σ = blur_scale·|s − gt(p)|,
/// so the sharpest slice at every pixel is gt(p) by construction. Focal
/// distances are 1, 2, …, S.
inline SynthScene generate(const SynthSpec& spec) {
  spec.validate();
  DepthMap gt = ground_truth(spec);
  Plane sharp = texture(spec);
  std::vector<Image> slices;
  std::vector<double> distances;
  for (int s = 0; s < spec.slices; ++s) {
    Plane sigma(spec.height, spec.width);
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) sigma(y, x) = spec.blur_scale * std::abs(s - gt(y, x));
    Plane blurred = variable_blur(sharp, sigma);
    for (double& v : blurred.values()) v = std::clamp(v, 0.0, 1.0);
    slices.push_back(Image::from_plane(blurred));
    distances.push_back(static_cast<double>(s + 1));
  }
  return {FocalStack(std::move(slices), std::move(distances)), std::move(gt), std::move(sharp)};
}

/// Nonzero where every pixel within Chebyshev distance `margin - 1` has the
/// same ground-truth value, i.e. the pixel is at least `margin` px from a
/// depth step, and where the pixel is at least `margin` px inside the image.
inline Mask interior_mask(const DepthMap& gt, int margin) {
  require(margin >= 0, "margin must be >= 0");
  Mask mask(gt.height(), gt.width(), 0);
  for (int y = margin; y < gt.height() - margin; ++y)
    for (int x = margin; x < gt.width() - margin; ++x) {
      bool flat = true;
      for (int dy = -(margin - 1); dy <= margin - 1 && flat; ++dy)
        for (int dx = -(margin - 1); dx <= margin - 1; ++dx)
          if (gt(y + dy, x + dx) != gt(y, x)) {
            flat = false;
            break;
          }
      mask(y, x) = flat ? 1 : 0;
    }
  return mask;
}

}  // namespace ddlsff::synth
