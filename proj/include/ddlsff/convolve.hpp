#pragma once

#include <algorithm>
#include <cstdlib>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ddlsff/error.hpp"
#include "ddlsff/grid.hpp"
#include "ddlsff/kernels.hpp"
#include "ddlsff/parallel.hpp"
#include "ddlsff/stack.hpp"

namespace ddlsff {

enum class BorderPolicy {
  replicate,  ///< aaa|abcd|ddd
  reflect,    ///< cb|abcd|cb  (edge pixel not repeated)
  zero,       ///< 00|abcd|00
};

inline std::string_view to_string(BorderPolicy b) {
  switch (b) {
    case BorderPolicy::replicate: return "replicate";
    case BorderPolicy::reflect: return "reflect";
    case BorderPolicy::zero: return "zero";
  }
  return "?";
}

inline BorderPolicy parse_border(std::string_view s) {
  if (s == "replicate") return BorderPolicy::replicate;
  if (s == "reflect") return BorderPolicy::reflect;
  if (s == "zero") return BorderPolicy::zero;
  throw ValidationError("unknown border policy '" + std::string(s) + "'");
}

/// Maps a possibly out-of-range coordinate into [0, n). Returns -1 for samples
/// that read as zero. Offsets never exceed n-1, so one reflection suffices.
inline int border_index(int i, int n, BorderPolicy border) noexcept {
  if (i >= 0 && i < n) return i;
  switch (border) {
    case BorderPolicy::replicate: return std::clamp(i, 0, n - 1);
    case BorderPolicy::reflect:
      if (n == 1) return 0;
      return i < 0 ? -i : 2 * (n - 1) - i;
    case BorderPolicy::zero: return -1;
  }
  return -1;
}

namespace detail {

/// out(y,x) = Σ_taps w · src(y - dy, x - dx), taps added in the given order
/// starting from +0.0. This is the operation order of a dense row-major loop
/// with zero taps skipped, which is what keeps the sparse path bit-identical
/// to a direct sum.
inline void sparse_convolve(std::span<const double> src, int height, int width, std::span<const Tap> taps,
                            BorderPolicy border, std::span<double> dst) {
  int max_dx = 0;
  for (const auto& t : taps) max_dx = std::max(max_dx, std::abs(t.dx));
  // Columns in [x_lo, x_hi) never need border handling for any tap.
  const int x_lo = std::min(width, max_dx);
  const int x_hi = std::max(x_lo, width - max_dx);

  parallel_for(0, height, [&](std::ptrdiff_t yy) {
    const int y = static_cast<int>(yy);
    double* out = dst.data() + static_cast<std::size_t>(y) * width;
    std::fill(out, out + width, 0.0);
    for (const auto& t : taps) {
      const int sy = border_index(y - t.dy, height, border);
      if (sy < 0) continue;
      const double* row = src.data() + static_cast<std::size_t>(sy) * width;
      const double w = static_cast<double>(t.weight);
      for (int x = 0; x < x_lo; ++x) {
        const int sx = border_index(x - t.dx, width, border);
        if (sx >= 0) out[x] += w * row[sx];
      }
      for (int x = x_lo; x < x_hi; ++x) out[x] += w * row[x - t.dx];
      for (int x = x_hi; x < width; ++x) {
        const int sx = border_index(x - t.dx, width, border);
        if (sx >= 0) out[x] += w * row[sx];
      }
    }
  });
}

}  // namespace detail

/// 2-D convolution of a single plane with a small integer kernel; output has
/// the input's size. Only the nonzero taps are visited.
inline Plane conv2d(const Plane& img, const Kernel2D& kernel, BorderPolicy border = BorderPolicy::replicate) {
  require(kernel.size % 2 == 1 && kernel.taps.size() == static_cast<std::size_t>(kernel.size * kernel.size),
          "kernel must be square with odd size");
  require(kernel.size <= std::min(img.height(), img.width()), "kernel larger than image");
  Plane out(img.height(), img.width());
  const auto taps = kernel.nonzero_taps();
  detail::sparse_convolve(img.values(), img.height(), img.width(), taps, border, out.values());
  return out;
}

inline Image conv2d(const Image& img, const Kernel2D& kernel, BorderPolicy border = BorderPolicy::replicate) {
  require(img.channels() == 1, "conv2d expects a single-channel image");
  Plane out = conv2d(img.plane_copy(0), kernel, border);
  return Image::from_plane(out);
}

}  // namespace ddlsff
