#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "ddlsff/depth_map.hpp"
#include "ddlsff/error.hpp"
#include "ddlsff/focus_volume.hpp"
#include "ddlsff/parallel.hpp"
#include "ddlsff/stack.hpp"

namespace ddlsff {

/// Winner-takes-all: per pixel, the slice with the largest focus value. Ties
/// go to the smallest slice index. For DepthUnit::focal_distance the index is
/// mapped through `distances`.
inline DepthMap wta_depth(const FocusVolume& fv, DepthUnit unit = DepthUnit::index,
                          std::span<const double> distances = {}) {
  if (unit == DepthUnit::focal_distance)
    require(distances.size() == static_cast<std::size_t>(fv.slices()),
            "focal-distance output needs one distance per slice");
  DepthMap depth{Plane(fv.height(), fv.width()), unit};
  parallel_for(0, fv.height(), [&](std::ptrdiff_t yy) {
    const int y = static_cast<int>(yy);
    for (int x = 0; x < fv.width(); ++x) {
      int best = 0;
      double best_value = fv.at(0, y, x);
      for (int s = 1; s < fv.slices(); ++s) {
        const double v = fv.at(s, y, x);
        if (v > best_value) {
          best_value = v;
          best = s;
        }
      }
      depth.values(y, x) = unit == DepthUnit::index ? static_cast<double>(best)
                                                    : distances[static_cast<std::size_t>(best)];
    }
  });
  return depth;
}

/// Per pixel and channel, the value of the slice selected by the depth map.
inline Image all_in_focus(const FocalStack& stack, const DepthMap& depth) {
  require(depth.unit == DepthUnit::index, "all-in-focus needs an index-unit depth map");
  require(depth.height() == stack.height() && depth.width() == stack.width(),
          "depth map and stack dimensions differ");
  Image out(stack.height(), stack.width(), stack.channels());
  for (int y = 0; y < stack.height(); ++y) {
    for (int x = 0; x < stack.width(); ++x) {
      const double d = depth(y, x);
      require(std::isfinite(d), "depth map contains non-finite values");
      const long s = std::lround(d);
      require(s >= 0 && s < stack.size(), "depth index out of range after rounding");
      for (int c = 0; c < stack.channels(); ++c) out.at(c, y, x) = stack.slice(static_cast<int>(s)).at(c, y, x);
    }
  }
  return out;
}

/// Focus value of one pixel against slice index.
struct FMCurve {
  int x = 0;
  int y = 0;
  std::vector<double> values;
  int argmax_index = 0;
  std::optional<int> gt_index;
};

inline FMCurve fm_curve(const FocusVolume& fv, int x, int y, const DepthMap* gt = nullptr) {
  require(x >= 0 && x < fv.width() && y >= 0 && y < fv.height(), "pixel out of bounds");
  FMCurve curve{x, y, {}, 0, std::nullopt};
  curve.values.reserve(static_cast<std::size_t>(fv.slices()));
  for (int s = 0; s < fv.slices(); ++s) {
    const double v = fv.at(s, y, x);
    if (!curve.values.empty() && v > curve.values[static_cast<std::size_t>(curve.argmax_index)])
      curve.argmax_index = s;
    curve.values.push_back(v);
  }
  if (gt != nullptr) {
    require(gt->height() == fv.height() && gt->width() == fv.width(), "ground truth dimensions differ");
    require(gt->unit == DepthUnit::index, "ground truth for FM curves must be in index units");
    curve.gt_index = static_cast<int>(std::lround((*gt)(y, x)));
  }
  return curve;
}

/// CSV with header `slice_index,focus_value`, one row per slice.
inline std::string fm_curve_csv(const FMCurve& curve) {
  std::ostringstream os;
  os.precision(17);
  os << "slice_index,focus_value\n";
  for (std::size_t s = 0; s < curve.values.size(); ++s) os << s << ',' << curve.values[s] << '\n';
  return os.str();
}

}  // namespace ddlsff
