#pragma once

#include <cmath>
#include <string>
#include <string_view>

#include "ddlsff/error.hpp"
#include "ddlsff/grid.hpp"

namespace ddlsff {

enum class DepthUnit { index, focal_distance };

inline std::string_view to_string(DepthUnit u) {
  return u == DepthUnit::index ? "index" : "focal-distance";
}

inline DepthUnit parse_depth_unit(std::string_view s) {
  if (s == "index") return DepthUnit::index;
  if (s == "focal-distance" || s == "dist") return DepthUnit::focal_distance;
  throw ValidationError("unknown depth unit '" + std::string(s) + "'");
}

/// H×W depth field, either slice indices or focal distances.
struct DepthMap {
  Plane values;
  DepthUnit unit = DepthUnit::index;

  int height() const noexcept { return values.height(); }
  int width() const noexcept { return values.width(); }
  double operator()(int y, int x) const noexcept { return values(y, x); }

  bool all_finite() const {
    for (double v : values.values())
      if (!std::isfinite(v)) return false;
    return true;
  }
};

}  // namespace ddlsff
