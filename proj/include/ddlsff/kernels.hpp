#pragma once

#include <array>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "ddlsff/error.hpp"

namespace ddlsff {

/// Tap axis of a directional kernel. 0° varies along x (a row), 90° along y
/// (a column); 45° runs from bottom-left to top-right in image coordinates
/// (y pointing down), 135° from top-left to bottom-right.
enum class Orientation { deg0, deg45, deg90, deg135, isotropic };

inline constexpr std::array<Orientation, 4> kDirections = {
    Orientation::deg0, Orientation::deg45, Orientation::deg90, Orientation::deg135};

inline std::string_view to_string(Orientation o) {
  switch (o) {
    case Orientation::deg0: return "0";
    case Orientation::deg45: return "45";
    case Orientation::deg90: return "90";
    case Orientation::deg135: return "135";
    case Orientation::isotropic: return "isotropic";
  }
  return "?";
}

inline Orientation parse_orientation(std::string_view s) {
  if (s == "0") return Orientation::deg0;
  if (s == "45") return Orientation::deg45;
  if (s == "90") return Orientation::deg90;
  if (s == "135") return Orientation::deg135;
  throw ValidationError("invalid orientation '" + std::string(s) + "' (expected 0, 45, 90 or 135)");
}

/// One nonzero kernel coefficient at offset (dy, dx) from the kernel centre.
struct Tap {
  int dy;
  int dx;
  int weight;
  friend bool operator==(const Tap&, const Tap&) = default;
};

/// Square kernel with odd size and integer taps, stored row-major.
struct Kernel2D {
  int size = 0;
  int dilation = 1;
  Orientation orientation = Orientation::isotropic;
  std::vector<int> taps;

  int radius() const noexcept { return size / 2; }
  int at(int row, int col) const { return taps.at(static_cast<std::size_t>(row * size + col)); }
  int sum() const { return std::accumulate(taps.begin(), taps.end(), 0); }

  /// Nonzero taps in row-major order.
  std::vector<Tap> nonzero_taps() const {
    std::vector<Tap> out;
    for (int row = 0; row < size; ++row)
      for (int col = 0; col < size; ++col)
        if (int w = at(row, col); w != 0) out.push_back({row - radius(), col - radius(), w});
    return out;
  }

  Kernel2D transposed() const {
    Kernel2D k = *this;
    for (int row = 0; row < size; ++row)
      for (int col = 0; col < size; ++col) k.taps[static_cast<std::size_t>(row * size + col)] = at(col, row);
    return k;
  }

  Kernel2D flipped_horizontally() const {
    Kernel2D k = *this;
    for (int row = 0; row < size; ++row)
      for (int col = 0; col < size; ++col)
        k.taps[static_cast<std::size_t>(row * size + col)] = at(row, size - 1 - col);
    return k;
  }

  friend bool operator==(const Kernel2D&, const Kernel2D&) = default;
};

/// Dilated second difference s(i+r) + s(i-r) - 2 s(i), as 2r+1 taps.
inline std::vector<int> laplacian_1d(int r) {
  require(r >= 1, "dilation rate must be >= 1");
  std::vector<int> taps(static_cast<std::size_t>(2 * r + 1), 0);
  taps.front() = 1;
  taps[static_cast<std::size_t>(r)] = -2;
  taps.back() = 1;
  return taps;
}

/// Directional dilated Laplacian: the 1-D dilated kernel embedded along one of
/// the four directions of a (2r+1)×(2r+1) square.
inline Kernel2D ddl_kernel(int r, Orientation theta) {
  require(r >= 1, "dilation rate must be >= 1");
  const int size = 2 * r + 1;
  Kernel2D k{size, r, theta, std::vector<int>(static_cast<std::size_t>(size * size), 0)};
  auto set = [&](int dy, int dx, int w) { k.taps[static_cast<std::size_t>((r + dy) * size + (r + dx))] = w; };
  set(0, 0, -2);
  switch (theta) {
    case Orientation::deg0: set(0, -r, 1); set(0, r, 1); break;
    case Orientation::deg90: set(-r, 0, 1); set(r, 0, 1); break;
    case Orientation::deg45: set(-r, r, 1); set(r, -r, 1); break;
    case Orientation::deg135: set(-r, -r, 1); set(r, r, 1); break;
    case Orientation::isotropic: throw ValidationError("DDL kernels need a direction (0, 45, 90 or 135)");
  }
  return k;
}

/// 4-neighbour 3×3 Laplacian.
inline Kernel2D standard_laplacian() {
  return Kernel2D{3, 1, Orientation::isotropic, {0, 1, 0, 1, -4, 1, 0, 1, 0}};
}

inline std::string format_kernel(const Kernel2D& k) {
  std::string out;
  for (int row = 0; row < k.size; ++row) {
    for (int col = 0; col < k.size; ++col) {
      std::string cell = std::to_string(k.at(row, col));
      out += std::string(cell.size() < 3 ? 3 - cell.size() : 0, ' ') + cell;
      if (col + 1 < k.size) out += ' ';
    }
    out += '\n';
  }
  return out;
}

}  // namespace ddlsff
