#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "ddlsff/error.hpp"

namespace ddlsff {

/// Dense row-major 2-D array.
template <typename T>
class Grid {
 public:
  using value_type = T;

  Grid() = default;
  Grid(int height, int width, T fill = T{}) : height_(height), width_(width) {
    require(height >= 0 && width >= 0, "grid dimensions must be non-negative");
    data_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill);
  }
  Grid(int height, int width, std::vector<T> data)
      : height_(height), width_(width), data_(std::move(data)) {
    require(height >= 0 && width >= 0, "grid dimensions must be non-negative");
    require(data_.size() == static_cast<std::size_t>(height) * static_cast<std::size_t>(width),
            "grid data length does not match dimensions");
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int y, int x) noexcept { return data_[index(y, x)]; }
  const T& operator()(int y, int x) const noexcept { return data_[index(y, x)]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::span<T> row(int y) noexcept { return {data_.data() + index(y, 0), static_cast<std::size_t>(width_)}; }
  std::span<const T> row(int y) const noexcept {
    return {data_.data() + index(y, 0), static_cast<std::size_t>(width_)};
  }

  bool same_shape(const Grid& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t index(int y, int x) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

using Plane = Grid<double>;
using Mask = Grid<unsigned char>;

}  // namespace ddlsff
