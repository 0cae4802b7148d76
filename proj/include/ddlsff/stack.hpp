#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ddlsff/error.hpp"
#include "ddlsff/grid.hpp"

namespace ddlsff {

/// Multi-channel image with planar storage: channel-major, each plane row-major.
class Image {
 public:
  Image() = default;
  Image(int height, int width, int channels, double fill = 0.0)
      : height_(height), width_(width), channels_(channels) {
    require(height > 0 && width > 0, "image dimensions must be positive");
    require(channels == 1 || channels == 3, "image must have 1 or 3 channels");
    data_.assign(plane_size() * static_cast<std::size_t>(channels), fill);
  }
  Image(int height, int width, int channels, std::vector<double> data)
      : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    require(height > 0 && width > 0, "image dimensions must be positive");
    require(channels == 1 || channels == 3, "image must have 1 or 3 channels");
    require(data_.size() == plane_size() * static_cast<std::size_t>(channels),
            "image data length does not match dimensions");
    require(std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); }),
            "image contains non-finite values");
  }
  static Image from_plane(const Plane& plane) {
    return Image(plane.height(), plane.width(), 1,
                 std::vector<double>(plane.values().begin(), plane.values().end()));
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  std::size_t plane_size() const noexcept {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }

  double& at(int c, int y, int x) noexcept { return data_[offset(c, y, x)]; }
  double at(int c, int y, int x) const noexcept { return data_[offset(c, y, x)]; }

  std::span<double> plane(int c) noexcept { return {data_.data() + plane_size() * c, plane_size()}; }
  std::span<const double> plane(int c) const noexcept {
    return {data_.data() + plane_size() * c, plane_size()};
  }
  Plane plane_copy(int c) const {
    auto p = plane(c);
    return Plane(height_, width_, std::vector<double>(p.begin(), p.end()));
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool same_shape(const Image& o) const noexcept {
    return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t offset(int c, int y, int x) const noexcept {
    return plane_size() * static_cast<std::size_t>(c) +
           static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> data_;
};

/// Strictly increasing or strictly decreasing.
inline bool strictly_monotonic(std::span<const double> values) {
  if (values.size() < 2) return true;
  bool increasing = true;
  bool decreasing = true;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (!(values[i] > values[i - 1])) increasing = false;
    if (!(values[i] < values[i - 1])) decreasing = false;
  }
  return increasing || decreasing;
}

/// Co-registered slices with their focal distances. Immutable after
/// construction.
class FocalStack {
 public:
  FocalStack(std::vector<Image> slices, std::vector<double> focal_distances)
      : slices_(std::move(slices)), focal_distances_(std::move(focal_distances)) {
    require(slices_.size() >= 2, "focal stack needs at least 2 slices");
    require(slices_.size() == focal_distances_.size(),
            "slice count and focal distance count differ");
    for (const auto& s : slices_) {
      require(s.same_shape(slices_.front()), "dimension mismatch between focal stack slices");
      require(std::all_of(s.values().begin(), s.values().end(),
                          [](double v) { return v >= 0.0 && v <= 1.0; }),
              "focal stack values must lie in [0,1]");
    }
    require(std::all_of(focal_distances_.begin(), focal_distances_.end(),
                        [](double d) { return std::isfinite(d); }),
            "focal distances must be finite");
    require(strictly_monotonic(focal_distances_), "focal distances must be strictly monotonic");
  }

  int size() const noexcept { return static_cast<int>(slices_.size()); }
  int height() const noexcept { return slices_.front().height(); }
  int width() const noexcept { return slices_.front().width(); }
  int channels() const noexcept { return slices_.front().channels(); }

  const Image& slice(int s) const { return slices_.at(static_cast<std::size_t>(s)); }
  const std::vector<Image>& slices() const noexcept { return slices_; }
  const std::vector<double>& focal_distances() const noexcept { return focal_distances_; }

 private:
  std::vector<Image> slices_;
  std::vector<double> focal_distances_;
};

enum class GrayFormula {
  channel_mean,  ///< (R+G+B)/3
  rec601,        ///< 0.299 R + 0.587 G + 0.114 B
};

inline Image to_grayscale(const Image& img, GrayFormula formula = GrayFormula::channel_mean) {
  if (img.channels() == 1) return img;
  Image out(img.height(), img.width(), 1);
  auto r = img.plane(0);
  auto g = img.plane(1);
  auto b = img.plane(2);
  auto dst = out.plane(0);
  for (std::size_t i = 0; i < dst.size(); ++i) {
    double v = formula == GrayFormula::channel_mean ? (r[i] + g[i] + b[i]) / 3.0
                                                    : 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
    dst[i] = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

/// Grayscale stacks pass through unchanged.
inline FocalStack to_grayscale(const FocalStack& stack, GrayFormula formula = GrayFormula::channel_mean) {
  if (stack.channels() == 1) return stack;
  std::vector<Image> slices;
  slices.reserve(static_cast<std::size_t>(stack.size()));
  for (const auto& s : stack.slices()) slices.push_back(to_grayscale(s, formula));
  return FocalStack(std::move(slices), stack.focal_distances());
}

/// Per-pixel, per-channel arithmetic mean over the slices.
///
/// Values are sorted per pixel and folded with a running mean, so the result
/// is bit-identical under any slice permutation and exact for equal slices.
inline Image mean_image(std::span<const Image> slices) {
  require(!slices.empty(), "mean_image of an empty stack");
  const Image& first = slices.front();
  for (const auto& s : slices) require(s.same_shape(first), "dimension mismatch between slices");

  Image out(first.height(), first.width(), first.channels());
  auto dst = out.values();
  std::vector<double> samples(slices.size());
  for (std::size_t i = 0; i < dst.size(); ++i) {
    for (std::size_t s = 0; s < slices.size(); ++s) samples[s] = slices[s].values()[i];
    std::sort(samples.begin(), samples.end());
    double mean = samples[0];
    for (std::size_t k = 1; k < samples.size(); ++k)
      mean += (samples[k] - mean) / static_cast<double>(k + 1);
    dst[i] = mean;
  }
  return out;
}

inline Image mean_image(const FocalStack& stack) { return mean_image(std::span<const Image>(stack.slices())); }

}  // namespace ddlsff
