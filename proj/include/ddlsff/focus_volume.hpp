#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ddlsff/convolve.hpp"
#include "ddlsff/error.hpp"
#include "ddlsff/kernels.hpp"
#include "ddlsff/parallel.hpp"
#include "ddlsff/stack.hpp"

namespace ddlsff {

/// How a focus volume was produced.
struct FocusSource {
  enum class Kind { ddl, ddl_cumulative, laplacian, external };
  Kind kind = Kind::external;
  int dilation = 0;  ///< r for ddl, upper rate for ddl_cumulative, 0 otherwise

  std::string describe() const {
    switch (kind) {
      case Kind::ddl: return "ddl r=" + std::to_string(dilation);
      case Kind::ddl_cumulative: return "ddl cumulative r<=" + std::to_string(dilation);
      case Kind::laplacian: return "laplacian 3x3";
      case Kind::external: return "external";
    }
    return "?";
  }
  friend bool operator==(const FocusSource&, const FocusSource&) = default;
};

/// S×H×W field of non-negative focus scores, slice-major.
class FocusVolume {
 public:
  FocusVolume() = default;
  FocusVolume(int slices, int height, int width, FocusSource source = {})
      : slices_(slices), height_(height), width_(width), source_(source) {
    require(slices >= 1 && height >= 1 && width >= 1, "focus volume dimensions must be positive");
    values_.assign(static_cast<std::size_t>(slices) * plane_size(), 0.0);
  }
  FocusVolume(int slices, int height, int width, std::vector<double> values, FocusSource source = {})
      : slices_(slices), height_(height), width_(width), source_(source), values_(std::move(values)) {
    require(slices >= 1 && height >= 1 && width >= 1, "focus volume dimensions must be positive");
    require(values_.size() == static_cast<std::size_t>(slices) * plane_size(),
            "focus volume data length does not match dimensions");
  }

  int slices() const noexcept { return slices_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t plane_size() const noexcept {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }
  const FocusSource& source() const noexcept { return source_; }

  double& at(int s, int y, int x) noexcept { return values_[offset(s, y, x)]; }
  double at(int s, int y, int x) const noexcept { return values_[offset(s, y, x)]; }

  std::span<double> slice(int s) noexcept { return {values_.data() + plane_size() * s, plane_size()}; }
  std::span<const double> slice(int s) const noexcept { return {values_.data() + plane_size() * s, plane_size()}; }
  Plane slice_plane(int s) const {
    auto v = slice(s);
    return Plane(height_, width_, std::vector<double>(v.begin(), v.end()));
  }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }

  bool same_shape(const FocusVolume& o) const noexcept {
    return slices_ == o.slices_ && height_ == o.height_ && width_ == o.width_;
  }

  friend bool operator==(const FocusVolume&, const FocusVolume&) = default;

 private:
  std::size_t offset(int s, int y, int x) const noexcept {
    return plane_size() * static_cast<std::size_t>(s) + static_cast<std::size_t>(y) * width_ +
           static_cast<std::size_t>(x);
  }

  int slices_ = 0;
  int height_ = 0;
  int width_ = 0;
  FocusSource source_;
  std::vector<double> values_;
};

namespace detail {

/// Mean over kernels and channels of the squared responses, per slice.
/// Accumulation order: kernels outer, channels inner.
inline FocusVolume squared_response_volume(const FocalStack& stack, std::span<const Kernel2D> kernels,
                                           BorderPolicy border, FocusSource source) {
  for (const auto& k : kernels)
    require(k.size <= std::min(stack.height(), stack.width()), "kernel larger than image");

  FocusVolume fv(stack.size(), stack.height(), stack.width(), source);
  std::vector<std::vector<Tap>> taps;
  for (const auto& k : kernels) taps.push_back(k.nonzero_taps());
  const double norm = static_cast<double>(kernels.size()) * static_cast<double>(stack.channels());

  parallel_for(0, stack.size(), [&](std::ptrdiff_t s) {
    const Image& img = stack.slice(static_cast<int>(s));
    auto acc = fv.slice(static_cast<int>(s));
    std::vector<double> response(acc.size());
    for (const auto& kt : taps) {
      for (int c = 0; c < img.channels(); ++c) {
        sparse_convolve(img.plane(c), img.height(), img.width(), kt, border, response);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += response[i] * response[i];
      }
    }
    for (double& v : acc) v /= norm;
  });
  return fv;
}

}  // namespace detail

/// G⁽ʳ⁾: squared responses of the four directional dilated Laplacians at rate
/// r, averaged over directions and channels, per slice.
inline FocusVolume ddl_focus_volume(const FocalStack& stack, int r, BorderPolicy border = BorderPolicy::replicate) {
  require(r >= 1, "dilation rate must be >= 1");
  std::vector<Kernel2D> kernels;
  for (auto theta : kDirections) kernels.push_back(ddl_kernel(r, theta));
  return detail::squared_response_volume(stack, kernels, border, {FocusSource::Kind::ddl, r});
}

/// G⁽¹⁾ … G⁽ᴿ⁾.
inline std::vector<FocusVolume> multiscale_volumes(const FocalStack& stack, int rates = 4,
                                                   BorderPolicy border = BorderPolicy::replicate) {
  require(rates >= 1, "number of rates must be >= 1");
  std::vector<FocusVolume> out;
  out.reserve(static_cast<std::size_t>(rates));
  for (int r = 1; r <= rates; ++r) out.push_back(ddl_focus_volume(stack, r, border));
  return out;
}

/// Element-wise mean of the first r volumes (rates 1..r). Summed as a
/// balanced pairwise tree, so averaging equal volumes in powers of two is exact.
inline FocusVolume cumulative_variant(std::span<const FocusVolume> volumes, int r) {
  require(r >= 1 && r <= static_cast<int>(volumes.size()), "cumulative rate out of range");
  for (int i = 1; i < r; ++i)
    require(volumes[static_cast<std::size_t>(i)].same_shape(volumes[0]), "focus volume shape mismatch");
  if (r == 1) {
    FocusVolume out = volumes[0];
    return FocusVolume(out.slices(), out.height(), out.width(),
                       std::vector<double>(out.values().begin(), out.values().end()),
                       {FocusSource::Kind::ddl_cumulative, 1});
  }

  const auto& first = volumes[0];
  FocusVolume out(first.slices(), first.height(), first.width(), {FocusSource::Kind::ddl_cumulative, r});
  auto dst = out.values();
  std::vector<double> partial(static_cast<std::size_t>(r));
  for (std::size_t i = 0; i < dst.size(); ++i) {
    for (int k = 0; k < r; ++k) partial[static_cast<std::size_t>(k)] = volumes[static_cast<std::size_t>(k)].values()[i];
    for (std::size_t width = partial.size(); width > 1;) {
      const std::size_t half = (width + 1) / 2;
      for (std::size_t k = 0; k < width / 2; ++k) partial[k] = partial[2 * k] + partial[2 * k + 1];
      if (width % 2 == 1) partial[width / 2] = partial[width - 1];
      width = half;
    }
    dst[i] = partial[0] / static_cast<double>(r);
  }
  return out;
}

/// Baseline: squared 4-neighbour Laplacian response averaged over channels.
inline FocusVolume laplacian_focus_volume(const FocalStack& stack, BorderPolicy border = BorderPolicy::replicate) {
  const Kernel2D k = standard_laplacian();
  return detail::squared_response_volume(stack, std::span<const Kernel2D>(&k, 1), border,
                                         {FocusSource::Kind::laplacian, 0});
}

/// Depth-concatenation of R focus volumes, rate-major: slot r·S + s holds
/// volume r, slice s.
struct FocusAggregationMap {
  int rates = 0;
  int slices = 0;
  int height = 0;
  int width = 0;
  std::vector<double> values;

  int depth() const noexcept { return rates * slices; }
  std::size_t plane_size() const noexcept { return static_cast<std::size_t>(height) * width; }
  std::span<const double> plane(int d) const noexcept {
    return {values.data() + plane_size() * static_cast<std::size_t>(d), plane_size()};
  }
  double at(int d, int y, int x) const noexcept {
    return values[plane_size() * static_cast<std::size_t>(d) + static_cast<std::size_t>(y) * width + x];
  }
  static constexpr const char* layout() noexcept { return "rate-major, slice-minor"; }
};

inline FocusAggregationMap aggregation_map(std::span<const FocusVolume> volumes) {
  require(!volumes.empty(), "aggregation map needs at least one focus volume");
  for (const auto& v : volumes) require(v.same_shape(volumes[0]), "focus volume shape mismatch");
  FocusAggregationMap u{static_cast<int>(volumes.size()), volumes[0].slices(), volumes[0].height(),
                        volumes[0].width(), {}};
  u.values.reserve(static_cast<std::size_t>(u.depth()) * u.plane_size());
  for (const auto& v : volumes) u.values.insert(u.values.end(), v.values().begin(), v.values().end());
  return u;
}

}  // namespace ddlsff
