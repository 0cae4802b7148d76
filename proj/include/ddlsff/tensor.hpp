#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ddlsff/error.hpp"
#include "ddlsff/grid.hpp"
#include "ddlsff/parallel.hpp"
#include "ddlsff/philox.hpp"

namespace ddlsff {

/// Dense D×C×H×W array of reals, row-major. Feature maps use D = 1.
class Tensor4 {
 public:
  Tensor4() = default;
  Tensor4(int depth, int channels, int height, int width, double fill = 0.0)
      : d_(depth), c_(channels), h_(height), w_(width) {
    require(depth >= 1 && channels >= 1 && height >= 1 && width >= 1, "tensor dimensions must be positive");
    data_.assign(count(), fill);
  }
  Tensor4(int depth, int channels, int height, int width, std::vector<double> data)
      : d_(depth), c_(channels), h_(height), w_(width), data_(std::move(data)) {
    require(depth >= 1 && channels >= 1 && height >= 1 && width >= 1, "tensor dimensions must be positive");
    require(data_.size() == count(), "tensor data length does not match dimensions");
  }
  /// Feature map with `channels` planes of height×width.
  static Tensor4 features(int channels, int height, int width, double fill = 0.0) {
    return Tensor4(1, channels, height, width, fill);
  }

  int depth() const noexcept { return d_; }
  int channels() const noexcept { return c_; }
  int height() const noexcept { return h_; }
  int width() const noexcept { return w_; }
  std::size_t plane_size() const noexcept { return static_cast<std::size_t>(h_) * static_cast<std::size_t>(w_); }
  std::size_t count() const noexcept {
    return static_cast<std::size_t>(d_) * static_cast<std::size_t>(c_) * plane_size();
  }

  /// Plane k of the flattened (depth·channels) axis.
  std::span<double> plane(int k) noexcept { return {data_.data() + plane_size() * k, plane_size()}; }
  std::span<const double> plane(int k) const noexcept { return {data_.data() + plane_size() * k, plane_size()}; }

  double& at(int c, int y, int x) noexcept { return data_[plane_size() * c + static_cast<std::size_t>(y) * w_ + x]; }
  double at(int c, int y, int x) const noexcept {
    return data_[plane_size() * c + static_cast<std::size_t>(y) * w_ + x];
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  bool same_shape(const Tensor4& o) const noexcept { return d_ == o.d_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_; }
  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor4&, const Tensor4&) = default;

 private:
  int d_ = 0;
  int c_ = 0;
  int h_ = 0;
  int w_ = 0;
  std::vector<double> data_;
};

/// Square convolution with zero padding k/2. Weights are [out][in][k][k].
struct ConvLayer {
  std::string name;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  std::vector<double> weights;
  std::vector<double> bias;

  std::size_t weight_count() const noexcept {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel;
  }

  /// Uniform in ±1/√fan_in for weights and bias, from stream `stream` of `seed`.
  static ConvLayer seeded(std::string name, int in, int out, int kernel, int stride, std::uint64_t seed,
                          std::uint32_t stream) {
    ConvLayer l{std::move(name), in, out, kernel, stride, {}, {}};
    l.weights.resize(l.weight_count());
    l.bias.resize(static_cast<std::size_t>(out));
    const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel * kernel));
    const RandomStream rng(seed, stream, 0x57E16u);
    for (std::size_t i = 0; i < l.weights.size(); ++i) l.weights[i] = bound * (2.0 * rng.uniform(i) - 1.0);
    for (std::size_t i = 0; i < l.bias.size(); ++i) l.bias[i] = bound * (2.0 * rng.uniform(i, 1) - 1.0);
    return l;
  }

  /// Lowered to im2col and a blocked product. Every output element is
  /// bias + Σ_k w_k·x_k with k running over (in channel, ky, kx) in order, so
  /// results do not depend on blocking or thread count.
  Tensor4 operator()(const Tensor4& in) const {
    require(in.depth() == 1 && in.channels() == in_channels,
            name + ": expected " + std::to_string(in_channels) + " input channels, got " +
                std::to_string(in.channels() * in.depth()));
    const int pad = kernel / 2;
    const int ho = (in.height() + 2 * pad - kernel) / stride + 1;
    const int wo = (in.width() + 2 * pad - kernel) / stride + 1;
    const std::size_t pixels = static_cast<std::size_t>(ho) * wo;
    const std::size_t depth = static_cast<std::size_t>(in_channels) * kernel * kernel;

    // col[k][p]: input sample feeding output pixel p through weight k.
    std::vector<double> col(depth * pixels, 0.0);
    parallel_for(0, in_channels, [&](std::ptrdiff_t ic) {
      auto src = in.plane(static_cast<int>(ic));
      for (int ky = 0; ky < kernel; ++ky)
        for (int kx = 0; kx < kernel; ++kx) {
          double* dst = col.data() + ((static_cast<std::size_t>(ic) * kernel + ky) * kernel + kx) * pixels;
          for (int yo = 0; yo < ho; ++yo) {
            const int yi = yo * stride + ky - pad;
            if (yi < 0 || yi >= in.height()) continue;
            for (int xo = 0; xo < wo; ++xo) {
              const int xi = xo * stride + kx - pad;
              if (xi >= 0 && xi < in.width()) dst[static_cast<std::size_t>(yo) * wo + xo] = src[static_cast<std::size_t>(yi) * in.width() + xi];
            }
          }
        }
    });

    Tensor4 out = Tensor4::features(out_channels, ho, wo);
    constexpr int kOcBlock = 8;
    constexpr std::size_t kPixBlock = 32;
    const int oc_blocks = (out_channels + kOcBlock - 1) / kOcBlock;
    const std::size_t pix_blocks = (pixels + kPixBlock - 1) / kPixBlock;
    parallel_for(0, static_cast<std::ptrdiff_t>(oc_blocks * pix_blocks), [&](std::ptrdiff_t job) {
      const int oc0 = static_cast<int>(job / static_cast<std::ptrdiff_t>(pix_blocks)) * kOcBlock;
      const std::size_t p0 = static_cast<std::size_t>(job % static_cast<std::ptrdiff_t>(pix_blocks)) * kPixBlock;
      const int nb = std::min(kOcBlock, out_channels - oc0);
      const std::size_t np = std::min(kPixBlock, pixels - p0);
      alignas(64) double acc[kOcBlock][kPixBlock];
      for (int j = 0; j < kOcBlock; ++j)
        for (std::size_t p = 0; p < kPixBlock; ++p) acc[j][p] = j < nb ? bias[static_cast<std::size_t>(oc0 + j)] : 0.0;
      const double* wrow[kOcBlock];
      for (int j = 0; j < kOcBlock; ++j) wrow[j] = weights.data() + static_cast<std::size_t>(oc0 + std::min(j, nb - 1)) * depth;
      for (std::size_t k = 0; k < depth; ++k) {
        const double* c = col.data() + k * pixels + p0;
        if (np == kPixBlock) {
          for (int j = 0; j < kOcBlock; ++j) {
            const double w = wrow[j][k];
            for (std::size_t p = 0; p < kPixBlock; ++p) acc[j][p] += w * c[p];
          }
        } else {
          for (int j = 0; j < kOcBlock; ++j) {
            const double w = wrow[j][k];
            for (std::size_t p = 0; p < np; ++p) acc[j][p] += w * c[p];
          }
        }
      }
      for (int j = 0; j < nb; ++j) {
        double* dst = out.plane(oc0 + j).data() + p0;
        for (std::size_t p = 0; p < np; ++p) dst[p] = acc[j][p];
      }
    });
    return out;
  }
};

// ---------------------------------------------------------------------------
// Element-wise and resampling helpers for feature maps.

inline Tensor4 concat_channels(std::initializer_list<const Tensor4*> parts) {
  require(parts.size() > 0, "nothing to concatenate");
  const Tensor4& first = **parts.begin();
  int channels = 0;
  for (const Tensor4* t : parts) {
    require(t->height() == first.height() && t->width() == first.width(), "spatial size mismatch in concatenation");
    channels += t->depth() * t->channels();
  }
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(channels) * first.plane_size());
  for (const Tensor4* t : parts) data.insert(data.end(), t->values().begin(), t->values().end());
  return Tensor4(1, channels, first.height(), first.width(), std::move(data));
}

template <typename Fn>
Tensor4 map(Tensor4 t, Fn&& fn) {
  for (double& v : t.values()) v = fn(v);
  return t;
}

inline double sigmoid(double v) noexcept { return 1.0 / (1.0 + std::exp(-v)); }

inline Tensor4 relu(Tensor4 t) {
  return map(std::move(t), [](double v) { return v > 0.0 ? v : 0.0; });
}

/// Mean over non-overlapping factor×factor blocks; sizes must divide.
inline Tensor4 avg_pool(const Tensor4& in, int factor) {
  require(factor >= 1 && in.height() % factor == 0 && in.width() % factor == 0,
          "pooling factor must divide the spatial size");
  const int ho = in.height() / factor;
  const int wo = in.width() / factor;
  Tensor4 out(in.depth(), in.channels(), ho, wo);
  const double inv = 1.0 / (factor * factor);
  for (int k = 0; k < in.depth() * in.channels(); ++k) {
    auto src = in.plane(k);
    auto dst = out.plane(k);
    for (int y = 0; y < ho; ++y)
      for (int x = 0; x < wo; ++x) {
        double acc = 0.0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx)
            acc += src[static_cast<std::size_t>(y * factor + dy) * in.width() + x * factor + dx];
        dst[static_cast<std::size_t>(y) * wo + x] = acc * inv;
      }
  }
  return out;
}

/// 2× bilinear upsampling with half-pixel centres and clamped borders.
inline Tensor4 upsample2x(const Tensor4& in) {
  const int h = in.height();
  const int w = in.width();
  Tensor4 out(in.depth(), in.channels(), 2 * h, 2 * w);
  // Output o samples input coordinate o/2 - 0.25.
  auto taps = [](int o, int n) {
    const int i = o / 2;
    if (o % 2 == 0) return std::pair{std::pair{std::max(i - 1, 0), 0.25}, std::pair{i, 0.75}};
    return std::pair{std::pair{i, 0.75}, std::pair{std::min(i + 1, n - 1), 0.25}};
  };
  for (int k = 0; k < in.depth() * in.channels(); ++k) {
    auto src = in.plane(k);
    auto dst = out.plane(k);
    for (int y = 0; y < 2 * h; ++y) {
      const auto [ya, yb] = taps(y, h);
      for (int x = 0; x < 2 * w; ++x) {
        const auto [xa, xb] = taps(x, w);
        auto s = [&](int yy, int xx) { return src[static_cast<std::size_t>(yy) * w + xx]; };
        dst[static_cast<std::size_t>(y) * 2 * w + x] =
            ya.second * (xa.second * s(ya.first, xa.first) + xb.second * s(ya.first, xb.first)) +
            yb.second * (xa.second * s(yb.first, xa.first) + xb.second * s(yb.first, xb.first));
      }
    }
  }
  return out;
}

/// Per-channel normalisation to zero mean and unit variance over space.
inline Tensor4 instance_norm(Tensor4 t, double eps = 1e-5) {
  for (int k = 0; k < t.depth() * t.channels(); ++k) {
    auto p = t.plane(k);
    double mean = 0.0;
    for (double v : p) mean += v;
    mean /= static_cast<double>(p.size());
    double var = 0.0;
    for (double v : p) var += (v - mean) * (v - mean);
    var /= static_cast<double>(p.size());
    const double inv = 1.0 / std::sqrt(var + eps);
    for (double& v : p) v = (v - mean) * inv;
  }
  return t;
}

inline Tensor4 add(Tensor4 a, const Tensor4& b) {
  require(a.same_shape(b), "shape mismatch in addition");
  auto bv = b.values();
  auto av = a.values();
  for (std::size_t i = 0; i < av.size(); ++i) av[i] += bv[i];
  return a;
}

inline Tensor4 from_plane(const Plane& p) {
  return Tensor4(1, 1, p.height(), p.width(), std::vector<double>(p.values().begin(), p.values().end()));
}

inline Plane to_plane(const Tensor4& t, int channel = 0) {
  auto p = t.plane(channel);
  return Plane(t.height(), t.width(), std::vector<double>(p.begin(), p.end()));
}

}  // namespace ddlsff
