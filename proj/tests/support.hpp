#pragma once

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "ddlsff/ddlsff.hpp"

namespace fs = std::filesystem;

namespace ddlsff::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("ddlsff_" + tag + "_" + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline Plane random_plane(int h, int w, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  Plane p(h, w);
  for (double& v : p.values()) v = dist(gen);
  return p;
}

inline Image random_image(int h, int w, int channels, std::uint64_t seed) {
  std::vector<double> data;
  for (int c = 0; c < channels; ++c) {
    Plane p = random_plane(h, w, seed * 31 + static_cast<std::uint64_t>(c));
    data.insert(data.end(), p.values().begin(), p.values().end());
  }
  return Image(h, w, channels, std::move(data));
}

inline FocalStack random_stack(int s, int h, int w, int channels, std::uint64_t seed) {
  std::vector<Image> slices;
  std::vector<double> d;
  for (int i = 0; i < s; ++i) {
    slices.push_back(random_image(h, w, channels, seed * 1000 + static_cast<std::uint64_t>(i)));
    d.push_back(static_cast<double>(i + 1));
  }
  return FocalStack(std::move(slices), d);
}

/// Dense direct-sum convolution: out(p) = Σ_q K(q)·img(p − q), scanning the
/// whole kernel window in row-major order.
inline Plane naive_conv(const Plane& img, const Kernel2D& k, BorderPolicy border) {
  const int h = img.height();
  const int w = img.width();
  const int r = k.radius();
  Plane out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int row = 0; row < k.size; ++row)
        for (int col = 0; col < k.size; ++col) {
          const int weight = k.at(row, col);
          if (weight == 0) continue;
          const int sy = y - (row - r);
          const int sx = x - (col - r);
          int yy = sy, xx = sx;
          double v = 0.0;
          if (border == BorderPolicy::replicate) {
            yy = std::clamp(sy, 0, h - 1);
            xx = std::clamp(sx, 0, w - 1);
            v = img(yy, xx);
          } else if (border == BorderPolicy::reflect) {
            auto refl = [](int i, int n) {
              if (n == 1) return 0;
              while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
              return i;
            };
            v = img(refl(sy, h), refl(sx, w));
          } else {
            v = (sy >= 0 && sy < h && sx >= 0 && sx < w) ? img(sy, sx) : 0.0;
          }
          acc += weight * v;
        }
      out(y, x) = acc;
    }
  return out;
}

inline bool bit_equal(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return false;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

/// Restores the worker count when a test leaves.
struct ThreadGuard {
  int saved = num_threads();
  ~ThreadGuard() { set_num_threads(0); }
};

}  // namespace ddlsff::test
