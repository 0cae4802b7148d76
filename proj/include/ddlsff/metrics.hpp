#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ddlsff/depth_map.hpp"
#include "ddlsff/error.hpp"
#include "ddlsff/grid.hpp"

namespace ddlsff {

/// Pairwise (cascade) summation with a fixed split rule; the result depends
/// only on the input order.
inline double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

inline double pairwise_mean(std::span<const double> v) {
  return v.empty() ? std::numeric_limits<double>::quiet_NaN() : pairwise_sum(v) / static_cast<double>(v.size());
}

struct MetricsReport {
  double mae = 0.0;
  double mse = 0.0;
  double rms = 0.0;
  double log_rms = 0.0;
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double acc_125 = 0.0;    ///< percent
  double acc_125_2 = 0.0;  ///< percent
  double acc_125_3 = 0.0;  ///< percent
  double badpix = 0.0;     ///< percent
  double badpix_threshold = 0.0;
  double corr = 0.0;
  std::size_t valid_pixel_count = 0;
  std::size_t positive_gt_count = 0;  ///< pixels used by AbsRel, SqRel and Acc
  std::size_t log_pixel_count = 0;    ///< pixels used by logRMS
  std::vector<std::string> warnings;
};

/// BadPix threshold used when none is given: 7% of the ground-truth range.
inline double default_badpix_threshold(const DepthMap& gt, const Mask* mask = nullptr) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (int y = 0; y < gt.height(); ++y)
    for (int x = 0; x < gt.width(); ++x) {
      if (mask != nullptr && (*mask)(y, x) == 0) continue;
      const double g = gt(y, x);
      if (!std::isfinite(g)) continue;
      lo = std::min(lo, g);
      hi = std::max(hi, g);
    }
  require(hi >= lo, "ground truth has no valid pixels");
  return 0.07 * (hi - lo);
}

/// Depth error metrics over pixels where the mask is nonzero and both maps
/// are finite.
///
/// AbsRel, SqRel and the Acc thresholds divide by the ground truth and are
/// taken over pixels with gt > 0 (a non-positive prediction there fails every
/// Acc threshold). logRMS uses pixels where both depths are positive. CORR on
/// zero-variance input is NaN and adds a warning.
inline MetricsReport evaluate(const DepthMap& pred, const DepthMap& gt, const Mask* mask, double badpix_threshold) {
  require(pred.height() == gt.height() && pred.width() == gt.width(), "prediction and ground truth dimensions differ");
  require(pred.unit == gt.unit, "prediction and ground truth units differ");
  if (mask != nullptr)
    require(mask->height() == gt.height() && mask->width() == gt.width(), "mask dimensions differ");
  require(std::isfinite(badpix_threshold) && badpix_threshold >= 0.0, "badpix threshold must be finite and >= 0");

  std::vector<double> p;
  std::vector<double> g;
  for (int y = 0; y < gt.height(); ++y)
    for (int x = 0; x < gt.width(); ++x) {
      if (mask != nullptr && (*mask)(y, x) == 0) continue;
      if (!std::isfinite(pred(y, x)) || !std::isfinite(gt(y, x))) continue;
      p.push_back(pred(y, x));
      g.push_back(gt(y, x));
    }
  require(!p.empty(), "no valid pixels to evaluate");

  const std::size_t n = p.size();
  std::vector<double> abs_err(n), sq_err(n), bad(n);
  std::vector<double> abs_rel, sq_rel, acc1, acc2, acc3, log_sq;
  constexpr double t1 = 1.25;
  constexpr double t2 = 1.25 * 1.25;
  constexpr double t3 = 1.25 * 1.25 * 1.25;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = p[i] - g[i];
    abs_err[i] = std::abs(d);
    sq_err[i] = d * d;
    bad[i] = std::abs(d) > badpix_threshold ? 1.0 : 0.0;
    if (g[i] > 0.0) {
      abs_rel.push_back(std::abs(d) / g[i]);
      sq_rel.push_back(d * d / g[i]);
      const double ratio = p[i] > 0.0 ? std::max(p[i] / g[i], g[i] / p[i]) : std::numeric_limits<double>::infinity();
      acc1.push_back(ratio < t1 ? 1.0 : 0.0);
      acc2.push_back(ratio < t2 ? 1.0 : 0.0);
      acc3.push_back(ratio < t3 ? 1.0 : 0.0);
    }
    if (g[i] > 0.0 && p[i] > 0.0) {
      const double dl = std::log(p[i]) - std::log(g[i]);
      log_sq.push_back(dl * dl);
    }
  }

  MetricsReport r;
  r.valid_pixel_count = n;
  r.positive_gt_count = abs_rel.size();
  r.log_pixel_count = log_sq.size();
  r.badpix_threshold = badpix_threshold;
  r.mae = pairwise_mean(abs_err);
  r.mse = pairwise_mean(sq_err);
  r.rms = std::sqrt(r.mse);
  r.log_rms = std::sqrt(pairwise_mean(log_sq));
  r.abs_rel = pairwise_mean(abs_rel);
  r.sq_rel = pairwise_mean(sq_rel);
  r.acc_125 = 100.0 * pairwise_mean(acc1);
  r.acc_125_2 = 100.0 * pairwise_mean(acc2);
  r.acc_125_3 = 100.0 * pairwise_mean(acc3);
  r.badpix = 100.0 * pairwise_mean(bad);
  if (log_sq.size() < n) r.warnings.push_back("logRMS excludes " + std::to_string(n - log_sq.size()) + " non-positive pixels");
  if (abs_rel.size() < n)
    r.warnings.push_back("AbsRel/SqRel/Acc exclude " + std::to_string(n - abs_rel.size()) + " pixels with gt <= 0");

  const double mp = pairwise_mean(p);
  const double mg = pairwise_mean(g);
  std::vector<double> cov(n), vp(n), vg(n);
  for (std::size_t i = 0; i < n; ++i) {
    cov[i] = (p[i] - mp) * (g[i] - mg);
    vp[i] = (p[i] - mp) * (p[i] - mp);
    vg[i] = (g[i] - mg) * (g[i] - mg);
  }
  const double var_p = pairwise_sum(vp);
  const double var_g = pairwise_sum(vg);
  if (var_p > 0.0 && var_g > 0.0) {
    r.corr = std::clamp(pairwise_sum(cov) / std::sqrt(var_p * var_g), -1.0, 1.0);
  } else {
    r.corr = std::numeric_limits<double>::quiet_NaN();
    r.warnings.push_back("CORR undefined: zero variance in prediction or ground truth");
  }
  return r;
}

inline MetricsReport evaluate(const DepthMap& pred, const DepthMap& gt, double badpix_threshold) {
  return evaluate(pred, gt, nullptr, badpix_threshold);
}

/// RMS error after min-max normalising each map to [0,1] independently.
inline double normalized_rms(const DepthMap& pred, const DepthMap& gt) {
  require(pred.height() == gt.height() && pred.width() == gt.width(), "prediction and ground truth dimensions differ");
  require(pred.unit == gt.unit, "prediction and ground truth units differ");
  require(pred.all_finite() && gt.all_finite(), "depth maps must be finite");
  auto normalise = [](const Plane& m) {
    const auto [lo, hi] = std::minmax_element(m.values().begin(), m.values().end());
    const double range = *hi - *lo;
    require(range > 0.0, "cannot normalise a constant depth map");
    std::vector<double> out(m.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (m.values()[i] - *lo) / range;
    return out;
  };
  const auto a = normalise(pred.values);
  const auto b = normalise(gt.values);
  std::vector<double> sq(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) sq[i] = (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(pairwise_mean(sq));
}

}  // namespace ddlsff
