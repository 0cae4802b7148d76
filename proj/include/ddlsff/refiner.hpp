#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ddlsff/depth_map.hpp"
#include "ddlsff/error.hpp"
#include "ddlsff/focus_volume.hpp"
#include "ddlsff/grid.hpp"
#include "ddlsff/metrics.hpp"
#include "ddlsff/stack.hpp"
#include "ddlsff/tensor.hpp"

namespace ddlsff::refiner {

/// GRU scales, finest first: index 0 runs at 1/4, 1 at 1/8, 2 at 1/16.
inline constexpr std::array<int, 3> kScales = {4, 8, 16};
inline constexpr int kUpsampleFactor = 4;
inline constexpr int kMaskChannels = 9 * kUpsampleFactor * kUpsampleFactor;

struct RefinerConfig {
  int input_channels = 1;    ///< channels of the mean image
  int aggregation_depth = 0;  ///< R·S planes of the focus aggregation map
  int hidden = 128;
  int fusion_channels = 128;
  /// ReLUs inside the fusion stack. Disabling them makes the stack affine in
  /// its inputs, which the tests use as a linearity oracle.
  bool fusion_activations = true;

  friend bool operator==(const RefinerConfig&, const RefinerConfig&) = default;
};

struct ResidualBlock {
  ConvLayer conv1;     ///< 3×3, strided
  ConvLayer conv2;     ///< 3×3
  ConvLayer shortcut;  ///< 1×1, strided

  Tensor4 operator()(const Tensor4& x) const {
    Tensor4 y = relu(conv1(x));
    y = conv2(y);
    return relu(add(std::move(y), shortcut(x)));
  }
};

struct GruWeights {
  ConvLayer z;  ///< update gate
  ConvLayer r;  ///< reset gate
  ConvLayer h;  ///< candidate
};

/// All parameters, reproducible from (config, seed).
struct RefinerWeights {
  RefinerConfig config;
  std::uint64_t seed = 0;

  // Context encoder: stem (stride 2, instance norm) then three strided
  // residual stages reaching 1/4, 1/8 and 1/16; one head per scale emits the
  // three gate biases.
  ConvLayer stem;
  std::array<ResidualBlock, 3> stages;
  std::array<ConvLayer, 3> bias_heads;

  std::array<GruWeights, 3> gru;  ///< per scale, finest first
  ConvLayer fusion1, fusion2;     ///< [D̂, U] → M
  ConvLayer depth1, depth2;       ///< hidden → ΔD̂
  ConvLayer mask1, mask2;         ///< hidden → convex-upsampling logits

  static RefinerWeights generate(const RefinerConfig& config, std::uint64_t seed) {
    require(config.input_channels == 1 || config.input_channels == 3, "mean image must have 1 or 3 channels");
    require(config.aggregation_depth >= 1, "aggregation depth must be >= 1");
    require(config.hidden >= 1 && config.fusion_channels >= 1, "channel widths must be >= 1");
    const int hid = config.hidden;
    std::uint32_t stream = 0;
    auto conv = [&](std::string name, int in, int out, int k, int stride) {
      return ConvLayer::seeded(std::move(name), in, out, k, stride, seed, stream++);
    };
    auto block = [&](const std::string& name, int in, int out) {
      return ResidualBlock{conv(name + ".conv1", in, out, 3, 2), conv(name + ".conv2", out, out, 3, 1),
                           conv(name + ".shortcut", in, out, 1, 2)};
    };

    RefinerWeights w;
    w.config = config;
    w.seed = seed;
    const std::array<int, 4> widths = {32, 64, 96, hid};
    w.stem = conv("context.stem", config.input_channels, widths[0], 3, 2);
    for (int i = 0; i < 3; ++i) w.stages[i] = block("context.stage" + std::to_string(i + 1), widths[i], widths[i + 1]);
    for (int i = 0; i < 3; ++i)
      w.bias_heads[i] = conv("context.head" + std::to_string(kScales[i]), widths[i + 1], 3 * hid, 3, 1);

    // Auxiliary inputs: GRU-4 gets [M, up(h8)], GRU-8 [pool(h4), up(h16)],
    // GRU-16 [pool(h8)].
    const std::array<int, 3> aux = {config.fusion_channels + hid, 2 * hid, hid};
    for (int i = 0; i < 3; ++i) {
      const std::string p = "gru" + std::to_string(kScales[i]);
      w.gru[i] = GruWeights{conv(p + ".z", hid + aux[i], hid, 3, 1), conv(p + ".r", hid + aux[i], hid, 3, 1),
                            conv(p + ".h", hid + aux[i], hid, 3, 1)};
    }
    w.fusion1 = conv("fusion.conv1", 1 + config.aggregation_depth, config.fusion_channels, 3, 1);
    w.fusion2 = conv("fusion.conv2", config.fusion_channels, config.fusion_channels, 3, 1);
    w.depth1 = conv("depth_head.conv1", hid, hid, 3, 1);
    w.depth2 = conv("depth_head.conv2", hid, 1, 3, 1);
    w.mask1 = conv("mask_head.conv1", hid, hid, 3, 1);
    w.mask2 = conv("mask_head.conv2", hid, kMaskChannels, 1, 1);
    return w;
  }

  /// Every layer, in a fixed order (serialisation relies on it).
  std::vector<ConvLayer*> layers() {
    std::vector<ConvLayer*> out{&stem};
    for (auto& s : stages) out.insert(out.end(), {&s.conv1, &s.conv2, &s.shortcut});
    for (auto& h : bias_heads) out.push_back(&h);
    for (auto& g : gru) out.insert(out.end(), {&g.z, &g.r, &g.h});
    out.insert(out.end(), {&fusion1, &fusion2, &depth1, &depth2, &mask1, &mask2});
    return out;
  }
  std::vector<const ConvLayer*> layers() const {
    std::vector<const ConvLayer*> out;
    for (ConvLayer* l : const_cast<RefinerWeights*>(this)->layers()) out.push_back(l);
    return out;
  }
};

/// Gate biases for one GRU scale, each hidden×(H/q)×(W/q).
struct ScaleBiases {
  Tensor4 z;
  Tensor4 r;
  Tensor4 h;
};

/// Finest first, like kScales.
using ContextBiases = std::array<ScaleBiases, 3>;

inline void require_divisible(int height, int width) {
  require(height % 16 == 0 && width % 16 == 0, "refiner input dimensions must be divisible by 16");
}

/// Mean image → per-scale gate biases c_z, c_r, c_h.
inline ContextBiases context_encode(const Image& mean_img, const RefinerWeights& w) {
  require_divisible(mean_img.height(), mean_img.width());
  require(mean_img.channels() == w.config.input_channels, "mean image channels do not match the weights");
  Tensor4 x(1, mean_img.channels(), mean_img.height(), mean_img.width(),
            std::vector<double>(mean_img.values().begin(), mean_img.values().end()));
  x = relu(instance_norm(w.stem(x)));  // 1/2
  ContextBiases out;
  const int hid = w.config.hidden;
  for (int i = 0; i < 3; ++i) {
    x = w.stages[i](x);  // 1/4, 1/8, 1/16
    Tensor4 all = w.bias_heads[i](x);
    auto slice = [&](int part) {
      auto v = all.values().subspan(static_cast<std::size_t>(part) * hid * all.plane_size(),
                                    static_cast<std::size_t>(hid) * all.plane_size());
      return Tensor4(1, hid, all.height(), all.width(), std::vector<double>(v.begin(), v.end()));
    };
    out[i] = ScaleBiases{slice(0), slice(1), slice(2)};
  }
  return out;
}

/// U average-pooled to the finest GRU resolution (1/4).
inline Tensor4 pool_aggregation(const FocusAggregationMap& u) {
  require_divisible(u.height, u.width);
  Tensor4 t(1, u.depth(), u.height, u.width, u.values);
  return avg_pool(t, kScales[0]);
}

/// M = fusion stack applied to [D̂_{t−1}, U].
inline Tensor4 fuse_features(const Plane& prev_depth, const Tensor4& pooled_u, const RefinerWeights& w) {
  require(prev_depth.height() == pooled_u.height() && prev_depth.width() == pooled_u.width(),
          "depth and focus aggregation map sizes differ");
  const Tensor4 d = from_plane(prev_depth);
  Tensor4 m = w.fusion1(concat_channels({&d, &pooled_u}));
  if (w.config.fusion_activations) m = relu(std::move(m));
  m = w.fusion2(m);
  if (w.config.fusion_activations) m = relu(std::move(m));
  return m;
}

/// Gate values of one update, kept for inspection.
struct GateTrace {
  Tensor4 z;
  Tensor4 r;
  Tensor4 candidate;
};

/// One ConvGRU step:
///   z  = σ(conv([h, b]; W_z) + c_z)
///   r  = σ(conv([h, b]; W_r) + c_r)
///   h' = tanh(conv([r⊙h, b]; W_h) + c_h)
///   h_t = (1 − z)⊙h + z⊙h'
inline Tensor4 gru_update(const Tensor4& h_prev, const Tensor4& b, const ScaleBiases& biases, const GruWeights& w,
                          GateTrace* trace = nullptr) {
  require(h_prev.same_shape(biases.z) && h_prev.same_shape(biases.r) && h_prev.same_shape(biases.h),
          "hidden state and gate biases differ in shape");
  require(b.height() == h_prev.height() && b.width() == h_prev.width(), "auxiliary input size mismatch");
  const Tensor4 hb = concat_channels({&h_prev, &b});
  Tensor4 z = add(w.z(hb), biases.z);
  Tensor4 r = add(w.r(hb), biases.r);
  z = map(std::move(z), sigmoid);
  r = map(std::move(r), sigmoid);

  Tensor4 rh = h_prev;
  for (std::size_t i = 0; i < rh.count(); ++i) rh.values()[i] *= r.values()[i];
  const Tensor4 rhb = concat_channels({&rh, &b});
  Tensor4 cand = map(add(w.h(rhb), biases.h), [](double v) { return std::tanh(v); });

  Tensor4 h = h_prev;
  for (std::size_t i = 0; i < h.count(); ++i) {
    const double zi = z.values()[i];
    h.values()[i] = (1.0 - zi) * h_prev.values()[i] + zi * cand.values()[i];
  }
  if (trace != nullptr) *trace = GateTrace{std::move(z), std::move(r), std::move(cand)};
  return h;
}

/// Per-pixel softmax over the 9 neighbour logits for each of the factor²
/// sub-pixels. Logit channel k·16 + dy·4 + dx weights neighbour k (row-major
/// 3×3, k = 4 is the centre) for output sub-pixel (dy, dx).
inline Tensor4 convex_weights(const Tensor4& mask_logits) {
  require(mask_logits.depth() == 1 && mask_logits.channels() == kMaskChannels,
          "convex upsampling needs 9·factor² mask channels");
  Tensor4 out = mask_logits;
  const std::size_t plane = mask_logits.plane_size();
  constexpr int sub = kUpsampleFactor * kUpsampleFactor;
  for (std::size_t p = 0; p < plane; ++p)
    for (int s = 0; s < sub; ++s) {
      double hi = -std::numeric_limits<double>::infinity();
      for (int k = 0; k < 9; ++k) hi = std::max(hi, mask_logits.values()[(k * sub + s) * plane + p]);
      double sum = 0.0;
      for (int k = 0; k < 9; ++k) {
        double& v = out.values()[(k * sub + s) * plane + p];
        v = std::exp(v - hi);
        sum += v;
      }
      for (int k = 0; k < 9; ++k) out.values()[(k * sub + s) * plane + p] /= sum;
    }
  return out;
}

/// Full-resolution depth: each output pixel is a convex combination of the
/// 3×3 coarse neighbourhood (replicated borders) around its parent pixel.
inline Plane convex_upsample(const Plane& coarse, const Tensor4& mask_logits) {
  require(mask_logits.depth() == 1 && mask_logits.channels() == kMaskChannels,
          "convex upsampling needs 9·factor² mask channels");
  require(mask_logits.height() == coarse.height() && mask_logits.width() == coarse.width(),
          "mask and depth sizes differ");
  const Tensor4 weights = convex_weights(mask_logits);
  const int h = coarse.height();
  const int w = coarse.width();
  constexpr int f = kUpsampleFactor;
  Plane out(h * f, w * f);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int dy = 0; dy < f; ++dy)
        for (int dx = 0; dx < f; ++dx) {
          double acc = 0.0;
          for (int k = 0; k < 9; ++k) {
            const int ny = std::clamp(y + k / 3 - 1, 0, h - 1);
            const int nx = std::clamp(x + k % 3 - 1, 0, w - 1);
            acc += weights.at(k * f * f + dy * f + dx, y, x) * coarse(ny, nx);
          }
          out(y * f + dy, x * f + dx) = acc;
        }
  return out;
}

/// Range of every gate activation seen during a run.
struct GateStats {
  double z_min = std::numeric_limits<double>::infinity();
  double z_max = -std::numeric_limits<double>::infinity();
  double r_min = std::numeric_limits<double>::infinity();
  double r_max = -std::numeric_limits<double>::infinity();
  double candidate_min = std::numeric_limits<double>::infinity();
  double candidate_max = -std::numeric_limits<double>::infinity();
  double hidden_min = std::numeric_limits<double>::infinity();
  double hidden_max = -std::numeric_limits<double>::infinity();

  void observe(const GateTrace& t, const Tensor4& hidden) {
    auto update = [](std::span<const double> v, double& lo, double& hi) {
      for (double x : v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
    };
    update(t.z.values(), z_min, z_max);
    update(t.r.values(), r_min, r_max);
    update(t.candidate.values(), candidate_min, candidate_max);
    update(hidden.values(), hidden_min, hidden_max);
  }
};

struct RefineResult {
  DepthMap depth;                     ///< D̂_T, full resolution
  std::vector<DepthMap> intermediates;  ///< D̂_1 … D̂_T, full resolution
  Plane coarse_depth;                 ///< D̂_T at 1/4 resolution
  std::vector<Plane> updates;         ///< ΔD̂_1 … ΔD̂_T at 1/4 resolution
  GateStats gates;
};

inline Tensor4 predict_update(const Tensor4& hidden, const RefinerWeights& w) {
  return w.depth2(relu(w.depth1(hidden)));
}

inline Tensor4 predict_mask(const Tensor4& hidden, const RefinerWeights& w) {
  return w.mask2(relu(w.mask1(hidden)));
}

/// Runs T refinement iterations from D̂_0 = 0. Hidden states start at
/// tanh(c_h) of their scale. Each iteration updates GRU-16, GRU-8, then GRU-4;
/// the finest state predicts ΔD̂ and the upsampling mask.
inline RefineResult refine(const FocusAggregationMap& u, const ContextBiases& biases, int iterations,
                           const RefinerWeights& w) {
  require(iterations >= 1, "iterations must be >= 1");
  require_divisible(u.height, u.width);
  require(u.depth() == w.config.aggregation_depth, "focus aggregation depth does not match the weights");
  for (int i = 0; i < 3; ++i)
    require(biases[i].z.height() == u.height / kScales[i] && biases[i].z.width() == u.width / kScales[i] &&
                biases[i].z.channels() == w.config.hidden,
            "context biases do not match the input size");

  const Tensor4 pooled_u = pool_aggregation(u);
  std::array<Tensor4, 3> hidden;
  for (int i = 0; i < 3; ++i) hidden[i] = map(biases[i].h, [](double v) { return std::tanh(v); });

  RefineResult result;
  Plane depth(u.height / kScales[0], u.width / kScales[0], 0.0);
  GateTrace trace;
  for (int t = 0; t < iterations; ++t) {
    const Tensor4 m = fuse_features(depth, pooled_u, w);

    {
      const Tensor4 aux = avg_pool(hidden[1], 2);
      hidden[2] = gru_update(hidden[2], aux, biases[2], w.gru[2], &trace);
      result.gates.observe(trace, hidden[2]);
    }
    {
      const Tensor4 down = avg_pool(hidden[0], 2);
      const Tensor4 up = upsample2x(hidden[2]);
      hidden[1] = gru_update(hidden[1], concat_channels({&down, &up}), biases[1], w.gru[1], &trace);
      result.gates.observe(trace, hidden[1]);
    }
    {
      const Tensor4 up = upsample2x(hidden[1]);
      hidden[0] = gru_update(hidden[0], concat_channels({&m, &up}), biases[0], w.gru[0], &trace);
      result.gates.observe(trace, hidden[0]);
    }

    Plane delta = to_plane(predict_update(hidden[0], w));
    for (std::size_t i = 0; i < depth.size(); ++i) depth.values()[i] += delta.values()[i];
    result.updates.push_back(std::move(delta));
    result.intermediates.push_back(DepthMap{convex_upsample(depth, predict_mask(hidden[0], w)), DepthUnit::index});
  }
  result.coarse_depth = depth;
  result.depth = result.intermediates.back();
  return result;
}

/// L = Σ_t α^(T−t) · mean_p (gt(p) − D̂_t(p))².
inline double sequence_loss(std::span<const DepthMap> intermediates, const DepthMap& gt, double alpha = 0.9) {
  require(alpha > 0.0 && alpha <= 1.0, "alpha must lie in (0,1]");
  require(!intermediates.empty(), "no intermediate predictions");
  const std::size_t T = intermediates.size();
  double loss = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    const DepthMap& d = intermediates[t];
    require(d.height() == gt.height() && d.width() == gt.width(), "prediction and ground truth sizes differ");
    std::vector<double> sq(gt.values.size());
    for (std::size_t i = 0; i < sq.size(); ++i) {
      const double e = gt.values.values()[i] - d.values.values()[i];
      sq[i] = e * e;
    }
    loss += std::pow(alpha, static_cast<double>(T - 1 - t)) * pairwise_mean(sq);
  }
  return loss;
}

/// Everything the refiner consumes, derived from a focal stack.
struct RefinerInputs {
  Image mean;
  FocusAggregationMap aggregation;
};

/// Grayscale conversion, mean image and the R-rate aggregation map.
inline RefinerInputs prepare_inputs(const FocalStack& stack, int rates = 4, BorderPolicy border = BorderPolicy::replicate) {
  const FocalStack gray = to_grayscale(stack);
  const auto volumes = multiscale_volumes(gray, rates, border);
  return {mean_image(gray), aggregation_map(volumes)};
}

inline RefinerConfig config_for(const RefinerInputs& in) {
  RefinerConfig c;
  c.input_channels = in.mean.channels();
  c.aggregation_depth = in.aggregation.depth();
  return c;
}

}  // namespace ddlsff::refiner
