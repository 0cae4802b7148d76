#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "ddlsff/ddlsff.hpp"

using namespace ddlsff;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const std::function<Verdict()>& body) {
  Verdict v;
  const auto t0 = Clock::now();
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, " [%.2f s]", since(t0));
  if (!v.pass) ++failures;
  std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << title << " | " << v.detail << buf
            << std::endl;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

int sh(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string tool() { return SFFTOOL_PATH; }

fs::path scratch(const std::string& name) {
  std::random_device rd;
  const fs::path p = fs::temp_directory_path() / ("ddlsff_accept_" + name + "_" + std::to_string(rd()));
  fs::create_directories(p);
  return p;
}

bool is_provenance(const fs::path& p) {
  const std::string n = p.filename().string();
  return n == "run.json" || n.ends_with(".run.json");
}

/// Relative path -> bytes for every artifact below dir, run records excluded.
std::map<std::string, std::string> artifacts(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && !is_provenance(e.path()))
      out[fs::relative(e.path(), dir).string()] = io::read_file(e.path());
  return out;
}

synth::SynthScene default_scene(std::uint64_t seed) {
  synth::SynthSpec spec;
  spec.seed = seed;
  return synth::generate(spec);
}

DepthMap depth_of(const FocusVolume& fv) { return wta_depth(fv, DepthUnit::index); }

// 1
Verdict kernel_golden() {
  const std::vector<std::vector<int>> expect = {
      {1, -2, 1}, {1, 0, -2, 0, 1}, {1, 0, 0, -2, 0, 0, 1}, {1, 0, 0, 0, -2, 0, 0, 0, 1}};
  for (int r = 1; r <= 4; ++r)
    if (laplacian_1d(r) != expect[r - 1]) return {false, "laplacian_1d(" + std::to_string(r) + ") differs"};
  return {true, "r=1..4 match"};
}

// 2
Verdict convolution_identities() {
  std::vector<Kernel2D> kernels;
  for (int r = 1; r <= 4; ++r)
    for (Orientation o : kDirections) kernels.push_back(ddl_kernel(r, o));
  kernels.push_back(standard_laplacian());
  const int h = 40, w = 40;
  const Plane constant(h, w, 0.37);
  Plane ramp(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) ramp(y, x) = 0.01 * x - 0.02 * y + 0.3;
  double worst = 0.0;
  for (const auto& k : kernels) {
    for (BorderPolicy b : {BorderPolicy::replicate, BorderPolicy::reflect, BorderPolicy::zero}) {
      if (b == BorderPolicy::zero) continue;
      const Plane c = conv2d(constant, k, b);
      for (double v : c.values())
        if (v != 0.0) return {false, "non-zero response on a constant image"};
    }
    const Plane rr = conv2d(ramp, k);
    const int m = k.size / 2;
    for (int y = m; y < h - m; ++y)
      for (int x = m; x < w - m; ++x) worst = std::max(worst, std::abs(rr(y, x)));
  }
  if (worst >= 1e-9) return {false, "ramp interior max |v| = " + fmt(worst)};
  return {true, std::to_string(kernels.size()) + " kernels, ramp interior max |v| = " + fmt(worst)};
}

// 3
Verdict oracle_recovery() {
  const auto scene = default_scene(2024);
  const FocusVolume fv = ddl_focus_volume(to_grayscale(scene.stack), 1);
  const DepthMap d = depth_of(fv);
  const Mask mask = synth::interior_mask(scene.ground_truth, 5);
  const auto m = evaluate(d, scene.ground_truth, &mask, 0.5);
  return {m.rms <= 0.5, "RMSE " + fmt(m.rms) + " over " + std::to_string(m.valid_pixel_count) + " pixels (<= 0.5)"};
}

// 4
Verdict noise_trend() {
  std::string detail;
  bool pass = true;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto scene = default_scene(seed);
    const FocalStack noisy = apply_noise(scene.stack, NoiseSpec{NoiseKind::gaussian, 1e-4, 100 + seed});
    const auto volumes = multiscale_volumes(to_grayscale(noisy), 4);
    const DepthMap g1 = depth_of(cumulative_variant(volumes, 1));
    const DepthMap g4 = depth_of(cumulative_variant(volumes, 4));
    const auto m1 = evaluate(g1, scene.ground_truth, 0.5);
    const auto m4 = evaluate(g4, scene.ground_truth, 0.5);
    const bool ok = m4.rms <= m1.rms && m4.corr >= m1.corr;
    pass = pass && ok;
    detail += "seed " + std::to_string(seed) + ": RMSE " + fmt(m1.rms) + "->" + fmt(m4.rms) + " CORR " +
              fmt(m1.corr) + "->" + fmt(m4.corr) + (ok ? "" : " (violated)") + "; ";
  }
  return {pass, detail};
}

// 5
Verdict noise_statistics() {
  const Image clean(256, 256, 1, 0.5);
  const Image sp = apply_noise(clean, NoiseSpec{NoiseKind::salt_pepper, 0.005, 42}, 0);
  std::size_t hit = 0;
  for (double v : sp.values()) hit += v != 0.5;
  const double frac = static_cast<double>(hit) / static_cast<double>(clean.values().size());

  const Image mid(64, 64, 1, 0.5);
  const Image g = apply_noise(mid, NoiseSpec{NoiseKind::gaussian, 1e-4, 43}, 0);
  std::vector<double> dev;
  for (double v : g.values()) dev.push_back(v - 0.5);
  const double mean = pairwise_mean(dev);
  std::vector<double> sq;
  for (double d : dev) sq.push_back((d - mean) * (d - mean));
  const double var = pairwise_mean(sq);

  const bool pass = frac >= 0.0035 && frac <= 0.0065 && var >= 0.8e-4 && var <= 1.2e-4;
  return {pass, "S&P fraction " + fmt(frac) + " in [0.0035, 0.0065]; Gaussian variance " + fmt(var) + " over " +
                    std::to_string(dev.size()) + " samples in [8e-05, 1.2e-04]"};
}

// 6
Verdict metrics_consistency() {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.5, 10.0);
  Plane gtp(32, 32);
  for (double& v : gtp.values()) v = u(rng);
  const DepthMap gt{gtp, DepthUnit::index};
  const auto same = evaluate(gt, gt, 0.5);
  if (same.mae != 0.0 || same.mse != 0.0 || same.rms != 0.0 || same.log_rms != 0.0 || same.abs_rel != 0.0 ||
      same.sq_rel != 0.0 || same.badpix != 0.0)
    return {false, "pred=gt error metrics not zero"};
  if (same.acc_125 != 100.0 || same.acc_125_2 != 100.0 || same.acc_125_3 != 100.0)
    return {false, "pred=gt accuracies not 100"};
  if (same.corr != 1.0) return {false, "pred=gt CORR = " + fmt(same.corr)};

  double worst_rel = 0.0;
  for (int pair = 0; pair < 100; ++pair) {
    Plane a(16, 16), b(16, 16);
    for (double& v : a.values()) v = u(rng);
    for (double& v : b.values()) v = u(rng);
    const auto m = evaluate(DepthMap{a, DepthUnit::index}, DepthMap{b, DepthUnit::index}, 1.0);
    if (!(m.acc_125 <= m.acc_125_2 && m.acc_125_2 <= m.acc_125_3))
      return {false, "accuracy thresholds not monotone on pair " + std::to_string(pair)};
    worst_rel = std::max(worst_rel, std::abs(m.rms * m.rms - m.mse) / m.mse);
  }
  if (worst_rel > 1e-9) return {false, "RMS^2 vs MSE relative error " + fmt(worst_rel)};
  return {true, "identity exact, 100 pairs monotone, max |RMS^2-MSE|/MSE = " + fmt(worst_rel)};
}

// 7
Verdict refiner_invariants() {
  using namespace refiner;
  const auto scene = default_scene(7);
  const RefinerInputs in = prepare_inputs(scene.stack);
  const RefinerWeights w = RefinerWeights::generate(config_for(in), 77);
  const ContextBiases biases = context_encode(in.mean, w);

  set_num_threads(1);
  auto t0 = Clock::now();
  const RefineResult a = refine(in.aggregation, biases, 8, w);
  const double t8 = since(t0);
  set_num_threads(8);
  const RefineResult b = refine(in.aggregation, biases, 8, w);
  set_num_threads(0);

  std::vector<std::string> bad;
  const GateStats& g = a.gates;
  if (!(g.z_min > 0.0 && g.z_max < 1.0 && g.r_min > 0.0 && g.r_max < 1.0)) bad.push_back("(a) gates");

  // Convex weights on the mask predicted from a real hidden state.
  const Tensor4 hidden = map(biases[0].h, [](double v) { return std::tanh(v); });
  const Tensor4 cw = convex_weights(predict_mask(hidden, w));
  double worst_sum = 0.0;
  const int groups = cw.channels() / 9;
  for (int y = 0; y < cw.height(); ++y)
    for (int x = 0; x < cw.width(); ++x)
      for (int s = 0; s < groups; ++s) {
        double sum = 0.0;
        for (int k = 0; k < 9; ++k) sum += cw.at(k * groups + s, y, x);
        worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
      }
  if (worst_sum > 1e-6) bad.push_back("(b) weight sum");
  const Plane& coarse = a.coarse_depth;
  const int f = kUpsampleFactor;
  bool bounded = true;
  for (int y = 0; y < a.depth.height(); ++y)
    for (int x = 0; x < a.depth.width(); ++x) {
      const int cy = y / f, cx = x / f;
      double lo = std::numeric_limits<double>::infinity(), hi = -lo;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const double v = coarse(std::clamp(cy + dy, 0, coarse.height() - 1), std::clamp(cx + dx, 0, coarse.width() - 1));
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
      const double v = a.depth.values(y, x);
      if (v < lo - 1e-12 || v > hi + 1e-12) bounded = false;
    }
  if (!bounded) bad.push_back("(b) bounds");

  RefinerWeights zero = w;
  std::fill(zero.depth2.weights.begin(), zero.depth2.weights.end(), 0.0);
  std::fill(zero.depth2.bias.begin(), zero.depth2.bias.end(), 0.0);
  const RefineResult z = refine(in.aggregation, biases, 8, zero);
  if (!std::all_of(z.depth.values.values().begin(), z.depth.values.values().end(), [](double v) { return v == 0.0; }))
    bad.push_back("(c) zero head");

  Plane sum(coarse.height(), coarse.width(), 0.0);
  for (const Plane& d : a.updates)
    for (std::size_t i = 0; i < sum.size(); ++i) sum.values()[i] += d.values()[i];
  if (sum != coarse) bad.push_back("(d) telescoping");

  if (!(a.depth.values == b.depth.values && a.coarse_depth == b.coarse_depth)) bad.push_back("(e) threads");
  if (t8 >= 10.0) bad.push_back("T=8 runtime");

  t0 = Clock::now();
  const RefineResult full = refine(in.aggregation, biases, 32, w);
  const double t32 = since(t0);
  const bool finite = std::all_of(full.depth.values.values().begin(), full.depth.values.values().end(),
                                  [](double v) { return std::isfinite(v); });
  if (!finite || full.intermediates.size() != 32) bad.push_back("T=32 run");

  std::string detail = "z in [" + fmt(g.z_min) + ", " + fmt(g.z_max) + "], r in [" + fmt(g.r_min) + ", " +
                       fmt(g.r_max) + "], max |sum-1| " + fmt(worst_sum) + ", T=8 " + fmt(t8) + " s, T=32 " +
                       fmt(t32) + " s";
  for (const auto& s : bad) detail += "; failed " + s;
  return {bad.empty(), detail};
}

// 8
Verdict loss_weighting() {
  const DepthMap gt{Plane(4, 4, 0.0), DepthUnit::index};
  const std::vector<DepthMap> preds = {DepthMap{Plane(4, 4, 2.0), DepthUnit::index},
                                       DepthMap{Plane(4, 4, 1.0), DepthUnit::index}};
  const double loss = refiner::sequence_loss(preds, gt, 0.9);
  return {std::abs(loss - 4.6) < 1e-12, "loss " + fmt(loss) + " (expected 4.6)"};
}

// 9
Verdict performance() {
  synth::SynthSpec spec;
  spec.height = 256;
  spec.width = 256;
  spec.slices = 5;
  spec.seed = 9;
  const auto scene = synth::generate(spec);
  const FocalStack gray = to_grayscale(scene.stack);
  set_num_threads(0);
  (void)multiscale_volumes(gray, 4);
  std::vector<double> times;
  for (int i = 0; i < 7; ++i) {
    const auto t0 = Clock::now();
    const auto v = multiscale_volumes(gray, 4);
    times.push_back(since(t0));
    if (v.size() != 4) return {false, "expected 4 volumes"};
  }
  std::sort(times.begin(), times.end());
  const double median = times[times.size() / 2];

  const fs::path dir = scratch("perf");
  io::write_stack(dir / "stack", scene.stack);
  const int code = sh(tool() + " timeit --reps 5 fv --manifest " + (dir / "stack" / "manifest.json").string() +
                      " --r 4 --cumulative --out " + (dir / "fv").string() + " >/dev/null 2>&1");
  double cli_compute = -1.0;
  if (code == 0) {
    const json rec = json::parse(io::read_file(dir / "fv" / "run.json"));
    cli_compute = rec["timeit"][0]["compute_mean_s"].get<double>();
  }
  fs::remove_all(dir);
  const bool pass = median <= 0.1 && code == 0 && cli_compute >= 0.0 && cli_compute <= 0.1;
  return {pass, "in-process median " + fmt(median * 1e3) + " ms, timeit compute mean " + fmt(cli_compute * 1e3) +
                    " ms over 5 reps (budget 100 ms, " + std::to_string(num_threads()) + " threads)"};
}

// 10
Verdict determinism() {
  const fs::path root = scratch("determinism");
  const fs::path base = root / "base";
  const std::string t = tool();
  auto q = [](const fs::path& p) { return "'" + p.string() + "'"; };
  const std::string m = q(base / "manifest.json");
  if (sh(t + " --seed 1 synth --h 32 --w 32 --s 6 --out " + q(base) + " >/dev/null 2>&1") != 0)
    return {false, "base synth failed"};
  if (sh(t + " fv --manifest " + m + " --r 2 --out " + q(root / "base_fv") + " >/dev/null 2>&1") != 0 ||
      sh(t + " depth --manifest " + m + " --out " + q(root / "base_pred.pfm") + " >/dev/null 2>&1") != 0)
    return {false, "base inputs failed"};

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"synth", "synth --h 32 --w 32 --s 6 --pattern slant --texture checker --out {V}/synth"},
      {"fv", "fv --manifest " + m + " --r 3 --cumulative --out {V}/fv"},
      {"fv laplacian", "fv --manifest " + m + " --measure laplacian --out {V}/fv_lap"},
      {"depth", "depth --manifest " + m + " --r 2 --unit dist --out {V}/depth.pfm"},
      {"depth png", "depth --fv " + q(root / "base_fv") + " --out {V}/depth.png"},
      {"aif", "aif --manifest " + m + " --depth " + q(base / "gt.pfm") + " --out {V}/aif.png"},
      {"fmcurve", "fmcurve --fv " + q(root / "base_fv") + " --px 3,4 --gt " + q(base / "gt.pfm") +
                      " --out {V}/curve.csv"},
      {"noise gaussian", "noise --manifest " + m + " --kind gaussian --param 0.0001 --out {V}/noise_g"},
      {"noise salt_pepper", "noise --manifest " + m + " --kind salt_pepper --param 0.005 --out {V}/noise_sp"},
      {"noise speckle", "noise --manifest " + m + " --kind speckle --param 0.01 --out {V}/noise_sk"},
      {"eval", "eval --pred " + q(root / "base_pred.pfm") + " --gt " + q(base / "gt.pfm") + " --out {V}/report.json"},
      {"refine", "refine --manifest " + m + " --iters 3 --save-weights {V}/w.bin --dump-intermediates {V}/iters"
                 " --out {V}/refined.pfm"},
      {"pipeline", "pipeline --manifest " + m + " --eval " + q(base / "gt.pfm") + " --out {V}/pipe"},
      {"kernels dump", "kernels dump --r 3 --theta 135 > {V}/kernel.txt"},
      {"timeit", "timeit --reps 2 depth --manifest " + m + " --out {V}/timed.pfm"},
  };

  const std::vector<std::pair<std::string, int>> variants = {{"a", 1}, {"b", 1}, {"c", 8}, {"d", 8}};
  for (const auto& [name, threads] : variants) {
    const fs::path v = root / name;
    fs::create_directories(v);
    for (const auto& [label, cmd] : commands) {
      std::string line = cmd;
      for (std::size_t p; (p = line.find("{V}")) != std::string::npos;) line.replace(p, 3, q(v));
      const std::string full = t + " --threads " + std::to_string(threads) + " --seed 17 " + line;
      const bool to_stdout = line.find(" > ") != std::string::npos;
      if (sh(full + (to_stdout ? " 2>/dev/null" : " >/dev/null 2>&1")) != 0) {
        fs::remove_all(root);
        return {false, label + " failed (" + name + ")"};
      }
    }
  }

  const auto ref = artifacts(root / "a");
  std::string detail;
  bool pass = true;
  for (const auto& [name, threads] : variants) {
    if (name == "a") continue;
    const auto other = artifacts(root / name);
    if (other.size() != ref.size()) {
      pass = false;
      detail += name + ": artifact count differs; ";
      continue;
    }
    for (const auto& [rel, bytes] : ref) {
      const auto it = other.find(rel);
      if (it == other.end() || it->second != bytes) {
        pass = false;
        detail += name + ": " + rel + " differs; ";
      }
    }
  }
  fs::remove_all(root);
  if (pass)
    detail = std::to_string(commands.size()) + " command lines, " + std::to_string(ref.size()) +
             " artifacts identical over 2 runs at 1 thread and 2 runs at 8 threads";
  return {pass, detail};
}

}  // namespace

int main() {
  report(1, "kernel golden values", kernel_golden);
  report(2, "analytic convolution identities", convolution_identities);
  report(3, "oracle depth recovery", oracle_recovery);
  report(4, "noise-robustness trend", noise_trend);
  report(5, "noise statistics", noise_statistics);
  report(6, "metrics self-consistency", metrics_consistency);
  report(7, "refiner invariants", refiner_invariants);
  report(8, "loss weighting", loss_weighting);
  report(9, "performance budget", performance);
  report(10, "determinism suite", determinism);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
