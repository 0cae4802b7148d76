#pragma once

// sfftool: every pipeline behind one command. run() maps errors to exit
// codes: 0 ok, 1 invalid input or arguments, 2 file-system / decode failure.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ddlsff/ddlsff.hpp"

namespace ddlsff::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Globals {
  int threads = 0;
  std::uint64_t seed = 0;
  bool verbose = false;
};

/// Help or version output was printed; nothing else to do.
struct ExitRequest {
  int code = 0;
};

/// What a finished command leaves behind.
struct Outcome {
  std::string command;
  fs::path run_json;         ///< empty for commands that only print
  double compute_seconds = 0.0;  ///< the core operation, without I/O
};

/// Provenance written next to (file outputs) or inside (directory outputs)
/// every artifact.
class RunRecord {
 public:
  RunRecord(std::string command, const std::vector<std::string>& argv, const Globals& g, const CLI::App* sub)
      : command_(std::move(command)), start_(Clock::now()) {
    j_["tool"] = "sfftool";
    j_["version"] = DDLSFF_VERSION;
    j_["command"] = command_;
    j_["argv"] = argv;
    j_["seed"] = g.seed;
    j_["threads"] = g.threads;
    j_["threads_effective"] = num_threads();
    j_["verbose"] = g.verbose;
    json flags = json::object();
    if (sub) {
      for (const CLI::Option* opt : sub->get_options()) {
        if (opt->count() == 0 || opt->get_name() == "--help") continue;
        std::string name = opt->get_name();
        while (!name.empty() && name.front() == '-') name.erase(name.begin());
        const auto& res = opt->results();
        if (res.empty() || !opt->get_expected_min())
          flags[name] = true;
        else if (res.size() == 1)
          flags[name] = res.front();
        else
          flags[name] = res;
      }
    }
    j_["flags"] = flags;
    j_["inputs"] = json::array();
    j_["outputs"] = json::array();
  }

  void input(const fs::path& p) { j_["inputs"].push_back(p.generic_string()); }
  void output(const fs::path& p) { j_["outputs"].push_back(p.generic_string()); }
  json& extra() { return j_; }

  /// `dir` set: DIR/run.json; otherwise <file>.run.json.
  Outcome finish(const fs::path& target, bool is_dir, double compute_seconds) {
    j_["compute_time_s"] = compute_seconds;
    j_["wall_time_s"] = seconds_since(start_);
    fs::path where = target;
    if (is_dir)
      where /= "run.json";
    else
      where += ".run.json";
    io::write_file_atomic(where, j_.dump(2) + "\n");
    return {command_, where, compute_seconds};
  }

 private:
  std::string command_;
  Clock::time_point start_;
  json j_;
};

inline DepthUnit unit_arg(const std::string& s) { return parse_depth_unit(s); }

/// "X,Y" → (x, y).
inline std::pair<int, int> parse_pixel(const std::string& s) {
  const auto comma = s.find(',');
  require(comma != std::string::npos, "--px expects X,Y");
  try {
    std::size_t used = 0;
    const int x = std::stoi(s.substr(0, comma), &used);
    require(used == comma, "--px expects X,Y");
    const std::string rest = s.substr(comma + 1);
    const int y = std::stoi(rest, &used);
    require(used == rest.size(), "--px expects X,Y");
    return {x, y};
  } catch (const std::logic_error&) {
    throw ValidationError("--px expects two integers X,Y, got '" + s + "'");
  }
}

/// Focus volume choice shared by fv, depth and pipeline.
struct VolumeArgs {
  int r = 1;
  bool cumulative = false;
  std::string measure = "ddl";
  std::string border = "replicate";

  void add_to(CLI::App* sub) {
    sub->add_option("--r", r, "dilation rate (with --cumulative: rates 1..R)")->check(CLI::PositiveNumber);
    sub->add_flag("--cumulative", cumulative, "average the DDL volumes of rates 1..R");
    sub->add_option("--measure", measure, "ddl or laplacian")->check(CLI::IsMember({"ddl", "laplacian"}));
    sub->add_option("--border", border, "replicate, reflect or zero")
        ->check(CLI::IsMember({"replicate", "reflect", "zero"}));
  }

  void validate() const {
    require(r >= 1, "--r must be >= 1");
    require(!(cumulative && measure == "laplacian"), "--cumulative applies to the ddl measure only");
  }

  FocusVolume compute(const FocalStack& gray) const {
    const BorderPolicy b = parse_border(border);
    if (measure == "laplacian") return laplacian_focus_volume(gray, b);
    if (!cumulative) return ddl_focus_volume(gray, r, b);
    const auto volumes = multiscale_volumes(gray, r, b);
    return cumulative_variant(volumes, r);
  }
};

class Tool {
 public:
  Tool(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  /// Parses and runs one command line (without the program name).
  Outcome execute(const std::vector<std::string>& args) {
    CLI::App app{"Shape-from-focus toolkit built on directional dilated Laplacian focus volumes", "sfftool"};
    app.set_version_flag("--version", DDLSFF_VERSION);
    app.require_subcommand(1, 1);
    app.fallthrough();
    Globals g;
    app.add_option("--threads", g.threads, "worker threads (0 = all logical cores)")->check(CLI::NonNegativeNumber);
    app.add_option("--seed", g.seed, "seed for every random draw");
    app.add_flag("--verbose,-v", g.verbose, "progress on standard error");

    std::function<Outcome()> action;
    CLI::App* chosen = nullptr;
    auto bind = [&](CLI::App* sub, std::function<Outcome(const Globals&, CLI::App*)> fn) {
      sub->callback([&, sub, fn] {
        chosen = sub;
        action = [&, sub, fn] { return fn(g, sub); };
      });
    };

    // kernels dump
    auto* kernels = app.add_subcommand("kernels", "kernel utilities");
    kernels->require_subcommand(1, 1);
    auto* dump = kernels->add_subcommand("dump", "print a kernel as a text matrix");
    int k_r = 1;
    std::string k_theta = "0";
    bool k_lap = false;
    dump->add_option("--r", k_r, "dilation rate")->check(CLI::PositiveNumber);
    dump->add_option("--theta", k_theta, "0, 45, 90 or 135");
    dump->add_flag("--laplacian", k_lap, "print the standard 3x3 Laplacian instead");
    bind(dump, [&](const Globals&, CLI::App*) {
      const Kernel2D k = k_lap ? standard_laplacian() : ddl_kernel(k_r, parse_orientation(k_theta));
      out_ << format_kernel(k);
      return Outcome{"kernels dump", {}, 0.0};
    });

    // fv
    auto* fv = app.add_subcommand("fv", "compute a focus volume");
    std::string fv_manifest, fv_out;
    VolumeArgs fv_args;
    fv->add_option("--manifest", fv_manifest, "stack manifest")->required();
    fv_args.add_to(fv);
    fv->add_option("--out", fv_out, "output directory")->required();
    bind(fv, [&](const Globals& gl, CLI::App* sub) {
      fv_args.validate();
      RunRecord rec("fv", args, gl, sub);
      rec.input(fv_manifest);
      const FocalStack gray = to_grayscale(io::load_stack(io::read_manifest(fv_manifest)));
      const auto t0 = Clock::now();
      const FocusVolume vol = fv_args.compute(gray);
      const double compute = seconds_since(t0);
      for (const auto& p : io::write_volume_dir(fv_out, vol, gray.focal_distances())) rec.output(p);
      rec.extra()["source"] = vol.source().describe();
      return rec.finish(fv_out, true, compute);
    });

    // depth
    auto* depth = app.add_subcommand("depth", "winner-takes-all depth map");
    std::string d_fv, d_manifest, d_unit = "index", d_out;
    VolumeArgs d_args;
    auto* d_fv_opt = depth->add_option("--fv", d_fv, "focus volume directory");
    auto* d_man_opt = depth->add_option("--manifest", d_manifest, "stack manifest");
    d_fv_opt->excludes(d_man_opt);
    d_args.add_to(depth);
    depth->add_option("--unit", d_unit, "index or dist")->check(CLI::IsMember({"index", "dist", "focal-distance"}));
    depth->add_option("--out", d_out, "output depth map (.pfm or .png)")->required();
    bind(depth, [&](const Globals& gl, CLI::App* sub) {
      require(!d_fv.empty() || !d_manifest.empty(), "depth needs --fv or --manifest");
      d_args.validate();
      const DepthUnit unit = unit_arg(d_unit);
      io::depth_format_for(d_out);
      RunRecord rec("depth", args, gl, sub);
      FocusVolume vol;
      std::vector<double> distances;
      if (!d_fv.empty()) {
        rec.input(d_fv);
        auto stored = io::read_volume_dir(d_fv);
        vol = std::move(stored.volume);
        distances = std::move(stored.focal_distances);
      } else {
        rec.input(d_manifest);
        const FocalStack gray = to_grayscale(io::load_stack(io::read_manifest(d_manifest)));
        vol = d_args.compute(gray);
        distances = gray.focal_distances();
      }
      const auto t0 = Clock::now();
      const DepthMap dm = wta_depth(vol, unit, distances);
      const double compute = seconds_since(t0);
      io::write_depth(dm, d_out);
      rec.output(d_out);
      rec.extra()["unit"] = std::string(to_string(unit));
      return rec.finish(d_out, false, compute);
    });

    // aif
    auto* aif = app.add_subcommand("aif", "all-in-focus composite");
    std::string a_manifest, a_depth, a_out, a_unit = "index";
    int a_bits = 16;
    aif->add_option("--manifest", a_manifest, "stack manifest")->required();
    aif->add_option("--depth", a_depth, "depth map")->required();
    aif->add_option("--unit", a_unit, "unit of the depth map: index or dist")
        ->check(CLI::IsMember({"index", "dist", "focal-distance"}));
    aif->add_option("--bits", a_bits, "PNG bit depth")->check(CLI::IsMember({8, 16}));
    aif->add_option("--out", a_out, "output image (.png or .pgm)")->required();
    bind(aif, [&](const Globals& gl, CLI::App* sub) {
      const DepthUnit unit = unit_arg(a_unit);
      RunRecord rec("aif", args, gl, sub);
      rec.input(a_manifest);
      rec.input(a_depth);
      const FocalStack stack = io::load_stack(io::read_manifest(a_manifest));
      DepthMap dm = io::read_depth(a_depth, unit);
      if (unit == DepthUnit::focal_distance) dm = nearest_index(dm, stack.focal_distances());
      const auto t0 = Clock::now();
      const Image img = all_in_focus(stack, dm);
      const double compute = seconds_since(t0);
      io::write_image(a_out, img, a_bits);
      rec.output(a_out);
      return rec.finish(a_out, false, compute);
    });

    // fmcurve
    auto* fmc = app.add_subcommand("fmcurve", "focus measure curve at one pixel");
    std::string c_fv, c_px, c_out, c_gt;
    fmc->add_option("--fv", c_fv, "focus volume directory")->required();
    fmc->add_option("--px", c_px, "pixel as X,Y")->required();
    fmc->add_option("--gt", c_gt, "ground-truth depth (index units) to mark");
    fmc->add_option("--out", c_out, "output CSV")->required();
    bind(fmc, [&](const Globals& gl, CLI::App* sub) {
      const auto [x, y] = parse_pixel(c_px);
      RunRecord rec("fmcurve", args, gl, sub);
      rec.input(c_fv);
      const auto stored = io::read_volume_dir(c_fv);
      std::optional<DepthMap> gt;
      if (!c_gt.empty()) {
        rec.input(c_gt);
        gt = io::read_depth(c_gt, DepthUnit::index);
      }
      const FMCurve curve = fm_curve(stored.volume, x, y, gt ? &*gt : nullptr);
      io::write_file_atomic(c_out, fm_curve_csv(curve));
      rec.output(c_out);
      rec.extra()["argmax_index"] = curve.argmax_index;
      if (curve.gt_index) rec.extra()["gt_index"] = *curve.gt_index;
      return rec.finish(c_out, false, 0.0);
    });

    // noise
    auto* noise = app.add_subcommand("noise", "corrupt a focal stack");
    std::string n_manifest, n_kind = "gaussian", n_out;
    double n_param = 1e-4;
    noise->add_option("--manifest", n_manifest, "stack manifest")->required();
    noise->add_option("--kind", n_kind, "gaussian, salt-pepper or speckle")->required();
    noise->add_option("--param", n_param, "variance (gaussian, speckle) or density (salt-pepper)")->required();
    noise->add_option("--out", n_out, "output directory")->required();
    bind(noise, [&](const Globals& gl, CLI::App* sub) {
      const NoiseSpec spec{parse_noise_kind(n_kind), n_param, gl.seed};
      spec.validate();
      RunRecord rec("noise", args, gl, sub);
      rec.input(n_manifest);
      const io::StackManifest in = io::read_manifest(n_manifest);
      const FocalStack stack = io::load_stack(in);
      const auto t0 = Clock::now();
      const FocalStack noisy = apply_noise(stack, spec);
      const double compute = seconds_since(t0);
      const io::StackManifest m = io::write_stack(n_out, noisy);
      json mj = io::manifest_json(m, n_out);
      mj["noise"] = {{"kind", std::string(to_string(spec.kind))}, {"param", spec.param}, {"seed", spec.seed},
                     {"rng", Philox4x32::kAlgorithm}};
      io::write_file_atomic(fs::path(n_out) / "manifest.json", mj.dump(2) + "\n");
      for (const auto& p : m.image_paths) rec.output(p);
      rec.output(fs::path(n_out) / "manifest.json");
      rec.extra()["rng"] = Philox4x32::kAlgorithm;
      return rec.finish(n_out, true, compute);
    });

    // eval
    auto* ev = app.add_subcommand("eval", "compare a depth map with ground truth");
    std::string e_pred, e_gt, e_mask, e_out, e_unit = "index";
    std::optional<double> e_t;
    ev->add_option("--pred", e_pred, "predicted depth")->required();
    ev->add_option("--gt", e_gt, "ground-truth depth")->required();
    ev->add_option("--mask", e_mask, "valid-pixel mask image (nonzero = valid)");
    ev->add_option("--badpix-t", e_t, "BadPix threshold (default: 0.07 x ground-truth range)");
    ev->add_option("--unit", e_unit, "unit of both maps: index or dist")
        ->check(CLI::IsMember({"index", "dist", "focal-distance"}));
    ev->add_option("--out", e_out, "output JSON report")->required();
    bind(ev, [&](const Globals& gl, CLI::App* sub) {
      const DepthUnit unit = unit_arg(e_unit);
      if (e_t) require(std::isfinite(*e_t) && *e_t > 0.0, "--badpix-t must be > 0");
      RunRecord rec("eval", args, gl, sub);
      rec.input(e_pred);
      rec.input(e_gt);
      const DepthMap pred = io::read_depth(e_pred, unit);
      const DepthMap gt = io::read_depth(e_gt, unit);
      std::optional<Mask> mask;
      if (!e_mask.empty()) {
        rec.input(e_mask);
        mask = io::read_mask(e_mask);
      }
      const Mask* mp = mask ? &*mask : nullptr;
      const double t = e_t ? *e_t : default_badpix_threshold(gt, mp);
      const auto t0 = Clock::now();
      const MetricsReport r = evaluate(pred, gt, mp, t);
      const double compute = seconds_since(t0);
      json j = report_json(r);
      j["unit"] = std::string(to_string(unit));
      io::write_file_atomic(e_out, j.dump(2) + "\n");
      for (const auto& w : r.warnings) err_ << "warning: " << w << "\n";
      rec.output(e_out);
      return rec.finish(e_out, false, compute);
    });

    // refine
    auto* ref = app.add_subcommand("refine", "recurrent refinement with seeded weights");
    std::string r_manifest, r_out, r_dump, r_weights, r_save;
    int r_iters = 32, r_rates = 4;
    ref->add_option("--manifest", r_manifest, "stack manifest")->required();
    ref->add_option("--iters", r_iters, "refinement iterations")->check(CLI::PositiveNumber);
    ref->add_option("--rates", r_rates, "dilation rates in the aggregation map")->check(CLI::PositiveNumber);
    ref->add_option("--weights", r_weights, "load weights instead of generating them from --seed");
    ref->add_option("--save-weights", r_save, "write the weights used");
    ref->add_option("--dump-intermediates", r_dump, "directory for every intermediate depth map");
    ref->add_option("--out", r_out, "output depth map (.pfm or .png)")->required();
    bind(ref, [&](const Globals& gl, CLI::App* sub) {
      io::depth_format_for(r_out);
      RunRecord rec("refine", args, gl, sub);
      rec.input(r_manifest);
      const FocalStack stack = io::load_stack(io::read_manifest(r_manifest));
      const auto t0 = Clock::now();
      const refiner::RefinerInputs in = refiner::prepare_inputs(stack, r_rates);
      refiner::RefinerWeights w;
      if (!r_weights.empty()) {
        rec.input(r_weights);
        w = refiner::load_weights(r_weights);
        require(w.config == refiner::config_for(in), "weights were made for a different input layout");
      } else {
        w = refiner::RefinerWeights::generate(refiner::config_for(in), gl.seed);
      }
      const auto biases = refiner::context_encode(in.mean, w);
      const refiner::RefineResult res = refiner::refine(in.aggregation, biases, r_iters, w);
      const double compute = seconds_since(t0);
      if (gl.verbose)
        err_ << "refine: " << r_iters << " iterations in " << compute << " s; z in [" << res.gates.z_min << ", "
             << res.gates.z_max << "]\n";
      io::write_depth(res.depth, r_out);
      rec.output(r_out);
      if (!r_save.empty()) {
        refiner::save_weights(r_save, w);
        rec.output(r_save);
      }
      if (!r_dump.empty()) {
        for (std::size_t t = 0; t < res.intermediates.size(); ++t) {
          char name[32];
          std::snprintf(name, sizeof name, "iter_%03zu.pfm", t + 1);
          io::write_depth(res.intermediates[t], fs::path(r_dump) / name);
          rec.output(fs::path(r_dump) / name);
        }
      }
      rec.extra()["weights_seed"] = w.seed;
      rec.extra()["iterations"] = r_iters;
      rec.extra()["gates"] = {{"z", {res.gates.z_min, res.gates.z_max}},
                              {"r", {res.gates.r_min, res.gates.r_max}},
                              {"candidate", {res.gates.candidate_min, res.gates.candidate_max}}};
      return rec.finish(r_out, false, compute);
    });

    // synth
    auto* syn = app.add_subcommand("synth", "synthetic focal stack with ground truth");
    syn->set_help_flag("--help", "print this help message and exit");
    synth::SynthSpec s_spec;
    std::string s_pattern = "staircase", s_texture = "noise", s_out;
    syn->add_option("--h", s_spec.height, "height")->check(CLI::PositiveNumber);
    syn->add_option("--w", s_spec.width, "width")->check(CLI::PositiveNumber);
    syn->add_option("--s", s_spec.slices, "slices");
    syn->add_option("--pattern", s_pattern, "staircase, slant or checker");
    syn->add_option("--texture", s_texture, "noise or checker");
    syn->add_option("--steps", s_spec.steps, "staircase bands");
    syn->add_option("--blur", s_spec.blur_scale, "blur sigma per slice of focus error");
    syn->add_option("--contrast", s_spec.contrast, "texture contrast in (0,1]");
    syn->add_option("--out", s_out, "output directory")->required();
    bind(syn, [&](const Globals& gl, CLI::App* sub) {
      s_spec.pattern = synth::parse_pattern(s_pattern);
      s_spec.texture = synth::parse_texture(s_texture);
      s_spec.seed = gl.seed;
      s_spec.validate();
      RunRecord rec("synth", args, gl, sub);
      const auto t0 = Clock::now();
      const synth::SynthScene scene = synth::generate(s_spec);
      const double compute = seconds_since(t0);
      const io::StackManifest m = io::write_stack(s_out, scene.stack);
      for (const auto& p : m.image_paths) rec.output(p);
      rec.output(fs::path(s_out) / "manifest.json");
      io::write_depth(scene.ground_truth, fs::path(s_out) / "gt.pfm");
      rec.output(fs::path(s_out) / "gt.pfm");
      rec.extra()["rng"] = Philox4x32::kAlgorithm;
      return rec.finish(s_out, true, compute);
    });

    // pipeline
    auto* pipe = app.add_subcommand("pipeline", "manifest -> focus volume -> depth -> all-in-focus -> metrics");
    std::string p_manifest, p_eval, p_mask, p_out = "pipeline_out", p_unit = "index";
    std::optional<double> p_t;
    VolumeArgs p_args;
    p_args.r = 4;
    pipe->add_option("--manifest", p_manifest, "stack manifest")->required();
    p_args.add_to(pipe);
    pipe->add_option("--unit", p_unit, "depth unit: index or dist")
        ->check(CLI::IsMember({"index", "dist", "focal-distance"}));
    pipe->add_option("--eval", p_eval, "ground-truth depth (tried relative to the manifest too)");
    pipe->add_option("--mask", p_mask, "valid-pixel mask for --eval");
    pipe->add_option("--badpix-t", p_t, "BadPix threshold (default: 0.07 x ground-truth range)");
    pipe->add_option("--out", p_out, "output directory");
    bind(pipe, [&](const Globals& gl, CLI::App* sub) {
      p_args.validate();
      const DepthUnit unit = unit_arg(p_unit);
      if (p_t) require(std::isfinite(*p_t) && *p_t > 0.0, "--badpix-t must be > 0");
      RunRecord rec("pipeline", args, gl, sub);
      rec.input(p_manifest);
      fs::path gt_path = p_eval;
      if (!p_eval.empty() && !fs::exists(gt_path) && gt_path.is_relative()) {
        const fs::path alt = fs::path(p_manifest).parent_path() / gt_path;
        if (fs::exists(alt)) gt_path = alt;
      }
      const FocalStack stack = io::load_stack(io::read_manifest(p_manifest));
      const FocalStack gray = to_grayscale(stack);
      const auto t0 = Clock::now();
      const FocusVolume vol = p_args.compute(gray);
      const DepthMap index_depth = wta_depth(vol, DepthUnit::index, gray.focal_distances());
      const Image composite = all_in_focus(stack, index_depth);
      double compute = seconds_since(t0);
      const DepthMap out_depth =
          unit == DepthUnit::index ? index_depth : wta_depth(vol, unit, gray.focal_distances());
      const fs::path dir = p_out;
      io::write_depth(out_depth, dir / "depth.pfm");
      rec.output(dir / "depth.pfm");
      io::write_image(dir / "aif.png", composite, 16);
      rec.output(dir / "aif.png");
      if (!gt_path.empty()) {
        rec.input(gt_path);
        const DepthMap gt = io::read_depth(gt_path, unit);
        std::optional<Mask> mask;
        if (!p_mask.empty()) {
          rec.input(p_mask);
          mask = io::read_mask(p_mask);
        }
        const Mask* mp = mask ? &*mask : nullptr;
        const auto t1 = Clock::now();
        const MetricsReport r = evaluate(out_depth, gt, mp, p_t ? *p_t : default_badpix_threshold(gt, mp));
        compute += seconds_since(t1);
        json j = report_json(r);
        j["unit"] = std::string(to_string(unit));
        io::write_file_atomic(dir / "report.json", j.dump(2) + "\n");
        rec.output(dir / "report.json");
        for (const auto& w : r.warnings) err_ << "warning: " << w << "\n";
        if (gl.verbose) err_ << "pipeline: RMSE " << r.rms << "\n";
      }
      rec.extra()["source"] = vol.source().describe();
      return rec.finish(dir, true, compute);
    });

    // timeit
    auto* timeit = app.add_subcommand("timeit", "repeat a command and record mean and stddev wall time");
    int t_reps = 5;
    timeit->add_option("--reps", t_reps, "repetitions");
    timeit->footer("Usage: sfftool [global options] timeit --reps N <command> [command options]");
    // Everything after timeit's own options is the timed command line.
    std::vector<std::string> head = args, inner;
    const auto at = std::find(args.begin(), args.end(), "timeit");
    if (at != args.end()) {
      auto it = at + 1;
      while (it != args.end() && it->starts_with("-")) {
        const bool takes_value = *it == "--reps";
        ++it;
        if (takes_value && it != args.end()) ++it;
      }
      head.assign(args.begin(), it);
      inner.assign(it, args.end());
    }
    bind(timeit, [&](const Globals& gl, CLI::App*) {
      require(t_reps >= 1, "--reps must be >= 1");
      require(!inner.empty(), "timeit needs a command to run");
      require(inner.front() != "timeit", "timeit cannot time itself");
      std::vector<std::string> full = {"--threads", std::to_string(gl.threads), "--seed", std::to_string(gl.seed)};
      if (gl.verbose) full.push_back("--verbose");
      full.insert(full.end(), inner.begin(), inner.end());
      std::vector<double> wall, compute;
      Outcome last;
      for (int i = 0; i < t_reps; ++i) {
        const auto t0 = Clock::now();
        last = execute(full);
        wall.push_back(seconds_since(t0));
        compute.push_back(last.compute_seconds);
      }
      const auto [wm, ws] = mean_stddev(wall);
      const auto [cm, cs] = mean_stddev(compute);
      json record = {{"reps", t_reps},          {"command", inner},         {"wall_mean_s", wm},
                     {"wall_stddev_s", ws},     {"compute_mean_s", cm},     {"compute_stddev_s", cs},
                     {"wall_samples_s", wall},  {"compute_samples_s", compute}};
      out_ << last.command << ": " << wm << " s +/- " << ws << " s wall, " << cm << " s +/- " << cs
           << " s compute over " << t_reps << " runs\n";
      if (!last.run_json.empty()) {
        json rj = json::parse(io::read_file(last.run_json));
        rj["timeit"].push_back(record);
        io::write_file_atomic(last.run_json, rj.dump(2) + "\n");
      }
      return last;
    });

    std::vector<std::string> reversed(head.rbegin(), head.rend());
    try {
      app.parse(reversed);
    } catch (const CLI::ParseError& e) {
      if (e.get_exit_code() != 0) throw;
      throw ExitRequest{app.exit(e, out_, err_)};
    }
    set_num_threads(g.threads);
    require(static_cast<bool>(action), "no command given");
    if (g.verbose) err_ << "sfftool " << chosen->get_name() << " with " << num_threads() << " thread(s)\n";
    return action();
  }

  static std::pair<double, double> mean_stddev(const std::vector<double>& v) {
    const double mean = pairwise_mean(v);
    std::vector<double> sq;
    for (double x : v) sq.push_back((x - mean) * (x - mean));
    return {mean, std::sqrt(pairwise_mean(sq))};
  }

  static json report_json(const MetricsReport& r) {
    auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
    return {{"mae", num(r.mae)},
            {"mse", num(r.mse)},
            {"rms", num(r.rms)},
            {"log_rms", num(r.log_rms)},
            {"abs_rel", num(r.abs_rel)},
            {"sq_rel", num(r.sq_rel)},
            {"acc_1.25", num(r.acc_125)},
            {"acc_1.25^2", num(r.acc_125_2)},
            {"acc_1.25^3", num(r.acc_125_3)},
            {"badpix", num(r.badpix)},
            {"badpix_threshold", num(r.badpix_threshold)},
            {"corr", num(r.corr)},
            {"valid_pixel_count", r.valid_pixel_count},
            {"positive_gt_count", r.positive_gt_count},
            {"log_pixel_count", r.log_pixel_count},
            {"warnings", r.warnings}};
  }

  /// Maps focal distances back to the nearest slice index.
  static DepthMap nearest_index(const DepthMap& d, const std::vector<double>& distances) {
    DepthMap out{Plane(d.height(), d.width()), DepthUnit::index};
    for (std::size_t i = 0; i < out.values.size(); ++i) {
      const double v = d.values.values()[i];
      std::size_t best = 0;
      for (std::size_t s = 1; s < distances.size(); ++s)
        if (std::abs(distances[s] - v) < std::abs(distances[best] - v)) best = s;
      out.values.values()[i] = static_cast<double>(best);
    }
    return out;
  }

 private:
  std::ostream& out_;
  std::ostream& err_;
};

/// Runs one command line and returns the process exit code.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Tool tool(out, err);
  try {
    tool.execute(args);
    return 0;
  } catch (const ExitRequest& e) {
    return e.code;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "I/O error: " << e.what() << "\n";
    return 2;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::logic_error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "I/O error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace ddlsff::cli
