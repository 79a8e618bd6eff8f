#include "ctsynth/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <regex>

#include <CLI11.hpp>
#include <json.hpp>

#include "ctsynth/checkpoint.hpp"
#include "ctsynth/config.hpp"
#include "ctsynth/gradcheck_suite.hpp"
#include "ctsynth/metrics.hpp"
#include "ctsynth/phantom.hpp"
#include "ctsynth/png.hpp"
#include "ctsynth/training.hpp"
#include "ctsynth/volume_io.hpp"

namespace ctsynth {

namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage:
      return 2;
    case ErrorKind::shape:
    case ErrorKind::data:
      return 3;
    case ErrorKind::numerical:
      return 4;
  }
  return 1;
}

// Worker-thread cap from CVS_THREADS. All kernels here run on the calling
// thread, so the effective count is min(cap, 1).
int thread_cap() {
  const char* env = std::getenv("CVS_THREADS");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  require(end && *end == '\0' && v >= 1, ErrorKind::usage, "CVS_THREADS must be a positive integer");
  return static_cast<int>(std::min<long>(v, 1));
}

void echo(std::ostream& out, const ordered_json& resolved) { out << "resolved: " << resolved.dump() << '\n'; }

std::array<int, 3> parse_shape(const std::string& text) {
  static const std::regex re(R"((\d+)x(\d+)x(\d+))");
  std::smatch m;
  require(std::regex_match(text, m, re), ErrorKind::usage, "shape must look like HxWxL, got '" + text + "'");
  std::array<int, 3> s{};
  for (int i = 0; i < 3; ++i) {
    const long v = std::stol(m[static_cast<std::size_t>(i + 1)].str());
    require(v >= 1 && v <= 4096, ErrorKind::usage, "shape dimensions must be in 1..4096, got '" + text + "'");
    s[static_cast<std::size_t>(i)] = static_cast<int>(v);
  }
  return s;
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

std::vector<Volume> load_directory(const fs::path& dir) {
  require(fs::is_directory(dir), ErrorKind::data, "data directory '" + dir.string() + "' does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".cvol") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  require(!files.empty(), ErrorKind::data, "no .cvol files in '" + dir.string() + "'");
  std::vector<Volume> out;
  for (const auto& f : files) out.push_back(read_volume(f));
  return out;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Self-supervised CT slice synthesis"};
  app.require_subcommand(1);

  // gen-phantom
  std::string kind = "layered_sine", shape_text;
  std::uint64_t seed = 7;
  double amplitude = PhantomOptions{}.amplitude;
  fs::path out_path;
  auto* gen = app.add_subcommand("gen-phantom", "Write a procedural phantom volume");
  gen->add_option("--kind", kind, "ellipsoids | bandlimited_noise | layered_sine")->capture_default_str();
  gen->add_option("--shape", shape_text, "HxWxL")->required();
  gen->add_option("--seed", seed)->capture_default_str();
  gen->add_option("--amplitude", amplitude, "layered_sine amplitude")->capture_default_str();
  gen->add_option("--out", out_path, "output .cvol")->required();

  // degrade
  fs::path in_path;
  int r = 2;
  std::string mode = "direct_subsample";
  double blur_sigma = 0.0, noise_sigma = 0.01;
  auto* deg = app.add_subcommand("degrade", "Build a low-resolution volume");
  deg->add_option("--in", in_path)->required();
  deg->add_option("--r", r)->capture_default_str();
  deg->add_option("--mode", mode, "direct_subsample | blur_noise")->capture_default_str();
  deg->add_option("--blur-sigma", blur_sigma, "slices; <= 0 selects r/2")->capture_default_str();
  deg->add_option("--noise-sigma", noise_sigma, "fraction of the intensity range")->capture_default_str();
  deg->add_option("--seed", seed)->capture_default_str();
  deg->add_option("--out", out_path)->required();

  // train
  fs::path config_path, data_dir, resume_path;
  std::optional<int> epochs, steps_per_epoch, stage1_epochs, batch_size, patch;
  std::optional<std::uint64_t> train_seed;
  std::optional<double> lr, gamma;
  auto* tr = app.add_subcommand("train", "Two-stage self-supervised training");
  tr->add_option("--config", config_path, "JSON config (defaults when omitted)");
  tr->add_option("--data", data_dir, "directory of .cvol training volumes")->required();
  tr->add_option("--out", out_path, "output directory")->required();
  tr->add_option("--resume", resume_path, "checkpoint to continue from");
  tr->add_option("--epochs", epochs);
  tr->add_option("--stage1-epochs", stage1_epochs);
  tr->add_option("--steps-per-epoch", steps_per_epoch);
  tr->add_option("--batch-size", batch_size);
  tr->add_option("--patch", patch);
  tr->add_option("--lr", lr);
  tr->add_option("--gamma", gamma);
  tr->add_option("--seed", train_seed);

  // infer
  fs::path ckpt_path;
  bool do_fuse = false;
  std::string view_name = "axial";
  auto* inf = app.add_subcommand("infer", "Synthesize intermediate slices");
  inf->add_option("--ckpt", ckpt_path)->required();
  inf->add_option("--in", in_path)->required();
  inf->add_option("--r", r)->required();
  inf->add_flag("--fuse", do_fuse, "write the three-view fusion");
  inf->add_option("--view", view_name, "single view written without --fuse")->capture_default_str();
  inf->add_option("--out", out_path)->required();

  // evaluate
  fs::path pred_path, gt_path, lowres_path;
  bool dump_png = false;
  auto* ev = app.add_subcommand("evaluate", "PSNR / per-view SSIM report");
  ev->add_option("--pred", pred_path)->required();
  ev->add_option("--gt", gt_path)->required();
  ev->add_option("--lowres", lowres_path, "low-resolution input, enables the z-interpolation baselines");
  ev->add_option("--r", r, "factor for the baselines")->capture_default_str();
  ev->add_flag("--png", dump_png, "also dump axial PNG slices next to the report");
  ev->add_option("--out", out_path, "report .json")->required();

  // gradcheck
  bool full = false;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gc->add_flag("--full", full, "include the tiny end-to-end networks");
  gc->add_option("--seed", seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    const int threads = thread_cap();
    if (gen->parsed()) {
      const auto s = parse_shape(shape_text);
      PhantomOptions opts;
      opts.amplitude = amplitude;
      echo(out, {{"command", "gen-phantom"}, {"kind", kind}, {"shape", shape_text}, {"seed", seed},
                 {"amplitude", amplitude}, {"out", out_path.string()}});
      const Volume v = make_phantom(parse_phantom(kind), s[0], s[1], s[2], seed, opts);
      ensure_parent(out_path);
      write_volume(v, out_path);
      return 0;
    }
    if (deg->parsed()) {
      DegradationSpec spec;
      spec.mode = parse_degradation(mode);
      spec.factor = r;
      spec.blur_sigma = blur_sigma;
      spec.noise_sigma = noise_sigma;
      spec.seed = seed;
      require(noise_sigma >= 0, ErrorKind::usage, "--noise-sigma must be >= 0");
      echo(out, {{"command", "degrade"}, {"in", in_path.string()}, {"r", r}, {"mode", mode},
                 {"blur_sigma", blur_sigma > 0 ? blur_sigma : r / 2.0}, {"noise_sigma", noise_sigma}, {"seed", seed},
                 {"out", out_path.string()}});
      const Volume v = degrade(read_volume(in_path), spec);
      ensure_parent(out_path);
      write_volume(v, out_path);
      return 0;
    }
    if (tr->parsed()) {
      std::optional<Checkpoint> resume;
      TrainConfig cfg;
      if (!resume_path.empty()) {
        resume = load_checkpoint(resume_path);
        cfg = resume->config;
      }
      if (!config_path.empty()) cfg = load_config(config_path);
      if (epochs) cfg.epochs = *epochs;
      if (stage1_epochs) cfg.stage1_epochs = *stage1_epochs;
      if (steps_per_epoch) cfg.steps_per_epoch = *steps_per_epoch;
      if (batch_size) cfg.batch_size = *batch_size;
      if (patch) cfg.patch = *patch;
      if (lr) cfg.lr = *lr;
      if (gamma) cfg.gamma = *gamma;
      if (train_seed) cfg.seed = *train_seed;
      cfg.validate();
      ordered_json resolved = ordered_json::parse(to_json(cfg, -1));
      echo(out, {{"command", "train"}, {"config", resolved}, {"seed", cfg.seed}, {"threads", threads},
                 {"data", data_dir.string()}, {"out", out_path.string()}});
      const auto volumes = load_directory(data_dir);
      fs::create_directories(out_path);
      {
        std::ofstream cfg_out(out_path / "config.json");
        cfg_out << to_json(cfg) << '\n';
      }
      std::ofstream log(out_path / "train_log.jsonl", resume ? std::ios::app : std::ios::trunc);
      require(static_cast<bool>(log), ErrorKind::data, "cannot open training log");
      TrainOptions opts;
      opts.out_dir = out_path;
      opts.log = &log;
      opts.resume = resume ? &*resume : nullptr;
      opts.on_step = [&out](const StepRecord& rec) {
        out << "epoch " << rec.epoch << " step " << rec.step << " loss " << std::setprecision(6) << rec.loss.total
            << '\n';
      };
      const auto res = train(cfg, volumes, opts);
      out << "finished at step " << res.step << ", checkpoint " << (out_path / "model.ckpt").string() << '\n';
      return 0;
    }
    if (inf->parsed()) {
      const Checkpoint ck = load_checkpoint(ckpt_path);
      require(ck.config.r() == r, ErrorKind::usage,
              "--r " + std::to_string(r) + " does not match the checkpoint's r = " + std::to_string(ck.config.r()));
      const ViewAxis view = parse_view(view_name);
      echo(out, {{"command", "infer"}, {"ckpt", ckpt_path.string()}, {"in", in_path.string()}, {"r", r},
                 {"fuse", do_fuse}, {"view", view_name}, {"seed", ck.config.seed}, {"out", out_path.string()}});
      const Volume v = read_volume(in_path);
      const Model model{ck.sint, ck.pint, ck.bank};
      const InferResult res = infer(model, ck.config, v, do_fuse);
      const Volume& chosen = do_fuse ? *res.fused
                             : view == ViewAxis::axial   ? res.axial
                             : view == ViewAxis::coronal ? res.coronal
                                                         : res.sagittal;
      ensure_parent(out_path);
      write_volume(chosen, out_path);
      out << "wrote " << chosen.shape_string() << " to " << out_path.string() << '\n';
      return 0;
    }
    if (ev->parsed()) {
      echo(out, {{"command", "evaluate"}, {"pred", pred_path.string()}, {"gt", gt_path.string()},
                 {"lowres", lowres_path.string()}, {"r", r}, {"out", out_path.string()}});
      const Volume pred = read_volume(pred_path), gt = read_volume(gt_path);
      EvalReport rep;
      rep.prediction = evaluate(pred, gt);
      rep.voxels = pred.voxels().size();
      if (!lowres_path.empty()) {
        const Volume lr_vol = read_volume(lowres_path);
        rep.has_baselines = true;
        rep.nearest = evaluate(baseline_interpolate(lr_vol, r, BaselineMethod::nearest), gt);
        rep.linear = evaluate(baseline_interpolate(lr_vol, r, BaselineMethod::linear), gt);
      }
      ensure_parent(out_path);
      std::ofstream f(out_path);
      require(static_cast<bool>(f), ErrorKind::data, "cannot write report '" + out_path.string() + "'");
      f << to_json(rep) << '\n';
      if (dump_png) {
        fs::path dir = out_path;
        dir.replace_extension("");
        dir += "_png";
        dump_view_png(pred, ViewAxis::axial, dir, "pred");
        dump_view_png(gt, ViewAxis::axial, dir, "gt");
      }
      out << to_json(rep) << '\n';
      return 0;
    }
    if (gc->parsed()) {
      echo(out, {{"command", "gradcheck"}, {"full", full}, {"seed", seed}});
      const auto cases = run_gradcheck_suite(full, seed);
      bool ok = true;
      out << std::left << std::setw(28) << "case" << std::setw(14) << "max_rel_err" << std::setw(10) << "tol"
          << "result\n";
      for (const auto& c : cases) {
        out << std::left << std::setw(28) << c.name << std::setw(14) << std::setprecision(3) << std::scientific
            << c.max_rel_error << std::setw(10) << c.tolerance << std::defaultfloat << (c.passed() ? "ok" : "FAIL")
            << '\n';
        ok = ok && c.passed();
      }
      return ok ? 0 : 4;
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  }
  return 2;
}

}  // namespace ctsynth
