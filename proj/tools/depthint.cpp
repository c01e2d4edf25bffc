// Command-line front end. Every subcommand accepts --config FILE with snake_case keys; flags
// given on the command line override the file. The resolved configuration is written next
// to the outputs.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>

#include "depthint/bps.hpp"
#include "depthint/completion.hpp"
#include "depthint/config.hpp"
#include "depthint/error.hpp"
#include "depthint/gradcheck.hpp"
#include "depthint/io.hpp"
#include "depthint/metrics.hpp"
#include "depthint/projection.hpp"
#include "depthint/random.hpp"
#include "depthint/refinement.hpp"
#include "depthint/synthdata.hpp"

namespace fs = std::filesystem;
using namespace depthint;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string kebab(std::string key) {
  for (char& c : key) {
    if (c == '_') c = '-';
  }
  return key;
}

std::string text(const std::string& v) { return v; }
std::string text(int v) { return std::to_string(v); }
std::string text(std::uint64_t v) { return std::to_string(v); }
std::string text(bool v) { return v ? "true" : "false"; }
std::string text(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Binds snake_case keys to --kebab-case options and merges config-file values.
class Binder {
 public:
  explicit Binder(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_, "key=value file; command-line flags take precedence");
  }

  template <typename T>
  void add(const std::string& key, T& var, const std::string& help, bool required = false) {
    CLI::Option* opt = app_->add_option("--" + kebab(key), var, help + (required ? " (required)" : ""));
    if (!required) opt->capture_default_str();
    entries_.push_back({key, opt, [&var] { return text(var); }, required});
  }

  void flag(const std::string& key, bool& var, const std::string& help) {
    CLI::Option* opt = app_->add_flag("--" + kebab(key), var, help);
    entries_.push_back({key, opt, [&var] { return text(var); }, false});
  }

  CLI::App* app() const { return app_; }

  /// Fills unset options from --config and checks required keys.
  void resolve() {
    if (!config_path_.empty()) {
      const KeyValueConfig file = KeyValueConfig::load(config_path_);
      for (const auto& [key, value] : file.entries()) {
        // "command" is written into every resolved config so it can be fed back unchanged.
        const bool known = key == "command" || std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.key == key; });
        if (!known) throw DataError(config_path_ + ": unknown key '" + key + "' for " + app_->get_name());
      }
      for (auto& e : entries_) {
        if (e.option->count() > 0 || !file.has(e.key)) continue;
        e.option->clear();
        e.option->add_result(file.get(e.key));
        e.option->run_callback();
        e.from_file = true;
      }
    }
    for (const auto& e : entries_) {
      if (e.required && e.option->count() == 0 && !e.from_file) {
        throw UsageError(app_->get_name() + ": --" + kebab(e.key) + " is required");
      }
    }
  }

  KeyValueConfig resolved() const {
    KeyValueConfig cfg;
    cfg.set("command", app_->get_name());
    for (const auto& e : entries_) cfg.set(e.key, e.value());
    return cfg;
  }

 private:
  struct Entry {
    std::string key;
    CLI::Option* option;
    std::function<std::string()> value;
    bool required;
    bool from_file = false;
  };
  CLI::App* app_;
  std::string config_path_;
  std::vector<Entry> entries_;
};

struct ModelFlags {
  int resolution = 16;
  std::string channels = "8,16,32,64";
  int fc1 = 256;
  int fc2 = 512;
  int keypoints = 64;
  int fold_u = 2;
  int fold_hidden = 32;
  int kernel = 3;

  void bind(Binder& b) {
    b.add("resolution", resolution, "BPS grid resolution r");
    b.add("channels", channels, "encoder channel widths, comma separated");
    b.add("fc1", fc1, "first bottleneck width");
    b.add("fc2", fc2, "second bottleneck width");
    b.add("keypoints", keypoints, "keypoint count m");
    b.add("fold_u", fold_u, "folding patch side u (N = m u^2)");
    b.add("fold_hidden", fold_hidden, "folding perceptron hidden width");
    b.add("kernel", kernel, "encoder kernel size");
  }

  CompletionConfig config() const {
    CompletionConfig c{resolution, parse_int_list(channels), fc1, fc2, keypoints, fold_u, fold_hidden, kernel};
    c.validate();
    return c;
  }
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

fs::path sidecar_config(const fs::path& output) { return fs::path(output.string() + ".config.txt"); }

struct CameraFlags {
  std::string cam;
  double fx = 0.0;
  double fy = 0.0;
  double cx = std::numeric_limits<double>::quiet_NaN();
  double cy = std::numeric_limits<double>::quiet_NaN();

  void bind(Binder& b) {
    b.add("cam", cam, "camera file (12 pose values then fx fy cx cy); replaces the intrinsics flags");
    b.add("fx", fx, "focal length x in pixels");
    b.add("fy", fy, "focal length y in pixels (default fx)");
    b.add("cx", cx, "principal point x (default width/2)");
    b.add("cy", cy, "principal point y (default height/2)");
  }

  std::pair<CameraIntrinsics, std::optional<Pose>> resolve(const DepthMap& depth) const {
    if (!cam.empty()) {
      auto [k, pose] = load_camera(cam);
      return {k, pose};
    }
    if (!(fx > 0.0)) throw UsageError("either --cam or a positive --fx is required");
    CameraIntrinsics k{fx, fy > 0.0 ? fy : fx, std::isnan(cx) ? depth.width() / 2.0 : cx,
                       std::isnan(cy) ? depth.height() / 2.0 : cy};
    k.validate();
    return {k, std::nullopt};
  }
};

DepthMap read_depth(const std::string& path, const std::string& format) {
  return load_depth(path, format.empty() ? depth_format_for(path) : parse_depth_format(format));
}

// ---------------------------------------------------------------------------------------
// Subcommands. Each registers its flags and returns the action to run after parsing.

using Action = std::function<void()>;

struct Command {
  CLI::App* app;
  Action run;
};

Command gen_data(CLI::App& root) {
  auto* app = root.add_subcommand("gen-data", "Generate a synthetic dataset of meshes, depth views and clouds");
  auto b = std::make_shared<Binder>(app);
  auto cfg = std::make_shared<DatasetConfig>();
  auto out = std::make_shared<std::string>();
  auto seed = std::make_shared<std::uint64_t>(0);
  auto gt = std::make_shared<int>(2048);
  b->add("out", *out, "output directory", true);
  b->add("instances", cfg->instances, "number of shapes");
  b->add("views", cfg->views, "depth views per shape");
  b->add("width", cfg->width, "image width");
  b->add("height", cfg->height, "image height");
  b->add("focal", cfg->focal, "focal length in pixels (0: image width)");
  b->add("gt_points", *gt, "ground-truth surface samples per shape");
  b->add("seed", *seed, "global seed");
  return {app, [=] {
    b->resolve();
    cfg->root = *out;
    cfg->seed = *seed;
    cfg->gt_points = *gt;
    const fs::path manifest = make_dataset(*cfg);
    b->resolved().save(fs::path(*out) / "config.txt");
    std::cout << "wrote " << cfg->instances << " instances x " << cfg->views << " views; manifest " << manifest.string() << "\n";
  }};
}

Command backproject_cmd(CLI::App& root) {
  auto* app = root.add_subcommand("backproject", "Back-project a depth map into a camera-frame point cloud");
  auto b = std::make_shared<Binder>(app);
  struct Opts {
    std::string depth, format, out, ply = "binary";
    CameraFlags cam;
  };
  auto o = std::make_shared<Opts>();
  b->add("depth", o->depth, "depth file (.f32 or .pgm)", true);
  b->add("format", o->format, "depth format d16 or f32 (default: from extension)");
  o->cam.bind(*b);
  b->add("out", o->out, "output PLY (default: depth path with .ply)");
  b->add("ply", o->ply, "PLY encoding ascii or binary");
  return {app, [=] {
    b->resolve();
    const DepthMap depth = read_depth(o->depth, o->format);
    const auto [k, pose] = o->cam.resolve(depth);
    const PointCloud cloud = backproject(depth, k);
    const fs::path out = o->out.empty() ? fs::path(o->depth).replace_extension(".ply") : fs::path(o->out);
    if (o->ply != "ascii" && o->ply != "binary") throw UsageError("--ply must be ascii or binary");
    save_ply(out, cloud, o->ply == "ascii" ? PlyEncoding::Ascii : PlyEncoding::BinaryLittleEndian);
    b->resolved().save(sidecar_config(out));
    std::cout << "wrote " << cloud.cols() << " points to " << out.string() << "\n";
  }};
}

Command encode_cmd(CLI::App& root) {
  auto* app = root.add_subcommand("encode", "Encode a point cloud against the BPS grid");
  auto b = std::make_shared<Binder>(app);
  struct Opts {
    std::string cloud, out;
    int resolution = 32;
    bool raw = false;
  };
  auto o = std::make_shared<Opts>();
  b->add("cloud", o->cloud, "input PLY", true);
  b->add("out", o->out, "output encoding file", true);
  b->add("resolution", o->resolution, "grid resolution r");
  b->flag("raw", o->raw, "skip normalization; the cloud must already lie in the unit cube");
  return {app, [=] {
    b->resolve();
    PointCloud cloud = load_ply(o->cloud);
    if (!o->raw) cloud = normalize(cloud).first;
    const BpsEncoding enc = encode(cloud, BasisPointSet(o->resolution));
    save_encoding(o->out, enc);
    b->resolved().save(sidecar_config(o->out));
    std::cout << "encoded " << cloud.cols() << " points on a " << o->resolution << "^3 grid; mean distance "
              << enc.distances.mean() << "\n";
  }};
}

std::vector<TrainingPair> training_pairs(const std::string& data, int max_instances, int views_per_instance,
                                         const BasisPointSet& basis) {
  std::vector<TrainingPair> pairs;
  const auto instances = load_dataset(data);
  const std::size_t count = max_instances > 0 ? std::min(instances.size(), std::size_t(max_instances)) : instances.size();
  for (std::size_t i = 0; i < count; ++i) {
    const auto& inst = instances[i];
    const std::size_t views = views_per_instance > 0 ? std::min(inst.views.size(), std::size_t(views_per_instance)) : inst.views.size();
    for (std::size_t v = 0; v < views; ++v) {
      const auto& view = inst.views[v];
      pairs.push_back(make_training_pair(inst.name + "/view_" + std::to_string(v), backproject(view.depth, view.k),
                                         view.pose.apply(inst.full), basis));
    }
  }
  return pairs;
}

Command pretrain_cmd(CLI::App& root) {
  auto* app = root.add_subcommand("pretrain", "Train the completion network on a generated dataset");
  auto b = std::make_shared<Binder>(app);
  struct Opts {
    std::string data, out;
    int epochs = 100, batch_size = 5, max_instances = 0, views_per_instance = 0;
    double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    std::uint64_t seed = 0;
    ModelFlags model;
  };
  auto o = std::make_shared<Opts>();
  b->add("data", o->data, "dataset root (with manifest.tsv)", true);
  b->add("out", o->out, "run directory", true);
  b->add("epochs", o->epochs, "training epochs");
  b->add("batch_size", o->batch_size, "examples per Adam step (0: all)");
  b->add("max_instances", o->max_instances, "use only the first n instances (0: all)");
  b->add("views_per_instance", o->views_per_instance, "use only the first n views per instance (0: all)");
  b->add("lr", o->lr, "Adam learning rate");
  b->add("beta1", o->beta1, "Adam beta1");
  b->add("beta2", o->beta2, "Adam beta2");
  b->add("adam_eps", o->adam_eps, "Adam epsilon");
  b->add("seed", o->seed, "global seed");
  o->model.bind(*b);
  return {app, [=] {
    b->resolve();
    const CompletionConfig mc = o->model.config();
    CompletionModel model(mc, derive_seed(o->seed, "init"));
    const auto pairs = training_pairs(o->data, o->max_instances, o->views_per_instance, model.basis());
    TrainConfig tc;
    tc.epochs = o->epochs;
    tc.batch_size = o->batch_size;
    tc.adam = {o->lr, o->beta1, o->beta2, o->adam_eps};
    tc.seed = derive_seed(o->seed, "shuffle");
    ensure_dir(o->out);
    const auto history = pretrain(model, pairs, tc);
    model.save(fs::path(o->out) / "model.dckp");
    write_history_csv(fs::path(o->out) / "history.csv", history);
    b->resolved().save(fs::path(o->out) / "config.txt");
    std::cout << "trained " << model.parameter_count() << " parameters on " << pairs.size() << " pairs";
    if (!history.empty()) std::cout << "; final loss " << history.back().loss << ", cd " << history.back().cd;
    std::cout << "\n";
  }};
}

Command complete_cmd(CLI::App& root) {
  auto* app = root.add_subcommand("complete", "Predict a full cloud from a depth map or partial cloud");
  auto b = std::make_shared<Binder>(app);
  struct Opts {
    std::string model_path, depth, format, cloud, out;
    CameraFlags cam;
    ModelFlags model;
  };
  auto o = std::make_shared<Opts>();
  b->add("model", o->model_path, "checkpoint written by pretrain", true);
  b->add("depth", o->depth, "input depth map");
  b->add("format", o->format, "depth format d16 or f32 (default: from extension)");
  b->add("cloud", o->cloud, "input partial cloud PLY (instead of --depth)");
  o->cam.bind(*b);
  b->add("out", o->out, "output PLY of the full cloud (camera frame)", true);
  o->model.bind(*b);
  return {app, [=] {
    b->resolve();
    if (o->depth.empty() == o->cloud.empty()) throw UsageError("complete: give exactly one of --depth and --cloud");
    PointCloud partial;
    if (!o->depth.empty()) {
      const DepthMap depth = read_depth(o->depth, o->format);
      partial = backproject(depth, o->cam.resolve(depth).first);
    } else {
      partial = load_ply(o->cloud);
    }
    CompletionModel model(o->model.config(), 0);
    model.load(o->model_path);
    const NormTransform frame = fit_normalization(partial);
    const CompletionOutput result = forward(encode(frame.apply(partial), model.basis()), model);
    save_ply(o->out, frame.invert(result.full_cloud));
    b->resolved().save(sidecar_config(o->out));
    std::cout << "completed " << partial.cols() << " partial points into " << result.full_cloud.cols() << " points\n";
  }};
}

Command refine_cmd(CLI::App& root) {
  auto* app = root.add_subcommand("refine", "Refine a depth map against a full cloud, or jointly with a completion model");
  auto b = std::make_shared<Binder>(app);
  struct Opts {
    std::string depth, format, out, full, model_path, gt, gt_frame = "camera", reference;
    CameraFlags cam;
    ModelFlags model;
    RefineConfig refine;
  };
  auto o = std::make_shared<Opts>();
  b->add("depth", o->depth, "depth map to refine", true);
  b->add("format", o->format, "depth format d16 or f32 (default: from extension)");
  o->cam.bind(*b);
  b->add("out", o->out, "run directory", true);
  b->add("full", o->full, "fixed full cloud (camera frame) for depth-only refinement");
  b->add("model", o->model_path, "checkpoint for joint refinement (instead of --full)");
  b->add("gt", o->gt, "ground-truth full cloud supervising joint refinement");
  b->add("gt_frame", o->gt_frame, "frame of --gt: camera, or model (mapped through the --cam pose)");
  b->add("reference", o->reference, "camera-frame reference cloud for the CD column of the trace");
  b->add("steps", o->refine.steps, "optimization steps");
  b->add("depth_lr", o->refine.depth_lr, "gradient-descent rate for depth pixels");
  b->add("net_lr", o->refine.net_lr, "Adam rate for network parameters");
  b->add("lambda_d", o->refine.lambda_d, "weight of the partial-consistency loss");
  b->add("lambda_p", o->refine.lambda_p, "weight of the projection loss");
  b->add("clamp_min", o->refine.clamp_min, "lower depth bound (with clamp_max; default from the input depth)");
  b->add("clamp_max", o->refine.clamp_max, "upper depth bound");
  o->model.bind(*b);
  return {app, [=] {
    b->resolve();
    if (o->full.empty() == o->model_path.empty()) throw UsageError("refine: give exactly one of --full and --model");
    const DepthMap depth = read_depth(o->depth, o->format);
    const auto [k, pose] = o->cam.resolve(depth);
    std::optional<PointCloud> reference;
    if (!o->reference.empty()) reference = load_ply(o->reference);
    ensure_dir(o->out);
    const fs::path dir(o->out);
    RefineResult result;
    if (!o->full.empty()) {
      result = refine_depth(depth, load_ply(o->full), k, o->refine, reference ? &*reference : nullptr);
    } else {
      CompletionModel model(o->model.config(), 0);
      model.load(o->model_path);
      std::optional<PointCloud> gt;
      if (!o->gt.empty()) {
        gt = load_ply(o->gt);
        if (o->gt_frame == "model") {
          if (!pose) throw UsageError("refine: --gt-frame model needs a --cam file with a pose");
          gt = pose->apply(*gt);
        } else if (o->gt_frame != "camera") {
          throw UsageError("--gt-frame must be camera or model");
        }
      }
      const JointInstance inst = make_joint_instance(depth, k, model.basis(), gt ? &*gt : nullptr, reference ? &*reference : nullptr);
      result = joint_refine(depth, model, inst, o->refine);
      const CompletionOutput completed = forward(encode_unbounded(inst.frame.apply(backproject(result.depth, k)), model.basis()), model);
      save_ply(dir / "full.ply", inst.frame.invert(completed.full_cloud));
      model.save(dir / "model.dckp");
    }
    save_depth(dir / "refined.f32", result.depth, DepthFormat::F32);
    save_ply(dir / "partial.ply", backproject(result.depth, k));
    write_trace_csv(dir / "trace.csv", result.trace);
    b->resolved().save(dir / "config.txt");
    std::cout << "refined " << depth.valid_count() << " pixels over " << o->refine.steps << " steps; L_d "
              << result.trace.front().l_d << " -> " << result.trace.back().l_d << "\n";
  }};
}

Command eval_cmd(CLI::App& root) {
  auto* app = root.add_subcommand("eval", "CD, EMD and voxel IoU of a predicted cloud against ground truth");
  auto b = std::make_shared<Binder>(app);
  struct Opts {
    std::string pred, gt, instance, out;
    int voxel_resolution = 32;
  };
  auto o = std::make_shared<Opts>();
  b->add("pred", o->pred, "predicted cloud PLY", true);
  b->add("gt", o->gt, "ground-truth cloud PLY", true);
  b->add("instance", o->instance, "row label (default: prediction file stem)");
  b->add("voxel_resolution", o->voxel_resolution, "IoU grid resolution");
  b->add("out", o->out, "CSV output file (default: standard output only)");
  return {app, [=] {
    b->resolve();
    const std::string label = o->instance.empty() ? fs::path(o->pred).stem().string() : o->instance;
    const EvaluationRow row = evaluate(label, load_ply(o->pred), load_ply(o->gt), o->voxel_resolution);
    if (!o->out.empty()) {
      write_evaluation_csv(o->out, {row});
      b->resolved().save(sidecar_config(o->out));
    }
    std::cout << "instance,cd,emd,iou\n" << evaluation_csv_row(row) << "\n";
  }};
}

Command noise_cmd(CLI::App& root) {
  auto* app = root.add_subcommand("noise", "Add Gaussian depth noise at a target PSNR");
  auto b = std::make_shared<Binder>(app);
  struct Opts {
    std::string depth, format, out;
    double psnr = 30.0;
    std::uint64_t seed = 0;
  };
  auto o = std::make_shared<Opts>();
  b->add("depth", o->depth, "input depth map", true);
  b->add("format", o->format, "depth format d16 or f32 (default: from extension)");
  b->add("psnr", o->psnr, "target PSNR in dB");
  b->add("seed", o->seed, "global seed");
  b->add("out", o->out, "output depth map (f32)", true);
  return {app, [=] {
    b->resolve();
    const DepthMap depth = read_depth(o->depth, o->format);
    const DepthMap noisy = inject_noise(depth, o->psnr, derive_seed(o->seed, "noise"));
    save_depth(o->out, noisy, DepthFormat::F32);
    b->resolved().save(sidecar_config(o->out));
    std::cout << "psnr " << psnr(depth, noisy) << " dB\n";
  }};
}

Command gradcheck_cmd(CLI::App& root) {
  auto* app = root.add_subcommand("gradcheck", "Finite-difference checks of loss and primitive gradients");
  auto b = std::make_shared<Binder>(app);
  struct Opts {
    bool all = false;
    std::string name;
    std::uint64_t seed = 0;
  };
  auto o = std::make_shared<Opts>();
  b->flag("all", o->all, "run every loss and primitive check");
  b->add("name", o->name, "run a single check by name");
  b->add("seed", o->seed, "global seed");
  return {app, [=] {
    b->resolve();
    std::vector<GradCheckReport> reports;
    if (o->all) {
      reports = run_gradcheck_suite(o->seed);
    } else if (!o->name.empty()) {
      reports.push_back(run_gradcheck(o->name, o->seed));
    } else {
      throw UsageError("gradcheck: give --all or --name");
    }
    bool ok = true;
    for (const auto& r : reports) {
      std::printf("%-20s max_rel_error %.3e  tolerance %.0e  checked %zu  skipped %zu  %s\n", r.name.c_str(),
                  r.result.max_rel_error, r.tolerance, r.result.checked, r.result.skipped, r.passed() ? "ok" : "FAIL");
      ok = ok && r.passed();
    }
    if (!ok) throw NumericalError("gradient check failed");
  }};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Depth-intermediated point-cloud reconstruction toolkit"};
  app.require_subcommand(1);
  std::vector<Command> commands;
  for (auto make : {gen_data, backproject_cmd, encode_cmd, pretrain_cmd, complete_cmd, refine_cmd, eval_cmd, noise_cmd,
                    gradcheck_cmd}) {
    commands.push_back(make(app));
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  try {
    for (auto& c : commands) {
      if (c.app->parsed()) c.run();
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const CLI::Error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
