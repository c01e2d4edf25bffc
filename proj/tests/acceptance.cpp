// Acceptance run: one PASS/FAIL line per criterion. Thresholds that depend on training
// behavior were fixed by oracle runs before this file was written; the measured numbers are
// printed next to each verdict.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <sstream>
#include <string>
#include <unistd.h>

#include "depthint/bps.hpp"
#include "depthint/completion.hpp"
#include "depthint/gradcheck.hpp"
#include "depthint/losses.hpp"
#include "depthint/metrics.hpp"
#include "depthint/projection.hpp"
#include "depthint/random.hpp"
#include "depthint/refinement.hpp"
#include "depthint/synthdata.hpp"

namespace fs = std::filesystem;
using namespace depthint;

namespace {

// Oracle-run values (seed 1, 20 instances, one 64x64 view each).
constexpr double kIdentityBaselineCd = 0.075483;  // mean CD of the resampled partial cloud
constexpr double kFlyingReduction = 0.99;
constexpr double kBackgroundMotion = 1e-3;
constexpr double kNoiseCdRatio = 1.25;  // measured 1.2401 at 35 dB

struct Verdict {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void report(int id, const std::string& title, const std::function<void(Verdict&)>& body) {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(v);
  } catch (const std::exception& e) {
    v.pass = false;
    v.detail << " [exception: " << e.what() << "]";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!v.pass) ++failures;
  std::printf("%s C%d %s: %s (%.1f s)\n", v.pass ? "PASS" : "FAIL", id, title.c_str(), v.detail.str().c_str(), secs);
  std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

PointCloud random_cloud(Rng& rng, Eigen::Index n) {
  PointCloud c(3, n);
  for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = rng.uniform();
  return c;
}

double brute_directed(const PointCloud& from, const PointCloud& to) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < from.cols(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < to.cols(); ++j) best = std::min(best, (from.col(i) - to.col(j)).squaredNorm());
    sum += best;
  }
  return sum;
}

double point_triangle_distance(const Vector3d& p, const Vector3d& a, const Vector3d& b, const Vector3d& c) {
  const Vector3d ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return ap.norm();
  const Vector3d bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return bp.norm();
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return (p - (a + ab * (d1 / (d1 - d3)))).norm();
  const Vector3d cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return cp.norm();
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return (p - (a + ac * (d2 / (d2 - d6)))).norm();
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return (p - (b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6))))).norm();
  const double denom = 1.0 / (va + vb + vc);
  return (p - (a + ab * (vb * denom) + ac * (vc * denom))).norm();
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DEPTHINT_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// State shared between the training-dependent criteria.
struct Training {
  fs::path root;
  std::vector<InstanceData> data;
  std::vector<TrainingPair> pairs;
  std::unique_ptr<CompletionModel> model;
};

PointCloud end_to_end(const DepthMap& depth, const CameraIntrinsics& k, const CompletionModel& model) {
  const auto [normalized, frame] = normalize(backproject(depth, k));
  return frame.invert(forward(encode_unbounded(normalized, model.basis()), model).full_cloud);
}

}  // namespace

int main() {
  const fs::path scratch = fs::temp_directory_path() / ("depthint_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(scratch);
  fs::create_directories(scratch);

  report(1, "round-trip geometry", [](Verdict& v) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(101);
    double worst_px = 0.0;
    bool depth_exact = true, all_in_frame = true;
    for (int trial = 0; trial < 100; ++trial) {
      const int w = 8 + int(rng.below(120)), h = 8 + int(rng.below(120));
      const CameraIntrinsics k{rng.uniform(20, 400), rng.uniform(20, 400), rng.uniform(0, w), rng.uniform(0, h)};
      DepthMap::Raster r(h, w);
      for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = rng.uniform() < 0.25 ? 0.0 : rng.uniform(0.05, 50.0);
      const DepthMap d(r);
      if (d.valid_count() == 0) continue;
      const auto samples = project(backproject(d, k), k, w, h);
      std::size_t i = 0;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          if (!d.valid(x, y)) continue;
          const auto& s = samples[i++];
          worst_px = std::max({worst_px, std::abs(s.u - x), std::abs(s.v - y)});
          depth_exact = depth_exact && s.z == d.at(x, y);
          all_in_frame = all_in_frame && s.in_frame;
        }
    }
    const double secs = seconds_since(t0);
    v.detail << "max pixel error " << worst_px << ", depth exact " << (depth_exact ? "yes" : "no");
    v.require(worst_px <= 1e-6, "pixel error <= 1e-6");
    v.require(depth_exact, "depth reproduced exactly");
    v.require(all_in_frame, "every sample in frame");
    v.require(secs < 10.0, "runtime < 10 s");
  });

  report(2, "metric oracles", [](Verdict& v) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(202);
    double emd_dev = 0.0;
    for (int pair = 0; pair < 200; ++pair) {
      const int n = 1 + pair % 6;
      const PointCloud p = random_cloud(rng, n), q = random_cloud(rng, n);
      std::vector<int> perm(std::size_t(n), 0);
      std::iota(perm.begin(), perm.end(), 0);
      double best = std::numeric_limits<double>::infinity();
      do {
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += (p.col(i) - q.col(perm[std::size_t(i)])).squaredNorm();
        best = std::min(best, s);
      } while (std::next_permutation(perm.begin(), perm.end()));
      emd_dev = std::max(emd_dev, std::abs(emd_exact(p, q).value - best / n));
    }
    double cd_dev = 0.0, pc_dev = 0.0;
    for (int pair = 0; pair < 100; ++pair) {
      const PointCloud p = random_cloud(rng, 32), q = random_cloud(rng, 32);
      cd_dev = std::max(cd_dev, std::abs(chamfer(p, q).value - (brute_directed(p, q) / 32 + brute_directed(q, p) / 32)));
      pc_dev = std::max(pc_dev, std::abs(partial_consistency(p, q).value - brute_directed(p, q)));
    }
    double approx_gap = -1.0, approx_low = 0.0;
    for (int pair = 0; pair < 5; ++pair) {
      const PointCloud p = random_cloud(rng, 64), q = random_cloud(rng, 64);
      const double exact = emd_exact(p, q).value, approx = emd_approx(p, q, 1e-4).value;
      approx_gap = std::max(approx_gap, approx - exact);
      approx_low = std::min(approx_low, approx - exact);
    }
    const double secs = seconds_since(t0);
    v.detail << "emd dev " << emd_dev << ", chamfer dev " << cd_dev << ", L_d dev " << pc_dev << ", auction gap " << approx_gap;
    v.require(emd_dev <= 1e-9, "emd_exact matches permutations");
    v.require(cd_dev == 0.0, "chamfer equals brute force exactly");
    v.require(pc_dev == 0.0, "partial_consistency equals brute force exactly");
    v.require(approx_gap <= 1e-4 && approx_low >= -1e-12, "emd_approx within epsilon");
    v.require(secs < 60.0, "runtime < 60 s");
  });

  report(3, "gradient suite", [](Verdict& v) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto reports = run_gradcheck_suite(303);
    double worst_loss = 0.0, worst_prim = 0.0;
    std::size_t skipped = 0;
    for (const auto& r : reports) {
      v.require(r.passed(), r.name);
      skipped += r.result.skipped;
      (r.tolerance == 1e-4 ? worst_loss : worst_prim) = std::max(r.tolerance == 1e-4 ? worst_loss : worst_prim, r.result.max_rel_error);
    }
    const auto losses = loss_check_names();
    for (const auto& name : losses) {
      const auto it = std::find_if(reports.begin(), reports.end(), [&](const GradCheckReport& r) { return r.name == name; });
      v.require(it != reports.end() && it->tolerance <= 1e-4, name + " tolerance 1e-4");
    }
    for (const auto& name : primitive_check_names()) {
      const auto it = std::find_if(reports.begin(), reports.end(), [&](const GradCheckReport& r) { return r.name == name; });
      v.require(it != reports.end() && it->tolerance <= 1e-6, name + " tolerance 1e-6");
    }
    const double secs = seconds_since(t0);
    v.detail << reports.size() << " checks, worst loss " << worst_loss << ", worst primitive " << worst_prim << ", skipped coordinates "
             << skipped;
    v.require(secs < 120.0, "runtime < 120 s");
  });

  report(4, "BPS correctness", [](Verdict& v) {
    Rng rng(404);
    int clouds = 0;
    bool exact = true, invariants = true;
    for (int r : {16, 32}) {
      const BasisPointSet basis(r);
      for (int c = 0; c < 50; ++c) {
        const PointCloud cloud = random_cloud(rng, 20 + Eigen::Index(rng.below(200)));
        const BpsEncoding enc = encode(cloud, basis);
        for (Eigen::Index j = 0; j < basis.size(); ++j) {
          const Vector3d b = basis.points().col(j);
          Eigen::Index best = 0;
          double best_d2 = std::numeric_limits<double>::infinity();
          for (Eigen::Index i = 0; i < cloud.cols(); ++i) {
            const double d2 = (cloud.col(i) - b).squaredNorm();
            if (d2 < best_d2) {
              best_d2 = d2;
              best = i;
            }
          }
          exact = exact && enc.deltas.col(j) == cloud.col(best) - b;
          invariants = invariants && std::abs(enc.distances[j] - enc.deltas.col(j).norm()) <= 1e-9 &&
                       cloud.col(enc.source[std::size_t(j)]) == b + enc.deltas.col(j);
        }
        ++clouds;
      }
    }
    v.detail << clouds << " clouds, bit-exact " << (exact ? "yes" : "no") << ", invariants " << (invariants ? "hold" : "broken");
    v.require(exact, "encode equals linear scan");
    v.require(invariants, "norm and membership invariants");
  });

  report(5, "IoU", [](Verdict& v) {
    Rng rng(505);
    const PointCloud c = random_cloud(rng, 300);
    const double same = iou(voxelize(c), voxelize(c));
    PointCloud left = random_cloud(rng, 100), right = random_cloud(rng, 100);
    left.row(0) *= 0.4;
    right.row(0) = right.row(0).array() * 0.4 + 0.6;
    const double disjoint = iou(voxelize(left), voxelize(right));
    // A point on a voxel corner touches the 2x2x2 block around it; shifting by one voxel
    // along x shares 4 of 8 voxels.
    const int r = 8;
    PointCloud a(3, 1), b(3, 1);
    a << 2.0 / r, 2.0 / r, 2.0 / r;
    b << 3.0 / r, 2.0 / r, 2.0 / r;
    const VoxelGrid ga = voxelize(a, r), gb = voxelize(b, r);
    const double overlap = iou(ga, gb);
    v.detail << "identical " << same << ", disjoint " << disjoint << ", overlap " << overlap;
    v.require(same == 1.0, "identical clouds give 1");
    v.require(disjoint == 0.0, "disjoint clouds give 0");
    v.require((ga.occupancy.array() > 0).count() == 8 && (gb.occupancy.array() > 0).count() == 8, "8 voxels each");
    v.require(overlap == 1.0 / 3.0, "overlap gives 1/3 exactly");
  });

  report(6, "surface consistency", [](Verdict& v) {
    double worst = 0.0;
    std::size_t points = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
      const std::uint64_t seed = derive_seed(606, s);
      const Mesh mesh = random_shape(seed);
      const Pose pose = random_view(mesh, derive_seed(seed, "view"));
      const auto k = CameraIntrinsics::centered(64, 64, 64, 64);
      const PointCloud cloud = backproject(render_depth(mesh, k, pose, 64, 64), k);
      const Eigen::Matrix3Xd verts = pose.apply(mesh.vertices);
      for (Eigen::Index i = 0; i < cloud.cols(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index t = 0; t < mesh.triangle_count(); ++t) {
          best = std::min(best, point_triangle_distance(cloud.col(i), verts.col(mesh.triangles(0, t)), verts.col(mesh.triangles(1, t)),
                                                        verts.col(mesh.triangles(2, t))));
        }
        worst = std::max(worst, best);
      }
      points += std::size_t(cloud.cols());
    }
    v.detail << points << " points, worst distance " << worst;
    v.require(worst <= 1e-6, "distance <= 1e-6");
  });

  Training tr;
  tr.root = scratch / "ds20";
  report(7, "overfit capability", [&](Verdict& v) {
    const auto t0 = std::chrono::steady_clock::now();
    DatasetConfig dc;
    dc.root = tr.root;
    dc.instances = 20;
    dc.views = 1;
    dc.seed = 1;
    make_dataset(dc);
    tr.data = load_dataset(tr.root);
    const CompletionConfig cfg = CompletionConfig::desk();
    tr.model = std::make_unique<CompletionModel>(cfg, derive_seed(1, "init"));
    double baseline = 0.0;
    for (const auto& inst : tr.data) {
      const auto& view = inst.views[0];
      tr.pairs.push_back(make_training_pair(inst.name, backproject(view.depth, view.k), view.pose.apply(inst.full), tr.model->basis()));
      baseline += chamfer(resample(tr.pairs.back().partial, cfg.output_points()), tr.pairs.back().full).value;
    }
    baseline /= double(tr.pairs.size());
    TrainConfig tc;
    tc.epochs = 100;
    tc.batch_size = 5;
    tc.adam.lr = 1e-3;
    tc.seed = derive_seed(1, "shuffle");
    const auto history = pretrain(*tr.model, tr.pairs, tc);
    double trained = 0.0;
    for (const auto& p : tr.pairs) trained += chamfer(forward(p.encoding, *tr.model).full_cloud, p.full).value;
    trained /= double(tr.pairs.size());
    int upticks = 0;
    for (std::size_t e = 1; e < 20 && e < history.size(); ++e) upticks += history[e].loss >= history[e - 1].loss;
    const double secs = seconds_since(t0);
    v.detail << "config r=" << cfg.resolution << " m=" << cfg.keypoints << " N=" << cfg.output_points() << ", " << tc.epochs
             << " epochs; baseline CD " << baseline << " (recorded " << kIdentityBaselineCd << "), trained CD " << trained
             << ", non-decreasing epochs in first 20: " << upticks;
    v.require(cfg.resolution == 16 && cfg.keypoints == 64 && cfg.output_points() == 256, "desk config");
    v.require(std::abs(baseline - kIdentityBaselineCd) <= 1e-6, "baseline matches oracle run");
    v.require(trained < kIdentityBaselineCd, "trained CD below identity baseline");
    v.require(upticks == 0, "strictly decreasing loss over first 20 epochs");
    v.require(secs < 1800.0, "runtime < 30 min");
  });

  report(8, "refinement efficacy", [&](Verdict& v) {
    const auto t0 = std::chrono::steady_clock::now();
    // Single outlier on a box face seen head-on.
    const Mesh mesh = make_box(Vector3d(2.0, 2.0, 2.0));
    const Pose pose = look_at(Vector3d(0.0, -4.0, 0.0), Vector3d::Zero());
    const auto k = CameraIntrinsics::centered(40, 40, 32, 32);
    const DepthMap clean = render_depth(mesh, k, pose, 32, 32);
    const PointCloud samples = pose.apply(sample_surface(mesh, 4096, 7));
    const PointCloud visible = backproject(clean, k);
    PointCloud full(3, samples.cols() + visible.cols());
    full << samples, visible;
    DepthMap::Raster raster = clean.values();
    raster(16, 16) += 0.5;
    const RefineResult r = refine_depth(DepthMap(raster, clean.mask()), full, k, RefineConfig{});
    const double reduction = 1.0 - std::abs(r.depth.at(16, 16) - clean.at(16, 16)) / 0.5;
    double background = 0.0;
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        if (clean.valid(x, y) && (x != 16 || y != 16)) background = std::max(background, std::abs(r.depth.at(x, y) - clean.at(x, y)));

    // Joint refinement on 25 dB noise, starting from the C7 model.
    double pre = 0.0, post = 0.0;
    int improved = 0;
    const int joint_instances = 4;
    if (!tr.model) throw std::runtime_error("C7 model unavailable");
    for (int i = 0; i < joint_instances; ++i) {
      const auto& view = tr.data[std::size_t(i)].views[0];
      const PointCloud gt_full = view.pose.apply(tr.data[std::size_t(i)].full);
      const PointCloud gt_partial = backproject(view.depth, view.k);
      const DepthMap noisy = inject_noise(view.depth, 25.0, derive_seed(derive_seed(1, "noise"), std::uint64_t(i)));
      CompletionModel model = *tr.model;
      const JointInstance inst = make_joint_instance(noisy, view.k, model.basis(), &gt_full, &gt_partial);
      RefineConfig rc;
      rc.steps = 50;
      rc.depth_lr = 1e-3;
      rc.net_lr = 1e-4;
      rc.lambda_p = 0.1;
      const RefineResult jr = joint_refine(noisy, model, inst, rc);
      pre += jr.trace.front().cd;
      post += jr.trace.back().cd;
      improved += jr.trace.back().cd < jr.trace.front().cd;
    }
    pre /= joint_instances;
    post /= joint_instances;
    const double secs = seconds_since(t0);
    v.detail << "flying pixel reduction " << reduction << ", background max motion " << background << "; joint CD " << pre << " -> "
             << post << " (" << improved << "/" << joint_instances << " instances improved)";
    v.require(reduction >= kFlyingReduction, "flying-pixel error reduced by >= 99%");
    v.require(background < kBackgroundMotion, "background motion < 1e-3");
    v.require(post < pre, "post-refinement CD below pre-refinement CD");
    v.require(secs < 300.0, "runtime < 5 min");
  });

  report(9, "noise calibration", [&](Verdict& v) {
    if (!tr.model) throw std::runtime_error("C7 model unavailable");
    double worst = 0.0, clean_cd = 0.0, noisy_cd = 0.0;
    for (std::size_t i = 0; i < tr.data.size(); ++i) {
      const auto& view = tr.data[i].views[0];
      const auto seed = derive_seed(derive_seed(1, "noise"), std::uint64_t(i));
      for (double target : {25.0, 30.0, 35.0, 40.0}) worst = std::max(worst, std::abs(psnr(view.depth, inject_noise(view.depth, target, seed)) - target));
      const PointCloud gt = view.pose.apply(tr.data[i].full);
      clean_cd += chamfer(end_to_end(view.depth, view.k, *tr.model), gt).value;
      noisy_cd += chamfer(end_to_end(inject_noise(view.depth, 35.0, seed), view.k, *tr.model), gt).value;
    }
    const double ratio = noisy_cd / clean_cd;
    v.detail << "worst PSNR deviation " << worst << " dB; CD ratio 35 dB / clean " << ratio << " (bound " << kNoiseCdRatio << ")";
    v.require(worst <= 0.5, "PSNR within 0.5 dB");
    v.require(ratio <= kNoiseCdRatio, "CD ratio within bound");
  });

  report(10, "determinism", [&](Verdict& v) {
    const fs::path d = scratch / "det";
    auto gen = [&](const std::string& tag) {
      return run_cli("gen-data --out '" + (d / ("ds_" + tag)).string() + "' --instances 3 --views 2 --width 24 --height 24 --gt-points 256 --seed 7");
    };
    auto train = [&](const std::string& tag) {
      return run_cli("pretrain --data '" + (d / "ds_a").string() + "' --out '" + (d / ("run_" + tag)).string() +
                     "' --epochs 2 --batch-size 2 --resolution 8 --channels 4,8 --fc1 32 --fc2 64 --keypoints 16 --seed 7");
    };
    auto refine = [&](const std::string& tag) {
      const std::string view = (d / "ds_a" / "inst_0000" / "view_00").string();
      return run_cli("refine --depth '" + view + ".f32' --cam '" + view + ".cam' --model '" + (d / "run_a" / "model.dckp").string() +
                     "' --gt '" + (d / "ds_a" / "inst_0000" / "full.ply").string() + "' --gt-frame model --steps 3 --depth-lr 0.001" +
                     " --resolution 8 --channels 4,8 --fc1 32 --fc2 64 --keypoints 16 --out '" + (d / ("ref_" + tag)).string() + "'");
    };
    int codes = 0;
    for (const char* tag : {"a", "b"}) codes += std::abs(gen(tag));
    for (const char* tag : {"a", "b"}) codes += std::abs(train(tag));
    for (const char* tag : {"a", "b"}) codes += std::abs(refine(tag));
    v.require(codes == 0, "all CLI runs exit 0");
    auto same = [&](const fs::path& a, const fs::path& b, const std::string& what) {
      const std::string x = read_bytes(d / a), y = read_bytes(d / b);
      const bool ok = !x.empty() && x == y;
      v.require(ok, what + " identical");
      return ok;
    };
    const bool m = same("ds_a/manifest.tsv", "ds_b/manifest.tsv", "manifest");
    const bool c = same("run_a/model.dckp", "run_b/model.dckp", "checkpoint");
    const bool h = same("run_a/history.csv", "run_b/history.csv", "history");
    const bool t = same("ref_a/trace.csv", "ref_b/trace.csv", "trace");
    const bool r = same("ref_a/refined.f32", "ref_b/refined.f32", "refined depth") &&
                   same("ref_a/model.dckp", "ref_b/model.dckp", "refined checkpoint");
    v.detail << "manifest " << (m ? "same" : "differs") << ", checkpoint " << (c ? "same" : "differs") << ", history "
             << (h ? "same" : "differs") << ", trace " << (t ? "same" : "differs") << ", refined depth " << (r ? "same" : "differs");
  });

  fs::remove_all(scratch);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
