#pragma once

// Depth refinement against a completed cloud, and joint fine-tuning of depth pixels with the
// completion network. Valid depth pixels are the optimization variables; the mask is fixed.

#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "depthint/completion.hpp"
#include "depthint/losses.hpp"

namespace depthint {

struct RefineConfig {
  int steps = 200;
  double depth_lr = 0.05;
  double net_lr = 1e-4;
  double lambda_d = 1.0;
  double lambda_p = 0.1;
  // Depth clamp; when clamp_max <= clamp_min the bounds come from depth_clamp_bounds of the input.
  double clamp_min = 0.0;
  double clamp_max = 0.0;

  void validate() const;
};

/// [0.1 * min valid depth, 10 * max valid depth].
std::pair<double, double> depth_clamp_bounds(const DepthMap& reference);

struct TraceRow {
  int step = 0;
  double l_d = 0.0;
  double l_p = 0.0;
  double cd = 0.0;  // NaN without a reference cloud
};

struct RefineResult {
  DepthMap depth;
  std::vector<TraceRow> trace;  // step 0 is the input state, step i the state after i updates
};

/// Gradient descent on the valid pixels minimizing partial_consistency(backproject(depth), full).
/// `full` is fixed and in the camera frame. L_p in the trace is the projection loss of `full`
/// against the depth's silhouette; CD compares the partial cloud to `reference` when given.
RefineResult refine_depth(const DepthMap& depth, const PointCloud& full, const CameraIntrinsics& k,
                          const RefineConfig& config, const PointCloud* reference = nullptr);

/// Everything about one view that stays fixed while the depth and network change.
struct JointInstance {
  CameraIntrinsics k;
  int width = 0;
  int height = 0;
  DistanceField silhouette;
  NormTransform frame;                   // fitted on the initial partial cloud, then frozen
  std::optional<PointCloud> gt_normalized;  // full ground truth in the normalized frame
  Eigen::VectorXd target_distance;       // basis-to-ground-truth distances when available
  std::optional<PointCloud> reference;   // camera-frame cloud for the trace CD
};

/// `gt_full` and `reference` are camera-frame clouds and may be null.
JointInstance make_joint_instance(const DepthMap& initial, const CameraIntrinsics& k, const BasisPointSet& basis,
                                  const PointCloud* gt_full = nullptr, const PointCloud* reference = nullptr);

struct JointLosses {
  double total = 0.0;
  double cd = 0.0;
  double conf_mse = 0.0;
  double l_d = 0.0;
  double l_p = 0.0;
};

struct JointGraph {
  ad::Tensor total;
  ad::Tensor partial;  // [n, 3] camera frame
  ad::Tensor full;     // [N, 3] camera frame
  JointLosses losses;
};

/// total = [chamfer(P_f, gt) + mse(confidence, gt distances)] + lambda_d L_d + lambda_p L_p.
/// The bracketed terms are computed in the normalized frame and only when ground truth is
/// present; L_d and L_p use camera-frame clouds. `valid_depths` holds the valid pixels in
/// row-major order.
JointGraph joint_graph(const ad::Tensor& valid_depths, const DepthMap& layout, const CompletionModel& model,
                       const JointInstance& instance, const RefineConfig& config);

struct JointState {
  DepthMap depth;
  int adam_step = 0;
};

/// One update: plain descent on depth pixels (then clamped), Adam on the network.
JointLosses joint_step(JointState& state, CompletionModel& model, const JointInstance& instance, const RefineConfig& config);

/// Runs config.steps joint steps from a fresh optimizer state.
RefineResult joint_refine(const DepthMap& depth, CompletionModel& model, const JointInstance& instance,
                          const RefineConfig& config);

/// CSV "step,L_d,L_p,CD".
void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& trace);

}  // namespace depthint
