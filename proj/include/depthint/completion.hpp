#pragma once

// BPS-grid completion network: 3D conv encoder, dense bottleneck, deconv decoder, delta and
// confidence heads, confidence-ranked keypoints and a folding decoder that expands each
// keypoint into a u x u patch.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "depthint/autodiff.hpp"
#include "depthint/bps.hpp"
#include "depthint/core.hpp"

namespace depthint {

struct CompletionConfig {
  int resolution = 16;
  std::vector<int> channels{8, 16, 32, 64};
  int fc1 = 256;
  int fc2 = 512;
  int keypoints = 64;
  int fold_u = 2;
  int fold_hidden = 32;
  int kernel = 3;

  static CompletionConfig desk() { return {}; }
  static CompletionConfig paper() { return {32, {32, 64, 128, 256}, 1024, 2048, 256, 2, 32, 3}; }

  int stages() const { return int(channels.size()); }
  /// Spatial extent after the last pooling stage.
  int bottleneck_extent() const { return resolution >> stages(); }
  int bottleneck_channels() const;
  int feature_channels() const { return channels.front(); }
  int output_points() const { return keypoints * fold_u * fold_u; }
  void validate() const;
};

/// Network parameters plus the fixed basis they operate on.
class CompletionModel {
 public:
  /// Weights drawn from a SplitMix64 stream keyed by `seed`. The delta head and the folding
  /// output layer start at zero, so an untrained model decodes onto the basis grid.
  CompletionModel(const CompletionConfig& config, std::uint64_t seed);

  const CompletionConfig& config() const { return config_; }
  const BasisPointSet& basis() const { return basis_; }
  std::vector<ad::Parameter>& parameters() { return params_; }
  const std::vector<ad::Parameter>& parameters() const { return params_; }
  ad::Parameter& parameter(const std::string& name);
  const ad::Tensor& tensor(const std::string& name) const;
  std::size_t parameter_count() const;

  void save(const std::filesystem::path& path) const { ad::save_checkpoint(path, params_); }
  void load(const std::filesystem::path& path) { ad::load_checkpoint(path, params_); }

 private:
  CompletionConfig config_;
  BasisPointSet basis_;
  std::vector<ad::Parameter> params_;
};

/// Recorded forward pass. Point sets are [n, 3] tensors (one point per row).
struct CompletionGraph {
  ad::Tensor deltas;      // [r^3, 3]
  ad::Tensor confidence;  // [r^3], non-negative
  ad::Tensor features;    // [r^3, C] decoder features
  std::vector<int> selected;  // basis cells of the keypoints, ascending confidence
  ad::Tensor keypoints;   // [m, 3]
  ad::Tensor full;        // [N, 3]
};

struct CompletionOutput {
  PointCloud deltas;            // 3 x r^3
  Eigen::VectorXd confidence;   // r^3
  PointCloud keypoints;         // 3 x m
  PointCloud full_cloud;        // 3 x N
};

/// [4, r, r, r] network input: channels dx, dy, dz, distance; voxel (z, y, x) is basis cell
/// x + r (y + r z).
ad::Tensor encoding_tensor(const BpsEncoding& encoding);

CompletionGraph forward_graph(const ad::Tensor& input, const CompletionModel& model);
CompletionOutput forward(const BpsEncoding& encoding, const CompletionModel& model);

/// Indices of the m cells with the smallest confidence, ties broken by lower index.
std::vector<int> select_keypoints(const Eigen::VectorXd& confidence, int m);
/// basis[j] + deltas[j] for the selected cells.
PointCloud keypoint_positions(const PointCloud& deltas, const BasisPointSet& basis, const std::vector<int>& cells);

/// u x u lattice in [-g, g]^2, row-major; a single point at the origin when u = 1.
Eigen::Matrix<double, Eigen::Dynamic, 2> fold_lattice(int u, double g);
/// Expands [m, 3] keypoints with [m, C] features into [m u^2, 3]; patch points of keypoint i
/// occupy rows i u^2 .. (i + 1) u^2 - 1.
ad::Tensor fold(const ad::Tensor& keypoints, const ad::Tensor& features, const CompletionModel& model);

ad::Tensor to_tensor(const PointCloud& cloud);
PointCloud to_cloud(const ad::Tensor& points);

/// Scalar-output ops wrapping the loss module. Inputs are [n, 3] point tensors.
ad::Tensor chamfer_op(const ad::Tensor& p, const PointCloud& target);
ad::Tensor partial_consistency_op(const ad::Tensor& partial, const ad::Tensor& full);
/// Mean squared difference to a constant target.
ad::Tensor mse_op(const ad::Tensor& x, const Eigen::VectorXd& target);

/// One training example in the partial cloud's normalized frame.
struct TrainingPair {
  std::string name;
  NormTransform frame;
  PointCloud partial;  // normalized, inside the unit cube
  PointCloud full;     // normalized with the partial cloud's transform
  BpsEncoding encoding;
  Eigen::VectorXd target_distance;  // basis-to-full distance field
};

/// Both clouds in the same (camera) frame; normalization is fitted on the partial cloud.
TrainingPair make_training_pair(std::string name, const PointCloud& partial, const PointCloud& full,
                                const BasisPointSet& basis);

struct PretrainLoss {
  ad::Tensor total;
  double cd = 0.0;
  double conf_mse = 0.0;
};

/// chamfer(full, gt) + mse(confidence, true distance field).
PretrainLoss pretrain_loss(const CompletionGraph& graph, const PointCloud& gt, const Eigen::VectorXd& target_distance);

struct TrainConfig {
  int epochs = 100;
  int batch_size = 5;  // 0: whole dataset per step
  ad::AdamConfig adam{};
  std::uint64_t seed = 0;
  bool shuffle = true;
};

struct HistoryRow {
  int epoch = 0;
  double loss = 0.0;
  double cd = 0.0;
  double conf_mse = 0.0;
};

/// Adam on the mean pretraining loss over each mini-batch. Epoch statistics average the
/// per-example values observed during that epoch. Throws NumericalError with epoch and
/// batch context on a non-finite loss.
std::vector<HistoryRow> pretrain(CompletionModel& model, const std::vector<TrainingPair>& data,
                                 const TrainConfig& config);

void write_history_csv(const std::filesystem::path& path, const std::vector<HistoryRow>& history);

}  // namespace depthint
