#pragma once

// Training and refinement objectives with analytic gradients.
//
// Differentiability contract: every nearest-neighbor or assignment choice is made on the
// current inputs and then held fixed for the gradient (standard subgradient at ties).
//
// Scaling differs between objectives on purpose: chamfer and EMD average over cloud sizes,
// partial_consistency sums over the partial cloud without averaging. Weight them accordingly.

#include <vector>

#include "depthint/core.hpp"

namespace depthint {

struct LossValue {
  double value = 0.0;
  PointCloud grad_first;   // d value / d first cloud (3 x |first|)
  PointCloud grad_second;  // d value / d second cloud (3 x |second|)
  Eigen::VectorXd grad_pixels;  // depth_l2 only: row-major over all pixels, zero off-mask
  std::vector<Eigen::Index> matching;  // EMD: first[i] is matched to second[matching[i]]
};

/// (1/|P|) sum_x min_y |x-y|^2 + (1/|Q|) sum_y min_x |x-y|^2.
LossValue chamfer(const PointCloud& p, const PointCloud& q);

inline constexpr Eigen::Index kEmdExactCap = 1024;

/// (1/s) min over bijections of sum |x - phi(x)|^2, solved with the Hungarian algorithm.
LossValue emd_exact(const PointCloud& p, const PointCloud& q);

/// Epsilon-scaling auction assignment on the same objective. The averaged value is within
/// `epsilon` above the optimum.
LossValue emd_approx(const PointCloud& p, const PointCloud& q, double epsilon);

/// Minimum-cost assignment for a square cost matrix (row i -> column result[i]).
std::vector<Eigen::Index> hungarian_assignment(const Eigen::MatrixXd& cost);
std::vector<Eigen::Index> auction_assignment(const Eigen::MatrixXd& cost, double epsilon);

/// sum_{p in partial} min_{f in full} |p - f|^2. Not averaged, not symmetric.
LossValue partial_consistency(const PointCloud& partial, const PointCloud& full);

/// Exact Euclidean distance (pixels) from every pixel to the nearest silhouette pixel.
class DistanceField {
 public:
  using Raster = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  explicit DistanceField(const Mask& silhouette);

  int width() const { return int(distance_.cols()); }
  int height() const { return int(distance_.rows()); }
  const Raster& distances() const { return distance_; }
  double at(int u, int v) const { return distance_(v, u); }

  /// Squared distance from a continuous pixel position to the silhouette and its gradient.
  /// Bilinear on the field where the 2x2 stencil is inside the image, exact nearest
  /// silhouette pixel elsewhere.
  double squared_distance(double u, double v, double& du, double& dv) const;

 private:
  Raster distance_;
  std::vector<Eigen::Vector2d> silhouette_pixels_;
};

/// Penalizes full-cloud points that project off the silhouette by their squared pixel
/// distance to it. Gradient is with respect to the 3D points (grad_first).
LossValue projection_loss(const PointCloud& full, const DistanceField& field, const CameraIntrinsics& k);
LossValue projection_loss(const PointCloud& full, const DistanceField::Mask& silhouette, const CameraIntrinsics& k,
                          int width, int height);

/// Mean squared error over valid pixels; masks must match.
LossValue depth_l2(const DepthMap& predicted, const DepthMap& target);

}  // namespace depthint
