#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "depthint/core.hpp"

namespace depthint {

/// r^3 cell centers (i + 0.5) / r of the unit cube; x index fastest, then y, then z.
class BasisPointSet {
 public:
  explicit BasisPointSet(int resolution = 32);

  int resolution() const { return resolution_; }
  Eigen::Index size() const { return points_.cols(); }
  double spacing() const { return 1.0 / resolution_; }
  const PointCloud& points() const { return points_; }
  Eigen::Index index(int x, int y, int z) const { return x + Eigen::Index(resolution_) * (y + Eigen::Index(resolution_) * z); }

 private:
  int resolution_;
  PointCloud points_;
};

/// Uniform-grid bucketing of a cloud for exact nearest-neighbor queries.
/// Equidistant candidates resolve to the lowest point index.
class SpatialIndex {
 public:
  SpatialIndex(const PointCloud& cloud, int cells_per_axis);

  /// (point index, Euclidean distance) of the exact nearest neighbor.
  std::pair<Eigen::Index, double> nearest(const Vector3d& query) const;

  const PointCloud& cloud() const { return cloud_; }

 private:
  Eigen::Vector3i cell_of(const Vector3d& p) const;
  std::size_t flat(int x, int y, int z) const { return std::size_t(x) + std::size_t(cells_) * (std::size_t(y) + std::size_t(cells_) * std::size_t(z)); }

  PointCloud cloud_;
  int cells_;
  Vector3d lo_;
  Vector3d cell_size_;
  std::vector<std::size_t> cell_start_;
  std::vector<Eigen::Index> order_;
};

inline std::pair<Eigen::Index, double> nearest(const SpatialIndex& index, const Vector3d& query) {
  return index.nearest(query);
}

struct BpsEncoding {
  int resolution = 0;
  PointCloud deltas;               // 3 x r^3: nearest cloud point minus basis point
  Eigen::VectorXd distances;       // r^3: norms of the deltas
  std::vector<Eigen::Index> source;  // r^3: index of the nearest cloud point (empty after load)
};

/// deltas[j] = argmin_{x in cloud} |b_j - x| - b_j. Requires a non-empty cloud inside [0,1]^3.
BpsEncoding encode(const PointCloud& cloud, const BasisPointSet& basis);

/// Same nearest-point encoding without the unit-cube check (clouds that drift during
/// refinement); the index grid adapts to the cloud's bounding box.
BpsEncoding encode_unbounded(const PointCloud& cloud, const BasisPointSet& basis);

/// points[j] = basis[j] + deltas[j].
PointCloud decode(const BpsEncoding& encoding, const BasisPointSet& basis);

/// Distance from each basis point to its nearest cloud point.
Eigen::VectorXd distance_field(const PointCloud& cloud, const BasisPointSet& basis);

/// "BPSE", u32 resolution, then r^3 little-endian f32 records (dx, dy, dz, dist).
void save_encoding(const std::filesystem::path& path, const BpsEncoding& encoding);
BpsEncoding load_encoding(const std::filesystem::path& path);

}  // namespace depthint
