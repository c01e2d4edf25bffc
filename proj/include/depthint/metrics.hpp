#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "depthint/core.hpp"

namespace depthint {

/// Occupancy probabilities on an r^3 grid, flat index x + r (y + r z).
struct VoxelGrid {
  int resolution = 0;
  Eigen::VectorXd occupancy;

  explicit VoxelGrid(int r = 32);
  double& at(int x, int y, int z) { return occupancy[x + Eigen::Index(resolution) * (y + Eigen::Index(resolution) * z)]; }
  double at(int x, int y, int z) const { return occupancy[x + Eigen::Index(resolution) * (y + Eigen::Index(resolution) * z)]; }
};

/// Voxelize a unit-cube cloud. Coordinates are scaled by r; each point owns the unit cube
/// centered on it and a voxel's occupancy is the largest overlap volume with any point cube.
/// Parts of point cubes outside the grid are cropped.
VoxelGrid voxelize(const PointCloud& unit_cloud, int resolution = 32);

/// |{V_gt > 0 and V_p > 0}| / |{V_gt + V_p > 0}|. Two empty grids give 1.
double iou(const VoxelGrid& gt, const VoxelGrid& pred);

inline constexpr double kEvalAuctionEpsilon = 1e-8;

struct EvaluationRow {
  std::string instance;
  double cd = 0.0;
  double emd = 0.0;
  double iou = 0.0;
};

/// CD, EMD and voxel IoU with both clouds mapped through the ground truth's normalization.
/// EMD on unequal sizes compares against an evenly strided subsample of the larger cloud;
/// sizes above the exact-solver cap fall back to the auction solver at kEvalAuctionEpsilon.
EvaluationRow evaluate(const std::string& instance, const PointCloud& pred, const PointCloud& gt,
                       int voxel_resolution = 32);

/// CSV with header "instance,cd,emd,iou".
void write_evaluation_csv(const std::filesystem::path& path, const std::vector<EvaluationRow>& rows);
std::string evaluation_csv_row(const EvaluationRow& row);

/// Deterministic resampling to exactly n points: evenly strided when shrinking, cyclic
/// repetition when growing.
PointCloud resample(const PointCloud& cloud, Eigen::Index n);

}  // namespace depthint
