#include "depthint/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "depthint/losses.hpp"

namespace depthint {

VoxelGrid::VoxelGrid(int r) : resolution(r) {
  if (r < 1) throw DomainError("voxel grid: resolution must be >= 1");
  occupancy = Eigen::VectorXd::Zero(Eigen::Index(r) * r * r);
}

VoxelGrid voxelize(const PointCloud& unit_cloud, int resolution) {
  if (unit_cloud.cols() == 0) throw DomainError("voxelize: empty cloud");
  VoxelGrid grid(resolution);
  for (Eigen::Index i = 0; i < unit_cloud.cols(); ++i) {
    const Vector3d p = unit_cloud.col(i) * double(resolution);
    // Voxel k has center k + 0.5; only the (up to) two voxels per axis whose centers are
    // within one unit of p overlap the point cube.
    int lo[3];
    for (int d = 0; d < 3; ++d) lo[d] = int(std::floor(p[d] - 0.5));
    for (int dz = 0; dz < 2; ++dz) {
      for (int dy = 0; dy < 2; ++dy) {
        for (int dx = 0; dx < 2; ++dx) {
          const int idx[3] = {lo[0] + dx, lo[1] + dy, lo[2] + dz};
          double overlap = 1.0;
          bool inside = true;
          for (int d = 0; d < 3; ++d) {
            if (idx[d] < 0 || idx[d] >= resolution) inside = false;
            overlap *= std::max(0.0, 1.0 - std::abs(p[d] - (idx[d] + 0.5)));
          }
          if (!inside || overlap <= 0.0) continue;
          double& cell = grid.at(idx[0], idx[1], idx[2]);
          cell = std::max(cell, overlap);
        }
      }
    }
  }
  return grid;
}

double iou(const VoxelGrid& gt, const VoxelGrid& pred) {
  if (gt.resolution != pred.resolution) {
    throw DomainError("iou: resolution mismatch (" + std::to_string(gt.resolution) + " vs " +
                      std::to_string(pred.resolution) + ")");
  }
  Eigen::Index both = 0;
  Eigen::Index either = 0;
  for (Eigen::Index i = 0; i < gt.occupancy.size(); ++i) {
    if (gt.occupancy[i] * pred.occupancy[i] > 0.0) ++both;
    if (gt.occupancy[i] + pred.occupancy[i] > 0.0) ++either;
  }
  return either == 0 ? 1.0 : double(both) / double(either);
}

PointCloud resample(const PointCloud& cloud, Eigen::Index n) {
  if (cloud.cols() == 0) throw DomainError("resample: empty cloud");
  PointCloud out(3, n);
  const Eigen::Index m = cloud.cols();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index src = n <= m ? Eigen::Index((i * m) / n) : i % m;
    out.col(i) = cloud.col(src);
  }
  return out;
}

EvaluationRow evaluate(const std::string& instance, const PointCloud& pred, const PointCloud& gt,
                       int voxel_resolution) {
  const NormTransform frame = fit_normalization(gt);
  const PointCloud p = frame.apply(pred);
  const PointCloud g = frame.apply(gt);
  EvaluationRow row;
  row.instance = instance;
  row.cd = chamfer(p, g).value;
  const Eigen::Index s = std::min(p.cols(), g.cols());
  const PointCloud ps = p.cols() == s ? p : resample(p, s);
  const PointCloud gs = g.cols() == s ? g : resample(g, s);
  row.emd = s <= kEmdExactCap ? emd_exact(ps, gs).value : emd_approx(ps, gs, kEvalAuctionEpsilon).value;
  row.iou = iou(voxelize(g, voxel_resolution), voxelize(p, voxel_resolution));
  return row;
}

std::string evaluation_csv_row(const EvaluationRow& row) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), ",%.17g,%.17g,%.17g", row.cd, row.emd, row.iou);
  return row.instance + buf;
}

void write_evaluation_csv(const std::filesystem::path& path, const std::vector<EvaluationRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "instance,cd,emd,iou\n";
  for (const auto& row : rows) out << evaluation_csv_row(row) << "\n";
}

}  // namespace depthint
