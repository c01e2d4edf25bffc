#include "depthint/core.hpp"

namespace depthint {

NormTransform fit_normalization(const PointCloud& cloud) {
  if (cloud.cols() == 0) {
    throw DomainError("normalize: empty cloud");
  }
  if (!all_finite(cloud)) {
    throw DomainError("normalize: non-finite coordinate");
  }
  const Vector3d lo = cloud.rowwise().minCoeff();
  const Vector3d hi = cloud.rowwise().maxCoeff();
  NormTransform t;
  t.center = 0.5 * (lo + hi);
  const double longest = (hi - lo).maxCoeff();
  t.scale = longest > 0.0 ? longest / kUnitCubeExtent : 1.0;
  return t;
}

std::pair<PointCloud, NormTransform> normalize(const PointCloud& cloud) {
  NormTransform t = fit_normalization(cloud);
  return {t.apply(cloud), t};
}

bool all_finite(const PointCloud& cloud) { return cloud.allFinite(); }

}  // namespace depthint
