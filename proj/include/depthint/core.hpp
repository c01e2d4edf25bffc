#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

#include "depthint/error.hpp"

namespace depthint {

template <typename Scalar>
using Vector3 = Eigen::Matrix<Scalar, 3, 1>;

// Points are stored column-wise: cloud.col(i) is the i-th point.
template <typename Scalar>
using PointCloudT = Eigen::Matrix<Scalar, 3, Eigen::Dynamic>;

using Vector3d = Vector3<double>;
using PointCloud = PointCloudT<double>;

/// Pinhole intrinsics (fx, fy in pixels, principal point (cx, cy) in pixels).
/// Pixel centers sit at integer coordinates: column u, row v.
template <typename Scalar>
struct CameraIntrinsicsT {
  Scalar fx{1};
  Scalar fy{1};
  Scalar cx{0};
  Scalar cy{0};

  /// Principal point at the image center (width/2, height/2).
  static CameraIntrinsicsT centered(Scalar fx, Scalar fy, int width, int height) {
    CameraIntrinsicsT k{fx, fy, Scalar(width) / Scalar(2), Scalar(height) / Scalar(2)};
    k.validate();
    return k;
  }

  Eigen::Matrix<Scalar, 3, 3> matrix() const {
    Eigen::Matrix<Scalar, 3, 3> m;
    m << fx, Scalar(0), cx, Scalar(0), fy, cy, Scalar(0), Scalar(0), Scalar(1);
    return m;
  }

  void validate() const {
    if (!(fx > Scalar(0)) || !(fy > Scalar(0)) || !std::isfinite(double(fx)) || !std::isfinite(double(fy))) {
      throw DomainError("camera intrinsics: focal lengths must be positive and finite");
    }
    if (!std::isfinite(double(cx)) || !std::isfinite(double(cy))) {
      throw DomainError("camera intrinsics: principal point must be finite");
    }
  }
};

using CameraIntrinsics = CameraIntrinsicsT<double>;

/// Metric depth raster with a silhouette mask. values(v, u) is row v, column u.
/// Invariant: values > 0 wherever mask is true.
template <typename Scalar>
class DepthMapT {
 public:
  using Raster = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  DepthMapT() = default;

  /// Mask derived from the raster: a pixel is valid iff its depth is finite and > 0.
  explicit DepthMapT(Raster values) : values_(std::move(values)) {
    mask_ = Mask(values_.rows(), values_.cols());
    for (Eigen::Index i = 0; i < values_.size(); ++i) {
      const Scalar z = values_.data()[i];
      const bool valid = std::isfinite(double(z)) && z > Scalar(0);
      mask_.data()[i] = valid;
      if (!valid) values_.data()[i] = Scalar(0);
    }
  }

  DepthMapT(Raster values, Mask mask) : values_(std::move(values)), mask_(std::move(mask)) {
    if (values_.rows() != mask_.rows() || values_.cols() != mask_.cols()) {
      throw DomainError("depth map: mask and raster dimensions differ");
    }
    for (Eigen::Index i = 0; i < values_.size(); ++i) {
      if (mask_.data()[i] && !(values_.data()[i] > Scalar(0) && std::isfinite(double(values_.data()[i])))) {
        throw DomainError("depth map: non-positive depth at masked pixel " + std::to_string(i));
      }
    }
  }

  int width() const { return int(values_.cols()); }
  int height() const { return int(values_.rows()); }
  const Raster& values() const { return values_; }
  const Mask& mask() const { return mask_; }
  Scalar at(int u, int v) const { return values_(v, u); }
  bool valid(int u, int v) const { return mask_(v, u); }
  std::size_t valid_count() const { return std::size_t(mask_.count()); }

  bool same_layout(const DepthMapT& other) const {
    return width() == other.width() && height() == other.height() && (mask_ == other.mask_).all();
  }

 private:
  Raster values_;
  Mask mask_;
};

using DepthMap = DepthMapT<double>;

/// Maps a cloud into the unit cube: p' = (p - center) / scale + (0.5, 0.5, 0.5).
struct NormTransform {
  Vector3d center = Vector3d::Zero();
  double scale = 1.0;

  template <typename Derived>
  PointCloud apply(const Eigen::MatrixBase<Derived>& cloud) const {
    return ((cloud.colwise() - center) / scale).array() + 0.5;
  }

  template <typename Derived>
  PointCloud invert(const Eigen::MatrixBase<Derived>& cloud) const {
    return ((cloud.array() - 0.5) * scale).matrix().colwise() + center;
  }
};

/// Longest bounding-box edge after normalization.
inline constexpr double kUnitCubeExtent = 0.9;

/// Fit a transform that centers the bounding box in [0,1]^3 with longest edge kUnitCubeExtent.
/// A degenerate cloud (zero extent) gets scale 1.
NormTransform fit_normalization(const PointCloud& cloud);

std::pair<PointCloud, NormTransform> normalize(const PointCloud& cloud);

bool all_finite(const PointCloud& cloud);

}  // namespace depthint
