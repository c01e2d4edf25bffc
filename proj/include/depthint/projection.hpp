#pragma once

// Pinhole camera model in the camera frame: Z [u, v, 1]^T = K [X, Y, Z]^T.
// Pixel centers are at integer coordinates (u = column index), no half-pixel offset.

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "depthint/core.hpp"

namespace depthint {

template <typename Scalar>
struct PixelSampleT {
  Scalar u{};
  Scalar v{};
  Scalar z{};
  bool in_frame = false;
};

using PixelSample = PixelSampleT<double>;

/// Direction through pixel (u, v) with unit z component.
template <typename Scalar>
Vector3<Scalar> pixel_ray(const CameraIntrinsicsT<Scalar>& k, Scalar u, Scalar v) {
  return Vector3<Scalar>((u - k.cx) / k.fx, (v - k.cy) / k.fy, Scalar(1));
}

/// One point per valid pixel, row-major order over valid pixels.
template <typename Scalar>
PointCloudT<Scalar> backproject(const DepthMapT<Scalar>& depth, const CameraIntrinsicsT<Scalar>& k) {
  k.validate();
  const auto count = Eigen::Index(depth.valid_count());
  if (count == 0) throw DomainError("backproject: depth map has no valid pixels");
  PointCloudT<Scalar> cloud(3, count);
  Eigen::Index i = 0;
  for (int v = 0; v < depth.height(); ++v) {
    for (int u = 0; u < depth.width(); ++u) {
      if (!depth.valid(u, v)) continue;
      const Scalar z = depth.at(u, v);
      cloud(0, i) = (Scalar(u) - k.cx) * z / k.fx;
      cloud(1, i) = (Scalar(v) - k.cy) * z / k.fy;
      cloud(2, i) = z;
      ++i;
    }
  }
  return cloud;
}

/// Rays of the valid pixels in backprojection order; backproject(D).col(i) == D_i * rays.col(i)
/// up to rounding.
template <typename Scalar>
PointCloudT<Scalar> valid_pixel_rays(const DepthMapT<Scalar>& depth, const CameraIntrinsicsT<Scalar>& k) {
  PointCloudT<Scalar> rays(3, Eigen::Index(depth.valid_count()));
  Eigen::Index i = 0;
  for (int v = 0; v < depth.height(); ++v) {
    for (int u = 0; u < depth.width(); ++u) {
      if (depth.valid(u, v)) rays.col(i++) = pixel_ray(k, Scalar(u), Scalar(v));
    }
  }
  return rays;
}

/// Pixel centers sit on integers, so the image covers [-0.5, width - 0.5) x [-0.5, height - 0.5).
/// Samples outside it are kept with in_frame = false.
template <typename Scalar>
std::vector<PixelSampleT<Scalar>> project(const PointCloudT<Scalar>& cloud, const CameraIntrinsicsT<Scalar>& k,
                                          int width, int height) {
  k.validate();
  std::vector<PixelSampleT<Scalar>> samples(std::size_t(cloud.cols()));
  for (Eigen::Index i = 0; i < cloud.cols(); ++i) {
    const Scalar z = cloud(2, i);
    if (!(z > Scalar(0))) {
      throw DomainError("project: point " + std::to_string(i) + " is behind the camera (z <= 0)");
    }
    auto& s = samples[std::size_t(i)];
    s.u = k.fx * cloud(0, i) / z + k.cx;
    s.v = k.fy * cloud(1, i) / z + k.cy;
    s.z = z;
    const Scalar half(0.5);
    s.in_frame = s.u >= -half && s.u < Scalar(width) - half && s.v >= -half && s.v < Scalar(height) - half;
  }
  return samples;
}

/// Floor applied to noisy depths.
inline constexpr double kMinNoisyDepth = 1e-3;

/// Zero-mean Gaussian noise on valid pixels with sigma^2 = MAX^2 / 10^(psnr/10), MAX the largest
/// valid input depth. Each pixel draws from a counter-based stream keyed by (seed, pixel index).
/// The realized PSNR is measured; if it misses the target by more than 0.5 dB the realization is
/// rescaled onto the target. Throws DomainError when the target is non-finite or unreachable.
DepthMap inject_noise(const DepthMap& depth, double target_psnr_db, std::uint64_t seed);

/// 10 log10(MAX^2 / MSE) over valid pixels, MAX = largest valid value of `reference`.
/// Identical maps give +infinity. Not symmetric: swapping arguments changes MAX.
double psnr(const DepthMap& reference, const DepthMap& other);

}  // namespace depthint
