#include "depthint/projection.hpp"

#include <algorithm>
#include <cmath>

#include "depthint/random.hpp"

namespace depthint {
namespace {

double max_valid(const DepthMap& d) {
  double m = 0.0;
  for (Eigen::Index i = 0; i < d.values().size(); ++i) {
    if (d.mask().data()[i]) m = std::max(m, d.values().data()[i]);
  }
  return m;
}

double mse_valid(const DepthMap& a, const DepthMap::Raster& b) {
  double sum = 0.0;
  std::size_t n = 0;
  for (Eigen::Index i = 0; i < a.values().size(); ++i) {
    if (!a.mask().data()[i]) continue;
    const double e = a.values().data()[i] - b.data()[i];
    sum += e * e;
    ++n;
  }
  return sum / double(n);
}

double psnr_from_mse(double max_value, double mse) {
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_value * max_value / mse);
}

DepthMap::Raster perturbed(const DepthMap& depth, const std::vector<double>& noise, double gain) {
  DepthMap::Raster out = depth.values();
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    if (!depth.mask().data()[i]) continue;
    out.data()[i] = std::max(kMinNoisyDepth, out.data()[i] + gain * noise[std::size_t(i)]);
  }
  return out;
}

}  // namespace

DepthMap inject_noise(const DepthMap& depth, double target_psnr_db, std::uint64_t seed) {
  if (!std::isfinite(target_psnr_db)) {
    throw DomainError("inject_noise: target PSNR must be finite");
  }
  if (depth.valid_count() == 0) throw DomainError("inject_noise: depth map has no valid pixels");

  const double peak = max_valid(depth);
  const double sigma = peak / std::pow(10.0, target_psnr_db / 20.0);

  std::vector<double> noise(std::size_t(depth.values().size()), 0.0);
  double realized = 0.0;
  for (Eigen::Index i = 0; i < depth.values().size(); ++i) {
    if (!depth.mask().data()[i]) continue;
    noise[std::size_t(i)] = sigma * counter_normal(seed, std::uint64_t(i));
    realized += noise[std::size_t(i)] * noise[std::size_t(i)];
  }
  realized /= double(depth.valid_count());

  DepthMap::Raster out = perturbed(depth, noise, 1.0);
  double achieved = psnr_from_mse(peak, mse_valid(depth, out));
  if (std::abs(achieved - target_psnr_db) > 0.5 && realized > 0.0) {
    out = perturbed(depth, noise, sigma / std::sqrt(realized));
    achieved = psnr_from_mse(peak, mse_valid(depth, out));
  }
  if (!(std::abs(achieved - target_psnr_db) <= 0.5)) {
    throw DomainError("inject_noise: target PSNR " + std::to_string(target_psnr_db) +
                      " dB is unreachable (achieved " + std::to_string(achieved) + " dB)");
  }
  return DepthMap(std::move(out), depth.mask());
}

double psnr(const DepthMap& reference, const DepthMap& other) {
  if (!reference.same_layout(other)) {
    throw DomainError("psnr: dimension or mask mismatch");
  }
  if (reference.valid_count() == 0) throw DomainError("psnr: no valid pixels");
  return psnr_from_mse(max_valid(reference), mse_valid(reference, other.values()));
}

}  // namespace depthint
