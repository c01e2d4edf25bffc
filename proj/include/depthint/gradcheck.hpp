#pragma once

// Finite-difference checks of every loss gradient and autodiff primitive on random inputs.

#include <cstdint>
#include <string>
#include <vector>

#include "depthint/autodiff.hpp"

namespace depthint {

struct GradCheckReport {
  std::string name;
  double tolerance = 0.0;
  ad::GradCheckResult result;

  bool passed() const { return result.checked > 0 && result.max_rel_error <= tolerance; }
};

/// Loss names: chamfer, emd_exact, partial_consistency, projection_loss, depth_l2.
std::vector<std::string> loss_check_names();
/// Primitive names: conv3d, maxpool3d, deconv3d, matmul, add, sub, mul, relu, softplus,
/// concat, reshape, slice, reduce_sum, scale, take, transpose.
std::vector<std::string> primitive_check_names();

/// Loss checks use tolerance 1e-4, primitive checks 1e-6. Throws DomainError on an unknown name.
GradCheckReport run_gradcheck(const std::string& name, std::uint64_t seed);
std::vector<GradCheckReport> run_gradcheck_suite(std::uint64_t seed);

}  // namespace depthint
