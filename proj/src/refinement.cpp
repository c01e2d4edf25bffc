#include "depthint/refinement.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>

#include "depthint/error.hpp"
#include "depthint/projection.hpp"

namespace depthint {

using ad::Tensor;

void RefineConfig::validate() const {
  if (steps < 1) throw DomainError("refine config: steps must be >= 1");
  if (!(depth_lr > 0.0) || !(net_lr > 0.0)) throw DomainError("refine config: learning rates must be positive");
  if (!(lambda_d >= 0.0) || !(lambda_p >= 0.0)) throw DomainError("refine config: loss weights must be non-negative");
  if (clamp_max > clamp_min && !(clamp_min > 0.0)) throw DomainError("refine config: depth clamp floor must be positive");
}

std::pair<double, double> depth_clamp_bounds(const DepthMap& reference) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (Eigen::Index i = 0; i < reference.values().size(); ++i) {
    if (!reference.mask().data()[i]) continue;
    lo = std::min(lo, reference.values().data()[i]);
    hi = std::max(hi, reference.values().data()[i]);
  }
  if (hi == 0.0) throw DomainError("depth clamp bounds: no valid pixels");
  return {0.1 * lo, 10.0 * hi};
}

namespace {

std::pair<double, double> resolve_bounds(const RefineConfig& config, const DepthMap& depth) {
  if (config.clamp_max > config.clamp_min) return {config.clamp_min, config.clamp_max};
  return depth_clamp_bounds(depth);
}

std::vector<double> valid_values(const DepthMap& depth) {
  std::vector<double> z;
  z.reserve(depth.valid_count());
  for (Eigen::Index i = 0; i < depth.values().size(); ++i) {
    if (depth.mask().data()[i]) z.push_back(depth.values().data()[i]);
  }
  return z;
}

DepthMap with_valid_values(const DepthMap& layout, const std::vector<double>& z) {
  DepthMap::Raster values = layout.values();
  std::size_t j = 0;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (layout.mask().data()[i]) values.data()[i] = z[j++];
  }
  return DepthMap(std::move(values), layout.mask());
}

double require_finite(double value, const char* what, int step) {
  if (!std::isfinite(value)) {
    throw NumericalError(std::string(what) + ": non-finite loss at step " + std::to_string(step));
  }
  return value;
}

}  // namespace

RefineResult refine_depth(const DepthMap& depth, const PointCloud& full, const CameraIntrinsics& k,
                          const RefineConfig& config, const PointCloud* reference) {
  config.validate();
  if (full.cols() == 0) throw DomainError("refine_depth: empty full cloud");
  const auto [lo, hi] = resolve_bounds(config, depth);
  const PointCloud rays = valid_pixel_rays(depth, k);
  const DistanceField field(depth.mask());
  const double l_p = projection_loss(full, field, k).value;

  RefineResult result{depth, {}};
  std::vector<double> z = valid_values(depth);
  for (int step = 0;; ++step) {
    const PointCloud partial = backproject(result.depth, k);
    const LossValue l_d = partial_consistency(partial, full);
    TraceRow row{step, require_finite(l_d.value, "refine_depth", step), l_p, std::numeric_limits<double>::quiet_NaN()};
    if (reference) row.cd = chamfer(partial, *reference).value;
    result.trace.push_back(row);
    if (step == config.steps) break;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double g = l_d.grad_first.col(Eigen::Index(i)).dot(rays.col(Eigen::Index(i)));
      z[i] = std::clamp(z[i] - config.depth_lr * g, lo, hi);
    }
    result.depth = with_valid_values(depth, z);
  }
  return result;
}

JointInstance make_joint_instance(const DepthMap& initial, const CameraIntrinsics& k, const BasisPointSet& basis,
                                  const PointCloud* gt_full, const PointCloud* reference) {
  k.validate();
  JointInstance inst{k, initial.width(), initial.height(), DistanceField(initial.mask()),
                     fit_normalization(backproject(initial, k)), std::nullopt, Eigen::VectorXd(), std::nullopt};
  if (gt_full) {
    inst.gt_normalized = inst.frame.apply(*gt_full);
    inst.target_distance = distance_field(*inst.gt_normalized, basis);
  }
  if (reference) inst.reference = *reference;
  return inst;
}

namespace {

/// Camera-frame points z_i * ray_i as an [n, 3] tensor.
Tensor backproject_op(const Tensor& z, const DepthMap& layout, const CameraIntrinsics& k) {
  const DepthMap current = with_valid_values(layout, std::vector<double>(z.values().begin(), z.values().end()));
  const PointCloud points = backproject(current, k);
  auto rays = std::make_shared<PointCloud>(valid_pixel_rays(layout, k));
  return ad::custom("backproject", {z}, {int(points.cols()), 3}, std::vector<double>(points.data(), points.data() + points.size()),
                    [rays](std::span<const double> g, std::size_t, std::span<double> dz) {
                      for (std::size_t i = 0; i < dz.size(); ++i) {
                        dz[i] += g[3 * i] * (*rays)(0, Eigen::Index(i)) + g[3 * i + 1] * (*rays)(1, Eigen::Index(i)) +
                                 g[3 * i + 2] * (*rays)(2, Eigen::Index(i));
                      }
                    });
}

/// Applies (inverse = false) or inverts a normalization on [n, 3] points.
Tensor frame_op(const Tensor& points, const NormTransform& frame, bool inverse) {
  const PointCloud in = to_cloud(points);
  const PointCloud out = inverse ? frame.invert(in) : frame.apply(in);
  const double factor = inverse ? frame.scale : 1.0 / frame.scale;
  return ad::custom(inverse ? "denormalize" : "normalize", {points}, points.shape(),
                    std::vector<double>(out.data(), out.data() + out.size()),
                    [factor](std::span<const double> g, std::size_t, std::span<double> dst) {
                      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * g[i];
                    });
}

/// BPS encoding as a function of the cloud: each cell's delta and distance depend on its
/// nearest point, held fixed for the gradient.
Tensor bps_encode_op(const Tensor& points, const BasisPointSet& basis) {
  auto enc = std::make_shared<BpsEncoding>(encode_unbounded(to_cloud(points), basis));
  const Tensor values = encoding_tensor(*enc);
  return ad::custom("bps_encode", {points}, values.shape(), std::vector<double>(values.values().begin(), values.values().end()),
                    [enc](std::span<const double> g, std::size_t, std::span<double> dst) {
                      const std::size_t cells = enc->source.size();
                      for (std::size_t j = 0; j < cells; ++j) {
                        const std::size_t src = std::size_t(enc->source[j]);
                        const double dist = enc->distances[Eigen::Index(j)];
                        const double gd = g[3 * cells + j];
                        for (std::size_t d = 0; d < 3; ++d) {
                          double v = g[d * cells + j];
                          if (dist > 0.0) v += gd * enc->deltas(Eigen::Index(d), Eigen::Index(j)) / dist;
                          dst[3 * src + d] += v;
                        }
                      }
                    });
}

Tensor projection_op(const Tensor& full, const JointInstance& inst) {
  auto loss = std::make_shared<LossValue>(projection_loss(to_cloud(full), inst.silhouette, inst.k));
  return ad::custom("projection_loss", {full}, {}, {loss->value},
                    [loss](std::span<const double> g, std::size_t, std::span<double> dst) {
                      const double* src = loss->grad_first.data();
                      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[0] * src[i];
                    });
}

}  // namespace

JointGraph joint_graph(const Tensor& valid_depths, const DepthMap& layout, const CompletionModel& model,
                       const JointInstance& instance, const RefineConfig& config) {
  if (layout.width() != instance.width || layout.height() != instance.height) {
    throw DomainError("joint refinement: depth is " + std::to_string(layout.width()) + "x" + std::to_string(layout.height()) +
                      ", instance expects " + std::to_string(instance.width) + "x" + std::to_string(instance.height));
  }
  if (valid_depths.size() != layout.valid_count()) {
    throw DomainError("joint refinement: " + std::to_string(valid_depths.size()) + " depth variables for " +
                      std::to_string(layout.valid_count()) + " valid pixels");
  }
  JointGraph g;
  g.partial = backproject_op(valid_depths, layout, instance.k);
  const Tensor normalized = frame_op(g.partial, instance.frame, false);
  const CompletionGraph net = forward_graph(bps_encode_op(normalized, model.basis()), model);
  g.full = frame_op(net.full, instance.frame, true);

  const Tensor l_d = partial_consistency_op(g.partial, g.full);
  const Tensor l_p = projection_op(g.full, instance);
  g.losses.l_d = l_d.item();
  g.losses.l_p = l_p.item();
  Tensor total = ad::add(ad::scale(l_d, config.lambda_d), ad::scale(l_p, config.lambda_p));
  if (instance.gt_normalized) {
    const PretrainLoss supervised = pretrain_loss(net, *instance.gt_normalized, instance.target_distance);
    g.losses.cd = supervised.cd;
    g.losses.conf_mse = supervised.conf_mse;
    total = ad::add(supervised.total, total);
  }
  g.total = total;
  g.losses.total = total.item();
  return g;
}

JointLosses joint_step(JointState& state, CompletionModel& model, const JointInstance& instance, const RefineConfig& config) {
  config.validate();
  const auto [lo, hi] = resolve_bounds(config, state.depth);
  const Tensor z = Tensor::variable({int(state.depth.valid_count())}, valid_values(state.depth));
  ad::zero_grad(model.parameters());
  const JointGraph g = joint_graph(z, state.depth, model, instance, config);
  require_finite(g.losses.total, "joint_step", state.adam_step + 1);
  g.total.backward();

  std::vector<double> updated(z.values().begin(), z.values().end());
  const auto grad = z.grad();
  for (std::size_t i = 0; i < updated.size(); ++i) updated[i] = std::clamp(updated[i] - config.depth_lr * grad[i], lo, hi);
  state.depth = with_valid_values(state.depth, updated);

  ad::AdamConfig adam;
  adam.lr = config.net_lr;
  ad::adam_step(model.parameters(), adam, ++state.adam_step);
  return g.losses;
}

RefineResult joint_refine(const DepthMap& depth, CompletionModel& model, const JointInstance& instance,
                          const RefineConfig& config) {
  config.validate();
  RefineConfig fixed = config;
  if (!(fixed.clamp_max > fixed.clamp_min)) std::tie(fixed.clamp_min, fixed.clamp_max) = depth_clamp_bounds(depth);
  for (auto& p : model.parameters()) {
    std::fill(p.first_moment.begin(), p.first_moment.end(), 0.0);
    std::fill(p.second_moment.begin(), p.second_moment.end(), 0.0);
  }
  auto trace_cd = [&](const DepthMap& d) {
    return instance.reference ? chamfer(backproject(d, instance.k), *instance.reference).value
                              : std::numeric_limits<double>::quiet_NaN();
  };
  JointState state{depth, 0};
  RefineResult result{depth, {}};
  for (int step = 0; step < fixed.steps; ++step) {
    const double cd = trace_cd(state.depth);
    const JointLosses losses = joint_step(state, model, instance, fixed);
    result.trace.push_back({step, losses.l_d, losses.l_p, cd});
  }
  // Losses of the final state, without an update.
  const Tensor z = Tensor::constant({int(state.depth.valid_count())}, valid_values(state.depth));
  const JointGraph last = joint_graph(z, state.depth, model, instance, fixed);
  result.trace.push_back({fixed.steps, last.losses.l_d, last.losses.l_p, trace_cd(state.depth)});
  result.depth = state.depth;
  return result;
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& trace) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "step,L_d,L_p,CD\n";
  char buf[128];
  for (const auto& row : trace) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", row.step, row.l_d, row.l_p, row.cd);
    out << buf;
  }
}

}  // namespace depthint
