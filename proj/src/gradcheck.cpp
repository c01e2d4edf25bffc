#include "depthint/gradcheck.hpp"

#include <functional>
#include <map>

#include "depthint/error.hpp"
#include "depthint/losses.hpp"
#include "depthint/random.hpp"

namespace depthint {

using ad::Tensor;

namespace {

constexpr double kLossTolerance = 1e-4;
constexpr double kPrimitiveTolerance = 1e-6;
constexpr double kLossStep = 1e-4;
constexpr double kPrimitiveStep = 1e-5;

PointCloud random_cloud(Rng& rng, Eigen::Index n, double lo = 0.0, double hi = 1.0) {
  PointCloud c(3, n);
  for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = rng.uniform(lo, hi);
  return c;
}

Eigen::VectorXd stack(const PointCloud& a, const PointCloud& b) {
  Eigen::VectorXd x(a.size() + b.size());
  x << Eigen::Map<const Eigen::VectorXd>(a.data(), a.size()), Eigen::Map<const Eigen::VectorXd>(b.data(), b.size());
  return x;
}

/// Two-cloud loss checked over the coordinates of both clouds.
ad::GradCheckResult check_pair(const std::function<LossValue(const PointCloud&, const PointCloud&)>& loss,
                               const PointCloud& a, const PointCloud& b) {
  const LossValue at = loss(a, b);
  auto split = [&](const Eigen::VectorXd& x) {
    return std::pair<PointCloud, PointCloud>(Eigen::Map<const PointCloud>(x.data(), 3, a.cols()),
                                             Eigen::Map<const PointCloud>(x.data() + a.size(), 3, b.cols()));
  };
  auto f = [&](const Eigen::VectorXd& x) {
    const auto [p, q] = split(x);
    return loss(p, q).value;
  };
  return ad::grad_check(f, stack(a, b), stack(at.grad_first, at.grad_second), kLossStep);
}

ad::GradCheckResult check_projection(Rng& rng) {
  const int w = 16, h = 16;
  DistanceField::Mask mask(h, w);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) mask(v, u) = (u - 7.3) * (u - 7.3) + (v - 8.1) * (v - 8.1) <= 20.0;
  const DistanceField field(mask);
  const CameraIntrinsics k{20.0, 22.0, 8.0, 8.0};
  PointCloud pts(3, 24);
  for (Eigen::Index i = 0; i < pts.cols(); ++i) {
    const double z = rng.uniform(1.5, 2.5);
    pts.col(i) << rng.uniform(-0.9, 0.9) * z * 0.55, rng.uniform(-0.9, 0.9) * z * 0.5, z;
  }
  const LossValue at = projection_loss(pts, field, k);
  auto f = [&](const Eigen::VectorXd& x) { return projection_loss(Eigen::Map<const PointCloud>(x.data(), 3, pts.cols()), field, k).value; };
  return ad::grad_check(f, Eigen::Map<const Eigen::VectorXd>(pts.data(), pts.size()),
                        Eigen::Map<const Eigen::VectorXd>(at.grad_first.data(), at.grad_first.size()), kLossStep);
}

ad::GradCheckResult check_depth_l2(Rng& rng) {
  const int w = 6, h = 5;
  DepthMap::Raster pred(h, w), target(h, w);
  DepthMap::Mask mask(h, w);
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    mask.data()[i] = rng.uniform() < 0.7;
    pred.data()[i] = mask.data()[i] ? rng.uniform(1.0, 3.0) : 0.0;
    target.data()[i] = mask.data()[i] ? rng.uniform(1.0, 3.0) : 0.0;
  }
  const DepthMap t(target, mask);
  auto make = [&](const Eigen::VectorXd& x) {
    DepthMap::Raster r = pred;
    for (Eigen::Index i = 0; i < r.size(); ++i) {
      if (mask.data()[i]) r.data()[i] = x[i];
    }
    return DepthMap(r, mask);
  };
  const Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(pred.data(), pred.size());
  const LossValue at = depth_l2(make(x0), t);
  return ad::grad_check([&](const Eigen::VectorXd& x) { return depth_l2(make(x), t).value; }, x0, at.grad_pixels, kLossStep);
}

Tensor random_tensor(Rng& rng, ad::Shape shape, bool variable = true, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(ad::element_count(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return variable ? Tensor::variable(std::move(shape), std::move(v)) : Tensor::constant(std::move(shape), std::move(v));
}

/// Checks sum(weights * op(inputs)) with fixed random weights.
ad::GradCheckResult check_primitive(Rng& rng, const std::vector<Tensor>& inputs,
                                    const std::function<Tensor(const std::vector<Tensor>&)>& op) {
  const Tensor probe = op(inputs);
  const Tensor weights = random_tensor(rng, probe.shape(), false);
  auto build = [&](const std::vector<Tensor>& in) { return ad::reduce_sum(ad::mul(op(in), weights)); };
  return ad::grad_check(build, inputs, kPrimitiveStep);
}

using Check = std::function<ad::GradCheckResult(Rng&)>;

const std::map<std::string, Check>& loss_checks() {
  static const std::map<std::string, Check> checks = {
      {"chamfer", [](Rng& rng) { return check_pair(chamfer, random_cloud(rng, 12), random_cloud(rng, 10)); }},
      {"emd_exact", [](Rng& rng) { return check_pair(emd_exact, random_cloud(rng, 8), random_cloud(rng, 8)); }},
      {"partial_consistency",
       [](Rng& rng) { return check_pair(partial_consistency, random_cloud(rng, 10), random_cloud(rng, 14)); }},
      {"projection_loss", check_projection},
      {"depth_l2", check_depth_l2},
  };
  return checks;
}

const std::map<std::string, Check>& primitive_checks() {
  using V = std::vector<Tensor>;
  static const std::map<std::string, Check> checks = {
      {"conv3d",
       [](Rng& r) {
         return check_primitive(r, {random_tensor(r, {2, 3, 4, 3}), random_tensor(r, {2, 2, 3, 3, 3}), random_tensor(r, {2})},
                                [](const V& in) { return ad::conv3d(in[0], in[1], in[2]); });
       }},
      {"maxpool3d",
       [](Rng& r) { return check_primitive(r, {random_tensor(r, {2, 4, 2, 4})}, [](const V& in) { return ad::maxpool3d(in[0]); }); }},
      {"deconv3d",
       [](Rng& r) {
         return check_primitive(r, {random_tensor(r, {2, 2, 1, 2}), random_tensor(r, {2, 3, 2, 2, 2}), random_tensor(r, {3})},
                                [](const V& in) { return ad::deconv3d(in[0], in[1], in[2]); });
       }},
      {"matmul",
       [](Rng& r) {
         return check_primitive(r, {random_tensor(r, {3, 4}), random_tensor(r, {4, 2})},
                                [](const V& in) { return ad::matmul(in[0], in[1]); });
       }},
      {"add",
       [](Rng& r) {
         return check_primitive(r, {random_tensor(r, {3, 4}), random_tensor(r, {3, 4}), random_tensor(r, {4})},
                                [](const V& in) { return ad::add(ad::add(in[0], in[1]), in[2]); });
       }},
      {"sub",
       [](Rng& r) {
         return check_primitive(r, {random_tensor(r, {2, 3, 2}), random_tensor(r, {2, 3, 2})},
                                [](const V& in) { return ad::sub(in[0], in[1]); });
       }},
      {"mul",
       [](Rng& r) {
         return check_primitive(r, {random_tensor(r, {4, 3}), random_tensor(r, {4, 3})},
                                [](const V& in) { return ad::mul(in[0], in[1]); });
       }},
      {"relu", [](Rng& r) { return check_primitive(r, {random_tensor(r, {3, 4, 2})}, [](const V& in) { return ad::relu(in[0]); }); }},
      {"softplus",
       [](Rng& r) { return check_primitive(r, {random_tensor(r, {3, 4}, true, -4.0, 4.0)}, [](const V& in) { return ad::softplus(in[0]); }); }},
      {"concat",
       [](Rng& r) {
         return check_primitive(r, {random_tensor(r, {2, 3, 2}), random_tensor(r, {2, 1, 2})},
                                [](const V& in) { return ad::concat(in[0], in[1], 1); });
       }},
      {"reshape",
       [](Rng& r) { return check_primitive(r, {random_tensor(r, {2, 3, 4})}, [](const V& in) { return ad::reshape(in[0], {4, 6}); }); }},
      {"slice",
       [](Rng& r) { return check_primitive(r, {random_tensor(r, {3, 4, 2})}, [](const V& in) { return ad::slice(in[0], 1, 1, 3); }); }},
      {"reduce_sum",
       [](Rng& r) { return check_primitive(r, {random_tensor(r, {4, 3, 2})}, [](const V& in) { return ad::reduce_sum(in[0]); }); }},
      {"scale", [](Rng& r) { return check_primitive(r, {random_tensor(r, {3, 3})}, [](const V& in) { return ad::scale(in[0], -2.5); }); }},
      {"take",
       [](Rng& r) {
         return check_primitive(r, {random_tensor(r, {4, 3})}, [](const V& in) { return ad::take(in[0], 0, {2, 0, 2, 3}); });
       }},
      {"transpose",
       [](Rng& r) { return check_primitive(r, {random_tensor(r, {3, 4})}, [](const V& in) { return ad::transpose(in[0]); }); }},
  };
  return checks;
}

template <typename Map>
std::vector<std::string> keys(const Map& m) {
  std::vector<std::string> out;
  for (const auto& [k, v] : m) out.push_back(k);
  return out;
}

}  // namespace

std::vector<std::string> loss_check_names() { return keys(loss_checks()); }
std::vector<std::string> primitive_check_names() { return keys(primitive_checks()); }

GradCheckReport run_gradcheck(const std::string& name, std::uint64_t seed) {
  Rng rng(derive_seed(seed, name));
  GradCheckReport report;
  report.name = name;
  if (auto it = loss_checks().find(name); it != loss_checks().end()) {
    report.tolerance = kLossTolerance;
    report.result = it->second(rng);
  } else if (auto p = primitive_checks().find(name); p != primitive_checks().end()) {
    report.tolerance = kPrimitiveTolerance;
    report.result = p->second(rng);
  } else {
    throw DomainError("unknown gradient check '" + name + "'");
  }
  return report;
}

std::vector<GradCheckReport> run_gradcheck_suite(std::uint64_t seed) {
  std::vector<GradCheckReport> out;
  for (const auto& n : loss_check_names()) out.push_back(run_gradcheck(n, seed));
  for (const auto& n : primitive_check_names()) out.push_back(run_gradcheck(n, seed));
  return out;
}

}  // namespace depthint
