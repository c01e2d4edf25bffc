#include "depthint/losses.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "depthint/bps.hpp"
#include "depthint/projection.hpp"

namespace depthint {
namespace {

int cells_for(Eigen::Index n) {
  return std::clamp(int(std::lround(std::cbrt(double(n)))), 1, 64);
}

// One-directional nearest-neighbor sum: adds sum_x min_y |x-y|^2 * weight to the value and
// the matching gradients into grad_from / grad_to.
double directed_nn(const PointCloud& from, const PointCloud& to, double weight, PointCloud& grad_from,
                   PointCloud& grad_to) {
  const SpatialIndex index(to, cells_for(to.cols()));
  double sum = 0.0;
  for (Eigen::Index i = 0; i < from.cols(); ++i) {
    const Eigen::Index j = index.nearest(from.col(i)).first;
    const Vector3d diff = from.col(i) - to.col(j);
    sum += diff.squaredNorm();
    grad_from.col(i) += 2.0 * weight * diff;
    grad_to.col(j) -= 2.0 * weight * diff;
  }
  return sum;
}

void require_non_empty(const PointCloud& c, const char* op) {
  if (c.cols() == 0) throw DomainError(std::string(op) + ": empty cloud");
}

Eigen::MatrixXd squared_distance_matrix(const PointCloud& p, const PointCloud& q) {
  Eigen::MatrixXd cost(p.cols(), q.cols());
  for (Eigen::Index j = 0; j < q.cols(); ++j) {
    for (Eigen::Index i = 0; i < p.cols(); ++i) cost(i, j) = (p.col(i) - q.col(j)).squaredNorm();
  }
  return cost;
}

LossValue assignment_loss(const PointCloud& p, const PointCloud& q, std::vector<Eigen::Index> matching) {
  const double s = double(p.cols());
  LossValue out;
  out.grad_first = PointCloud::Zero(3, p.cols());
  out.grad_second = PointCloud::Zero(3, q.cols());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < p.cols(); ++i) {
    const Eigen::Index j = matching[std::size_t(i)];
    const Vector3d diff = p.col(i) - q.col(j);
    sum += diff.squaredNorm();
    out.grad_first.col(i) = 2.0 * diff / s;
    out.grad_second.col(j) = -2.0 * diff / s;
  }
  out.value = sum / s;
  out.matching = std::move(matching);
  return out;
}

void require_equal_sizes(const PointCloud& p, const PointCloud& q, const char* op) {
  require_non_empty(p, op);
  require_non_empty(q, op);
  if (p.cols() != q.cols()) {
    throw DomainError(std::string(op) + ": cloud sizes differ (" + std::to_string(p.cols()) + " vs " +
                      std::to_string(q.cols()) + ")");
  }
}

}  // namespace

LossValue chamfer(const PointCloud& p, const PointCloud& q) {
  require_non_empty(p, "chamfer");
  require_non_empty(q, "chamfer");
  LossValue out;
  out.grad_first = PointCloud::Zero(3, p.cols());
  out.grad_second = PointCloud::Zero(3, q.cols());
  const double wp = 1.0 / double(p.cols());
  const double wq = 1.0 / double(q.cols());
  const double forward = directed_nn(p, q, wp, out.grad_first, out.grad_second);
  const double backward = directed_nn(q, p, wq, out.grad_second, out.grad_first);
  out.value = forward / double(p.cols()) + backward / double(q.cols());
  return out;
}

std::vector<Eigen::Index> hungarian_assignment(const Eigen::MatrixXd& cost) {
  // Shortest augmenting path with row/column potentials, 1-based with a virtual column 0.
  const Eigen::Index n = cost.rows();
  if (cost.cols() != n) throw DomainError("hungarian: cost matrix must be square");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(std::size_t(n) + 1, 0.0);
  std::vector<double> v(std::size_t(n) + 1, 0.0);
  std::vector<Eigen::Index> row_of(std::size_t(n) + 1, 0);
  std::vector<Eigen::Index> way(std::size_t(n) + 1, 0);
  std::vector<double> min_to(std::size_t(n) + 1);
  std::vector<char> used(std::size_t(n) + 1);

  for (Eigen::Index i = 1; i <= n; ++i) {
    row_of[0] = i;
    Eigen::Index j0 = 0;
    std::fill(min_to.begin(), min_to.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[std::size_t(j0)] = 1;
      const Eigen::Index i0 = row_of[std::size_t(j0)];
      double delta = inf;
      Eigen::Index j1 = 0;
      for (Eigen::Index j = 1; j <= n; ++j) {
        if (used[std::size_t(j)]) continue;
        const double reduced = cost(i0 - 1, j - 1) - u[std::size_t(i0)] - v[std::size_t(j)];
        if (reduced < min_to[std::size_t(j)]) {
          min_to[std::size_t(j)] = reduced;
          way[std::size_t(j)] = j0;
        }
        if (min_to[std::size_t(j)] < delta) {
          delta = min_to[std::size_t(j)];
          j1 = j;
        }
      }
      for (Eigen::Index j = 0; j <= n; ++j) {
        if (used[std::size_t(j)]) {
          u[std::size_t(row_of[std::size_t(j)])] += delta;
          v[std::size_t(j)] -= delta;
        } else {
          min_to[std::size_t(j)] -= delta;
        }
      }
      j0 = j1;
    } while (row_of[std::size_t(j0)] != 0);
    do {
      const Eigen::Index j1 = way[std::size_t(j0)];
      row_of[std::size_t(j0)] = row_of[std::size_t(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<Eigen::Index> assignment(std::size_t(n), -1);
  for (Eigen::Index j = 1; j <= n; ++j) assignment[std::size_t(row_of[std::size_t(j)] - 1)] = j - 1;
  return assignment;
}

std::vector<Eigen::Index> auction_assignment(const Eigen::MatrixXd& cost, double epsilon) {
  const Eigen::Index n = cost.rows();
  if (cost.cols() != n) throw DomainError("auction: cost matrix must be square");
  if (!(epsilon > 0.0)) throw DomainError("auction: epsilon must be positive");
  std::vector<double> price(std::size_t(n), 0.0);
  std::vector<Eigen::Index> owner(static_cast<std::size_t>(n));
  std::vector<Eigen::Index> assigned(static_cast<std::size_t>(n));

  // Bidders compare benefit -cost - price. The final phase runs at exactly `epsilon`, which
  // bounds the total cost by the optimum plus n * epsilon.
  double eps = std::max(epsilon, cost.maxCoeff() / 4.0);
  for (;;) {
    std::fill(owner.begin(), owner.end(), -1);
    std::fill(assigned.begin(), assigned.end(), -1);
    std::deque<Eigen::Index> unassigned;
    for (Eigen::Index i = 0; i < n; ++i) unassigned.push_back(i);
    while (!unassigned.empty()) {
      const Eigen::Index i = unassigned.front();
      unassigned.pop_front();
      double best = -std::numeric_limits<double>::infinity();
      double second = best;
      Eigen::Index best_j = -1;
      for (Eigen::Index j = 0; j < n; ++j) {
        const double value = -cost(i, j) - price[std::size_t(j)];
        if (value > best) {
          second = best;
          best = value;
          best_j = j;
        } else if (value > second) {
          second = value;
        }
      }
      const double increment = n == 1 ? eps : best - second + eps;
      price[std::size_t(best_j)] += increment;
      const Eigen::Index previous = owner[std::size_t(best_j)];
      if (previous >= 0) {
        assigned[std::size_t(previous)] = -1;
        unassigned.push_back(previous);
      }
      owner[std::size_t(best_j)] = i;
      assigned[std::size_t(i)] = best_j;
    }
    if (eps <= epsilon) break;
    eps = std::max(epsilon, eps / 5.0);
  }
  return assigned;
}

LossValue emd_exact(const PointCloud& p, const PointCloud& q) {
  require_equal_sizes(p, q, "emd_exact");
  if (p.cols() > kEmdExactCap) {
    throw DomainError("emd_exact: size " + std::to_string(p.cols()) + " exceeds cap " + std::to_string(kEmdExactCap));
  }
  return assignment_loss(p, q, hungarian_assignment(squared_distance_matrix(p, q)));
}

LossValue emd_approx(const PointCloud& p, const PointCloud& q, double epsilon) {
  require_equal_sizes(p, q, "emd_approx");
  if (!(epsilon > 0.0)) throw DomainError("emd_approx: epsilon must be positive");
  return assignment_loss(p, q, auction_assignment(squared_distance_matrix(p, q), epsilon));
}

LossValue partial_consistency(const PointCloud& partial, const PointCloud& full) {
  require_non_empty(partial, "partial_consistency");
  require_non_empty(full, "partial_consistency");
  LossValue out;
  out.grad_first = PointCloud::Zero(3, partial.cols());
  out.grad_second = PointCloud::Zero(3, full.cols());
  out.value = directed_nn(partial, full, 1.0, out.grad_first, out.grad_second);
  return out;
}

namespace {

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) over squared distances.
void distance_transform_1d(const double* f, double* d, int n, int stride, std::vector<int>& v,
                           std::vector<double>& z) {
  const double inf = std::numeric_limits<double>::infinity();
  int k = 0;
  v[0] = 0;
  z[0] = -inf;
  z[1] = inf;
  for (int q = 1; q < n; ++q) {
    auto intersect = [&](int p) {
      return ((f[q * stride] + double(q) * q) - (f[p * stride] + double(p) * p)) / (2.0 * q - 2.0 * p);
    };
    double s = intersect(v[std::size_t(k)]);
    while (s <= z[std::size_t(k)]) {
      --k;
      s = intersect(v[std::size_t(k)]);
    }
    ++k;
    v[std::size_t(k)] = q;
    z[std::size_t(k)] = s;
    z[std::size_t(k) + 1] = inf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[std::size_t(k) + 1] < q) ++k;
    const double dq = q - v[std::size_t(k)];
    d[q * stride] = dq * dq + f[v[std::size_t(k)] * stride];
  }
}

}  // namespace

DistanceField::DistanceField(const Mask& silhouette) {
  const int h = int(silhouette.rows());
  const int w = int(silhouette.cols());
  if (silhouette.count() == 0) throw DomainError("distance field: empty silhouette");
  // Large finite sentinel keeps the parabola intersections free of inf - inf.
  const double far = 1e20;
  Raster f(h, w);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      f(v, u) = silhouette(v, u) ? 0.0 : far;
      if (silhouette(v, u)) silhouette_pixels_.emplace_back(u, v);
    }
  }
  std::vector<int> hull(std::size_t(std::max(w, h)) + 1);
  std::vector<double> breaks(std::size_t(std::max(w, h)) + 2);
  Raster pass(h, w);
  for (int u = 0; u < w; ++u) distance_transform_1d(f.data() + u, pass.data() + u, h, w, hull, breaks);
  Raster squared(h, w);
  for (int v = 0; v < h; ++v) {
    distance_transform_1d(pass.data() + std::ptrdiff_t(v) * w, squared.data() + std::ptrdiff_t(v) * w, w, 1, hull,
                          breaks);
  }
  distance_ = squared.sqrt();
}

double DistanceField::squared_distance(double u, double v, double& du, double& dv) const {
  const double u0 = std::floor(u);
  const double v0 = std::floor(v);
  if (u0 >= 0.0 && v0 >= 0.0 && u0 + 1.0 <= width() - 1 && v0 + 1.0 <= height() - 1) {
    const int iu = int(u0);
    const int iv = int(v0);
    const double a = u - u0;
    const double b = v - v0;
    const double d00 = distance_(iv, iu);
    const double d10 = distance_(iv, iu + 1);
    const double d01 = distance_(iv + 1, iu);
    const double d11 = distance_(iv + 1, iu + 1);
    // Difference form: along a direction where the field is flat the value is exactly
    // constant, so finite differences see no rounding jitter there.
    const double ex = d10 - d00;
    const double ey = d01 - d00;
    const double exy = d11 - d10 - d01 + d00;
    const double d = d00 + a * ex + b * ey + a * b * exy;
    if (d <= 0.0) {
      du = dv = 0.0;
      return 0.0;
    }
    du = 2.0 * d * (ex + b * exy);
    dv = 2.0 * d * (ey + a * exy);
    return d * d;
  }
  double best = std::numeric_limits<double>::infinity();
  Eigen::Vector2d nearest = Eigen::Vector2d::Zero();
  for (const auto& s : silhouette_pixels_) {
    const double d2 = (s.x() - u) * (s.x() - u) + (s.y() - v) * (s.y() - v);
    if (d2 < best) {
      best = d2;
      nearest = s;
    }
  }
  du = 2.0 * (u - nearest.x());
  dv = 2.0 * (v - nearest.y());
  return best;
}

LossValue projection_loss(const PointCloud& full, const DistanceField& field, const CameraIntrinsics& k) {
  require_non_empty(full, "projection_loss");
  const auto samples = project(full, k, field.width(), field.height());
  LossValue out;
  out.grad_first = PointCloud::Zero(3, full.cols());
  for (Eigen::Index i = 0; i < full.cols(); ++i) {
    const auto& s = samples[std::size_t(i)];
    double du = 0.0;
    double dv = 0.0;
    const double d2 = field.squared_distance(s.u, s.v, du, dv);
    if (d2 <= 0.0) continue;
    out.value += d2;
    const double x = full(0, i);
    const double y = full(1, i);
    const double z = full(2, i);
    out.grad_first(0, i) = du * k.fx / z;
    out.grad_first(1, i) = dv * k.fy / z;
    out.grad_first(2, i) = -(du * k.fx * x + dv * k.fy * y) / (z * z);
  }
  return out;
}

LossValue projection_loss(const PointCloud& full, const DistanceField::Mask& silhouette, const CameraIntrinsics& k,
                          int width, int height) {
  if (silhouette.cols() != width || silhouette.rows() != height) {
    throw DomainError("projection_loss: silhouette is not width x height");
  }
  return projection_loss(full, DistanceField(silhouette), k);
}

LossValue depth_l2(const DepthMap& predicted, const DepthMap& target) {
  if (!predicted.same_layout(target)) throw DomainError("depth_l2: dimension or mask mismatch");
  const auto n = double(predicted.valid_count());
  if (n == 0) throw DomainError("depth_l2: no valid pixels");
  LossValue out;
  out.grad_pixels = Eigen::VectorXd::Zero(predicted.values().size());
  for (Eigen::Index i = 0; i < predicted.values().size(); ++i) {
    if (!predicted.mask().data()[i]) continue;
    const double e = predicted.values().data()[i] - target.values().data()[i];
    out.value += e * e;
    out.grad_pixels[i] = 2.0 * e / n;
  }
  out.value /= n;
  return out;
}

}  // namespace depthint
