#include <doctest.h>

#include <Eigen/Geometry>

#include <algorithm>
#include <numeric>

#include "depthint/autodiff.hpp"
#include "depthint/losses.hpp"
#include "support.hpp"

using namespace depthint;

namespace {

PointCloud pts(std::initializer_list<Vector3d> list) {
  PointCloud c(3, Eigen::Index(list.size()));
  Eigen::Index i = 0;
  for (const auto& p : list) c.col(i++) = p;
  return c;
}

double brute_chamfer(const PointCloud& p, const PointCloud& q) {
  return testing::brute_directed(p, q) / double(p.cols()) + testing::brute_directed(q, p) / double(q.cols());
}

// Minimum over all bijections by enumeration.
double factorial_emd(const PointCloud& p, const PointCloud& q) {
  std::vector<int> perm(std::size_t(p.cols()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (Eigen::Index i = 0; i < p.cols(); ++i) s += (p.col(i) - q.col(perm[std::size_t(i)])).squaredNorm();
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / double(p.cols());
}

PointCloud rigid(const PointCloud& c, const Eigen::Matrix3d& rot, const Vector3d& t) { return (rot * c).colwise() + t; }

Eigen::Matrix3d random_rotation(Rng& rng) {
  return Eigen::AngleAxisd(rng.uniform(0, 6.28), Vector3d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)).normalized())
      .toRotationMatrix();
}

Eigen::VectorXd flat(const PointCloud& c) { return Eigen::Map<const Eigen::VectorXd>(c.data(), c.size()); }

constexpr double kStep = 1e-4;
constexpr double kTolerance = 1e-4;
constexpr int kConfigs = 100;

// Runs the two-cloud gradient check on `configs` random pairs and reports the worst error.
template <typename Loss>
ad::GradCheckResult check_pairs(Loss loss, Rng& rng, Eigen::Index np, Eigen::Index nq) {
  ad::GradCheckResult total;
  for (int c = 0; c < kConfigs; ++c) {
    const PointCloud p = testing::random_cloud(rng, np), q = testing::random_cloud(rng, nq);
    const LossValue at = loss(p, q);
    Eigen::VectorXd x(p.size() + q.size()), g(p.size() + q.size());
    x << flat(p), flat(q);
    g << flat(at.grad_first), flat(at.grad_second);
    auto f = [&](const Eigen::VectorXd& v) {
      return loss(Eigen::Map<const PointCloud>(v.data(), 3, np), Eigen::Map<const PointCloud>(v.data() + p.size(), 3, nq)).value;
    };
    const auto r = ad::grad_check(f, x, g, kStep);
    total.max_rel_error = std::max(total.max_rel_error, r.max_rel_error);
    total.checked += r.checked;
    total.skipped += r.skipped;
  }
  return total;
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("chamfer examples") {
  Rng rng(1);
  const PointCloud p = testing::random_cloud(rng, 40);
  CHECK(chamfer(p, p).value == 0.0);
  CHECK(chamfer(pts({{0, 0, 0}}), pts({{1, 0, 0}})).value == 2.0);
  CHECK_THROWS_AS(chamfer(PointCloud(3, 0), p), DomainError);
}

TEST_CASE("chamfer equals the all-pairs evaluation and is symmetric") {
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    const PointCloud p = testing::random_cloud(rng, 32), q = testing::random_cloud(rng, 32);
    CHECK(chamfer(p, q).value == doctest::Approx(brute_chamfer(p, q)).epsilon(1e-14));
    CHECK(chamfer(p, q).value == doctest::Approx(chamfer(q, p).value).epsilon(1e-14));
    const PointCloud r = testing::random_cloud(rng, 17);
    CHECK(chamfer(p, r).value == doctest::Approx(brute_chamfer(p, r)).epsilon(1e-14));
  }
}

TEST_CASE("exact EMD examples") {
  Rng rng(3);
  const PointCloud p = testing::random_cloud(rng, 10);
  const LossValue self = emd_exact(p, p);
  CHECK(self.value == 0.0);
  for (Eigen::Index i = 0; i < 10; ++i) CHECK(self.matching[std::size_t(i)] == i);
  CHECK(emd_exact(pts({{0, 0, 0}, {1, 0, 0}}), pts({{0, 0, 0}, {0, 1, 0}})).value == doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS(emd_exact(p, testing::random_cloud(rng, 9)), DomainError);
  CHECK_THROWS_AS(emd_exact(testing::random_cloud(rng, kEmdExactCap + 1), testing::random_cloud(rng, kEmdExactCap + 1)),
                  DomainError);
}

TEST_CASE("exact EMD matches exhaustive permutation search for n <= 6") {
  Rng rng(4);
  for (int n = 1; n <= 6; ++n) {
    for (int t = 0; t < 10; ++t) {
      const PointCloud p = testing::random_cloud(rng, n), q = testing::random_cloud(rng, n);
      CHECK(std::abs(emd_exact(p, q).value - factorial_emd(p, q)) <= 1e-9);
      CHECK(std::abs(emd_exact(q, p).value - emd_exact(p, q).value) <= 1e-12);
    }
  }
}

TEST_CASE("EMD is zero only on equal multisets") {
  Rng rng(5);
  PointCloud p = testing::random_cloud(rng, 8);
  PointCloud q = p(Eigen::all, std::vector<Eigen::Index>{3, 1, 7, 0, 6, 2, 5, 4});
  CHECK(emd_exact(p, q).value == 0.0);
  q(0, 0) += 1e-3;
  CHECK(emd_exact(p, q).value > 0.0);
}

TEST_CASE("auction EMD lies within epsilon above the exact optimum") {
  Rng rng(6);
  for (int t = 0; t < 5; ++t) {
    const PointCloud p = testing::random_cloud(rng, 64), q = testing::random_cloud(rng, 64);
    const double exact = emd_exact(p, q).value;
    const double approx = emd_approx(p, q, 1e-4).value;
    CHECK(approx >= exact - 1e-12);
    CHECK(approx <= exact + 1e-4);
  }
  const PointCloud p = testing::random_cloud(rng, 30);
  CHECK(emd_approx(p, p, 1e-6).value == 0.0);
  CHECK_THROWS_AS(emd_approx(p, p, 0.0), DomainError);
  CHECK_THROWS_AS(emd_approx(p, testing::random_cloud(rng, 29), 1e-3), DomainError);
}

TEST_CASE("assignment solvers agree with enumeration on small cost matrices") {
  Rng rng(7);
  for (int t = 0; t < 20; ++t) {
    const int n = 1 + int(rng.below(6));
    Eigen::MatrixXd cost(n, n);
    for (Eigen::Index i = 0; i < cost.size(); ++i) cost.data()[i] = rng.uniform(0, 10);
    std::vector<int> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      double s = 0;
      for (int i = 0; i < n; ++i) s += cost(i, perm[std::size_t(i)]);
      best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    auto total = [&](const std::vector<Eigen::Index>& a) {
      double s = 0;
      for (int i = 0; i < n; ++i) s += cost(i, a[std::size_t(i)]);
      return s;
    };
    CHECK(std::abs(total(hungarian_assignment(cost)) - best) <= 1e-9);
    CHECK(total(auction_assignment(cost, 1e-6)) <= best + n * 1e-6 + 1e-9);
  }
  CHECK_THROWS_AS(hungarian_assignment(Eigen::MatrixXd::Zero(2, 3)), DomainError);
}

TEST_CASE("chamfer and EMD are invariant under a shared rigid motion") {
  Rng rng(8);
  for (int t = 0; t < 10; ++t) {
    const PointCloud p = testing::random_cloud(rng, 20), q = testing::random_cloud(rng, 20);
    const Eigen::Matrix3d rot = random_rotation(rng);
    const Vector3d tr(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5));
    CHECK(std::abs(chamfer(rigid(p, rot, tr), rigid(q, rot, tr)).value - chamfer(p, q).value) <= 1e-9);
    CHECK(std::abs(emd_exact(rigid(p, rot, tr), rigid(q, rot, tr)).value - emd_exact(p, q).value) <= 1e-9);
  }
}

TEST_CASE("partial consistency examples and asymmetry") {
  Rng rng(9);
  const PointCloud full = testing::random_cloud(rng, 30);
  CHECK(partial_consistency(full.leftCols(12), full).value == 0.0);
  const PointCloud a = pts({{0, 0, 0}});
  const PointCloud b = pts({{0, 0, 1}, {0, 2, 0}});
  CHECK(partial_consistency(a, b).value == 1.0);
  CHECK(partial_consistency(b, a).value == 5.0);
  for (int t = 0; t < 10; ++t) {
    const PointCloud p = testing::random_cloud(rng, 32), q = testing::random_cloud(rng, 32);
    CHECK(partial_consistency(p, q).value == doctest::Approx(testing::brute_directed(p, q)).epsilon(1e-14));
  }
  CHECK_THROWS_AS(partial_consistency(a, PointCloud(3, 0)), DomainError);
}

TEST_CASE("distance field equals a brute-force nearest silhouette search") {
  Rng rng(10);
  for (int t = 0; t < 5; ++t) {
    const int w = 5 + int(rng.below(20)), h = 5 + int(rng.below(20));
    DistanceField::Mask m(h, w);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform() < 0.1;
    m(0, 0) = true;
    const DistanceField field(m);
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        double best = std::numeric_limits<double>::infinity();
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            if (m(y, x)) best = std::min(best, std::hypot(double(x - u), double(y - v)));
        CHECK(std::abs(field.at(u, v) - best) <= 1e-12);
        if (m(v, u)) CHECK(field.at(u, v) == 0.0);
      }
    }
  }
  CHECK_THROWS_AS(DistanceField(DistanceField::Mask::Constant(4, 4, false)), DomainError);
}

TEST_CASE("projection loss: points inside the silhouette cost nothing, 3 px outside an edge costs about 9") {
  // Silhouette is the left half of the image, columns 0..15.
  const int w = 32, h = 32;
  DistanceField::Mask m(h, w);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) m(v, u) = u <= 15;
  const CameraIntrinsics k{40.0, 40.0, 16.0, 16.0};
  auto at_pixel = [&](double u, double v, double z) { return Vector3d((u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z); };

  PointCloud inside(3, 3);
  inside << at_pixel(3, 4, 2), at_pixel(10.5, 20.2, 3), at_pixel(15, 16, 1);
  const LossValue zero = projection_loss(inside, m, k, w, h);
  CHECK(zero.value == 0.0);
  CHECK(zero.grad_first.isZero(0.0));

  PointCloud out(3, 1);
  out.col(0) = at_pixel(18.0, 16.0, 2.0);
  const LossValue l = projection_loss(out, m, k, w, h);
  CHECK(std::abs(l.value - 9.0) <= 0.5);
  // Moving the point toward the silhouette (negative x) must reduce the loss.
  CHECK(l.grad_first(0, 0) > 0.0);

  PointCloud behind = out;
  behind(2, 0) = -1.0;
  CHECK_THROWS_AS(projection_loss(behind, m, k, w, h), DomainError);
  CHECK_THROWS_AS(projection_loss(out, m, k, w + 1, h), DomainError);
}

TEST_CASE("depth L2 examples") {
  Rng rng(11);
  DepthMap::Raster r(6, 7);
  for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = rng.uniform() < 0.3 ? 0.0 : rng.uniform(1, 3);
  const DepthMap d(r);
  CHECK(depth_l2(d, d).value == 0.0);
  const DepthMap shifted(DepthMap::Raster(r + 0.5 * d.mask().cast<double>()), d.mask());
  const LossValue l = depth_l2(shifted, d);
  CHECK(l.value == doctest::Approx(0.25).epsilon(1e-14));
  const double n = double(d.valid_count());
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    CHECK(l.grad_pixels[i] == doctest::Approx(d.mask().data()[i] ? 1.0 / n : 0.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(depth_l2(d, DepthMap(DepthMap::Raster::Constant(6, 7, 1.0))), DomainError);
}

TEST_CASE("loss gradients match central differences at 100 random configurations") {
  Rng rng(12);
  SUBCASE("chamfer") {
    const auto r = check_pairs(chamfer, rng, 12, 10);
    CHECK(r.max_rel_error <= kTolerance);
    CHECK(r.checked > 0);
    MESSAGE("chamfer: checked " << r.checked << ", skipped " << r.skipped);
  }
  SUBCASE("emd_exact") {
    const auto r = check_pairs(emd_exact, rng, 8, 8);
    CHECK(r.max_rel_error <= kTolerance);
    CHECK(r.checked > 0);
  }
  SUBCASE("partial_consistency") {
    const auto r = check_pairs(partial_consistency, rng, 10, 14);
    CHECK(r.max_rel_error <= kTolerance);
    CHECK(r.checked > 0);
  }
  SUBCASE("projection_loss") {
    DistanceField::Mask m(20, 20);
    for (int v = 0; v < 20; ++v)
      for (int u = 0; u < 20; ++u) m(v, u) = std::hypot(u - 9.6, v - 10.3) <= 5.0;
    const DistanceField field(m);
    const CameraIntrinsics k{25.0, 27.0, 10.0, 10.0};
    ad::GradCheckResult total;
    for (int c = 0; c < kConfigs; ++c) {
      PointCloud p(3, 10);
      for (Eigen::Index i = 0; i < p.cols(); ++i) {
        const double z = rng.uniform(1.5, 2.5);
        p.col(i) << rng.uniform(-0.35, 0.35) * z, rng.uniform(-0.35, 0.35) * z, z;
      }
      const LossValue at = projection_loss(p, field, k);
      const auto r = ad::grad_check(
          [&](const Eigen::VectorXd& v) { return projection_loss(Eigen::Map<const PointCloud>(v.data(), 3, 10), field, k).value; },
          flat(p), flat(at.grad_first), kStep);
      total.max_rel_error = std::max(total.max_rel_error, r.max_rel_error);
      total.checked += r.checked;
    }
    CHECK(total.max_rel_error <= kTolerance);
    CHECK(total.checked > 0);
  }
  SUBCASE("depth_l2") {
    double worst = 0.0;
    for (int c = 0; c < kConfigs; ++c) {
      DepthMap::Raster a(4, 5), b(4, 5);
      for (Eigen::Index i = 0; i < a.size(); ++i) {
        a.data()[i] = rng.uniform(1, 2);
        b.data()[i] = rng.uniform(1, 2);
      }
      const DepthMap target(b);
      const LossValue at = depth_l2(DepthMap(a), target);
      const Eigen::VectorXd x0 = Eigen::Map<const Eigen::VectorXd>(a.data(), a.size());
      const auto r = ad::grad_check(
          [&](const Eigen::VectorXd& v) {
            return depth_l2(DepthMap(DepthMap::Raster(Eigen::Map<const DepthMap::Raster>(v.data(), 4, 5))), target).value;
          },
          x0, at.grad_pixels, kStep);
      worst = std::max(worst, r.max_rel_error);
    }
    CHECK(worst <= kTolerance);
  }
}

}
