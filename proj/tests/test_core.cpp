#include <doctest.h>

#include <set>

#include "depthint/core.hpp"
#include "depthint/random.hpp"
#include "support.hpp"

using namespace depthint;

TEST_SUITE("core") {

TEST_CASE("normalize maps the unit segment onto 0.9 of the cube, centered") {
  PointCloud c(3, 2);
  c << 0, 1, 0, 0, 0, 0;
  const auto [n, t] = normalize(c);
  CHECK(n(0, 0) == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(n(0, 1) == doctest::Approx(0.95).epsilon(1e-15));
  for (int i = 0; i < 2; ++i) {
    CHECK(n(1, i) == 0.5);
    CHECK(n(2, i) == 0.5);
  }
  CHECK(t.scale == doctest::Approx(1.0 / 0.9));
}

TEST_CASE("a single point normalizes to the cube center with scale 1") {
  PointCloud c(3, 1);
  c << 3.0, -2.0, 7.5;
  const auto [n, t] = normalize(c);
  CHECK(t.scale == 1.0);
  CHECK((n.col(0) - Vector3d::Constant(0.5)).norm() == 0.0);
}

TEST_CASE("normalize stays inside the unit cube and inverts within 1e-9") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const PointCloud c = testing::random_cloud(rng, 1 + Eigen::Index(rng.below(200)), -50.0, 80.0);
    const auto [n, t] = normalize(c);
    CHECK(n.minCoeff() >= 0.0);
    CHECK(n.maxCoeff() <= 1.0);
    CHECK((t.invert(n) - c).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("normalize rejects empty and non-finite clouds") {
  CHECK_THROWS_AS(normalize(PointCloud(3, 0)), DomainError);
  PointCloud c = PointCloud::Zero(3, 2);
  c(1, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(normalize(c), DomainError);
}

TEST_CASE("depth map masks zero and non-finite pixels") {
  DepthMap::Raster r = DepthMap::Raster::Constant(4, 4, 2.0);
  CHECK(DepthMap(r).valid_count() == 16);
  r(1, 2) = 0.0;
  r(3, 0) = std::numeric_limits<double>::infinity();
  const DepthMap d(r);
  CHECK(d.valid_count() == 14);
  CHECK_FALSE(d.valid(2, 1));
  CHECK_FALSE(d.valid(0, 3));
  CHECK(d.at(0, 3) == 0.0);
}

TEST_CASE("explicit masks must cover positive depths and match dimensions") {
  DepthMap::Raster r = DepthMap::Raster::Constant(2, 3, 1.0);
  DepthMap::Mask m = DepthMap::Mask::Constant(2, 3, true);
  r(0, 0) = -1.0;
  CHECK_THROWS_AS(DepthMap(r, m), DomainError);
  CHECK_THROWS_AS(DepthMap(DepthMap::Raster::Constant(2, 3, 1.0), DepthMap::Mask::Constant(3, 2, true)), DomainError);
  m(0, 0) = false;
  CHECK_NOTHROW(DepthMap(r, m));
}

TEST_CASE("centered intrinsics put the principal point at the image center") {
  const auto k = CameraIntrinsics::centered(100, 120, 224, 160);
  CHECK(k.cx == 112.0);
  CHECK(k.cy == 80.0);
  CHECK(k.matrix()(0, 2) == 112.0);
  CHECK(k.matrix()(1, 1) == 120.0);
  CHECK_THROWS_AS(CameraIntrinsics::centered(0.0, 1.0, 4, 4), DomainError);
  CHECK_THROWS_AS((CameraIntrinsics{1.0, -1.0, 0.0, 0.0}.validate()), DomainError);
}

TEST_CASE("seeded streams are reproducible and named sub-seeds differ") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  std::set<std::uint64_t> seeds{derive_seed(7, "dataset"), derive_seed(7, "init"), derive_seed(7, "noise"),
                                derive_seed(7, "shuffle"), derive_seed(7, std::uint64_t(0)), derive_seed(7, std::uint64_t(1))};
  CHECK(seeds.size() == 6);
  Rng u(5);
  double mean = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double x = u.uniform();
    CHECK((x >= 0.0 && x < 1.0));
    mean += x;
  }
  CHECK(mean / 20000 == doctest::Approx(0.5).epsilon(0.02));
}

}
