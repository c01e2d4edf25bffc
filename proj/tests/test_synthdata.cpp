#include <doctest.h>

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <fstream>

#include "depthint/projection.hpp"
#include "depthint/synthdata.hpp"
#include "support.hpp"

using namespace depthint;

namespace {

Mesh triangles(std::initializer_list<Vector3d> corners) {
  Mesh m;
  m.vertices.resize(3, Eigen::Index(corners.size()));
  Eigen::Index i = 0;
  for (const auto& c : corners) m.vertices.col(i++) = c;
  m.triangles.resize(3, i / 3);
  for (Eigen::Index t = 0; t < i / 3; ++t) m.triangles.col(t) << int(3 * t), int(3 * t + 1), int(3 * t + 2);
  return m;
}

Mesh transformed(const Mesh& mesh, const Pose& pose) {
  Mesh out = mesh;
  out.vertices = pose.apply(mesh.vertices);
  return out;
}

double mesh_distance(const Mesh& m, const Vector3d& p) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index t = 0; t < m.triangle_count(); ++t) {
    best = std::min(best, testing::point_triangle_distance(p, m.vertices.col(m.triangles(0, t)), m.vertices.col(m.triangles(1, t)),
                                                           m.vertices.col(m.triangles(2, t))));
  }
  return best;
}

// Moller-Trumbore from the camera center; returns the smallest hit distance along `dir` or -1.
double ray_cast(const Mesh& m, const Vector3d& dir) {
  double best = -1.0;
  for (Eigen::Index t = 0; t < m.triangle_count(); ++t) {
    const Vector3d a = m.vertices.col(m.triangles(0, t)), b = m.vertices.col(m.triangles(1, t)), c = m.vertices.col(m.triangles(2, t));
    const Vector3d e1 = b - a, e2 = c - a, p = dir.cross(e2);
    const double det = e1.dot(p);
    if (std::abs(det) < 1e-14) continue;
    const Vector3d s = -a;
    const double u = s.dot(p) / det;
    if (u < 0 || u > 1) continue;
    const Vector3d q = s.cross(e1);
    const double v = dir.dot(q) / det;
    if (v < 0 || u + v > 1) continue;
    const double tt = e2.dot(q) / det;
    if (tt > 1e-9 && (best < 0 || tt < best)) best = tt;
  }
  return best;
}

std::size_t count_files(const std::filesystem::path& root, const std::string& ext) {
  std::size_t n = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root))
    if (e.path().extension() == ext) ++n;
  return n;
}

}  // namespace

TEST_SUITE("synthdata") {

TEST_CASE("canonical primitive mesh sizes") {
  const Mesh box = make_box(Vector3d::Ones());
  CHECK(box.triangle_count() == 12);
  CHECK(box.vertex_count() == 8);
  for (int s = 0; s <= 3; ++s) {
    const Mesh sphere = make_icosphere(0.5, s);
    CHECK(sphere.vertex_count() == 10 * (1 << (2 * s)) + 2);
    for (Eigen::Index i = 0; i < sphere.vertex_count(); ++i) CHECK(sphere.vertices.col(i).norm() == doctest::Approx(0.5));
  }
  CHECK_THROWS_AS(make_box(Vector3d(1, 0, 1)), DomainError);
  CHECK_THROWS_AS(make_icosphere(-1, 2), DomainError);
  CHECK_THROWS_AS(make_cylinder(1, 1, 2), DomainError);
  CHECK_THROWS_AS(parse_shape_kind("torus"), DomainError);
}

TEST_CASE("shape generation is deterministic per seed") {
  const Mesh a = gen_shape(ShapeKind::Composite, {}, 9), b = gen_shape(ShapeKind::Composite, {}, 9);
  CHECK(a.vertices == b.vertices);
  CHECK(a.triangles == b.triangles);
  const Mesh c = gen_shape(ShapeKind::Composite, {}, 10);
  CHECK_FALSE((c.vertices.cols() == a.vertices.cols() && c.vertices == a.vertices));
}

TEST_CASE("a fronto-parallel square at z = 2 renders constant depth 2 over its footprint") {
  const Mesh square = triangles({{-0.5, -0.5, 2}, {0.5, -0.5, 2}, {0.5, 0.5, 2}, {-0.5, -0.5, 2}, {0.5, 0.5, 2}, {-0.5, 0.5, 2}});
  const auto k = CameraIntrinsics::centered(32, 32, 32, 32);
  const DepthMap d = render_depth(square, k, Pose{}, 32, 32);
  // Footprint spans pixel coordinates 16 +- 8; interior pixels 9..23 are certainly covered.
  for (int v = 9; v <= 23; ++v)
    for (int u = 9; u <= 23; ++u) {
      CHECK(d.valid(u, v));
      CHECK(std::abs(d.at(u, v) - 2.0) <= 1e-12);
    }
  CHECK_FALSE(d.valid(2, 2));
  CHECK_FALSE(d.valid(26, 16));
  Pose behind;
  behind.translation = Vector3d(0, 0, -5);
  CHECK_THROWS_AS(render_depth(square, k, behind, 32, 32), DomainError);
}

TEST_CASE("rendered depth backprojects onto the mesh surface") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Mesh mesh = random_shape(seed);
    const Pose pose = random_view(mesh, seed);
    const auto k = CameraIntrinsics::centered(48, 48, 48, 48);
    const PointCloud cloud = backproject(render_depth(mesh, k, pose, 48, 48), k);
    const Mesh cam = transformed(mesh, pose);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < cloud.cols(); ++i) worst = std::max(worst, mesh_distance(cam, cloud.col(i)));
    CHECK(worst <= 1e-6);
  }
}

TEST_CASE("the silhouette agrees with a ray-casting oracle at 64x64") {
  for (std::uint64_t seed : {4u, 5u}) {
    const Mesh mesh = random_shape(seed);
    const Pose pose = random_view(mesh, seed);
    const auto k = CameraIntrinsics::centered(64, 64, 64, 64);
    const DepthMap d = render_depth(mesh, k, pose, 64, 64);
    const Mesh cam = transformed(mesh, pose);
    int mismatches = 0;
    for (int v = 0; v < 64; ++v)
      for (int u = 0; u < 64; ++u) {
        const double t = ray_cast(cam, pixel_ray(k, double(u), double(v)));
        if ((t > 0) != d.valid(u, v)) ++mismatches;
        if (t > 0 && d.valid(u, v)) CHECK(std::abs(t - d.at(u, v)) <= 1e-9);
      }
    CHECK(mismatches == 0);
  }
}

TEST_CASE("surface samples of a single triangle have valid barycentric coordinates") {
  const Vector3d a(0, 0, 0), b(2, 0, 1), c(0, 3, -1);
  const PointCloud s = sample_surface(triangles({a, b, c}), 2000, 3);
  Eigen::Matrix2d basis;
  basis << (b - a).head<2>(), (c - a).head<2>();
  for (Eigen::Index i = 0; i < s.cols(); ++i) {
    const Eigen::Vector2d w = basis.inverse() * (s.col(i) - a).head<2>();
    CHECK(w.minCoeff() >= -1e-12);
    CHECK(w.sum() <= 1.0 + 1e-12);
    // The point lies in the triangle's plane.
    CHECK(std::abs((s.col(i) - (a + w[0] * (b - a) + w[1] * (c - a))).norm()) <= 1e-12);
  }
}

TEST_CASE("area-weighted sampling splits 3:1 within a binomial band and is reproducible") {
  // Triangle at z = 0 has area 3 / 2, triangle at z = 5 has area 1 / 2.
  const Mesh m = triangles({{0, 0, 0}, {3, 0, 0}, {0, 1, 0}, {0, 0, 5}, {1, 0, 5}, {0, 1, 5}});
  // 20 seeds pooled; a 4 sigma band fails a fair sampler about once in 16000 runs.
  const Eigen::Index per_seed = 10000;
  double big = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    big += double((sample_surface(m, per_seed, seed).row(2).array() < 2.5).count());
  }
  const double n = 20.0 * double(per_seed);
  CHECK(std::abs(big - 0.75 * n) <= 4.0 * std::sqrt(n * 0.75 * 0.25));
  CHECK(sample_surface(m, 100, 8) == sample_surface(m, 100, 8));
  CHECK_THROWS_AS(sample_surface(triangles({{0, 0, 0}, {1, 0, 0}, {2, 0, 0}}), 10, 1), DomainError);
}

TEST_CASE("sampled clouds stay inside the mesh bounding box") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Mesh mesh = random_shape(seed);
    const PointCloud s = sample_surface(mesh, 500, seed);
    const Vector3d lo = mesh.vertices.rowwise().minCoeff(), hi = mesh.vertices.rowwise().maxCoeff();
    CHECK(((s.colwise() - lo).array() >= -1e-12).all());
    CHECK(((s.colwise() - hi).array() <= 1e-12).all());
  }
}

TEST_CASE("look_at gives an orthonormal pose that centers the target") {
  const Pose p = look_at(Vector3d(3, -4, 2), Vector3d(0.1, 0.2, 0.3));
  CHECK((p.rotation * p.rotation.transpose() - Eigen::Matrix3d::Identity()).norm() <= 1e-12);
  CHECK(p.rotation.determinant() == doctest::Approx(1.0));
  PointCloud target(3, 1);
  target << 0.1, 0.2, 0.3;
  const Vector3d cam = p.apply(target).col(0);
  CHECK(std::abs(cam.x()) <= 1e-12);
  CHECK(std::abs(cam.y()) <= 1e-12);
  CHECK(cam.z() > 0);
}

TEST_CASE("a 5 x 4 dataset writes 20 depth files, 5 clouds and a verifiable manifest") {
  testing::TempDir a("synth"), b("synth");
  DatasetConfig cfg;
  cfg.root = a.path();
  cfg.instances = 5;
  cfg.views = 4;
  cfg.width = cfg.height = 16;
  cfg.gt_points = 128;
  cfg.seed = 3;
  const auto manifest = make_dataset(cfg);
  CHECK(count_files(a.path(), ".f32") == 20);
  CHECK(count_files(a.path(), ".ply") == 5);
  CHECK(count_files(a.path(), ".tsv") == 1);
  CHECK(verify_manifest(a.path()).empty());

  cfg.root = b.path();
  CHECK(testing::read_file(make_dataset(cfg)) == testing::read_file(manifest));

  // Corrupt one file and the manifest check names it.
  {
    std::ofstream out(a / "inst_0000/view_00.f32", std::ios::app | std::ios::binary);
    out << "x";
  }
  const auto bad = verify_manifest(a.path());
  REQUIRE(bad.size() == 1);
  CHECK(bad[0] == "inst_0000/view_00.f32");

  const auto data = load_dataset(b.path());
  REQUIRE(data.size() == 5);
  for (const auto& inst : data) {
    CHECK(inst.views.size() == 4);
    CHECK(inst.full.cols() == 128);
    for (const auto& v : inst.views) {
      CHECK((v.pose.rotation * v.pose.rotation.transpose() - Eigen::Matrix3d::Identity()).norm() <= 1e-9);
      CHECK(v.k.fx == 16.0);
      CHECK(v.depth.valid_count() > 0);
    }
  }
}

TEST_CASE("camera files round trip") {
  testing::TempDir dir("synth");
  const Pose p = look_at(Vector3d(1, -2, 1), Vector3d::Zero());
  const CameraIntrinsics k{30, 31, 15.5, 16.5};
  save_camera(dir / "c.cam", k, p);
  const auto [k2, p2] = load_camera(dir / "c.cam");
  CHECK(k2.fx == 30);
  CHECK(k2.cy == 16.5);
  CHECK((p2.rotation - p.rotation).norm() <= 1e-15);
  CHECK((p2.translation - p.translation).norm() <= 1e-15);
  testing::write_file(dir / "bad.cam", "1 2 3");
  CHECK_THROWS_AS(load_camera(dir / "bad.cam"), IoError);
}

}
