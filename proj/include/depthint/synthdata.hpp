#pragma once

// Procedural meshes, a z-buffer depth rasterizer and on-disk dataset generation.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "depthint/core.hpp"

namespace depthint {

struct Mesh {
  Eigen::Matrix3Xd vertices;
  Eigen::Matrix3Xi triangles;
  // Triangle ranges [begin, end) of convex closed components; empty for a single component.
  std::vector<std::pair<int, int>> parts;

  Eigen::Index vertex_count() const { return vertices.cols(); }
  Eigen::Index triangle_count() const { return triangles.cols(); }
  double triangle_area(Eigen::Index t) const;
  void validate() const;
};

/// Camera-from-model rigid transform: p_cam = rotation * p_model + translation.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Vector3d translation = Vector3d::Zero();

  PointCloud apply(const PointCloud& model_points) const { return (rotation * model_points).colwise() + translation; }
};

/// Camera at `eye` looking at `target`; image rows grow opposite to `up`.
Pose look_at(const Vector3d& eye, const Vector3d& target, const Vector3d& up = Vector3d::UnitZ());

enum class ShapeKind { Box, Sphere, Cylinder, Composite };
ShapeKind parse_shape_kind(const std::string& name);

struct ShapeParams {
  Vector3d extents{1.0, 1.0, 1.0};  // box edge lengths
  double radius = 0.5;             // sphere and cylinder
  double height = 1.0;             // cylinder
  int subdivisions = 2;            // icosphere
  int segments = 24;               // cylinder
};

Mesh make_box(const Vector3d& extents);
/// Icosahedron subdivided s times and projected to the sphere: 10 * 4^s + 2 vertices.
Mesh make_icosphere(double radius, int subdivisions);
/// Closed prism around the z axis, centered on the origin.
Mesh make_cylinder(double radius, double height, int segments);
/// Primitive kinds use `params` and ignore the seed; a composite draws 2 to 4 randomly sized
/// primitives at random offsets from the seed.
Mesh gen_shape(ShapeKind kind, const ShapeParams& params, std::uint64_t seed);
/// Random kind and parameters for dataset instances.
Mesh random_shape(std::uint64_t seed);

/// Nearest-surface depth per pixel center with perspective-correct interpolation, no
/// back-face culling. Triangles with a vertex at or behind z = 1e-9 are skipped. Throws
/// DomainError when nothing is visible.
DepthMap render_depth(const Mesh& mesh, const CameraIntrinsics& k, const Pose& pose, int width, int height);

/// Area-weighted triangle choice and uniform barycentric sampling. For multi-part meshes,
/// samples falling strictly inside another part are redrawn, so the cloud covers the outer
/// surface of the union.
PointCloud sample_surface(const Mesh& mesh, Eigen::Index n, std::uint64_t seed);

/// Viewpoint on the upper hemisphere at 2.5x the bounding-sphere radius, looking at the center.
Pose random_view(const Mesh& mesh, std::uint64_t seed);

void save_obj(const std::filesystem::path& path, const Mesh& mesh);

struct DatasetConfig {
  std::filesystem::path root;
  int instances = 5;
  int views = 4;
  int width = 64;
  int height = 64;
  double focal = 0.0;  // 0: equal to width
  Eigen::Index gt_points = 2048;
  std::uint64_t seed = 0;
};

struct ViewData {
  DepthMap depth;
  CameraIntrinsics k;
  Pose pose;
};

struct InstanceData {
  std::string name;
  PointCloud full;  // model frame
  std::vector<ViewData> views;
};

/// Writes inst_XXXX/{mesh.obj, full.ply, view_YY.f32, view_YY.cam} and manifest.tsv
/// ("relative/path<TAB>sha256" per file, sorted by path). Returns the manifest path.
std::filesystem::path make_dataset(const DatasetConfig& config);

/// Twelve doubles (row-major rotation, then translation) and fx fy cx cy.
void save_camera(const std::filesystem::path& path, const CameraIntrinsics& k, const Pose& pose);
std::pair<CameraIntrinsics, Pose> load_camera(const std::filesystem::path& path);

std::string sha256_file(const std::filesystem::path& path);
/// Recomputes every hash; returns the paths that are missing or differ.
std::vector<std::string> verify_manifest(const std::filesystem::path& root);

InstanceData load_instance(const std::filesystem::path& instance_dir);
/// Instances listed in the root's manifest, in manifest order.
std::vector<InstanceData> load_dataset(const std::filesystem::path& root);

}  // namespace depthint
