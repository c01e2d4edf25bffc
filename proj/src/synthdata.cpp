#include "depthint/synthdata.hpp"

#include <openssl/evp.h>

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <numbers>
#include <set>
#include <sstream>

#include "depthint/error.hpp"
#include "depthint/io.hpp"
#include "depthint/projection.hpp"
#include "depthint/random.hpp"

namespace depthint {

namespace fs = std::filesystem;

double Mesh::triangle_area(Eigen::Index t) const {
  const Vector3d a = vertices.col(triangles(0, t));
  const Vector3d b = vertices.col(triangles(1, t));
  const Vector3d c = vertices.col(triangles(2, t));
  return 0.5 * (b - a).cross(c - a).norm();
}

void Mesh::validate() const {
  for (Eigen::Index t = 0; t < triangles.cols(); ++t) {
    for (int i = 0; i < 3; ++i) {
      if (triangles(i, t) < 0 || triangles(i, t) >= vertices.cols()) {
        throw DomainError("mesh: triangle " + std::to_string(t) + " references vertex " + std::to_string(triangles(i, t)) +
                          " of " + std::to_string(vertices.cols()));
      }
    }
  }
  if (!vertices.allFinite()) throw DomainError("mesh: non-finite vertex");
}

Pose look_at(const Vector3d& eye, const Vector3d& target, const Vector3d& up) {
  const Vector3d forward = (target - eye).normalized();
  const Vector3d right_raw = forward.cross(up);
  if (right_raw.norm() < 1e-12) throw DomainError("look_at: view direction parallel to up vector");
  const Vector3d right = right_raw.normalized();
  const Vector3d down = forward.cross(right);
  Pose pose;
  pose.rotation.row(0) = right.transpose();
  pose.rotation.row(1) = down.transpose();
  pose.rotation.row(2) = forward.transpose();
  pose.translation = -pose.rotation * eye;
  return pose;
}

ShapeKind parse_shape_kind(const std::string& name) {
  if (name == "box") return ShapeKind::Box;
  if (name == "sphere") return ShapeKind::Sphere;
  if (name == "cylinder") return ShapeKind::Cylinder;
  if (name == "composite") return ShapeKind::Composite;
  throw DomainError("unknown shape kind '" + name + "' (expected box, sphere, cylinder or composite)");
}

Mesh make_box(const Vector3d& extents) {
  if (!(extents.array() > 0.0).all()) throw DomainError("box: extents must be positive");
  Mesh mesh;
  mesh.vertices.resize(3, 8);
  for (int i = 0; i < 8; ++i) {
    mesh.vertices.col(i) = Vector3d((i & 1) ? 0.5 : -0.5, (i & 2) ? 0.5 : -0.5, (i & 4) ? 0.5 : -0.5).cwiseProduct(extents);
  }
  // Quads with outward winding, split along their first diagonal.
  const int quads[6][4] = {{0, 4, 6, 2}, {1, 3, 7, 5}, {0, 1, 5, 4}, {2, 6, 7, 3}, {0, 2, 3, 1}, {4, 5, 7, 6}};
  mesh.triangles.resize(3, 12);
  for (int q = 0; q < 6; ++q) {
    mesh.triangles.col(2 * q) << quads[q][0], quads[q][1], quads[q][2];
    mesh.triangles.col(2 * q + 1) << quads[q][0], quads[q][2], quads[q][3];
  }
  return mesh;
}

Mesh make_icosphere(double radius, int subdivisions) {
  if (!(radius > 0.0)) throw DomainError("sphere: radius must be positive");
  if (subdivisions < 0 || subdivisions > 6) throw DomainError("sphere: subdivisions must lie in [0, 6]");
  const double phi = std::numbers::phi;
  std::vector<Vector3d> verts = {{-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0}, {0, -1, phi}, {0, 1, phi},
                                 {0, -1, -phi}, {0, 1, -phi}, {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
  for (auto& v : verts) v.normalize();
  std::vector<Eigen::Vector3i> faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                                        {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                                        {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      verts.push_back((verts[std::size_t(a)] + verts[std::size_t(b)]).normalized());
      const int idx = int(verts.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<Eigen::Vector3i> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
      next.emplace_back(f[0], ab, ca);
      next.emplace_back(f[1], bc, ab);
      next.emplace_back(f[2], ca, bc);
      next.emplace_back(ab, bc, ca);
    }
    faces = std::move(next);
  }
  Mesh mesh;
  mesh.vertices.resize(3, Eigen::Index(verts.size()));
  for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.col(Eigen::Index(i)) = radius * verts[i];
  mesh.triangles.resize(3, Eigen::Index(faces.size()));
  for (std::size_t i = 0; i < faces.size(); ++i) mesh.triangles.col(Eigen::Index(i)) = faces[i];
  return mesh;
}

Mesh make_cylinder(double radius, double height, int segments) {
  if (!(radius > 0.0) || !(height > 0.0)) throw DomainError("cylinder: radius and height must be positive");
  if (segments < 3) throw DomainError("cylinder: at least 3 segments are required");
  const int n = segments;
  Mesh mesh;
  mesh.vertices.resize(3, 2 * n + 2);
  for (int i = 0; i < n; ++i) {
    const double a = 2.0 * std::numbers::pi * i / n;
    mesh.vertices.col(i) << radius * std::cos(a), radius * std::sin(a), -0.5 * height;
    mesh.vertices.col(n + i) << radius * std::cos(a), radius * std::sin(a), 0.5 * height;
  }
  mesh.vertices.col(2 * n) << 0.0, 0.0, -0.5 * height;
  mesh.vertices.col(2 * n + 1) << 0.0, 0.0, 0.5 * height;
  mesh.triangles.resize(3, 4 * n);
  for (int i = 0; i < n; ++i) {
    const int j = (i + 1) % n;
    mesh.triangles.col(4 * i) << i, j, n + j;
    mesh.triangles.col(4 * i + 1) << i, n + j, n + i;
    mesh.triangles.col(4 * i + 2) << 2 * n, j, i;
    mesh.triangles.col(4 * i + 3) << 2 * n + 1, n + i, n + j;
  }
  return mesh;
}

namespace {

void append(Mesh& dst, const Mesh& src, const Vector3d& offset) {
  const Eigen::Index v0 = dst.vertices.cols();
  const Eigen::Index t0 = dst.triangles.cols();
  dst.vertices.conservativeResize(3, v0 + src.vertices.cols());
  dst.vertices.rightCols(src.vertices.cols()) = src.vertices.colwise() + offset;
  dst.triangles.conservativeResize(3, t0 + src.triangles.cols());
  dst.triangles.rightCols(src.triangles.cols()) = src.triangles.array() + int(v0);
  dst.parts.emplace_back(int(t0), int(dst.triangles.cols()));
}

Mesh random_primitive(Rng& rng) {
  switch (rng.below(3)) {
    case 0:
      return make_box(Vector3d(rng.uniform(0.3, 0.8), rng.uniform(0.3, 0.8), rng.uniform(0.3, 0.8)));
    case 1:
      return make_icosphere(rng.uniform(0.2, 0.45), 2);
    default:
      return make_cylinder(rng.uniform(0.15, 0.35), rng.uniform(0.4, 0.9), 16);
  }
}

}  // namespace

Mesh gen_shape(ShapeKind kind, const ShapeParams& params, std::uint64_t seed) {
  switch (kind) {
    case ShapeKind::Box:
      return make_box(params.extents);
    case ShapeKind::Sphere:
      return make_icosphere(params.radius, params.subdivisions);
    case ShapeKind::Cylinder:
      return make_cylinder(params.radius, params.height, params.segments);
    case ShapeKind::Composite: {
      Rng rng(seed);
      const int count = 2 + int(rng.below(3));
      Mesh mesh;
      mesh.vertices.resize(3, 0);
      mesh.triangles.resize(3, 0);
      for (int i = 0; i < count; ++i) {
        const Mesh part = random_primitive(rng);
        const Vector3d offset(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3));
        append(mesh, part, offset);
      }
      return mesh;
    }
  }
  throw DomainError("gen_shape: unknown kind");
}

Mesh random_shape(std::uint64_t seed) {
  Rng rng(seed);
  const auto kind = ShapeKind(rng.below(4));
  ShapeParams params;
  params.extents = Vector3d(rng.uniform(0.4, 1.0), rng.uniform(0.4, 1.0), rng.uniform(0.4, 1.0));
  params.radius = kind == ShapeKind::Sphere ? rng.uniform(0.3, 0.6) : rng.uniform(0.2, 0.5);
  params.height = rng.uniform(0.5, 1.2);
  params.segments = 24;
  params.subdivisions = 2;
  return gen_shape(kind, params, rng.next());
}

DepthMap render_depth(const Mesh& mesh, const CameraIntrinsics& k, const Pose& pose, int width, int height) {
  mesh.validate();
  k.validate();
  if (width < 1 || height < 1) throw DomainError("render_depth: image size must be positive");
  constexpr double kNear = 1e-9;
  const double inf = std::numeric_limits<double>::infinity();
  DepthMap::Raster zbuf = DepthMap::Raster::Constant(height, width, inf);
  const Eigen::Matrix3Xd cam = (pose.rotation * mesh.vertices).colwise() + pose.translation;

  for (Eigen::Index t = 0; t < mesh.triangles.cols(); ++t) {
    Vector3d p[3];
    double su[3], sv[3];
    bool usable = true;
    for (int i = 0; i < 3; ++i) {
      p[i] = cam.col(mesh.triangles(i, t));
      if (!(p[i].z() > kNear)) usable = false;
      su[i] = k.fx * p[i].x() / p[i].z() + k.cx;
      sv[i] = k.fy * p[i].y() / p[i].z() + k.cy;
    }
    if (!usable) continue;
    auto edge = [&](int a, int b, double u, double v) { return (su[b] - su[a]) * (v - sv[a]) - (sv[b] - sv[a]) * (u - su[a]); };
    const double area = edge(0, 1, su[2], sv[2]);
    if (area == 0.0) continue;
    const int u0 = std::max(0, int(std::ceil(std::min({su[0], su[1], su[2]}))));
    const int u1 = std::min(width - 1, int(std::floor(std::max({su[0], su[1], su[2]}))));
    const int v0 = std::max(0, int(std::ceil(std::min({sv[0], sv[1], sv[2]}))));
    const int v1 = std::min(height - 1, int(std::floor(std::max({sv[0], sv[1], sv[2]}))));
    for (int v = v0; v <= v1; ++v) {
      for (int u = u0; u <= u1; ++u) {
        const double w0 = edge(1, 2, u, v) / area;
        const double w1 = edge(2, 0, u, v) / area;
        const double w2 = edge(0, 1, u, v) / area;
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
        const double z = 1.0 / (w0 / p[0].z() + w1 / p[1].z() + w2 / p[2].z());
        if (z < zbuf(v, u)) zbuf(v, u) = z;
      }
    }
  }
  DepthMap::Mask mask = zbuf.isFinite();
  if (!mask.any()) throw DomainError("render_depth: mesh covers no pixel in front of the camera");
  zbuf = mask.select(zbuf, 0.0);
  return DepthMap(std::move(zbuf), std::move(mask));
}

namespace {

struct ConvexPart {
  std::vector<Vector3d> normals;  // oriented away from the part's vertex centroid
  std::vector<double> offsets;

  bool strictly_inside(const Vector3d& x) const {
    for (std::size_t f = 0; f < normals.size(); ++f) {
      if (normals[f].dot(x) - offsets[f] > -1e-12) return false;
    }
    return true;
  }
};

std::vector<ConvexPart> convex_parts(const Mesh& mesh) {
  std::vector<ConvexPart> parts;
  for (const auto& [begin, end] : mesh.parts) {
    std::set<int> ids;
    for (int t = begin; t < end; ++t) {
      for (int i = 0; i < 3; ++i) ids.insert(mesh.triangles(i, t));
    }
    Vector3d centroid = Vector3d::Zero();
    for (int id : ids) centroid += mesh.vertices.col(id);
    centroid /= double(ids.size());
    ConvexPart part;
    for (int t = begin; t < end; ++t) {
      const Vector3d a = mesh.vertices.col(mesh.triangles(0, t));
      Vector3d n = (mesh.vertices.col(mesh.triangles(1, t)) - a).cross(mesh.vertices.col(mesh.triangles(2, t)) - a);
      if (n.norm() == 0.0) continue;
      n.normalize();
      if (n.dot(centroid - a) > 0.0) n = -n;
      part.normals.push_back(n);
      part.offsets.push_back(n.dot(a));
    }
    parts.push_back(std::move(part));
  }
  return parts;
}

int part_of(const Mesh& mesh, Eigen::Index t) {
  for (std::size_t p = 0; p < mesh.parts.size(); ++p) {
    if (t >= mesh.parts[p].first && t < mesh.parts[p].second) return int(p);
  }
  return -1;
}

}  // namespace

PointCloud sample_surface(const Mesh& mesh, Eigen::Index n, std::uint64_t seed) {
  mesh.validate();
  if (n < 1) throw DomainError("sample_surface: n must be >= 1");
  std::vector<double> cumulative(std::size_t(mesh.triangles.cols()));
  double total = 0.0;
  for (Eigen::Index t = 0; t < mesh.triangles.cols(); ++t) {
    total += mesh.triangle_area(t);
    cumulative[std::size_t(t)] = total;
  }
  if (!(total > 0.0)) throw DomainError("sample_surface: mesh has zero surface area");
  const auto parts = mesh.parts.size() > 1 ? convex_parts(mesh) : std::vector<ConvexPart>{};

  Rng rng(seed);
  PointCloud out(3, n);
  const Eigen::Index max_draws = 1000 * n;
  Eigen::Index draws = 0;
  for (Eigen::Index i = 0; i < n;) {
    if (++draws > max_draws) throw DomainError("sample_surface: outer surface too small to sample");
    const double target = rng.uniform() * total;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
    const Eigen::Index t = std::min<Eigen::Index>(Eigen::Index(it - cumulative.begin()), mesh.triangles.cols() - 1);
    const double s = std::sqrt(rng.uniform());
    const double r2 = rng.uniform();
    const Vector3d x = (1.0 - s) * mesh.vertices.col(mesh.triangles(0, t)) + s * (1.0 - r2) * mesh.vertices.col(mesh.triangles(1, t)) +
                       s * r2 * mesh.vertices.col(mesh.triangles(2, t));
    if (!parts.empty()) {
      const int own = part_of(mesh, t);
      bool hidden = false;
      for (std::size_t p = 0; p < parts.size() && !hidden; ++p) hidden = int(p) != own && parts[p].strictly_inside(x);
      if (hidden) continue;
    }
    out.col(i++) = x;
  }
  return out;
}

Pose random_view(const Mesh& mesh, std::uint64_t seed) {
  if (mesh.vertices.cols() == 0) throw DomainError("random_view: empty mesh");
  const Vector3d center = 0.5 * (mesh.vertices.rowwise().minCoeff() + mesh.vertices.rowwise().maxCoeff());
  const double radius = (mesh.vertices.colwise() - center).colwise().norm().maxCoeff();
  Rng rng(seed);
  // Uniform on the upper hemisphere: z uniform in [0, 1), azimuth uniform.
  const double z = rng.uniform();
  const double azimuth = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
  const Vector3d dir(rho * std::cos(azimuth), rho * std::sin(azimuth), z);
  const Vector3d up = std::abs(z) > 0.999 ? Vector3d::UnitY() : Vector3d::UnitZ();
  return look_at(center + 2.5 * radius * dir, center, up);
}

void save_obj(const fs::path& path, const Mesh& mesh) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  char buf[128];
  for (Eigen::Index i = 0; i < mesh.vertices.cols(); ++i) {
    std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", mesh.vertices(0, i), mesh.vertices(1, i), mesh.vertices(2, i));
    out << buf;
  }
  for (Eigen::Index t = 0; t < mesh.triangles.cols(); ++t) {
    out << "f " << mesh.triangles(0, t) + 1 << ' ' << mesh.triangles(1, t) + 1 << ' ' << mesh.triangles(2, t) + 1 << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

void save_camera(const fs::path& path, const CameraIntrinsics& k, const Pose& pose) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  char buf[40];
  std::string line;
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    if (!line.empty()) line += ' ';
    line += buf;
  };
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) put(pose.rotation(r, c));
  for (int r = 0; r < 3; ++r) put(pose.translation[r]);
  put(k.fx);
  put(k.fy);
  put(k.cx);
  put(k.cy);
  out << line << '\n';
}

std::pair<CameraIntrinsics, Pose> load_camera(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  double v[16];
  for (double& x : v) {
    if (!(in >> x)) throw IoError(path.string() + ": camera file needs 16 numbers");
  }
  std::string extra;
  if (in >> extra) throw IoError(path.string() + ": trailing data after 16 camera values");
  Pose pose;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) pose.rotation(r, c) = v[3 * r + c];
  pose.translation = Vector3d(v[9], v[10], v[11]);
  CameraIntrinsics k{v[12], v[13], v[14], v[15]};
  k.validate();
  return {k, pose};
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw IoError("sha256: digest initialization failed");
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof(buf));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf, std::size_t(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), digest, &len);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof(byte), "%02x", digest[i]);
    hex += byte;
  }
  return hex;
}

namespace {

std::string index_name(const char* prefix, int i, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*d", prefix, width, i);
  return buf;
}

std::vector<std::pair<std::string, std::string>> read_manifest(const fs::path& root) {
  std::ifstream in(root / "manifest.tsv");
  if (!in) throw IoError("cannot open " + (root / "manifest.tsv").string());
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw IoError("manifest: malformed line '" + line + "'");
    entries.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return entries;
}

}  // namespace

fs::path make_dataset(const DatasetConfig& config) {
  if (config.instances < 1 || config.views < 1) throw DomainError("dataset: instance and view counts must be positive");
  if (config.root.empty()) throw DomainError("dataset: output directory required");
  std::error_code ec;
  fs::create_directories(config.root, ec);
  if (ec) throw IoError("cannot create " + config.root.string() + ": " + ec.message());
  const double focal = config.focal > 0.0 ? config.focal : double(config.width);
  const CameraIntrinsics k = CameraIntrinsics::centered(focal, focal, config.width, config.height);
  const std::uint64_t base = derive_seed(config.seed, "dataset");

  std::vector<std::string> files;
  for (int i = 0; i < config.instances; ++i) {
    const std::uint64_t inst_seed = derive_seed(base, std::uint64_t(i));
    const std::string name = index_name("inst_", i, 4);
    const fs::path dir = config.root / name;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    const Mesh mesh = random_shape(derive_seed(inst_seed, "shape"));
    save_obj(dir / "mesh.obj", mesh);
    files.push_back(name + "/mesh.obj");
    save_ply(dir / "full.ply", sample_surface(mesh, config.gt_points, derive_seed(inst_seed, "surface")),
             PlyEncoding::BinaryLittleEndian);
    files.push_back(name + "/full.ply");
    for (int v = 0; v < config.views; ++v) {
      const Pose pose = random_view(mesh, derive_seed(derive_seed(inst_seed, "view"), std::uint64_t(v)));
      const std::string view = index_name("view_", v, 2);
      save_depth(dir / (view + ".f32"), render_depth(mesh, k, pose, config.width, config.height), DepthFormat::F32);
      save_camera(dir / (view + ".cam"), k, pose);
      files.push_back(name + "/" + view + ".f32");
      files.push_back(name + "/" + view + ".cam");
    }
  }
  std::sort(files.begin(), files.end());
  const fs::path manifest = config.root / "manifest.tsv";
  std::ofstream out(manifest);
  if (!out) throw IoError("cannot write " + manifest.string());
  for (const auto& f : files) out << f << '\t' << sha256_file(config.root / f) << '\n';
  if (!out) throw IoError("write failed for " + manifest.string());
  return manifest;
}

std::vector<std::string> verify_manifest(const fs::path& root) {
  std::vector<std::string> bad;
  for (const auto& [path, hash] : read_manifest(root)) {
    const fs::path file = root / path;
    if (!fs::exists(file) || sha256_file(file) != hash) bad.push_back(path);
  }
  return bad;
}

InstanceData load_instance(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("instance directory not found: " + dir.string());
  InstanceData inst;
  inst.name = dir.filename().string();
  inst.full = load_ply(dir / "full.ply");
  std::vector<fs::path> depth_files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("view_", 0) == 0 && entry.path().extension() == ".f32") depth_files.push_back(entry.path());
  }
  std::sort(depth_files.begin(), depth_files.end());
  for (const auto& f : depth_files) {
    auto [k, pose] = load_camera(fs::path(f).replace_extension(".cam"));
    inst.views.push_back({load_depth(f, DepthFormat::F32), k, pose});
  }
  return inst;
}

std::vector<InstanceData> load_dataset(const fs::path& root) {
  std::vector<std::string> dirs;
  for (const auto& entry : read_manifest(root)) {
    const std::string dir = entry.first.substr(0, entry.first.find('/'));
    if (std::find(dirs.begin(), dirs.end(), dir) == dirs.end()) dirs.push_back(dir);
  }
  if (dirs.empty()) throw DataError("dataset at " + root.string() + " lists no instances");
  std::vector<InstanceData> out;
  for (const auto& d : dirs) out.push_back(load_instance(root / d));
  return out;
}

}  // namespace depthint
