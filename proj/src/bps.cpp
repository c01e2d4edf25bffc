#include "depthint/bps.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <limits>

#include "depthint/binary.hpp"

namespace depthint {

BasisPointSet::BasisPointSet(int resolution) : resolution_(resolution) {
  if (resolution < 1 || resolution > 256) {
    throw DomainError("basis point set: resolution must be in [1, 256]");
  }
  const Eigen::Index r = resolution;
  points_.resize(3, r * r * r);
  for (int z = 0; z < resolution; ++z) {
    for (int y = 0; y < resolution; ++y) {
      for (int x = 0; x < resolution; ++x) {
        points_.col(index(x, y, z)) = Vector3d((x + 0.5) / r, (y + 0.5) / r, (z + 0.5) / r);
      }
    }
  }
}

SpatialIndex::SpatialIndex(const PointCloud& cloud, int cells_per_axis) : cloud_(cloud), cells_(cells_per_axis) {
  if (cloud.cols() == 0) throw DomainError("spatial index: empty cloud");
  if (!cloud.allFinite()) throw DomainError("spatial index: non-finite coordinate");
  if (cells_ < 1) throw DomainError("spatial index: cells_per_axis must be >= 1");
  lo_ = cloud.rowwise().minCoeff();
  const Vector3d hi = cloud.rowwise().maxCoeff();
  cell_size_ = ((hi - lo_) / cells_).cwiseMax(1e-12);

  const std::size_t n_cells = std::size_t(cells_) * cells_ * cells_;
  std::vector<std::size_t> cell_of_point(std::size_t(cloud.cols()));
  cell_start_.assign(n_cells + 1, 0);
  for (Eigen::Index i = 0; i < cloud.cols(); ++i) {
    const Eigen::Vector3i c = cell_of(cloud.col(i));
    cell_of_point[std::size_t(i)] = flat(c.x(), c.y(), c.z());
    ++cell_start_[cell_of_point[std::size_t(i)] + 1];
  }
  for (std::size_t c = 0; c < n_cells; ++c) cell_start_[c + 1] += cell_start_[c];
  order_.resize(std::size_t(cloud.cols()));
  std::vector<std::size_t> fill(cell_start_.begin(), cell_start_.end() - 1);
  for (Eigen::Index i = 0; i < cloud.cols(); ++i) {
    order_[fill[cell_of_point[std::size_t(i)]]++] = i;  // ascending index within each cell
  }
}

Eigen::Vector3i SpatialIndex::cell_of(const Vector3d& p) const {
  Eigen::Vector3i c;
  for (int d = 0; d < 3; ++d) {
    const double t = std::floor((p[d] - lo_[d]) / cell_size_[d]);
    c[d] = int(std::clamp(t, 0.0, double(cells_ - 1)));
  }
  return c;
}

std::pair<Eigen::Index, double> SpatialIndex::nearest(const Vector3d& query) const {
  const Eigen::Vector3i center = cell_of(query);
  Eigen::Index best = -1;
  double best_d2 = std::numeric_limits<double>::infinity();

  auto scan_cell = [&](int x, int y, int z) {
    const std::size_t c = flat(x, y, z);
    for (std::size_t k = cell_start_[c]; k < cell_start_[c + 1]; ++k) {
      const Eigen::Index i = order_[k];
      const double dx = cloud_(0, i) - query[0];
      const double dy = cloud_(1, i) - query[1];
      const double dz = cloud_(2, i) - query[2];
      const double d2 = dx * dx + dy * dy + dz * dz;
      if (d2 < best_d2 || (d2 == best_d2 && i < best)) {
        best_d2 = d2;
        best = i;
      }
    }
  };

  for (int ring = 0;; ++ring) {
    Eigen::Vector3i lo;
    Eigen::Vector3i hi;
    for (int d = 0; d < 3; ++d) {
      lo[d] = std::max(0, center[d] - ring);
      hi[d] = std::min(cells_ - 1, center[d] + ring);
    }
    for (int z = lo.z(); z <= hi.z(); ++z) {
      for (int y = lo.y(); y <= hi.y(); ++y) {
        for (int x = lo.x(); x <= hi.x(); ++x) {
          const bool on_shell = std::abs(x - center.x()) == ring || std::abs(y - center.y()) == ring ||
                                std::abs(z - center.z()) == ring;
          if (on_shell) scan_cell(x, y, z);
        }
      }
    }
    // Every unvisited point lies beyond one face of the visited box that still has cells behind it.
    double bound = std::numeric_limits<double>::infinity();
    bool exhausted = true;
    for (int d = 0; d < 3; ++d) {
      if (lo[d] > 0) {
        exhausted = false;
        bound = std::min(bound, query[d] - (lo_[d] + lo[d] * cell_size_[d]));
      }
      if (hi[d] < cells_ - 1) {
        exhausted = false;
        bound = std::min(bound, (lo_[d] + (hi[d] + 1) * cell_size_[d]) - query[d]);
      }
    }
    if (exhausted) break;
    // Cell-edge rounding can shift a boundary by an ulp; keep a small safety slack.
    if (best >= 0 && bound > 0.0 && bound * bound * (1.0 - 1e-12) > best_d2) break;
  }
  return {best, std::sqrt(best_d2)};
}

namespace {

BpsEncoding encode_with_index(const PointCloud& cloud, const BasisPointSet& basis) {
  const SpatialIndex index(cloud, basis.resolution());
  BpsEncoding enc;
  enc.resolution = basis.resolution();
  enc.deltas.resize(3, basis.size());
  enc.distances.resize(basis.size());
  enc.source.resize(std::size_t(basis.size()));
  for (Eigen::Index j = 0; j < basis.size(); ++j) {
    const Eigen::Index i = index.nearest(basis.points().col(j)).first;
    enc.source[std::size_t(j)] = i;
    enc.deltas.col(j) = cloud.col(i) - basis.points().col(j);
    enc.distances[j] = enc.deltas.col(j).norm();
  }
  return enc;
}

}  // namespace

BpsEncoding encode(const PointCloud& cloud, const BasisPointSet& basis) {
  if (cloud.cols() == 0) throw DomainError("bps encode: empty cloud");
  for (Eigen::Index i = 0; i < cloud.cols(); ++i) {
    const auto p = cloud.col(i);
    if (!((p.array() >= 0.0).all() && (p.array() <= 1.0).all())) {
      throw DomainError("bps encode: point " + std::to_string(i) + " (" + std::to_string(p[0]) + ", " +
                        std::to_string(p[1]) + ", " + std::to_string(p[2]) + ") lies outside the unit cube");
    }
  }
  return encode_with_index(cloud, basis);
}

BpsEncoding encode_unbounded(const PointCloud& cloud, const BasisPointSet& basis) {
  if (cloud.cols() == 0) throw DomainError("bps encode: empty cloud");
  return encode_with_index(cloud, basis);
}

PointCloud decode(const BpsEncoding& encoding, const BasisPointSet& basis) {
  if (encoding.resolution != basis.resolution() || encoding.deltas.cols() != basis.size()) {
    throw DomainError("bps decode: encoding resolution " + std::to_string(encoding.resolution) +
                      " does not match basis resolution " + std::to_string(basis.resolution()));
  }
  return basis.points() + encoding.deltas;
}

Eigen::VectorXd distance_field(const PointCloud& cloud, const BasisPointSet& basis) {
  const SpatialIndex index(cloud, basis.resolution());
  Eigen::VectorXd out(basis.size());
  for (Eigen::Index j = 0; j < basis.size(); ++j) out[j] = index.nearest(basis.points().col(j)).second;
  return out;
}

void save_encoding(const std::filesystem::path& path, const BpsEncoding& encoding) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_encoding: cannot open " + path.string());
  binary::write_magic(out, "BPSE");
  binary::write<std::uint32_t>(out, std::uint32_t(encoding.resolution));
  for (Eigen::Index j = 0; j < encoding.deltas.cols(); ++j) {
    for (int d = 0; d < 3; ++d) binary::write<float>(out, float(encoding.deltas(d, j)));
    binary::write<float>(out, float(encoding.distances[j]));
  }
  if (!out) throw IoError("save_encoding: write failed for " + path.string());
}

BpsEncoding load_encoding(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_encoding: cannot open " + path.string());
  binary::expect_magic(in, "BPSE");
  BpsEncoding enc;
  enc.resolution = int(binary::read<std::uint32_t>(in, "bps header"));
  if (enc.resolution < 1 || enc.resolution > 256) throw IoError("load_encoding: implausible resolution");
  const Eigen::Index k = Eigen::Index(enc.resolution) * enc.resolution * enc.resolution;
  enc.deltas.resize(3, k);
  enc.distances.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    for (int d = 0; d < 3; ++d) enc.deltas(d, j) = binary::read<float>(in, "bps payload");
    enc.distances[j] = binary::read<float>(in, "bps payload");
  }
  return enc;
}

}  // namespace depthint
