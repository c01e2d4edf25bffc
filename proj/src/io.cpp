#include "depthint/io.hpp"

#include <array>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "depthint/binary.hpp"

namespace depthint {
namespace {

enum class PlyScalar { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

PlyScalar parse_ply_scalar(const std::string& name) {
  if (name == "char" || name == "int8") return PlyScalar::Int8;
  if (name == "uchar" || name == "uint8") return PlyScalar::UInt8;
  if (name == "short" || name == "int16") return PlyScalar::Int16;
  if (name == "ushort" || name == "uint16") return PlyScalar::UInt16;
  if (name == "int" || name == "int32") return PlyScalar::Int32;
  if (name == "uint" || name == "uint32") return PlyScalar::UInt32;
  if (name == "float" || name == "float32") return PlyScalar::Float32;
  if (name == "double" || name == "float64") return PlyScalar::Float64;
  throw IoError("ply: unknown property type '" + name + "'");
}

double read_ply_scalar(std::istream& in, PlyScalar type) {
  switch (type) {
    case PlyScalar::Int8: return binary::read<std::int8_t>(in, "ply vertex");
    case PlyScalar::UInt8: return binary::read<std::uint8_t>(in, "ply vertex");
    case PlyScalar::Int16: return binary::read<std::int16_t>(in, "ply vertex");
    case PlyScalar::UInt16: return binary::read<std::uint16_t>(in, "ply vertex");
    case PlyScalar::Int32: return binary::read<std::int32_t>(in, "ply vertex");
    case PlyScalar::UInt32: return binary::read<std::uint32_t>(in, "ply vertex");
    case PlyScalar::Float32: return binary::read<float>(in, "ply vertex");
    case PlyScalar::Float64: return binary::read<double>(in, "ply vertex");
  }
  return 0.0;
}

struct PlyHeader {
  bool ascii = false;
  std::size_t vertex_count = 0;
  std::vector<PlyScalar> properties;
  std::array<int, 3> xyz = {-1, -1, -1};
};

PlyHeader read_ply_header(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.substr(0, 3) != "ply") {
    throw IoError("ply: missing 'ply' magic line");
  }
  PlyHeader header;
  bool have_format = false;
  bool in_vertex = false;
  bool seen_vertex = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream tokens(line);
    std::string keyword;
    tokens >> keyword;
    if (keyword.empty() || keyword == "comment" || keyword == "obj_info") continue;
    if (keyword == "end_header") {
      if (!have_format) throw IoError("ply: missing format line");
      if (!seen_vertex) throw IoError("ply: no vertex element");
      for (int axis : header.xyz) {
        if (axis < 0) throw IoError("ply: vertex element lacks x/y/z");
      }
      return header;
    }
    if (keyword == "format") {
      std::string fmt;
      tokens >> fmt;
      if (fmt == "ascii") {
        header.ascii = true;
      } else if (fmt == "binary_little_endian") {
        header.ascii = false;
      } else {
        throw IoError("ply: unsupported format '" + fmt + "'");
      }
      have_format = true;
    } else if (keyword == "element") {
      std::string name;
      std::size_t count = 0;
      tokens >> name >> count;
      if (tokens.fail()) throw IoError("ply: malformed element line '" + line + "'");
      if (name == "vertex") {
        header.vertex_count = count;
        in_vertex = true;
        seen_vertex = true;
      } else {
        in_vertex = false;
        if (count > 0) throw IoError("ply: unsupported element '" + name + "'");
      }
    } else if (keyword == "property") {
      std::string type;
      tokens >> type;
      if (type == "list") throw IoError("ply: list properties are not supported");
      std::string name;
      tokens >> name;
      if (!in_vertex) continue;
      const int index = int(header.properties.size());
      header.properties.push_back(parse_ply_scalar(type));
      if (name == "x") header.xyz[0] = index;
      if (name == "y") header.xyz[1] = index;
      if (name == "z") header.xyz[2] = index;
    } else {
      throw IoError("ply: unexpected header line '" + line + "'");
    }
  }
  throw IoError("ply: header not terminated by end_header");
}

}  // namespace

void save_ply(const std::filesystem::path& path, const PointCloud& cloud, PlyEncoding encoding) {
  if (cloud.cols() == 0) {
    throw DomainError("save_ply: empty cloud");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_ply: cannot open " + path.string());
  out << "ply\n"
      << (encoding == PlyEncoding::Ascii ? "format ascii 1.0\n" : "format binary_little_endian 1.0\n")
      << "element vertex " << cloud.cols() << "\n"
      << "property float x\nproperty float y\nproperty float z\nend_header\n";
  if (encoding == PlyEncoding::Ascii) {
    char buf[96];
    for (Eigen::Index i = 0; i < cloud.cols(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g\n", double(float(cloud(0, i))),
                    double(float(cloud(1, i))), double(float(cloud(2, i))));
      out << buf;
    }
  } else {
    for (Eigen::Index i = 0; i < cloud.cols(); ++i) {
      for (int d = 0; d < 3; ++d) binary::write<float>(out, float(cloud(d, i)));
    }
  }
  if (!out) throw IoError("save_ply: write failed for " + path.string());
}

PointCloud load_ply(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_ply: cannot open " + path.string());
  const PlyHeader header = read_ply_header(in);
  PointCloud cloud(3, Eigen::Index(header.vertex_count));
  std::vector<double> row(header.properties.size());
  for (std::size_t i = 0; i < header.vertex_count; ++i) {
    if (header.ascii) {
      for (auto& value : row) {
        if (!(in >> value)) throw IoError("ply: truncated payload at vertex " + std::to_string(i));
      }
    } else {
      for (std::size_t p = 0; p < row.size(); ++p) row[p] = read_ply_scalar(in, header.properties[p]);
    }
    for (int d = 0; d < 3; ++d) {
      const double v = row[std::size_t(header.xyz[std::size_t(d)])];
      // Stored precision is 32-bit for our own files; other types keep their value.
      cloud(d, Eigen::Index(i)) = header.properties[std::size_t(header.xyz[std::size_t(d)])] == PlyScalar::Float32
                                      ? double(float(v))
                                      : v;
    }
  }
  if (!cloud.allFinite()) throw IoError("ply: non-finite coordinate in " + path.string());
  return cloud;
}

DepthFormat parse_depth_format(std::string_view name) {
  if (name == "d16") return DepthFormat::D16;
  if (name == "f32") return DepthFormat::F32;
  throw DomainError("unknown depth format '" + std::string(name) + "' (expected d16 or f32)");
}

DepthFormat depth_format_for(const std::filesystem::path& path) {
  return path.extension() == ".pgm" ? DepthFormat::D16 : DepthFormat::F32;
}

std::filesystem::path d16_sidecar(const std::filesystem::path& path) {
  std::filesystem::path p = path;
  p += ".scale";
  return p;
}

void save_depth(const std::filesystem::path& path, const DepthMap& depth, DepthFormat format, double scale) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw DomainError("save_depth: scale must be positive");
  const int w = depth.width();
  const int h = depth.height();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_depth: cannot open " + path.string());
  if (format == DepthFormat::F32) {
    binary::write_magic(out, "DPTH");
    binary::write<std::uint32_t>(out, std::uint32_t(w));
    binary::write<std::uint32_t>(out, std::uint32_t(h));
    binary::write<float>(out, float(scale));
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        binary::write<float>(out, depth.valid(u, v) ? float(depth.at(u, v) / scale) : 0.0f);
      }
    }
  } else {
    out << "P5\n" << w << " " << h << "\n65535\n";
    for (int v = 0; v < h; ++v) {
      for (int u = 0; u < w; ++u) {
        std::uint16_t units = 0;
        if (depth.valid(u, v)) {
          const double q = std::round(depth.at(u, v) / scale);
          if (q < 1.0 || q > 65535.0) {
            throw DomainError("save_depth: depth at (" + std::to_string(u) + "," + std::to_string(v) +
                              ") does not fit 16 bits at this scale");
          }
          units = std::uint16_t(q);
        }
        const unsigned char bytes[2] = {static_cast<unsigned char>(units >> 8),
                                        static_cast<unsigned char>(units & 0xff)};
        out.write(reinterpret_cast<const char*>(bytes), 2);
      }
    }
    std::ofstream side(d16_sidecar(path));
    if (!side) throw IoError("save_depth: cannot write sidecar for " + path.string());
    char buf[64];
    std::snprintf(buf, sizeof(buf), "scale=%.17g\n", scale);
    side << buf;
  }
  if (!out) throw IoError("save_depth: write failed for " + path.string());
}

namespace {

void expect_end(std::istream& in, const std::filesystem::path& path) {
  in.peek();
  if (!in.eof()) throw IoError("depth: dimension mismatch, trailing bytes in " + path.string());
}

DepthMap load_f32(std::istream& in, const std::filesystem::path& path) {
  binary::expect_magic(in, "DPTH");
  const auto w = binary::read<std::uint32_t>(in, "depth header");
  const auto h = binary::read<std::uint32_t>(in, "depth header");
  const auto scale = binary::read<float>(in, "depth header");
  if (w == 0 || h == 0 || w > (1u << 16) || h > (1u << 16)) throw IoError("depth: implausible dimensions");
  if (!(scale > 0.0f) || !std::isfinite(scale)) throw IoError("depth: non-positive scale");
  DepthMap::Raster values(h, w);
  for (std::uint32_t i = 0; i < w * h; ++i) {
    float stored = 0.0f;
    in.read(reinterpret_cast<char*>(&stored), sizeof(float));
    if (in.gcount() != std::streamsize(sizeof(float))) {
      throw IoError("depth: dimension mismatch, payload holds " + std::to_string(i) + " of " +
                    std::to_string(w * h) + " pixels");
    }
    values.data()[i] = double(stored) * double(scale);
  }
  expect_end(in, path);
  return DepthMap(std::move(values));
}

DepthMap load_d16(std::istream& in, const std::filesystem::path& path) {
  std::string magic;
  long w = 0;
  long h = 0;
  long maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (in.fail() || magic != "P5") throw IoError("depth: malformed PGM header in " + path.string());
  if (maxval != 65535) throw IoError("depth: d16 expects maxval 65535");
  if (w <= 0 || h <= 0 || w > (1 << 16) || h > (1 << 16)) throw IoError("depth: implausible dimensions");
  in.get();  // single whitespace after maxval

  std::ifstream side(d16_sidecar(path));
  if (!side) throw IoError("depth: missing scale sidecar " + d16_sidecar(path).string());
  std::string line;
  std::getline(side, line);
  if (line.rfind("scale=", 0) != 0) throw IoError("depth: malformed sidecar line '" + line + "'");
  char* end = nullptr;
  const double scale = std::strtod(line.c_str() + 6, &end);
  if (end == line.c_str() + 6 || !(scale > 0.0)) throw IoError("depth: malformed scale in sidecar");

  DepthMap::Raster values(h, w);
  for (long i = 0; i < w * h; ++i) {
    unsigned char bytes[2];
    in.read(reinterpret_cast<char*>(bytes), 2);
    if (in.gcount() != 2) {
      throw IoError("depth: dimension mismatch, payload holds " + std::to_string(i) + " of " +
                    std::to_string(w * h) + " pixels");
    }
    const unsigned units = (unsigned(bytes[0]) << 8) | unsigned(bytes[1]);
    values.data()[i] = double(units) * scale;
  }
  expect_end(in, path);
  return DepthMap(std::move(values));
}

}  // namespace

DepthMap load_depth(const std::filesystem::path& path, DepthFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_depth: cannot open " + path.string());
  return format == DepthFormat::F32 ? load_f32(in, path) : load_d16(in, path);
}

}  // namespace depthint
