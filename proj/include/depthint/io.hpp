#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "depthint/core.hpp"

namespace depthint {

enum class PlyEncoding { Ascii, BinaryLittleEndian };

/// Vertex-only PLY with float x/y/z. Throws DomainError on an empty cloud.
void save_ply(const std::filesystem::path& path, const PointCloud& cloud,
              PlyEncoding encoding = PlyEncoding::BinaryLittleEndian);

/// Reads ASCII or binary little-endian PLY. Extra scalar vertex properties are skipped;
/// list properties and non-vertex elements with a nonzero count are rejected.
PointCloud load_ply(const std::filesystem::path& path);

enum class DepthFormat {
  D16,  // 16-bit big-endian PGM (P5, maxval 65535) plus "<path>.scale" holding "scale=<m>"
  F32,  // "DPTH", u32 width, u32 height, f32 scale, row-major f32 payload; little-endian
};

DepthFormat parse_depth_format(std::string_view name);
/// Format implied by the extension: ".pgm" -> D16, anything else -> F32.
DepthFormat depth_format_for(const std::filesystem::path& path);

/// scale is meters per stored unit. For D16 each depth is rounded to the nearest unit.
void save_depth(const std::filesystem::path& path, const DepthMap& depth, DepthFormat format,
                double scale = 1.0);
DepthMap load_depth(const std::filesystem::path& path, DepthFormat format);

std::filesystem::path d16_sidecar(const std::filesystem::path& path);

}  // namespace depthint
