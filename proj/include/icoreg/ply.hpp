#pragma once

#include <filesystem>

#include "icoreg/geom.hpp"

namespace icoreg::pipeline {

enum class PlyFormat { kAscii, kBinaryLittleEndian };

/// Reads the x, y, z properties of the "vertex" element. Other properties
/// and elements are skipped. Throws Error(kIo) when the file cannot be
/// opened and Error(kFormat) on a malformed header, a truncated payload, a
/// big-endian file, or a missing coordinate property.
geom::PointCloud read_ply(const std::filesystem::path& path);

/// Writes a vertex element with float x, y, z. Throws Error(kIo).
void write_ply(const geom::PointCloud& cloud, const std::filesystem::path& path,
               PlyFormat format = PlyFormat::kBinaryLittleEndian);

}  // namespace icoreg::pipeline
