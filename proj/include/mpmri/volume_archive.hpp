#pragma once

#include "mpmri/volume.hpp"

#include <cstdint>
#include <filesystem>

namespace mpmri {

enum class ScalarTag : std::uint8_t { UInt8 = 1, Int16 = 2, Float32 = 3, Float64 = 4 };

/**
 * Portable volume file: "MPMRIVOL", 3 x u64 extents, 3 x f64 spacings, a u8
 * scalar tag, then the voxels in storage order. Everything is little endian.
 */
template <typename Scalar>
void write_volume_archive(const Volume<Scalar>& volume, const Spacing3& spacing, const std::filesystem::path& path);

template <typename Scalar>
Volume<Scalar> read_volume_archive(const std::filesystem::path& path, Spacing3* spacing = nullptr);

/// Scalar tag stored in an archive header.
ScalarTag archive_scalar_tag(const std::filesystem::path& path);

}  // namespace mpmri
