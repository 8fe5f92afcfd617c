#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace mpmri {

using Orientation6 = Eigen::Matrix<double, 6, 1>;

/// Stored pixel values of one image, row-major as on disk.
using PixelGrid = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One decoded MR image plus the header attributes the pipeline consumes.
struct DicomSlice {
  std::string patient_id;
  std::string study_uid;
  std::string series_uid;
  std::string sop_instance_uid;
  int instance_number = 0;
  Eigen::Vector3d image_position = Eigen::Vector3d::Zero();
  Orientation6 orientation_cosines = (Orientation6() << 1, 0, 0, 0, 1, 0).finished();
  // (distance between rows, distance between columns)
  Eigen::Vector2d pixel_spacing = Eigen::Vector2d::Ones();
  double slice_spacing = 1.0;
  std::optional<double> b_value;
  std::string series_description;
  std::string body_part;
  double rescale_slope = 1.0;
  double rescale_intercept = 0.0;
  PixelGrid pixels;
};

/// Reads one DICOM Part 10 file. Throws DataError when the file cannot be decoded.
DicomSlice read_dicom_slice(const std::filesystem::path& path);

/// True when the file carries the Part 10 preamble signature ("DICM" at byte 128).
bool has_part10_signature(const std::filesystem::path& path);

/// The value a decimal-string (DS) attribute holding v decodes to after a write/read cycle.
double decimal_string_round_trip(double v);

/// Writes an MR image in explicit VR little endian with 16-bit unsigned pixels.
void write_dicom_slice(const DicomSlice& slice, const std::filesystem::path& path);

}  // namespace mpmri
