#pragma once

#include "mpmri/dicom_slice.hpp"
#include "mpmri/series_label.hpp"
#include "mpmri/volume.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace mpmri {

/// One assembled series: the unit of classification.
struct SeriesVolume {
  Volume<float> voxels;  // (row, column, slice)
  Spacing3 spacing = Spacing3::Ones();
  std::string patient_id;
  std::string study_uid;
  std::string series_uid;
  std::optional<double> b_value;
  std::optional<SeriesLabel> label;
  // Set when some inter-slice distance exceeds 1.5x the median.
  bool slice_gap_flagged = false;
};

enum class BodyRegion { Chest, ChestAbdomen, Abdomen, AbdomenPelvis, Pelvis };

std::string_view token(BodyRegion region);
std::optional<BodyRegion> parse_body_region(std::string_view text);

struct Study {
  std::string study_uid;
  std::string patient_id;
  std::vector<SeriesVolume> series;
  std::optional<BodyRegion> body_region;
};

enum class DwiBucket { Low, Intermediate, High };

std::string_view token(DwiBucket bucket);

struct DwiBucketAssignment {
  DwiBucket bucket;
  bool above_range;  // b > 1400: clamped into High
};

/// Buckets: low [0, 200], intermediate (200, 800], high (800, 1400]; above 1400 is High with a flag.
DwiBucketAssignment classify_dwi_bucket(double b_value);

/// True iff |(row x col) . z| >= 0.9. Throws ValidationError naming series_uid on non-unit cosines.
bool is_axial(const Orientation6& orientation_cosines, std::string_view series_uid = {});

/// Sorts slices along the slice normal and stacks them into a dense volume.
SeriesVolume assemble_volume(std::span<const DicomSlice> slices);

using LabelManifest = std::unordered_map<std::string, SeriesLabel>;

/// One record per line: series_uid TAB label-token.
LabelManifest read_label_manifest(const std::filesystem::path& path);
void write_label_manifest(const std::vector<std::pair<std::string, SeriesLabel>>& records,
                          const std::filesystem::path& path);

struct IngestReport {
  std::size_t files_seen = 0;
  std::size_t non_dicom_skipped = 0;
  std::size_t studies = 0;
  std::size_t series = 0;
  std::size_t labeled_series = 0;
  std::size_t series_with_slice_gaps = 0;
  std::map<std::string, std::size_t> exclusions;  // reason -> series count
  std::vector<std::string> warnings;
};

void write_ingest_report(const IngestReport& report, std::ostream& out);

struct ScanResult {
  std::vector<Study> studies;
  IngestReport report;
};

/**
 * Walks root recursively, decodes every Part 10 file, groups slices by study
 * and series, keeps axial series only and assembles each one. Studies come
 * back sorted by study UID with their series sorted by series UID.
 *
 * Throws DataError when root cannot be read. A corrupt file or a series that
 * fails assembly is recorded in the report and never aborts the scan.
 */
ScanResult scan_study_tree(const std::filesystem::path& root, const LabelManifest* labels = nullptr);

}  // namespace mpmri
