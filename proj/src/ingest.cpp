#include "mpmri/ingest.hpp"
#include "mpmri/errors.hpp"

#include <Eigen/Geometry>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace mpmri {
namespace fs = std::filesystem;

namespace {

constexpr double kUnitTolerance = 1e-3;
constexpr double kAxialThreshold = 0.9;
constexpr double kGapFactor = 1.5;
constexpr double kDuplicateTolerance = 1e-4;  // mm

Eigen::Vector3d slice_normal(const Orientation6& cosines) {
  const Eigen::Vector3d row = cosines.head<3>();
  const Eigen::Vector3d col = cosines.tail<3>();
  return row.cross(col);
}

double median(std::vector<double> values) {
  const auto mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  double hi = values[mid];
  if (values.size() % 2 == 1) return hi;
  double lo = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

}  // namespace

std::string_view token(BodyRegion region) {
  switch (region) {
    case BodyRegion::Chest: return "chest";
    case BodyRegion::ChestAbdomen: return "chest+abd";
    case BodyRegion::Abdomen: return "abd";
    case BodyRegion::AbdomenPelvis: return "abd+pelvis";
    case BodyRegion::Pelvis: return "pelvis";
  }
  return "";
}

std::optional<BodyRegion> parse_body_region(std::string_view text) {
  std::string t(text);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::toupper(c); });
  if (t == "CHEST") return BodyRegion::Chest;
  if (t == "CHEST+ABD" || t == "CHESTABDOMEN" || t == "CHEST_ABDOMEN") return BodyRegion::ChestAbdomen;
  if (t == "ABD" || t == "ABDOMEN") return BodyRegion::Abdomen;
  if (t == "ABD+PELVIS" || t == "ABDOMENPELVIS" || t == "ABDOMEN_PELVIS") return BodyRegion::AbdomenPelvis;
  if (t == "PELVIS") return BodyRegion::Pelvis;
  return std::nullopt;
}

std::string_view token(DwiBucket bucket) {
  switch (bucket) {
    case DwiBucket::Low: return "low";
    case DwiBucket::Intermediate: return "intermediate";
    case DwiBucket::High: return "high";
  }
  return "";
}

DwiBucketAssignment classify_dwi_bucket(double b_value) {
  if (!(b_value >= 0.0)) throw ValidationError("b-value must be non-negative, got " + std::to_string(b_value));
  if (b_value <= 200.0) return {DwiBucket::Low, false};
  if (b_value <= 800.0) return {DwiBucket::Intermediate, false};
  return {DwiBucket::High, b_value > 1400.0};
}

bool is_axial(const Orientation6& orientation_cosines, std::string_view series_uid) {
  const double row_norm = orientation_cosines.head<3>().norm();
  const double col_norm = orientation_cosines.tail<3>().norm();
  if (std::abs(row_norm - 1.0) > kUnitTolerance || std::abs(col_norm - 1.0) > kUnitTolerance) {
    std::ostringstream msg;
    msg << "series " << series_uid << ": orientation cosines are not unit vectors (norms " << row_norm << ", "
        << col_norm << ")";
    throw ValidationError(msg.str());
  }
  return std::abs(slice_normal(orientation_cosines).z()) >= kAxialThreshold;
}

SeriesVolume assemble_volume(std::span<const DicomSlice> slices) {
  if (slices.size() < 2) throw DataError("a series needs at least 2 slices, got " + std::to_string(slices.size()));
  const DicomSlice& first = slices.front();
  for (const auto& s : slices) {
    if (s.series_uid != first.series_uid)
      throw DataError("slices from different series: " + first.series_uid + " and " + s.series_uid);
    if (s.pixels.rows() != first.pixels.rows() || s.pixels.cols() != first.pixels.cols())
      throw DataError("series " + first.series_uid + ": inconsistent in-plane shape");
    if ((s.pixel_spacing - first.pixel_spacing).cwiseAbs().maxCoeff() > 1e-6)
      throw DataError("series " + first.series_uid + ": inconsistent pixel spacing");
  }
  if ((first.pixel_spacing.array() <= 0.0).any())
    throw DataError("series " + first.series_uid + ": pixel spacing must be positive");

  const Eigen::Vector3d normal = slice_normal(first.orientation_cosines).normalized();
  std::vector<std::pair<double, std::size_t>> order;
  order.reserve(slices.size());
  for (std::size_t i = 0; i < slices.size(); ++i) order.emplace_back(normal.dot(slices[i].image_position), i);
  // Ties on position are resolved by instance number so the duplicate report is stable.
  std::sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return slices[a.second].instance_number < slices[b.second].instance_number;
  });

  std::vector<double> gaps;
  std::vector<int> duplicates;
  for (std::size_t i = 1; i < order.size(); ++i) {
    const double gap = order[i].first - order[i - 1].first;
    if (gap < kDuplicateTolerance) {
      duplicates.push_back(slices[order[i - 1].second].instance_number);
      duplicates.push_back(slices[order[i].second].instance_number);
    }
    gaps.push_back(gap);
  }
  if (!duplicates.empty()) {
    std::sort(duplicates.begin(), duplicates.end());
    duplicates.erase(std::unique(duplicates.begin(), duplicates.end()), duplicates.end());
    std::ostringstream msg;
    msg << "series " << first.series_uid << ": duplicate slice positions for instances";
    for (int n : duplicates) msg << ' ' << n;
    throw DataError(msg.str());
  }

  SeriesVolume out;
  const double dz = median(gaps);
  out.slice_gap_flagged = std::any_of(gaps.begin(), gaps.end(), [&](double g) { return g > kGapFactor * dz; });
  out.spacing = Spacing3(first.pixel_spacing[0], first.pixel_spacing[1], dz);
  out.patient_id = first.patient_id;
  out.study_uid = first.study_uid;
  out.series_uid = first.series_uid;
  out.b_value = first.b_value;

  const Index rows = first.pixels.rows();
  const Index cols = first.pixels.cols();
  out.voxels = Volume<float>({rows, cols, static_cast<Index>(slices.size())});
  for (std::size_t k = 0; k < order.size(); ++k) {
    const DicomSlice& s = slices[order[k].second];
    const auto z = static_cast<Index>(k);
    for (Index c = 0; c < cols; ++c)
      for (Index r = 0; r < rows; ++r)
        out.voxels(r, c, z) = static_cast<float>(s.pixels(r, c) * s.rescale_slope + s.rescale_intercept);
  }
  return out;
}

LabelManifest read_label_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open labels manifest " + path.string());
  LabelManifest labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 'series_uid<TAB>label'");
    const std::string uid = line.substr(0, tab);
    const auto label = parse_label(line.substr(tab + 1));
    if (uid.empty() || !label)
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": unknown label '" + line.substr(tab + 1) +
                      "'");
    labels[uid] = *label;
  }
  return labels;
}

void write_label_manifest(const std::vector<std::pair<std::string, SeriesLabel>>& records, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write labels manifest " + path.string());
  for (const auto& [uid, label] : records) out << uid << '\t' << token(label) << '\n';
  if (!out) throw DataError("failed writing labels manifest " + path.string());
}

void write_ingest_report(const IngestReport& report, std::ostream& out) {
  nlohmann::ordered_json j;
  j["files_seen"] = report.files_seen;
  j["non_dicom_skipped"] = report.non_dicom_skipped;
  j["studies"] = report.studies;
  j["series"] = report.series;
  j["labeled_series"] = report.labeled_series;
  j["series_with_slice_gaps"] = report.series_with_slice_gaps;
  j["exclusions"] = report.exclusions;
  j["warnings"] = report.warnings;
  out << j.dump(2) << '\n';
}

ScanResult scan_study_tree(const fs::path& root, const LabelManifest* labels) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw DataError("cannot read study root " + root.string());

  std::vector<fs::path> files;
  fs::recursive_directory_iterator it(root, fs::directory_options::skip_permission_denied, ec);
  if (ec) throw DataError("cannot read study root " + root.string() + ": " + ec.message());
  for (; it != fs::recursive_directory_iterator(); it.increment(ec)) {
    if (ec) throw DataError("error walking " + root.string() + ": " + ec.message());
    if (it->is_regular_file(ec)) files.push_back(it->path());
  }
  std::sort(files.begin(), files.end());

  ScanResult result;
  IngestReport& report = result.report;
  report.files_seen = files.size();

  // study uid -> series uid -> slices
  std::map<std::string, std::map<std::string, std::vector<DicomSlice>>> grouped;
  std::map<std::string, std::string> body_parts;
  for (const auto& file : files) {
    if (!has_part10_signature(file)) {
      ++report.non_dicom_skipped;
      continue;
    }
    try {
      DicomSlice slice = read_dicom_slice(file);
      if (!slice.body_part.empty()) body_parts.emplace(slice.study_uid, slice.body_part);
      grouped[slice.study_uid][slice.series_uid].push_back(std::move(slice));
    } catch (const std::exception& e) {
      report.warnings.push_back(file.string() + ": " + e.what());
      ++report.exclusions["corrupt_file"];
    }
  }

  for (auto& [study_uid, series_map] : grouped) {
    Study study;
    study.study_uid = study_uid;
    if (auto bp = body_parts.find(study_uid); bp != body_parts.end()) study.body_region = parse_body_region(bp->second);
    for (auto& [series_uid, slices] : series_map) {
      try {
        if (!is_axial(slices.front().orientation_cosines, series_uid)) {
          ++report.exclusions["non_axial"];
          continue;
        }
        for (const auto& s : slices)
          if ((s.orientation_cosines - slices.front().orientation_cosines).cwiseAbs().maxCoeff() > kUnitTolerance)
            throw DataError("series " + series_uid + ": slices disagree on orientation");
      } catch (const std::exception& e) {
        report.warnings.push_back(e.what());
        ++report.exclusions["invalid_orientation"];
        continue;
      }
      if (slices.size() < 2) {
        ++report.exclusions["too_few_slices"];
        continue;
      }
      try {
        SeriesVolume volume = assemble_volume(slices);
        if (volume.slice_gap_flagged) ++report.series_with_slice_gaps;
        if (volume.b_value) {
          auto bucket = classify_dwi_bucket(*volume.b_value);
          if (bucket.above_range)
            report.warnings.push_back("series " + series_uid + ": b-value above 1400 s/mm2 treated as high");
        }
        if (labels != nullptr) {
          if (auto l = labels->find(series_uid); l != labels->end()) {
            volume.label = l->second;
            ++report.labeled_series;
          }
        }
        if (study.patient_id.empty()) study.patient_id = volume.patient_id;
        study.series.push_back(std::move(volume));
      } catch (const std::exception& e) {
        report.warnings.push_back(e.what());
        ++report.exclusions["assembly_error"];
      }
    }
    if (study.series.empty()) continue;
    report.series += study.series.size();
    result.studies.push_back(std::move(study));
  }
  report.studies = result.studies.size();
  return result;
}

}  // namespace mpmri
