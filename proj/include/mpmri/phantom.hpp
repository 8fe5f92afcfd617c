#pragma once

#include "mpmri/ingest.hpp"
#include "mpmri/volume.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace mpmri {

struct PhantomSpec {
  int num_studies = 10;
  Shape3 image_shape = {64, 64, 8};
  int num_dwi_bvalues = 1;  // 1..3
  double noise_sigma = 4.0;
  std::uint64_t seed = 0;
  Spacing3 spacing = Spacing3(1.5, 1.5, 7.8);

  void validate() const;
};

enum class Tissue : std::uint8_t { Air, Fat, Parenchyma, Vessel, Fluid, Lesion };
inline constexpr int kNumTissues = 6;

/// Tissue layout of one phantom study, shared by all of its series.
struct Anatomy {
  Volume<std::uint8_t> tissue;  // Tissue per voxel
  Volume<float> adc;            // smooth diffusion map, 1e-3 mm^2/s
};

/// Body ellipsoid with a fat rim, fluid blobs, tubular vessels and 1-3 lesions.
Anatomy generate_anatomy(const PhantomSpec& spec, int study_index);

/// 1 where the anatomy holds tissue t.
Volume<float> tissue_mask(const Anatomy& anatomy, Tissue t);

/// Patients cover studies round-robin: study i belongs to patient i % ceil(0.8 n).
int phantom_patient_count(const PhantomSpec& spec);
std::string phantom_patient_id(const PhantomSpec& spec, int study_index);

/// DWI b-values of one study: one per bucket for 3, low and high for 2, a random bucket for 1.
std::vector<double> phantom_b_values(const PhantomSpec& spec, int study_index);

/// Labeled study with one series per non-DWI label plus num_dwi_bvalues DWI series.
Study generate_study(const PhantomSpec& spec, int study_index);

std::vector<Study> generate_studies(const PhantomSpec& spec);

/**
 * Writes out/STUDY_xxxx/SERIES_<label>[_b###]/IMG_####.dcm plus out/labels.tsv.
 * The tree is built in a sibling temporary directory and renamed into place,
 * so a failure leaves nothing at out. out must not exist or be empty.
 */
void write_dicom_tree(const std::vector<Study>& studies, const std::filesystem::path& out);

}  // namespace mpmri
