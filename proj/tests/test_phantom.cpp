#include "helpers.hpp"
#include "mpmri/phantom.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <set>

using namespace mpmri;

namespace {

const SeriesVolume& series_with(const Study& s, SeriesLabel label) {
  for (const auto& v : s.series)
    if (v.label == label) return v;
  throw std::runtime_error("label missing");
}

double masked_mean(const Volume<float>& v, const Volume<float>& mask) {
  const double n = mask.data().sum();
  return n > 0 ? v.data().cwiseProduct(mask.data()).sum() / n : 0.0;
}

}  // namespace

TEST_CASE("spec validation") {
  PhantomSpec s;
  CHECK_NOTHROW(s.validate());
  s.num_dwi_bvalues = 4;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = {};
  s.num_studies = -1;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = {};
  s.image_shape = {0, 4, 4};
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s = {};
  s.noise_sigma = -1;
  CHECK_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("a study with three b-values has ten labeled series") {
  PhantomSpec spec;
  spec.num_dwi_bvalues = 3;
  const auto study = generate_study(spec, 0);
  CHECK(study.series.size() == 10);
  std::map<SeriesLabel, int> counts;
  std::set<std::string> uids;
  for (const auto& s : study.series) {
    REQUIRE(s.label.has_value());
    ++counts[*s.label];
    uids.insert(s.series_uid);
    CHECK(s.voxels.shape() == spec.image_shape);
    CHECK(s.study_uid == study.study_uid);
    CHECK(s.voxels.data().allFinite());
  }
  CHECK(uids.size() == 10);
  for (auto l : kAllLabels) CHECK(counts[l] == (l == SeriesLabel::DWI ? 3 : 1));
  CHECK(series_with(study, SeriesLabel::DWI).b_value.has_value());
  CHECK(!series_with(study, SeriesLabel::T2).b_value.has_value());
}

TEST_CASE("b-values fall in their buckets") {
  PhantomSpec spec;
  for (int n = 1; n <= 3; ++n) {
    spec.num_dwi_bvalues = n;
    for (int i = 0; i < 30; ++i) {
      const auto bs = phantom_b_values(spec, i);
      REQUIRE(bs.size() == static_cast<std::size_t>(n));
      std::set<DwiBucket> buckets;
      for (double b : bs) {
        CHECK(b >= 0);
        CHECK(b <= 1400);
        buckets.insert(classify_dwi_bucket(b).bucket);
      }
      CHECK(buckets.size() == static_cast<std::size_t>(n));
      if (n == 2) CHECK(buckets == std::set<DwiBucket>{DwiBucket::Low, DwiBucket::High});
    }
  }
}

TEST_CASE("generation is deterministic per seed") {
  PhantomSpec spec;
  spec.image_shape = {24, 24, 4};
  spec.num_studies = 2;
  const auto a = generate_studies(spec), b = generate_studies(spec);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].study_uid == b[i].study_uid);
    for (std::size_t k = 0; k < a[i].series.size(); ++k) CHECK(a[i].series[k].voxels == b[i].series[k].voxels);
  }
  spec.seed = 1;
  CHECK(generate_studies(spec)[0].study_uid != a[0].study_uid);
}

TEST_CASE("patients cover studies round-robin") {
  PhantomSpec spec;
  spec.num_studies = 10;
  CHECK(phantom_patient_count(spec) == 8);
  CHECK(phantom_patient_id(spec, 0) == phantom_patient_id(spec, 8));
  CHECK(phantom_patient_id(spec, 1) != phantom_patient_id(spec, 2));
  spec.num_studies = 200;
  CHECK(phantom_patient_count(spec) == 160);
}

TEST_CASE("fat suppression darkens the fat rim after normalization") {
  PhantomSpec spec;
  for (int i = 0; i < 5; ++i) {
    const auto study = generate_study(spec, i);
    const auto fat = tissue_mask(generate_anatomy(spec, i), Tissue::Fat);
    REQUIRE(fat.data().sum() > 0);
    const double t2 = masked_mean(percentile_normalize(series_with(study, SeriesLabel::T2).voxels), fat);
    const double t2fs = masked_mean(percentile_normalize(series_with(study, SeriesLabel::T2FS).voxels), fat);
    CHECK(t2fs - t2 < 0);
  }
}

TEST_CASE("arterial phase brightens vessels relative to pre-contrast") {
  PhantomSpec spec;
  const auto study = generate_study(spec, 3);
  const auto vessel = tissue_mask(generate_anatomy(spec, 3), Tissue::Vessel);
  const auto pre = percentile_normalize(series_with(study, SeriesLabel::T1wPre).voxels);
  const auto art = percentile_normalize(series_with(study, SeriesLabel::T1wArt).voxels);
  CHECK(masked_mean(art, vessel) > masked_mean(pre, vessel));
}

TEST_CASE("mean intensity alone does not identify the series type") {
  PhantomSpec spec;
  spec.num_studies = 200;
  spec.image_shape = {32, 32, 4};
  const auto studies = generate_studies(spec);
  std::vector<double> x;
  std::vector<int> y;
  for (const auto& s : studies)
    for (const auto& v : s.series) {
      x.push_back(v.voxels.data().mean());
      y.push_back(index_of(*v.label));
    }
  const std::size_t n_train = x.size() / 2;
  double mu = 0, sd = 0;
  for (std::size_t i = 0; i < n_train; ++i) mu += x[i] / static_cast<double>(n_train);
  for (std::size_t i = 0; i < n_train; ++i) sd += (x[i] - mu) * (x[i] - mu) / static_cast<double>(n_train);
  sd = std::sqrt(sd);
  // Multinomial logistic regression on the standardized mean.
  Eigen::VectorXd w = Eigen::VectorXd::Zero(8), b = Eigen::VectorXd::Zero(8);
  for (int it = 0; it < 500; ++it) {
    Eigen::VectorXd gw = Eigen::VectorXd::Zero(8), gb = Eigen::VectorXd::Zero(8);
    for (std::size_t i = 0; i < n_train; ++i) {
      const double z = (x[i] - mu) / sd;
      Eigen::VectorXd l = w * z + b;
      l = (l.array() - l.maxCoeff()).exp();
      l /= l.sum();
      l[y[i]] -= 1;
      gw += l * z;
      gb += l;
    }
    w -= 0.5 * gw / static_cast<double>(n_train);
    b -= 0.5 * gb / static_cast<double>(n_train);
  }
  std::size_t correct = 0;
  for (std::size_t i = n_train; i < x.size(); ++i) {
    Eigen::Index best = 0;
    (w * ((x[i] - mu) / sd) + b).maxCoeff(&best);
    correct += best == y[i];
  }
  const double acc = static_cast<double>(correct) / static_cast<double>(x.size() - n_train);
  MESSAGE("mean-intensity accuracy " << acc);
  CHECK(acc < 0.5);
}

TEST_CASE("written tree scans back to the generated inventory") {
  test::TempDir dir("phantom");
  PhantomSpec spec;
  spec.num_studies = 3;
  spec.num_dwi_bvalues = 2;
  spec.image_shape = {20, 18, 5};
  const auto studies = generate_studies(spec);
  write_dicom_tree(studies, dir / "tree");
  CHECK(std::filesystem::is_directory(dir / "tree" / "STUDY_0000" / "SERIES_T2"));
  const auto labels = read_label_manifest(dir / "tree" / "labels.tsv");
  CHECK(labels.size() == 27);
  const auto r = scan_study_tree(dir / "tree", &labels);
  REQUIRE(r.studies.size() == 3);
  std::map<std::string, const SeriesVolume*> generated;
  for (const auto& s : studies)
    for (const auto& v : s.series) generated[v.series_uid] = &v;
  std::size_t seen = 0;
  for (const auto& s : r.studies)
    for (const auto& v : s.series) {
      REQUIRE(generated.contains(v.series_uid));
      const auto& g = *generated[v.series_uid];
      ++seen;
      CHECK(v.label == g.label);
      CHECK(v.b_value == g.b_value);
      CHECK(v.patient_id == g.patient_id);
      REQUIRE(v.voxels.shape() == g.voxels.shape());
      CHECK((v.spacing - g.spacing).cwiseAbs().maxCoeff() < 1e-4);
      const double range = g.voxels.data().maxCoeff() - g.voxels.data().minCoeff();
      const double slope = range / 65534.0;
      CHECK((v.voxels.data() - g.voxels.data()).cwiseAbs().maxCoeff() <= slope + 1e-3 * slope + 1e-6);
    }
  CHECK(seen == 27);
}

TEST_CASE("writing refuses non-empty targets and leaves nothing behind on failure") {
  test::TempDir dir("phantom_fail");
  PhantomSpec spec;
  spec.num_studies = 1;
  spec.image_shape = {8, 8, 2};
  const auto studies = generate_studies(spec);

  std::ofstream(dir / "file") << "x";
  CHECK_THROWS(write_dicom_tree(studies, dir / "file" / "tree"));
  CHECK(!std::filesystem::exists(dir / "file" / "tree"));

  std::filesystem::create_directories(dir / "busy");
  std::ofstream(dir / "busy" / "keep.txt") << "x";
  CHECK_THROWS_AS(write_dicom_tree(studies, dir / "busy"), DataError);
  CHECK(std::filesystem::exists(dir / "busy" / "keep.txt"));

  std::size_t leftovers = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir.path()))
    leftovers += e.path().filename().string().starts_with(".partial");
  CHECK(leftovers == 0);
}
