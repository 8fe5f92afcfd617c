#include "mpmri/phantom.hpp"
#include "mpmri/dicom_slice.hpp"
#include "mpmri/errors.hpp"
#include "mpmri/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <random>

namespace mpmri {
namespace fs = std::filesystem;

namespace {

// Signal per tissue (Air, Fat, Parenchyma, Vessel, Fluid, Lesion) before gain and offset.
constexpr std::array<std::array<double, kNumTissues>, 6> kAnatomicalSignal = {{
    {0, 320, 110, 70, 30, 80},    // T1w-pre
    {0, 320, 150, 560, 30, 340},  // T1w-art
    {0, 320, 300, 420, 35, 200},  // T1w-por
    {0, 320, 272, 310, 34, 182},  // T1w-del: 0.85 of the portal enhancement, vessels near parenchyma
    {0, 280, 80, 25, 480, 210},   // T2
    {0, 30, 95, 25, 480, 230},    // T2FS
}};
constexpr std::array<double, kNumTissues> kDwiS0 = {0, 15, 160, 10, 200, 560};
constexpr std::array<double, kNumTissues> kAdc = {0, 0.5, 1.1, 2.2, 3.0, 0.7};

struct Ellipsoid {
  Eigen::Vector3d center;  // voxel units
  Eigen::Vector3d radius;

  bool contains(double r, double c, double s) const {
    const Eigen::Vector3d d((r - center[0]) / radius[0], (c - center[1]) / radius[1], (s - center[2]) / radius[2]);
    return d.squaredNorm() <= 1.0;
  }
};

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

int uniform_int(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

std::vector<double> gaussian_kernel(double sigma) {
  const int half = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * half + 1));
  double sum = 0;
  for (int i = -half; i <= half; ++i) sum += k[static_cast<std::size_t>(i + half)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (double& v : k) v /= sum;
  return k;
}

// Separable in-plane Gaussian with edge clamping.
Volume<double> blur_in_plane(const Volume<double>& v, double sigma) {
  if (sigma <= 0) return v;
  const auto k = gaussian_kernel(sigma);
  const int half = static_cast<int>(k.size() / 2);
  Volume<double> tmp(v.shape()), out(v.shape());
  const Index R = v.rows(), C = v.cols(), S = v.slices();
  for (Index s = 0; s < S; ++s)
    for (Index c = 0; c < C; ++c)
      for (Index r = 0; r < R; ++r) {
        double acc = 0;
        for (int i = -half; i <= half; ++i) acc += k[static_cast<std::size_t>(i + half)] * v(std::clamp<Index>(r + i, 0, R - 1), c, s);
        tmp(r, c, s) = acc;
      }
  for (Index s = 0; s < S; ++s)
    for (Index c = 0; c < C; ++c)
      for (Index r = 0; r < R; ++r) {
        double acc = 0;
        for (int i = -half; i <= half; ++i) acc += k[static_cast<std::size_t>(i + half)] * tmp(r, std::clamp<Index>(c + i, 0, C - 1), s);
        out(r, c, s) = acc;
      }
  return out;
}

Volume<double> paint(const Anatomy& a, const std::array<double, kNumTissues>& table) {
  Volume<double> v(a.tissue.shape());
  for (Index i = 0; i < v.size(); ++i) v.data()[i] = table[a.tissue.data()[i]];
  return v;
}

// Magnitude of signal plus complex Gaussian noise.
void add_rician_noise(Volume<double>& v, double sigma, std::mt19937_64& rng) {
  if (sigma <= 0) return;
  std::normal_distribution<double> n(0.0, sigma);
  for (Index i = 0; i < v.size(); ++i) {
    const double re = v.data()[i] + n(rng), im = n(rng);
    v.data()[i] = std::sqrt(re * re + im * im);
  }
}

// Smooth multiplicative shading across the field of view.
void apply_shading(Volume<double>& v, std::mt19937_64& rng) {
  const double gr = uniform(rng, -0.1, 0.1), gc = uniform(rng, -0.1, 0.1);
  for (Index s = 0; s < v.slices(); ++s)
    for (Index c = 0; c < v.cols(); ++c)
      for (Index r = 0; r < v.rows(); ++r)
        v(r, c, s) *= 1.0 + gr * (2.0 * static_cast<double>(r) / static_cast<double>(v.rows()) - 1.0) +
                      gc * (2.0 * static_cast<double>(c) / static_cast<double>(v.cols()) - 1.0);
}

std::string uid_from(std::uint64_t key) { return "2.25." + std::to_string(key); }

std::string series_dir_name(const SeriesVolume& s) {
  std::string name = "SERIES_" + std::string(token(*s.label));
  if (s.b_value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "_b%03d", static_cast<int>(std::lround(*s.b_value)));
    name += buf;
  }
  return name;
}

}  // namespace

void PhantomSpec::validate() const {
  if (num_studies < 0) throw ValidationError("number of phantom studies must be non-negative");
  for (Index d : image_shape)
    if (d <= 0) throw ValidationError("phantom image shape must be positive");
  if (image_shape[2] < 2) throw ValidationError("phantom volumes need at least 2 slices");
  if (num_dwi_bvalues < 1 || num_dwi_bvalues > 3) throw ValidationError("num_dwi_bvalues must be 1, 2 or 3");
  if (!(noise_sigma >= 0.0)) throw ValidationError("noise sigma must be non-negative");
  if (!(spacing.array() > 0.0).all()) throw ValidationError("phantom spacing must be positive");
}

Anatomy generate_anatomy(const PhantomSpec& spec, int study_index) {
  spec.validate();
  auto rng = substream(spec.seed, "anatomy", static_cast<std::uint64_t>(study_index));
  const auto R = static_cast<double>(spec.image_shape[0]), C = static_cast<double>(spec.image_shape[1]),
             S = static_cast<double>(spec.image_shape[2]);

  Ellipsoid body{{R / 2 + uniform(rng, -2, 2), C / 2 + uniform(rng, -2, 2), (S - 1) / 2},
                 {R * uniform(rng, 0.36, 0.45), C * uniform(rng, 0.40, 0.47), S * uniform(rng, 0.9, 1.4)}};
  const double rim = uniform(rng, 0.08, 0.16);
  Ellipsoid inner = body;
  inner.radius[0] *= 1.0 - rim;
  inner.radius[1] *= 1.0 - rim;

  // A random point well inside the inner ellipsoid.
  auto interior_point = [&](double reach) {
    const double t = uniform(rng, 0, 2 * M_PI), rho = reach * std::sqrt(uniform(rng, 0, 1));
    return Eigen::Vector3d(inner.center[0] + rho * inner.radius[0] * std::cos(t),
                           inner.center[1] + rho * inner.radius[1] * std::sin(t), uniform(rng, 0, S - 1));
  };

  struct Tube {
    Eigen::Vector2d center;
    Eigen::Vector2d drift;  // per slice
    double radius;
  };
  std::vector<Tube> vessels;
  for (int i = 0, n = uniform_int(rng, 2, 3); i < n; ++i) {
    const auto p = interior_point(0.5);
    vessels.push_back({p.head<2>(), {uniform(rng, -0.5, 0.5), uniform(rng, -0.5, 0.5)}, uniform(rng, 1.5, 3.0)});
  }
  std::vector<Ellipsoid> fluid, lesions;
  for (int i = 0, n = uniform_int(rng, 1, 3); i < n; ++i) {
    const double rr = uniform(rng, 2.5, 5.5);
    fluid.push_back({interior_point(0.6), {rr, rr * uniform(rng, 0.8, 1.25), uniform(rng, 0.6, 1.6)}});
  }
  for (int i = 0, n = uniform_int(rng, 1, 3); i < n; ++i) {
    const double rr = uniform(rng, 1.5, 4.0);
    lesions.push_back({interior_point(0.6), {rr, rr * uniform(rng, 0.8, 1.25), uniform(rng, 0.6, 1.5)}});
  }

  Anatomy a;
  a.tissue = Volume<std::uint8_t>(spec.image_shape, static_cast<std::uint8_t>(Tissue::Air));
  for (Index s = 0; s < spec.image_shape[2]; ++s)
    for (Index c = 0; c < spec.image_shape[1]; ++c)
      for (Index r = 0; r < spec.image_shape[0]; ++r) {
        const double x = static_cast<double>(r), y = static_cast<double>(c), z = static_cast<double>(s);
        if (!body.contains(x, y, z)) continue;
        Tissue t = Tissue::Fat;
        if (inner.contains(x, y, z)) {
          t = Tissue::Parenchyma;
          for (const auto& v : vessels) {
            const Eigen::Vector2d ctr = v.center + v.drift * (z - (S - 1) / 2);
            if ((Eigen::Vector2d(x, y) - ctr).norm() <= v.radius) t = Tissue::Vessel;
          }
          for (const auto& f : fluid)
            if (f.contains(x, y, z)) t = Tissue::Fluid;
          for (const auto& l : lesions)
            if (l.contains(x, y, z)) t = Tissue::Lesion;
        }
        a.tissue(r, c, s) = static_cast<std::uint8_t>(t);
      }

  std::array<double, kNumTissues> adc = kAdc;
  for (std::size_t t = 1; t < adc.size(); ++t) adc[t] *= uniform(rng, 0.95, 1.05);
  a.adc = blur_in_plane(paint(a, adc), 1.0).cast<float>();
  return a;
}

Volume<float> tissue_mask(const Anatomy& anatomy, Tissue t) {
  Volume<float> m(anatomy.tissue.shape());
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = anatomy.tissue.data()[i] == static_cast<std::uint8_t>(t) ? 1.f : 0.f;
  return m;
}

int phantom_patient_count(const PhantomSpec& spec) {
  return std::max(1, static_cast<int>(std::ceil(0.8 * spec.num_studies)));
}

std::string phantom_patient_id(const PhantomSpec& spec, int study_index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "PHANTOM_%04d", study_index % phantom_patient_count(spec));
  return buf;
}

std::vector<double> phantom_b_values(const PhantomSpec& spec, int study_index) {
  auto rng = substream(spec.seed, "bvalues", static_cast<std::uint64_t>(study_index));
  const std::array<std::vector<double>, 3> buckets = {{{0, 50, 100, 150},
                                                       {400, 500, 600, 700, 800},
                                                       {900, 1000, 1100, 1200, 1400}}};
  auto pick = [&](int bucket) {
    const auto& b = buckets[static_cast<std::size_t>(bucket)];
    return b[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(b.size()) - 1))];
  };
  switch (spec.num_dwi_bvalues) {
    case 1: return {pick(uniform_int(rng, 0, 2))};
    case 2: return {pick(0), pick(2)};
    default: return {pick(0), pick(1), pick(2)};
  }
}

Study generate_study(const PhantomSpec& spec, int study_index) {
  spec.validate();
  if (study_index < 0) throw ValidationError("study index must be non-negative");
  const Anatomy anatomy = generate_anatomy(spec, study_index);
  auto rng = substream(spec.seed, "study", static_cast<std::uint64_t>(study_index));
  const double enhancement = uniform(rng, 0.9, 1.1);

  Study study;
  study.patient_id = phantom_patient_id(spec, study_index);
  study.study_uid = uid_from(substream_seed(spec.seed, "study-uid", static_cast<std::uint64_t>(study_index)));
  study.body_region = BodyRegion::Abdomen;

  auto add_series = [&](SeriesLabel label, std::optional<double> b, int ordinal, Volume<double> signal) {
    auto srng = substream(substream_seed(spec.seed, "series", static_cast<std::uint64_t>(study_index)), "noise",
                          static_cast<std::uint64_t>(ordinal));
    apply_shading(signal, srng);
    const double sigma = label == SeriesLabel::ADC ? spec.noise_sigma / 200.0
                         : label == SeriesLabel::DWI ? 4.0 * spec.noise_sigma
                                                     : spec.noise_sigma;
    if (label == SeriesLabel::ADC) {
      std::normal_distribution<double> n(0.0, sigma);
      if (sigma > 0)
        for (Index i = 0; i < signal.size(); ++i) signal.data()[i] += n(srng);
    } else {
      add_rician_noise(signal, sigma, srng);
    }
    const double gain = uniform(srng, 0.5, 2.0), offset = uniform(srng, 0.0, 500.0);
    SeriesVolume s;
    s.voxels = Volume<float>(spec.image_shape, (gain * signal.data().array() + offset).cast<float>().matrix());
    s.spacing = spec.spacing;
    s.patient_id = study.patient_id;
    s.study_uid = study.study_uid;
    s.series_uid = uid_from(substream_seed(spec.seed, "series-uid",
                                           static_cast<std::uint64_t>(study_index) * 16 + static_cast<std::uint64_t>(ordinal)));
    s.b_value = b;
    s.label = label;
    study.series.push_back(std::move(s));
  };

  int ordinal = 0;
  for (int k = 0; k < 6; ++k) {
    auto table = kAnatomicalSignal[static_cast<std::size_t>(k)];
    if (k >= 1 && k <= 3)
      for (std::size_t t = 2; t < table.size(); ++t)
        table[t] = kAnatomicalSignal[0][t] + enhancement * (table[t] - kAnatomicalSignal[0][t]);
    add_series(label_from_index(k), std::nullopt, ordinal++, blur_in_plane(paint(anatomy, table), 0.6));
  }
  const Volume<double> s0 = paint(anatomy, kDwiS0);
  for (double b : phantom_b_values(spec, study_index)) {
    Volume<double> dwi(spec.image_shape);
    for (Index i = 0; i < dwi.size(); ++i)
      dwi.data()[i] = s0.data()[i] * std::exp(-b * 1e-3 * static_cast<double>(anatomy.adc.data()[i]));
    add_series(SeriesLabel::DWI, b, ordinal++, blur_in_plane(dwi, 2.0));
  }
  // ADC is derived from the DWI acquisition and shares its resolution.
  add_series(SeriesLabel::ADC, std::nullopt, ordinal++, blur_in_plane(anatomy.adc.cast<double>(), 2.0));
  return study;
}

std::vector<Study> generate_studies(const PhantomSpec& spec) {
  spec.validate();
  std::vector<Study> out;
  out.reserve(static_cast<std::size_t>(spec.num_studies));
  for (int i = 0; i < spec.num_studies; ++i) out.push_back(generate_study(spec, i));
  return out;
}

void write_dicom_tree(const std::vector<Study>& studies, const fs::path& out) {
  std::error_code ec;
  if (fs::exists(out, ec)) {
    if (!fs::is_directory(out, ec) || !fs::is_empty(out, ec))
      throw DataError("output path " + out.string() + " exists and is not an empty directory");
  }
  const fs::path parent = out.has_parent_path() ? out.parent_path() : fs::path(".");
  fs::create_directories(parent, ec);
  if (ec) throw DataError("cannot create " + parent.string() + ": " + ec.message());
  const fs::path staging = parent / (".partial_" + out.filename().string());
  fs::remove_all(staging, ec);

  try {
    fs::create_directory(staging, ec);
    if (ec) throw DataError("cannot create " + staging.string() + ": " + ec.message());
    std::vector<std::pair<std::string, SeriesLabel>> labels;
    for (std::size_t si = 0; si < studies.size(); ++si) {
      const Study& study = studies[si];
      char study_dir[32];
      std::snprintf(study_dir, sizeof study_dir, "STUDY_%04zu", si);
      for (const auto& series : study.series) {
        if (!series.label) throw ValidationError("phantom series " + series.series_uid + " has no label");
        const fs::path dir = staging / study_dir / series_dir_name(series);
        fs::create_directories(dir, ec);
        if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
        labels.emplace_back(series.series_uid, *series.label);

        const auto& v = series.voxels;
        const double lo = v.data().minCoeff(), hi = v.data().maxCoeff();
        const double intercept = decimal_string_round_trip(lo);
        double slope = hi > intercept ? decimal_string_round_trip((hi - intercept) / 65534.0) : 1.0;
        if (slope <= 0) slope = 1.0;

        for (Index z = 0; z < v.slices(); ++z) {
          DicomSlice d;
          d.patient_id = series.patient_id;
          d.study_uid = series.study_uid;
          d.series_uid = series.series_uid;
          d.instance_number = static_cast<int>(z + 1);
          d.sop_instance_uid = uid_from(substream_seed(0, series.series_uid, static_cast<std::uint64_t>(z)));
          d.image_position = Eigen::Vector3d(-0.5 * static_cast<double>(v.cols()) * series.spacing[1],
                                             -0.5 * static_cast<double>(v.rows()) * series.spacing[0],
                                             static_cast<double>(z) * series.spacing[2]);
          d.pixel_spacing = Eigen::Vector2d(series.spacing[0], series.spacing[1]);
          d.slice_spacing = series.spacing[2];
          d.b_value = series.b_value;
          d.body_part = study.body_region ? "ABDOMEN" : "";
          d.rescale_slope = slope;
          d.rescale_intercept = intercept;
          d.pixels.resize(v.rows(), v.cols());
          for (Index r = 0; r < v.rows(); ++r)
            for (Index c = 0; c < v.cols(); ++c)
              d.pixels(r, c) = static_cast<std::int32_t>(
                  std::clamp<long long>(std::llround((v(r, c, z) - intercept) / slope), 0, 65535));
          char name[32];
          std::snprintf(name, sizeof name, "IMG_%04d.dcm", d.instance_number);
          write_dicom_slice(d, dir / name);
        }
      }
    }
    write_label_manifest(labels, staging / "labels.tsv");
    if (fs::exists(out, ec)) fs::remove(out, ec);
    fs::rename(staging, out, ec);
    if (ec) throw DataError("cannot move " + staging.string() + " to " + out.string() + ": " + ec.message());
  } catch (...) {
    fs::remove_all(staging, ec);
    throw;
  }
}

}  // namespace mpmri
