#pragma once

#include "mpmri/errors.hpp"
#include "mpmri/ingest.hpp"
#include "mpmri/volume.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace mpmri {

struct PreprocessConfig {
  Spacing3 target_spacing = Spacing3(1.5, 1.5, 7.8);
  Shape3 target_shape = {256, 256, 36};
  double percentile_low = 1.0;
  double percentile_high = 99.0;
  double rotation_probability = 0.5;
};

/// Fixed-size normalized tensor fed to the classifier.
struct ModelInput {
  Volume<float> voxels;
  std::string series_uid;
};

namespace detail {

// Sample positions for one axis: output index i reads input coordinate
// (i + 0.5) * out_spacing / in_spacing - 0.5, clamped to the edge voxels.
struct AxisSampling {
  std::vector<Index> lo, hi;
  std::vector<double> frac;
};

inline AxisSampling axis_sampling(Index in_extent, double in_spacing, double out_spacing, Index first, Index count) {
  AxisSampling a;
  a.lo.resize(static_cast<std::size_t>(count));
  a.hi.resize(static_cast<std::size_t>(count));
  a.frac.resize(static_cast<std::size_t>(count));
  const double ratio = out_spacing / in_spacing;
  for (Index n = 0; n < count; ++n) {
    double x = (static_cast<double>(first + n) + 0.5) * ratio - 0.5;
    x = std::clamp(x, 0.0, static_cast<double>(in_extent - 1));
    const auto lo = static_cast<Index>(std::floor(x));
    const auto i = static_cast<std::size_t>(n);
    a.lo[i] = lo;
    a.hi[i] = std::min(lo + 1, in_extent - 1);
    a.frac[i] = x - static_cast<double>(lo);
  }
  return a;
}

inline Index resampled_extent(Index extent, double spacing, double target) {
  return std::max<Index>(1, static_cast<Index>(std::llround(static_cast<double>(extent) * spacing / target)));
}

// Trilinear resampling of the sub-grid [first, first + count) of the full resampled grid.
template <typename Scalar>
Volume<Scalar> resample_window(const Volume<Scalar>& in, const Spacing3& spacing, const Spacing3& target,
                               const Shape3& first, const Shape3& count) {
  AxisSampling ax[3];
  for (int d = 0; d < 3; ++d) ax[d] = axis_sampling(in.shape()[d], spacing[d], target[d], first[d], count[d]);
  Volume<Scalar> out(count);
  for (Index s = 0; s < count[2]; ++s) {
    const auto si = static_cast<std::size_t>(s);
    const Index s0 = ax[2].lo[si], s1 = ax[2].hi[si];
    const double ws = ax[2].frac[si];
    for (Index c = 0; c < count[1]; ++c) {
      const auto ci = static_cast<std::size_t>(c);
      const Index c0 = ax[1].lo[ci], c1 = ax[1].hi[ci];
      const double wc = ax[1].frac[ci];
      const Scalar* p00 = &in.data()[in.offset(0, c0, s0)];
      const Scalar* p10 = &in.data()[in.offset(0, c1, s0)];
      const Scalar* p01 = &in.data()[in.offset(0, c0, s1)];
      const Scalar* p11 = &in.data()[in.offset(0, c1, s1)];
      Scalar* dst = &out.data()[out.offset(0, c, s)];
      for (Index r = 0; r < count[0]; ++r) {
        const auto ri = static_cast<std::size_t>(r);
        const Index r0 = ax[0].lo[ri], r1 = ax[0].hi[ri];
        const double wr = ax[0].frac[ri];
        const double v00 = p00[r0] + wr * (double(p00[r1]) - p00[r0]);
        const double v10 = p10[r0] + wr * (double(p10[r1]) - p10[r0]);
        const double v01 = p01[r0] + wr * (double(p01[r1]) - p01[r0]);
        const double v11 = p11[r0] + wr * (double(p11[r1]) - p11[r0]);
        const double v0 = v00 + wc * (v10 - v00);
        const double v1 = v01 + wc * (v11 - v01);
        dst[r] = static_cast<Scalar>(v0 + ws * (v1 - v0));
      }
    }
  }
  return out;
}

inline void check_spacing(const Spacing3& spacing, const char* what) {
  if (!(spacing.array() > 0.0).all() || !spacing.allFinite())
    throw ValidationError(std::string(what) + " must be positive");
}

}  // namespace detail

/// Output shape of resampling a grid of the given shape and spacing to target spacing.
inline Shape3 resampled_shape(const Shape3& shape, const Spacing3& spacing, const Spacing3& target) {
  return {detail::resampled_extent(shape[0], spacing[0], target[0]),
          detail::resampled_extent(shape[1], spacing[1], target[1]),
          detail::resampled_extent(shape[2], spacing[2], target[2])};
}

/// Trilinear resampling with edge clamping; extent d becomes round(d * spacing / target), at least 1.
template <typename Scalar>
Volume<Scalar> resample(const Volume<Scalar>& in, const Spacing3& spacing, const Spacing3& target) {
  detail::check_spacing(spacing, "volume spacing");
  detail::check_spacing(target, "target spacing");
  if (in.empty()) throw ValidationError("cannot resample an empty volume");
  return detail::resample_window(in, spacing, target, {0, 0, 0}, resampled_shape(in.shape(), spacing, target));
}

inline SeriesVolume resample(const SeriesVolume& volume, const Spacing3& target = Spacing3(1.5, 1.5, 7.8)) {
  SeriesVolume out = volume;
  out.voxels = resample(volume.voxels, volume.spacing, target);
  out.spacing = target;
  return out;
}

/// Percentile with linear interpolation between closest ranks (rank = p/100 * (n-1)).
template <typename Derived>
std::pair<double, double> percentile_pair(const Eigen::DenseBase<Derived>& values, double p_low, double p_high) {
  using Scalar = typename Derived::Scalar;
  std::vector<Scalar> v(values.derived().data(), values.derived().data() + values.size());
  const auto n = v.size();
  auto at_rank = [&](double p, std::size_t from) {
    const double rank = p / 100.0 * static_cast<double>(n - 1);
    const auto k = static_cast<std::size_t>(std::floor(rank));
    const double t = rank - static_cast<double>(k);
    auto kth = v.begin() + static_cast<std::ptrdiff_t>(k);
    std::nth_element(v.begin() + static_cast<std::ptrdiff_t>(std::min(from, k)), kth, v.end());
    double lo = *kth;
    if (t == 0.0 || k + 1 >= n) return std::make_pair(lo, k);
    double hi = *std::min_element(kth + 1, v.end());
    return std::make_pair(lo + t * (hi - lo), k);
  };
  auto [a, k_low] = at_rank(p_low, 0);
  // Everything left of k_low is <= every element right of it, so the second search can skip it.
  auto [b, unused] = at_rank(p_high, k_low);
  (void)unused;
  return {a, b};
}

/// Clips to the [p_low, p_high] percentiles and maps them affinely onto [0, 1].
template <typename Scalar>
Volume<Scalar> percentile_normalize(const Volume<Scalar>& in, double p_low = 1.0, double p_high = 99.0) {
  if (!(p_low < p_high) || p_low < 0.0 || p_high > 100.0)
    throw ValidationError("percentile bounds must satisfy 0 <= p_low < p_high <= 100");
  if (in.empty()) throw ValidationError("cannot normalize an empty volume");
  const auto [a, b] = percentile_pair(in.data(), p_low, p_high);
  Volume<Scalar> out(in.shape());
  if (b - a < 1e-12) return out;
  const double scale = 1.0 / (b - a);
  out.data() = in.data().unaryExpr([&](Scalar v) {
    return static_cast<Scalar>(std::clamp((static_cast<double>(v) - a) * scale, 0.0, 1.0));
  });
  return out;
}

inline SeriesVolume percentile_normalize(const SeriesVolume& volume, double p_low = 1.0, double p_high = 99.0) {
  SeriesVolume out = volume;
  out.voxels = percentile_normalize(volume.voxels, p_low, p_high);
  return out;
}

/// Centered crop (start floor((d-t)/2)) or zero pad (floor((t-d)/2) before) per axis.
template <typename Scalar>
Volume<Scalar> crop_or_pad(const Volume<Scalar>& in, const Shape3& target) {
  if (in.empty()) throw ValidationError("cannot crop or pad an empty volume");
  if (in.shape() == target) return in;
  Index src[3], dst[3], len[3];
  for (int d = 0; d < 3; ++d) {
    const Index have = in.shape()[d], want = target[d];
    if (want <= 0) throw ValidationError("target shape must be positive");
    src[d] = have > want ? (have - want) / 2 : 0;
    dst[d] = have < want ? (want - have) / 2 : 0;
    len[d] = std::min(have, want);
  }
  Volume<Scalar> out(target);
  for (Index s = 0; s < len[2]; ++s)
    for (Index c = 0; c < len[1]; ++c)
      for (Index r = 0; r < len[0]; ++r)
        out(dst[0] + r, dst[1] + c, dst[2] + s) = in(src[0] + r, src[1] + c, src[2] + s);
  return out;
}

/// One in-plane quarter turn: out(r, c) = in(n - 1 - c, r).
template <typename Scalar>
Volume<Scalar> rotate90(const Volume<Scalar>& in, int quarter_turns) {
  if (in.rows() != in.cols())
    throw ValidationError("in-plane rotation needs square slices, got " + to_string(in.shape()));
  quarter_turns = ((quarter_turns % 4) + 4) % 4;
  Volume<Scalar> cur = in;
  const Index n = in.rows();
  for (int t = 0; t < quarter_turns; ++t) {
    Volume<Scalar> next(in.shape());
    for (Index s = 0; s < in.slices(); ++s)
      for (Index c = 0; c < n; ++c)
        for (Index r = 0; r < n; ++r) next(r, c, s) = cur(n - 1 - c, r, s);
    cur = std::move(next);
  }
  return cur;
}

/// With probability p, rotates by k quarter turns with k uniform in {1, 2, 3}; otherwise identity.
template <typename Scalar, typename Rng>
Volume<Scalar> augment_rot90(const Volume<Scalar>& in, Rng& rng, double probability = 0.5) {
  if (in.rows() != in.cols())
    throw ValidationError("in-plane rotation needs square slices, got " + to_string(in.shape()));
  std::bernoulli_distribution apply(probability);
  if (!apply(rng)) return in;
  std::uniform_int_distribution<int> turns(1, 3);
  return rotate90(in, turns(rng));
}

template <typename Rng>
ModelInput augment_rot90(const ModelInput& input, Rng& rng, double probability = 0.5) {
  return {augment_rot90(input.voxels, rng, probability), input.series_uid};
}

/**
 * resample -> percentile_normalize -> crop_or_pad (+ augment_rot90 in train mode).
 *
 * Only the part of the resampled grid that survives the centered crop is
 * computed, and the percentiles are taken over that field of view. When the
 * resampled grid fits inside the target shape this equals the unfused chain.
 */
template <typename Rng>
ModelInput preprocess_chain(const SeriesVolume& volume, const PreprocessConfig& config, bool train_mode, Rng* rng) {
  detail::check_spacing(volume.spacing, "volume spacing");
  detail::check_spacing(config.target_spacing, "target spacing");
  if (volume.voxels.empty()) throw ValidationError("series " + volume.series_uid + " has no voxels");
  if (train_mode && rng == nullptr) throw ValidationError("train mode needs a random generator");

  const Shape3 full = resampled_shape(volume.voxels.shape(), volume.spacing, config.target_spacing);
  Shape3 first{}, count{};
  for (int d = 0; d < 3; ++d) {
    if (config.target_shape[d] <= 0) throw ValidationError("target shape must be positive");
    first[d] = full[d] > config.target_shape[d] ? (full[d] - config.target_shape[d]) / 2 : 0;
    count[d] = std::min(full[d], config.target_shape[d]);
  }
  Volume<float> window = detail::resample_window(volume.voxels, volume.spacing, config.target_spacing, first, count);
  window = percentile_normalize(window, config.percentile_low, config.percentile_high);
  ModelInput out{crop_or_pad(window, config.target_shape), volume.series_uid};
  if (train_mode) out.voxels = augment_rot90(out.voxels, *rng, config.rotation_probability);
  return out;
}

inline ModelInput preprocess_chain(const SeriesVolume& volume, const PreprocessConfig& config = {}) {
  return preprocess_chain<std::mt19937_64>(volume, config, false, nullptr);
}

}  // namespace mpmri
