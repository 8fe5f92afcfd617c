#pragma once

#include <Eigen/Core>

#include <array>
#include <string>

namespace mpmri {

using Index = Eigen::Index;

/// Grid extent along (row, column, slice).
using Shape3 = std::array<Index, 3>;

/// Physical voxel size in mm along (row, column, slice).
using Spacing3 = Eigen::Vector3d;

inline Index voxel_count(const Shape3& s) { return s[0] * s[1] * s[2]; }

inline std::string to_string(const Shape3& s) {
  return "(" + std::to_string(s[0]) + ", " + std::to_string(s[1]) + ", " + std::to_string(s[2]) + ")";
}

/**
 * Dense 3D scalar grid. Storage is contiguous with the row index varying
 * fastest, then column, then slice: offset = r + rows * (c + cols * s).
 */
template <typename Scalar>
class Volume {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Volume() : shape_{0, 0, 0} {}
  explicit Volume(const Shape3& shape, Scalar fill = Scalar(0))
      : shape_(shape), data_(Vector::Constant(voxel_count(shape), fill)) {}
  Volume(const Shape3& shape, Vector data) : shape_(shape), data_(std::move(data)) {
    eigen_assert(data_.size() == voxel_count(shape_));
  }

  const Shape3& shape() const { return shape_; }
  Index rows() const { return shape_[0]; }
  Index cols() const { return shape_[1]; }
  Index slices() const { return shape_[2]; }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Index offset(Index r, Index c, Index s) const { return r + shape_[0] * (c + shape_[1] * s); }

  Scalar& operator()(Index r, Index c, Index s) { return data_[offset(r, c, s)]; }
  Scalar operator()(Index r, Index c, Index s) const { return data_[offset(r, c, s)]; }

  Vector& data() { return data_; }
  const Vector& data() const { return data_; }

  template <typename Other>
  Volume<Other> cast() const {
    return Volume<Other>(shape_, data_.template cast<Other>());
  }

  bool operator==(const Volume& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  Shape3 shape_;
  Vector data_;
};

}  // namespace mpmri
