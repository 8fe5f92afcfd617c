#pragma once

#include "mpmri/volume.hpp"

#include <Eigen/Core>

#include <memory>
#include <string>
#include <vector>

namespace mpmri::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Channels x voxels, each channel contiguous (voxel offset as in Volume).
template <typename Scalar>
using ChannelMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Multi-channel feature map of one sample.
template <typename Scalar>
struct FeatureMap {
  ChannelMatrix<Scalar> data;
  Shape3 shape{0, 0, 0};

  FeatureMap() = default;
  FeatureMap(Index channels, const Shape3& s) : data(ChannelMatrix<Scalar>::Zero(channels, voxel_count(s))), shape(s) {}
  FeatureMap(ChannelMatrix<Scalar> d, const Shape3& s) : data(std::move(d)), shape(s) {}

  Index channels() const { return data.rows(); }
  Index voxels() const { return data.cols(); }
};

template <typename Scalar>
using Batch = std::vector<FeatureMap<Scalar>>;

/// Trainable tensor with its accumulated gradient.
template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  Parameter() = default;
  Parameter(std::string n, Index rows, Index cols)
      : name(std::move(n)), value(Matrix<Scalar>::Zero(rows, cols)), grad(Matrix<Scalar>::Zero(rows, cols)) {}
};

/**
 * A differentiable stage. forward() caches what backward() needs; backward()
 * receives dLoss/dOutput for the most recent forward() and returns
 * dLoss/dInput, accumulating parameter gradients into Parameter::grad.
 */
template <typename Scalar>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Batch<Scalar> forward(const Batch<Scalar>& input, bool training) = 0;
  virtual Batch<Scalar> backward(const Batch<Scalar>& grad_output) = 0;
  virtual void collect_parameters(std::vector<Parameter<Scalar>*>& /*out*/) {}
  // Non-trainable state that must be checkpointed (e.g. normalization running statistics).
  virtual void collect_buffers(std::vector<Matrix<Scalar>*>& /*out*/) {}
  // Drops cached activations.
  virtual void release() {}
};

template <typename Scalar>
using LayerPtr = std::unique_ptr<Layer<Scalar>>;

}  // namespace mpmri::nn
