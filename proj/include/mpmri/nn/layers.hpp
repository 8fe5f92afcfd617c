#pragma once

#include "mpmri/errors.hpp"
#include "mpmri/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace mpmri::nn {

namespace detail {

inline Index conv_extent(Index in, Index kernel, Index stride, Index pad) {
  const Index span = in + 2 * pad - kernel;
  if (span < 0) return 0;
  return span / stride + 1;
}

// Output voxel coordinates for a contiguous range of linear output offsets.
struct TileCoords {
  std::vector<Index> o0, o1, o2;
  void fill(const Shape3& out, Index begin, Index count) {
    o0.resize(static_cast<std::size_t>(count));
    o1.resize(static_cast<std::size_t>(count));
    o2.resize(static_cast<std::size_t>(count));
    Index a = begin % out[0], b = (begin / out[0]) % out[1], c = begin / (out[0] * out[1]);
    for (Index t = 0; t < count; ++t) {
      const auto i = static_cast<std::size_t>(t);
      o0[i] = a;
      o1[i] = b;
      o2[i] = c;
      if (++a == out[0]) {
        a = 0;
        if (++b == out[1]) {
          b = 0;
          ++c;
        }
      }
    }
  }
};

}  // namespace detail

/// Cubic-kernel 3D convolution lowered to GEMM over tiles of output voxels.
template <typename Scalar>
class Conv3d final : public Layer<Scalar> {
 public:
  Conv3d(Index in_channels, Index out_channels, Index kernel, Index stride, Index pad, bool bias,
         std::mt19937_64& rng)
      : cin_(in_channels), cout_(out_channels), k_(kernel), stride_(stride), pad_(pad), has_bias_(bias),
        weight_("weight", out_channels, in_channels * kernel * kernel * kernel) {
    if (in_channels <= 0 || out_channels <= 0 || kernel <= 0 || stride <= 0 || pad < 0)
      throw ValidationError("invalid convolution geometry");
    const double fan_in = static_cast<double>(weight_.value.cols());
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
    for (Index j = 0; j < weight_.value.cols(); ++j)
      for (Index i = 0; i < weight_.value.rows(); ++i) weight_.value(i, j) = static_cast<Scalar>(normal(rng));
    if (has_bias_) bias_ = Parameter<Scalar>("bias", out_channels, 1);
  }

  Shape3 output_shape(const Shape3& in) const {
    Shape3 out;
    for (int d = 0; d < 3; ++d) out[d] = detail::conv_extent(in[d], k_, stride_, pad_);
    return out;
  }

  Batch<Scalar> forward(const Batch<Scalar>& input, bool /*training*/) override {
    input_ = input;
    Batch<Scalar> out;
    out.reserve(input.size());
    for (const auto& x : input) out.push_back(forward_one(x));
    return out;
  }

  Batch<Scalar> backward(const Batch<Scalar>& grad_output) override {
    Batch<Scalar> grad_in;
    grad_in.reserve(grad_output.size());
    for (std::size_t n = 0; n < grad_output.size(); ++n) grad_in.push_back(backward_one(input_[n], grad_output[n]));
    return grad_in;
  }

  void collect_parameters(std::vector<Parameter<Scalar>*>& out) override {
    out.push_back(&weight_);
    if (has_bias_) out.push_back(&bias_);
  }
  void release() override { input_.clear(); }

  Parameter<Scalar>& weight() { return weight_; }

 private:
  bool pointwise() const { return k_ == 1 && stride_ == 1 && pad_ == 0; }

  Index tile_size(Index total) const {
    const Index rows = weight_.value.cols();
    return std::clamp<Index>((Index(1) << 18) / std::max<Index>(rows, 1), 256, std::max<Index>(total, 1));
  }

  void check_input(const FeatureMap<Scalar>& x) const {
    if (x.channels() != cin_) {
      std::ostringstream msg;
      msg << "convolution expects " << cin_ << " input channels, got " << x.channels();
      throw ValidationError(msg.str());
    }
  }

  void im2col(const FeatureMap<Scalar>& x, const detail::TileCoords& tc, Index count,
              ChannelMatrix<Scalar>& col) const {
    col.resize(cin_ * k_ * k_ * k_, count);
    const Shape3& in = x.shape;
    Index row = 0;
    for (Index ci = 0; ci < cin_; ++ci) {
      const Scalar* src = x.data.row(ci).data();
      for (Index kz = 0; kz < k_; ++kz)
        for (Index ky = 0; ky < k_; ++ky)
          for (Index kx = 0; kx < k_; ++kx, ++row) {
            Scalar* dst = col.row(row).data();
            for (Index t = 0; t < count; ++t) {
              const auto i = static_cast<std::size_t>(t);
              const Index z = tc.o2[i] * stride_ - pad_ + kz;
              const Index y = tc.o1[i] * stride_ - pad_ + ky;
              const Index w = tc.o0[i] * stride_ - pad_ + kx;
              dst[t] = (z >= 0 && z < in[2] && y >= 0 && y < in[1] && w >= 0 && w < in[0])
                           ? src[w + in[0] * (y + in[1] * z)]
                           : Scalar(0);
            }
          }
    }
  }

  void col2im(const ChannelMatrix<Scalar>& col, const detail::TileCoords& tc, Index count,
              FeatureMap<Scalar>& gx) const {
    const Shape3& in = gx.shape;
    Index row = 0;
    for (Index ci = 0; ci < cin_; ++ci) {
      Scalar* dst = gx.data.row(ci).data();
      for (Index kz = 0; kz < k_; ++kz)
        for (Index ky = 0; ky < k_; ++ky)
          for (Index kx = 0; kx < k_; ++kx, ++row) {
            const Scalar* src = col.row(row).data();
            for (Index t = 0; t < count; ++t) {
              const auto i = static_cast<std::size_t>(t);
              const Index z = tc.o2[i] * stride_ - pad_ + kz;
              const Index y = tc.o1[i] * stride_ - pad_ + ky;
              const Index w = tc.o0[i] * stride_ - pad_ + kx;
              if (z >= 0 && z < in[2] && y >= 0 && y < in[1] && w >= 0 && w < in[0])
                dst[w + in[0] * (y + in[1] * z)] += src[t];
            }
          }
    }
  }

  FeatureMap<Scalar> forward_one(const FeatureMap<Scalar>& x) const {
    check_input(x);
    const Shape3 os = output_shape(x.shape);
    if (voxel_count(os) <= 0) throw ValidationError("convolution input " + to_string(x.shape) + " is too small");
    FeatureMap<Scalar> y;
    y.shape = os;
    if (pointwise()) {
      y.data.noalias() = weight_.value * x.data;
    } else {
      y.data.resize(cout_, voxel_count(os));
      const Index total = voxel_count(os);
      const Index tile = tile_size(total);
      detail::TileCoords tc;
      ChannelMatrix<Scalar> col;
      for (Index v0 = 0; v0 < total; v0 += tile) {
        const Index count = std::min(tile, total - v0);
        tc.fill(os, v0, count);
        im2col(x, tc, count, col);
        y.data.middleCols(v0, count).noalias() = weight_.value * col;
      }
    }
    if (has_bias_) y.data.colwise() += bias_.value.col(0);
    return y;
  }

  FeatureMap<Scalar> backward_one(const FeatureMap<Scalar>& x, const FeatureMap<Scalar>& gy) {
    FeatureMap<Scalar> gx(cin_, x.shape);
    if (has_bias_) bias_.grad.col(0) += gy.data.rowwise().sum();
    if (pointwise()) {
      weight_.grad.noalias() += gy.data * x.data.transpose();
      gx.data.noalias() = weight_.value.transpose() * gy.data;
      return gx;
    }
    const Index total = gy.voxels();
    const Index tile = tile_size(total);
    detail::TileCoords tc;
    ChannelMatrix<Scalar> col, gcol;
    for (Index v0 = 0; v0 < total; v0 += tile) {
      const Index count = std::min(tile, total - v0);
      tc.fill(gy.shape, v0, count);
      im2col(x, tc, count, col);
      const auto g = gy.data.middleCols(v0, count);
      weight_.grad.noalias() += g * col.transpose();
      gcol.noalias() = weight_.value.transpose() * g;
      col2im(gcol, tc, count, gx);
    }
    return gx;
  }

  Index cin_, cout_, k_, stride_, pad_;
  bool has_bias_;
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
  Batch<Scalar> input_;
};

/// Per-channel normalization over batch and voxels with running statistics for evaluation.
template <typename Scalar>
class BatchNorm3d final : public Layer<Scalar> {
 public:
  explicit BatchNorm3d(Index channels, double eps = 1e-5, double momentum = 0.1)
      : channels_(channels), eps_(eps), momentum_(momentum), gamma_("gamma", channels, 1), beta_("beta", channels, 1),
        running_mean_(Matrix<Scalar>::Zero(channels, 1)), running_var_(Matrix<Scalar>::Ones(channels, 1)) {
    gamma_.value.setOnes();
  }

  Batch<Scalar> forward(const Batch<Scalar>& input, bool training) override {
    training_ = training;
    Eigen::Array<Scalar, Eigen::Dynamic, 1> mean, inv_std;
    if (training) {
      double count = 0;
      Eigen::ArrayXd sum = Eigen::ArrayXd::Zero(channels_);
      for (const auto& x : input) {
        check(x);
        sum += x.data.rowwise().sum().template cast<double>().array();
        count += static_cast<double>(x.voxels());
      }
      const Eigen::ArrayXd mean_d = sum / count;
      Eigen::ArrayXd sq = Eigen::ArrayXd::Zero(channels_);
      for (const auto& x : input)
        sq += (x.data.template cast<double>().colwise() - mean_d.matrix()).rowwise().squaredNorm().array();
      const Eigen::ArrayXd var = sq / count;
      mean = mean_d.cast<Scalar>();
      inv_std = (var + eps_).rsqrt().cast<Scalar>();
      const double unbiased = count > 1 ? count / (count - 1) : 1.0;
      running_mean_.col(0) = ((1 - momentum_) * running_mean_.col(0).template cast<double>().array() +
                              momentum_ * mean_d).template cast<Scalar>().matrix();
      running_var_.col(0) = ((1 - momentum_) * running_var_.col(0).template cast<double>().array() +
                             momentum_ * var * unbiased).template cast<Scalar>().matrix();
      count_ = count;
    } else {
      mean = running_mean_.col(0).array();
      inv_std = (running_var_.col(0).array() + static_cast<Scalar>(eps_)).rsqrt();
    }
    inv_std_ = inv_std;
    normalized_.clear();
    Batch<Scalar> out;
    out.reserve(input.size());
    for (const auto& x : input) {
      check(x);
      FeatureMap<Scalar> xhat(((x.data.array().colwise() - mean).colwise() * inv_std).matrix(), x.shape);
      FeatureMap<Scalar> y(
          ((xhat.data.array().colwise() * gamma_.value.col(0).array()).colwise() + beta_.value.col(0).array())
              .matrix(),
          x.shape);
      normalized_.push_back(std::move(xhat));
      out.push_back(std::move(y));
    }
    return out;
  }

  Batch<Scalar> backward(const Batch<Scalar>& grad_output) override {
    Eigen::Array<Scalar, Eigen::Dynamic, 1> dgamma = Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(channels_);
    Eigen::Array<Scalar, Eigen::Dynamic, 1> dbeta = Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(channels_);
    for (std::size_t n = 0; n < grad_output.size(); ++n) {
      dgamma += (grad_output[n].data.array() * normalized_[n].data.array()).rowwise().sum();
      dbeta += grad_output[n].data.array().rowwise().sum();
    }
    gamma_.grad.col(0).array() += dgamma;
    beta_.grad.col(0).array() += dbeta;

    const auto gamma = gamma_.value.col(0).array();
    Batch<Scalar> grad_in;
    grad_in.reserve(grad_output.size());
    for (std::size_t n = 0; n < grad_output.size(); ++n) {
      const auto& g = grad_output[n].data.array();
      if (training_) {
        const Scalar inv_count = static_cast<Scalar>(1.0 / count_);
        const Eigen::Array<Scalar, Eigen::Dynamic, 1> scale = gamma * inv_std_;
        const Eigen::Array<Scalar, Eigen::Dynamic, 1> mean_g = dbeta * inv_count;
        const Eigen::Array<Scalar, Eigen::Dynamic, 1> mean_gx = dgamma * inv_count;
        ChannelMatrix<Scalar> gx =
            (((g.colwise() - mean_g) - normalized_[n].data.array().colwise() * mean_gx).colwise() * scale).matrix();
        grad_in.emplace_back(std::move(gx), grad_output[n].shape);
      } else {
        grad_in.emplace_back((g.colwise() * (gamma * inv_std_)).matrix(), grad_output[n].shape);
      }
    }
    return grad_in;
  }

  void collect_parameters(std::vector<Parameter<Scalar>*>& out) override {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }
  void collect_buffers(std::vector<Matrix<Scalar>*>& out) override {
    out.push_back(&running_mean_);
    out.push_back(&running_var_);
  }
  void release() override { normalized_.clear(); }

 private:
  void check(const FeatureMap<Scalar>& x) const {
    if (x.channels() != channels_)
      throw ValidationError("normalization expects " + std::to_string(channels_) + " channels, got " +
                            std::to_string(x.channels()));
  }

  Index channels_;
  double eps_, momentum_;
  Parameter<Scalar> gamma_, beta_;
  Matrix<Scalar> running_mean_, running_var_;
  Batch<Scalar> normalized_;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> inv_std_;
  double count_ = 0;
  bool training_ = false;
};

template <typename Scalar>
class ReLU final : public Layer<Scalar> {
 public:
  Batch<Scalar> forward(const Batch<Scalar>& input, bool /*training*/) override {
    output_.clear();
    for (const auto& x : input) output_.emplace_back(x.data.cwiseMax(Scalar(0)), x.shape);
    return output_;
  }
  Batch<Scalar> backward(const Batch<Scalar>& grad_output) override {
    Batch<Scalar> grad_in;
    for (std::size_t n = 0; n < grad_output.size(); ++n)
      grad_in.emplace_back(
          (output_[n].data.array() > Scalar(0)).select(grad_output[n].data.array(), Scalar(0)).matrix(),
          grad_output[n].shape);
    return grad_in;
  }
  void release() override { output_.clear(); }

 private:
  Batch<Scalar> output_;
};

/// Cubic max pooling; padded positions never win.
template <typename Scalar>
class MaxPool3d final : public Layer<Scalar> {
 public:
  MaxPool3d(Index kernel, Index stride, Index pad) : k_(kernel), stride_(stride), pad_(pad) {}

  Batch<Scalar> forward(const Batch<Scalar>& input, bool /*training*/) override {
    argmax_.clear();
    input_shapes_.clear();
    Batch<Scalar> out;
    for (const auto& x : input) {
      Shape3 os;
      for (int d = 0; d < 3; ++d) os[d] = detail::conv_extent(x.shape[d], k_, stride_, pad_);
      if (voxel_count(os) <= 0) throw ValidationError("pooling input " + to_string(x.shape) + " is too small");
      FeatureMap<Scalar> y(x.channels(), os);
      Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> arg(x.channels(), voxel_count(os));
      for (Index c = 0; c < x.channels(); ++c) {
        const Scalar* src = x.data.row(c).data();
        Index o = 0;
        for (Index z = 0; z < os[2]; ++z)
          for (Index yy = 0; yy < os[1]; ++yy)
            for (Index w = 0; w < os[0]; ++w, ++o) {
              Scalar best = -std::numeric_limits<Scalar>::infinity();
              Index best_at = -1;
              for (Index kz = 0; kz < k_; ++kz) {
                const Index iz = z * stride_ - pad_ + kz;
                if (iz < 0 || iz >= x.shape[2]) continue;
                for (Index ky = 0; ky < k_; ++ky) {
                  const Index iy = yy * stride_ - pad_ + ky;
                  if (iy < 0 || iy >= x.shape[1]) continue;
                  for (Index kx = 0; kx < k_; ++kx) {
                    const Index ix = w * stride_ - pad_ + kx;
                    if (ix < 0 || ix >= x.shape[0]) continue;
                    const Index at = ix + x.shape[0] * (iy + x.shape[1] * iz);
                    if (best_at < 0 || src[at] > best) {
                      best = src[at];
                      best_at = at;
                    }
                  }
                }
              }
              y.data(c, o) = best;
              arg(c, o) = best_at;
            }
      }
      argmax_.push_back(std::move(arg));
      input_shapes_.push_back(x.shape);
      out.push_back(std::move(y));
    }
    return out;
  }

  Batch<Scalar> backward(const Batch<Scalar>& grad_output) override {
    Batch<Scalar> grad_in;
    for (std::size_t n = 0; n < grad_output.size(); ++n) {
      const auto& g = grad_output[n];
      FeatureMap<Scalar> gx(g.channels(), input_shapes_[n]);
      for (Index c = 0; c < g.channels(); ++c)
        for (Index o = 0; o < g.voxels(); ++o) gx.data(c, argmax_[n](c, o)) += g.data(c, o);
      grad_in.push_back(std::move(gx));
    }
    return grad_in;
  }
  void release() override { argmax_.clear(); }

 private:
  Index k_, stride_, pad_;
  std::vector<Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> argmax_;
  std::vector<Shape3> input_shapes_;
};

/**
 * Average pooling with ceil-mode extents: windows hanging over the edge are
 * clipped and averaged over their valid voxels, so an extent of 1 stays 1.
 */
template <typename Scalar>
class AvgPool3d final : public Layer<Scalar> {
 public:
  AvgPool3d(Index kernel, Index stride) : k_(kernel), stride_(stride) {}

  static Index extent(Index in, Index k, Index s) { return in <= k ? 1 : (in - k + s - 1) / s + 1; }

  Batch<Scalar> forward(const Batch<Scalar>& input, bool /*training*/) override {
    input_shapes_.clear();
    Batch<Scalar> out;
    for (const auto& x : input) {
      const Shape3 os{extent(x.shape[0], k_, stride_), extent(x.shape[1], k_, stride_),
                      extent(x.shape[2], k_, stride_)};
      FeatureMap<Scalar> y(x.channels(), os);
      visit(x.shape, os, [&](Index o, Index i, Scalar w) { y.data.col(o) += w * x.data.col(i); });
      input_shapes_.push_back(x.shape);
      out.push_back(std::move(y));
    }
    return out;
  }

  Batch<Scalar> backward(const Batch<Scalar>& grad_output) override {
    Batch<Scalar> grad_in;
    for (std::size_t n = 0; n < grad_output.size(); ++n) {
      const auto& g = grad_output[n];
      FeatureMap<Scalar> gx(g.channels(), input_shapes_[n]);
      visit(input_shapes_[n], g.shape, [&](Index o, Index i, Scalar w) { gx.data.col(i) += w * g.data.col(o); });
      grad_in.push_back(std::move(gx));
    }
    return grad_in;
  }

 private:
  template <typename F>
  void visit(const Shape3& in, const Shape3& os, F&& f) const {
    Index o = 0;
    for (Index z = 0; z < os[2]; ++z)
      for (Index y = 0; y < os[1]; ++y)
        for (Index x = 0; x < os[0]; ++x, ++o) {
          const Index z1 = std::min(z * stride_ + k_, in[2]), y1 = std::min(y * stride_ + k_, in[1]),
                      x1 = std::min(x * stride_ + k_, in[0]);
          const Index count = (z1 - z * stride_) * (y1 - y * stride_) * (x1 - x * stride_);
          const Scalar w = Scalar(1) / static_cast<Scalar>(count);
          for (Index iz = z * stride_; iz < z1; ++iz)
            for (Index iy = y * stride_; iy < y1; ++iy)
              for (Index ix = x * stride_; ix < x1; ++ix) f(o, ix + in[0] * (iy + in[1] * iz), w);
        }
  }

  Index k_, stride_;
  std::vector<Shape3> input_shapes_;
};

/// Mean over all voxels; output has a single voxel.
template <typename Scalar>
class GlobalAvgPool final : public Layer<Scalar> {
 public:
  Batch<Scalar> forward(const Batch<Scalar>& input, bool /*training*/) override {
    input_shapes_.clear();
    Batch<Scalar> out;
    for (const auto& x : input) {
      input_shapes_.push_back(x.shape);
      out.emplace_back(x.data.rowwise().mean(), Shape3{1, 1, 1});
    }
    return out;
  }
  Batch<Scalar> backward(const Batch<Scalar>& grad_output) override {
    Batch<Scalar> grad_in;
    for (std::size_t n = 0; n < grad_output.size(); ++n) {
      const Index v = voxel_count(input_shapes_[n]);
      ChannelMatrix<Scalar> g = (grad_output[n].data.col(0) / static_cast<Scalar>(v)).replicate(1, v);
      grad_in.emplace_back(std::move(g), input_shapes_[n]);
    }
    return grad_in;
  }

 private:
  std::vector<Shape3> input_shapes_;
};

/// Affine map on single-voxel feature maps (channels are the features).
template <typename Scalar>
class Linear final : public Layer<Scalar> {
 public:
  Linear(Index in_features, Index out_features, std::mt19937_64& rng)
      : weight_("weight", out_features, in_features), bias_("bias", out_features, 1) {
    if (in_features <= 0 || out_features <= 0) throw ValidationError("invalid linear layer size");
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    for (Index j = 0; j < in_features; ++j)
      for (Index i = 0; i < out_features; ++i) weight_.value(i, j) = static_cast<Scalar>(uniform(rng));
  }

  Batch<Scalar> forward(const Batch<Scalar>& input, bool /*training*/) override {
    input_ = input;
    Batch<Scalar> out;
    for (const auto& x : input) {
      if (x.voxels() != 1 || x.channels() != weight_.value.cols())
        throw ValidationError("linear layer expects " + std::to_string(weight_.value.cols()) +
                              " pooled features, got " + std::to_string(x.channels()) + "x" +
                              std::to_string(x.voxels()));
      out.emplace_back(weight_.value * x.data + bias_.value, Shape3{1, 1, 1});
    }
    return out;
  }
  Batch<Scalar> backward(const Batch<Scalar>& grad_output) override {
    Batch<Scalar> grad_in;
    for (std::size_t n = 0; n < grad_output.size(); ++n) {
      weight_.grad.noalias() += grad_output[n].data * input_[n].data.transpose();
      bias_.grad += grad_output[n].data;
      grad_in.emplace_back(weight_.value.transpose() * grad_output[n].data, Shape3{1, 1, 1});
    }
    return grad_in;
  }
  void collect_parameters(std::vector<Parameter<Scalar>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }
  void release() override { input_.clear(); }

  Parameter<Scalar>& weight() { return weight_; }
  Parameter<Scalar>& bias() { return bias_; }

 private:
  Parameter<Scalar> weight_, bias_;
  Batch<Scalar> input_;
};

template <typename Scalar>
class Sequential : public Layer<Scalar> {
 public:
  Sequential() = default;

  template <typename L, typename... Args>
  L& emplace(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }
  void push_back(LayerPtr<Scalar> layer) { layers_.push_back(std::move(layer)); }

  Batch<Scalar> forward(const Batch<Scalar>& input, bool training) override {
    Batch<Scalar> x = input;
    for (auto& layer : layers_) x = layer->forward(x, training);
    return x;
  }
  Batch<Scalar> backward(const Batch<Scalar>& grad_output) override {
    Batch<Scalar> g = grad_output;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }
  void collect_parameters(std::vector<Parameter<Scalar>*>& out) override {
    for (auto& layer : layers_) layer->collect_parameters(out);
  }
  void collect_buffers(std::vector<Matrix<Scalar>*>& out) override {
    for (auto& layer : layers_) layer->collect_buffers(out);
  }
  void release() override {
    for (auto& layer : layers_) layer->release();
  }

  std::size_t size() const { return layers_.size(); }

 private:
  std::vector<LayerPtr<Scalar>> layers_;
};

}  // namespace mpmri::nn
