#pragma once

#include "mpmri/nn/layers.hpp"

#include <array>

namespace mpmri::nn {

/// Each layer sees the concatenation of the block input and all earlier layer outputs.
template <typename Scalar>
class DenseBlock final : public Layer<Scalar> {
 public:
  DenseBlock(Index in_channels, int num_layers, Index growth_rate, Index bottleneck_factor, std::mt19937_64& rng)
      : in_channels_(in_channels), growth_(growth_rate) {
    for (int l = 0; l < num_layers; ++l) {
      const Index c = in_channels + l * growth_rate;
      auto layer = std::make_unique<Sequential<Scalar>>();
      layer->template emplace<BatchNorm3d<Scalar>>(c);
      layer->template emplace<ReLU<Scalar>>();
      layer->template emplace<Conv3d<Scalar>>(c, bottleneck_factor * growth_rate, 1, 1, 0, false, rng);
      layer->template emplace<BatchNorm3d<Scalar>>(bottleneck_factor * growth_rate);
      layer->template emplace<ReLU<Scalar>>();
      layer->template emplace<Conv3d<Scalar>>(bottleneck_factor * growth_rate, growth_rate, 3, 1, 1, false, rng);
      layers_.push_back(std::move(layer));
    }
  }

  Index out_channels() const { return in_channels_ + static_cast<Index>(layers_.size()) * growth_; }

  Batch<Scalar> forward(const Batch<Scalar>& input, bool training) override {
    Batch<Scalar> features = input;
    for (auto& layer : layers_) {
      Batch<Scalar> fresh = layer->forward(features, training);
      for (std::size_t n = 0; n < features.size(); ++n) {
        ChannelMatrix<Scalar> joined(features[n].channels() + growth_, features[n].voxels());
        joined.topRows(features[n].channels()) = features[n].data;
        joined.bottomRows(growth_) = fresh[n].data;
        features[n].data = std::move(joined);
      }
    }
    return features;
  }

  Batch<Scalar> backward(const Batch<Scalar>& grad_output) override {
    Batch<Scalar> grad = grad_output;
    for (auto l = static_cast<Index>(layers_.size()) - 1; l >= 0; --l) {
      const Index c = in_channels_ + l * growth_;
      Batch<Scalar> g_new;
      for (const auto& g : grad) g_new.emplace_back(g.data.middleRows(c, growth_), g.shape);
      Batch<Scalar> g_in = layers_[static_cast<std::size_t>(l)]->backward(g_new);
      for (std::size_t n = 0; n < grad.size(); ++n) {
        ChannelMatrix<Scalar> head = grad[n].data.topRows(c) + g_in[n].data;
        grad[n].data = std::move(head);
      }
    }
    return grad;
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

 private:
  Index in_channels_, growth_;
  std::vector<std::unique_ptr<Sequential<Scalar>>> layers_;
};

struct DenseNetShape {
  Index in_channels = 1;
  Index num_classes = 8;
  Index init_features = 64;
  Index growth_rate = 32;
  std::array<int, 4> block_layers = {6, 12, 24, 16};
  double compression = 0.5;
  Index bottleneck_factor = 4;
};

/**
 * Volumetric DenseNet: 7^3/2 stem, 3^3/2 max pool, four dense blocks joined by
 * compressing transitions (1^3 conv + 2^3 average pool), final norm, global
 * pooling and a linear head. Returns the width of the pooled feature vector.
 */
template <typename Scalar>
Index build_densenet(Sequential<Scalar>& net, const DenseNetShape& s, std::mt19937_64& rng) {
  net.template emplace<Conv3d<Scalar>>(s.in_channels, s.init_features, 7, 2, 3, false, rng);
  net.template emplace<BatchNorm3d<Scalar>>(s.init_features);
  net.template emplace<ReLU<Scalar>>();
  net.template emplace<MaxPool3d<Scalar>>(3, 2, 1);
  Index channels = s.init_features;
  for (std::size_t b = 0; b < s.block_layers.size(); ++b) {
    auto& block = net.template emplace<DenseBlock<Scalar>>(channels, s.block_layers[b], s.growth_rate,
                                                           s.bottleneck_factor, rng);
    channels = block.out_channels();
    if (b + 1 < s.block_layers.size()) {
      const auto reduced = static_cast<Index>(std::floor(static_cast<double>(channels) * s.compression));
      net.template emplace<BatchNorm3d<Scalar>>(channels);
      net.template emplace<ReLU<Scalar>>();
      net.template emplace<Conv3d<Scalar>>(channels, reduced, 1, 1, 0, false, rng);
      net.template emplace<AvgPool3d<Scalar>>(2, 2);
      channels = reduced;
    }
  }
  net.template emplace<BatchNorm3d<Scalar>>(channels);
  net.template emplace<ReLU<Scalar>>();
  net.template emplace<GlobalAvgPool<Scalar>>();
  auto& head = net.template emplace<Linear<Scalar>>(channels, s.num_classes, rng);
  head.bias().value.setZero();
  return channels;
}

}  // namespace mpmri::nn
