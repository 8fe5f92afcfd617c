#pragma once

#include "mpmri/nn/layers.hpp"

#include <array>

namespace mpmri::nn {

/// 1^3 reduce, 3^3 (strided), 1^3 expand x4, with a projection shortcut when the shape changes.
template <typename Scalar>
class Bottleneck final : public Layer<Scalar> {
 public:
  static constexpr Index kExpansion = 4;

  Bottleneck(Index in_channels, Index width, Index stride, std::mt19937_64& rng) {
    const Index out = width * kExpansion;
    main_.template emplace<Conv3d<Scalar>>(in_channels, width, 1, 1, 0, false, rng);
    main_.template emplace<BatchNorm3d<Scalar>>(width);
    main_.template emplace<ReLU<Scalar>>();
    main_.template emplace<Conv3d<Scalar>>(width, width, 3, stride, 1, false, rng);
    main_.template emplace<BatchNorm3d<Scalar>>(width);
    main_.template emplace<ReLU<Scalar>>();
    main_.template emplace<Conv3d<Scalar>>(width, out, 1, 1, 0, false, rng);
    main_.template emplace<BatchNorm3d<Scalar>>(out);
    if (stride != 1 || in_channels != out) {
      shortcut_ = std::make_unique<Sequential<Scalar>>();
      shortcut_->template emplace<Conv3d<Scalar>>(in_channels, out, 1, stride, 0, false, rng);
      shortcut_->template emplace<BatchNorm3d<Scalar>>(out);
    }
  }

  Batch<Scalar> forward(const Batch<Scalar>& input, bool training) override {
    Batch<Scalar> a = main_.forward(input, training);
    Batch<Scalar> b = shortcut_ ? shortcut_->forward(input, training) : input;
    output_.clear();
    for (std::size_t n = 0; n < a.size(); ++n)
      output_.emplace_back((a[n].data + b[n].data).cwiseMax(Scalar(0)), a[n].shape);
    return output_;
  }

  Batch<Scalar> backward(const Batch<Scalar>& grad_output) override {
    Batch<Scalar> g;
    for (std::size_t n = 0; n < grad_output.size(); ++n)
      g.emplace_back((output_[n].data.array() > Scalar(0)).select(grad_output[n].data.array(), Scalar(0)).matrix(),
                     grad_output[n].shape);
    Batch<Scalar> ga = main_.backward(g);
    Batch<Scalar> gb = shortcut_ ? shortcut_->backward(g) : g;
    for (std::size_t n = 0; n < ga.size(); ++n) ga[n].data += gb[n].data;
    return ga;
  }

  void collect_parameters(std::vector<Parameter<Scalar>*>& out) override {
    main_.collect_parameters(out);
    if (shortcut_) shortcut_->collect_parameters(out);
  }
  void collect_buffers(std::vector<Matrix<Scalar>*>& out) override {
    main_.collect_buffers(out);
    if (shortcut_) shortcut_->collect_buffers(out);
  }
  void release() override {
    main_.release();
    if (shortcut_) shortcut_->release();
    output_.clear();
  }

 private:
  Sequential<Scalar> main_;
  std::unique_ptr<Sequential<Scalar>> shortcut_;
  Batch<Scalar> output_;
};

struct ResNetShape {
  Index in_channels = 1;
  Index num_classes = 8;
  Index init_features = 64;
  std::array<int, 4> stage_blocks = {3, 4, 6, 3};
};

/// Volumetric bottleneck ResNet; stage widths double from init_features. Returns the pooled feature width.
template <typename Scalar>
Index build_resnet(Sequential<Scalar>& net, const ResNetShape& s, std::mt19937_64& rng) {
  net.template emplace<Conv3d<Scalar>>(s.in_channels, s.init_features, 7, 2, 3, false, rng);
  net.template emplace<BatchNorm3d<Scalar>>(s.init_features);
  net.template emplace<ReLU<Scalar>>();
  net.template emplace<MaxPool3d<Scalar>>(3, 2, 1);
  Index channels = s.init_features;
  Index width = s.init_features;
  for (std::size_t stage = 0; stage < s.stage_blocks.size(); ++stage) {
    for (int b = 0; b < s.stage_blocks[stage]; ++b) {
      const Index stride = (stage > 0 && b == 0) ? 2 : 1;
      net.template emplace<Bottleneck<Scalar>>(channels, width, stride, rng);
      channels = width * Bottleneck<Scalar>::kExpansion;
    }
    width *= 2;
  }
  net.template emplace<GlobalAvgPool<Scalar>>();
  auto& head = net.template emplace<Linear<Scalar>>(channels, s.num_classes, rng);
  head.bias().value.setZero();
  return channels;
}

}  // namespace mpmri::nn
