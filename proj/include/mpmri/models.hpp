#pragma once

#include "mpmri/errors.hpp"
#include "mpmri/nn/densenet.hpp"
#include "mpmri/nn/resnet.hpp"
#include "mpmri/series_label.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace mpmri {

enum class Architecture {
  DenseNet121,
  ResNet50,
  Tiny,  // conv 3^3 -> norm -> global pool -> linear; used for numerical checks
};

std::string_view token(Architecture arch);
Architecture parse_architecture(std::string_view text);

struct ClassifierConfig {
  Architecture architecture = Architecture::DenseNet121;
  Index in_channels = 1;
  Index num_classes = kNumLabels;
  // Anything other than kNumLabels classes must be requested explicitly.
  bool custom_class_count = false;
  Index growth_rate = 32;
  std::array<int, 4> block_layers = {6, 12, 24, 16};
  double compression = 0.5;
  Index init_features = 64;
  Index bottleneck_factor = 4;
  std::array<int, 4> resnet_blocks = {3, 4, 6, 3};
  Index tiny_channels = 4;
  Shape3 input_shape = {256, 256, 36};

  void validate() const;
  bool operator==(const ClassifierConfig&) const = default;
};

template <typename Scalar>
using Logits = nn::Matrix<Scalar>;  // classes x batch

/// Numerically stable softmax of one logit vector.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  const Scalar peak = logits.maxCoeff();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> e = (logits.array() - peak).exp().matrix();
  return e / e.sum();
}

/// -log(max(p[target], 1e-12)).
template <typename Derived>
double cross_entropy(const Eigen::MatrixBase<Derived>& probabilities, int target) {
  if (target < 0 || target >= probabilities.size())
    throw ValidationError("target class " + std::to_string(target) + " out of range");
  return -std::log(std::max(static_cast<double>(probabilities(target)), 1e-12));
}

template <typename Scalar>
struct LossGradient {
  double loss = 0;
  nn::Matrix<Scalar> grad_logits;  // d(mean loss)/d(logits)
};

/// Mean cross-entropy of softmax(logits) over the batch columns, with its gradient.
template <typename Scalar>
LossGradient<Scalar> softmax_cross_entropy(const nn::Matrix<Scalar>& logits, std::span<const int> targets) {
  if (static_cast<std::size_t>(logits.cols()) != targets.size())
    throw ValidationError("batch has " + std::to_string(logits.cols()) + " logit columns but " +
                          std::to_string(targets.size()) + " targets");
  LossGradient<Scalar> out;
  out.grad_logits.resize(logits.rows(), logits.cols());
  const double inv_n = 1.0 / static_cast<double>(logits.cols());
  for (Index j = 0; j < logits.cols(); ++j) {
    const auto p = softmax(logits.col(j));
    const int t = targets[static_cast<std::size_t>(j)];
    out.loss += cross_entropy(p, t) * inv_n;
    out.grad_logits.col(j) = p * static_cast<Scalar>(inv_n);
    out.grad_logits(t, j) -= static_cast<Scalar>(inv_n);
  }
  return out;
}

/// Frozen copy of every parameter and buffer, in collection order.
template <typename Scalar>
using ModelState = std::vector<nn::Matrix<Scalar>>;

/// The classification network: single-channel volume in, class logits out.
template <typename Scalar>
class Classifier {
 public:
  Classifier(const ClassifierConfig& config, std::uint64_t seed) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(seed);
    switch (config_.architecture) {
      case Architecture::DenseNet121: {
        nn::DenseNetShape s;
        s.in_channels = config_.in_channels;
        s.num_classes = config_.num_classes;
        s.init_features = config_.init_features;
        s.growth_rate = config_.growth_rate;
        s.block_layers = config_.block_layers;
        s.compression = config_.compression;
        s.bottleneck_factor = config_.bottleneck_factor;
        feature_width_ = nn::build_densenet(net_, s, rng);
        break;
      }
      case Architecture::ResNet50: {
        nn::ResNetShape s;
        s.in_channels = config_.in_channels;
        s.num_classes = config_.num_classes;
        s.init_features = config_.init_features;
        s.stage_blocks = config_.resnet_blocks;
        feature_width_ = nn::build_resnet(net_, s, rng);
        break;
      }
      case Architecture::Tiny: {
        net_.template emplace<nn::Conv3d<Scalar>>(config_.in_channels, config_.tiny_channels, 3, 1, 1, false, rng);
        net_.template emplace<nn::BatchNorm3d<Scalar>>(config_.tiny_channels);
        net_.template emplace<nn::GlobalAvgPool<Scalar>>();
        net_.template emplace<nn::Linear<Scalar>>(config_.tiny_channels, config_.num_classes, rng);
        feature_width_ = config_.tiny_channels;
        break;
      }
    }
  }

  Classifier(Classifier&&) noexcept = default;
  Classifier& operator=(Classifier&&) noexcept = default;

  const ClassifierConfig& config() const { return config_; }
  Index feature_width() const { return feature_width_; }

  /// Logits (classes x batch). In evaluation mode column i depends only on input i.
  Logits<Scalar> forward(const nn::Batch<Scalar>& inputs, bool training) {
    for (const auto& x : inputs) {
      if (x.shape != config_.input_shape || x.channels() != config_.in_channels)
        throw ValidationError("classifier expects input " + std::to_string(config_.in_channels) + "x" +
                              to_string(config_.input_shape) + ", got " + std::to_string(x.channels()) + "x" +
                              to_string(x.shape));
    }
    if (inputs.empty()) return Logits<Scalar>(config_.num_classes, 0);
    nn::Batch<Scalar> out = net_.forward(inputs, training);
    Logits<Scalar> logits(config_.num_classes, static_cast<Index>(out.size()));
    for (std::size_t n = 0; n < out.size(); ++n) logits.col(static_cast<Index>(n)) = out[n].data.col(0);
    if (!training) net_.release();
    return logits;
  }

  /// Back-propagates d(loss)/d(logits) of the last training-mode forward().
  void backward(const Logits<Scalar>& grad_logits) {
    nn::Batch<Scalar> g;
    for (Index j = 0; j < grad_logits.cols(); ++j)
      g.emplace_back(nn::ChannelMatrix<Scalar>(grad_logits.col(j)), Shape3{1, 1, 1});
    net_.backward(g);
    net_.release();
  }

  std::vector<nn::Parameter<Scalar>*> parameters() {
    std::vector<nn::Parameter<Scalar>*> out;
    net_.collect_parameters(out);
    return out;
  }

  std::vector<nn::Matrix<Scalar>*> buffers() {
    std::vector<nn::Matrix<Scalar>*> out;
    net_.collect_buffers(out);
    return out;
  }

  Index parameter_count() {
    Index n = 0;
    for (auto* p : parameters()) n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->grad.setZero();
  }

  ModelState<Scalar> state() {
    ModelState<Scalar> s;
    for (auto* p : parameters()) s.push_back(p->value);
    for (auto* b : buffers()) s.push_back(*b);
    return s;
  }

  void load_state(const ModelState<Scalar>& s) {
    auto params = parameters();
    auto bufs = buffers();
    if (s.size() != params.size() + bufs.size())
      throw DataError("model state has " + std::to_string(s.size()) + " tensors, network needs " +
                      std::to_string(params.size() + bufs.size()));
    std::size_t i = 0;
    auto assign = [&](nn::Matrix<Scalar>& dst) {
      if (dst.rows() != s[i].rows() || dst.cols() != s[i].cols())
        throw DataError("model state tensor " + std::to_string(i) + " has the wrong shape");
      dst = s[i++];
    };
    for (auto* p : params) assign(p->value);
    for (auto* b : bufs) assign(*b);
  }

 private:
  ClassifierConfig config_;
  nn::Sequential<Scalar> net_;
  Index feature_width_ = 0;
};

/// Wraps a preprocessed volume as a one-channel feature map.
template <typename Scalar>
nn::FeatureMap<Scalar> as_feature_map(const Volume<float>& v) {
  nn::ChannelMatrix<Scalar> data = v.data().template cast<Scalar>().transpose();
  return nn::FeatureMap<Scalar>(std::move(data), v.shape());
}

/// Reads/writes raw parameter tensors: "MPMRIWT1", scalar width, tensor count, then (rows, cols, column-major data).
void save_weights(const ModelState<float>& state, const std::filesystem::path& path);
ModelState<float> load_weights(const std::filesystem::path& path);

struct CheckpointManifest {
  ClassifierConfig config;
  std::vector<std::string> class_order;
  int fold = 0;
  double best_val_accuracy = 0;
  int best_epoch = 0;  // 1-based
  int epochs_run = 0;
  std::uint64_t seed = 0;
  Index parameter_count = 0;
  std::string weights_file;
};

void write_manifest(const CheckpointManifest& manifest, const std::filesystem::path& path);
CheckpointManifest read_manifest(const std::filesystem::path& path);

/// Canonical class order tokens.
std::vector<std::string> canonical_class_order();

}  // namespace mpmri
