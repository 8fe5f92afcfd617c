#pragma once

#include "mpmri/nn/tensor.hpp"

#include <cmath>
#include <vector>

namespace mpmri::nn {

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias-corrected moment estimates; no weight decay.
template <typename Scalar>
class Adam {
 public:
  Adam(std::vector<Parameter<Scalar>*> params, AdamOptions options)
      : params_(std::move(params)), options_(options) {
    for (auto* p : params_) {
      m_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
    const auto b1 = static_cast<Scalar>(options_.beta1), b2 = static_cast<Scalar>(options_.beta2);
    const auto step_size = static_cast<Scalar>(options_.learning_rate / c1);
    const auto inv_c2 = static_cast<Scalar>(1.0 / c2);
    const auto eps = static_cast<Scalar>(options_.epsilon);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = *params_[i];
      m_[i] = b1 * m_[i] + (Scalar(1) - b1) * p.grad;
      v_[i] = b2 * v_[i] + (Scalar(1) - b2) * p.grad.cwiseAbs2();
      p.value.array() -= step_size * m_[i].array() / ((v_[i].array() * inv_c2).sqrt() + eps);
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->grad.setZero();
  }

  long steps() const { return t_; }
  const AdamOptions& options() const { return options_; }

 private:
  std::vector<Parameter<Scalar>*> params_;
  AdamOptions options_;
  std::vector<Matrix<Scalar>> m_, v_;
  long t_ = 0;
};

}  // namespace mpmri::nn
