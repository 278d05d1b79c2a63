// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>

#include "catbert/tensor.hpp"

namespace catbert {

struct AdamConfig {
  double learning_rate = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Moments are keyed by parameter name and
/// created on first use.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  /// One update of every trainable parameter. Frozen parameters are not
  /// touched. Throws ContractError if a trainable parameter has no grad.
  void step(std::span<Parameter<T>> params);

  std::int64_t steps() const { return step_; }
  const AdamConfig& config() const { return config_; }
  const Tensor<T>* first_moment(const std::string& name) const;
  const Tensor<T>* second_moment(const std::string& name) const;

 private:
  struct Moments {
    Tensor<T> m;
    Tensor<T> v;
  };
  AdamConfig config_;
  std::map<std::string, Moments> moments_;
  std::int64_t step_ = 0;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace catbert
