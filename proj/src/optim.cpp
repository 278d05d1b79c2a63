// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#include "catbert/optim.hpp"

#include <cmath>

#include "catbert/error.hpp"

namespace catbert {

template <typename T>
void Adam<T>::step(std::span<Parameter<T>> params) {
  for (const auto& p : params) {
    if (p.trainable && !p.grad) throw ContractError("adam: trainable parameter '" + p.name + "' has no gradient");
    if (p.trainable && p.grad->shape() != p.value.shape()) {
      throw DimensionError("adam: gradient shape " + shape_to_string(p.grad->shape()) + " for '" + p.name +
                           "' does not match " + shape_to_string(p.value.shape()));
    }
  }
  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (auto& p : params) {
    if (!p.trainable) continue;
    auto [it, inserted] = moments_.try_emplace(p.name);
    Moments& mom = it->second;
    if (inserted) {
      mom.m = Tensor<T>(p.value.shape());
      mom.v = Tensor<T>(p.value.shape());
    }
    auto w = p.value.data();
    auto g = p.grad->data();
    auto m = mom.m.data();
    auto v = mom.v.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      const double mi = b1 * m[i] + (1.0 - b1) * gi;
      const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = config_.learning_rate * (mi / correction1) / (std::sqrt(vi / correction2) + config_.epsilon);
      w[i] = static_cast<T>(w[i] - update);
    }
  }
}

template <typename T>
const Tensor<T>* Adam<T>::first_moment(const std::string& name) const {
  auto it = moments_.find(name);
  return it == moments_.end() ? nullptr : &it->second.m;
}

template <typename T>
const Tensor<T>* Adam<T>::second_moment(const std::string& name) const {
  auto it = moments_.find(name);
  return it == moments_.end() ? nullptr : &it->second.v;
}

template class Adam<float>;
template class Adam<double>;

}  // namespace catbert
