// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "catbert/tensor.hpp"

namespace catbert {

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the
/// tape lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor<T>& value() const;
  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Ordered record of executed ops. Nodes are appended in execution order, so
/// walking them backwards is a reverse topological traversal.
///
/// A tape built with record=false keeps op outputs but no backward closures;
/// that is the inference path.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& grad_out)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  /// Owned input that never receives a gradient.
  Var<T> constant(Tensor<T> value);
  /// Borrowed input that never receives a gradient. `value` must outlive the tape.
  Var<T> view(const Tensor<T>& value);
  /// Borrowed parameter. When recording and the parameter is trainable,
  /// backward() accumulates into param.grad.
  Var<T> parameter(Parameter<T>& param);

  /// Appends an op output. `fn` runs during backward() only if some input
  /// needs a gradient.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn);
  Var<T> record(Tensor<T> value, std::span<const Var<T>> inputs, BackwardFn fn);

  /// Reverse-mode accumulation from a scalar loss. Gradient accumulation is
  /// additive, so a value feeding several ops receives the sum of all paths.
  void backward(Var<T> loss);

  const Tensor<T>& value(std::size_t id) const;
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  /// Gradient slot for node `id`, zero-initialized on first access.
  Tensor<T>& grad(std::size_t id);
  /// Gradient of node `id` after backward(), or nullptr if none reached it.
  const Tensor<T>* grad_if_any(std::size_t id) const;

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* borrowed = nullptr;
    std::optional<Tensor<T>> grad;
    Parameter<T>* param = nullptr;
    bool needs_grad = false;
    BackwardFn backward;
  };

  std::deque<Node> nodes_;
  bool record_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

// Raw kernels, shared by ops and by code that works on plain tensors.
namespace kernels {

/// C[m x n] (+)= A[m x k] * B[k x n]
template <typename T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c, bool accumulate);
/// C[m x n] (+)= A[m x k] * B[n x k]^T
template <typename T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c, bool accumulate);
/// C[m x n] (+)= A[k x m]^T * B[k x n]
template <typename T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c, bool accumulate);

}  // namespace kernels

// Differentiable ops. Shapes are read as matrices (rows x last dim).

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);
template <typename T>
Var<T> add(Var<T> a, Var<T> b);
/// Elementwise product.
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> x, double factor);
/// Adds a length-n bias to every row of x[.. x n].
template <typename T>
Var<T> add_bias(Var<T> x, Var<T> bias);
/// x W + b
template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias) {
  return add_bias(matmul(x, weight), bias);
}
template <typename T>
Var<T> relu(Var<T> x);
/// tanh approximation of GELU.
template <typename T>
Var<T> gelu(Var<T> x);
template <typename T>
Var<T> sigmoid(Var<T> x);
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, double eps);
template <typename T>
Var<T> softmax_rows(Var<T> x);
/// Gathers rows of table[V x d]. Throws IndexError on an id outside [0, V).
template <typename T>
Var<T> embedding(Var<T> table, std::span<const std::int32_t> ids);
/// Multi-head scaled dot-product attention over q, k, v [L x d]. Keys with
/// key_mask[j] == 0 get -inf logits. An empty mask means all keys visible.
template <typename T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, std::span<const std::uint8_t> key_mask, std::size_t heads);
template <typename T>
Var<T> select_row(Var<T> x, std::size_t row);
template <typename T>
Var<T> concat_cols(Var<T> a, Var<T> b);
/// Stacks row blocks with equal column counts.
template <typename T>
Var<T> concat_rows(std::span<const Var<T>> parts);
template <typename T>
Var<T> sum(Var<T> x);
/// Mean weighted binary cross-entropy. Probabilities are clamped to
/// [1e-7, 1 - 1e-7]; clamped entries pass no gradient.
template <typename T>
Var<T> bce(Var<T> probs, std::span<const double> labels, std::span<const double> weights);

inline constexpr double kProbClamp = 1e-7;

}  // namespace catbert
