// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace catbert {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major tensor. Any tensor can be viewed as a matrix of
/// rows() x cols() where cols() is the last dimension.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> data);

  static Tensor matrix(std::initializer_list<std::initializer_list<T>> rows);
  static Tensor vector(std::initializer_list<T> values);
  static Tensor scalar(T value) { return Tensor({1}, {value}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t cols() const { return shape_.empty() ? 1 : shape_.back(); }
  std::size_t rows() const;

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* raw() { return data_.data(); }
  const T* raw() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  std::span<T> row(std::size_t r) { return std::span<T>(data_).subspan(r * cols(), cols()); }
  std::span<const T> row(std::size_t r) const { return std::span<const T>(data_).subspan(r * cols(), cols()); }

  void fill(T value);
  /// Reinterprets the data under a new shape with the same element count.
  Tensor reshaped(Shape shape) const;

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// A named, optionally trainable model weight.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  bool trainable = true;
  std::optional<Tensor<T>> grad;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace catbert
