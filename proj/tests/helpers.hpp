// Shared fixtures for the unit tests.
#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "catbert/autograd.hpp"
#include "catbert/tensor.hpp"

namespace testing {

template <typename T>
catbert::Tensor<T> random_tensor(const catbert::Shape& shape, std::mt19937_64& rng, double lo = -1.0,
                                 double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  catbert::Tensor<T> t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(u(rng));
  return t;
}

template <typename T>
catbert::Parameter<T> random_param(std::string name, const catbert::Shape& shape, std::mt19937_64& rng,
                                   double lo = -1.0, double hi = 1.0) {
  return {std::move(name), random_tensor<T>(shape, rng, lo, hi), true, {}};
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("catbert-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
