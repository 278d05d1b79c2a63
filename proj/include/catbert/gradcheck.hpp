// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>

#include "catbert/autograd.hpp"

namespace catbert {

struct GradCheckOptions {
  double eps = 1e-3;
  /// 2: (f(x+e) - f(x-e)) / 2e. 4: the five-point central stencil, whose
  /// O(e^4) truncation lets a larger eps keep roundoff out of f64 checks.
  int stencil = 2;
  /// 0 checks every coordinate; otherwise a seeded sample per parameter.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates_checked = 0;
  /// Set when a perturbed loss is non-finite; names the coordinate.
  std::optional<std::string> failure;

  bool passed(double tolerance) const { return !failure && max_relative_error < tolerance; }
};

/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
double relative_error(double analytic, double numeric);

/// Central differences of `loss` obtained by perturbing `numeric[i].value`,
/// compared against the gradients already stored in `analytic[i].grad`.
/// The two spans describe the same parameters, possibly in different
/// precisions (e.g. an f32 model checked against an f64 copy).
template <typename A, typename N>
GradCheckResult compare_gradients(std::span<const Parameter<A>> analytic, std::span<Parameter<N>> numeric,
                                  const std::function<double()>& loss, const GradCheckOptions& options);

/// Same-precision check. `loss_fn` must bind every parameter through
/// tape.parameter(); it is run once on a recording tape for the analytic
/// gradient and repeatedly on non-recording tapes for the numeric one.
template <typename T>
GradCheckResult grad_check(const std::function<Var<T>(Tape<T>&)>& loss_fn, std::span<Parameter<T>> params,
                           const GradCheckOptions& options);

}  // namespace catbert
