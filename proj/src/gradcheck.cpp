// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#include "catbert/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "catbert/error.hpp"
#include "catbert/util.hpp"

namespace catbert {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

template <typename A, typename N>
GradCheckResult compare_gradients(std::span<const Parameter<A>> analytic, std::span<Parameter<N>> numeric,
                                  const std::function<double()>& loss, const GradCheckOptions& options) {
  if (!(options.eps > 0.0 && options.eps <= 1e-1)) {
    throw ContractError("grad_check: eps must be in (0, 0.1], got " + std::to_string(options.eps));
  }
  if (options.stencil != 2 && options.stencil != 4) {
    throw ContractError("grad_check: stencil must be 2 or 4, got " + std::to_string(options.stencil));
  }
  if (analytic.size() != numeric.size()) throw ContractError("grad_check: parameter lists differ in length");
  GradCheckResult result;
  for (std::size_t p = 0; p < analytic.size(); ++p) {
    const Parameter<A>& ap = analytic[p];
    Parameter<N>& np = numeric[p];
    if (!ap.trainable) continue;
    if (ap.value.size() != np.value.size()) throw ContractError("grad_check: size mismatch for " + ap.name);
    if (!ap.grad) throw ContractError("grad_check: no analytic gradient for " + ap.name);

    std::vector<std::size_t> coords(ap.value.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (options.max_coords_per_param && coords.size() > options.max_coords_per_param) {
      std::mt19937_64 rng(mix_seed(options.seed, fnv1a64(ap.name)));
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      const N orig = np.value[i];
      auto at = [&](double offset) {
        np.value[i] = static_cast<N>(orig + offset);
        const double l = loss();
        np.value[i] = orig;
        return l;
      };
      double numeric_grad = 0.0;
      bool finite = true;
      if (options.stencil == 2) {
        const double lp = at(options.eps), lm = at(-options.eps);
        finite = std::isfinite(lp) && std::isfinite(lm);
        // Divide by the step actually taken; it differs from 2 eps in f32.
        const double step = static_cast<double>(static_cast<N>(orig + options.eps)) -
                            static_cast<double>(static_cast<N>(orig - options.eps));
        numeric_grad = (lp - lm) / step;
      } else {
        const double lp2 = at(2 * options.eps), lp = at(options.eps), lm = at(-options.eps),
                     lm2 = at(-2 * options.eps);
        finite = std::isfinite(lp2) && std::isfinite(lp) && std::isfinite(lm) && std::isfinite(lm2);
        numeric_grad = (-lp2 + 8.0 * lp - 8.0 * lm + lm2) / (12.0 * options.eps);
      }
      if (!finite) {
        result.failure = "non-finite loss perturbing " + ap.name + "[" + std::to_string(i) + "]";
        return result;
      }
      const double analytic_grad = (*ap.grad)[i];
      const double err = relative_error(analytic_grad, numeric_grad);
      ++result.coordinates_checked;
      if (err > result.max_relative_error || result.coordinates_checked == 1) {
        result.max_relative_error = err;
        result.worst_parameter = ap.name;
        result.worst_index = i;
        result.worst_analytic = analytic_grad;
        result.worst_numeric = numeric_grad;
      }
    }
  }
  return result;
}

template <typename T>
GradCheckResult grad_check(const std::function<Var<T>(Tape<T>&)>& loss_fn, std::span<Parameter<T>> params,
                           const GradCheckOptions& options) {
  for (auto& p : params) p.grad.reset();
  {
    Tape<T> tape;
    Var<T> loss = loss_fn(tape);
    tape.backward(loss);
  }
  auto eval = [&]() -> double {
    Tape<T> tape(false);
    return static_cast<double>(loss_fn(tape).value()[0]);
  };
  return compare_gradients<T, T>(std::span<const Parameter<T>>(params.data(), params.size()), params, eval, options);
}

template GradCheckResult compare_gradients<float, float>(std::span<const Parameter<float>>, std::span<Parameter<float>>,
                                                         const std::function<double()>&, const GradCheckOptions&);
template GradCheckResult compare_gradients<float, double>(std::span<const Parameter<float>>,
                                                          std::span<Parameter<double>>, const std::function<double()>&,
                                                          const GradCheckOptions&);
template GradCheckResult compare_gradients<double, double>(std::span<const Parameter<double>>,
                                                           std::span<Parameter<double>>,
                                                           const std::function<double()>&, const GradCheckOptions&);
template GradCheckResult grad_check<float>(const std::function<Var<float>(Tape<float>&)>&, std::span<Parameter<float>>,
                                           const GradCheckOptions&);
template GradCheckResult grad_check<double>(const std::function<Var<double>(Tape<double>&)>&,
                                            std::span<Parameter<double>>, const GradCheckOptions&);

}  // namespace catbert
