// Copyright (C) 2026 The catbert authors
// SPDX-License-Identifier: Apache-2.0

#include "catbert/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "catbert/error.hpp"

namespace catbert {

// ---------------------------------------------------------------------------
// Tape

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node& n = nodes_.emplace_back();
  n.owned = std::move(value);
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::view(const Tensor<T>& value) {
  Node& n = nodes_.emplace_back();
  n.borrowed = &value;
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::parameter(Parameter<T>& param) {
  Node& n = nodes_.emplace_back();
  n.borrowed = &param.value;
  if (record_ && param.trainable) {
    n.param = &param;
    n.needs_grad = true;
  }
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
  return record(std::move(value), std::span<const Var<T>>(inputs.begin(), inputs.size()), std::move(fn));
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::span<const Var<T>> inputs, BackwardFn fn) {
  bool any = false;
  if (record_) {
    for (const Var<T>& v : inputs) any = any || nodes_[v.id()].needs_grad;
  }
  Node& n = nodes_.emplace_back();
  n.owned = std::move(value);
  if (any) {
    n.needs_grad = true;
    n.backward = std::move(fn);
  }
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
const Tensor<T>& Tape<T>::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.borrowed ? *n.borrowed : n.owned;
}

template <typename T>
Tensor<T>& Tape<T>::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.grad) n.grad.emplace(value(id).shape());
  return *n.grad;
}

template <typename T>
const Tensor<T>* Tape<T>::grad_if_any(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.grad ? &*n.grad : nullptr;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (loss.value().size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_to_string(loss.value().shape()));
  }
  if (!record_) throw ContractError("backward() on a non-recording tape");
  grad(loss.id()).fill(T{1});
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad) continue;
    if (n.param) {
      Parameter<T>& p = *n.param;
      if (!p.grad) p.grad.emplace(p.value.shape());
      if (n.grad) {
        auto dst = p.grad->data();
        auto src = n.grad->data();
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
      }
      continue;
    }
    if (n.grad && n.backward) n.backward(*this, *n.grad);
  }
}

// ---------------------------------------------------------------------------
// Kernels

namespace kernels {

template <typename T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T{0});
  constexpr std::size_t kBlockN = 256;
  constexpr std::size_t kBlockK = 128;
  for (std::size_t j0 = 0; j0 < n; j0 += kBlockN) {
    const std::size_t jn = std::min(kBlockN, n - j0);
    for (std::size_t p0 = 0; p0 < k; p0 += kBlockK) {
      const std::size_t pn = std::min(kBlockK, k - p0);
      std::size_t i = 0;
      // Four rows at a time so each B slice is loaded once per four FMAs.
      for (; i + 4 <= m; i += 4) {
        T* c0 = c + i * n + j0;
        T* c1 = c0 + n;
        T* c2 = c1 + n;
        T* c3 = c2 + n;
        const T* a0 = a + i * k;
        const T* a1 = a0 + k;
        const T* a2 = a1 + k;
        const T* a3 = a2 + k;
        for (std::size_t p = p0; p < p0 + pn; ++p) {
          const T v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
          const T* br = b + p * n + j0;
          for (std::size_t j = 0; j < jn; ++j) {
            const T bv = br[j];
            c0[j] += v0 * bv;
            c1[j] += v1 * bv;
            c2[j] += v2 * bv;
            c3[j] += v3 * bv;
          }
        }
      }
      for (; i < m; ++i) {
        T* cr = c + i * n + j0;
        const T* ar = a + i * k;
        for (std::size_t p = p0; p < p0 + pn; ++p) {
          const T av = ar[p];
          const T* br = b + p * n + j0;
          for (std::size_t j = 0; j < jn; ++j) cr[j] += av * br[j];
        }
      }
    }
  }
}

template <typename T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c, bool accumulate) {
  std::vector<T> bt(k * n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t p = 0; p < k; ++p) bt[p * n + r] = b[r * k + p];
  }
  gemm_nn(m, k, n, a, bt.data(), c, accumulate);
}

template <typename T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c, bool accumulate) {
  std::vector<T> at(m * k);
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t i = 0; i < m; ++i) at[i * k + p] = a[p * m + i];
  }
  gemm_nn(m, k, n, at.data(), b, c, accumulate);
}

template void gemm_nn<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*, bool);
template void gemm_nn<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool);
template void gemm_nt<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*, bool);
template void gemm_nt<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool);
template void gemm_tn<float>(std::size_t, std::size_t, std::size_t, const float*, const float*, float*, bool);
template void gemm_tn<double>(std::size_t, std::size_t, std::size_t, const double*, const double*, double*, bool);

}  // namespace kernels

// ---------------------------------------------------------------------------
// Ops

namespace {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.cols() != bv.dim(0)) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_to_string(av.shape()) + " x " +
                         shape_to_string(bv.shape()));
  }
  const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor<T> out({m, n});
  kernels::gemm_nn(m, k, n, av.raw(), bv.raw(), out.raw(), false);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, m, k, n](Tape<T>& t, const Tensor<T>& g) {
    if (t.needs_grad(ia)) kernels::gemm_nt(m, n, k, g.raw(), t.value(ib).raw(), t.grad(ia).raw(), true);
    if (t.needs_grad(ib)) kernels::gemm_tn(k, m, n, t.value(ia).raw(), g.raw(), t.grad(ib).raw(), true);
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor<T> out = a.value();
  add_into(out, b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
    if (t.needs_grad(ia)) add_into(t.grad(ia), g);
    if (t.needs_grad(ib)) add_into(t.grad(ib), g);
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor<T> out = a.value();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape<T>& t, const Tensor<T>& g) {
    if (t.needs_grad(ia)) {
      auto& ga = t.grad(ia);
      const auto& vb = t.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
    }
    if (t.needs_grad(ib)) {
      auto& gb = t.grad(ib);
      const auto& va = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> x, double factor) {
  Tensor<T> out = x.value();
  const T f = static_cast<T>(factor);
  for (auto& v : out.data()) v *= f;
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, f](Tape<T>& t, const Tensor<T>& g) {
    auto& gx = t.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * f;
  });
}

template <typename T>
Var<T> add_bias(Var<T> x, Var<T> bias) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& bv = bias.value();
  if (bv.size() != xv.cols()) {
    throw DimensionError("add_bias: bias " + shape_to_string(bv.shape()) + " does not match last dim of " +
                         shape_to_string(xv.shape()));
  }
  Tensor<T> out = xv;
  const std::size_t rows = out.rows(), cols = out.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    T* o = out.raw() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) o[c] += bv[c];
  }
  const std::size_t ix = x.id(), ib = bias.id();
  return x.tape().record(std::move(out), {x, bias}, [ix, ib, rows, cols](Tape<T>& t, const Tensor<T>& g) {
    if (t.needs_grad(ix)) add_into(t.grad(ix), g);
    if (t.needs_grad(ib)) {
      auto& gb = t.grad(ib);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
      }
    }
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) v = v > T{0} ? v : T{0};
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix](Tape<T>& t, const Tensor<T>& g) {
    auto& gx = t.grad(ix);
    const auto& xv = t.value(ix);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xv[i] > T{0}) gx[i] += g[i];
    }
  });
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;
}  // namespace

template <typename T>
Var<T> gelu(Var<T> x) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) {
    const T u = static_cast<T>(kGeluC) * (v + static_cast<T>(kGeluA) * v * v * v);
    v = T{0.5} * v * (T{1} + std::tanh(u));
  }
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix](Tape<T>& t, const Tensor<T>& g) {
    auto& gx = t.grad(ix);
    const auto& xv = t.value(ix);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = xv[i];
      const T u = static_cast<T>(kGeluC) * (v + static_cast<T>(kGeluA) * v * v * v);
      const T th = std::tanh(u);
      const T du = static_cast<T>(kGeluC) * (T{1} + T{3} * static_cast<T>(kGeluA) * v * v);
      gx[i] += g[i] * (T{0.5} * (T{1} + th) + T{0.5} * v * (T{1} - th * th) * du);
    }
  });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  Tensor<T> out = x.value();
  for (auto& v : out.data()) {
    v = v >= T{0} ? T{1} / (T{1} + std::exp(-v)) : std::exp(v) / (T{1} + std::exp(v));
  }
  const std::size_t ix = x.id();
  const std::size_t n = out.size();
  auto y = std::make_shared<std::vector<T>>(out.data().begin(), out.data().end());
  return x.tape().record(std::move(out), {x}, [ix, n, y](Tape<T>& t, const Tensor<T>& g) {
    auto& gx = t.grad(ix);
    for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * (*y)[i] * (T{1} - (*y)[i]);
  });
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, double eps) {
  const Tensor<T>& xv = x.value();
  const std::size_t d = xv.cols();
  if (gain.value().size() != d || bias.value().size() != d) {
    throw DimensionError("layer_norm: gain " + shape_to_string(gain.value().shape()) + " / bias " +
                         shape_to_string(bias.value().shape()) + " do not match last dim of " +
                         shape_to_string(xv.shape()));
  }
  if (!(eps > 0)) throw ContractError("layer_norm: eps must be positive");
  const std::size_t rows = xv.rows();
  Tensor<T> out(xv.shape());
  auto normed = std::make_shared<std::vector<T>>(xv.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv.raw() + r * d;
    double mean = 0;
    for (std::size_t c = 0; c < d; ++c) mean += xr[c];
    mean /= static_cast<double>(d);
    double var = 0;
    for (std::size_t c = 0; c < d; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < d; ++c) {
      const T nh = static_cast<T>((xr[c] - mean) * is);
      (*normed)[r * d + c] = nh;
      out[r * d + c] = nh * gv[c] + bv[c];
    }
  }
  const std::size_t ix = x.id(), ig = gain.id(), ib = bias.id();
  return x.tape().record(std::move(out), {x, gain, bias},
                         [ix, ig, ib, rows, d, normed, inv_std](Tape<T>& t, const Tensor<T>& g) {
                           const auto& gv = t.value(ig);
                           if (t.needs_grad(ig)) {
                             auto& gg = t.grad(ig);
                             for (std::size_t r = 0; r < rows; ++r) {
                               for (std::size_t c = 0; c < d; ++c) gg[c] += g[r * d + c] * (*normed)[r * d + c];
                             }
                           }
                           if (t.needs_grad(ib)) {
                             auto& gb = t.grad(ib);
                             for (std::size_t r = 0; r < rows; ++r) {
                               for (std::size_t c = 0; c < d; ++c) gb[c] += g[r * d + c];
                             }
                           }
                           if (t.needs_grad(ix)) {
                             auto& gx = t.grad(ix);
                             for (std::size_t r = 0; r < rows; ++r) {
                               double sum_dn = 0, sum_dn_n = 0;
                               for (std::size_t c = 0; c < d; ++c) {
                                 const double dn = static_cast<double>(g[r * d + c]) * gv[c];
                                 sum_dn += dn;
                                 sum_dn_n += dn * (*normed)[r * d + c];
                               }
                               const double is = (*inv_std)[r];
                               const double inv_d = 1.0 / static_cast<double>(d);
                               for (std::size_t c = 0; c < d; ++c) {
                                 const double dn = static_cast<double>(g[r * d + c]) * gv[c];
                                 gx[r * d + c] += static_cast<T>(
                                     is * (dn - inv_d * sum_dn - (*normed)[r * d + c] * inv_d * sum_dn_n));
                               }
                             }
                           }
                         });
}

namespace {

// In-place row softmax with max subtraction. -inf entries map to 0.
template <typename T>
void softmax_row(T* row, std::size_t n) {
  T mx = -std::numeric_limits<T>::infinity();
  for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, row[j]);
  T total = 0;
  for (std::size_t j = 0; j < n; ++j) {
    row[j] = std::exp(row[j] - mx);
    total += row[j];
  }
  for (std::size_t j = 0; j < n; ++j) row[j] /= total;
}

// dS = P * (dP - rowdot(dP, P)), written over dp.
template <typename T>
void softmax_row_backward(const T* p, T* dp, std::size_t n) {
  T dot = 0;
  for (std::size_t j = 0; j < n; ++j) dot += dp[j] * p[j];
  for (std::size_t j = 0; j < n; ++j) dp[j] = p[j] * (dp[j] - dot);
}

}  // namespace

template <typename T>
Var<T> softmax_rows(Var<T> x) {
  Tensor<T> out = x.value();
  const std::size_t rows = out.rows(), cols = out.cols();
  for (std::size_t r = 0; r < rows; ++r) softmax_row(out.raw() + r * cols, cols);
  auto p = std::make_shared<std::vector<T>>(out.data().begin(), out.data().end());
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, p, rows, cols](Tape<T>& t, const Tensor<T>& g) {
    auto& gx = t.grad(ix);
    std::vector<T> tmp(cols);
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(g.raw() + r * cols, g.raw() + (r + 1) * cols, tmp.begin());
      softmax_row_backward(p->data() + r * cols, tmp.data(), cols);
      for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += tmp[c];
    }
  });
}

template <typename T>
Var<T> embedding(Var<T> table, std::span<const std::int32_t> ids) {
  const Tensor<T>& tv = table.value();
  if (tv.rank() != 2) throw DimensionError("embedding: table must be 2-D, got " + shape_to_string(tv.shape()));
  const std::size_t vocab = tv.dim(0), d = tv.dim(1);
  for (std::int32_t id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw IndexError("embedding: id " + std::to_string(id) + " outside [0, " + std::to_string(vocab) + ")");
    }
  }
  Tensor<T> out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(tv.raw() + static_cast<std::size_t>(ids[i]) * d, d, out.raw() + i * d);
  }
  auto kept = std::make_shared<std::vector<std::int32_t>>(ids.begin(), ids.end());
  const std::size_t it = table.id();
  return table.tape().record(std::move(out), {table}, [it, kept, d](Tape<T>& t, const Tensor<T>& g) {
    auto& gt = t.grad(it);
    for (std::size_t i = 0; i < kept->size(); ++i) {
      T* dst = gt.raw() + static_cast<std::size_t>((*kept)[i]) * d;
      const T* src = g.raw() + i * d;
      for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
    }
  });
}

template <typename T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, std::span<const std::uint8_t> key_mask, std::size_t heads) {
  const Tensor<T>& qv = q.value();
  const Tensor<T>& kv = k.value();
  const Tensor<T>& vv = v.value();
  if (qv.shape() != kv.shape() || qv.shape() != vv.shape() || qv.rank() != 2) {
    throw DimensionError("attention: q/k/v shapes differ: " + shape_to_string(qv.shape()) + ", " +
                         shape_to_string(kv.shape()) + ", " + shape_to_string(vv.shape()));
  }
  const std::size_t len = qv.dim(0), d = qv.dim(1);
  if (heads == 0 || d % heads != 0) {
    throw DimensionError("attention: width " + std::to_string(d) + " not divisible by " + std::to_string(heads) +
                         " heads");
  }
  if (!key_mask.empty() && key_mask.size() != len) {
    throw DimensionError("attention: mask length " + std::to_string(key_mask.size()) + " vs sequence length " +
                         std::to_string(len));
  }
  if (!key_mask.empty() && std::none_of(key_mask.begin(), key_mask.end(), [](std::uint8_t m) { return m != 0; })) {
    throw ContractError("attention: every key is masked");
  }
  const std::size_t dh = d / heads;
  const T scale_factor = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
  const T neg_inf = -std::numeric_limits<T>::infinity();

  auto probs = std::make_shared<std::vector<T>>(heads * len * len);
  Tensor<T> out({len, d});
  std::vector<T> qh(len * dh), kh(len * dh), vh(len * dh), oh(len * dh);
  auto gather = [&](const Tensor<T>& src, std::vector<T>& dst, std::size_t h) {
    for (std::size_t i = 0; i < len; ++i) std::copy_n(src.raw() + i * d + h * dh, dh, dst.data() + i * dh);
  };
  for (std::size_t h = 0; h < heads; ++h) {
    gather(qv, qh, h);
    gather(kv, kh, h);
    gather(vv, vh, h);
    T* p = probs->data() + h * len * len;
    kernels::gemm_nt(len, dh, len, qh.data(), kh.data(), p, false);
    for (std::size_t i = 0; i < len; ++i) {
      T* row = p + i * len;
      for (std::size_t j = 0; j < len; ++j) {
        row[j] = (key_mask.empty() || key_mask[j]) ? row[j] * scale_factor : neg_inf;
      }
      softmax_row(row, len);
    }
    kernels::gemm_nn(len, len, dh, p, vh.data(), oh.data(), false);
    for (std::size_t i = 0; i < len; ++i) std::copy_n(oh.data() + i * dh, dh, out.raw() + i * d + h * dh);
  }

  const std::size_t iq = q.id(), ik = k.id(), iv = v.id();
  return q.tape().record(
      std::move(out), {q, k, v}, [iq, ik, iv, len, d, dh, heads, scale_factor, probs](Tape<T>& t, const Tensor<T>& g) {
        std::vector<T> qh(len * dh), kh(len * dh), vh(len * dh), gh(len * dh);
        std::vector<T> dp(len * len), dq(len * dh), dk(len * dh), dv(len * dh);
        auto gather = [&](const Tensor<T>& src, std::vector<T>& dst, std::size_t h) {
          for (std::size_t i = 0; i < len; ++i) std::copy_n(src.raw() + i * d + h * dh, dh, dst.data() + i * dh);
        };
        auto scatter_add = [&](std::size_t id, const std::vector<T>& src, std::size_t h) {
          auto& dst = t.grad(id);
          for (std::size_t i = 0; i < len; ++i) {
            for (std::size_t c = 0; c < dh; ++c) dst[i * d + h * dh + c] += src[i * dh + c];
          }
        };
        for (std::size_t h = 0; h < heads; ++h) {
          const T* p = probs->data() + h * len * len;
          gather(g, gh, h);
          gather(t.value(iv), vh, h);
          if (t.needs_grad(iv)) {
            kernels::gemm_tn(len, len, dh, p, gh.data(), dv.data(), false);
            scatter_add(iv, dv, h);
          }
          if (!t.needs_grad(iq) && !t.needs_grad(ik)) continue;
          kernels::gemm_nt(len, dh, len, gh.data(), vh.data(), dp.data(), false);
          for (std::size_t i = 0; i < len; ++i) softmax_row_backward(p + i * len, dp.data() + i * len, len);
          for (auto& x : dp) x *= scale_factor;
          if (t.needs_grad(iq)) {
            gather(t.value(ik), kh, h);
            kernels::gemm_nn(len, len, dh, dp.data(), kh.data(), dq.data(), false);
            scatter_add(iq, dq, h);
          }
          if (t.needs_grad(ik)) {
            gather(t.value(iq), qh, h);
            kernels::gemm_tn(len, len, dh, dp.data(), qh.data(), dk.data(), false);
            scatter_add(ik, dk, h);
          }
        }
      });
}

template <typename T>
Var<T> select_row(Var<T> x, std::size_t row) {
  const Tensor<T>& xv = x.value();
  if (row >= xv.rows()) {
    throw IndexError("select_row: row " + std::to_string(row) + " outside " + shape_to_string(xv.shape()));
  }
  const std::size_t cols = xv.cols();
  Tensor<T> out({1, cols});
  std::copy_n(xv.raw() + row * cols, cols, out.raw());
  const std::size_t ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, row, cols](Tape<T>& t, const Tensor<T>& g) {
    auto& gx = t.grad(ix);
    for (std::size_t c = 0; c < cols; ++c) gx[row * cols + c] += g[c];
  });
}

template <typename T>
Var<T> concat_cols(Var<T> a, Var<T> b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  if (av.rows() != bv.rows()) {
    throw DimensionError("concat_cols: row counts differ: " + shape_to_string(av.shape()) + " vs " +
                         shape_to_string(bv.shape()));
  }
  const std::size_t rows = av.rows(), ca = av.cols(), cb = bv.cols();
  Tensor<T> out({rows, ca + cb});
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(av.raw() + r * ca, ca, out.raw() + r * (ca + cb));
    std::copy_n(bv.raw() + r * cb, cb, out.raw() + r * (ca + cb) + ca);
  }
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib, rows, ca, cb](Tape<T>& t, const Tensor<T>& g) {
    if (t.needs_grad(ia)) {
      auto& ga = t.grad(ia);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < ca; ++c) ga[r * ca + c] += g[r * (ca + cb) + c];
      }
    }
    if (t.needs_grad(ib)) {
      auto& gb = t.grad(ib);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cb; ++c) gb[r * cb + c] += g[r * (ca + cb) + ca + c];
      }
    }
  });
}

template <typename T>
Var<T> concat_rows(std::span<const Var<T>> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t cols = parts[0].value().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.value().cols() != cols) {
      throw DimensionError("concat_rows: column counts differ: " + shape_to_string(parts[0].value().shape()) +
                           " vs " + shape_to_string(p.value().shape()));
    }
    rows += p.value().rows();
  }
  Tensor<T> out({rows, cols});
  std::vector<std::pair<std::size_t, std::size_t>> spans;  // (id, row offset)
  std::size_t at = 0;
  for (const auto& p : parts) {
    const auto& pv = p.value();
    std::copy(pv.data().begin(), pv.data().end(), out.raw() + at * cols);
    spans.emplace_back(p.id(), at);
    at += pv.rows();
  }
  return parts[0].tape().record(std::move(out), parts, [spans, cols](Tape<T>& t, const Tensor<T>& g) {
    for (const auto& [id, offset] : spans) {
      if (!t.needs_grad(id)) continue;
      auto& gp = t.grad(id);
      const T* src = g.raw() + offset * cols;
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += src[i];
    }
  });
}

template <typename T>
Var<T> sum(Var<T> x) {
  double total = 0;
  for (T v : x.value().data()) total += v;
  const std::size_t ix = x.id();
  return x.tape().record(Tensor<T>::scalar(static_cast<T>(total)), {x}, [ix](Tape<T>& t, const Tensor<T>& g) {
    auto& gx = t.grad(ix);
    for (auto& v : gx.data()) v += g[0];
  });
}

template <typename T>
Var<T> bce(Var<T> probs, std::span<const double> labels, std::span<const double> weights) {
  const Tensor<T>& pv = probs.value();
  const std::size_t n = pv.size();
  if (labels.size() != n || weights.size() != n) {
    throw ContractError("bce: " + std::to_string(n) + " probabilities, " + std::to_string(labels.size()) +
                        " labels, " + std::to_string(weights.size()) + " weights");
  }
  if (n == 0) throw ContractError("bce: empty batch");
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = std::clamp(static_cast<double>(pv[i]), kProbClamp, 1.0 - kProbClamp);
    total += weights[i] * -(labels[i] * std::log(f) + (1.0 - labels[i]) * std::log(1.0 - f));
  }
  auto lab = std::make_shared<std::vector<double>>(labels.begin(), labels.end());
  auto wts = std::make_shared<std::vector<double>>(weights.begin(), weights.end());
  const std::size_t ip = probs.id();
  return probs.tape().record(Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(n))), {probs},
                             [ip, n, lab, wts](Tape<T>& t, const Tensor<T>& g) {
                               auto& gp = t.grad(ip);
                               const auto& pv = t.value(ip);
                               for (std::size_t i = 0; i < n; ++i) {
                                 const double f = pv[i];
                                 if (f < kProbClamp || f > 1.0 - kProbClamp) continue;
                                 const double y = (*lab)[i];
                                 const double d = (*wts)[i] * (-y / f + (1.0 - y) / (1.0 - f)) / static_cast<double>(n);
                                 gp[i] += static_cast<T>(d * g[0]);
                               }
                             });
}

#define CATBERT_INSTANTIATE_OPS(T)                                                                     \
  template class Tape<T>;                                                                              \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                                           \
  template Var<T> add<T>(Var<T>, Var<T>);                                                              \
  template Var<T> mul<T>(Var<T>, Var<T>);                                                              \
  template Var<T> scale<T>(Var<T>, double);                                                            \
  template Var<T> add_bias<T>(Var<T>, Var<T>);                                                         \
  template Var<T> relu<T>(Var<T>);                                                                     \
  template Var<T> gelu<T>(Var<T>);                                                                     \
  template Var<T> sigmoid<T>(Var<T>);                                                                  \
  template Var<T> layer_norm<T>(Var<T>, Var<T>, Var<T>, double);                                       \
  template Var<T> softmax_rows<T>(Var<T>);                                                             \
  template Var<T> embedding<T>(Var<T>, std::span<const std::int32_t>);                                 \
  template Var<T> attention<T>(Var<T>, Var<T>, Var<T>, std::span<const std::uint8_t>, std::size_t);    \
  template Var<T> select_row<T>(Var<T>, std::size_t);                                                  \
  template Var<T> concat_cols<T>(Var<T>, Var<T>);                                                      \
  template Var<T> concat_rows<T>(std::span<const Var<T>>);                                             \
  template Var<T> sum<T>(Var<T>);                                                                      \
  template Var<T> bce<T>(Var<T>, std::span<const double>, std::span<const double>);

CATBERT_INSTANTIATE_OPS(float)
CATBERT_INSTANTIATE_OPS(double)

#undef CATBERT_INSTANTIATE_OPS

}  // namespace catbert
