// Copyright 2026 The tokentts Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

// Differentiable ops over Tensor. Parent order is documented per op; backward
// closures read parent values through self.parents and skip any parent that
// does not require grad.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "tokentts/tensor.hpp"

namespace tts {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

inline ConstMatMap as_mat(const detail::Node& n) {
  return ConstMatMap(n.value.data(), n.rows, n.cols);
}
inline MatMap as_grad(detail::Node& n) {
  n.ensure_grad();
  return MatMap(n.grad.data(), n.rows, n.cols);
}
inline ConstMatMap as_mat(const Tensor& t) {
  return ConstMatMap(t.data().data(), t.rows(), t.cols());
}

// ---------------------------------------------------------------------------
// elementwise arithmetic
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  std::vector<float> v(a.data());
  const auto& bd = b.data();
  for (size_t i = 0; i < v.size(); ++i) v[i] += bd[i];
  return make_op(a.rows(), a.cols(), std::move(v), {a, b}, [](detail::Node& self) {
    for (int p = 0; p < 2; ++p) {
      auto& par = *self.parents[p];
      if (!par.requires_grad) continue;
      par.ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) par.grad[i] += self.grad[i];
    }
  });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "sub: shape mismatch");
  std::vector<float> v(a.data());
  const auto& bd = b.data();
  for (size_t i = 0; i < v.size(); ++i) v[i] -= bd[i];
  return make_op(a.rows(), a.cols(), std::move(v), {a, b}, [](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] -= self.grad[i];
    }
  });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  check(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  std::vector<float> v(a.data());
  const auto& bd = b.data();
  for (size_t i = 0; i < v.size(); ++i) v[i] *= bd[i];
  return make_op(a.rows(), a.cols(), std::move(v), {a, b}, [](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      pa.ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pa.grad[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) pb.grad[i] += self.grad[i] * pa.value[i];
    }
  });
}

inline Tensor scale(const Tensor& a, float s) {
  std::vector<float> v(a.data());
  for (auto& x : v) x *= s;
  return make_op(a.rows(), a.cols(), std::move(v), {a}, [s](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += s * self.grad[i];
  });
}

inline Tensor add_scalar(const Tensor& a, float c) {
  std::vector<float> v(a.data());
  for (auto& x : v) x += c;
  return make_op(a.rows(), a.cols(), std::move(v), {a}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
}

// y = a + c where c is plain data (no grad path into c)
inline Tensor add_const(const Tensor& a, const std::vector<float>& c) {
  check(c.size() == a.data().size(), "add_const: size mismatch");
  std::vector<float> v(a.data());
  for (size_t i = 0; i < v.size(); ++i) v[i] += c[i];
  return make_op(a.rows(), a.cols(), std::move(v), {a}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
}

inline Tensor sub_const(const Tensor& a, const std::vector<float>& c) {
  std::vector<float> neg(c);
  for (auto& x : neg) x = -x;
  return add_const(a, neg);
}

// x [T,C] + b [1,C] broadcast over rows
inline Tensor add_row_bias(const Tensor& x, const Tensor& b) {
  check(b.rows() == 1 && b.cols() == x.cols(), "add_row_bias: bias shape");
  std::vector<float> v(x.data());
  const auto& bd = b.data();
  const int C = x.cols();
  for (int t = 0; t < x.rows(); ++t)
    for (int c = 0; c < C; ++c) v[static_cast<size_t>(t) * C + c] += bd[c];
  return make_op(x.rows(), x.cols(), std::move(v), {x, b}, [](detail::Node& self) {
    auto& px = *self.parents[0];
    auto& pb = *self.parents[1];
    const int C = self.cols;
    if (px.requires_grad) {
      px.ensure_grad();
      for (size_t i = 0; i < self.grad.size(); ++i) px.grad[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      pb.ensure_grad();
      for (int t = 0; t < self.rows; ++t)
        for (int c = 0; c < C; ++c) pb.grad[c] += self.grad[static_cast<size_t>(t) * C + c];
    }
  });
}

// ---------------------------------------------------------------------------
// matmul family
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  check(a.cols() == b.rows(), "matmul: inner dim mismatch");
  std::vector<float> v(static_cast<size_t>(a.rows()) * b.cols());
  MatMap(v.data(), a.rows(), b.cols()).noalias() = as_mat(a) * as_mat(b);
  return make_op(a.rows(), b.cols(), std::move(v), {a, b}, [](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    ConstMatMap g(self.grad.data(), self.rows, self.cols);
    if (pa.requires_grad) as_grad(pa).noalias() += g * as_mat(pb).transpose();
    if (pb.requires_grad) as_grad(pb).noalias() += as_mat(pa).transpose() * g;
  });
}

// a [m,k] * b[n,k]^T -> [m,n]
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check(a.cols() == b.cols(), "matmul_nt: inner dim mismatch");
  std::vector<float> v(static_cast<size_t>(a.rows()) * b.rows());
  MatMap(v.data(), a.rows(), b.rows()).noalias() = as_mat(a) * as_mat(b).transpose();
  return make_op(a.rows(), b.rows(), std::move(v), {a, b}, [](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    ConstMatMap g(self.grad.data(), self.rows, self.cols);
    if (pa.requires_grad) as_grad(pa).noalias() += g * as_mat(pb);
    if (pb.requires_grad) as_grad(pb).noalias() += g.transpose() * as_mat(pa);
  });
}

inline Tensor transpose(const Tensor& a) {
  std::vector<float> v(a.data().size());
  MatMap(v.data(), a.cols(), a.rows()) = as_mat(a).transpose();
  return make_op(a.cols(), a.rows(), std::move(v), {a}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    as_grad(p) += ConstMatMap(self.grad.data(), self.rows, self.cols).transpose();
  });
}

inline Tensor reshape(const Tensor& a, int rows, int cols) {
  check(static_cast<int64_t>(rows) * cols == a.numel(), "reshape: numel mismatch");
  std::vector<float> v(a.data());
  return make_op(rows, cols, std::move(v), {a}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// slicing / gathering
// ---------------------------------------------------------------------------

inline Tensor slice_rows(const Tensor& a, int r0, int len) {
  check(r0 >= 0 && len >= 0 && r0 + len <= a.rows(), "slice_rows: out of range");
  const int C = a.cols();
  std::vector<float> v(a.data().begin() + static_cast<size_t>(r0) * C,
                       a.data().begin() + static_cast<size_t>(r0 + len) * C);
  return make_op(len, C, std::move(v), {a}, [r0](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    const size_t off = static_cast<size_t>(r0) * self.cols;
    for (size_t i = 0; i < self.grad.size(); ++i) p.grad[off + i] += self.grad[i];
  });
}

inline Tensor slice_cols(const Tensor& a, int c0, int len) {
  check(c0 >= 0 && len >= 0 && c0 + len <= a.cols(), "slice_cols: out of range");
  const int C = a.cols();
  std::vector<float> v(static_cast<size_t>(a.rows()) * len);
  for (int t = 0; t < a.rows(); ++t)
    for (int c = 0; c < len; ++c)
      v[static_cast<size_t>(t) * len + c] = a.data()[static_cast<size_t>(t) * C + c0 + c];
  return make_op(a.rows(), len, std::move(v), {a}, [c0](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    const int C = p.cols;
    for (int t = 0; t < self.rows; ++t)
      for (int c = 0; c < self.cols; ++c)
        p.grad[static_cast<size_t>(t) * C + c0 + c] += self.grad[static_cast<size_t>(t) * self.cols + c];
  });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
  check(!parts.empty(), "concat_rows: empty input");
  const int C = parts[0].cols();
  int R = 0;
  for (const auto& p : parts) {
    check(p.cols() == C, "concat_rows: column mismatch");
    R += p.rows();
  }
  std::vector<float> v;
  v.reserve(static_cast<size_t>(R) * C);
  for (const auto& p : parts) v.insert(v.end(), p.data().begin(), p.data().end());
  return make_op(R, C, std::move(v), parts, [](detail::Node& self) {
    size_t off = 0;
    for (auto& pp : self.parents) {
      const size_t n = pp->value.size();
      if (pp->requires_grad) {
        pp->ensure_grad();
        for (size_t i = 0; i < n; ++i) pp->grad[i] += self.grad[off + i];
      }
      off += n;
    }
  });
}

// rows start, start+stride, ... (used to split a waveform into period columns)
inline Tensor strided_rows(const Tensor& a, int start, int stride) {
  check(start >= 0 && start < a.rows() && stride >= 1, "strided_rows: bad args");
  const int C = a.cols();
  const int n = (a.rows() - 1 - start) / stride + 1;
  std::vector<float> v(static_cast<size_t>(n) * C);
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < C; ++c)
      v[static_cast<size_t>(i) * C + c] = a.data()[static_cast<size_t>(start + i * stride) * C + c];
  return make_op(n, C, std::move(v), {a}, [start, stride](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    const int C = self.cols;
    for (int i = 0; i < self.rows; ++i)
      for (int c = 0; c < C; ++c)
        p.grad[static_cast<size_t>(start + i * stride) * C + c] +=
            self.grad[static_cast<size_t>(i) * C + c];
  });
}

// y[t] = x[idx[t]], embedding-style lookup with scatter-add backward
inline Tensor gather_rows(const Tensor& a, std::vector<int> idx) {
  const int C = a.cols();
  for (int i : idx) check(i >= 0 && i < a.rows(), "gather_rows: index out of range");
  const int n_rows = static_cast<int>(idx.size());
  std::vector<float> v(idx.size() * static_cast<size_t>(C));
  for (size_t t = 0; t < idx.size(); ++t)
    std::copy_n(a.data().begin() + static_cast<size_t>(idx[t]) * C, C, v.begin() + t * C);
  return make_op(n_rows, C, std::move(v), {a},
                 [idx = std::move(idx)](detail::Node& self) {
                   auto& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   p.ensure_grad();
                   const int C = self.cols;
                   for (size_t t = 0; t < idx.size(); ++t)
                     for (int c = 0; c < C; ++c)
                       p.grad[static_cast<size_t>(idx[t]) * C + c] += self.grad[t * C + c];
                 });
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

namespace detail_ops {

template <typename Fwd, typename Bwd>
Tensor unary(const Tensor& a, Fwd fwd, Bwd bwd_from_xy) {
  std::vector<float> v(a.data().size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = fwd(a.data()[i]);
  return make_op(a.rows(), a.cols(), std::move(v), {a}, [bwd_from_xy](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i)
      p.grad[i] += self.grad[i] * bwd_from_xy(p.value[i], self.value[i]);
  });
}

}  // namespace detail_ops

inline Tensor elu(const Tensor& a) {
  return detail_ops::unary(
      a, [](float x) { return x > 0 ? x : std::expm1(x); },
      [](float x, float y) { return x > 0 ? 1.0f : y + 1.0f; });
}

inline Tensor leaky_relu(const Tensor& a, float slope = 0.1f) {
  return detail_ops::unary(
      a, [slope](float x) { return x > 0 ? x : slope * x; },
      [slope](float x, float) { return x > 0 ? 1.0f : slope; });
}

inline Tensor tanh_t(const Tensor& a) {
  return detail_ops::unary(
      a, [](float x) { return std::tanh(x); }, [](float, float y) { return 1.0f - y * y; });
}

inline Tensor sigmoid(const Tensor& a) {
  return detail_ops::unary(
      a, [](float x) { return 1.0f / (1.0f + std::exp(-x)); },
      [](float, float y) { return y * (1.0f - y); });
}

inline Tensor swish(const Tensor& a) {
  return detail_ops::unary(
      a, [](float x) { return x / (1.0f + std::exp(-x)); },
      [](float x, float y) {
        float s = 1.0f / (1.0f + std::exp(-x));
        return y + s * (1.0f - y);
      });
}

inline Tensor square(const Tensor& a) {
  return detail_ops::unary(
      a, [](float x) { return x * x; }, [](float x, float) { return 2.0f * x; });
}

inline Tensor abs_t(const Tensor& a) {
  return detail_ops::unary(
      a, [](float x) { return std::fabs(x); },
      [](float x, float) { return x > 0 ? 1.0f : (x < 0 ? -1.0f : 0.0f); });
}

inline Tensor sqrt_eps(const Tensor& a, float eps = 0.0f) {
  return detail_ops::unary(
      a, [eps](float x) { return std::sqrt(x + eps); },
      [](float, float y) { return y > 0 ? 0.5f / y : 0.0f; });
}

inline Tensor log_eps(const Tensor& a, float eps = 1e-7f) {
  return detail_ops::unary(
      a, [eps](float x) { return std::log(x + eps); },
      [eps](float x, float) { return 1.0f / (x + eps); });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

inline Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (float x : a.data()) s += x;
  return make_op(1, 1, {static_cast<float>(s)}, {a}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    const float g = self.grad[0];
    for (auto& x : p.grad) x += g;
  });
}

inline Tensor mean_all(const Tensor& a) {
  check(a.numel() > 0, "mean_all: empty tensor");
  double s = 0.0;
  for (float x : a.data()) s += x;
  const float inv_n = 1.0f / static_cast<float>(a.numel());
  return make_op(1, 1, {static_cast<float>(s / static_cast<double>(a.numel()))}, {a},
                 [inv_n](detail::Node& self) {
                   auto& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   p.ensure_grad();
                   const float g = self.grad[0] * inv_n;
                   for (auto& x : p.grad) x += g;
                 });
}

// ---------------------------------------------------------------------------
// softmax / losses
// ---------------------------------------------------------------------------

inline void softmax_rows_inplace(std::vector<float>& v, int rows, int cols) {
  for (int t = 0; t < rows; ++t) {
    float* row = v.data() + static_cast<size_t>(t) * cols;
    float mx = row[0];
    for (int c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (int c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - mx);
      z += row[c];
    }
    const float inv = static_cast<float>(1.0 / z);
    for (int c = 0; c < cols; ++c) row[c] *= inv;
  }
}

inline Tensor softmax_rows(const Tensor& a) {
  std::vector<float> v(a.data());
  softmax_rows_inplace(v, a.rows(), a.cols());
  return make_op(a.rows(), a.cols(), std::move(v), {a}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    const int C = self.cols;
    for (int t = 0; t < self.rows; ++t) {
      const float* y = self.value.data() + static_cast<size_t>(t) * C;
      const float* g = self.grad.data() + static_cast<size_t>(t) * C;
      double dot = 0.0;
      for (int c = 0; c < C; ++c) dot += static_cast<double>(g[c]) * y[c];
      float* pg = p.grad.data() + static_cast<size_t>(t) * C;
      for (int c = 0; c < C; ++c) pg[c] += y[c] * (g[c] - static_cast<float>(dot));
    }
  });
}

inline Tensor log_softmax_rows(const Tensor& a) {
  std::vector<float> v(a.data());
  const int C = a.cols();
  for (int t = 0; t < a.rows(); ++t) {
    float* row = v.data() + static_cast<size_t>(t) * C;
    float mx = row[0];
    for (int c = 1; c < C; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (int c = 0; c < C; ++c) z += std::exp(static_cast<double>(row[c]) - mx);
    const float lz = static_cast<float>(std::log(z)) + mx;
    for (int c = 0; c < C; ++c) row[c] -= lz;
  }
  return make_op(a.rows(), a.cols(), std::move(v), {a}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    const int C = self.cols;
    for (int t = 0; t < self.rows; ++t) {
      const float* y = self.value.data() + static_cast<size_t>(t) * C;
      const float* g = self.grad.data() + static_cast<size_t>(t) * C;
      double gs = 0.0;
      for (int c = 0; c < C; ++c) gs += g[c];
      float* pg = p.grad.data() + static_cast<size_t>(t) * C;
      for (int c = 0; c < C; ++c) pg[c] += g[c] - static_cast<float>(gs) * std::exp(y[c]);
    }
  });
}

// Masked mean cross-entropy over rows; targets[t] is the class id of row t,
// mask[t] in {0,1}. Accumulates in double so tiny oracles match to 1e-6.
inline Tensor cross_entropy_rows(const Tensor& logits, std::vector<int> targets,
                                 std::vector<float> mask) {
  const int T = logits.rows(), V = logits.cols();
  check(static_cast<int>(targets.size()) == T, "cross_entropy_rows: target length");
  check(static_cast<int>(mask.size()) == T, "cross_entropy_rows: mask length");
  double msum = 0.0;
  for (float m : mask) msum += m;
  check(msum > 0.0, "cross_entropy_rows: empty mask");
  double loss = 0.0;
  for (int t = 0; t < T; ++t) {
    if (mask[t] == 0.0f) continue;
    check(targets[t] >= 0 && targets[t] < V, "cross_entropy_rows: target out of range");
    const float* row = logits.data().data() + static_cast<size_t>(t) * V;
    float mx = row[0];
    for (int c = 1; c < V; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (int c = 0; c < V; ++c) z += std::exp(static_cast<double>(row[c]) - mx);
    loss += mask[t] * (std::log(z) + mx - row[targets[t]]);
  }
  const float inv_m = static_cast<float>(1.0 / msum);
  return make_op(1, 1, {static_cast<float>(loss / msum)}, {logits},
                 [targets = std::move(targets), mask = std::move(mask), inv_m](detail::Node& self) {
                   auto& p = *self.parents[0];
                   if (!p.requires_grad) return;
                   p.ensure_grad();
                   const int V = p.cols;
                   const float g = self.grad[0] * inv_m;
                   std::vector<float> sm(p.value);
                   softmax_rows_inplace(sm, p.rows, p.cols);
                   for (int t = 0; t < p.rows; ++t) {
                     if (mask[t] == 0.0f) continue;
                     float* pg = p.grad.data() + static_cast<size_t>(t) * V;
                     const float* s = sm.data() + static_cast<size_t>(t) * V;
                     for (int c = 0; c < V; ++c) pg[c] += g * mask[t] * s[c];
                     pg[targets[t]] -= g * mask[t];
                   }
                 });
}

// ---------------------------------------------------------------------------
// layer norm
// ---------------------------------------------------------------------------

inline Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                              float eps = 1e-5f) {
  const int T = x.rows(), C = x.cols();
  check(gamma.rows() == 1 && gamma.cols() == C, "layer_norm_rows: gamma shape");
  check(beta.rows() == 1 && beta.cols() == C, "layer_norm_rows: beta shape");
  std::vector<float> v(static_cast<size_t>(T) * C);
  std::vector<float> inv_std(T);
  for (int t = 0; t < T; ++t) {
    const float* row = x.data().data() + static_cast<size_t>(t) * C;
    double mu = 0.0;
    for (int c = 0; c < C; ++c) mu += row[c];
    mu /= C;
    double var = 0.0;
    for (int c = 0; c < C; ++c) {
      double d = row[c] - mu;
      var += d * d;
    }
    var /= C;
    const float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
    inv_std[t] = inv;
    float* out = v.data() + static_cast<size_t>(t) * C;
    for (int c = 0; c < C; ++c)
      out[c] = (static_cast<float>(row[c] - mu)) * inv * gamma.data()[c] + beta.data()[c];
  }
  return make_op(T, C, std::move(v), {x, gamma, beta},
                 [inv_std = std::move(inv_std), eps](detail::Node& self) {
                   auto& px = *self.parents[0];
                   auto& pg = *self.parents[1];
                   auto& pb = *self.parents[2];
                   const int T = self.rows, C = self.cols;
                   (void)eps;
                   for (int t = 0; t < T; ++t) {
                     const float* xr = px.value.data() + static_cast<size_t>(t) * C;
                     const float* dy = self.grad.data() + static_cast<size_t>(t) * C;
                     double mu = 0.0;
                     for (int c = 0; c < C; ++c) mu += xr[c];
                     mu /= C;
                     const float inv = inv_std[t];
                     // xhat and the two row means needed by the dx formula
                     double m1 = 0.0, m2 = 0.0;
                     std::vector<float> xh(C), dxh(C);
                     for (int c = 0; c < C; ++c) {
                       xh[c] = static_cast<float>(xr[c] - mu) * inv;
                       dxh[c] = dy[c] * pg.value[c];
                       m1 += dxh[c];
                       m2 += static_cast<double>(dxh[c]) * xh[c];
                     }
                     m1 /= C;
                     m2 /= C;
                     if (px.requires_grad) {
                       px.ensure_grad();
                       float* gx = px.grad.data() + static_cast<size_t>(t) * C;
                       for (int c = 0; c < C; ++c)
                         gx[c] += inv * (dxh[c] - static_cast<float>(m1) -
                                         xh[c] * static_cast<float>(m2));
                     }
                     if (pg.requires_grad) {
                       pg.ensure_grad();
                       for (int c = 0; c < C; ++c) pg.grad[c] += dy[c] * xh[c];
                     }
                     if (pb.requires_grad) {
                       pb.ensure_grad();
                       for (int c = 0; c < C; ++c) pb.grad[c] += dy[c];
                     }
                   }
                 });
}

// ---------------------------------------------------------------------------
// convolutions (time-major layout: x is [T, C])
// ---------------------------------------------------------------------------

namespace detail_ops {

inline void im2col(const float* x, int T, int C, int K, int stride, int pad, int t_out,
                   float* m) {
  for (int t = 0; t < t_out; ++t) {
    float* row = m + static_cast<size_t>(t) * K * C;
    for (int j = 0; j < K; ++j) {
      const int src = t * stride - pad + j;
      if (src >= 0 && src < T) {
        std::copy_n(x + static_cast<size_t>(src) * C, C, row + static_cast<size_t>(j) * C);
      } else {
        std::fill_n(row + static_cast<size_t>(j) * C, C, 0.0f);
      }
    }
  }
}

inline void col2im_add(const float* m, int T, int C, int K, int stride, int pad, int t_out,
                       float* x) {
  for (int t = 0; t < t_out; ++t) {
    const float* row = m + static_cast<size_t>(t) * K * C;
    for (int j = 0; j < K; ++j) {
      const int dst = t * stride - pad + j;
      if (dst < 0 || dst >= T) continue;
      float* xp = x + static_cast<size_t>(dst) * C;
      const float* rp = row + static_cast<size_t>(j) * C;
      for (int c = 0; c < C; ++c) xp[c] += rp[c];
    }
  }
}

}  // namespace detail_ops

// x [T, Cin], w [K*Cin, Cout] (tap-major rows: row j*Cin+ci), bias [1, Cout]
inline Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, int kernel,
                     int stride, int pad) {
  const int T = x.rows(), cin = x.cols();
  check(w.rows() == kernel * cin, "conv1d: weight rows != K*Cin");
  const int cout = w.cols();
  check(T + 2 * pad >= kernel, "conv1d: input shorter than kernel");
  const int t_out = (T + 2 * pad - kernel) / stride + 1;

  std::vector<float> cols(static_cast<size_t>(t_out) * kernel * cin);
  detail_ops::im2col(x.data().data(), T, cin, kernel, stride, pad, t_out, cols.data());
  std::vector<float> v(static_cast<size_t>(t_out) * cout);
  MatMap(v.data(), t_out, cout).noalias() =
      ConstMatMap(cols.data(), t_out, kernel * cin) * as_mat(w);
  if (bias.defined()) {
    check(bias.rows() == 1 && bias.cols() == cout, "conv1d: bias shape");
    for (int t = 0; t < t_out; ++t)
      for (int c = 0; c < cout; ++c) v[static_cast<size_t>(t) * cout + c] += bias.data()[c];
  }

  std::vector<Tensor> parents = {x, w};
  if (bias.defined()) parents.push_back(bias);
  return make_op(t_out, cout, std::move(v), parents,
                 [kernel, stride, pad](detail::Node& self) {
                   auto& px = *self.parents[0];
                   auto& pw = *self.parents[1];
                   const int T = px.rows, cin = px.cols;
                   const int cout = self.cols, t_out = self.rows;
                   ConstMatMap g(self.grad.data(), t_out, cout);
                   if (pw.requires_grad || px.requires_grad) {
                     if (pw.requires_grad) {
                       std::vector<float> cols(static_cast<size_t>(t_out) * kernel * cin);
                       detail_ops::im2col(px.value.data(), T, cin, kernel, stride, pad, t_out,
                                          cols.data());
                       as_grad(pw).noalias() +=
                           ConstMatMap(cols.data(), t_out, kernel * cin).transpose() * g;
                     }
                     if (px.requires_grad) {
                       std::vector<float> dcols(static_cast<size_t>(t_out) * kernel * cin);
                       MatMap(dcols.data(), t_out, kernel * cin).noalias() =
                           g * as_mat(pw).transpose();
                       px.ensure_grad();
                       detail_ops::col2im_add(dcols.data(), T, cin, kernel, stride, pad, t_out,
                                              px.grad.data());
                     }
                   }
                   if (self.parents.size() > 2) {
                     auto& pb = *self.parents[2];
                     if (pb.requires_grad) {
                       pb.ensure_grad();
                       for (int t = 0; t < t_out; ++t)
                         for (int c = 0; c < cout; ++c)
                           pb.grad[c] += self.grad[static_cast<size_t>(t) * cout + c];
                     }
                   }
                 });
}

// transposed conv: x [T, Cin], w [Cin, K*Cout] (tap-major cols: col j*Cout+co)
// out length (T-1)*stride + kernel - 2*pad
inline Tensor conv_tr1d(const Tensor& x, const Tensor& w, const Tensor& bias, int kernel,
                        int stride, int pad) {
  const int T = x.rows(), cin = x.cols();
  check(w.rows() == cin, "conv_tr1d: weight rows != Cin");
  check(w.cols() % kernel == 0, "conv_tr1d: weight cols not multiple of kernel");
  const int cout = w.cols() / kernel;
  const int t_out = (T - 1) * stride + kernel - 2 * pad;
  check(t_out > 0, "conv_tr1d: empty output");

  std::vector<float> cols(static_cast<size_t>(T) * kernel * cout);
  MatMap(cols.data(), T, kernel * cout).noalias() = as_mat(x) * as_mat(w);
  std::vector<float> v(static_cast<size_t>(t_out) * cout, 0.0f);
  detail_ops::col2im_add(cols.data(), t_out, cout, kernel, stride, pad, T, v.data());
  if (bias.defined()) {
    check(bias.rows() == 1 && bias.cols() == cout, "conv_tr1d: bias shape");
    for (int t = 0; t < t_out; ++t)
      for (int c = 0; c < cout; ++c) v[static_cast<size_t>(t) * cout + c] += bias.data()[c];
  }

  std::vector<Tensor> parents = {x, w};
  if (bias.defined()) parents.push_back(bias);
  return make_op(t_out, cout, std::move(v), parents,
                 [kernel, stride, pad](detail::Node& self) {
                   auto& px = *self.parents[0];
                   auto& pw = *self.parents[1];
                   const int T = px.rows;
                   const int cout = self.cols, t_out = self.rows;
                   // dcols[t, j*cout+co] = dY[t*stride - pad + j, co]
                   std::vector<float> dcols(static_cast<size_t>(T) * kernel * cout);
                   detail_ops::im2col(self.grad.data(), t_out, cout, kernel, stride, pad, T,
                                      dcols.data());
                   ConstMatMap dc(dcols.data(), T, kernel * cout);
                   if (px.requires_grad) as_grad(px).noalias() += dc * as_mat(pw).transpose();
                   if (pw.requires_grad) as_grad(pw).noalias() += as_mat(px).transpose() * dc;
                   if (self.parents.size() > 2) {
                     auto& pb = *self.parents[2];
                     if (pb.requires_grad) {
                       pb.ensure_grad();
                       for (int t = 0; t < t_out; ++t)
                         for (int c = 0; c < cout; ++c)
                           pb.grad[c] += self.grad[static_cast<size_t>(t) * cout + c];
                     }
                   }
                 });
}

// per-channel conv, stride 1: x [T, C], w [K, C], bias [1, C]
inline Tensor depthwise_conv1d(const Tensor& x, const Tensor& w, const Tensor& bias, int pad) {
  const int T = x.rows(), C = x.cols();
  const int K = w.rows();
  check(w.cols() == C, "depthwise_conv1d: channel mismatch");
  const int t_out = T + 2 * pad - K + 1;
  check(t_out > 0, "depthwise_conv1d: empty output");
  std::vector<float> v(static_cast<size_t>(t_out) * C, 0.0f);
  for (int t = 0; t < t_out; ++t)
    for (int j = 0; j < K; ++j) {
      const int src = t - pad + j;
      if (src < 0 || src >= T) continue;
      const float* xr = x.data().data() + static_cast<size_t>(src) * C;
      const float* wr = w.data().data() + static_cast<size_t>(j) * C;
      float* out = v.data() + static_cast<size_t>(t) * C;
      for (int c = 0; c < C; ++c) out[c] += xr[c] * wr[c];
    }
  if (bias.defined()) {
    for (int t = 0; t < t_out; ++t)
      for (int c = 0; c < C; ++c) v[static_cast<size_t>(t) * C + c] += bias.data()[c];
  }
  std::vector<Tensor> parents = {x, w};
  if (bias.defined()) parents.push_back(bias);
  return make_op(t_out, C, std::move(v), parents, [pad](detail::Node& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    const int T = px.rows, C = px.cols, K = pw.rows, t_out = self.rows;
    if (px.requires_grad) px.ensure_grad();
    if (pw.requires_grad) pw.ensure_grad();
    for (int t = 0; t < t_out; ++t)
      for (int j = 0; j < K; ++j) {
        const int src = t - pad + j;
        if (src < 0 || src >= T) continue;
        const float* g = self.grad.data() + static_cast<size_t>(t) * C;
        if (px.requires_grad) {
          float* gx = px.grad.data() + static_cast<size_t>(src) * C;
          const float* wr = pw.value.data() + static_cast<size_t>(j) * C;
          for (int c = 0; c < C; ++c) gx[c] += g[c] * wr[c];
        }
        if (pw.requires_grad) {
          float* gw = pw.grad.data() + static_cast<size_t>(j) * C;
          const float* xr = px.value.data() + static_cast<size_t>(src) * C;
          for (int c = 0; c < C; ++c) gw[c] += g[c] * xr[c];
        }
      }
    if (self.parents.size() > 2) {
      auto& pb = *self.parents[2];
      if (pb.requires_grad) {
        pb.ensure_grad();
        for (int t = 0; t < t_out; ++t)
          for (int c = 0; c < C; ++c) pb.grad[c] += self.grad[static_cast<size_t>(t) * C + c];
      }
    }
  });
}

// non-padded average pooling over rows
inline Tensor avg_pool_rows(const Tensor& x, int kernel, int stride) {
  const int T = x.rows(), C = x.cols();
  check(T >= kernel, "avg_pool_rows: input shorter than kernel");
  const int t_out = (T - kernel) / stride + 1;
  std::vector<float> v(static_cast<size_t>(t_out) * C, 0.0f);
  const float inv_k = 1.0f / kernel;
  for (int t = 0; t < t_out; ++t) {
    float* out = v.data() + static_cast<size_t>(t) * C;
    for (int j = 0; j < kernel; ++j) {
      const float* xr = x.data().data() + static_cast<size_t>(t * stride + j) * C;
      for (int c = 0; c < C; ++c) out[c] += xr[c] * inv_k;
    }
  }
  return make_op(t_out, C, std::move(v), {x}, [kernel, stride](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    const int C = self.cols;
    const float inv_k = 1.0f / kernel;
    for (int t = 0; t < self.rows; ++t)
      for (int j = 0; j < kernel; ++j) {
        float* gx = p.grad.data() + static_cast<size_t>(t * stride + j) * C;
        const float* g = self.grad.data() + static_cast<size_t>(t) * C;
        for (int c = 0; c < C; ++c) gx[c] += g[c] * inv_k;
      }
  });
}

// ---------------------------------------------------------------------------
// quantizer support
// ---------------------------------------------------------------------------

// Forward emits q_values; backward passes the incoming gradient to x
// unchanged, element-wise.
inline Tensor straight_through(const Tensor& x, std::vector<float> q_values) {
  check(q_values.size() == x.data().size(), "straight_through: shape mismatch");
  return make_op(x.rows(), x.cols(), std::move(q_values), {x}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    if (!p.requires_grad) return;
    p.ensure_grad();
    for (size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
}

inline Tensor constant(std::vector<float> data, int rows, int cols) {
  return Tensor::from(std::move(data), rows, cols, false);
}

}  // namespace tts
