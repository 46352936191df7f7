// Copyright 2026 The tokentts Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

// Thin layer wrappers that own parameters. Modules expose their parameters
// through collect_params(prefix, out); everything else is free functions from
// ops.hpp.

#include <string>
#include <vector>

#include "tokentts/ops.hpp"

namespace tts {

struct ParamRef {
  std::string name;
  Tensor tensor;
};

using ParamList = std::vector<ParamRef>;

inline void set_requires_grad(ParamList& params, bool rg) {
  for (auto& p : params) p.tensor.set_requires_grad(rg);
}

inline void zero_grads(ParamList& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

// order-sensitive hash over names and raw float bytes
inline uint64_t params_checksum(const ParamList& params) {
  uint64_t h = 1469598103934665603ull;
  for (const auto& p : params) {
    h = fnv1a64(p.name.data(), p.name.size(), h);
    h = fnv1a64(p.tensor.data().data(), p.tensor.data().size() * sizeof(float), h);
  }
  return h;
}

inline Tensor init_uniform(Rng& rng, int rows, int cols, float bound) {
  std::vector<float> v(static_cast<size_t>(rows) * cols);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from(std::move(v), rows, cols, true);
}

struct Linear {
  Tensor w;  // [in, out]
  Tensor b;  // [1, out]

  Linear() = default;
  Linear(int in, int out, Rng& rng) {
    const float bound = 1.0f / std::sqrt(static_cast<float>(in));
    w = init_uniform(rng, in, out, bound);
    b = init_uniform(rng, 1, out, bound);
  }

  Tensor forward(const Tensor& x) const { return add_row_bias(matmul(x, w), b); }

  void collect_params(const std::string& prefix, ParamList& out) {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
  }
};

struct Conv1d {
  Tensor w;  // [K*Cin, Cout]
  Tensor b;  // [1, Cout]
  int kernel = 1, stride = 1, pad = 0;

  Conv1d() = default;
  Conv1d(int cin, int cout, int kernel, int stride, int pad, Rng& rng)
      : kernel(kernel), stride(stride), pad(pad) {
    const float bound = 1.0f / std::sqrt(static_cast<float>(kernel * cin));
    w = init_uniform(rng, kernel * cin, cout, bound);
    b = init_uniform(rng, 1, cout, bound);
  }

  Tensor forward(const Tensor& x) const { return conv1d(x, w, b, kernel, stride, pad); }

  void collect_params(const std::string& prefix, ParamList& out) {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
  }
};

struct ConvTr1d {
  Tensor w;  // [Cin, K*Cout]
  Tensor b;  // [1, Cout]
  int kernel = 1, stride = 1, pad = 0;

  ConvTr1d() = default;
  ConvTr1d(int cin, int cout, int kernel, int stride, int pad, Rng& rng)
      : kernel(kernel), stride(stride), pad(pad) {
    const float bound = 1.0f / std::sqrt(static_cast<float>(cin) * kernel / stride);
    w = init_uniform(rng, cin, kernel * cout, bound);
    b = init_uniform(rng, 1, cout, bound);
  }

  Tensor forward(const Tensor& x) const { return conv_tr1d(x, w, b, kernel, stride, pad); }

  void collect_params(const std::string& prefix, ParamList& out) {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
  }
};

struct DepthwiseConv1d {
  Tensor w;  // [K, C]
  Tensor b;  // [1, C]
  int pad = 0;

  DepthwiseConv1d() = default;
  DepthwiseConv1d(int channels, int kernel, int pad, Rng& rng) : pad(pad) {
    const float bound = 1.0f / std::sqrt(static_cast<float>(kernel));
    w = init_uniform(rng, kernel, channels, bound);
    b = init_uniform(rng, 1, channels, bound);
  }

  Tensor forward(const Tensor& x) const { return depthwise_conv1d(x, w, b, pad); }

  void collect_params(const std::string& prefix, ParamList& out) {
    out.push_back({prefix + ".w", w});
    out.push_back({prefix + ".b", b});
  }
};

struct LayerNorm {
  Tensor gamma;  // [1, C]
  Tensor beta;   // [1, C]

  LayerNorm() = default;
  explicit LayerNorm(int channels) {
    gamma = Tensor::from(std::vector<float>(channels, 1.0f), 1, channels, true);
    beta = Tensor::zeros(1, channels, true);
  }

  Tensor forward(const Tensor& x) const { return layer_norm_rows(x, gamma, beta); }

  void collect_params(const std::string& prefix, ParamList& out) {
    out.push_back({prefix + ".gamma", gamma});
    out.push_back({prefix + ".beta", beta});
  }
};

struct Embedding {
  Tensor table;  // [V, d]

  Embedding() = default;
  Embedding(int vocab, int dim, Rng& rng) { table = init_uniform(rng, vocab, dim, 0.1f); }

  Tensor forward(const std::vector<int>& ids) const { return gather_rows(table, ids); }

  void collect_params(const std::string& prefix, ParamList& out) {
    out.push_back({prefix + ".table", table});
  }
};

}  // namespace tts
