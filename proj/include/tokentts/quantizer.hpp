// Copyright 2026 The tokentts Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

// Single vector quantizer and residual vector quantizer with straight-through
// gradients, EMA codebook learning, dead-code revival, and expected-codeword
// decoding.

#include <algorithm>
#include <cmath>
#include <vector>

#include "tokentts/ops.hpp"

namespace tts {

constexpr float kCommitBeta = 0.25f;
constexpr float kEmaDecay = 0.99f;
constexpr int kReviveHorizon = 100;  // updates without assignment before revival
constexpr float kEmaEps = 1e-5f;

struct Codebook {
  int K = 0;
  int d = 0;
  std::vector<float> entries;          // K x d
  std::vector<float> usage_counts;     // K, EMA; initialized uniform
  std::vector<float> ema_sums;         // K x d
  std::vector<int> steps_since_use;    // K
  // Residual layers keep entry 0 fixed at the zero vector: the nearest search
  // then can never grow the residual, which makes quantization error
  // non-increasing in the active layer count on any batch.
  bool pinned_zero = false;

  static Codebook random_init(int K, int d, Rng& rng, bool pinned_zero = false,
                              float scale = -1.0f) {
    check(K >= 2 && d >= 1, "Codebook: need K >= 2 and d >= 1");
    Codebook cb;
    cb.K = K;
    cb.d = d;
    cb.pinned_zero = pinned_zero;
    if (scale < 0.0f) scale = 1.0f / std::sqrt(static_cast<float>(d));
    cb.entries.resize(static_cast<size_t>(K) * d);
    for (auto& v : cb.entries) v = scale * rng.normal();
    if (pinned_zero) std::fill_n(cb.entries.begin(), d, 0.0f);
    cb.usage_counts.assign(K, 1.0f);
    cb.ema_sums = cb.entries;
    cb.steps_since_use.assign(K, 0);
    return cb;
  }

  // random-sample init: entries drawn (with replacement) from data rows
  void init_from_samples(const float* data, int n, Rng& rng) {
    check(n >= 1, "Codebook: empty init batch");
    for (int k = pinned_zero ? 1 : 0; k < K; ++k) {
      const int row = rng.uniform_int(n);
      std::copy_n(data + static_cast<size_t>(row) * d, d,
                  entries.begin() + static_cast<size_t>(k) * d);
    }
    usage_counts.assign(K, 1.0f);
    ema_sums = entries;
    std::fill(steps_since_use.begin(), steps_since_use.end(), 0);
  }

  void validate() const {
    check(K >= 2 && d >= 1, "Codebook: need K >= 2 and d >= 1");
    check(all_finite(entries), "Codebook: non-finite entry");
    for (float c : usage_counts) check(c >= 0.0f, "Codebook: negative usage count");
  }

  // exp(entropy of usage); equals K for uniform usage, at most K always
  double perplexity() const {
    double total = 0.0;
    for (float c : usage_counts) total += c;
    if (total <= 0.0) return 1.0;
    double h = 0.0;
    for (float c : usage_counts) {
      if (c <= 0.0f) continue;
      const double p = c / total;
      h -= p * std::log(p);
    }
    return std::exp(h);
  }
};

struct RVQState {
  std::vector<Codebook> layers;

  int n_q() const { return static_cast<int>(layers.size()); }
  int dim() const { return layers.empty() ? 0 : layers[0].d; }

  static RVQState random_init(int n_q, int K, int d, Rng& rng) {
    check(n_q >= 1, "RVQState: need n_q >= 1");
    RVQState st;
    for (int i = 0; i < n_q; ++i)
      st.layers.push_back(Codebook::random_init(K, d, rng, /*pinned_zero=*/true));
    return st;
  }

  void validate() const {
    check(!layers.empty(), "RVQState: no layers");
    for (const auto& cb : layers) {
      cb.validate();
      check(cb.d == layers[0].d, "RVQState: layers disagree on dimension");
    }
  }
};

// Per-frame categorical distributions over each RVQ layer's codebook.
struct RVQDistribution {
  int T = 0;
  int n_q = 0;
  int K = 0;
  std::vector<float> probs;  // [T][n_q][K]

  float at(int t, int q, int k) const {
    return probs[(static_cast<size_t>(t) * n_q + q) * K + k];
  }

  void validate(float tol = 1e-5f) const {
    check(probs.size() == static_cast<size_t>(T) * n_q * K, "RVQDistribution: size mismatch");
    for (int t = 0; t < T; ++t)
      for (int q = 0; q < n_q; ++q) {
        double sum = 0.0;
        for (int k = 0; k < K; ++k) {
          const float p = at(t, q, k);
          check(p >= 0.0f, "RVQDistribution: negative probability");
          sum += p;
        }
        check(std::fabs(sum - 1.0) <= tol, "RVQDistribution: slice not normalized");
      }
  }
};

struct QuantizeResult {
  std::vector<std::vector<int>> indices;  // [layers][T]
  std::vector<float> quantized;           // T x d
  float commit_loss = 0.0f;
};

struct QuantizeResultT {
  std::vector<std::vector<int>> indices;
  Tensor quantized;  // straight-through node, value = selected codeword sums
  Tensor commit;     // scalar
};

// ---------------------------------------------------------------------------
// nearest-neighbor search
// ---------------------------------------------------------------------------

// Euclidean nearest codeword per row; ties broken toward the lowest index.
inline std::vector<int> nearest_indices(const float* x, int T, const Codebook& cb) {
  std::vector<int> out(T);
  ConstMatMap X(x, T, cb.d);
  ConstMatMap C(cb.entries.data(), cb.K, cb.d);
  RowMat dots = X * C.transpose();  // [T, K]
  Eigen::VectorXf c2(cb.K);
  for (int k = 0; k < cb.K; ++k) c2[k] = C.row(k).squaredNorm();
  for (int t = 0; t < T; ++t) {
    int best = 0;
    float best_d = c2[0] - 2.0f * dots(t, 0);
    for (int k = 1; k < cb.K; ++k) {
      const float dk = c2[k] - 2.0f * dots(t, k);
      if (dk < best_d) {
        best_d = dk;
        best = k;
      }
    }
    out[t] = best;
  }
  return out;
}

inline void lookup_rows(const Codebook& cb, const std::vector<int>& idx, float* out) {
  for (size_t t = 0; t < idx.size(); ++t) {
    check(idx[t] >= 0 && idx[t] < cb.K, "codebook lookup: index out of range");
    std::copy_n(cb.entries.begin() + static_cast<size_t>(idx[t]) * cb.d, cb.d,
                out + t * static_cast<size_t>(cb.d));
  }
}

// ---------------------------------------------------------------------------
// EMA codebook update with dead-code revival
// ---------------------------------------------------------------------------

inline void ema_update(Codebook& cb, const float* vectors, int T, const std::vector<int>& indices,
                       float decay, Rng& rng, int revive_horizon = kReviveHorizon) {
  check(decay > 0.0f && decay < 1.0f, "ema_update: decay must be in (0,1)");
  check(static_cast<int>(indices.size()) == T, "ema_update: index count mismatch");
  std::vector<float> batch_count(cb.K, 0.0f);
  std::vector<float> batch_sum(static_cast<size_t>(cb.K) * cb.d, 0.0f);
  for (int t = 0; t < T; ++t) {
    const int k = indices[t];
    batch_count[k] += 1.0f;
    const float* row = vectors + static_cast<size_t>(t) * cb.d;
    float* acc = batch_sum.data() + static_cast<size_t>(k) * cb.d;
    for (int c = 0; c < cb.d; ++c) acc[c] += row[c];
  }
  for (int k = 0; k < cb.K; ++k) {
    cb.usage_counts[k] = decay * cb.usage_counts[k] + (1.0f - decay) * batch_count[k];
    if (k == 0 && cb.pinned_zero) continue;  // entry 0 stays the zero vector
    float* sums = cb.ema_sums.data() + static_cast<size_t>(k) * cb.d;
    const float* bs = batch_sum.data() + static_cast<size_t>(k) * cb.d;
    for (int c = 0; c < cb.d; ++c) sums[c] = decay * sums[c] + (1.0f - decay) * bs[c];
    if (batch_count[k] > 0.0f) {
      // entries are refreshed only for codes touched this batch, so idle
      // entries stay bitwise unchanged
      float* e = cb.entries.data() + static_cast<size_t>(k) * cb.d;
      const float inv = 1.0f / (cb.usage_counts[k] + kEmaEps);
      for (int c = 0; c < cb.d; ++c) e[c] = sums[c] * inv;
      cb.steps_since_use[k] = 0;
    } else {
      ++cb.steps_since_use[k];
      if (cb.steps_since_use[k] >= revive_horizon && T > 0) {
        const float* row = vectors + static_cast<size_t>(rng.uniform_int(T)) * cb.d;
        float* e = cb.entries.data() + static_cast<size_t>(k) * cb.d;
        std::copy_n(row, cb.d, e);
        std::copy_n(row, cb.d, sums);
        cb.usage_counts[k] = 1.0f;
        cb.steps_since_use[k] = 0;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// single-layer VQ
// ---------------------------------------------------------------------------

inline QuantizeResult vq_step(const std::vector<float>& x, int T, const Codebook& cb,
                              float beta = kCommitBeta) {
  check(static_cast<int>(x.size()) == T * cb.d, "vq_step: dimension mismatch");
  QuantizeResult r;
  r.indices.push_back(nearest_indices(x.data(), T, cb));
  r.quantized.resize(x.size());
  lookup_rows(cb, r.indices[0], r.quantized.data());
  double mse = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double dlt = static_cast<double>(x[i]) - r.quantized[i];
    mse += dlt * dlt;
  }
  r.commit_loss = static_cast<float>(beta * mse / static_cast<double>(x.size()));
  return r;
}

// Training-mode step: straight-through output, commitment term against the
// gradient-detached codewords, optional EMA update.
inline QuantizeResultT vq_step_train(const Tensor& x, Codebook& cb, Rng& rng,
                                     bool update_codebook, float beta = kCommitBeta,
                                     float decay = kEmaDecay) {
  check(x.cols() == cb.d, "vq_step_train: dimension mismatch");
  const int T = x.rows();
  QuantizeResultT r;
  r.indices.push_back(nearest_indices(x.data().data(), T, cb));
  std::vector<float> q(x.data().size());
  lookup_rows(cb, r.indices[0], q.data());
  if (update_codebook) ema_update(cb, x.data().data(), T, r.indices[0], decay, rng);
  r.commit = scale(mean_all(square(sub_const(x, q))), beta);
  r.quantized = straight_through(x, std::move(q));
  return r;
}

// ---------------------------------------------------------------------------
// residual VQ
// ---------------------------------------------------------------------------

inline QuantizeResult rvq_encode(const std::vector<float>& x, int T, const RVQState& st,
                                 int n_active, float beta = kCommitBeta) {
  st.validate();
  check(n_active >= 1 && n_active <= st.n_q(), "rvq_encode: n_active out of range");
  const int d = st.dim();
  check(static_cast<int>(x.size()) == T * d, "rvq_encode: dimension mismatch");
  QuantizeResult r;
  r.quantized.assign(x.size(), 0.0f);
  std::vector<float> residual(x);
  std::vector<float> q(x.size());
  double commit = 0.0;
  for (int l = 0; l < n_active; ++l) {
    const Codebook& cb = st.layers[l];
    auto idx = nearest_indices(residual.data(), T, cb);
    lookup_rows(cb, idx, q.data());
    double mse = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
      const double dlt = static_cast<double>(residual[i]) - q[i];
      mse += dlt * dlt;
      residual[i] -= q[i];
      r.quantized[i] += q[i];
    }
    commit += beta * mse / static_cast<double>(x.size());
    r.indices.push_back(std::move(idx));
  }
  r.commit_loss = static_cast<float>(commit);
  return r;
}

inline QuantizeResultT rvq_encode_train(const Tensor& x, RVQState& st, Rng& rng,
                                        bool update_codebooks, int n_active = -1,
                                        float beta = kCommitBeta, float decay = kEmaDecay) {
  st.validate();
  if (n_active < 0) n_active = st.n_q();
  check(n_active >= 1 && n_active <= st.n_q(), "rvq_encode_train: n_active out of range");
  check(x.cols() == st.dim(), "rvq_encode_train: dimension mismatch");
  const int T = x.rows();
  QuantizeResultT r;
  std::vector<float> total_q(x.data().size(), 0.0f);
  Tensor residual = x;
  Tensor commit;
  std::vector<float> q(x.data().size());
  for (int l = 0; l < n_active; ++l) {
    Codebook& cb = st.layers[l];
    auto idx = nearest_indices(residual.data().data(), T, cb);
    lookup_rows(cb, idx, q.data());
    if (update_codebooks) ema_update(cb, residual.data().data(), T, idx, decay, rng);
    Tensor layer_commit = scale(mean_all(square(sub_const(residual, q))), beta);
    commit = commit.defined() ? add(commit, layer_commit) : layer_commit;
    residual = sub_const(residual, q);
    for (size_t i = 0; i < q.size(); ++i) total_q[i] += q[i];
    r.indices.push_back(std::move(idx));
  }
  r.commit = commit;
  r.quantized = straight_through(x, std::move(total_q));
  return r;
}

inline std::vector<float> rvq_decode(const std::vector<std::vector<int>>& indices,
                                     const RVQState& st) {
  st.validate();
  check(!indices.empty() && static_cast<int>(indices.size()) <= st.n_q(),
        "rvq_decode: layer count out of range");
  const int T = static_cast<int>(indices[0].size());
  const int d = st.dim();
  std::vector<float> out(static_cast<size_t>(T) * d, 0.0f);
  std::vector<float> q(out.size());
  for (size_t l = 0; l < indices.size(); ++l) {
    check(static_cast<int>(indices[l].size()) == T, "rvq_decode: ragged index grid");
    lookup_rows(st.layers[l], indices[l], q.data());
    for (size_t i = 0; i < out.size(); ++i) out[i] += q[i];
  }
  return out;
}

// out[t] = sum_layers sum_k p[t][l][k] * codeword[l][k]
inline std::vector<float> rvq_expected_decode(const RVQDistribution& dist, const RVQState& st) {
  st.validate();
  dist.validate();
  check(dist.n_q == st.n_q(), "rvq_expected_decode: layer count mismatch");
  check(dist.K == st.layers[0].K, "rvq_expected_decode: codebook size mismatch");
  const int d = st.dim();
  std::vector<float> out(static_cast<size_t>(dist.T) * d, 0.0f);
  MatMap O(out.data(), dist.T, d);
  std::vector<float> layer_probs(static_cast<size_t>(dist.T) * dist.K);
  for (int l = 0; l < dist.n_q; ++l) {
    for (int t = 0; t < dist.T; ++t)
      for (int k = 0; k < dist.K; ++k)
        layer_probs[static_cast<size_t>(t) * dist.K + k] = dist.at(t, l, k);
    ConstMatMap P(layer_probs.data(), dist.T, dist.K);
    ConstMatMap C(st.layers[l].entries.data(), dist.K, d);
    O.noalias() += P * C;
  }
  return out;
}

// differentiable variant: per-layer probability tensors [T, K]
inline Tensor rvq_expected_decode_t(const std::vector<Tensor>& layer_probs, const RVQState& st) {
  st.validate();
  check(static_cast<int>(layer_probs.size()) == st.n_q(),
        "rvq_expected_decode_t: layer count mismatch");
  Tensor out;
  for (int l = 0; l < st.n_q(); ++l) {
    const Codebook& cb = st.layers[l];
    check(layer_probs[l].cols() == cb.K, "rvq_expected_decode_t: codebook size mismatch");
    Tensor contrib = matmul(layer_probs[l], constant(cb.entries, cb.K, cb.d));
    out = out.defined() ? add(out, contrib) : contrib;
  }
  return out;
}

}  // namespace tts
