#pragma once

// Shared helpers for the unit tests: finite-difference gradient checks and
// small random tensor builders.

#include <cmath>
#include <functional>
#include <vector>

#include "tokentts/ops.hpp"

namespace test_util {

inline tts::Tensor random_tensor(tts::Rng& rng, int rows, int cols, bool requires_grad = true,
                                 float scale = 1.0f) {
  std::vector<float> v(static_cast<size_t>(rows) * cols);
  for (auto& x : v) x = scale * rng.normal();
  return tts::Tensor::from(std::move(v), rows, cols, requires_grad);
}

// Central-difference gradient of a scalar-valued rebuild function with respect
// to the entries of `x`. The function must rebuild the graph from scratch so
// each probe sees the perturbed value.
inline std::vector<float> numeric_grad(tts::Tensor x, const std::function<float()>& scalar_fn,
                                       float h = 1e-2f) {
  std::vector<float> g(x.data().size());
  for (size_t i = 0; i < g.size(); ++i) {
    const float orig = x.data()[i];
    x.data()[i] = orig + h;
    const float fp = scalar_fn();
    x.data()[i] = orig - h;
    const float fm = scalar_fn();
    x.data()[i] = orig;
    g[i] = (fp - fm) / (2.0f * h);
  }
  return g;
}

// max over entries of |a-b| / max(1, |a|, |b|)
inline float max_rel_err(const std::vector<float>& a, const std::vector<float>& b) {
  float worst = 0.0f;
  for (size_t i = 0; i < a.size(); ++i) {
    const float denom = std::max(1.0f, std::max(std::fabs(a[i]), std::fabs(b[i])));
    worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace test_util
