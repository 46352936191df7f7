// Copyright 2026 The tokentts Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

// RAdam with an optional Lookahead wrapper (slow-weight interpolation every k
// steps), plain Adam as a fallback, and the exponential LR schedule used for
// language-model training.

#include <cmath>
#include <vector>

#include "tokentts/nn.hpp"

namespace tts {

struct OptimizerConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  bool rectified = true;   // RAdam; false = plain Adam
  bool lookahead = true;
  int lookahead_k = 5;
  float lookahead_alpha = 0.5f;
};

class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(ParamList params, OptimizerConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    slow_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      const size_t n = params_[i].tensor.data().size();
      m_[i].assign(n, 0.0f);
      v_[i].assign(n, 0.0f);
      if (cfg_.lookahead) slow_[i] = params_[i].tensor.data();
    }
  }

  void set_lr(float lr) { cfg_.lr = lr; }
  float lr() const { return cfg_.lr; }
  int64_t step_count() const { return t_; }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  void step() {
    ++t_;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double b1t = std::pow(b1, static_cast<double>(t_));
    const double b2t = std::pow(b2, static_cast<double>(t_));
    const double rho_inf = 2.0 / (1.0 - b2) - 1.0;
    const double rho_t = rho_inf - 2.0 * t_ * b2t / (1.0 - b2t);

    bool rect_ok = !cfg_.rectified;
    double r_t = 1.0;
    if (cfg_.rectified && rho_t > 5.0) {
      rect_ok = true;
      r_t = std::sqrt(((rho_t - 4.0) * (rho_t - 2.0) * rho_inf) /
                      ((rho_inf - 4.0) * (rho_inf - 2.0) * rho_t));
    }

    for (size_t i = 0; i < params_.size(); ++i) {
      Tensor& p = params_[i].tensor;
      if (!p.requires_grad() || !p.has_grad()) continue;
      auto& data = p.data();
      const auto& g = p.grad();
      auto& m = m_[i];
      auto& v = v_[i];
      for (size_t j = 0; j < data.size(); ++j) {
        m[j] = static_cast<float>(b1 * m[j] + (1.0 - b1) * g[j]);
        v[j] = static_cast<float>(b2 * v[j] + (1.0 - b2) * static_cast<double>(g[j]) * g[j]);
        const double mhat = m[j] / (1.0 - b1t);
        double update;
        if (!cfg_.rectified) {
          const double vhat = std::sqrt(v[j] / (1.0 - b2t));
          update = cfg_.lr * mhat / (vhat + cfg_.eps);
        } else if (rect_ok) {
          const double vhat = std::sqrt(v[j] / (1.0 - b2t));
          update = cfg_.lr * r_t * mhat / (vhat + cfg_.eps);
        } else {
          update = cfg_.lr * mhat;  // un-adapted warmup step
        }
        data[j] -= static_cast<float>(update);
      }
    }

    if (cfg_.lookahead && t_ % cfg_.lookahead_k == 0) {
      const float a = cfg_.lookahead_alpha;
      for (size_t i = 0; i < params_.size(); ++i) {
        auto& fast = params_[i].tensor.data();
        auto& slow = slow_[i];
        for (size_t j = 0; j < fast.size(); ++j) {
          slow[j] += a * (fast[j] - slow[j]);
          fast[j] = slow[j];
        }
      }
    }
  }

 private:
  ParamList params_;
  OptimizerConfig cfg_;
  std::vector<std::vector<float>> m_, v_, slow_;
  int64_t t_ = 0;
};

// lr(i) = base for i <= start, then base * gamma^(i - start) clamped at floor;
// gamma is chosen so the floor is reached exactly at the horizon.
struct ExpDecaySchedule {
  float base_lr = 1e-3f;
  float floor_lr = 5e-5f;
  int64_t decay_start = 4000;
  int64_t horizon = 50000;

  double gamma() const {
    check(horizon > decay_start, "ExpDecaySchedule: horizon must exceed decay_start");
    return std::pow(static_cast<double>(floor_lr) / base_lr,
                    1.0 / static_cast<double>(horizon - decay_start));
  }

  float lr(int64_t iter) const {
    if (iter <= decay_start) return base_lr;
    const double v = base_lr * std::pow(gamma(), static_cast<double>(iter - decay_start));
    return static_cast<float>(std::max(v, static_cast<double>(floor_lr)));
  }
};

}  // namespace tts
