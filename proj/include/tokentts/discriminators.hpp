// Copyright 2026 The tokentts Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

// Multi-period and multi-scale waveform discriminators. A period-p
// discriminator views the signal as p interleaved columns of width T/p and
// runs a shared strided conv stack down each column; scale discriminators run
// on average-pooled copies. Intermediate activations are kept for the feature
// matching loss.

#include "tokentts/config.hpp"
#include "tokentts/nn.hpp"

namespace tts {

struct DiscSingleOutput {
  std::string name;
  Tensor logits;                // flattened logit map
  std::vector<Tensor> feats;    // per conv layer (logits included last)
  int reshaped_len = 0;         // period discs: column length T/p after padding
};

struct DiscOutput {
  std::vector<DiscSingleOutput> discs;

  const DiscSingleOutput& by_name(const std::string& n) const {
    for (const auto& d : discs)
      if (d.name == n) return d;
    throw Error("discriminator output not found: " + n);
  }
};

struct PeriodDiscriminator {
  int period = 2;
  std::vector<Conv1d> convs;
  Conv1d post;

  PeriodDiscriminator() = default;
  PeriodDiscriminator(int period, const std::vector<int>& channels, Rng& rng) : period(period) {
    int cin = 1;
    for (int cout : channels) {
      convs.emplace_back(cin, cout, 5, 3, 2, rng);
      cin = cout;
    }
    post = Conv1d(cin, 1, 3, 1, 1, rng);
  }

  DiscSingleOutput forward(const Tensor& wave) const {
    const int T = wave.rows();
    Tensor x = wave;
    if (T % period != 0) {  // zero-pad to a period multiple
      const int pad = period - T % period;
      x = concat_rows({x, constant(std::vector<float>(pad, 0.0f), pad, 1)});
    }
    const int col_len = x.rows() / period;

    // layer-wise maps concatenated over the period columns
    std::vector<std::vector<Tensor>> per_layer(convs.size() + 1);
    for (int w = 0; w < period; ++w) {
      Tensor h = strided_rows(x, w, period);
      for (size_t l = 0; l < convs.size(); ++l) {
        h = leaky_relu(convs[l].forward(h), 0.1f);
        per_layer[l].push_back(h);
      }
      per_layer[convs.size()].push_back(post.forward(h));
    }
    DiscSingleOutput out;
    out.name = "mpd_p" + std::to_string(period);
    out.reshaped_len = col_len;
    for (auto& maps : per_layer) out.feats.push_back(concat_rows(maps));
    out.logits = out.feats.back();
    return out;
  }

  void collect_params(const std::string& prefix, ParamList& out) {
    for (size_t i = 0; i < convs.size(); ++i)
      convs[i].collect_params(prefix + ".conv" + std::to_string(i), out);
    post.collect_params(prefix + ".post", out);
  }
};

struct ScaleDiscriminator {
  int scale = 1;
  std::vector<Conv1d> convs;
  Conv1d post;

  ScaleDiscriminator() = default;
  ScaleDiscriminator(int scale, const std::vector<int>& channels, Rng& rng) : scale(scale) {
    int cin = 1;
    int stride = 2;
    for (int cout : channels) {
      convs.emplace_back(cin, cout, 15, stride, 7, rng);
      stride = 4;
      cin = cout;
    }
    post = Conv1d(cin, 1, 3, 1, 1, rng);
  }

  DiscSingleOutput forward(const Tensor& wave) const {
    Tensor h = scale == 1 ? wave : avg_pool_rows(wave, scale, scale);
    DiscSingleOutput out;
    out.name = "msd_s" + std::to_string(scale);
    for (const auto& conv : convs) {
      h = leaky_relu(conv.forward(h), 0.1f);
      out.feats.push_back(h);
    }
    out.logits = post.forward(h);
    out.feats.push_back(out.logits);
    return out;
  }

  void collect_params(const std::string& prefix, ParamList& out) {
    for (size_t i = 0; i < convs.size(); ++i)
      convs[i].collect_params(prefix + ".conv" + std::to_string(i), out);
    post.collect_params(prefix + ".post", out);
  }
};

struct DiscriminatorBank {
  DiscriminatorConfig cfg;
  std::vector<PeriodDiscriminator> period_discs;
  std::vector<ScaleDiscriminator> scale_discs;

  DiscriminatorBank() = default;
  DiscriminatorBank(const DiscriminatorConfig& c, Rng& rng) : cfg(c) {
    cfg.validate();
    for (int p : cfg.periods) period_discs.emplace_back(p, cfg.channels, rng);
    for (int s : cfg.scales) scale_discs.emplace_back(s, cfg.channels, rng);
  }

  int max_period() const {
    int m = 1;
    for (int p : cfg.periods) m = std::max(m, p);
    return m;
  }

  DiscOutput forward(const Tensor& wave) const {
    check(wave.cols() == 1, "disc_forward: expected [T,1] waveform");
    check(wave.rows() >= 2 * max_period(), "disc_forward: input too short");
    DiscOutput out;
    for (const auto& d : period_discs) out.discs.push_back(d.forward(wave));
    for (const auto& d : scale_discs) out.discs.push_back(d.forward(wave));
    return out;
  }

  void collect_params(ParamList& out) {
    for (auto& d : period_discs)
      d.collect_params("disc.mpd_p" + std::to_string(d.period), out);
    for (auto& d : scale_discs)
      d.collect_params("disc.msd_s" + std::to_string(d.scale), out);
  }
};

}  // namespace tts
