// Copyright 2026 The tokentts Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

// Loss assemblies for both codec stages: least-squares adversarial pair,
// feature matching, multi-resolution spectrogram distance, and the weighted
// generator totals. The discriminator objective is reported separately from
// the generator objective.

#include <map>

#include "tokentts/discriminators.hpp"
#include "tokentts/fine_codec.hpp"
#include "tokentts/stft.hpp"

namespace tts {

struct LossWeights {
  float adv = 1.0f;
  float fm = 2.0f;
  float mrs = 1.0f;
  float q = 1.0f;
};

inline std::vector<STFTConfig> default_mrs_resolutions() {
  return {{512, 128, 512}, {1024, 256, 1024}, {2048, 512, 2048}};
}

// least-squares GAN pair: L_d = mean((real-1)^2) + mean(fake^2),
// L_adv_g = mean((fake-1)^2)
inline std::pair<Tensor, Tensor> adversarial_pair_loss(const Tensor& real_logits,
                                                       const Tensor& fake_logits) {
  check(real_logits.rows() == fake_logits.rows() && real_logits.cols() == fake_logits.cols(),
        "adversarial_pair_loss: shape mismatch");
  Tensor l_d = add(mean_all(square(add_scalar(real_logits, -1.0f))), mean_all(square(fake_logits)));
  Tensor l_adv_g = mean_all(square(add_scalar(fake_logits, -1.0f)));
  return {l_d, l_adv_g};
}

// mean absolute difference averaged over layers; zero iff the maps coincide
inline Tensor feature_match_loss(const std::vector<Tensor>& real_feats,
                                 const std::vector<Tensor>& fake_feats) {
  check(real_feats.size() == fake_feats.size() && !real_feats.empty(),
        "feature_match_loss: layer lists must be parallel");
  Tensor acc;
  for (size_t l = 0; l < real_feats.size(); ++l) {
    check(real_feats[l].rows() == fake_feats[l].rows() &&
              real_feats[l].cols() == fake_feats[l].cols(),
          "feature_match_loss: feature map shape mismatch");
    Tensor term = mean_all(abs_t(sub(fake_feats[l], real_feats[l])));
    acc = acc.defined() ? add(acc, term) : term;
  }
  return scale(acc, 1.0f / static_cast<float>(real_feats.size()));
}

// spectral convergence + log-magnitude L1 at one resolution, x constant
inline Tensor spectral_loss_t(const std::vector<float>& x, const Tensor& x_hat,
                              const STFTConfig& cfg) {
  Spectrogram mx = stft_magnitude(x, cfg);
  Tensor mh = stft_mag_t(x_hat, cfg);
  check(mh.rows() == mx.frames && mh.cols() == mx.bins, "spectral_loss: length mismatch");

  double norm_x = 0.0;
  for (float m : mx.mag) norm_x += static_cast<double>(m) * m;
  norm_x = std::sqrt(norm_x);

  Tensor diff = sub_const(mh, mx.mag);
  Tensor sc = scale(sqrt_eps(sum_all(square(diff)), 0.0f),
                    static_cast<float>(1.0 / (norm_x + 1e-7)));

  std::vector<float> log_mx(mx.mag.size());
  for (size_t i = 0; i < log_mx.size(); ++i) log_mx[i] = std::log(mx.mag[i] + 1e-7f);
  Tensor log_l1 = mean_all(abs_t(sub_const(log_eps(mh, 1e-7f), log_mx)));
  return add(sc, log_l1);
}

// sum over resolutions; differentiable in x_hat
inline Tensor mrs_loss_t(const std::vector<float>& x, const Tensor& x_hat,
                         const std::vector<STFTConfig>& resolutions) {
  check(static_cast<int>(x.size()) == x_hat.rows() && x_hat.cols() == 1,
        "mrs_loss: length mismatch");
  check(!resolutions.empty(), "mrs_loss: no resolutions");
  Tensor acc;
  for (const auto& cfg : resolutions) {
    Tensor term = spectral_loss_t(x, x_hat, cfg);
    acc = acc.defined() ? add(acc, term) : term;
  }
  return acc;
}

// plain-number variant for metrics
inline double mrs_loss(const std::vector<float>& x, const std::vector<float>& x_hat,
                       const std::vector<STFTConfig>& resolutions = default_mrs_resolutions()) {
  NoGradGuard ng;
  return mrs_loss_t(x, constant(x_hat, static_cast<int>(x_hat.size()), 1), resolutions).item();
}

struct LossReport {
  // generator side
  double adv = 0.0, fm = 0.0, mrs = 0.0, q = 0.0, total = 0.0;
  Tensor total_t;
  // discriminator side, reported separately
  double d_mpd = 0.0, d_msd = 0.0, d_total = 0.0;
  Tensor d_total_t;
  std::map<std::string, double> per_disc;
};

// Generator-side objective shared by both codec stages: the commitment term
// `q_commit` is L_rvq for the fine stage and L_vq for the coarse stage.
inline LossReport generator_loss(const std::vector<float>& x_target, const Tensor& x_hat,
                                 const DiscOutput& real, const DiscOutput& fake,
                                 const Tensor& q_commit, const LossWeights& w,
                                 const std::vector<STFTConfig>& resolutions) {
  check(real.discs.size() == fake.discs.size(), "generator_loss: bank outputs must be parallel");
  LossReport rep;

  Tensor adv;
  Tensor fm;
  for (size_t i = 0; i < fake.discs.size(); ++i) {
    Tensor g = mean_all(square(add_scalar(fake.discs[i].logits, -1.0f)));
    adv = adv.defined() ? add(adv, g) : g;
    Tensor f = feature_match_loss(real.discs[i].feats, fake.discs[i].feats);
    fm = fm.defined() ? add(fm, f) : f;
    rep.per_disc["adv_" + fake.discs[i].name] = g.item();
  }
  fm = scale(fm, 1.0f / static_cast<float>(fake.discs.size()));
  Tensor mrs = mrs_loss_t(x_target, x_hat, resolutions);

  rep.adv = adv.item();
  rep.fm = fm.item();
  rep.mrs = mrs.item();
  rep.q = q_commit.item();
  rep.total_t = add(add(scale(adv, w.adv), scale(fm, w.fm)),
                    add(scale(mrs, w.mrs), scale(q_commit, w.q)));
  rep.total = rep.total_t.item();
  return rep;
}

// Discriminator-side objective; pass logits computed from a detached fake.
inline void discriminator_loss(const DiscOutput& real, const DiscOutput& fake, LossReport& rep) {
  check(real.discs.size() == fake.discs.size(), "discriminator_loss: bank outputs must be parallel");
  Tensor total;
  for (size_t i = 0; i < real.discs.size(); ++i) {
    auto [l_d, l_g] = adversarial_pair_loss(real.discs[i].logits, fake.discs[i].logits);
    (void)l_g;
    total = total.defined() ? add(total, l_d) : l_d;
    const double v = l_d.item();
    rep.per_disc["d_" + real.discs[i].name] = v;
    if (real.discs[i].name.rfind("mpd", 0) == 0)
      rep.d_mpd += v;
    else
      rep.d_msd += v;
  }
  rep.d_total_t = total;
  rep.d_total = total.item();
}

// Eq.-style fine codec assembly: target is the ground-truth segment.
inline LossReport fine_codec_loss(const std::vector<float>& x, const Tensor& x_hat,
                                  const DiscOutput& real, const DiscOutput& fake,
                                  const Tensor& rvq_commit, const LossWeights& w,
                                  const std::vector<STFTConfig>& resolutions =
                                      default_mrs_resolutions()) {
  return generator_loss(x, x_hat, real, fake, rvq_commit, w, resolutions);
}

// Guards the frozen fine codec during the coarse and LM stages.
struct FrozenFineGuard {
  FineCodec* codec = nullptr;
  uint64_t checksum0 = 0;

  explicit FrozenFineGuard(FineCodec& c) : codec(&c), checksum0(c.checksum()) {}

  void verify() const {
    check(codec->checksum() == checksum0, "unfrozen fine codec detected (checksum mismatch)");
  }
};

// Same structure as the fine assembly with L_vq in place of L_rvq; the target
// waveform is the fine codec's reconstruction of ground truth, and the fine
// codec must be frozen.
inline LossReport coarse_codec_loss(const std::vector<float>& fine_reconstruction,
                                    const Tensor& x_hat, const DiscOutput& real,
                                    const DiscOutput& fake, const Tensor& vq_commit,
                                    const LossWeights& w, const FrozenFineGuard& guard,
                                    const std::vector<STFTConfig>& resolutions =
                                        default_mrs_resolutions()) {
  guard.verify();
  return generator_loss(fine_reconstruction, x_hat, real, fake, vq_commit, w, resolutions);
}

// reconstruction SNR in dB, capped so an exact match reports the cap rather
// than infinity
inline double snr_db(const std::vector<float>& x, const std::vector<float>& x_hat,
                     double cap_db = 120.0) {
  check(x.size() == x_hat.size() && !x.empty(), "snr_db: length mismatch");
  double sig = 0.0, err = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sig += static_cast<double>(x[i]) * x[i];
    const double d = static_cast<double>(x[i]) - x_hat[i];
    err += d * d;
  }
  if (err <= 0.0) return cap_db;
  return std::min(cap_db, 10.0 * std::log10(sig / err));
}

}  // namespace tts
