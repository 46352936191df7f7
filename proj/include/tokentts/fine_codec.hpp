// Copyright 2026 The tokentts Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

// Fine-grained codec: strided conv encoder (waveform -> frame features), RVQ
// bottleneck, mirrored transposed-conv decoder with a tanh output stage.
// Stride product is pinned to 600 samples/frame; kernel and padding per stage
// are chosen so encode/decode lengths are exact (L/600 frames, T*600 samples).

#include "tokentts/config.hpp"
#include "tokentts/nn.hpp"
#include "tokentts/quantizer.hpp"
#include "tokentts/serialize.hpp"

namespace tts {

// even stride: kernel 2s, pad s/2; odd stride: kernel 2s+1, pad (s+1)/2
inline std::pair<int, int> stride_kernel_pad(int s) {
  if (s % 2 == 0) return {2 * s, s / 2};
  return {2 * s + 1, (s + 1) / 2};
}

struct FineTokenGrid {
  int T = 0;
  int n_q = 0;
  int K = 0;
  std::vector<int> ids;  // [T][n_q]

  int at(int t, int q) const { return ids[static_cast<size_t>(t) * n_q + q]; }

  void validate() const {
    check(ids.size() == static_cast<size_t>(T) * n_q, "FineTokenGrid: not rectangular");
    for (int id : ids) check(id >= 0 && id < K, "FineTokenGrid: index out of range");
  }

  static FineTokenGrid from_layers(const std::vector<std::vector<int>>& layers, int K) {
    check(!layers.empty(), "FineTokenGrid: no layers");
    FineTokenGrid g;
    g.n_q = static_cast<int>(layers.size());
    g.T = static_cast<int>(layers[0].size());
    g.K = K;
    g.ids.resize(static_cast<size_t>(g.T) * g.n_q);
    for (int q = 0; q < g.n_q; ++q) {
      check(static_cast<int>(layers[q].size()) == g.T, "FineTokenGrid: ragged layers");
      for (int t = 0; t < g.T; ++t) g.ids[static_cast<size_t>(t) * g.n_q + q] = layers[q][t];
    }
    g.validate();
    return g;
  }

  std::vector<std::vector<int>> to_layers() const {
    std::vector<std::vector<int>> layers(n_q, std::vector<int>(T));
    for (int q = 0; q < n_q; ++q)
      for (int t = 0; t < T; ++t) layers[q][t] = at(t, q);
    return layers;
  }
};

struct ResBlock {
  Conv1d narrow;  // ch -> ch/2, k3
  Conv1d widen;   // ch/2 -> ch, k1

  ResBlock() = default;
  ResBlock(int channels, Rng& rng)
      : narrow(channels, std::max(1, channels / 2), 3, 1, 1, rng),
        widen(std::max(1, channels / 2), channels, 1, 1, 0, rng) {}

  Tensor forward(const Tensor& x) const {
    return add(x, widen.forward(elu(narrow.forward(elu(x)))));
  }

  void collect_params(const std::string& prefix, ParamList& out) {
    narrow.collect_params(prefix + ".narrow", out);
    widen.collect_params(prefix + ".widen", out);
  }
};

struct FineEncoder {
  Conv1d prelude;
  std::vector<ResBlock> res;
  std::vector<Conv1d> down;
  Conv1d to_latent;

  FineEncoder() = default;
  FineEncoder(const FineCodecConfig& cfg, Rng& rng) {
    prelude = Conv1d(1, cfg.prelude_channels, 7, 1, 3, rng);
    int w = cfg.prelude_channels;
    for (size_t i = 0; i < cfg.strides.size(); ++i) {
      const auto [k, p] = stride_kernel_pad(cfg.strides[i]);
      res.emplace_back(w, rng);
      down.emplace_back(w, cfg.channels[i], k, cfg.strides[i], p, rng);
      w = cfg.channels[i];
    }
    to_latent = Conv1d(w, cfg.latent_dim, 3, 1, 1, rng);
  }

  Tensor forward(const Tensor& wave) const {
    Tensor h = prelude.forward(wave);
    for (size_t i = 0; i < down.size(); ++i) {
      h = res[i].forward(h);
      h = down[i].forward(elu(h));
    }
    return to_latent.forward(elu(h));
  }

  void collect_params(const std::string& prefix, ParamList& out) {
    prelude.collect_params(prefix + ".prelude", out);
    for (size_t i = 0; i < res.size(); ++i) {
      res[i].collect_params(prefix + ".res" + std::to_string(i), out);
      down[i].collect_params(prefix + ".down" + std::to_string(i), out);
    }
    to_latent.collect_params(prefix + ".to_latent", out);
  }
};

struct FineDecoder {
  Conv1d from_latent;
  std::vector<ConvTr1d> up;
  std::vector<ResBlock> res;
  Conv1d to_wave;

  FineDecoder() = default;
  FineDecoder(const FineCodecConfig& cfg, Rng& rng) {
    from_latent = Conv1d(cfg.latent_dim, cfg.channels.back(), 3, 1, 1, rng);
    for (int i = static_cast<int>(cfg.strides.size()) - 1; i >= 0; --i) {
      const auto [k, p] = stride_kernel_pad(cfg.strides[i]);
      const int w_in = cfg.channels[i];
      const int w_out = (i == 0) ? cfg.prelude_channels : cfg.channels[i - 1];
      up.emplace_back(w_in, w_out, k, cfg.strides[i], p, rng);
      res.emplace_back(w_out, rng);
    }
    to_wave = Conv1d(cfg.prelude_channels, 1, 7, 1, 3, rng);
  }

  // frame features [T, d] -> bounded waveform [T*600, 1]
  Tensor forward(const Tensor& feats) const {
    Tensor h = from_latent.forward(feats);
    for (size_t i = 0; i < up.size(); ++i) {
      h = up[i].forward(elu(h));
      h = res[i].forward(h);
    }
    return tanh_t(to_wave.forward(elu(h)));
  }

  void collect_params(const std::string& prefix, ParamList& out) {
    from_latent.collect_params(prefix + ".from_latent", out);
    for (size_t i = 0; i < up.size(); ++i) {
      up[i].collect_params(prefix + ".up" + std::to_string(i), out);
      res[i].collect_params(prefix + ".res" + std::to_string(i), out);
    }
    to_wave.collect_params(prefix + ".to_wave", out);
  }
};

// Right-pads with zeros to the next frame multiple, returning the original
// length so decode output can be trimmed.
inline std::pair<std::vector<float>, int> pad_to_frame(const std::vector<float>& samples,
                                                       int frame_len = kFrameLen) {
  check(!samples.empty(), "pad_to_frame: empty waveform");
  const int orig = static_cast<int>(samples.size());
  const int padded = ((orig + frame_len - 1) / frame_len) * frame_len;
  std::vector<float> out(samples);
  out.resize(padded, 0.0f);
  return {std::move(out), orig};
}

struct FineCodec {
  FineCodecConfig cfg;
  FineEncoder enc;
  FineDecoder dec;
  RVQState rvq;

  FineCodec() = default;
  FineCodec(const FineCodecConfig& c, Rng& rng) : cfg(c) {
    cfg.validate();
    enc = FineEncoder(cfg, rng);
    dec = FineDecoder(cfg, rng);
    rvq = RVQState::random_init(cfg.n_q, cfg.K, cfg.latent_dim, rng);
  }

  // waveform samples (length must be a positive multiple of 600; callers pad
  // with pad_to_frame and record the original length) -> [T, d] features
  Tensor encode(const Tensor& wave) const {
    check(wave.cols() == 1 && wave.rows() > 0, "fc_encode: expected [L,1] waveform");
    check(wave.rows() % cfg.frame_len() == 0,
          "fc_encode: length not a multiple of the 600-sample frame (pad first)");
    Tensor f = enc.forward(wave);
    check(f.rows() == wave.rows() / cfg.frame_len(), "fc_encode: frame count mismatch");
    return f;
  }

  Tensor encode(const std::vector<float>& samples) const {
    return encode(constant(samples, static_cast<int>(samples.size()), 1));
  }

  // [T, d] features -> [T*600, 1] waveform in [-1, 1]
  Tensor decode(const Tensor& feats) const {
    check(feats.cols() == cfg.latent_dim && feats.rows() >= 1, "fc_decode: bad feature shape");
    Tensor w = dec.forward(feats);
    check(w.rows() == feats.rows() * cfg.frame_len(), "fc_decode: length mismatch");
    return w;
  }

  // eval-mode quantization of frame features
  FineTokenGrid quantize(const Tensor& feats, int n_active = -1) const {
    if (n_active < 0) n_active = cfg.n_q;
    auto r = rvq_encode(feats.data(), feats.rows(), rvq, n_active);
    return FineTokenGrid::from_layers(r.indices, cfg.K);
  }

  std::vector<float> decode_tokens(const FineTokenGrid& grid) const {
    grid.validate();
    check(grid.n_q <= cfg.n_q && grid.K == cfg.K, "fine decode_tokens: grid incompatible");
    return rvq_decode(grid.to_layers(), rvq);
  }

  // full eval round trip: wave samples -> (grid, reconstruction trimmed to the
  // original length)
  std::pair<FineTokenGrid, std::vector<float>> reconstruct(const std::vector<float>& samples) const {
    NoGradGuard ng;
    auto [padded, orig] = pad_to_frame(samples, cfg.frame_len());
    Tensor f = encode(padded);
    FineTokenGrid grid = quantize(f);
    Tensor out = decode(constant(rvq_decode(grid.to_layers(), rvq), f.rows(), cfg.latent_dim));
    std::vector<float> wave(out.data().begin(), out.data().begin() + orig);
    return {grid, std::move(wave)};
  }

  void collect_params(ParamList& out) {
    enc.collect_params("fine.enc", out);
    dec.collect_params("fine.dec", out);
  }

  // conv/linear weights plus RVQ codebooks; this is the quantity that must be
  // bit-stable while the fine codec is frozen
  uint64_t checksum() {
    ParamList p;
    collect_params(p);
    uint64_t h = params_checksum(p);
    for (const auto& cb : rvq.layers) {
      h = fnv1a64(cb.entries.data(), cb.entries.size() * sizeof(float), h);
      h = fnv1a64(cb.usage_counts.data(), cb.usage_counts.size() * sizeof(float), h);
      h = fnv1a64(cb.ema_sums.data(), cb.ema_sums.size() * sizeof(float), h);
    }
    return h;
  }
};

// ---------------------------------------------------------------------------
// codebook <-> checkpoint
// ---------------------------------------------------------------------------

inline void put_codebook(Checkpoint& c, const std::string& prefix, const Codebook& cb) {
  c.tensors[prefix + ".entries"] = {cb.K, cb.d, cb.entries};
  c.tensors[prefix + ".usage"] = {1, cb.K, cb.usage_counts};
  c.tensors[prefix + ".sums"] = {cb.K, cb.d, cb.ema_sums};
  std::vector<float> steps(cb.steps_since_use.begin(), cb.steps_since_use.end());
  c.tensors[prefix + ".steps"] = {1, cb.K, std::move(steps)};
}

inline void load_codebook(const Checkpoint& c, const std::string& prefix, Codebook& cb) {
  auto get = [&](const std::string& name) -> const NamedTensor& {
    auto it = c.tensors.find(name);
    check(it != c.tensors.end(), "checkpoint: missing tensor " + name);
    return it->second;
  };
  const auto& e = get(prefix + ".entries");
  check(e.rows == cb.K && e.cols == cb.d, "checkpoint: codebook shape mismatch at " + prefix);
  cb.entries = e.data;
  cb.usage_counts = get(prefix + ".usage").data;
  cb.ema_sums = get(prefix + ".sums").data;
  const auto& s = get(prefix + ".steps").data;
  cb.steps_since_use.assign(s.begin(), s.end());
}

inline void put_rvq(Checkpoint& c, const std::string& prefix, const RVQState& st) {
  for (int l = 0; l < st.n_q(); ++l) put_codebook(c, prefix + ".l" + std::to_string(l), st.layers[l]);
}

inline void load_rvq(const Checkpoint& c, const std::string& prefix, RVQState& st) {
  for (int l = 0; l < st.n_q(); ++l) load_codebook(c, prefix + ".l" + std::to_string(l), st.layers[l]);
}

}  // namespace tts
