// Copyright 2026 The tokentts Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

// Coarse-grained codec: conformer encoder + single vector quantizer over the
// fine codec's frame features, and a conformer decoder that emits per-layer
// categorical distributions over the fine RVQ codebooks. Reconstruction is
// routed through rvq_expected_decode and the frozen fine decoder.

#include "tokentts/conformer.hpp"
#include "tokentts/fine_codec.hpp"

namespace tts {

struct CoarseTokenSeq {
  std::vector<int> indices;  // one token per frame
  int K = 0;

  int length() const { return static_cast<int>(indices.size()); }

  void validate() const {
    for (int id : indices) check(id >= 0 && id < K, "CoarseTokenSeq: index out of range");
  }
};

struct CoarseEncodeTrainResult {
  CoarseTokenSeq tokens;
  Tensor quantized;  // straight-through [T, width]
  Tensor commit;     // scalar L_vq
};

struct CoarseCodec {
  CoarseCodecConfig cfg;
  int fine_latent_dim = 0;
  int fine_n_q = 0;
  int fine_K = 0;

  Linear in_proj;  // fine latent -> width
  std::vector<ConformerBlock> enc_blocks;
  Linear enc_out;  // width -> width (quantizer space)
  Codebook vq;
  Linear dec_in;  // width -> width
  std::vector<ConformerBlock> dec_blocks;
  std::vector<Linear> heads;  // one per fine RVQ layer: width -> fine_K

  CoarseCodec() = default;
  CoarseCodec(const CoarseCodecConfig& c, const FineCodecConfig& fine, Rng& rng) : cfg(c) {
    cfg.validate();
    fine.validate();
    fine_latent_dim = fine.latent_dim;
    fine_n_q = fine.n_q;
    fine_K = fine.K;
    in_proj = Linear(fine_latent_dim, cfg.width, rng);
    for (int i = 0; i < cfg.encoder_blocks; ++i)
      enc_blocks.emplace_back(cfg.width, cfg.heads, cfg.ff_mult, cfg.conv_kernel, rng);
    enc_out = Linear(cfg.width, cfg.width, rng);
    vq = Codebook::random_init(cfg.K, cfg.width, rng);
    dec_in = Linear(cfg.width, cfg.width, rng);
    for (int i = 0; i < cfg.decoder_blocks; ++i)
      dec_blocks.emplace_back(cfg.width, cfg.heads, cfg.ff_mult, cfg.conv_kernel, rng);
    for (int i = 0; i < fine_n_q; ++i) heads.emplace_back(cfg.width, fine_K, rng);
  }

  Tensor encoder_forward(const Tensor& features) const {
    check(features.cols() == fine_latent_dim, "cc_encode: feature dimension mismatch");
    check(features.rows() >= 1, "cc_encode: empty feature sequence");
    Tensor h = in_proj.forward(features);
    for (const auto& block : enc_blocks) h = block.forward(h);
    return enc_out.forward(h);
  }

  // one coarse token per frame, deterministic in eval mode
  CoarseTokenSeq encode(const Tensor& features) const {
    NoGradGuard ng;
    Tensor z = encoder_forward(features);
    CoarseTokenSeq seq;
    seq.K = cfg.K;
    seq.indices = nearest_indices(z.data().data(), z.rows(), vq);
    return seq;
  }

  CoarseEncodeTrainResult encode_train(const Tensor& features, Rng& rng, bool update_codebook) {
    Tensor z = encoder_forward(features);
    auto q = vq_step_train(z, vq, rng, update_codebook);
    CoarseEncodeTrainResult r;
    r.tokens.K = cfg.K;
    r.tokens.indices = q.indices[0];
    r.quantized = q.quantized;
    r.commit = q.commit;
    return r;
  }

  // decoder body on quantized vectors [T, width] -> per-layer logits [T, fine_K]
  std::vector<Tensor> decode_logits(const Tensor& quantized) const {
    Tensor h = dec_in.forward(quantized);
    for (const auto& block : dec_blocks) h = block.forward(h);
    std::vector<Tensor> logits;
    logits.reserve(heads.size());
    for (const auto& head : heads) logits.push_back(head.forward(h));
    return logits;
  }

  std::vector<Tensor> decode_probs(const Tensor& quantized) const {
    auto logits = decode_logits(quantized);
    for (auto& l : logits) l = softmax_rows(l);
    return logits;
  }

  Tensor embed_tokens(const CoarseTokenSeq& tokens) const {
    tokens.validate();
    check(tokens.K == cfg.K, "coarse decode: token codebook size mismatch");
    std::vector<float> rows(static_cast<size_t>(tokens.length()) * cfg.width);
    lookup_rows(vq, tokens.indices, rows.data());
    return constant(std::move(rows), tokens.length(), cfg.width);
  }

  // T x n_q x K softmax-normalized distributions over the fine codebooks
  RVQDistribution decode_distribution(const CoarseTokenSeq& tokens) const {
    NoGradGuard ng;
    auto probs = decode_probs(embed_tokens(tokens));
    RVQDistribution dist;
    dist.T = tokens.length();
    dist.n_q = fine_n_q;
    dist.K = fine_K;
    dist.probs.resize(static_cast<size_t>(dist.T) * dist.n_q * dist.K);
    for (int q = 0; q < dist.n_q; ++q)
      for (int t = 0; t < dist.T; ++t)
        for (int k = 0; k < dist.K; ++k)
          dist.probs[(static_cast<size_t>(t) * dist.n_q + q) * dist.K + k] =
              probs[q].data()[static_cast<size_t>(t) * dist.K + k];
    return dist;
  }

  void collect_params(ParamList& out) {
    in_proj.collect_params("coarse.in_proj", out);
    for (size_t i = 0; i < enc_blocks.size(); ++i)
      enc_blocks[i].collect_params("coarse.enc" + std::to_string(i), out);
    enc_out.collect_params("coarse.enc_out", out);
    dec_in.collect_params("coarse.dec_in", out);
    for (size_t i = 0; i < dec_blocks.size(); ++i)
      dec_blocks[i].collect_params("coarse.dec" + std::to_string(i), out);
    for (size_t i = 0; i < heads.size(); ++i)
      heads[i].collect_params("coarse.head" + std::to_string(i), out);
  }

  uint64_t checksum() {
    ParamList p;
    collect_params(p);
    uint64_t h = params_checksum(p);
    h = fnv1a64(vq.entries.data(), vq.entries.size() * sizeof(float), h);
    return h;
  }
};

enum class FineSelectMode { kArgmax, kSample };

// Picks fine tokens from a distribution: argmax is deterministic (ties toward
// the lowest index); sample draws per (frame, layer) independently.
inline FineTokenGrid cc_select_fine_tokens(const RVQDistribution& dist, FineSelectMode mode,
                                           uint64_t seed = 0) {
  dist.validate();
  FineTokenGrid grid;
  grid.T = dist.T;
  grid.n_q = dist.n_q;
  grid.K = dist.K;
  grid.ids.resize(static_cast<size_t>(dist.T) * dist.n_q);
  Rng rng(seed);
  for (int t = 0; t < dist.T; ++t)
    for (int q = 0; q < dist.n_q; ++q) {
      int pick = 0;
      if (mode == FineSelectMode::kArgmax) {
        float best = dist.at(t, q, 0);
        for (int k = 1; k < dist.K; ++k)
          if (dist.at(t, q, k) > best) {
            best = dist.at(t, q, k);
            pick = k;
          }
      } else {
        const float u = rng.uniform();
        double cum = 0.0;
        pick = dist.K - 1;
        for (int k = 0; k < dist.K; ++k) {
          cum += dist.at(t, q, k);
          if (u < cum) {
            pick = k;
            break;
          }
        }
      }
      grid.ids[static_cast<size_t>(t) * dist.n_q + q] = pick;
    }
  return grid;
}

inline void put_coarse(Checkpoint& c, CoarseCodec& codec) {
  ParamList p;
  codec.collect_params(p);
  c.put_params(p);
  put_codebook(c, "coarse.vq", codec.vq);
}

inline void load_coarse(const Checkpoint& c, CoarseCodec& codec) {
  ParamList p;
  codec.collect_params(p);
  c.load_params(p);
  load_codebook(c, "coarse.vq", codec.vq);
}

inline void put_fine(Checkpoint& c, FineCodec& codec) {
  ParamList p;
  codec.collect_params(p);
  c.put_params(p);
  put_rvq(c, "fine.rvq", codec.rvq);
}

inline void load_fine(const Checkpoint& c, FineCodec& codec) {
  ParamList p;
  codec.collect_params(p);
  c.load_params(p);
  load_rvq(c, "fine.rvq", codec.rvq);
}

}  // namespace tts
