// Copyright 2026 The tokentts Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

// Decoder-only transformer over coarse speech tokens with an in-context
// prefix: a conformer phoneme encoder output plus a speaker slot. The prefix
// attends bidirectionally to itself only; speech positions attend to the full
// prefix and causally to earlier speech positions. Prefix and speech segments
// use separate learned position tables plus a 2-entry segment-type table.

#include <algorithm>
#include <numeric>

#include "tokentts/conformer.hpp"
#include "tokentts/config.hpp"
#include "tokentts/serialize.hpp"

namespace tts {

// Attendability matrix, row = query, col = key, 1 = may attend.
// Prefix rows see all prefix positions and nothing else; speech row t sees the
// whole prefix plus speech positions <= t.
inline std::vector<uint8_t> build_attention_mask(int prefix_len, int speech_len) {
  check(prefix_len >= 0 && speech_len >= 0, "build_attention_mask: negative length");
  const int L = prefix_len + speech_len;
  std::vector<uint8_t> mask(static_cast<size_t>(L) * L, 0);
  for (int q = 0; q < L; ++q)
    for (int k = 0; k < L; ++k) {
      const bool q_prefix = q < prefix_len;
      const bool k_prefix = k < prefix_len;
      bool ok;
      if (q_prefix)
        ok = k_prefix;
      else
        ok = k_prefix || k <= q;
      mask[static_cast<size_t>(q) * L + k] = ok ? 1 : 0;
    }
  return mask;
}

inline std::vector<float> mask_to_bias(const std::vector<uint8_t>& mask) {
  std::vector<float> bias(mask.size());
  for (size_t i = 0; i < mask.size(); ++i) bias[i] = mask[i] ? 0.0f : kMaskNegInf;
  return bias;
}

// One training batch. Target rows are rectangular with explicit padding masks;
// every unpadded row ends with EOS.
struct PrefixBatch {
  std::vector<std::vector<int>> phonemes;  // per item, length t_w >= 1
  std::vector<int> speakers;
  std::vector<std::vector<int>> targets;     // rectangular [B][T_max], padded tail arbitrary
  std::vector<std::vector<float>> pad_mask;  // rectangular, 1 = real target
  int eos_id = 0;

  int size() const { return static_cast<int>(phonemes.size()); }

  int target_len(int i) const {
    int len = 0;
    for (float m : pad_mask[i]) len += m != 0.0f ? 1 : 0;
    return len;
  }

  void validate() const {
    check(!phonemes.empty(), "PrefixBatch: empty batch");
    check(phonemes.size() == speakers.size() && phonemes.size() == targets.size() &&
              phonemes.size() == pad_mask.size(),
          "PrefixBatch: ragged batch fields");
    for (int i = 0; i < size(); ++i) {
      check(!phonemes[i].empty(), "PrefixBatch: empty phoneme sequence");
      check(targets[i].size() == pad_mask[i].size(), "PrefixBatch: mask length mismatch");
      const int len = target_len(i);
      check(len >= 1, "PrefixBatch: empty targets");
      // masks are a prefix of ones; lengths must be consistent with them
      for (int t = 0; t < static_cast<int>(pad_mask[i].size()); ++t)
        check((pad_mask[i][t] != 0.0f) == (t < len), "PrefixBatch: mask not a prefix of ones");
      check(targets[i][len - 1] == eos_id, "PrefixBatch: targets must end with EOS");
    }
  }

  static PrefixBatch from_sequences(const std::vector<std::vector<int>>& phonemes,
                                    const std::vector<int>& speakers,
                                    const std::vector<std::vector<int>>& token_seqs, int eos_id) {
    PrefixBatch b;
    b.phonemes = phonemes;
    b.speakers = speakers;
    b.eos_id = eos_id;
    size_t t_max = 0;
    for (const auto& s : token_seqs) t_max = std::max(t_max, s.size() + 1);
    for (const auto& s : token_seqs) {
      std::vector<int> row(s);
      row.push_back(eos_id);
      std::vector<float> mask(row.size(), 1.0f);
      row.resize(t_max, 0);
      mask.resize(t_max, 0.0f);
      b.targets.push_back(std::move(row));
      b.pad_mask.push_back(std::move(mask));
    }
    b.validate();
    return b;
  }
};

struct GenerateResult {
  std::vector<int> tokens;  // coarse token ids, EOS stripped
  bool truncated = false;   // max_len reached without EOS
};

// nucleus of a probability vector: the smallest set of tokens (by descending
// probability, ties toward lower ids) whose cumulative mass reaches top_p
inline std::vector<int> nucleus_set(const std::vector<float>& probs, float top_p) {
  check(top_p > 0.0f && top_p <= 1.0f, "nucleus_set: top_p must be in (0,1]");
  std::vector<int> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return probs[a] > probs[b]; });
  std::vector<int> nucleus;
  double cum = 0.0;
  for (int id : order) {
    nucleus.push_back(id);
    cum += probs[id];
    if (cum >= static_cast<double>(top_p)) break;
  }
  return nucleus;
}

// renormalized draw from the nucleus; returns (token, nucleus)
inline std::pair<int, std::vector<int>> nucleus_sample(const std::vector<float>& probs,
                                                       float top_p, Rng& rng) {
  std::vector<int> nucleus = nucleus_set(probs, top_p);
  double mass = 0.0;
  for (int id : nucleus) mass += probs[id];
  const double u = rng.uniform() * mass;
  double cum = 0.0;
  for (int id : nucleus) {
    cum += probs[id];
    if (u < cum) return {id, nucleus};
  }
  return {nucleus.back(), nucleus};
}

struct PrefixLM {
  LMConfig cfg;
  int coarse_k = 0;

  Embedding phoneme_emb;
  Embedding speaker_emb;
  Embedding speech_emb;
  Embedding prefix_pos;   // slot 0 = speaker token
  Embedding speech_pos;   // slot 0 = BOS
  Embedding segment_emb;  // 0 = prefix, 1 = speech
  std::vector<ConformerBlock> encoder_blocks;

  struct DecoderLayer {
    LayerNorm ln_attn, ln_ff;
    MultiHeadAttention attn;
    Linear ff_in, ff_out;

    DecoderLayer() = default;
    DecoderLayer(int width, int heads, int ff_mult, Rng& rng)
        : ln_attn(width),
          ln_ff(width),
          attn(width, heads, rng),
          ff_in(width, ff_mult * width, rng),
          ff_out(ff_mult * width, width, rng) {}

    Tensor forward(const Tensor& x, const std::vector<float>& bias) const {
      Tensor h = add(x, attn.forward(ln_attn.forward(x), bias));
      return add(h, ff_out.forward(swish(ff_in.forward(ln_ff.forward(h)))));
    }

    void collect_params(const std::string& prefix, ParamList& out) {
      ln_attn.collect_params(prefix + ".ln_attn", out);
      ln_ff.collect_params(prefix + ".ln_ff", out);
      attn.collect_params(prefix + ".attn", out);
      ff_in.collect_params(prefix + ".ff_in", out);
      ff_out.collect_params(prefix + ".ff_out", out);
    }
  };
  std::vector<DecoderLayer> layers;
  LayerNorm final_ln;
  Linear head;

  PrefixLM() = default;
  PrefixLM(const LMConfig& c, int coarse_k, Rng& rng) : cfg(c), coarse_k(coarse_k) {
    cfg.validate();
    const int w = cfg.width;
    phoneme_emb = Embedding(cfg.phoneme_vocab, w, rng);
    speaker_emb = Embedding(cfg.speaker_count, w, rng);
    speech_emb = Embedding(cfg.speech_vocab(coarse_k), w, rng);
    prefix_pos = Embedding(cfg.max_prefix_len, w, rng);
    speech_pos = Embedding(cfg.max_speech_len + 1, w, rng);
    segment_emb = Embedding(2, w, rng);
    for (int i = 0; i < cfg.phoneme_encoder_blocks; ++i)
      encoder_blocks.emplace_back(w, cfg.heads, 2, 7, rng);
    for (int i = 0; i < cfg.decoder_layers; ++i)
      layers.emplace_back(w, cfg.heads, cfg.ff_mult, rng);
    final_ln = LayerNorm(w);
    head = Linear(w, cfg.speech_vocab(coarse_k), rng);
  }

  int bos_id() const { return LMConfig::bos_id(coarse_k); }
  int eos_id() const { return LMConfig::eos_id(coarse_k); }

  // phoneme ids + speaker -> [t_w + 1, width] prefix embeddings (speaker
  // token prepended at position 0)
  Tensor encode_prefix(const std::vector<int>& phoneme_ids, int speaker_id) const {
    check(!phoneme_ids.empty(), "encode_prefix: empty phoneme sequence");
    check(static_cast<int>(phoneme_ids.size()) + 1 <= cfg.max_prefix_len,
          "encode_prefix: prefix longer than max_prefix_len");
    for (int id : phoneme_ids)
      check(id >= 0 && id < cfg.phoneme_vocab, "encode_prefix: phoneme id out of range");
    check(speaker_id >= 0 && speaker_id < cfg.speaker_count, "encode_prefix: unknown speaker ID");

    const int t_w = static_cast<int>(phoneme_ids.size());
    std::vector<int> pos_ids(t_w);
    std::iota(pos_ids.begin(), pos_ids.end(), 1);
    Tensor h = add(phoneme_emb.forward(phoneme_ids), prefix_pos.forward(pos_ids));
    for (const auto& block : encoder_blocks) h = block.forward(h);
    Tensor spk = add(speaker_emb.forward({speaker_id}), prefix_pos.forward({0}));
    Tensor prefix = concat_rows({spk, h});
    return add_row_bias(prefix, slice_rows(segment_emb.table, 0, 1));
  }

  // speech_inputs = BOS followed by already-emitted tokens; returns logits at
  // every speech position, shape [len(speech_inputs), speech_vocab]
  Tensor decode_logits(const Tensor& prefix, const std::vector<int>& speech_inputs) const {
    check(!speech_inputs.empty(), "decode_logits: need at least the BOS slot");
    check(static_cast<int>(speech_inputs.size()) <= cfg.max_speech_len + 1,
          "decode_logits: speech longer than max_speech_len");
    const int P = prefix.rows();
    const int S = static_cast<int>(speech_inputs.size());
    std::vector<int> pos_ids(S);
    std::iota(pos_ids.begin(), pos_ids.end(), 0);
    Tensor sp = add(speech_emb.forward(speech_inputs), speech_pos.forward(pos_ids));
    sp = add_row_bias(sp, slice_rows(segment_emb.table, 1, 1));
    Tensor x = concat_rows({prefix, sp});
    const std::vector<float> bias = mask_to_bias(build_attention_mask(P, S));
    for (const auto& layer : layers) x = layer.forward(x, bias);
    x = final_ln.forward(x);
    return head.forward(slice_rows(x, P, S));
  }

  // mean cross-entropy over all non-padding target positions in the batch
  std::pair<std::vector<Tensor>, Tensor> forward_loss(const PrefixBatch& batch) const {
    batch.validate();
    check(batch.eos_id == eos_id(), "forward_loss: batch EOS id mismatch");
    std::vector<Tensor> all_logits;
    Tensor weighted;
    double total_positions = 0.0;
    for (int i = 0; i < batch.size(); ++i) {
      const int len = batch.target_len(i);
      std::vector<int> tgt(batch.targets[i].begin(), batch.targets[i].begin() + len);
      std::vector<int> inputs;
      inputs.push_back(bos_id());
      inputs.insert(inputs.end(), tgt.begin(), tgt.end() - 1);
      Tensor prefix = encode_prefix(batch.phonemes[i], batch.speakers[i]);
      Tensor logits = decode_logits(prefix, inputs);
      Tensor ce = cross_entropy_rows(logits, tgt, std::vector<float>(len, 1.0f));
      weighted = weighted.defined() ? add(weighted, scale(ce, static_cast<float>(len)))
                                    : scale(ce, static_cast<float>(len));
      total_positions += len;
      all_logits.push_back(std::move(logits));
    }
    return {std::move(all_logits), scale(weighted, static_cast<float>(1.0 / total_positions))};
  }

  // autoregressive decoding with temperature-scaled top-p sampling;
  // deterministic for a fixed seed; stops at EOS or max_len
  GenerateResult generate(const std::vector<int>& phoneme_ids, int speaker_id, float top_p,
                          float temperature, int max_len, uint64_t seed) const {
    check(top_p > 0.0f && top_p <= 1.0f, "generate: top_p must be in (0,1]");
    check(temperature > 0.0f, "generate: temperature must be positive");
    check(max_len >= 1 && max_len <= cfg.max_speech_len, "generate: bad max_len");
    NoGradGuard ng;
    Rng rng(seed);
    Tensor prefix = encode_prefix(phoneme_ids, speaker_id);
    std::vector<int> inputs = {bos_id()};
    GenerateResult result;
    for (int step = 0; step < max_len; ++step) {
      Tensor logits = decode_logits(prefix, inputs);
      const int V = logits.cols();
      std::vector<float> row(logits.data().end() - V, logits.data().end());
      for (auto& v : row) v /= temperature;
      softmax_rows_inplace(row, 1, V);
      auto [token, nucleus] = nucleus_sample(row, top_p, rng);
      check(std::find(nucleus.begin(), nucleus.end(), token) != nucleus.end(),
            "generate: sampled token left the nucleus");
      if (token == eos_id()) return result;
      result.tokens.push_back(token);
      inputs.push_back(token);
    }
    result.truncated = true;
    return result;
  }

  GenerateResult generate_greedy(const std::vector<int>& phoneme_ids, int speaker_id,
                                 int max_len) const {
    return generate(phoneme_ids, speaker_id, 1e-9f, 1.0f, max_len, 0);
  }

  void collect_params(ParamList& out) {
    phoneme_emb.collect_params("lm.phoneme_emb", out);
    speaker_emb.collect_params("lm.speaker_emb", out);
    speech_emb.collect_params("lm.speech_emb", out);
    prefix_pos.collect_params("lm.prefix_pos", out);
    speech_pos.collect_params("lm.speech_pos", out);
    segment_emb.collect_params("lm.segment_emb", out);
    for (size_t i = 0; i < encoder_blocks.size(); ++i)
      encoder_blocks[i].collect_params("lm.enc" + std::to_string(i), out);
    for (size_t i = 0; i < layers.size(); ++i)
      layers[i].collect_params("lm.dec" + std::to_string(i), out);
    final_ln.collect_params("lm.final_ln", out);
    head.collect_params("lm.head", out);
  }

  uint64_t checksum() {
    ParamList p;
    collect_params(p);
    return params_checksum(p);
  }
};

inline void put_lm(Checkpoint& c, PrefixLM& lm) {
  ParamList p;
  lm.collect_params(p);
  c.put_params(p);
}

inline void load_lm(const Checkpoint& c, PrefixLM& lm) {
  ParamList p;
  lm.collect_params(p);
  c.load_params(p);
}

}  // namespace tts
