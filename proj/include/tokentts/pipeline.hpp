// Copyright 2026 The tokentts Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

// End-to-end inference: text -> prefix -> coarse tokens -> fine-token
// distributions -> fine tokens -> waveform, and the reverse speech-to-token
// path. Checkpoint compatibility is enforced through the config JSON embedded
// in every checkpoint.

#include "tokentts/dataset.hpp"
#include "tokentts/prefix_lm.hpp"
#include "tokentts/tokens_io.hpp"

namespace tts {

struct SamplingConfig {
  float top_p = 0.9f;
  float temperature = 1.0f;
  bool greedy = false;
  FineSelectMode fine_mode = FineSelectMode::kArgmax;
  uint64_t seed = 0;
  int max_len = 0;  // 0 = model maximum
};

struct ModelBundle {
  ModelConfig config;
  FineCodec fine;
  CoarseCodec coarse;
  PrefixLM lm;
  Vocab vocab;

  double frame_rate() const { return config.fine.frame_rate(); }
};

// Loads all three stages, verifying that every checkpoint was produced under
// the same model config; a mismatch is a hard error naming the field.
inline ModelBundle load_bundle(const std::string& fine_path, const std::string& coarse_path,
                               const std::string& lm_path, const std::string& vocab_path) {
  Checkpoint cf = load_checkpoint(fine_path);
  Checkpoint cc = load_checkpoint(coarse_path);
  Checkpoint cl = load_checkpoint(lm_path);
  check(cf.stage == "fine", "bundle: " + fine_path + " is a '" + cf.stage + "' checkpoint");
  check(cc.stage == "coarse", "bundle: " + coarse_path + " is a '" + cc.stage + "' checkpoint");
  check(cl.stage == "lm", "bundle: " + lm_path + " is a '" + cl.stage + "' checkpoint");

  for (const auto* other : {&cc, &cl}) {
    if (other->config_hash() != cf.config_hash()) {
      const std::string field = config_diff(cf.config_json, other->config_json);
      throw Error("incompatible checkpoints: config mismatch in field '" + field + "'");
    }
  }

  ModelBundle b;
  b.config = model_config_from_json(cf.config_json);
  Rng rng(0);
  b.fine = FineCodec(b.config.fine, rng);
  b.coarse = CoarseCodec(b.config.coarse, b.config.fine, rng);
  b.lm = PrefixLM(b.config.lm, b.config.coarse.K, rng);
  load_fine(cf, b.fine);
  load_coarse(cc, b.coarse);
  load_lm(cl, b.lm);
  b.vocab = vocab_from_text(read_text_file(vocab_path));
  return b;
}

// text -> waveform; output length is (generated frames) * 600 samples
inline Waveform synthesize(const ModelBundle& bundle, const std::string& text, int speaker_id,
                           const SamplingConfig& sampling) {
  NoGradGuard ng;
  PhonemeSequence phonemes = tokenize_text(text, bundle.vocab);
  const int max_len = sampling.max_len > 0 ? sampling.max_len : bundle.config.lm.max_speech_len;
  GenerateResult gen =
      sampling.greedy
          ? bundle.lm.generate_greedy(phonemes.tokens, speaker_id, max_len)
          : bundle.lm.generate(phonemes.tokens, speaker_id, sampling.top_p, sampling.temperature,
                               max_len, sampling.seed);
  check(!gen.tokens.empty(), "synthesize: language model emitted no speech tokens");

  CoarseTokenSeq seq;
  seq.K = bundle.config.coarse.K;
  seq.indices = gen.tokens;
  RVQDistribution dist = bundle.coarse.decode_distribution(seq);
  FineTokenGrid grid = cc_select_fine_tokens(dist, sampling.fine_mode, sampling.seed);
  std::vector<float> feats = rvq_decode(grid.to_layers(), bundle.fine.rvq);
  Tensor wave = bundle.fine.decode(constant(std::move(feats), grid.T, bundle.config.fine.latent_dim));

  Waveform out;
  out.sample_rate = bundle.config.sample_rate;
  out.samples = wave.data();
  check(out.length() == grid.T * kFrameLen, "synthesize: output length mismatch");
  return out;
}

// waveform -> (coarse tokens, fine grid); both share the frame count
inline std::pair<CoarseTokenSeq, FineTokenGrid> speech_to_tokens(const FineCodec& fine,
                                                                 const CoarseCodec& coarse,
                                                                 const Waveform& w) {
  NoGradGuard ng;
  auto [padded, orig] = pad_to_frame(w.samples);
  (void)orig;
  Tensor feats = fine.encode(padded);
  CoarseTokenSeq seq = coarse.encode(feats);
  FineTokenGrid grid = fine.quantize(feats);
  check(seq.length() == grid.T, "speech_to_tokens: coarse/fine frame counts disagree");
  return {std::move(seq), std::move(grid)};
}

// decode a fine-token file back to audio
inline Waveform decode_fine_tokens(const FineCodec& fine, const FineTokenGrid& grid) {
  NoGradGuard ng;
  std::vector<float> feats = fine.decode_tokens(grid);
  Tensor wave = fine.decode(constant(std::move(feats), grid.T, fine.cfg.latent_dim));
  Waveform out;
  out.samples = wave.data();
  return out;
}

// decode a coarse-token file through the distribution head and the fine codec
inline Waveform decode_coarse_tokens(const FineCodec& fine, const CoarseCodec& coarse,
                                     const CoarseTokenSeq& seq, FineSelectMode mode,
                                     uint64_t seed = 0) {
  NoGradGuard ng;
  RVQDistribution dist = coarse.decode_distribution(seq);
  FineTokenGrid grid = cc_select_fine_tokens(dist, mode, seed);
  return decode_fine_tokens(fine, grid);
}

}  // namespace tts
