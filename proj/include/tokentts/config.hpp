// Copyright 2026 The tokentts Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

// Model architecture configuration for all three stages. The JSON form is
// embedded in every checkpoint; its hash is the compatibility key between
// stages.

#include <json.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "tokentts/common.hpp"

namespace tts {

constexpr int kFrameLen = 600;  // samples per frame at 16 kHz = 37.5 ms

struct FineCodecConfig {
  std::vector<int> strides = {4, 5, 5, 6};
  int prelude_channels = 32;
  std::vector<int> channels = {48, 64, 96, 128};  // width after each downsample
  int latent_dim = 128;
  int n_q = 16;
  int K = 256;

  int frame_len() const {
    int p = 1;
    for (int s : strides) p *= s;
    return p;
  }
  double frame_rate() const { return 16000.0 / frame_len(); }

  void validate() const {
    check(strides.size() == 4, "fine codec: expected four stride layers");
    check(frame_len() == kFrameLen, "fine codec: stride product must be 600");
    check(channels.size() == strides.size(), "fine codec: one channel width per stage");
    check(latent_dim >= 1 && n_q >= 1 && K >= 2, "fine codec: bad dims");
    for (int s : strides) check(s >= 2, "fine codec: strides must be >= 2");
  }
};

// bitrate in kbps of a frame-token stream: frame_rate * n_q * log2(K) / 1000
inline double token_bitrate_kbps(double frame_rate, int n_q, int K) {
  return frame_rate * n_q * std::log2(static_cast<double>(K)) / 1000.0;
}

inline double fc_bitrate(const FineCodecConfig& cfg) {
  return token_bitrate_kbps(cfg.frame_rate(), cfg.n_q, cfg.K);
}

struct CoarseCodecConfig {
  int encoder_blocks = 2;
  int decoder_blocks = 2;
  int K = 256;
  int width = 128;
  int heads = 4;
  int conv_kernel = 7;
  int ff_mult = 2;

  void validate() const {
    check(encoder_blocks >= 1 && decoder_blocks >= 1, "coarse codec: block counts must be >= 1");
    check(K >= 2 && width >= 8, "coarse codec: bad dims");
    check(width % heads == 0, "coarse codec: width must divide into heads");
    check(conv_kernel % 2 == 1, "coarse codec: conv kernel must be odd");
  }

  double bitrate_kbps(double frame_rate) const { return token_bitrate_kbps(frame_rate, 1, K); }
};

struct LMConfig {
  int decoder_layers = 4;
  int phoneme_encoder_blocks = 2;
  int width = 256;
  int heads = 4;
  int ff_mult = 4;
  int phoneme_vocab = 16;
  int speaker_count = 2;
  int max_prefix_len = 64;
  int max_speech_len = 256;

  void validate() const {
    check(decoder_layers >= 1 && phoneme_encoder_blocks >= 1, "lm: layer counts must be >= 1");
    check(width % heads == 0, "lm: width must divide into heads");
    check(phoneme_vocab >= 2 && speaker_count >= 1, "lm: vocab sizes too small");
    check(max_prefix_len >= 2 && max_speech_len >= 2, "lm: max lengths too small");
  }

  // speech vocabulary = coarse tokens + reserved {BOS, EOS}
  int speech_vocab(int coarse_k) const { return coarse_k + 2; }
  static int bos_id(int coarse_k) { return coarse_k; }
  static int eos_id(int coarse_k) { return coarse_k + 1; }
};

struct DiscriminatorConfig {
  std::vector<int> periods = {2, 3, 5, 7, 11};
  std::vector<int> scales = {1, 2, 4};
  std::vector<int> channels = {16, 32, 64};

  void validate() const {
    check(!periods.empty() && !scales.empty(), "discriminators: need both families");
    check(!channels.empty(), "discriminators: empty channel list");
    for (size_t i = 1; i < periods.size(); ++i)
      check(periods[i] != periods[i - 1], "discriminators: duplicate period");
  }
};

struct ModelConfig {
  int sample_rate = 16000;
  FineCodecConfig fine;
  CoarseCodecConfig coarse;
  LMConfig lm;
  DiscriminatorConfig disc;

  void validate() const {
    check(sample_rate == 16000, "model: sample rate fixed at 16 kHz");
    fine.validate();
    coarse.validate();
    lm.validate();
    disc.validate();
  }
};

// ---------------------------------------------------------------------------
// JSON round trip (nlohmann keeps keys sorted, so dumps are deterministic)
// ---------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const FineCodecConfig& c) {
  j = {{"strides", c.strides},     {"prelude_channels", c.prelude_channels},
       {"channels", c.channels},   {"latent_dim", c.latent_dim},
       {"n_q", c.n_q},             {"K", c.K}};
}
inline void from_json(const nlohmann::json& j, FineCodecConfig& c) {
  j.at("strides").get_to(c.strides);
  j.at("prelude_channels").get_to(c.prelude_channels);
  j.at("channels").get_to(c.channels);
  j.at("latent_dim").get_to(c.latent_dim);
  j.at("n_q").get_to(c.n_q);
  j.at("K").get_to(c.K);
}

inline void to_json(nlohmann::json& j, const CoarseCodecConfig& c) {
  j = {{"encoder_blocks", c.encoder_blocks},
       {"decoder_blocks", c.decoder_blocks},
       {"K", c.K},
       {"width", c.width},
       {"heads", c.heads},
       {"conv_kernel", c.conv_kernel},
       {"ff_mult", c.ff_mult}};
}
inline void from_json(const nlohmann::json& j, CoarseCodecConfig& c) {
  j.at("encoder_blocks").get_to(c.encoder_blocks);
  j.at("decoder_blocks").get_to(c.decoder_blocks);
  j.at("K").get_to(c.K);
  j.at("width").get_to(c.width);
  j.at("heads").get_to(c.heads);
  j.at("conv_kernel").get_to(c.conv_kernel);
  j.at("ff_mult").get_to(c.ff_mult);
}

inline void to_json(nlohmann::json& j, const LMConfig& c) {
  j = {{"decoder_layers", c.decoder_layers},
       {"phoneme_encoder_blocks", c.phoneme_encoder_blocks},
       {"width", c.width},
       {"heads", c.heads},
       {"ff_mult", c.ff_mult},
       {"phoneme_vocab", c.phoneme_vocab},
       {"speaker_count", c.speaker_count},
       {"max_prefix_len", c.max_prefix_len},
       {"max_speech_len", c.max_speech_len}};
}
inline void from_json(const nlohmann::json& j, LMConfig& c) {
  j.at("decoder_layers").get_to(c.decoder_layers);
  j.at("phoneme_encoder_blocks").get_to(c.phoneme_encoder_blocks);
  j.at("width").get_to(c.width);
  j.at("heads").get_to(c.heads);
  j.at("ff_mult").get_to(c.ff_mult);
  j.at("phoneme_vocab").get_to(c.phoneme_vocab);
  j.at("speaker_count").get_to(c.speaker_count);
  j.at("max_prefix_len").get_to(c.max_prefix_len);
  j.at("max_speech_len").get_to(c.max_speech_len);
}

inline void to_json(nlohmann::json& j, const DiscriminatorConfig& c) {
  j = {{"periods", c.periods}, {"scales", c.scales}, {"channels", c.channels}};
}
inline void from_json(const nlohmann::json& j, DiscriminatorConfig& c) {
  j.at("periods").get_to(c.periods);
  j.at("scales").get_to(c.scales);
  j.at("channels").get_to(c.channels);
}

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"sample_rate", c.sample_rate},
       {"fine", c.fine},
       {"coarse", c.coarse},
       {"lm", c.lm},
       {"disc", c.disc}};
}
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("sample_rate").get_to(c.sample_rate);
  j.at("fine").get_to(c.fine);
  j.at("coarse").get_to(c.coarse);
  j.at("lm").get_to(c.lm);
  j.at("disc").get_to(c.disc);
}

inline std::string model_config_json(const ModelConfig& c) {
  nlohmann::json j = c;
  return j.dump();
}

inline ModelConfig model_config_from_json(const std::string& text) {
  ModelConfig c = nlohmann::json::parse(text).get<ModelConfig>();
  c.validate();
  return c;
}

// Names the first differing top-level field between two config JSON strings.
inline std::string config_diff(const std::string& a_json, const std::string& b_json) {
  const auto a = nlohmann::json::parse(a_json);
  const auto b = nlohmann::json::parse(b_json);
  for (auto it = a.begin(); it != a.end(); ++it) {
    if (!b.contains(it.key()) || b.at(it.key()) != it.value()) return it.key();
  }
  for (auto it = b.begin(); it != b.end(); ++it)
    if (!a.contains(it.key())) return it.key();
  return "";
}

// desk-scale defaults: small widths, CPU-friendly
inline ModelConfig toy_model_config(int phoneme_vocab, int speaker_count) {
  ModelConfig c;
  c.lm.phoneme_vocab = phoneme_vocab;
  c.lm.speaker_count = speaker_count;
  c.validate();
  return c;
}

// configuration reported by the reference system; shipped as data, not sized
// for CPU training
inline ModelConfig paper_scale_config() {
  ModelConfig c;
  c.fine.prelude_channels = 64;
  c.fine.channels = {128, 256, 512, 512};
  c.fine.latent_dim = 128;
  c.fine.n_q = 16;
  c.fine.K = 256;
  c.coarse.encoder_blocks = 3;
  c.coarse.decoder_blocks = 3;
  c.coarse.K = 1024;
  c.coarse.width = 512;
  c.coarse.heads = 8;
  c.lm.decoder_layers = 16;
  c.lm.phoneme_encoder_blocks = 6;
  c.lm.width = 1536;
  c.lm.heads = 16;
  c.lm.phoneme_vocab = 512;
  c.lm.speaker_count = 7000;
  c.lm.max_prefix_len = 512;
  c.lm.max_speech_len = 2048;
  c.disc.channels = {32, 128, 512};
  c.validate();
  return c;
}

}  // namespace tts
