// Copyright 2026 The tokentts Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

// Three-stage training orchestration: fine codec (GAN), coarse codec against
// the frozen fine codec, then the prefix LM on extracted coarse tokens.
// Stage ordering is enforced through checkpoint prerequisites before any
// parameter is touched. Metric logs are append-only `tokentts.v1` lines.

#include <filesystem>
#include <optional>

#include "tokentts/losses.hpp"
#include "tokentts/optim.hpp"
#include "tokentts/pipeline.hpp"

namespace tts {

struct TrainParams {
  uint64_t seed = 0;
  int segment_len = 24000;
  int batch_size = 1;  // segments accumulated per optimizer step
  int steps = 2000;
  float codec_lr = 2e-4f;  // fixed for generator and discriminators
  ExpDecaySchedule lm_schedule;
  OptimizerConfig optimizer;
  LossWeights weights;
  int checkpoint_every = 500;
  int log_every = 25;
  float lm_target_loss = 0.0f;         // > 0: stop the LM stage early
  float cc_feature_mse_weight = 0.0f;  // off-by-default feature regression aux

  void validate() const {
    check(segment_len > 0 && segment_len % kFrameLen == 0,
          "train: segment_len must be a positive frame multiple");
    check(steps >= 1 && batch_size >= 1, "train: bad steps/batch");
  }
};

inline void to_json(nlohmann::json& j, const TrainParams& p) {
  j = {{"seed", p.seed},
       {"segment_len", p.segment_len},
       {"batch_size", p.batch_size},
       {"steps", p.steps},
       {"codec_lr", p.codec_lr},
       {"lm_base_lr", p.lm_schedule.base_lr},
       {"lm_floor_lr", p.lm_schedule.floor_lr},
       {"lm_decay_start", p.lm_schedule.decay_start},
       {"lm_decay_horizon", p.lm_schedule.horizon},
       {"plain_adam", !p.optimizer.rectified},
       {"lookahead", p.optimizer.lookahead},
       {"adam_beta2", p.optimizer.beta2},
       {"checkpoint_every", p.checkpoint_every},
       {"log_every", p.log_every},
       {"lm_target_loss", p.lm_target_loss},
       {"lambda_adv", p.weights.adv},
       {"lambda_fm", p.weights.fm},
       {"lambda_mrs", p.weights.mrs},
       {"lambda_q", p.weights.q},
       {"cc_feature_mse_weight", p.cc_feature_mse_weight}};
}

inline void from_json(const nlohmann::json& j, TrainParams& p) {
  p.seed = j.value("seed", p.seed);
  p.segment_len = j.value("segment_len", p.segment_len);
  p.batch_size = j.value("batch_size", p.batch_size);
  p.steps = j.value("steps", p.steps);
  p.codec_lr = j.value("codec_lr", p.codec_lr);
  p.lm_schedule.base_lr = j.value("lm_base_lr", p.lm_schedule.base_lr);
  p.lm_schedule.floor_lr = j.value("lm_floor_lr", p.lm_schedule.floor_lr);
  p.lm_schedule.decay_start = j.value("lm_decay_start", p.lm_schedule.decay_start);
  p.lm_schedule.horizon = j.value("lm_decay_horizon", p.lm_schedule.horizon);
  p.optimizer.rectified = !j.value("plain_adam", !p.optimizer.rectified);
  p.optimizer.lookahead = j.value("lookahead", p.optimizer.lookahead);
  p.optimizer.beta2 = j.value("adam_beta2", p.optimizer.beta2);
  p.checkpoint_every = j.value("checkpoint_every", p.checkpoint_every);
  p.log_every = j.value("log_every", p.log_every);
  p.lm_target_loss = j.value("lm_target_loss", p.lm_target_loss);
  p.weights.adv = j.value("lambda_adv", p.weights.adv);
  p.weights.fm = j.value("lambda_fm", p.weights.fm);
  p.weights.mrs = j.value("lambda_mrs", p.weights.mrs);
  p.weights.q = j.value("lambda_q", p.weights.q);
  p.cc_feature_mse_weight = j.value("cc_feature_mse_weight", p.cc_feature_mse_weight);
}

// ---------------------------------------------------------------------------
// metric log
// ---------------------------------------------------------------------------

constexpr const char* kMetricSchema = "tokentts.v1";

struct MetricLog {
  std::string path;

  struct Row {
    std::string stage;
    int64_t iter = 0;
    std::map<std::string, double> values;
  };

  void append(const std::string& stage, int64_t iter,
              const std::vector<std::pair<std::string, double>>& kv) const {
    std::ofstream out(path, std::ios::app);
    check(out.good(), "metric log: cannot open " + path);
    out << kMetricSchema << " stage=" << stage << " iter=" << iter;
    char buf[64];
    for (const auto& [k, v] : kv) {
      std::snprintf(buf, sizeof(buf), " %s=%.8g", k.c_str(), v);
      out << buf;
    }
    out << "\n";
  }

  static std::vector<Row> parse(const std::string& path) {
    std::vector<Row> rows;
    std::ifstream in(path);
    check(in.good(), "metric log: cannot open " + path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind(kMetricSchema, 0) != 0) continue;
      Row row;
      std::istringstream ss(line.substr(std::string(kMetricSchema).size()));
      std::string field;
      while (ss >> field) {
        const size_t eq = field.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = field.substr(0, eq);
        const std::string val = field.substr(eq + 1);
        if (key == "stage")
          row.stage = val;
        else if (key == "iter")
          row.iter = std::stoll(val);
        else
          row.values[key] = std::stod(val);
      }
      rows.push_back(std::move(row));
    }
    return rows;
  }
};

// ---------------------------------------------------------------------------
// data plumbing
// ---------------------------------------------------------------------------

struct LoadedUtterance {
  ManifestEntry entry;
  std::vector<float> samples;
};

inline std::vector<LoadedUtterance> load_split(const std::string& manifest_path,
                                               const std::string& split) {
  DatasetManifest m = load_manifest(manifest_path);
  const auto base = std::filesystem::path(manifest_path).parent_path();
  std::vector<LoadedUtterance> out;
  for (const auto& e : m.split_entries(split)) {
    Waveform w = load_waveform((base / e.source).string());
    out.push_back({e, std::move(w.samples)});
  }
  check(!out.empty(), "dataset: no '" + split + "' entries in " + manifest_path);
  return out;
}

// uniform utterance + frame-aligned offset; utterances shorter than the
// segment are right-padded with zeros once at load time
class SegmentSampler {
 public:
  SegmentSampler(std::vector<LoadedUtterance> utts, int segment_len, uint64_t seed)
      : utts_(std::move(utts)), segment_len_(segment_len), rng_(seed) {
    for (auto& u : utts_)
      if (static_cast<int>(u.samples.size()) < segment_len_)
        u.samples.resize(segment_len_, 0.0f);
  }

  std::vector<float> next() {
    const auto& u = utts_[rng_.uniform_int(static_cast<int>(utts_.size()))];
    const int max_off = (static_cast<int>(u.samples.size()) - segment_len_) / kFrameLen;
    const int off = rng_.uniform_int(max_off + 1) * kFrameLen;
    return {u.samples.begin() + off, u.samples.begin() + off + segment_len_};
  }

  const std::vector<LoadedUtterance>& utterances() const { return utts_; }

 private:
  std::vector<LoadedUtterance> utts_;
  int segment_len_;
  Rng rng_;
};

inline void save_stage_checkpoint(const std::string& path, const std::string& stage,
                                  uint64_t iteration, uint64_t seed,
                                  const std::string& config_json,
                                  const std::function<void(Checkpoint&)>& fill) {
  Checkpoint c;
  c.stage = stage;
  c.iteration = iteration;
  c.seed = seed;
  c.config_json = config_json;
  fill(c);
  const std::string tmp = path + ".tmp";
  save_checkpoint(c, tmp);
  std::filesystem::rename(tmp, path);
}

inline void abort_if_not_finite(double v, const std::string& stage, int64_t iter) {
  if (!std::isfinite(v))
    throw Error(stage + ": non-finite loss at iter " + std::to_string(iter) +
                "; aborting (last-good checkpoint retained)");
}

// sums per-item losses for gradient accumulation over a batch
inline Tensor concat_and_sum(const std::vector<Tensor>& parts) {
  Tensor acc = parts[0];
  for (size_t i = 1; i < parts.size(); ++i) acc = add(acc, parts[i]);
  return acc;
}

// first-batch random-sample init of RVQ codebooks on per-layer residuals
inline void data_init_rvq(RVQState& st, const Tensor& features, Rng& rng) {
  std::vector<float> residual = features.data();
  const int T = features.rows();
  for (auto& cb : st.layers) {
    cb.init_from_samples(residual.data(), T, rng);
    auto idx = nearest_indices(residual.data(), T, cb);
    std::vector<float> q(residual.size());
    lookup_rows(cb, idx, q.data());
    for (size_t i = 0; i < residual.size(); ++i) residual[i] -= q[i];
  }
}

// ---------------------------------------------------------------------------
// stage: fine codec
// ---------------------------------------------------------------------------

struct TrainResult {
  std::string checkpoint_path;
  double final_loss = 0.0;
  int64_t iterations = 0;
  uint64_t fine_checksum_before = 0;
  uint64_t fine_checksum_after = 0;
};

inline TrainResult train_fine(const ModelConfig& model, const TrainParams& params,
                              const std::string& manifest_path, const std::string& run_dir) {
  model.validate();
  params.validate();
  std::filesystem::create_directories(run_dir);
  const std::string config_json = model_config_json(model);
  const std::string ckpt_path = run_dir + "/fine.ckpt";
  MetricLog log{run_dir + "/metrics.log"};

  Rng rng(params.seed);
  FineCodec codec(model.fine, rng);
  DiscriminatorBank bank(model.disc, rng);
  SegmentSampler sampler(load_split(manifest_path, "train"), params.segment_len,
                         params.seed ^ 0x5eedf00dull);

  {  // random-sample codebook init from the first segment's encoder output
    NoGradGuard ng;
    Tensor f0 = codec.encode(sampler.next());
    data_init_rvq(codec.rvq, f0, rng);
  }

  ParamList gen_params;
  codec.collect_params(gen_params);
  ParamList disc_params;
  bank.collect_params(disc_params);
  OptimizerConfig ocfg = params.optimizer;
  ocfg.lr = params.codec_lr;
  Optimizer opt_g(gen_params, ocfg);
  Optimizer opt_d(disc_params, ocfg);

  const auto resolutions = default_mrs_resolutions();
  TrainResult result;
  result.checkpoint_path = ckpt_path;

  auto save = [&](int64_t iter) {
    save_stage_checkpoint(ckpt_path, "fine", iter, params.seed, config_json,
                          [&](Checkpoint& c) { put_fine(c, codec); });
  };

  double last_total = 0.0;
  for (int64_t iter = 1; iter <= params.steps; ++iter) {
    double total = 0.0, adv = 0.0, fm = 0.0, mrs = 0.0, q = 0.0, d_mpd = 0.0, d_msd = 0.0;
    opt_d.zero_grad();
    opt_g.zero_grad();
    std::vector<Tensor> d_losses, g_losses;
    for (int b = 0; b < params.batch_size; ++b) {
      const std::vector<float> x = sampler.next();
      Tensor x_t = constant(x, params.segment_len, 1);

      Tensor f = codec.encode(x_t);
      auto qr = rvq_encode_train(f, codec.rvq, rng, /*update_codebooks=*/true);
      Tensor x_hat = codec.decode(qr.quantized);

      // discriminator step input: detached fake
      DiscOutput real_d = bank.forward(x_t);
      DiscOutput fake_d = bank.forward(constant(x_hat.data(), x_hat.rows(), 1));
      LossReport rep;
      discriminator_loss(real_d, fake_d, rep);
      d_losses.push_back(rep.d_total_t);

      DiscOutput real_g = bank.forward(x_t);
      DiscOutput fake_g = bank.forward(x_hat);
      LossReport grep = fine_codec_loss(x, x_hat, real_g, fake_g, qr.commit, params.weights,
                                        resolutions);
      g_losses.push_back(grep.total_t);
      total += grep.total;
      adv += grep.adv;
      fm += grep.fm;
      mrs += grep.mrs;
      q += grep.q;
      d_mpd += rep.d_mpd;
      d_msd += rep.d_msd;
    }
    const float inv_b = 1.0f / params.batch_size;
    Tensor d_loss = d_losses.size() == 1 ? d_losses[0] : scale(concat_and_sum(d_losses), inv_b);
    Tensor g_loss = g_losses.size() == 1 ? g_losses[0] : scale(concat_and_sum(g_losses), inv_b);
    abort_if_not_finite(total, "train-fine", iter);
    d_loss.backward();
    opt_d.step();
    g_loss.backward();
    opt_g.step();

    last_total = total * inv_b;
    if (iter % params.log_every == 0 || iter == params.steps) {
      log.append("fine", iter,
                 {{"lr", params.codec_lr},
                  {"total", total * inv_b},
                  {"adv", adv * inv_b},
                  {"fm", fm * inv_b},
                  {"mrs", mrs * inv_b},
                  {"q", q * inv_b},
                  {"d_mpd", d_mpd * inv_b},
                  {"d_msd", d_msd * inv_b}});
    }
    if (iter % params.checkpoint_every == 0) save(iter);
  }
  save(params.steps);
  result.final_loss = last_total;
  result.iterations = params.steps;
  result.fine_checksum_before = result.fine_checksum_after = codec.checksum();
  return result;
}

// ---------------------------------------------------------------------------
// stage: coarse codec (requires a fine checkpoint)
// ---------------------------------------------------------------------------

inline FineCodec load_fine_codec(const std::string& fine_ckpt, const ModelConfig& model) {
  check(file_exists(fine_ckpt), "missing prerequisite checkpoint: " + fine_ckpt);
  Checkpoint cf = load_checkpoint(fine_ckpt);
  check(cf.stage == "fine", "prerequisite is a '" + cf.stage + "' checkpoint, expected 'fine'");
  const std::string want = model_config_json(model);
  if (cf.config_json != want)
    throw Error("prerequisite config mismatch in field '" + config_diff(want, cf.config_json) +
                "'");
  Rng rng(0);
  FineCodec codec(model.fine, rng);
  load_fine(cf, codec);
  return codec;
}

inline TrainResult train_coarse(const ModelConfig& model, const TrainParams& params,
                                const std::string& manifest_path, const std::string& run_dir,
                                const std::string& fine_ckpt) {
  model.validate();
  params.validate();
  FineCodec fine = load_fine_codec(fine_ckpt, model);  // before any new state
  std::filesystem::create_directories(run_dir);
  const std::string config_json = model_config_json(model);
  const std::string ckpt_path = run_dir + "/coarse.ckpt";
  MetricLog log{run_dir + "/metrics.log"};

  ParamList fine_params;
  fine.collect_params(fine_params);
  set_requires_grad(fine_params, false);
  FrozenFineGuard guard(fine);

  Rng rng(params.seed + 1);
  CoarseCodec coarse(model.coarse, model.fine, rng);
  DiscriminatorBank bank(model.disc, rng);
  SegmentSampler sampler(load_split(manifest_path, "train"), params.segment_len,
                         params.seed ^ 0xc0a45eull);

  {  // init the coarse codebook from first-batch encoder outputs
    NoGradGuard ng;
    Tensor f0 = fine.encode(sampler.next());
    Tensor z0 = coarse.encoder_forward(f0);
    coarse.vq.init_from_samples(z0.data().data(), z0.rows(), rng);
  }

  ParamList gen_params;
  coarse.collect_params(gen_params);
  ParamList disc_params;
  bank.collect_params(disc_params);
  OptimizerConfig ocfg = params.optimizer;
  ocfg.lr = params.codec_lr;
  Optimizer opt_g(gen_params, ocfg);
  Optimizer opt_d(disc_params, ocfg);

  const auto resolutions = default_mrs_resolutions();
  TrainResult result;
  result.checkpoint_path = ckpt_path;
  result.fine_checksum_before = guard.checksum0;

  auto save = [&](int64_t iter) {
    save_stage_checkpoint(ckpt_path, "coarse", iter, params.seed, config_json,
                          [&](Checkpoint& c) { put_coarse(c, coarse); });
  };

  double last_total = 0.0;
  for (int64_t iter = 1; iter <= params.steps; ++iter) {
    double total = 0.0, adv = 0.0, fm = 0.0, mrs = 0.0, q = 0.0, d_mpd = 0.0, d_msd = 0.0,
           aux = 0.0;
    opt_d.zero_grad();
    opt_g.zero_grad();
    std::vector<Tensor> d_losses, g_losses;
    for (int b = 0; b < params.batch_size; ++b) {
      const std::vector<float> x = sampler.next();

      // frozen-fine features and reconstruction target
      std::vector<float> f_data;
      std::vector<float> target;
      int T = 0;
      {
        NoGradGuard ng;
        Tensor f = fine.encode(x);
        T = f.rows();
        f_data = f.data();
        auto qe = rvq_encode(f.data(), T, fine.rvq, fine.cfg.n_q);
        target = fine.decode(constant(qe.quantized, T, fine.cfg.latent_dim)).data();
      }

      Tensor f_const = constant(f_data, T, fine.cfg.latent_dim);
      auto enc = coarse.encode_train(f_const, rng, /*update_codebook=*/true);
      std::vector<Tensor> probs = coarse.decode_probs(enc.quantized);
      Tensor feats_hat = rvq_expected_decode_t(probs, fine.rvq);
      Tensor x_hat = fine.decode(feats_hat);

      Tensor x_tgt = constant(target, static_cast<int>(target.size()), 1);
      DiscOutput real_d = bank.forward(x_tgt);
      DiscOutput fake_d = bank.forward(constant(x_hat.data(), x_hat.rows(), 1));
      LossReport rep;
      discriminator_loss(real_d, fake_d, rep);
      d_losses.push_back(rep.d_total_t);

      DiscOutput real_g = bank.forward(x_tgt);
      DiscOutput fake_g = bank.forward(x_hat);
      LossReport grep = coarse_codec_loss(target, x_hat, real_g, fake_g, enc.commit,
                                          params.weights, guard, resolutions);
      Tensor g_total = grep.total_t;
      if (params.cc_feature_mse_weight > 0.0f) {
        Tensor fmse = mean_all(square(sub(feats_hat, f_const)));
        aux += fmse.item();
        g_total = add(g_total, scale(fmse, params.cc_feature_mse_weight));
      }
      g_losses.push_back(g_total);
      total += grep.total;
      adv += grep.adv;
      fm += grep.fm;
      mrs += grep.mrs;
      q += grep.q;
      d_mpd += rep.d_mpd;
      d_msd += rep.d_msd;
    }
    const float inv_b = 1.0f / params.batch_size;
    Tensor d_loss = d_losses.size() == 1 ? d_losses[0] : scale(concat_and_sum(d_losses), inv_b);
    Tensor g_loss = g_losses.size() == 1 ? g_losses[0] : scale(concat_and_sum(g_losses), inv_b);
    abort_if_not_finite(total, "train-coarse", iter);
    d_loss.backward();
    opt_d.step();
    g_loss.backward();
    opt_g.step();

    last_total = total * inv_b;
    if (iter % params.log_every == 0 || iter == params.steps) {
      log.append("coarse", iter,
                 {{"lr", params.codec_lr},
                  {"total", total * inv_b},
                  {"adv", adv * inv_b},
                  {"fm", fm * inv_b},
                  {"mrs", mrs * inv_b},
                  {"q", q * inv_b},
                  {"aux_fmse", aux * inv_b},
                  {"d_mpd", d_mpd * inv_b},
                  {"d_msd", d_msd * inv_b}});
    }
    if (iter % params.checkpoint_every == 0) {
      guard.verify();
      save(iter);
    }
  }
  guard.verify();
  save(params.steps);
  result.final_loss = last_total;
  result.iterations = params.steps;
  result.fine_checksum_after = fine.checksum();
  return result;
}

// ---------------------------------------------------------------------------
// stage: prefix LM (requires fine + coarse checkpoints)
// ---------------------------------------------------------------------------

inline CoarseCodec load_coarse_codec(const std::string& coarse_ckpt, const ModelConfig& model) {
  check(file_exists(coarse_ckpt), "missing prerequisite checkpoint: " + coarse_ckpt);
  Checkpoint cc = load_checkpoint(coarse_ckpt);
  check(cc.stage == "coarse",
        "prerequisite is a '" + cc.stage + "' checkpoint, expected 'coarse'");
  const std::string want = model_config_json(model);
  if (cc.config_json != want)
    throw Error("prerequisite config mismatch in field '" + config_diff(want, cc.config_json) +
                "'");
  Rng rng(0);
  CoarseCodec codec(model.coarse, model.fine, rng);
  load_coarse(cc, codec);
  return codec;
}

inline TrainResult train_lm(const ModelConfig& model, const TrainParams& params,
                            const std::string& manifest_path, const std::string& vocab_path,
                            const std::string& run_dir, const std::string& fine_ckpt,
                            const std::string& coarse_ckpt) {
  model.validate();
  params.validate();
  FineCodec fine = load_fine_codec(fine_ckpt, model);
  CoarseCodec coarse = load_coarse_codec(coarse_ckpt, model);
  std::filesystem::create_directories(run_dir);
  const std::string config_json = model_config_json(model);
  const std::string ckpt_path = run_dir + "/lm.ckpt";
  MetricLog log{run_dir + "/metrics.log"};

  ParamList fine_params;
  fine.collect_params(fine_params);
  set_requires_grad(fine_params, false);
  ParamList coarse_params;
  coarse.collect_params(coarse_params);
  set_requires_grad(coarse_params, false);
  FrozenFineGuard guard(fine);
  const uint64_t coarse_sum0 = coarse.checksum();

  Vocab vocab = vocab_from_text(read_text_file(vocab_path));
  auto utts = load_split(manifest_path, "train");

  Rng rng(params.seed + 2);
  PrefixLM lm(model.lm, model.coarse.K, rng);

  // extract coarse token sequences once; codecs are frozen
  std::vector<std::vector<int>> phonemes;
  std::vector<int> speakers;
  std::vector<std::vector<int>> token_seqs;
  {
    NoGradGuard ng;
    for (const auto& u : utts) {
      auto [padded, orig] = pad_to_frame(u.samples);
      (void)orig;
      Tensor f = fine.encode(padded);
      CoarseTokenSeq seq = coarse.encode(f);
      check(seq.length() <= model.lm.max_speech_len,
            "train-lm: utterance longer than max_speech_len");
      token_seqs.push_back(seq.indices);
      phonemes.push_back(tokenize_text(u.entry.text, vocab).tokens);
      speakers.push_back(u.entry.speaker_id);
    }
  }
  PrefixBatch batch = PrefixBatch::from_sequences(phonemes, speakers, token_seqs, lm.eos_id());

  ParamList lm_params;
  lm.collect_params(lm_params);
  OptimizerConfig ocfg = params.optimizer;
  Optimizer opt(lm_params, ocfg);

  TrainResult result;
  result.checkpoint_path = ckpt_path;
  result.fine_checksum_before = guard.checksum0;

  auto save = [&](int64_t iter) {
    save_stage_checkpoint(ckpt_path, "lm", iter, params.seed, config_json,
                          [&](Checkpoint& c) { put_lm(c, lm); });
  };

  double last_loss = 0.0;
  int64_t iter = 0;
  for (iter = 1; iter <= params.steps; ++iter) {
    opt.set_lr(params.lm_schedule.lr(iter));
    opt.zero_grad();
    auto [logits, loss] = lm.forward_loss(batch);
    const double v = loss.item();
    abort_if_not_finite(v, "train-lm", iter);
    loss.backward();
    opt.step();
    last_loss = v;
    if (iter % params.log_every == 0 || iter == params.steps)
      log.append("lm", iter, {{"lr", opt.lr()}, {"loss", v}});
    if (iter % params.checkpoint_every == 0) save(iter);
    if (params.lm_target_loss > 0.0f && v < params.lm_target_loss) break;
  }
  iter = std::min<int64_t>(iter, params.steps);
  guard.verify();
  check(coarse.checksum() == coarse_sum0, "train-lm: coarse codec drifted during LM training");
  save(iter);
  // ship the vocab next to the checkpoint so synthesis is self-contained
  write_text_file(run_dir + "/vocab.tsv", vocab_to_text(vocab));
  result.final_loss = last_loss;
  result.iterations = iter;
  result.fine_checksum_after = fine.checksum();
  return result;
}

// ---------------------------------------------------------------------------
// evaluation and ablation
// ---------------------------------------------------------------------------

struct UtteranceMetrics {
  std::string id;
  double snr_fine = 0.0;
  double mrs_fine = 0.0;
  double mrs_coarse = 0.0;
  double coarse_token_agreement = 0.0;  // tokens(x) vs tokens(fine reconstruction)
  double fine_token_agreement = 0.0;
};

struct EvalReport {
  std::vector<UtteranceMetrics> rows;
  double mean_snr_fine = 0.0;
  double mean_mrs_fine = 0.0;
  double mean_mrs_coarse = 0.0;
  double mean_coarse_agreement = 0.0;
  double mean_fine_agreement = 0.0;
  double bitrate_fine_kbps = 0.0;
  double bitrate_coarse_kbps = 0.0;
  std::vector<double> rvq_perplexity;
  double coarse_perplexity = 0.0;

  std::string to_text() const {
    std::ostringstream ss;
    ss << "id\tsnr_fine_db\tmrs_fine\tmrs_coarse\tcoarse_agree\tfine_agree\n";
    char buf[160];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof(buf), "%s\t%.3f\t%.5f\t%.5f\t%.3f\t%.3f\n", r.id.c_str(),
                    r.snr_fine, r.mrs_fine, r.mrs_coarse, r.coarse_token_agreement,
                    r.fine_token_agreement);
      ss << buf;
    }
    std::snprintf(buf, sizeof(buf), "mean\t%.3f\t%.5f\t%.5f\t%.3f\t%.3f\n", mean_snr_fine,
                  mean_mrs_fine, mean_mrs_coarse, mean_coarse_agreement, mean_fine_agreement);
    ss << buf;
    std::snprintf(buf, sizeof(buf), "bitrate_fine_kbps\t%.4f\nbitrate_coarse_kbps\t%.4f\n",
                  bitrate_fine_kbps, bitrate_coarse_kbps);
    ss << buf;
    ss << "rvq_perplexity";
    for (double p : rvq_perplexity) {
      std::snprintf(buf, sizeof(buf), "\t%.2f", p);
      ss << buf;
    }
    std::snprintf(buf, sizeof(buf), "\ncoarse_perplexity\t%.2f\n", coarse_perplexity);
    ss << buf;
    return ss.str();
  }
};

inline EvalReport eval_reconstruction(FineCodec& fine, CoarseCodec* coarse,
                                      const std::string& manifest_path,
                                      const std::string& split = "eval") {
  NoGradGuard ng;
  auto utts = load_split(manifest_path, split);  // manifest validation rejects split overlap
  EvalReport rep;
  rep.bitrate_fine_kbps = fc_bitrate(fine.cfg);
  if (coarse) rep.bitrate_coarse_kbps = coarse->cfg.bitrate_kbps(fine.cfg.frame_rate());
  for (const auto& cb : fine.rvq.layers) rep.rvq_perplexity.push_back(cb.perplexity());
  if (coarse) rep.coarse_perplexity = coarse->vq.perplexity();

  const auto resolutions = default_mrs_resolutions();
  for (const auto& u : utts) {
    UtteranceMetrics m;
    m.id = u.entry.id;
    auto [padded, orig] = pad_to_frame(u.samples);
    (void)orig;
    Tensor f = fine.encode(padded);
    FineTokenGrid grid = fine.quantize(f);
    std::vector<float> recon =
        fine.decode(constant(fine.decode_tokens(grid), grid.T, fine.cfg.latent_dim)).data();
    m.snr_fine = snr_db(padded, recon);
    m.mrs_fine = mrs_loss(padded, recon, resolutions);

    if (coarse) {
      CoarseTokenSeq seq = coarse->encode(f);
      RVQDistribution dist = coarse->decode_distribution(seq);
      FineTokenGrid cgrid = cc_select_fine_tokens(dist, FineSelectMode::kArgmax);
      std::vector<float> crecon =
          fine.decode(constant(fine.decode_tokens(cgrid), cgrid.T, fine.cfg.latent_dim)).data();
      m.mrs_coarse = mrs_loss(recon, crecon, resolutions);

      // token agreement between the waveform and its own fine reconstruction
      Tensor f2 = fine.encode(recon);
      CoarseTokenSeq seq2 = coarse->encode(f2);
      FineTokenGrid grid2 = fine.quantize(f2);
      int agree_c = 0;
      for (int t = 0; t < seq.length(); ++t) agree_c += seq.indices[t] == seq2.indices[t] ? 1 : 0;
      m.coarse_token_agreement = static_cast<double>(agree_c) / seq.length();
      int agree_f = 0;
      for (size_t i = 0; i < grid.ids.size(); ++i) agree_f += grid.ids[i] == grid2.ids[i] ? 1 : 0;
      m.fine_token_agreement = static_cast<double>(agree_f) / grid.ids.size();
    }
    rep.rows.push_back(m);
  }
  const double n = static_cast<double>(rep.rows.size());
  for (const auto& r : rep.rows) {
    rep.mean_snr_fine += r.snr_fine / n;
    rep.mean_mrs_fine += r.mrs_fine / n;
    rep.mean_mrs_coarse += r.mrs_coarse / n;
    rep.mean_coarse_agreement += r.coarse_token_agreement / n;
    rep.mean_fine_agreement += r.fine_token_agreement / n;
  }
  return rep;
}

struct AblationRow {
  int n_active = 0;
  double mean_mrs = 0.0;
  std::vector<double> per_utterance;
};

// reconstruction error as a function of the active quantizer count
inline std::vector<AblationRow> ablate_quantizers(FineCodec& fine,
                                                  const std::string& manifest_path,
                                                  const std::string& split,
                                                  const std::vector<int>& n_active_list) {
  NoGradGuard ng;
  check(!n_active_list.empty(), "ablate: empty n_active list");
  for (int n : n_active_list)
    check(n >= 1 && n <= fine.cfg.n_q, "ablate: n_active out of range");
  auto utts = load_split(manifest_path, split);
  const auto resolutions = default_mrs_resolutions();

  std::vector<AblationRow> table;
  for (int n : n_active_list) {
    AblationRow row;
    row.n_active = n;
    for (const auto& u : utts) {
      auto [padded, orig] = pad_to_frame(u.samples);
      (void)orig;
      Tensor f = fine.encode(padded);
      FineTokenGrid grid = fine.quantize(f, n);
      std::vector<float> recon =
          fine.decode(constant(rvq_decode(grid.to_layers(), fine.rvq), grid.T,
                               fine.cfg.latent_dim))
              .data();
      row.per_utterance.push_back(mrs_loss(padded, recon, resolutions));
    }
    for (double v : row.per_utterance) row.mean_mrs += v / row.per_utterance.size();
    table.push_back(std::move(row));
  }
  return table;
}

}  // namespace tts
