#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "test_util.hpp"
#include "tokentts/trainer.hpp"

using namespace tts;

namespace {

std::string temp_dir(const std::string& tag) {
  auto p = std::filesystem::temp_directory_path() / ("tokentts_train_" + tag);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

ModelConfig tiny_model_config() {
  ModelConfig c;
  c.fine.prelude_channels = 4;
  c.fine.channels = {4, 6, 6, 8};
  c.fine.latent_dim = 8;
  c.fine.n_q = 3;
  c.fine.K = 8;
  c.coarse.encoder_blocks = 1;
  c.coarse.decoder_blocks = 1;
  c.coarse.K = 16;
  c.coarse.width = 16;
  c.coarse.heads = 2;
  c.lm.decoder_layers = 1;
  c.lm.phoneme_encoder_blocks = 1;
  c.lm.width = 16;
  c.lm.heads = 2;
  c.lm.ff_mult = 2;
  c.lm.phoneme_vocab = 8;
  c.lm.speaker_count = 2;
  c.lm.max_prefix_len = 16;
  c.lm.max_speech_len = 64;
  c.disc.channels = {4, 8, 8};
  return c;
}

TrainParams tiny_train_params() {
  TrainParams p;
  p.seed = 3;
  p.segment_len = 2400;  // >= the largest mrs fft size
  p.steps = 6;
  p.checkpoint_every = 3;
  p.log_every = 2;
  p.optimizer.beta2 = 0.99f;
  return p;
}

std::string make_tiny_dataset(const std::string& dir) {
  GeneratorConfig cfg;
  cfg.speakers = {{1.0f, {1.0f, 0.5f}}, {1.2f, {1.0f, 0.3f}}};
  cfg.alphabet = {{'A', 200.0f, 0.15f}, {'B', 240.0f, 0.15f}};
  cfg.fixed_texts = {"AA", "BB"};
  cfg.random_utterances = 2;
  cfg.eval_utterances = 2;
  build_synthetic_dataset(cfg, 11, dir);
  return dir + "/manifest.tsv";
}

}  // namespace

TEST_CASE("metric log appends and parses") {
  const std::string dir = temp_dir("log");
  MetricLog log{dir + "/metrics.log"};
  log.append("fine", 10, {{"total", 1.5}, {"mrs", 0.25}});
  log.append("lm", 20, {{"loss", 0.125}});
  auto rows = MetricLog::parse(log.path);
  REQUIRE(rows.size() == 2);
  REQUIRE(rows[0].stage == "fine");
  REQUIRE(rows[0].iter == 10);
  REQUIRE(rows[0].values.at("total") == Catch::Approx(1.5));
  REQUIRE(rows[1].stage == "lm");
  REQUIRE(rows[1].values.at("loss") == Catch::Approx(0.125));
}

TEST_CASE("train params json round trip") {
  TrainParams p;
  p.seed = 9;
  p.segment_len = 4800;
  p.weights.fm = 3.5f;
  p.lm_schedule.horizon = 12345;
  nlohmann::json j = p;
  TrainParams q = j.get<TrainParams>();
  REQUIRE(q.seed == 9);
  REQUIRE(q.segment_len == 4800);
  REQUIRE(q.weights.fm == Catch::Approx(3.5f));
  REQUIRE(q.lm_schedule.horizon == 12345);

  TrainParams bad;
  bad.segment_len = 601;
  REQUIRE_THROWS(bad.validate());
}

TEST_CASE("stage ordering is enforced before any parameter is touched") {
  const std::string data = temp_dir("order_data");
  const std::string run = temp_dir("order_run");
  const std::string manifest = make_tiny_dataset(data);
  ModelConfig model = tiny_model_config();
  TrainParams params = tiny_train_params();

  REQUIRE_THROWS_WITH(train_coarse(model, params, manifest, run, run + "/fine.ckpt"),
                      Catch::Matchers::ContainsSubstring("missing prerequisite"));
  REQUIRE_THROWS_WITH(
      train_lm(model, params, manifest, data + "/vocab.tsv", run, run + "/fine.ckpt",
               run + "/coarse.ckpt"),
      Catch::Matchers::ContainsSubstring("missing prerequisite"));
}

TEST_CASE("three-stage toy run trains, freezes, and synthesizes") {
  const std::string data = temp_dir("e2e_data");
  const std::string run = temp_dir("e2e_run");
  const std::string manifest = make_tiny_dataset(data);
  ModelConfig model = tiny_model_config();
  TrainParams params = tiny_train_params();

  TrainResult fine_res = train_fine(model, params, manifest, run);
  REQUIRE(std::filesystem::exists(fine_res.checkpoint_path));
  REQUIRE(std::isfinite(fine_res.final_loss));

  // wrong-stage prerequisite is rejected
  REQUIRE_THROWS_WITH(train_coarse(model, params, manifest, run, fine_res.checkpoint_path + "x"),
                      Catch::Matchers::ContainsSubstring("missing prerequisite"));

  TrainResult coarse_res = train_coarse(model, params, manifest, run, fine_res.checkpoint_path);
  REQUIRE(std::filesystem::exists(coarse_res.checkpoint_path));
  REQUIRE(coarse_res.fine_checksum_before == coarse_res.fine_checksum_after);

  // config mismatch is named
  ModelConfig other = model;
  other.fine.K = 16;
  REQUIRE_THROWS_WITH(train_coarse(other, params, manifest, run, fine_res.checkpoint_path),
                      Catch::Matchers::ContainsSubstring("fine"));

  TrainParams lm_params = params;
  lm_params.steps = 40;
  TrainResult lm_res = train_lm(model, lm_params, manifest, data + "/vocab.tsv", run,
                                fine_res.checkpoint_path, coarse_res.checkpoint_path);
  REQUIRE(std::filesystem::exists(lm_res.checkpoint_path));
  REQUIRE(lm_res.fine_checksum_before == lm_res.fine_checksum_after);
  REQUIRE(std::filesystem::exists(run + "/vocab.tsv"));

  // metrics log has rows for all three stages
  auto rows = MetricLog::parse(run + "/metrics.log");
  bool saw_fine = false, saw_coarse = false, saw_lm = false;
  for (const auto& r : rows) {
    saw_fine = saw_fine || r.stage == "fine";
    saw_coarse = saw_coarse || r.stage == "coarse";
    saw_lm = saw_lm || r.stage == "lm";
  }
  REQUIRE(saw_fine);
  REQUIRE(saw_coarse);
  REQUIRE(saw_lm);

  // the stage checkpoints load as a coherent bundle and synthesize audio
  ModelBundle bundle = load_bundle(fine_res.checkpoint_path, coarse_res.checkpoint_path,
                                   lm_res.checkpoint_path, run + "/vocab.tsv");
  SamplingConfig sampling;
  sampling.greedy = true;
  sampling.max_len = 8;
  Waveform w = synthesize(bundle, "AA", 0, sampling);
  REQUIRE(w.samples.size() % 600 == 0);

  // checkpoints reload to bit-identical evaluation metrics
  FineCodec fine_a = load_fine_codec(fine_res.checkpoint_path, model);
  FineCodec fine_b = load_fine_codec(fine_res.checkpoint_path, model);
  CoarseCodec coarse_a = load_coarse_codec(coarse_res.checkpoint_path, model);
  EvalReport ra = eval_reconstruction(fine_a, &coarse_a, manifest);
  EvalReport rb = eval_reconstruction(fine_b, &coarse_a, manifest);
  REQUIRE(ra.mean_snr_fine == rb.mean_snr_fine);
  REQUIRE(ra.mean_mrs_fine == rb.mean_mrs_fine);
  REQUIRE(ra.bitrate_fine_kbps == Catch::Approx(fc_bitrate(model.fine)));
  REQUIRE(ra.rvq_perplexity.size() == 3);
  for (double p : ra.rvq_perplexity) {
    REQUIRE(p >= 1.0);
    REQUIRE(p <= model.fine.K + 1e-9);
  }

  // ablation table shape and precondition
  auto table = ablate_quantizers(fine_a, manifest, "eval", {1, 2, 3});
  REQUIRE(table.size() == 3);
  for (const auto& row : table) REQUIRE(row.per_utterance.size() == 2);
  REQUIRE_THROWS(ablate_quantizers(fine_a, manifest, "eval", {0}));
  REQUIRE_THROWS(ablate_quantizers(fine_a, manifest, "eval", {}));
}

TEST_CASE("non-finite losses abort") {
  REQUIRE_THROWS_WITH(abort_if_not_finite(std::nan(""), "train-fine", 7),
                      Catch::Matchers::ContainsSubstring("non-finite"));
  REQUIRE_NOTHROW(abort_if_not_finite(1.25, "train-fine", 7));
}
