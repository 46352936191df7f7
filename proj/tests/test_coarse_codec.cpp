#include <catch2/catch_amalgamated.hpp>

#include "test_util.hpp"
#include "tokentts/coarse_codec.hpp"
#include "tokentts/losses.hpp"
#include "tokentts/optim.hpp"

using namespace tts;

namespace {

FineCodecConfig tiny_fine() {
  FineCodecConfig cfg;
  cfg.prelude_channels = 4;
  cfg.channels = {4, 6, 6, 8};
  cfg.latent_dim = 8;
  cfg.n_q = 3;
  cfg.K = 8;
  return cfg;
}

CoarseCodecConfig tiny_coarse() {
  CoarseCodecConfig cfg;
  cfg.encoder_blocks = 1;
  cfg.decoder_blocks = 1;
  cfg.K = 16;
  cfg.width = 16;
  cfg.heads = 2;
  return cfg;
}

}  // namespace

TEST_CASE("coarse encode is length preserving and deterministic") {
  Rng rng(1);
  CoarseCodec cc(tiny_coarse(), tiny_fine(), rng);
  Tensor f = test_util::random_tensor(rng, 40, 8, false);
  CoarseTokenSeq a = cc.encode(f);
  CoarseTokenSeq b = cc.encode(f);
  REQUIRE(a.length() == 40);
  REQUIRE(a.indices == b.indices);
  a.validate();
  for (int id : a.indices) REQUIRE(id < 16);

  Tensor wrong = test_util::random_tensor(rng, 4, 5, false);
  REQUIRE_THROWS(cc.encode(wrong));
}

TEST_CASE("decode_distribution is normalized per frame and layer") {
  Rng rng(2);
  CoarseCodec cc(tiny_coarse(), tiny_fine(), rng);
  CoarseTokenSeq tokens;
  tokens.K = 16;
  tokens.indices = {3, 7, 0};
  RVQDistribution dist = cc.decode_distribution(tokens);
  REQUIRE(dist.T == 3);
  REQUIRE(dist.n_q == 3);
  REQUIRE(dist.K == 8);
  dist.validate(1e-5f);

  // deterministic for fixed parameters and input
  RVQDistribution again = cc.decode_distribution(tokens);
  REQUIRE(dist.probs == again.probs);

  // single-frame shape check
  CoarseTokenSeq one;
  one.K = 16;
  one.indices = {5};
  RVQDistribution d1 = cc.decode_distribution(one);
  REQUIRE(d1.T == 1);
  REQUIRE(d1.probs.size() == static_cast<size_t>(1) * 3 * 8);

  CoarseTokenSeq bad;
  bad.K = 16;
  bad.indices = {99};
  REQUIRE_THROWS(cc.decode_distribution(bad));
}

TEST_CASE("one-hot distributions reduce coarse reconstruction to rvq_decode") {
  Rng rng(3);
  FineCodec fine(tiny_fine(), rng);
  RVQDistribution dist;
  dist.T = 2;
  dist.n_q = 3;
  dist.K = 8;
  dist.probs.assign(2 * 3 * 8, 0.0f);
  std::vector<std::vector<int>> grid_layers = {{1, 2}, {3, 4}, {5, 6}};
  for (int t = 0; t < 2; ++t)
    for (int q = 0; q < 3; ++q)
      dist.probs[(static_cast<size_t>(t) * 3 + q) * 8 + grid_layers[q][t]] = 1.0f;

  auto expected = rvq_decode(grid_layers, fine.rvq);
  auto got = rvq_expected_decode(dist, fine.rvq);
  for (size_t i = 0; i < expected.size(); ++i)
    REQUIRE(got[i] == Catch::Approx(expected[i]).margin(1e-6));
}

TEST_CASE("select fine tokens: argmax and sampling") {
  RVQDistribution dist;
  dist.T = 1;
  dist.n_q = 1;
  dist.K = 3;
  dist.probs = {0.1f, 0.7f, 0.2f};
  FineTokenGrid g = cc_select_fine_tokens(dist, FineSelectMode::kArgmax);
  REQUIRE(g.at(0, 0) == 1);

  // one-hot input: both modes return the hot index
  RVQDistribution hot = dist;
  hot.probs = {0.0f, 0.0f, 1.0f};
  REQUIRE(cc_select_fine_tokens(hot, FineSelectMode::kArgmax).at(0, 0) == 2);
  REQUIRE(cc_select_fine_tokens(hot, FineSelectMode::kSample, 7).at(0, 0) == 2);

  // argmax ties resolve to the lowest index
  RVQDistribution tie = dist;
  tie.probs = {0.4f, 0.4f, 0.2f};
  REQUIRE(cc_select_fine_tokens(tie, FineSelectMode::kArgmax).at(0, 0) == 0);

  // empirical frequencies over 10000 draws from (0.25, 0.75) within +-0.02
  RVQDistribution two;
  two.T = 1;
  two.n_q = 1;
  two.K = 2;
  two.probs = {0.25f, 0.75f};
  int count1 = 0;
  for (int i = 0; i < 10000; ++i)
    count1 += cc_select_fine_tokens(two, FineSelectMode::kSample, 1000 + i).at(0, 0);
  REQUIRE(std::fabs(count1 / 10000.0 - 0.75) < 0.02);

  // fixed seed is reproducible
  REQUIRE(cc_select_fine_tokens(dist, FineSelectMode::kSample, 5).ids ==
          cc_select_fine_tokens(dist, FineSelectMode::kSample, 5).ids);
}

TEST_CASE("coarse training path: gradients stop at the frozen fine codebooks") {
  Rng rng(4);
  FineCodec fine(tiny_fine(), rng);
  CoarseCodec cc(tiny_coarse(), tiny_fine(), rng);

  ParamList fine_params;
  fine.collect_params(fine_params);
  set_requires_grad(fine_params, false);
  const uint64_t fine_sum_before = fine.checksum();

  ParamList cc_params;
  cc.collect_params(cc_params);

  Tensor f = test_util::random_tensor(rng, 4, 8, false);
  auto enc = cc.encode_train(f, rng, false);
  auto probs = cc.decode_probs(enc.quantized);
  Tensor feats = rvq_expected_decode_t(probs, fine.rvq);
  Tensor wave = fine.decode(feats);
  Tensor loss = add(mean_all(square(wave)), enc.commit);
  zero_grads(cc_params);
  loss.backward();

  bool coarse_any = false;
  for (auto& p : cc_params) {
    if (!p.tensor.has_grad()) continue;
    for (float g : p.tensor.grad()) coarse_any = coarse_any || g != 0.0f;
  }
  REQUIRE(coarse_any);
  for (auto& p : fine_params) {
    if (!p.tensor.has_grad()) continue;
    for (float g : p.tensor.grad()) REQUIRE(g == 0.0f);
  }
  REQUIRE(fine.checksum() == fine_sum_before);
}

TEST_CASE("expected decode error beats the best constant frame after a few steps") {
  // miniature regression: train decoder heads to reconstruct fixed features
  Rng rng(5);
  FineCodec fine(tiny_fine(), rng);
  CoarseCodec cc(tiny_coarse(), tiny_fine(), rng);
  ParamList cc_params;
  cc.collect_params(cc_params);
  OptimizerConfig ocfg;
  ocfg.lr = 0.02f;
  ocfg.beta2 = 0.99f;
  Optimizer opt(cc_params, ocfg);

  Tensor f = test_util::random_tensor(rng, 6, 8, false, 0.5f);
  double err = 0.0;
  for (int step = 0; step < 250; ++step) {
    opt.zero_grad();
    auto enc = cc.encode_train(f, rng, true);
    Tensor rec = rvq_expected_decode_t(cc.decode_probs(enc.quantized), fine.rvq);
    Tensor loss = add(mean_all(square(sub(rec, f))), enc.commit);
    loss.backward();
    opt.step();
    err = mean_all(square(sub(rec, f))).item();
  }

  // error of the best single constant frame (the per-column mean)
  double best_const = 0.0;
  for (int c = 0; c < 8; ++c) {
    double mu = 0.0;
    for (int t = 0; t < 6; ++t) mu += f.data()[t * 8 + c];
    mu /= 6.0;
    for (int t = 0; t < 6; ++t) {
      const double d = f.data()[t * 8 + c] - mu;
      best_const += d * d;
    }
  }
  best_const /= (6.0 * 8.0);
  REQUIRE(err < best_const);
}

TEST_CASE("coarse checkpoint round trip preserves tokens") {
  Rng rng(6);
  CoarseCodec cc(tiny_coarse(), tiny_fine(), rng);
  Tensor f = test_util::random_tensor(rng, 10, 8, false);
  CoarseTokenSeq t1 = cc.encode(f);

  Checkpoint c;
  c.stage = "coarse";
  put_coarse(c, cc);

  Rng rng2(777);
  CoarseCodec other(tiny_coarse(), tiny_fine(), rng2);
  load_coarse(c, other);
  CoarseTokenSeq t2 = other.encode(f);
  REQUIRE(t1.indices == t2.indices);
  REQUIRE(cc.checksum() == other.checksum());
}
