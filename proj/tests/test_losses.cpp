#include <catch2/catch_amalgamated.hpp>

#include "test_util.hpp"
#include "tokentts/losses.hpp"

using namespace tts;

namespace {

DiscriminatorConfig tiny_disc_cfg() {
  DiscriminatorConfig cfg;
  cfg.channels = {4, 8, 8};
  return cfg;
}

// bank output with a single fake discriminator holding given constant logits
DiscOutput const_bank(const std::string& name, float logit_value, int n = 6) {
  DiscOutput out;
  DiscSingleOutput d;
  d.name = name;
  d.logits = constant(std::vector<float>(n, logit_value), n, 1);
  d.feats = {d.logits};
  out.discs.push_back(d);
  return out;
}

}  // namespace

TEST_CASE("period discriminator reshapes by its period") {
  Rng rng(1);
  DiscriminatorBank bank(tiny_disc_cfg(), rng);
  NoGradGuard ng;
  Tensor x = test_util::random_tensor(rng, 24000, 1, false, 0.1f);
  DiscOutput out = bank.forward(x);
  REQUIRE(out.by_name("mpd_p2").reshaped_len == 12000);
  REQUIRE(out.by_name("mpd_p3").reshaped_len == 8000);
  // 24000 is not a multiple of 7: zero-padded up before the column split
  REQUIRE(out.by_name("mpd_p7").reshaped_len == 24003 / 7);
  for (const auto& d : out.discs)
    for (float v : d.logits.data()) REQUIRE(std::isfinite(v));

  REQUIRE_THROWS_WITH(bank.forward(Tensor::zeros(10, 1)),
                      Catch::Matchers::ContainsSubstring("too short"));
}

TEST_CASE("identical real and fake inputs give identical features and zero fm") {
  Rng rng(2);
  DiscriminatorBank bank(tiny_disc_cfg(), rng);
  NoGradGuard ng;
  Tensor x = test_util::random_tensor(rng, 4000, 1, false, 0.2f);
  DiscOutput a = bank.forward(x);
  DiscOutput b = bank.forward(x);
  for (size_t i = 0; i < a.discs.size(); ++i) {
    REQUIRE(a.discs[i].logits.data() == b.discs[i].logits.data());
    Tensor fm = feature_match_loss(a.discs[i].feats, b.discs[i].feats);
    REQUIRE(fm.item() == 0.0f);
  }
}

TEST_CASE("adversarial pair loss closed forms") {
  auto mk = [](float v) { return constant(std::vector<float>(8, v), 8, 1); };

  auto [d1, g1] = adversarial_pair_loss(mk(1.0f), mk(0.0f));
  REQUIRE(d1.item() == Catch::Approx(0.0f));
  REQUIRE(g1.item() == Catch::Approx(1.0f));

  auto [d2, g2] = adversarial_pair_loss(mk(0.0f), mk(1.0f));
  REQUIRE(d2.item() == Catch::Approx(2.0f));
  REQUIRE(g2.item() == Catch::Approx(0.0f));

  auto [d3, g3] = adversarial_pair_loss(mk(0.5f), mk(0.5f));
  REQUIRE(d3.item() == Catch::Approx(0.5f));
  REQUIRE(g3.item() == Catch::Approx(0.25f));
}

TEST_CASE("feature match loss identities and symmetry") {
  Rng rng(3);
  Tensor a = test_util::random_tensor(rng, 5, 4, false);
  Tensor b = test_util::random_tensor(rng, 5, 4, false);
  REQUIRE(feature_match_loss({a}, {a}).item() == 0.0f);

  std::vector<float> shifted(a.data());
  for (auto& v : shifted) v += 1.0f;
  Tensor a1 = constant(shifted, 5, 4);
  REQUIRE(feature_match_loss({a}, {a1}).item() == Catch::Approx(1.0f));

  REQUIRE(feature_match_loss({a}, {b}).item() == Catch::Approx(feature_match_loss({b}, {a}).item()));
  REQUIRE_THROWS(feature_match_loss({a}, {Tensor::zeros(4, 4)}));
}

TEST_CASE("mrs loss identities and monotonicity in gain mismatch") {
  auto res = default_mrs_resolutions();
  std::vector<float> sine(6000);
  for (size_t i = 0; i < sine.size(); ++i)
    sine[i] = 0.5f * std::sin(2.0 * M_PI * 440.0 * i / 16000.0);

  REQUIRE(mrs_loss(sine, sine, res) == Catch::Approx(0.0).margin(1e-9));

  std::vector<float> silence(6000, 0.0f);
  REQUIRE(mrs_loss(sine, silence, res) > 0.0);

  std::vector<float> x15(sine), x20(sine);
  for (auto& v : x15) v *= 1.5f;
  for (auto& v : x20) v *= 2.0f;
  const double l15 = mrs_loss(sine, x15, res);
  const double l20 = mrs_loss(sine, x20, res);
  REQUIRE(l20 > l15);
  REQUIRE(l15 > 0.0);

  REQUIRE_THROWS(mrs_loss(sine, std::vector<float>(100, 0.0f), res));
}

TEST_CASE("mrs loss gradient reaches the estimate") {
  Rng rng(5);
  std::vector<float> target(2600);
  for (auto& v : target) v = 0.3f * rng.normal();
  Tensor x_hat = test_util::random_tensor(rng, 2600, 1, true, 0.3f);
  Tensor loss = mrs_loss_t(target, x_hat, {{512, 128, 512}});
  loss.backward();
  bool any = false;
  for (float g : x_hat.grad()) any = any || g != 0.0f;
  REQUIRE(any);
}

TEST_CASE("generator assembly hits zero on the identity case") {
  // perfect reconstruction, fooled discriminators, zero commit
  std::vector<float> x(4096);
  for (size_t i = 0; i < x.size(); ++i) x[i] = 0.4f * std::sin(0.05 * i);
  Tensor x_hat = constant(x, static_cast<int>(x.size()), 1);

  DiscOutput real = const_bank("mpd_p2", 0.7f);
  DiscOutput fake = const_bank("mpd_p2", 1.0f);  // logits pinned at 1: fooled
  // identical feature maps so fm vanishes
  fake.discs[0].feats = real.discs[0].feats;

  LossWeights w;
  LossReport rep = generator_loss(x, x_hat, real, fake, Tensor::scalar(0.0f), w,
                                  default_mrs_resolutions());
  REQUIRE(rep.adv == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(rep.fm == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(rep.mrs == Catch::Approx(0.0).margin(1e-9));
  REQUIRE(rep.q == 0.0);
  REQUIRE(rep.total == Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("generator total equals the hand-summed weighted terms") {
  Rng rng(7);
  std::vector<float> x(4096);
  for (auto& v : x) v = 0.2f * rng.normal();
  Tensor x_hat = test_util::random_tensor(rng, 4096, 1, true, 0.2f);

  DiscOutput real = const_bank("msd_s1", 0.9f);
  DiscOutput fake = const_bank("msd_s1", 0.3f);

  LossWeights w;
  w.adv = 0.5f;
  w.fm = 2.0f;
  w.mrs = 1.5f;
  w.q = 3.0f;
  Tensor commit = Tensor::scalar(0.125f);
  LossReport rep = generator_loss(x, x_hat, real, fake, commit, w, default_mrs_resolutions());
  const double hand = 0.5 * rep.adv + 2.0 * rep.fm + 1.5 * rep.mrs + 3.0 * rep.q;
  REQUIRE(rep.total == Catch::Approx(hand).epsilon(1e-5));

  // mrs-only weighting reduces the total to the mrs term
  LossWeights only_mrs;
  only_mrs.adv = 0.0f;
  only_mrs.fm = 0.0f;
  only_mrs.mrs = 1.0f;
  only_mrs.q = 0.0f;
  LossReport rep2 = generator_loss(x, x_hat, real, fake, commit, only_mrs,
                                   default_mrs_resolutions());
  REQUIRE(rep2.total == Catch::Approx(rep2.mrs).epsilon(1e-6));
}

TEST_CASE("discriminator loss splits mpd and msd families") {
  DiscOutput real;
  real.discs.push_back(const_bank("mpd_p2", 1.0f).discs[0]);
  real.discs.push_back(const_bank("msd_s1", 0.0f).discs[0]);
  DiscOutput fake;
  fake.discs.push_back(const_bank("mpd_p2", 0.0f).discs[0]);
  fake.discs.push_back(const_bank("msd_s1", 1.0f).discs[0]);

  LossReport rep;
  discriminator_loss(real, fake, rep);
  REQUIRE(rep.d_mpd == Catch::Approx(0.0));  // real 1, fake 0
  REQUIRE(rep.d_msd == Catch::Approx(2.0));  // real 0, fake 1
  REQUIRE(rep.d_total == Catch::Approx(2.0));
}

TEST_CASE("frozen fine guard detects parameter drift") {
  Rng rng(8);
  FineCodecConfig cfg;
  cfg.prelude_channels = 4;
  cfg.channels = {4, 4, 6, 6};
  cfg.latent_dim = 4;
  cfg.n_q = 2;
  cfg.K = 4;
  FineCodec codec(cfg, rng);
  FrozenFineGuard guard(codec);
  guard.verify();
  codec.dec.to_wave.w.data()[0] += 1e-5f;
  REQUIRE_THROWS_WITH(guard.verify(), Catch::Matchers::ContainsSubstring("checksum"));
}

TEST_CASE("snr metric basics") {
  std::vector<float> x = {0.5f, -0.25f, 0.75f};
  REQUIRE(snr_db(x, x) == 120.0);  // identity capped
  std::vector<float> y = {0.4f, -0.25f, 0.75f};
  REQUIRE(snr_db(x, y) > 0.0);
  REQUIRE(snr_db(x, std::vector<float>(3, 0.0f)) == Catch::Approx(0.0).margin(1e-9));
}
