#include <catch2/catch_amalgamated.hpp>

#include "test_util.hpp"
#include "tokentts/optim.hpp"
#include "tokentts/prefix_lm.hpp"

using namespace tts;

namespace {

LMConfig tiny_lm_cfg() {
  LMConfig cfg;
  cfg.decoder_layers = 2;
  cfg.phoneme_encoder_blocks = 1;
  cfg.width = 32;
  cfg.heads = 2;
  cfg.ff_mult = 2;
  cfg.phoneme_vocab = 8;
  cfg.speaker_count = 2;
  cfg.max_prefix_len = 16;
  cfg.max_speech_len = 32;
  return cfg;
}

constexpr int kCoarseK = 12;

}  // namespace

TEST_CASE("attention mask matches the enumerated rule") {
  // prefix 2, speech 2 -> rows 1100 / 1100 / 1110 / 1111
  auto m = build_attention_mask(2, 2);
  const std::vector<uint8_t> expect = {1, 1, 0, 0, 1, 1, 0, 0, 1, 1, 1, 0, 1, 1, 1, 1};
  REQUIRE(m == expect);

  // independent enumeration for every (prefix, speech) <= 8
  for (int p = 0; p <= 8; ++p)
    for (int s = 0; s <= 8; ++s) {
      auto mask = build_attention_mask(p, s);
      const int L = p + s;
      REQUIRE(static_cast<int>(mask.size()) == L * L);
      for (int q = 0; q < L; ++q)
        for (int k = 0; k < L; ++k) {
          bool expect_ok;
          if (q < p) {
            expect_ok = k < p;  // prefix attends to the whole prefix, only
          } else {
            expect_ok = (k < p) || (k <= q);  // speech: prefix + causal
          }
          REQUIRE(static_cast<bool>(mask[q * L + k]) == expect_ok);
        }
    }

  // speech_len 0 -> full-ones prefix block
  auto pf = build_attention_mask(3, 0);
  for (uint8_t v : pf) REQUIRE(v == 1);

  // last speech position attends to every position
  auto full = build_attention_mask(3, 4);
  for (int k = 0; k < 7; ++k) REQUIRE(full[6 * 7 + k] == 1);
}

TEST_CASE("encode_prefix prepends the speaker slot") {
  Rng rng(1);
  PrefixLM lm(tiny_lm_cfg(), kCoarseK, rng);
  NoGradGuard ng;
  std::vector<int> ph(10, 3);
  Tensor p0 = lm.encode_prefix(ph, 0);
  REQUIRE(p0.rows() == 11);
  REQUIRE(p0.cols() == 32);

  Tensor p0_again = lm.encode_prefix(ph, 0);
  REQUIRE(p0.data() == p0_again.data());  // deterministic in eval mode

  Tensor p1 = lm.encode_prefix(ph, 1);
  bool row0_differs = false;
  for (int c = 0; c < 32; ++c) row0_differs = row0_differs || p0.data()[c] != p1.data()[c];
  REQUIRE(row0_differs);

  REQUIRE_THROWS_WITH(lm.encode_prefix(ph, 5), Catch::Matchers::ContainsSubstring("unknown speaker"));
  REQUIRE_THROWS(lm.encode_prefix({}, 0));
}

TEST_CASE("uniform logits give exactly ln V") {
  Rng rng(2);
  PrefixLM lm(tiny_lm_cfg(), kCoarseK, rng);
  // zero the output head: logits identically zero = uniform distribution
  std::fill(lm.head.w.data().begin(), lm.head.w.data().end(), 0.0f);
  std::fill(lm.head.b.data().begin(), lm.head.b.data().end(), 0.0f);

  PrefixBatch batch = PrefixBatch::from_sequences({{1, 2}}, {0}, {{3, 4, 5}}, lm.eos_id());
  auto [logits, loss] = lm.forward_loss(batch);
  const double lnv = std::log(static_cast<double>(lm.cfg.speech_vocab(kCoarseK)));
  REQUIRE(loss.item() == Catch::Approx(lnv).epsilon(1e-6));
}

TEST_CASE("hand-constructed two-token batch matches the arithmetic oracle") {
  Rng rng(3);
  PrefixLM lm(tiny_lm_cfg(), kCoarseK, rng);
  // zero weights + fixed bias u: every position sees logits == u
  std::fill(lm.head.w.data().begin(), lm.head.w.data().end(), 0.0f);
  const int V = lm.cfg.speech_vocab(kCoarseK);
  Rng bias_rng(17);
  for (int c = 0; c < V; ++c) lm.head.b.data()[c] = 0.3f * bias_rng.normal();

  const std::vector<int> targets = {4, lm.eos_id()};
  PrefixBatch batch;
  batch.phonemes = {{1}};
  batch.speakers = {0};
  batch.targets = {targets};
  batch.pad_mask = {{1.0f, 1.0f}};
  batch.eos_id = lm.eos_id();

  auto [logits, loss] = lm.forward_loss(batch);

  // oracle: -(log p(c1) + log p(c2)) / 2 with p = softmax(bias)
  double z = 0.0, mx = -1e30;
  for (int c = 0; c < V; ++c) mx = std::max(mx, static_cast<double>(lm.head.b.data()[c]));
  for (int c = 0; c < V; ++c) z += std::exp(static_cast<double>(lm.head.b.data()[c]) - mx);
  auto logp = [&](int c) { return static_cast<double>(lm.head.b.data()[c]) - mx - std::log(z); };
  const double oracle = -(logp(targets[0]) + logp(targets[1])) / 2.0;
  REQUIRE(loss.item() == Catch::Approx(oracle).epsilon(1e-6));
}

TEST_CASE("padding positions do not affect the loss") {
  Rng rng(4);
  PrefixLM lm(tiny_lm_cfg(), kCoarseK, rng);
  PrefixBatch batch = PrefixBatch::from_sequences({{1, 2}, {3}}, {0, 1}, {{3, 4, 5}, {6}},
                                                  lm.eos_id());
  auto [l1, loss1] = lm.forward_loss(batch);
  // second row has padding past position 1; perturb a padded target cell
  batch.targets[1][3] = 7;
  auto [l2, loss2] = lm.forward_loss(batch);
  REQUIRE(loss1.item() == loss2.item());
}

TEST_CASE("causality: perturbing a speech input changes only later logits") {
  Rng rng(5);
  PrefixLM lm(tiny_lm_cfg(), kCoarseK, rng);
  NoGradGuard ng;
  Tensor prefix = lm.encode_prefix({1, 2, 3}, 0);
  std::vector<int> inputs = {lm.bos_id(), 2, 5, 7, 1, 4};
  Tensor base = lm.decode_logits(prefix, inputs);

  const int j = 3;  // perturb input at speech position 3
  std::vector<int> perturbed = inputs;
  perturbed[j] = 9;
  Tensor out = lm.decode_logits(prefix, perturbed);

  const int V = base.cols();
  for (int t = 0; t < j; ++t)
    for (int c = 0; c < V; ++c)
      REQUIRE(base.data()[t * V + c] == out.data()[t * V + c]);
  bool later_changed = false;
  for (size_t i = static_cast<size_t>(j) * V; i < base.data().size(); ++i)
    later_changed = later_changed || base.data()[i] != out.data()[i];
  REQUIRE(later_changed);
}

TEST_CASE("prefix bidirectionality: any phoneme influences every speech position") {
  Rng rng(6);
  PrefixLM lm(tiny_lm_cfg(), kCoarseK, rng);
  NoGradGuard ng;
  std::vector<int> ph = {1, 2, 3, 4};
  std::vector<int> inputs = {lm.bos_id(), 2, 5, 7};
  Tensor base = lm.decode_logits(lm.encode_prefix(ph, 0), inputs);
  const int V = base.cols();
  for (size_t slot = 0; slot < ph.size(); ++slot) {
    std::vector<int> mod = ph;
    mod[slot] = 7;
    Tensor out = lm.decode_logits(lm.encode_prefix(mod, 0), inputs);
    for (int t = 0; t < base.rows(); ++t) {
      bool row_changed = false;
      for (int c = 0; c < V; ++c)
        row_changed = row_changed || base.data()[t * V + c] != out.data()[t * V + c];
      REQUIRE(row_changed);
    }
  }
}

TEST_CASE("gradients flow from the loss into every prefix slot") {
  Rng rng(7);
  PrefixLM lm(tiny_lm_cfg(), kCoarseK, rng);
  PrefixBatch batch = PrefixBatch::from_sequences({{1, 2, 3}}, {0}, {{3, 4}}, lm.eos_id());
  ParamList params;
  lm.collect_params(params);
  zero_grads(params);
  auto [logits, loss] = lm.forward_loss(batch);
  loss.backward();
  // the phoneme embedding rows used must have received gradient
  for (int id : {1, 2, 3}) {
    bool any = false;
    for (int c = 0; c < 32; ++c)
      any = any || lm.phoneme_emb.table.grad()[id * 32 + c] != 0.0f;
    REQUIRE(any);
  }
  bool spk = false;
  for (int c = 0; c < 32; ++c) spk = spk || lm.speaker_emb.table.grad()[c] != 0.0f;
  REQUIRE(spk);
}

TEST_CASE("nucleus set and sampling contracts") {
  // (0.5, 0.3, 0.2) with p = 0.7 -> nucleus {0, 1}
  std::vector<float> probs = {0.5f, 0.3f, 0.2f};
  auto nucleus = nucleus_set(probs, 0.7f);
  REQUIRE(nucleus == std::vector<int>{0, 1});

  // token 2 never sampled over 10000 draws
  Rng rng(8);
  std::vector<int> counts(3, 0);
  for (int i = 0; i < 10000; ++i) {
    auto [tok, nuc] = nucleus_sample(probs, 0.7f, rng);
    counts[tok]++;
  }
  REQUIRE(counts[2] == 0);
  // renormalized frequencies: 0.5/0.8 and 0.3/0.8 within 2%
  REQUIRE(std::fabs(counts[0] / 10000.0 - 0.625) < 0.02);

  // p = 1: all tokens, frequencies match the raw distribution
  Rng rng2(9);
  std::vector<int> c2(3, 0);
  for (int i = 0; i < 10000; ++i) {
    auto [tok, nuc] = nucleus_sample(probs, 1.0f, rng2);
    c2[tok]++;
  }
  for (int k = 0; k < 3; ++k) REQUIRE(std::fabs(c2[k] / 10000.0 - probs[k]) < 0.02);

  // tiny p reduces to greedy argmax
  auto tiny = nucleus_set(probs, 1e-9f);
  REQUIRE(tiny == std::vector<int>{0});
}

TEST_CASE("generation is deterministic and respects max_len") {
  Rng rng(10);
  PrefixLM lm(tiny_lm_cfg(), kCoarseK, rng);
  auto a = lm.generate({1, 2}, 0, 0.9f, 1.0f, 8, 1234);
  auto b = lm.generate({1, 2}, 0, 0.9f, 1.0f, 8, 1234);
  REQUIRE(a.tokens == b.tokens);
  REQUIRE(a.truncated == b.truncated);
  if (a.truncated) REQUIRE(a.tokens.size() == 8);
  for (int t : a.tokens) REQUIRE(t < kCoarseK);

  // top_p -> 0 equals greedy decoding
  auto g1 = lm.generate({1, 2}, 0, 1e-9f, 1.0f, 8, 77);
  auto g2 = lm.generate_greedy({1, 2}, 0, 8);
  REQUIRE(g1.tokens == g2.tokens);

  REQUIRE_THROWS(lm.generate({1}, 0, 0.0f, 1.0f, 8, 1));
  REQUIRE_THROWS(lm.generate({1}, 0, 0.9f, 0.0f, 8, 1));
}

TEST_CASE("a tiny LM overfits two sequences and reproduces them greedily") {
  Rng rng(11);
  LMConfig cfg = tiny_lm_cfg();
  PrefixLM lm(cfg, kCoarseK, rng);
  ParamList params;
  lm.collect_params(params);
  OptimizerConfig ocfg;
  ocfg.lr = 2e-3f;
  ocfg.beta2 = 0.99f;
  Optimizer opt(params, ocfg);

  const std::vector<std::vector<int>> phonemes = {{1, 1, 2}, {3, 4, 4}};
  const std::vector<int> speakers = {0, 1};
  const std::vector<std::vector<int>> seqs = {{2, 2, 7, 7, 5}, {1, 3, 3, 0, 6}};
  PrefixBatch batch = PrefixBatch::from_sequences(phonemes, speakers, seqs, lm.eos_id());

  float loss_val = 1e9f;
  for (int step = 0; step < 400 && loss_val > 0.05f; ++step) {
    opt.zero_grad();
    auto [logits, loss] = lm.forward_loss(batch);
    loss.backward();
    opt.step();
    loss_val = loss.item();
  }
  REQUIRE(loss_val < 0.1f);

  for (int i = 0; i < 2; ++i) {
    auto out = lm.generate_greedy(phonemes[i], speakers[i], 16);
    REQUIRE(out.tokens == seqs[i]);
    REQUIRE_FALSE(out.truncated);
  }
}

TEST_CASE("lm checkpoint round trip preserves generation") {
  Rng rng(12);
  PrefixLM lm(tiny_lm_cfg(), kCoarseK, rng);
  auto before = lm.generate({1, 2, 3}, 1, 0.8f, 1.0f, 6, 99);

  Checkpoint c;
  c.stage = "lm";
  put_lm(c, lm);

  Rng rng2(333);
  PrefixLM other(tiny_lm_cfg(), kCoarseK, rng2);
  load_lm(c, other);
  auto after = other.generate({1, 2, 3}, 1, 0.8f, 1.0f, 6, 99);
  REQUIRE(before.tokens == after.tokens);
  REQUIRE(lm.checksum() == other.checksum());
}
