#include <catch2/catch_amalgamated.hpp>

#include "test_util.hpp"
#include "tokentts/ops.hpp"

using namespace tts;
using test_util::max_rel_err;
using test_util::numeric_grad;
using test_util::random_tensor;

namespace {

// Runs fn() to build a fresh graph, backprops, and compares the analytic grad
// of `x` with central differences.
void check_grad(Tensor x, const std::function<Tensor()>& fn, float tol = 2e-2f) {
  x.zero_grad();
  Tensor loss = fn();
  loss.backward();
  std::vector<float> analytic = x.grad();
  auto numeric = numeric_grad(x, [&]() { return fn().item(); });
  INFO("max rel err " << max_rel_err(analytic, numeric));
  REQUIRE(max_rel_err(analytic, numeric) < tol);
}

}  // namespace

TEST_CASE("backward accumulates across shared subexpressions") {
  Tensor x = Tensor::from({2.0f}, 1, 1, true);
  Tensor y = add(mul(x, x), x);  // x^2 + x -> dy/dx = 2x + 1 = 5
  y.backward();
  REQUIRE(x.grad()[0] == Catch::Approx(5.0f));
}

TEST_CASE("no-grad mode records no tape") {
  Tensor x = Tensor::from({1.0f, 2.0f}, 2, 1, true);
  NoGradGuard ng;
  Tensor y = mean_all(square(x));
  REQUIRE_FALSE(y.requires_grad());
}

TEST_CASE("elementwise and reduction gradients match finite differences") {
  Rng rng(7);
  Tensor x = random_tensor(rng, 3, 4);
  Tensor w = random_tensor(rng, 3, 4, false);

  check_grad(x, [&] { return mean_all(mul(x, w)); });
  check_grad(x, [&] { return sum_all(square(add(x, w))); });
  check_grad(x, [&] { return mean_all(abs_t(sub(x, w))); });
  check_grad(x, [&] { return mean_all(tanh_t(x)); });
  check_grad(x, [&] { return mean_all(elu(x)); });
  check_grad(x, [&] { return mean_all(swish(x)); });
  check_grad(x, [&] { return mean_all(sigmoid(x)); });
  check_grad(x, [&] { return mean_all(leaky_relu(x, 0.1f)); });
  check_grad(x, [&] { return sqrt_eps(sum_all(square(x)), 1e-6f); });
  check_grad(x, [&] { return mean_all(log_eps(square(x), 1e-3f)); });
  check_grad(x, [&] { return mean_all(scale(add_scalar(x, 0.5f), -2.0f)); });
}

TEST_CASE("matmul gradients") {
  Rng rng(11);
  Tensor a = random_tensor(rng, 3, 5);
  Tensor b = random_tensor(rng, 5, 2);
  check_grad(a, [&] { return mean_all(matmul(a, b)); });
  check_grad(b, [&] { return sum_all(square(matmul(a, b))); });

  Tensor c = random_tensor(rng, 4, 5);
  check_grad(c, [&] { return mean_all(matmul_nt(a, c)); });
  check_grad(a, [&] { return mean_all(transpose(matmul_nt(a, c))); });
}

TEST_CASE("slicing and concat gradients") {
  Rng rng(13);
  Tensor x = random_tensor(rng, 6, 3);
  check_grad(x, [&] { return mean_all(slice_rows(x, 1, 4)); });
  check_grad(x, [&] { return mean_all(slice_cols(x, 1, 2)); });
  check_grad(x, [&] { return mean_all(concat_rows({slice_rows(x, 0, 2), slice_rows(x, 3, 3)})); });
  check_grad(x, [&] { return mean_all(strided_rows(x, 1, 2)); });
  check_grad(x, [&] { return sum_all(gather_rows(x, {0, 2, 2, 5})); });
  check_grad(x, [&] { return mean_all(reshape(x, 3, 6)); });
}

TEST_CASE("softmax family gradients") {
  Rng rng(17);
  Tensor x = random_tensor(rng, 4, 6);
  Tensor v = random_tensor(rng, 4, 6, false);
  check_grad(x, [&] { return mean_all(mul(softmax_rows(x), v)); }, 3e-2f);
  check_grad(x, [&] { return mean_all(mul(log_softmax_rows(x), v)); });
  check_grad(x, [&] {
    return cross_entropy_rows(x, {1, 0, 5, 2}, {1.0f, 1.0f, 0.0f, 1.0f});
  });
}

TEST_CASE("cross entropy on uniform logits equals ln V") {
  const int V = 37;
  Tensor logits = Tensor::zeros(3, V, true);
  Tensor loss = cross_entropy_rows(logits, {0, 12, 36}, {1.0f, 1.0f, 1.0f});
  REQUIRE(loss.item() == Catch::Approx(std::log(static_cast<double>(V))).epsilon(1e-6));
}

TEST_CASE("layer norm gradients") {
  Rng rng(19);
  Tensor x = random_tensor(rng, 3, 8);
  Tensor gamma = random_tensor(rng, 1, 8);
  Tensor beta = random_tensor(rng, 1, 8);
  Tensor v = random_tensor(rng, 3, 8, false);
  auto loss = [&] { return mean_all(mul(layer_norm_rows(x, gamma, beta), v)); };
  check_grad(x, loss, 3e-2f);
  check_grad(gamma, loss);
  check_grad(beta, loss);
}

TEST_CASE("conv1d gradients") {
  Rng rng(23);
  const int T = 12, cin = 3, cout = 4, K = 5, stride = 2, pad = 2;
  Tensor x = random_tensor(rng, T, cin);
  Tensor w = random_tensor(rng, K * cin, cout, true, 0.4f);
  Tensor b = random_tensor(rng, 1, cout);
  auto loss = [&] { return mean_all(square(conv1d(x, w, b, K, stride, pad))); };
  check_grad(x, loss, 3e-2f);
  check_grad(w, loss, 3e-2f);
  check_grad(b, loss);
}

TEST_CASE("conv_tr1d gradients and length") {
  Rng rng(29);
  const int T = 7, cin = 3, cout = 2, K = 8, stride = 4, pad = 2;
  Tensor x = random_tensor(rng, T, cin);
  Tensor w = random_tensor(rng, cin, K * cout, true, 0.4f);
  Tensor b = random_tensor(rng, 1, cout);
  Tensor y = conv_tr1d(x, w, b, K, stride, pad);
  REQUIRE(y.rows() == (T - 1) * stride + K - 2 * pad);
  auto loss = [&] { return mean_all(square(conv_tr1d(x, w, b, K, stride, pad))); };
  check_grad(x, loss, 3e-2f);
  check_grad(w, loss, 3e-2f);
  check_grad(b, loss);
}

TEST_CASE("stride arithmetic is exact for codec kernel choices") {
  // even stride s: kernel 2s, pad s/2; odd stride s: kernel 2s+1, pad (s+1)/2
  for (int s : {4, 5, 6}) {
    const int k = (s % 2 == 0) ? 2 * s : 2 * s + 1;
    const int p = (s % 2 == 0) ? s / 2 : (s + 1) / 2;
    for (int t : {s, 3 * s, 8 * s}) {
      Tensor x = Tensor::zeros(t, 1);
      Tensor w = Tensor::zeros(k, 1);
      Tensor wt = Tensor::zeros(1, k);
      REQUIRE(conv1d(x, w, Tensor(), k, s, p).rows() == t / s);
      Tensor lat = Tensor::zeros(t / s, 1);
      REQUIRE(conv_tr1d(lat, wt, Tensor(), k, s, p).rows() == t);
    }
  }
}

TEST_CASE("depthwise conv and avg pool gradients") {
  Rng rng(31);
  Tensor x = random_tensor(rng, 10, 3);
  Tensor w = random_tensor(rng, 5, 3, true, 0.4f);
  Tensor b = random_tensor(rng, 1, 3);
  auto loss = [&] { return mean_all(square(depthwise_conv1d(x, w, b, 2))); };
  check_grad(x, loss, 3e-2f);
  check_grad(w, loss, 3e-2f);
  check_grad(x, [&] { return mean_all(square(avg_pool_rows(x, 4, 2))); }, 3e-2f);
}

TEST_CASE("straight-through passes gradients unchanged") {
  Rng rng(37);
  Tensor x = random_tensor(rng, 4, 3);
  std::vector<float> q(x.data().size());
  for (auto& v : q) v = rng.normal();
  Tensor st = straight_through(x, q);
  Tensor post = random_tensor(rng, 3, 2, false);
  Tensor loss = mean_all(square(matmul(st, post)));
  loss.backward();
  REQUIRE(x.grad() == st.grad());
  REQUIRE(st.data() == q);
}

TEST_CASE("add_row_bias broadcasts and backpropagates") {
  Rng rng(41);
  Tensor x = random_tensor(rng, 5, 3);
  Tensor b = random_tensor(rng, 1, 3);
  auto loss = [&] { return mean_all(square(add_row_bias(x, b))); };
  check_grad(x, loss);
  check_grad(b, loss);
}
