#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "codelid/error.hpp"
#include "codelid/nn/grad_check.hpp"
#include "codelid/nn/ops.hpp"

using namespace codelid::nn;

namespace {

Parameter<double> random_param(const std::string& name, Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Tensor<double> t(std::move(shape));
  for (auto& x : t.data) x = d(rng);
  return Parameter<double>(name, std::move(t));
}

// Weighted sum so that every output element gets a distinct gradient.
Var weighted_sum(Graph<double>& g, Var x, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor<double> w(g.value(x).shape);
  for (auto& v : w.data) v = u(rng);
  return sum(g, mul(g, x, g.constant(std::move(w))));
}

double check(const LossFn& f, std::vector<Parameter<double>*> params) {
  return grad_check(f, params);
}

}  // namespace

TEST_CASE("softmax and log_softmax") {
  std::vector<double> v{1.0, 2.0, 3.0};
  auto p = softmax<double>(v);
  double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  CHECK(p[2] == doctest::Approx(std::exp(3.0) / z).epsilon(1e-14));
  auto lp = log_softmax<double>(v);
  CHECK(lp[0] == doctest::Approx(1.0 - std::log(z)).epsilon(1e-14));
  std::vector<double> big{1000.0, 1000.0};
  CHECK(softmax<double>(big)[0] == doctest::Approx(0.5));
  CHECK_THROWS_AS(softmax<double>(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("layer norm and cross entropy kernels") {
  std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  std::vector<double> gain(4, 1.0), bias(4, 0.0);
  auto y = layer_norm<double>(v, gain, bias, 1e-300);
  CHECK(y[0] == doctest::Approx(-1.5 / std::sqrt(1.25)).epsilon(1e-14));
  double mean = 0;
  for (double x : y) mean += x;
  CHECK(std::abs(mean) < 1e-12);

  std::vector<double> logits{0.0, 0.0, 0.0, 0.0};
  CHECK(cross_entropy<double>(logits, 2) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  CHECK(gelu(0.0) == 0.0);
  CHECK(gelu(1.0) == doctest::Approx(0.5 * (1.0 + std::erf(1.0 / std::sqrt(2.0)))).epsilon(1e-14));
}

TEST_CASE("matmul values") {
  Graph<double> g;
  Var a = g.constant(Tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6}));
  Var b = g.constant(Tensor<double>({3, 2}, {7, 8, 9, 10, 11, 12}));
  CHECK(g.value(matmul(g, a, b)).data == std::vector<double>{58, 64, 139, 154});
  Var bt = g.constant(Tensor<double>({2, 3}, {7, 9, 11, 8, 10, 12}));
  CHECK(g.value(matmul_transposed(g, a, bt)).data == std::vector<double>{58, 64, 139, 154});
  CHECK_THROWS_AS(matmul(g, a, a), std::invalid_argument);
}

TEST_CASE("gradients of primitives match finite differences") {
  std::mt19937_64 rng(1);
  auto a = random_param("a", {3, 4}, rng);
  auto b = random_param("b", {4, 5}, rng);
  auto c = random_param("c", {5, 4}, rng);
  auto bias = random_param("bias", {5}, rng);
  auto gain = random_param("gain", {4}, rng);
  auto beta = random_param("beta", {4}, rng);
  auto same = random_param("same", {3, 4}, rng);

  SUBCASE("matmul and bias") {
    CHECK(check([&](Graph<double>& g) {
      return weighted_sum(g, add_bias(g, matmul(g, g.parameter(a), g.parameter(b)), g.parameter(bias)));
    }, {&a, &b, &bias}) < 1e-7);
  }
  SUBCASE("matmul_transposed") {
    CHECK(check([&](Graph<double>& g) {
      return weighted_sum(g, matmul_transposed(g, g.parameter(a), g.parameter(c)));
    }, {&a, &c}) < 1e-7);
  }
  SUBCASE("add, mul, reshape") {
    CHECK(check([&](Graph<double>& g) {
      Var x = add(g, g.parameter(a), g.parameter(same));
      Var y = mul(g, x, g.parameter(same));
      return weighted_sum(g, reshape(g, y, {12}));
    }, {&a, &same}) < 1e-7);
  }
  SUBCASE("gelu") {
    CHECK(check([&](Graph<double>& g) { return weighted_sum(g, gelu(g, g.parameter(a))); }, {&a}) < 1e-7);
  }
  SUBCASE("softmax rows") {
    CHECK(check([&](Graph<double>& g) { return weighted_sum(g, softmax_rows(g, g.parameter(a))); }, {&a}) < 1e-6);
  }
  SUBCASE("layer norm") {
    CHECK(check([&](Graph<double>& g) {
      return weighted_sum(g, layer_norm(g, g.parameter(a), g.parameter(gain), g.parameter(beta)));
    }, {&a, &gain, &beta}) < 1e-6);
  }
  SUBCASE("embedding and gather") {
    std::vector<std::int32_t> ids{2, 0, 2, 1};
    std::vector<std::size_t> rows{3, 0, 3};
    CHECK(check([&](Graph<double>& g) {
      Var e = embedding(g, g.parameter(a), ids);
      return weighted_sum(g, gather_rows(g, e, rows));
    }, {&a}) < 1e-7);
  }
  SUBCASE("cross entropy with ignored rows") {
    std::vector<std::int32_t> targets{1, kIgnoreIndex, 3};
    CHECK(check([&](Graph<double>& g) { return cross_entropy(g, g.parameter(a), targets); }, {&a}) < 1e-7);
  }
}

TEST_CASE("attention gradients and masking") {
  std::mt19937_64 rng(2);
  const std::size_t batch = 2, len = 3, dim = 4, heads = 2;
  auto q = random_param("q", {batch * len, dim}, rng);
  auto k = random_param("k", {batch * len, dim}, rng);
  auto v = random_param("v", {batch * len, dim}, rng);
  std::vector<std::uint8_t> mask{1, 1, 1, 1, 1, 0};

  CHECK(check([&](Graph<double>& g) {
    return weighted_sum(g, attention(g, g.parameter(q), g.parameter(k), g.parameter(v), mask, batch, len, heads));
  }, {&q, &k, &v}) < 1e-6);

  // A masked key's value never influences the output.
  Graph<double> g1;
  Var out1 = attention(g1, g1.constant(q.value), g1.constant(k.value), g1.constant(v.value), mask, batch, len, heads);
  auto v2 = v.value;
  for (std::size_t c = 0; c < dim; ++c) v2.at(5, c) += 100.0;
  Graph<double> g2;
  Var out2 = attention(g2, g2.constant(q.value), g2.constant(k.value), g2.constant(v2), mask, batch, len, heads);
  for (std::size_t i = 0; i < g1.value(out1).size(); ++i) CHECK(g1.value(out1)[i] == g2.value(out2)[i]);
}

TEST_CASE("dropout") {
  std::mt19937_64 rng(3);
  Graph<double> g;
  Var x = g.constant(Tensor<double>({1000}, 1.0));
  const auto& kept = g.value(dropout(g, x, 0.0, rng));
  CHECK(kept.data == std::vector<double>(1000, 1.0));
  const auto& y = g.value(dropout(g, x, 0.5, rng));
  std::size_t zeros = 0;
  for (double t : y.data) {
    CHECK((t == 0.0 || t == doctest::Approx(2.0)));
    zeros += t == 0.0;
  }
  CHECK(zeros > 400);
  CHECK(zeros < 600);
}

TEST_CASE("cross entropy edge cases") {
  Graph<double> g;
  Var logits = g.constant(Tensor<double>({2, 3}, {0, 0, 0, 1, 2, 3}));
  std::vector<std::int32_t> none{kIgnoreIndex, kIgnoreIndex};
  CHECK(g.value(cross_entropy(g, logits, none))[0] == 0.0);
  std::vector<std::int32_t> bad{5, 0};
  CHECK_THROWS_AS(cross_entropy(g, logits, bad), std::out_of_range);
  Var inf = g.constant(Tensor<double>({1, 2}, {std::numeric_limits<double>::infinity(), 0.0}));
  std::vector<std::int32_t> one{1};
  CHECK_THROWS_AS(cross_entropy(g, inf, one), codelid::DataError);
}

TEST_CASE("graph bookkeeping") {
  Parameter<double> p("p", Tensor<double>({2}, {1.0, 2.0}));
  p.grad.fill(5.0);
  p.zero_grad();
  Graph<double> g;
  Var x = g.parameter(p);
  Var y = sum(g, mul(g, x, x));
  g.backward(y);
  CHECK(p.grad.data == std::vector<double>{2.0, 4.0});

  // A parameter used twice accumulates both paths.
  p.zero_grad();
  Graph<double> g2;
  Var a = g2.parameter(p);
  g2.backward(sum(g2, add(g2, a, a)));
  CHECK(p.grad.data == std::vector<double>{2.0, 2.0});

  Graph<double> g3;
  CHECK_THROWS_AS(g3.backward(g3.parameter(p)), std::invalid_argument);
}

TEST_CASE("grad_check rejects bad step sizes and detects wrong gradients") {
  Parameter<double> p("p", Tensor<double>({1}, {0.3}));
  std::vector<Parameter<double>*> ps{&p};
  auto f = [&](Graph<double>& g) { return sum(g, gelu(g, g.parameter(p))); };
  CHECK_THROWS_AS(grad_check(f, ps, 1e-9), std::invalid_argument);
  CHECK_THROWS_AS(grad_check(f, ps, 1e-2), std::invalid_argument);

  // An op whose backward is deliberately wrong.
  auto broken = [&](Graph<double>& g) {
    Var x = g.parameter(p);
    Tensor<double> out({1}, {g.value(x)[0] * g.value(x)[0]});
    return g.record(std::move(out), {x}, [x](Graph<double>& gr, Var o) { gr.grad(x)[0] += gr.grad(o)[0]; });
  };
  CHECK(grad_check(broken, ps) > 0.1);
}

TEST_CASE("float instantiation") {
  Graph<float> g;
  Var a = g.constant(Tensor<float>({1, 2}, {1.0f, 2.0f}));
  CHECK(g.value(softmax_rows(g, a))[1] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
}
