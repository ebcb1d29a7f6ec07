#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dptbench/grad_check.hpp"
#include "dptbench/graph.hpp"
#include "dptbench/rng.hpp"
#include "dptbench/tensor.hpp"

using namespace dptbench;
using ad::Graph;
using ad::Tensor;
using ad::Value;

namespace {

Tensor random_tensor(Index rows, Index cols, RngStream& rng, Scalar lo = -2.0,
                     Scalar hi = 2.0) {
  Mat m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(lo, hi);
  return Tensor(std::move(m));
}

}  // namespace

TEST_CASE("sigmoid scalar values") {
  CHECK(ad::sigmoid(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(ad::sigmoid(30.0) > 1.0 - 1e-12);
  CHECK(ad::sigmoid(30.0) < 1.0);
  // Independent scalar recomputation of 1/(1+e^-0.3).
  const Scalar expected = 1.0 / (1.0 + std::exp(-0.3));
  CHECK(ad::sigmoid(0.3) == expected);
  CHECK(expected == doctest::Approx(0.574442516811659).epsilon(1e-14));
}

TEST_CASE("sigmoid stays strictly inside (0,1) at extreme inputs") {
  CHECK(ad::sigmoid(1000.0) < 1.0);
  CHECK(ad::sigmoid(-1000.0) > 0.0);
}

TEST_CASE("sigmoid rejects non-finite input") {
  CHECK_THROWS_AS(ad::sigmoid(std::numeric_limits<Scalar>::quiet_NaN()), InvalidValueError);
  CHECK_THROWS_AS(ad::sigmoid(std::numeric_limits<Scalar>::infinity()), InvalidValueError);
  Tensor t = Tensor::scalar(std::numeric_limits<Scalar>::infinity());
  CHECK_THROWS_AS(ad::sigmoid(t), InvalidValueError);
}

TEST_CASE("sigmoid symmetry: s(x) + s(-x) = 1") {
  RngStream rng(11);
  for (int i = 0; i < 1000; ++i) {
    const Scalar x = rng.uniform(-700.0, 700.0);
    CHECK(std::abs(ad::sigmoid(x) + ad::sigmoid(-x) - 1.0) < 1e-12);
  }
}

TEST_CASE("bce analytic values") {
  CHECK(ad::bce(0.5, 1) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(ad::bce(0.5, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(ad::bce(0.9, 1) == doctest::Approx(0.10536051565782628).epsilon(1e-12));
}

TEST_CASE("bce clamps saturated scores instead of returning NaN") {
  CHECK(std::isfinite(ad::bce(0.0, 1)));
  CHECK(std::isfinite(ad::bce(1.0, 0)));
  CHECK(ad::bce(0.0, 1) == doctest::Approx(-std::log(1e-12)).epsilon(1e-12));
  CHECK_THROWS_AS(ad::bce(0.5, 2), ContractError);
  CHECK_THROWS_AS(ad::bce(std::numeric_limits<Scalar>::quiet_NaN(), 1), InvalidValueError);
}

TEST_CASE("bce label split identity") {
  RngStream rng(12);
  for (int i = 0; i < 200; ++i) {
    const Scalar s = rng.uniform(1e-6, 1.0 - 1e-6);
    const Scalar lhs = ad::bce(s, 1) + ad::bce(s, 0);
    const Scalar rhs = -(std::log(s)) - (std::log(1.0 - s));
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-15));
  }
}

TEST_CASE("backward: d sigmoid(w) / dw at 0 is 0.25") {
  Tensor w = Tensor::scalar(0.0);
  Graph g;
  const Value loss = sum(sigmoid(g.param(w)));
  const auto grads = backward(g, loss);
  CHECK(grads[0].value() == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("backward: sum of squares gradient") {
  Tensor v(Mat{{3.0, 4.0}});
  Graph g;
  const Value x = g.param(v);
  const Value loss = sum(mul(x, x));
  const auto grads = backward(g, loss);
  CHECK(grads[0].mat()(0, 0) == doctest::Approx(6.0).epsilon(1e-15));
  CHECK(grads[0].mat()(0, 1) == doctest::Approx(8.0).epsilon(1e-15));
}

TEST_CASE("backward rejects non-scalar loss") {
  Tensor v(Mat{{1.0, 2.0}});
  Graph g;
  const Value x = g.param(v);
  CHECK_THROWS_AS(backward(g, x), ContractError);
}

TEST_CASE("backward is deterministic: bitwise identical gradients") {
  RngStream rng(13);
  Tensor a = random_tensor(5, 7, rng);
  Tensor b = random_tensor(7, 3, rng);
  Graph g;
  const Value loss = sum(gelu(matmul(g.param(a), g.param(b))));
  const auto g1 = backward(g, loss);
  const auto g2 = backward(g, loss);
  REQUIRE(g1.size() == g2.size());
  for (std::size_t i = 0; i < g1.size(); ++i) {
    if (g1[i].size() == 0) {
      CHECK(g2[i].size() == 0);
      continue;
    }
    for (Index k = 0; k < g1[i].size(); ++k) CHECK(g1[i].data()[k] == g2[i].data()[k]);
  }
}

TEST_CASE("grad_check: quadratic loss is exact to roundoff") {
  RngStream rng(14);
  Tensor v = random_tensor(4, 4, rng);
  std::vector<Tensor*> params = {&v};
  const Scalar err = ad::grad_check(
      [](Graph& g, std::span<const Value> leaves) {
        (void)g;
        return sum(mul(leaves[0], leaves[0]));
      },
      params, {.eps = 1e-5, .seed = 1});
  CHECK(err < 1e-8);
}

TEST_CASE("grad_check flags a corrupted gradient at ratio 1/3") {
  RngStream rng(15);
  Tensor v = random_tensor(3, 3, rng, 0.5, 2.0);
  std::vector<Tensor*> params = {&v};
  const ad::LossBuilder loss_fn = [](Graph& g, std::span<const Value> leaves) {
    (void)g;
    return sum(mul(leaves[0], leaves[0]));
  };
  // Analytic gradient of sum(x^2) is 2x; corrupt one coordinate by x2.
  Tensor analytic(Mat(2.0 * v.mat()));
  analytic.mat()(1, 1) *= 2.0;
  const Scalar err = ad::max_rel_error_vs_central_diff(loss_fn, params, {&analytic, 1},
                                                       {.eps = 1e-5, .seed = 1});
  CHECK(err == doctest::Approx(1.0 / 3.0).epsilon(1e-3));
}

TEST_CASE("grad_check validates its step size range") {
  Tensor v = Tensor::scalar(1.0);
  std::vector<Tensor*> params = {&v};
  const ad::LossBuilder loss_fn = [](Graph&, std::span<const Value> leaves) {
    return sum(leaves[0]);
  };
  CHECK_THROWS_AS(ad::grad_check(loss_fn, params, {.eps = 1e-2}), ContractError);
  CHECK_THROWS_AS(ad::grad_check(loss_fn, params, {.eps = 1e-9}), ContractError);
}

// Every differentiable op, checked against central differences at randomly
// sampled coordinates (well over 100 per op across repetitions).
TEST_CASE("grad_check per op") {
  const Scalar kTol = 1e-6;
  RngStream rng(16);

  auto check = [&](const ad::LossBuilder& fn, std::vector<Tensor*> params,
                   std::uint64_t seed) {
    const Scalar err = ad::grad_check(fn, params, {.eps = 1e-5, .seed = seed});
    CHECK(err < kTol);
  };

  for (int rep = 0; rep < 4; ++rep) {
    const auto seed = static_cast<std::uint64_t>(rep + 1);
    {
      Tensor a = random_tensor(5, 6, rng);
      Tensor b = random_tensor(5, 6, rng);
      check([](Graph&, std::span<const Value> v) { return sum(add(v[0], v[1])); },
            {&a, &b}, seed);
    }
    {
      Tensor a = random_tensor(5, 6, rng);
      Tensor b = random_tensor(1, 6, rng);
      check([](Graph&, std::span<const Value> v) { return sum(gelu(add_row(v[0], v[1]))); },
            {&a, &b}, seed);
    }
    {
      Tensor a = random_tensor(4, 5, rng);
      Tensor b = random_tensor(5, 3, rng);
      check([](Graph&, std::span<const Value> v) { return sum(matmul(v[0], v[1])); },
            {&a, &b}, seed);
    }
    {
      Tensor a = random_tensor(4, 5, rng);
      Tensor b = random_tensor(6, 5, rng);
      check([](Graph&, std::span<const Value> v) { return sum(matmul_nt(v[0], v[1])); },
            {&a, &b}, seed);
    }
    {
      Tensor a = random_tensor(4, 4, rng);
      check([](Graph&, std::span<const Value> v) { return sum(affine(v[0], -1.7, 0.4)); },
            {&a}, seed);
    }
    {
      Tensor a = random_tensor(4, 4, rng);
      Tensor b = random_tensor(4, 4, rng);
      check([](Graph&, std::span<const Value> v) { return sum(mul(v[0], v[1])); }, {&a, &b},
            seed);
    }
    {
      Tensor x = random_tensor(5, 8, rng);
      Tensor gain = random_tensor(1, 8, rng, 0.5, 1.5);
      Tensor bias = random_tensor(1, 8, rng, -0.5, 0.5);
      check(
          [](Graph&, std::span<const Value> v) {
            return sum(sigmoid(layer_norm(v[0], v[1], v[2])));
          },
          {&x, &gain, &bias}, seed);
    }
    {
      Tensor x = random_tensor(5, 5, rng);
      check([](Graph&, std::span<const Value> v) { return sum(gelu(v[0])); }, {&x}, seed);
    }
    {
      Tensor x = random_tensor(4, 6, rng);
      check(
          [](Graph&, std::span<const Value> v) {
            return sum(mul(softmax_rows(v[0]), v[0]));
          },
          {&x}, seed);
    }
    {
      Tensor x = random_tensor(4, 8, rng);
      check(
          [](Graph&, std::span<const Value> v) {
            return sum(sigmoid(col_block(v[0], 2, 4)));
          },
          {&x}, seed);
    }
    {
      Tensor a = random_tensor(3, 4, rng);
      Tensor b = random_tensor(3, 2, rng);
      check(
          [](Graph&, std::span<const Value> v) {
            const std::vector<Value> parts = {v[0], v[1]};
            return sum(gelu(concat_cols(parts)));
          },
          {&a, &b}, seed);
    }
    {
      Tensor x = random_tensor(6, 3, rng);
      check([](Graph&, std::span<const Value> v) { return sum(sigmoid(v[0])); }, {&x}, seed);
    }
    {
      Tensor x = random_tensor(4, 4, rng, 0.2, 3.0);
      check([](Graph&, std::span<const Value> v) { return sum(log_elem(v[0])); }, {&x}, seed);
    }
    {
      Tensor x = random_tensor(5, 2, rng, -2.5, 2.5);
      Mat targets(5, 2);
      for (Index r = 0; r < 5; ++r)
        for (Index c = 0; c < 2; ++c) targets(r, c) = rng.uniform() < 0.5 ? 0.0 : 1.0;
      check(
          [targets](Graph&, std::span<const Value> v) {
            return sum(bce(sigmoid(v[0]), Tensor(targets)));
          },
          {&x}, seed);
    }
    {
      Tensor x = random_tensor(6, 4, rng);
      check(
          [](Graph&, std::span<const Value> v) {
            return mean(gather_rows(mul(v[0], v[0]), {0, 2, 2, 5}));
          },
          {&x}, seed);
    }
    {
      Tensor x = random_tensor(3, 7, rng);
      check([](Graph&, std::span<const Value> v) { return mean(gelu(v[0])); }, {&x}, seed);
    }
  }
}

TEST_CASE("tensor shape and storage invariants") {
  Tensor t = Tensor::zeros(3, 4);
  CHECK(t.shape() == std::vector<Index>{3, 4});
  CHECK(t.size() == 12);
  Tensor s = Tensor::scalar(2.5);
  CHECK(s.shape() == std::vector<Index>{1});
  CHECK(s.value() == 2.5);
  CHECK_THROWS_AS(t.value(), ContractError);

  // Row-major data layout.
  Tensor m(Mat{{1.0, 2.0}, {3.0, 4.0}});
  CHECK(m.data()[0] == 1.0);
  CHECK(m.data()[1] == 2.0);
  CHECK(m.data()[2] == 3.0);
  CHECK(m.data()[3] == 4.0);
}

TEST_CASE("graph ops validate shapes") {
  Graph g;
  Tensor a = Tensor::zeros(2, 3);
  Tensor b = Tensor::zeros(3, 2);
  const Value va = g.param(a);
  const Value vb = g.param(b);
  CHECK_THROWS_AS(add(va, vb), ContractError);
  CHECK_THROWS_AS(matmul(va, va), ContractError);
  CHECK_THROWS_AS(col_block(va, 2, 5), ContractError);
  CHECK_THROWS_AS(gather_rows(va, {7}), ContractError);
}

TEST_CASE("param leaves deduplicate by address") {
  Graph g;
  Tensor a = Tensor::zeros(2, 2);
  const Value v1 = g.param(a);
  const Value v2 = g.param(a);
  CHECK(v1.id == v2.id);
  CHECK(g.find_param(&a) == v1.id);
}
