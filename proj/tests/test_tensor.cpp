#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>

#include "support.hpp"

using namespace mmner;
using namespace mmner::ad;
using testing::fd_max_error;
using testing::random_tensor;
using testing::values;
using testing::weighted_sum;

TEST_CASE("matmul hand cases") {
  Tape tape;
  auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto m = Tensor::from({2, 2}, {1, 2, 3, 4});
  CHECK(values(matmul(tape, eye, m)) == std::vector<double>{1, 2, 3, 4});
  auto r = matmul(tape, Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 1}, {3, 4}));
  CHECK(r.shape() == Shape{1, 1});
  CHECK(r.item() == 11.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape tape;
  try {
    matmul(tape, Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient of sum is row sums of B") {
  Rng rng(3);
  auto a = random_tensor(rng, {3, 4});
  auto b = random_tensor(rng, {4, 2}, -2, 2, false);
  Tape tape;
  tape.backward(sum_all(tape, matmul(tape, a, b)));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t k = 0; k < 4; ++k) CHECK(a.grad()[i * 4 + k] == doctest::Approx(b[k * 2] + b[k * 2 + 1]));
  CHECK(fd_max_error({a}, [&](Tape& t) { return sum_all(t, matmul(t, a, b)); }) < 1e-6);
}

TEST_CASE("softmax examples") {
  Tape tape;
  auto u = softmax(tape, Tensor::vector({0, 0, 0}), 0);
  for (double v : u.data()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-15));
  auto big = softmax(tape, Tensor::vector({1000, 1000}), 0);
  CHECK(big[0] == 0.5);
  CHECK(big[1] == 0.5);
  auto s = softmax(tape, Tensor::vector({0, std::log(3.0)}), 0);
  CHECK(std::abs(s[0] - 0.25) < 1e-15);
  CHECK(std::abs(s[1] - 0.75) < 1e-15);
}

TEST_CASE("softmax normalization and shift invariance") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto x = random_tensor(rng, {3, 5, 4}, -20, 20, false);
    const std::size_t axis = trial % 3;
    Tape tape;
    auto p = softmax(tape, x, axis);
    auto shifted = x.clone();
    for (double& v : shifted.data()) v += 7.25;
    auto q = softmax(tape, shifted, axis);
    const Shape& sh = x.shape();
    const std::size_t inner = axis == 0 ? 20 : axis == 1 ? 4 : 1;
    const std::size_t len = sh[axis];
    for (std::size_t i = 0; i < p.size(); ++i) {
      CHECK(p[i] >= 0.0);
      CHECK(std::abs(p[i] - q[i]) < 1e-12);
    }
    for (std::size_t o = 0; o < p.size() / (len * inner); ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        double total = 0;
        for (std::size_t t = 0; t < len; ++t) total += p[(o * len + t) * inner + in];
        CHECK(std::abs(total - 1.0) < 1e-12);
      }
  }
}

TEST_CASE("elementwise examples") {
  Tape tape;
  CHECK(sigmoid(tape, Tensor::scalar(0)).item() == 0.5);
  CHECK(values(relu(tape, Tensor::vector({-3, 3}))) == std::vector<double>{0, 3});
  CHECK(values(mul(tape, Tensor::vector({1, 2}), Tensor::vector({3, 4}))) == std::vector<double>{3, 8});
  CHECK(values(one_minus(tape, Tensor::vector({0.25, 1}))) == std::vector<double>{0.75, 0});
  CHECK(values(add(tape, Tensor::from({2, 2}, {1, 2, 3, 4}), Tensor::vector({10, 20}))) ==
        std::vector<double>{11, 22, 13, 24});
  CHECK(sigmoid(tape, Tensor::scalar(-800)).item() == 0.0);
  CHECK(sigmoid(tape, Tensor::scalar(800)).item() == 1.0);
}

TEST_CASE("non-broadcastable shapes are rejected") {
  Tape tape;
  CHECK_THROWS_AS(add(tape, Tensor::zeros({2, 3}), Tensor::zeros({2})), DimensionError);
  CHECK_THROWS_AS(mul(tape, Tensor::zeros({4}), Tensor::zeros({3})), DimensionError);
}

TEST_CASE("reductions") {
  Tape tape;
  auto m = Tensor::from({2, 2}, {1, 5, 4, 2});
  CHECK(values(reduce_max(tape, m, 0)) == std::vector<double>{4, 5});
  CHECK(values(reduce_sum(tape, Tensor::vector({1, 2, 3}), 0)) == std::vector<double>{6});
  CHECK_THROWS_AS(reduce_sum(tape, m, 2), DimensionError);
}

TEST_CASE("max tie routes gradient to the lowest index") {
  auto x = Tensor::vector({2, 2}, true);
  Tape tape;
  tape.backward(sum_all(tape, reduce_max(tape, x, 0)));
  CHECK(values(Tensor::vector({x.grad()[0], x.grad()[1]})) == std::vector<double>{1, 0});
}

TEST_CASE("backward examples") {
  auto x = Tensor::vector({1, 2, 3}, true);
  {
    Tape tape;
    tape.backward(sum_all(tape, x));
    CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{1, 1, 1});
  }
  auto y = Tensor::vector({1, 2}, true);
  Tape tape;
  tape.backward(sum_all(tape, mul(tape, y, y)));
  CHECK(std::vector<double>(y.grad().begin(), y.grad().end()) == std::vector<double>{2, 4});
}

TEST_CASE("backward accumulates across calls until zero_grad") {
  auto x = Tensor::vector({1, 2}, true);
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    tape.backward(sum_all(tape, scale(tape, x, 3.0)));
  }
  CHECK(x.grad()[0] == 6.0);
  x.zero_grad();
  CHECK(x.grad()[1] == 0.0);
}

TEST_CASE("non-scalar loss is a contract error") {
  auto x = Tensor::vector({1, 2}, true);
  Tape tape;
  auto y = scale(tape, x, 2.0);
  CHECK_THROWS_AS(tape.backward(y), ContractError);
  CHECK_THROWS_AS(tape.backward(sum_all(tape, Tensor::vector({1, 2}))), ContractError);
}

TEST_CASE("operations without tracked inputs record nothing") {
  Tape tape;
  auto y = tanh(tape, matmul(tape, Tensor::zeros({2, 2}), Tensor::zeros({2, 2})));
  CHECK(tape.size() == 0);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("per-op finite-difference gradients") {
  Rng rng(2024);
  constexpr double kTol = 1e-6;
  auto w23 = random_tensor(rng, {2, 3}, -2, 2, false);

  SUBCASE("binary with broadcast") {
    auto a = random_tensor(rng, {2, 3});
    auto b = random_tensor(rng, {3});
    CHECK(fd_max_error({a, b}, [&](Tape& t) { return weighted_sum(t, add(t, a, b), w23); }) < kTol);
    CHECK(fd_max_error({a, b}, [&](Tape& t) { return weighted_sum(t, sub(t, a, b), w23); }) < kTol);
    CHECK(fd_max_error({a, b}, [&](Tape& t) { return weighted_sum(t, mul(t, a, b), w23); }) < kTol);
    CHECK(fd_max_error({a, b}, [&](Tape& t) { return weighted_sum(t, sub(t, b, a), w23); }) < kTol);
  }
  SUBCASE("unary") {
    auto a = random_tensor(rng, {2, 3});
    CHECK(fd_max_error({a}, [&](Tape& t) { return weighted_sum(t, scale(t, a, -1.7), w23); }) < kTol);
    CHECK(fd_max_error({a}, [&](Tape& t) { return weighted_sum(t, sigmoid(t, a), w23); }) < kTol);
    CHECK(fd_max_error({a}, [&](Tape& t) { return weighted_sum(t, tanh(t, a), w23); }) < kTol);
    CHECK(fd_max_error({a}, [&](Tape& t) { return weighted_sum(t, relu(t, a), w23); }) < kTol);
    CHECK(fd_max_error({a}, [&](Tape& t) { return weighted_sum(t, one_minus(t, a), w23); }) < kTol);
  }
  SUBCASE("matmul and transpose") {
    auto a = random_tensor(rng, {2, 4});
    auto b = random_tensor(rng, {4, 3});
    CHECK(fd_max_error({a, b}, [&](Tape& t) { return weighted_sum(t, matmul(t, a, b), w23); }) < kTol);
    auto c = random_tensor(rng, {3, 2});
    CHECK(fd_max_error({c}, [&](Tape& t) { return weighted_sum(t, transpose(t, c), w23); }) < kTol);
  }
  SUBCASE("softmax and reductions on every axis") {
    auto x = random_tensor(rng, {2, 3, 4});
    for (std::size_t axis = 0; axis < 3; ++axis) {
      auto w = random_tensor(rng, x.shape(), -2, 2, false);
      CHECK(fd_max_error({x}, [&](Tape& t) { return weighted_sum(t, softmax(t, x, axis), w); }) < kTol);
      Shape reduced = x.shape();
      reduced.erase(reduced.begin() + static_cast<std::ptrdiff_t>(axis));
      auto wr = random_tensor(rng, reduced, -2, 2, false);
      CHECK(fd_max_error({x}, [&](Tape& t) { return weighted_sum(t, reduce_sum(t, x, axis), wr); }) < kTol);
      CHECK(fd_max_error({x}, [&](Tape& t) { return weighted_sum(t, reduce_max(t, x, axis), wr); }) < kTol);
    }
  }
  SUBCASE("shape operations") {
    auto a = random_tensor(rng, {2, 3});
    auto w6 = random_tensor(rng, {6}, -2, 2, false);
    CHECK(fd_max_error({a}, [&](Tape& t) { return weighted_sum(t, reshape(t, a, {6}), w6); }) < kTol);
    auto w63 = random_tensor(rng, {6, 3}, -2, 2, false);
    auto c = random_tensor(rng, {3, 3});
    CHECK(fd_max_error({a, c}, [&](Tape& t) {
            return weighted_sum(t, reshape(t, pair_add(t, a, c), {6, 3}), w63);
          }) < kTol);
    auto d = random_tensor(rng, {2, 2});
    auto w25 = random_tensor(rng, {2, 5}, -2, 2, false);
    CHECK(fd_max_error({a, d}, [&](Tape& t) { return weighted_sum(t, concat_cols(t, a, d), w25); }) < kTol);
    auto r0 = random_tensor(rng, {3});
    auto r1 = random_tensor(rng, {3});
    auto w33 = random_tensor(rng, {3, 3}, -2, 2, false);
    CHECK(fd_max_error({r0, r1}, [&](Tape& t) {
            std::vector<Tensor> rows{r0, r1, r0};
            return weighted_sum(t, stack_rows(t, rows), w33);
          }) < kTol);
    auto table = random_tensor(rng, {4, 3});
    const std::vector<std::size_t> idx{2, 0, 2};
    CHECK(fd_max_error({table}, [&](Tape& t) { return weighted_sum(t, gather_rows(t, table, idx), w33); }) < kTol);
    auto w3 = random_tensor(rng, {3}, -2, 2, false);
    CHECK(fd_max_error({a}, [&](Tape& t) { return weighted_sum(t, row(t, a, 1), w3); }) < kTol);
  }
}

TEST_CASE("backward is deterministic") {
  Rng rng(5);
  auto a = random_tensor(rng, {3, 3});
  auto b = random_tensor(rng, {3, 3});
  auto run = [&] {
    a.zero_grad();
    b.zero_grad();
    Tape tape;
    auto y = softmax(tape, tanh(tape, matmul(tape, a, b)), 1);
    tape.backward(sum_all(tape, mul(tape, y, a)));
    return std::vector<double>(a.grad().begin(), a.grad().end());
  };
  const auto first = run();
  CHECK(run() == first);
}

TEST_CASE("corruption hook changes one rule and clears") {
  auto x = Tensor::vector({0.3}, true);
  auto grad_of_tanh = [&] {
    x.zero_grad();
    Tape tape;
    tape.backward(sum_all(tape, tanh(tape, x)));
    return x.grad()[0];
  };
  const double clean = grad_of_tanh();
  debug::corrupt_backward_rule("tanh");
  CHECK(grad_of_tanh() == doctest::Approx(1.5 * clean));
  debug::clear_corruption();
  CHECK(grad_of_tanh() == clean);
}

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), DimensionError);
  auto t = Tensor::zeros({2, 3}, true);
  CHECK(t.grad().size() == t.size());
  CHECK(element_count(t.shape()) == t.size());
  CHECK(Tensor::zeros({2}).grad().empty());
  auto c = t.clone();
  CHECK_FALSE(c.same_storage(t));
  CHECK(c.requires_grad());
  CHECK_FALSE(t.detach().requires_grad());
}
