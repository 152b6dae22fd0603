// Copyright 2026 The tokreg Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "catch_amalgamated.hpp"
#include "tokreg/errors.hpp"
#include "tokreg/numerics/grad_check.hpp"
#include "tokreg/numerics/ops.hpp"

using namespace tokreg;
using namespace tokreg::numerics;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  t.set_requires_grad(true);
  return t;
}

// Contracts an op output with fixed random weights so every output entry
// carries a distinct gradient.
Var project(Tape& tape, Var out, std::uint64_t seed) {
  return sum(mul(out, tape.constant(random_tensor(out.value().shape(), seed))));
}

double check(const LossBuilder& f, std::vector<Tensor*> params, double eps = 1e-5) {
  GradCheckOptions opts;
  opts.eps = eps;
  return grad_check(f, params, opts).max_rel_error;
}

}  // namespace

TEST_CASE("tensor shape invariants") {
  CHECK(Tensor({3, 4}).size() == 12);
  CHECK(Tensor().size() == 1);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
  CHECK(Tensor::matrix({{1, 2}, {3, 4}}).at(1, 0) == 3.0);
}

TEST_CASE("matmul identity and 1x1") {
  Tape tape;
  const Tensor eye = Tensor::matrix({{1, 0}, {0, 1}});
  const Tensor b = Tensor::matrix({{3, 4}, {5, 6}});
  CHECK(matmul(tape.constant(eye), tape.constant(b)).value() == b);
  const Tensor two = Tensor::matrix({{2}});
  const Tensor three = Tensor::matrix({{3}});
  CHECK(matmul(tape.constant(two), tape.constant(three)).value().item() == 6.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape tape;
  const Tensor a({2, 3});
  const Tensor b({2, 3});
  CHECK_THROWS_WITH(matmul(tape.constant(a), tape.constant(b)),
                    ContainsSubstring("[2x3]") && ContainsSubstring("matmul"));
  CHECK_THROWS_AS(matmul(tape.constant(a), tape.constant(b)), DimensionError);
}

TEST_CASE("matmul gradient of sum is ones times b transposed") {
  Tensor a = random_tensor({3, 4}, 1);
  Tensor b = random_tensor({4, 2}, 2);
  Tape tape;
  tape.backward(sum(matmul(tape.parameter(a), tape.parameter(b))));
  const Tensor& ga = *tape.grad_of(a);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK_THAT(ga.at(i, k), WithinAbs(b.at(k, 0) + b.at(k, 1), 1e-15));
    }
  }
  const auto f = [&](Tape& t) { return sum(matmul(t.parameter(a), t.parameter(b))); };
  CHECK(check(f, {&a, &b}) < 1e-6);
}

TEST_CASE("log_softmax_gather examples") {
  Tape tape;
  const Tensor uniform({1, 4});
  const std::vector<int> target = {2};
  CHECK_THAT(log_softmax_gather(tape.constant(uniform), target).value()[0],
             WithinAbs(std::log(0.25), 1e-15));
  Tensor peaked({1, 4});
  peaked[2] = 1e6;
  CHECK_THAT(log_softmax_gather(tape.constant(peaked), target).value()[0], WithinAbs(0.0, 1e-12));
  const std::vector<int> bad = {4};
  CHECK_THROWS_AS(log_softmax_gather(tape.constant(uniform), bad), IndexError);
  const std::vector<int> negative = {-1};
  CHECK_THROWS_AS(log_softmax_gather(tape.constant(uniform), negative), IndexError);
}

TEST_CASE("log_softmax_gather gradient matches finite differences") {
  Tensor logits = random_tensor({5, 8}, 3, -3.0, 3.0);
  const std::vector<int> targets = {0, 7, 3, 3, 5};
  const auto f = [&](Tape& t) { return sum(log_softmax_gather(t.parameter(logits), targets)); };
  CHECK(check(f, {&logits}) < 1e-6);
}

TEST_CASE("log_softmax_gather rows are normalized and nonpositive") {
  const Tensor logits = random_tensor({4, 6}, 4, -20.0, 20.0);
  Tape tape;
  const Var x = tape.constant(logits);
  for (std::size_t r = 0; r < 4; ++r) {
    double total = 0.0;
    for (int v = 0; v < 6; ++v) {
      const std::vector<int> target(4, v);
      const double lp = log_softmax_gather(x, target).value()[r];
      CHECK(lp <= 0.0);
      total += std::exp(lp);
    }
    CHECK_THAT(total, WithinAbs(1.0, 1e-10));
  }
}

TEST_CASE("sigmoid symmetry and saturation") {
  Tape tape;
  const Var x = tape.constant(Tensor::vector({0.0, 1000.0, -1000.0}));
  const Tensor& s = sigmoid(x).value();
  CHECK(s[0] == 0.5);
  CHECK_THAT(s[1], WithinAbs(1.0, 1e-15));
  CHECK_THAT(s[2], WithinAbs(0.0, 1e-15));
  CHECK(std::isfinite(log_sigmoid(x).value()[2]));
  CHECK_THAT(log_sigmoid(x).value()[2], WithinAbs(-1000.0, 1e-9));
}

TEST_CASE("detach blocks gradient") {
  Tensor a = Tensor::scalar(0.7);
  Tensor b = Tensor::scalar(2.0);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  {
    Tape tape;
    const Var va = tape.parameter(a);
    const Var vb = tape.parameter(b);
    tape.backward(mul(detach(va), vb));
    CHECK((tape.grad_of(a) == nullptr || tape.grad_of(a)->item() == 0.0));
    CHECK(tape.grad_of(b)->item() == 0.7);
  }
  {
    Tape tape;
    const Var va = tape.parameter(a);
    tape.backward(mul(detach(va), va));
    CHECK(tape.grad_of(a)->item() == 0.7);
  }
}

TEST_CASE("detach equals a constant of the same value") {
  Tensor x = random_tensor({6}, 5);
  Tensor y = random_tensor({6}, 6);
  auto run = [&](bool use_detach) {
    Tape tape;
    const Var vx = tape.parameter(x);
    const Var vy = tape.parameter(y);
    const Var w = sigmoid(scale(vx, -1.0));
    const Var fixed = use_detach ? detach(w) : tape.constant(w.value());
    const Var loss = add(sum(mul(fixed, vy)), sum(log_sigmoid(vx)));
    tape.backward(loss);
    return std::make_tuple(loss.value().item(), *tape.grad_of(x), *tape.grad_of(y));
  };
  CHECK(run(true) == run(false));
}

TEST_CASE("grad_check on x squared") {
  Tensor x = Tensor::scalar(3.0);
  x.set_requires_grad(true);
  const auto f = [&](Tape& t) {
    const Var v = t.parameter(x);
    return mul(v, v);
  };
  GradCheckOptions opts;
  const auto report = grad_check(f, std::vector<Tensor*>{&x}, opts);
  CHECK(report.analytic == 6.0);
  CHECK_THAT(report.numeric, WithinAbs(6.0, 1e-8));
  CHECK(report.max_rel_error < 1e-8);
  CHECK(grad_check(f, x, 1e-5) < 1e-8);
  opts.order = 4;
  CHECK(grad_check(f, std::vector<Tensor*>{&x}, opts).max_rel_error < 1e-8);
}

TEST_CASE("grad_check rejects a non-finite loss") {
  Tensor x = Tensor::scalar(0.0);
  x.set_requires_grad(true);
  const auto f = [&](Tape& t) {
    const Var v = t.parameter(x);
    return mul(v, t.constant(Tensor::scalar(std::numeric_limits<double>::infinity())));
  };
  CHECK_THROWS_AS(grad_check(f, x, 1e-5), DiagnosticError);
}

TEST_CASE("every op matches finite differences") {
  constexpr double kTol = 1e-4;
  Tensor a = random_tensor({3, 4}, 10);
  Tensor b = random_tensor({3, 4}, 11);
  Tensor row = random_tensor({4}, 12);

  SECTION("elementwise") {
    CHECK(check([&](Tape& t) { return project(t, add(t.parameter(a), t.parameter(b)), 1); },
                {&a, &b}) < kTol);
    CHECK(check([&](Tape& t) { return project(t, sub(t.parameter(a), t.parameter(b)), 2); },
                {&a, &b}) < kTol);
    CHECK(check([&](Tape& t) { return project(t, mul(t.parameter(a), t.parameter(b)), 3); },
                {&a, &b}) < kTol);
    CHECK(check([&](Tape& t) { return project(t, scale(t.parameter(a), -2.5), 4); }, {&a}) < kTol);
    CHECK(check([&](Tape& t) { return project(t, add_row(t.parameter(a), t.parameter(row)), 5); },
                {&a, &row}) < kTol);
    CHECK(check([&](Tape& t) { return project(t, sigmoid(t.parameter(a)), 6); }, {&a}) < kTol);
    CHECK(check([&](Tape& t) { return project(t, log_sigmoid(t.parameter(a)), 7); }, {&a}) < kTol);
    CHECK(check([&](Tape& t) { return project(t, gelu(t.parameter(a)), 8); }, {&a}) < kTol);
    CHECK(check([&](Tape& t) { return mean(t.parameter(a)); }, {&a}) < kTol);
  }
  SECTION("indexing and reductions") {
    Tensor table = random_tensor({5, 3}, 13);
    const std::vector<int> ids = {4, 0, 4, 2};
    CHECK(check([&](Tape& t) { return project(t, embedding(t.parameter(table), ids), 9); },
                {&table}) < kTol);
    const std::vector<std::size_t> rows = {2, 0, 2};
    CHECK(check([&](Tape& t) { return project(t, gather_rows(t.parameter(a), rows), 10); },
                {&a}) < kTol);
    Tensor v = random_tensor({5}, 14);
    const std::vector<std::size_t> seg = {1, 0, kNoSegment, 1, 0};
    const std::vector<double> w = {0.5, -1.0, 3.0, 2.0, 1.5};
    CHECK(check([&](Tape& t) { return project(t, segment_sum(t.parameter(v), seg, w, 2), 11); },
                {&v}) < kTol);
  }
  SECTION("layer norm") {
    Tensor gamma = random_tensor({4}, 15, 0.5, 1.5);
    Tensor beta = random_tensor({4}, 16);
    const auto f = [&](Tape& t) {
      return project(t, layer_norm(t.parameter(a), t.parameter(gamma), t.parameter(beta)), 12);
    };
    CHECK(check(f, {&a, &gamma, &beta}) < kTol);
  }
  SECTION("causal attention with padding") {
    const std::size_t seq = 4;
    const std::size_t d = 4;
    Tensor qkv = random_tensor({2 * seq, 3 * d}, 17);
    const std::vector<std::size_t> lengths = {4, 2};
    const auto f = [&](Tape& t) {
      return project(t, causal_attention(t.parameter(qkv), lengths, seq, 2), 13);
    };
    CHECK(check(f, {&qkv}) < kTol);
  }
}

TEST_CASE("attention ignores padded positions") {
  const std::size_t seq = 5;
  const std::size_t d = 4;
  Tensor qkv = random_tensor({seq, 3 * d}, 20);
  Tensor altered = qkv;
  for (std::size_t c = 0; c < 3 * d; ++c) altered.at(4, c) = 123.0;
  const std::vector<std::size_t> lengths = {3};
  Tape tape;
  const Tensor out1 = causal_attention(tape.constant(qkv), lengths, seq, 2).value();
  const Tensor out2 = causal_attention(tape.constant(altered), lengths, seq, 2).value();
  CHECK(out1 == out2);
  for (std::size_t c = 0; c < d; ++c) CHECK(out1.at(3, c) == 0.0);
}

TEST_CASE("an injected backward fault is caught by grad_check") {
  Tensor a = random_tensor({3, 4}, 21);
  Tensor b = random_tensor({4, 2}, 22);
  const auto f = [&](Tape& t) { return project(t, matmul(t.parameter(a), t.parameter(b)), 14); };
  inject_backward_fault(BackwardFault::kMatmul);
  const double faulty = check(f, {&a, &b});
  inject_backward_fault(BackwardFault::kNone);
  CHECK(faulty > 1e-3);
  CHECK(check(f, {&a, &b}) < 1e-6);
}
