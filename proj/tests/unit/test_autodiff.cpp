#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "quann/autodiff.hpp"
#include "quann/errors.hpp"
#include "quann/gradcheck.hpp"
#include "quann/rng.hpp"

namespace quann {
namespace {

using Fn = std::function<Tensor(Tape&, const Tensor&)>;

Tensor random_tensor(Rng& rng, Shape shape, double lo = -2.0, double hi = 2.0, bool grad = true) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v), grad);
}

// Op outputs are reduced to a scalar with fixed random weights so every
// output entry contributes a distinct amount.
double probe_value(const Fn& op, const std::vector<double>& w, const Tensor& x) {
  Tape tape(Tape::Mode::inference);
  const Tensor y = op(tape, x);
  double s = 0.0;
  for (std::size_t i = 0; i < y.numel(); ++i) s += w[i % w.size()] * y.at(i);
  return s;
}

std::vector<double> analytic_grad(const Fn& op, const std::vector<double>& w, const Tensor& x) {
  Tape tape;
  Tensor(x).clear_grad();
  const Tensor y = op(tape, x);
  std::vector<double> seed(y.numel());
  for (std::size_t i = 0; i < seed.size(); ++i) seed[i] = w[i % w.size()];
  tape.backward(y, seed);
  return {x.grad().begin(), x.grad().end()};
}

void expect_gradcheck(const char* name, const Fn& op, Shape shape, double lo, double hi, int trials = 50) {
  Rng rng(std::hash<std::string>{}(name));
  for (int t = 0; t < trials; ++t) {
    Tensor x = random_tensor(rng, shape, lo, hi);
    std::vector<double> w(7);
    for (double& v : w) v = rng.uniform(-1.0, 1.0);
    const auto ga = analytic_grad(op, w, x);
    const Tensor gf = finite_diff_grad([&](const Tensor& p) { return probe_value(op, w, p); }, x, 1e-6);
    EXPECT_LT(relative_error(ga, gf.data()), 1e-4) << name << " trial " << t;
  }
}

TEST(Forward, SpecExamples) {
  Tape tape;
  const Tensor m = ad::matmul(tape, Tensor::matrix({{1, 2}, {3, 4}}), Tensor::matrix({{1}, {1}}));
  EXPECT_EQ(m.shape(), (Shape{2, 1}));
  EXPECT_EQ(m.at(0), 3.0);
  EXPECT_EQ(m.at(1), 7.0);

  const Tensor r = ad::relu(tape, Tensor::vector({-1, 0, 2}));
  EXPECT_EQ(std::vector<double>(r.data().begin(), r.data().end()), (std::vector<double>{0, 0, 2}));

  EXPECT_EQ(ad::mean_reduce(tape, Tensor::vector({2, 4, 6}), 0).item(), 4.0);
}

TEST(Backward, SquareAndRelu) {
  {
    Tape tape;
    Tensor x = Tensor::scalar(3.0, true);
    tape.backward(ad::mul(tape, x, x));
    EXPECT_EQ(x.grad()[0], 6.0);
  }
  {
    Tape tape;
    Tensor x = Tensor::scalar(-1.0, true);
    tape.backward(ad::relu(tape, x));
    EXPECT_EQ(x.grad()[0], 0.0);
  }
}

TEST(Backward, SumOfProductGivesBroadcastInput) {
  Rng rng(3);
  const Tensor x = random_tensor(rng, {4, 1}, -2, 2, false);
  Tensor w = random_tensor(rng, {3, 4});
  Tape tape;
  tape.backward(ad::sum_all(tape, ad::matmul(tape, w, x)));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(w.grad()[i * 4 + j], x.at(j));

  const Tensor fd = finite_diff_grad(
      [&](const Tensor& p) {
        Tape t(Tape::Mode::inference);
        return ad::sum_all(t, ad::matmul(t, p, x)).item();
      },
      w, 1e-6);
  EXPECT_LT(relative_error(w.grad(), fd.data()), 1e-8);
}

TEST(Backward, TwiceWithoutResetIsAnError) {
  Tape tape;
  Tensor x = Tensor::scalar(2.0, true);
  const Tensor y = ad::mul(tape, x, x);
  tape.backward(y);
  EXPECT_TRUE(tape.consumed());
  EXPECT_THROW(tape.backward(y), TapeError);
  tape.reset();
  EXPECT_FALSE(tape.consumed());
}

TEST(Backward, BranchesAccumulate) {
  // f(x) = sum(exp(x) * x + relu(x)); x is used three times.
  const Fn f = [](Tape& t, const Tensor& x) { return ad::add(t, ad::mul(t, ad::exp(t, x), x), ad::relu(t, x)); };
  expect_gradcheck("branches", f, {5}, -2, 2, 10);

  Tape tape;
  Tensor x = Tensor::vector({0.5, -1.5}, true);
  tape.backward(ad::sum_all(tape, f(tape, x)));
  for (std::size_t i = 0; i < 2; ++i) {
    const double v = x.at(i);
    EXPECT_NEAR(x.grad()[i], std::exp(v) * (1 + v) + (v > 0 ? 1 : 0), 1e-12);
  }
}

TEST(FiniteDiff, CubeAndConstant) {
  const Tensor x = Tensor::scalar(2.0);
  const Tensor g = finite_diff_grad([](const Tensor& p) { return std::pow(p.item(), 3); }, x, 1e-5);
  EXPECT_NEAR(g.item(), 12.0, 1e-6);
  const Tensor z = finite_diff_grad([](const Tensor&) { return 4.0; }, Tensor::vector({1, 2, 3}), 1e-5);
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(finite_diff_grad([](const Tensor&) { return NAN; }, x, 1e-5), NonFiniteError);
}

// One gradcheck per op kind, 50 random inputs in [-2, 2] (restricted for
// log, pow and div denominators).
TEST(GradCheck, Elementwise) {
  Rng rng(21);
  const Tensor other = random_tensor(rng, {3, 4}, -2, 2, false);
  const Tensor row = random_tensor(rng, {4}, 0.5, 2, false);
  expect_gradcheck("add", [&](Tape& t, const Tensor& x) { return ad::add(t, x, other); }, {3, 4}, -2, 2);
  expect_gradcheck("sub", [&](Tape& t, const Tensor& x) { return ad::sub(t, other, x); }, {3, 4}, -2, 2);
  expect_gradcheck("mul", [&](Tape& t, const Tensor& x) { return ad::mul(t, x, other); }, {3, 4}, -2, 2);
  expect_gradcheck("div num", [&](Tape& t, const Tensor& x) { return ad::div(t, x, row); }, {3, 4}, -2, 2);
  expect_gradcheck("div den", [&](Tape& t, const Tensor& x) { return ad::div(t, other, x); }, {3, 4}, 0.5, 2);
  expect_gradcheck("bcast operand", [&](Tape& t, const Tensor& r) { return ad::mul(t, other, r); }, {4}, -2, 2);
  expect_gradcheck("exp", [](Tape& t, const Tensor& x) { return ad::exp(t, x); }, {6}, -2, 2);
  expect_gradcheck("log", [](Tape& t, const Tensor& x) { return ad::log(t, x); }, {6}, 0.1, 2);
  expect_gradcheck("pow base", [&](Tape& t, const Tensor& x) { return ad::pow(t, x, row); }, {3, 4}, 0.1, 2);
  expect_gradcheck("pow exp", [&](Tape& t, const Tensor& e) { return ad::pow(t, row, e); }, {4}, -2, 2);
  expect_gradcheck("softplus", [](Tape& t, const Tensor& x) { return ad::softplus(t, x); }, {6}, -2, 2);
  expect_gradcheck("scale", [](Tape& t, const Tensor& x) { return ad::scale(t, x, -1.7); }, {6}, -2, 2);
  expect_gradcheck("add_scalar", [](Tape& t, const Tensor& x) { return ad::add_scalar(t, x, 0.3); }, {6}, -2, 2);
  expect_gradcheck("relu", [](Tape& t, const Tensor& x) { return ad::relu(t, x); }, {6}, -2, 2);
}

TEST(GradCheck, LinearAlgebra) {
  Rng rng(22);
  const Tensor w = random_tensor(rng, {4, 3}, -2, 2, false);
  const Tensor b = random_tensor(rng, {3}, -2, 2, false);
  const Tensor x0 = random_tensor(rng, {5, 4}, -2, 2, false);
  expect_gradcheck("matmul lhs", [&](Tape& t, const Tensor& x) { return ad::matmul(t, x, w); }, {5, 4}, -2, 2);
  expect_gradcheck("matmul rhs", [&](Tape& t, const Tensor& v) { return ad::matmul(t, x0, v); }, {4, 3}, -2, 2);
  expect_gradcheck("linear x", [&](Tape& t, const Tensor& x) { return ad::linear(t, x, w, b); }, {5, 4}, -2, 2);
  expect_gradcheck("linear w", [&](Tape& t, const Tensor& v) { return ad::linear(t, x0, v, b); }, {4, 3}, -2, 2);
  expect_gradcheck("linear b", [&](Tape& t, const Tensor& v) { return ad::linear(t, x0, w, v); }, {3}, -2, 2);
}

TEST(GradCheck, Reductions) {
  for (std::size_t axis : {0, 1, 2}) {
    expect_gradcheck("sum_reduce", [=](Tape& t, const Tensor& x) { return ad::sum_reduce(t, x, axis); }, {2, 3, 4}, -2, 2,
                     10);
    expect_gradcheck("mean_reduce", [=](Tape& t, const Tensor& x) { return ad::mean_reduce(t, x, axis); }, {2, 3, 4}, -2,
                     2, 10);
    expect_gradcheck("max_reduce", [=](Tape& t, const Tensor& x) { return ad::max_reduce(t, x, axis); }, {2, 3, 4}, -2, 2,
                     10);
  }
  expect_gradcheck("mean_all", [](Tape& t, const Tensor& x) { return ad::mean_all(t, x); }, {3, 3}, -2, 2);
}

TEST(GradCheck, ShapeOps) {
  Rng rng(23);
  const Tensor other = random_tensor(rng, {3, 2}, -2, 2, false);
  expect_gradcheck("concat", [&](Tape& t, const Tensor& x) { return ad::concat(t, {other, x, other}, 1); }, {3, 4}, -2, 2);
  expect_gradcheck("slice", [](Tape& t, const Tensor& x) { return ad::slice(t, x, 1, 1, 3); }, {3, 4}, -2, 2);
  expect_gradcheck("broadcast", [](Tape& t, const Tensor& x) { return ad::broadcast(t, x, {2, 3}); }, {4}, -2, 2);
  expect_gradcheck("reshape", [](Tape& t, const Tensor& x) { return ad::reshape(t, x, {2, 6}); }, {3, 4}, -2, 2);
}

TEST(GradCheck, SegmentOps) {
  const std::vector<std::size_t> offsets{0, 2, 3, 6};
  const std::vector<std::size_t> rows{5, 0, 0, 3};
  Rng rng(24);
  const Tensor scale = random_tensor(rng, {6}, -2, 2, false);
  expect_gradcheck("gather", [&](Tape& t, const Tensor& x) { return ad::gather_rows(t, x, rows); }, {6, 2}, -2, 2);
  expect_gradcheck("seg sum", [&](Tape& t, const Tensor& x) { return ad::segment_sum(t, x, offsets); }, {6, 2}, -2, 2);
  expect_gradcheck("seg mean", [&](Tape& t, const Tensor& x) { return ad::segment_mean(t, x, offsets); }, {6, 2}, -2, 2);
  expect_gradcheck("seg max", [&](Tape& t, const Tensor& x) { return ad::segment_max(t, x, offsets); }, {6, 2}, -2, 2);
  expect_gradcheck("repeat", [&](Tape& t, const Tensor& x) { return ad::repeat_segments(t, x, offsets); }, {3, 2}, -2, 2);
  expect_gradcheck("mul_rows x", [&](Tape& t, const Tensor& x) { return ad::mul_rows(t, x, scale); }, {6, 2}, -2, 2);
}

TEST(Forward, SegmentValues) {
  Tape tape;
  const Tensor x = Tensor::matrix({{1, 5}, {3, 2}, {7, 7}});
  const std::vector<std::size_t> off{0, 2, 3};
  const Tensor s = ad::segment_sum(tape, x, off);
  const Tensor m = ad::segment_max(tape, x, off);
  EXPECT_EQ(s.at(0, 0), 4.0);
  EXPECT_EQ(s.at(0, 1), 7.0);
  EXPECT_EQ(m.at(0, 0), 3.0);
  EXPECT_EQ(m.at(0, 1), 5.0);
  EXPECT_EQ(m.at(1, 1), 7.0);
  const std::vector<std::size_t> empty_seg{0, 0, 3};
  EXPECT_THROW(ad::segment_mean(tape, x, empty_seg), EmptySetError);
}

TEST(Forward, MaxTieRoutesToFirstIndex) {
  Tape tape;
  Tensor x = Tensor::vector({2.0, 5.0, 5.0, 1.0}, true);
  tape.backward(ad::max_reduce(tape, x, 0));
  EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{0, 1, 0, 0}));
}

TEST(Errors, ShapeAndDomain) {
  Tape tape;
  EXPECT_THROW(ad::matmul(tape, Tensor::matrix({{1, 2}}), Tensor::matrix({{1, 2}})), ShapeError);
  EXPECT_THROW(ad::add(tape, Tensor::vector({1, 2}), Tensor::vector({1, 2, 3})), ShapeError);
  EXPECT_THROW(ad::log(tape, Tensor::vector({1, 0})), DomainError);
  EXPECT_THROW(ad::log(tape, Tensor::vector({-1})), DomainError);
  EXPECT_THROW(ad::pow(tape, Tensor::vector({-1}), Tensor::scalar(2)), DomainError);
  EXPECT_THROW(ad::div(tape, Tensor::vector({1}), Tensor::vector({0})), DomainError);
  EXPECT_THROW(ad::exp(tape, Tensor::vector({1000})), NonFiniteError);
  EXPECT_THROW(Tensor({2, 2}, {1, 2, 3}), ShapeError);
}

TEST(Tape, UntrackedInputsRecordNothing) {
  Tape tape;
  ad::add(tape, Tensor::vector({1}), Tensor::vector({2}));
  EXPECT_EQ(tape.size(), 0u);
  Tensor p = Tensor::vector({1}, true);
  ad::add(tape, p, Tensor::vector({2}));
  EXPECT_EQ(tape.size(), 1u);
  Tape inf(Tape::Mode::inference);
  ad::add(inf, p, p);
  EXPECT_EQ(inf.size(), 0u);
}

TEST(Determinism, BitIdenticalGradients) {
  auto run = [] {
    Rng rng(99);
    Tensor w = random_tensor(rng, {8, 8});
    const Tensor x = random_tensor(rng, {16, 8}, -2, 2, false);
    Tape tape;
    const Tensor h = ad::relu(tape, ad::matmul(tape, x, w));
    tape.backward(ad::sum_all(tape, ad::exp(tape, ad::scale(tape, h, 0.1))));
    return std::vector<double>(w.grad().begin(), w.grad().end());
  };
  EXPECT_EQ(run(), run());
}

}  // namespace
}  // namespace quann
