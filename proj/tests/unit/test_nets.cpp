#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "quann/checkpoint.hpp"
#include "quann/errors.hpp"
#include "quann/gradcheck.hpp"
#include "quann/nets.hpp"

namespace quann {
namespace {

Tensor random_rows(Rng& rng, std::size_t rows, std::size_t width, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(rows * width);
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor({rows, width}, std::move(v));
}

Tensor eval(const std::function<Tensor(Tape&, const Tensor&)>& f, const Tensor& x) {
  Tape tape(Tape::Mode::inference);
  return f(tape, x);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) d = std::max(d, std::abs(a.at(i) - b.at(i)));
  return d;
}

void set_values(const Tensor& t, double v) {
  Tensor h = t;
  for (double& x : h.mutable_data()) x = v;
}

// Plain loops over the stored weights; no tape involved.
std::vector<double> mlp_by_hand(const Mlp& mlp, std::vector<double> x) {
  for (std::size_t l = 0; l < mlp.layers(); ++l) {
    const Tensor& w = mlp.weight(l);
    const std::size_t in = w.dim(0), out = w.dim(1);
    std::vector<double> y(out);
    for (std::size_t j = 0; j < out; ++j) {
      double s = mlp.bias(l).at(j);
      for (std::size_t i = 0; i < in; ++i) s += x[i] * w.at(i, j);
      y[j] = (l + 1 < mlp.layers()) ? std::max(0.0, s) : s;
    }
    x = std::move(y);
  }
  return x;
}

TEST(Mlp, IdentityAndZeroWeights) {
  const Mlp id = Mlp::identity({{2, 2}});
  const Tensor y = eval([&](Tape& t, const Tensor& x) { return id.forward(t, x); }, Tensor::matrix({{1, 2}}));
  EXPECT_EQ(y.at(0), 1.0);
  EXPECT_EQ(y.at(1), 2.0);

  const Mlp z = Mlp::zeros({{3, 4, 2}});
  set_values(z.bias(1), 0.75);
  Rng rng(1);
  const Tensor out = eval([&](Tape& t, const Tensor& x) { return z.forward(t, x); }, random_rows(rng, 5, 3));
  for (double v : out.data()) EXPECT_EQ(v, 0.75);

  const Mlp deep = Mlp::identity({{3, 3, 3}});
  const Tensor pos = random_rows(rng, 4, 3, 0.0, 1.0);
  EXPECT_EQ(max_abs_diff(eval([&](Tape& t, const Tensor& x) { return deep.forward(t, x); }, pos), pos), 0.0);
}

TEST(Mlp, MatchesHandRolledChain) {
  Rng rng(2);
  const Mlp mlp({{5, 7, 6, 3}}, rng);
  const Tensor x = random_rows(rng, 9, 5);
  const Tensor y = eval([&](Tape& t, const Tensor& v) { return mlp.forward(t, v); }, x);
  for (std::size_t r = 0; r < 9; ++r) {
    const std::vector<double> row(x.data().begin() + r * 5, x.data().begin() + r * 5 + 5);
    const auto ref = mlp_by_hand(mlp, row);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(y.at(r, j), ref[j], 1e-13);
  }
}

// Mlp folds each hidden relu mask into the next layer's input-gradient gemm.
// Gradients must be bit-identical to plain linear nodes.
TEST(Mlp, FusedBackwardMatchesPlainLinearChain) {
  Rng rng(21);
  const Mlp mlp({{5, 12, 9, 3}}, rng);
  const Tensor x = random_rows(rng, 40, 5);
  std::vector<double> seed(40 * 3);
  for (double& v : seed) v = rng.uniform(-1.0, 1.0);
  ParameterList params;
  mlp.append_parameters(params, "m");

  auto run = [&](bool fused) {
    for (auto& p : params) Tensor(p.tensor).clear_grad();
    Tensor xin = x.clone();
    xin.set_requires_grad(true);
    Tape tape;
    Tensor h = xin;
    if (fused) {
      h = mlp.forward(tape, xin);
    } else {
      for (std::size_t l = 0; l < mlp.layers(); ++l) {
        const bool last = l + 1 == mlp.layers();
        h = ad::linear(tape, h, mlp.weight(l), mlp.bias(l), last ? ad::Activation::identity : ad::Activation::relu);
      }
    }
    tape.backward(h, seed);
    std::vector<std::vector<double>> grads;
    for (auto& p : params) grads.emplace_back(p.tensor.grad().begin(), p.tensor.grad().end());
    grads.emplace_back(xin.grad().begin(), xin.grad().end());
    return grads;
  };
  const auto plain = run(false);
  const auto fused = run(true);
  ASSERT_EQ(plain.size(), fused.size());
  for (std::size_t i = 0; i < plain.size(); ++i) EXPECT_EQ(plain[i], fused[i]) << "gradient " << i;
}

TEST(Mlp, InitRangeAndCounts) {
  Rng rng(3);
  const MlpSpec spec{{16, 128, 16}};
  const Mlp mlp(spec, rng);
  const double bound0 = 1.0 / std::sqrt(16.0), bound1 = 1.0 / std::sqrt(128.0);
  for (double v : mlp.weight(0).data()) EXPECT_LE(std::abs(v), bound0);
  for (double v : mlp.bias(1).data()) EXPECT_LE(std::abs(v), bound1);
  EXPECT_EQ(spec.parameter_count(), 16u * 128 + 128 + 128 * 16 + 16);
  ParameterList params;
  mlp.append_parameters(params, "phi");
  EXPECT_EQ(count_parameters(params), spec.parameter_count());
  EXPECT_EQ(params.front().name, "phi/w0");
  EXPECT_THROW(MlpSpec{{4}}.validate(), ConfigError);
  EXPECT_THROW(MlpSpec({{4, 0, 2}}).validate(), ConfigError);
  Tape tape;
  EXPECT_THROW(mlp.forward(tape, Tensor::matrix({{1, 2}})), ShapeError);
}

TEST(RevNet, ZeroParamsIsIdentity) {
  const RevNet net = RevNet::zeros({.dim = 6, .num_blocks = 3, .subnet_hidden = {4}});
  Rng rng(4);
  const Tensor x = random_rows(rng, 5, 6);
  EXPECT_EQ(max_abs_diff(eval([&](Tape& t, const Tensor& v) { return net.forward(t, v); }, x), x), 0.0);
  EXPECT_EQ(max_abs_diff(eval([&](Tape& t, const Tensor& v) { return net.inverse(t, v); }, x), x), 0.0);
}

TEST(RevNet, ConstantCouplingShiftsFirstHalf) {
  const RevNet net = RevNet::zeros({.dim = 2, .num_blocks = 1, .subnet_hidden = {3}});
  set_values(net.f(0).bias(net.f(0).layers() - 1), 0.5);  // f == 0.5, g == 0
  const Tensor y = eval([&](Tape& t, const Tensor& v) { return net.forward(t, v); }, Tensor::matrix({{1.25, -3.0}}));
  EXPECT_EQ(y.at(0), 1.75);
  EXPECT_EQ(y.at(1), -3.0);
}

TEST(RevNet, InverseMatchesHandDerivationIn2d) {
  Rng rng(5);
  const RevNet net({.dim = 2, .num_blocks = 1, .subnet_hidden = {3}}, rng);
  auto f = [&](double v) { return mlp_by_hand(net.f(0), {v})[0]; };
  auto g = [&](double v) { return mlp_by_hand(net.g(0), {v})[0]; };
  for (int i = 0; i < 20; ++i) {
    const double y1 = rng.uniform(-3, 3), y2 = rng.uniform(-3, 3);
    const double x2 = y2 - g(y1);
    const double x1 = y1 - f(x2);
    const Tensor x = eval([&](Tape& t, const Tensor& v) { return net.inverse(t, v); }, Tensor::matrix({{y1, y2}}));
    EXPECT_NEAR(x.at(0), x1, 1e-14);
    EXPECT_NEAR(x.at(1), x2, 1e-14);
  }
}

TEST(RevNet, RoundTripBothDirections) {
  for (std::size_t dim : {2, 8, 16, 64}) {
    for (std::uint64_t s = 0; s < 25; ++s) {
      Rng rng(derive_seed(dim, {s}));
      const RevNet net({.dim = dim, .num_blocks = 4, .subnet_hidden = {32, 32}}, rng);
      const Tensor x = random_rows(rng, 4, dim, -3, 3);
      const Tensor y = eval([&](Tape& t, const Tensor& v) { return net.forward(t, v); }, x);
      const Tensor back = eval([&](Tape& t, const Tensor& v) { return net.inverse(t, v); }, y);
      EXPECT_LT(max_abs_diff(back, x), 1e-9);
      const Tensor xi = eval([&](Tape& t, const Tensor& v) { return net.inverse(t, v); }, x);
      const Tensor fwd = eval([&](Tape& t, const Tensor& v) { return net.forward(t, v); }, xi);
      EXPECT_LT(max_abs_diff(fwd, x), 1e-9);
      if (dim == 16) EXPECT_GT(max_abs_diff(y, x), 0.0);
    }
  }
}

TEST(RevNet, JacobianNonSingularByFiniteDifferences) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(100 + s);
    const RevNet net({.dim = 8, .num_blocks = 2, .subnet_hidden = {16}}, rng);
    const Tensor x = random_rows(rng, 1, 8);
    Eigen::MatrixXd j(8, 8);
    for (std::size_t r = 0; r < 8; ++r) {
      const Tensor g = finite_diff_grad(
          [&](const Tensor& p) {
            return eval([&](Tape& t, const Tensor& v) { return net.forward(t, v); }, p).at(r);
          },
          x, 1e-6);
      for (std::size_t c = 0; c < 8; ++c) j(r, c) = g.at(c);
    }
    // Additive coupling is volume preserving, so det is exactly 1.
    EXPECT_GT(std::abs(j.determinant()), 1e-6);
    EXPECT_NEAR(j.determinant(), 1.0, 1e-6);
  }
}

TEST(RevNet, OddWidthRejected) {
  EXPECT_THROW(RevNetSpec({.dim = 5, .num_blocks = 1, .subnet_hidden = {}}).validate(), ConfigError);
  const RevNet net = RevNet::zeros({.dim = 4, .num_blocks = 1, .subnet_hidden = {}});
  Tape tape;
  EXPECT_THROW(net.forward(tape, Tensor::matrix({{1, 2, 3}})), ShapeError);
}

TEST(Pairwise, ZeroParamsGiveZeroLatent) {
  const PairwiseEncoder enc = PairwiseEncoder::zeros(3, {{6, 8, 4}});
  Rng rng(6);
  Tape tape;
  const Tensor z = enc.encode(tape, random_rows(rng, 5, 3), random_rows(rng, 5, 3));
  EXPECT_EQ(z.shape(), (Shape{5, 4}));
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST(Pairwise, OrderSensitive) {
  Rng rng(7);
  const PairwiseEncoder enc(3, {{6, 8, 4}}, rng);
  const Tensor a = random_rows(rng, 1, 3), b = random_rows(rng, 1, 3);
  Tape tape;
  EXPECT_GT(max_abs_diff(enc.encode(tape, a, b), enc.encode(tape, b, a)), 1e-6);
  const MlpSpec mlp{{6, 8, 4}};
  EXPECT_EQ(PairwiseEncoder::parameter_count(3, mlp), 27u + mlp.parameter_count());
}

TEST(Pairwise, GradientOfPairSumMatchesFiniteDifferences) {
  Rng rng(8);
  const PairwiseEncoder enc(4, {{8, 16, 6}}, rng);
  const std::size_t n = 4;
  const Tensor x = random_rows(rng, n, 4);
  std::vector<std::size_t> left, right;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) {
        left.push_back(i);
        right.push_back(j);
      }
  auto loss = [&](Tape& t, const Tensor& v) {
    const Tensor z = enc.encode(t, ad::gather_rows(t, v, left), ad::gather_rows(t, v, right));
    return ad::sum_all(t, ad::mul(t, z, z));
  };
  ParameterList params;
  enc.append_parameters(params, "pair");
  Tape tape;
  tape.backward(loss(tape, x));
  for (const auto& p : params) {
    const Tensor saved = p.tensor.clone();
    const Tensor fd = finite_diff_grad(
        [&](const Tensor& v) {
          Tensor h = p.tensor;
          std::copy(v.data().begin(), v.data().end(), h.mutable_data().begin());
          Tape t(Tape::Mode::inference);
          const double r = loss(t, x).item();
          std::copy(saved.data().begin(), saved.data().end(), h.mutable_data().begin());
          return r;
        },
        saved, 1e-6);
    EXPECT_LT(relative_error(p.tensor.grad(), fd.data()), 1e-3) << p.name;
  }
}

class CheckpointTest : public ::testing::Test {
 protected:
  std::filesystem::path dir = std::filesystem::temp_directory_path() / "quann_ckpt_test";
  void SetUp() override { std::filesystem::create_directories(dir); }
  void TearDown() override { std::filesystem::remove_all(dir); }
};

TEST_F(CheckpointTest, RoundTripAndFamilyTag) {
  Rng rng(9);
  const Mlp a({{3, 5, 2}}, rng);
  const RevNet r({.dim = 4, .num_blocks = 2, .subnet_hidden = {3}}, rng);
  ParameterList params;
  a.append_parameters(params, "phi");
  r.append_parameters(params, "psi");
  save_checkpoint(dir / "m.qnn", params, "quann1");
  const Checkpoint ck = load_checkpoint(dir / "m.qnn");
  EXPECT_EQ(ck.family, "quann1");
  ASSERT_EQ(ck.tensors.size(), params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    EXPECT_EQ(ck.tensors[i].name, params[i].name);
    EXPECT_EQ(ck.tensors[i].tensor.shape(), params[i].tensor.shape());
    EXPECT_TRUE(std::equal(params[i].tensor.data().begin(), params[i].tensor.data().end(),
                           ck.tensors[i].tensor.data().begin()));
  }

  Rng other(10);
  const Mlp b({{3, 5, 2}}, other);
  const RevNet s({.dim = 4, .num_blocks = 2, .subnet_hidden = {3}}, other);
  ParameterList target;
  b.append_parameters(target, "phi");
  s.append_parameters(target, "psi");
  assign_parameters(ck.tensors, target);
  EXPECT_EQ(b.weight(1).at(3), a.weight(1).at(3));

  ParameterList wrong;
  Mlp({{3, 4, 2}}, other).append_parameters(wrong, "phi");
  s.append_parameters(wrong, "psi");
  EXPECT_THROW(assign_parameters(ck.tensors, wrong), Error);
}

TEST_F(CheckpointTest, HeaderLayout) {
  ParameterList params{{"w", Tensor::matrix({{1.5, -2.0}})}};
  save_checkpoint(dir / "h.qnn", params);
  std::ifstream is(dir / "h.qnn", std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), {});
  // magic, version 1, count 1, name_len 1, 'w', rank 2, dims 1 and 2, two f64
  ASSERT_EQ(bytes.size(), 4u + 4 + 4 + 2 + 1 + 1 + 8 + 16);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "QNN1");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[8], 1);
  EXPECT_EQ(bytes[12], 1);
  EXPECT_EQ(bytes[14], 'w');
  EXPECT_EQ(bytes[15], 2);
  double first;
  std::memcpy(&first, bytes.data() + 24, 8);
  EXPECT_EQ(first, 1.5);
}

TEST_F(CheckpointTest, BadFilesRejected) {
  std::ofstream(dir / "bad.qnn") << "NOPE and more";
  EXPECT_THROW(load_checkpoint(dir / "bad.qnn"), IoError);
  EXPECT_THROW(load_checkpoint(dir / "missing.qnn"), IoError);
  ParameterList params{{"w", Tensor::matrix({{1.5, -2.0}})}};
  save_checkpoint(dir / "t.qnn", params);
  std::filesystem::resize_file(dir / "t.qnn", 20);
  EXPECT_THROW(load_checkpoint(dir / "t.qnn"), IoError);
}

}  // namespace
}  // namespace quann
