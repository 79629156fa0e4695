#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "quann/checkpoint.hpp"
#include "quann/errors.hpp"
#include "quann/gradcheck.hpp"
#include "quann/models.hpp"

namespace quann {
namespace {

constexpr std::size_t kWidth = 4;

PresetOptions small_preset(std::uint64_t seed = 7) {
  PresetOptions p;
  p.latent_width = 6;
  p.hidden_width = 10;
  p.revnet_hidden = {8};
  p.seed = seed;
  return p;
}

SetModel small_model(Family f, std::uint64_t seed = 7, bool equivariant = false) {
  PresetOptions p = small_preset(seed);
  p.equivariant = equivariant;
  return build_model(preset_config(f, kWidth, kWidth, p));
}

std::vector<double> random_set(Rng& rng, std::size_t n, std::size_t width = kWidth) {
  std::vector<double> v(n * width);
  for (double& x : v) x = rng.uniform(-2, 2);
  return v;
}

Tensor run(const SetModel& m, const SetBatch& b) {
  Tape tape(Tape::Mode::inference);
  return m.forward(tape, b);
}

std::vector<double> rows(const std::vector<double>& flat, std::size_t d, const std::vector<std::size_t>& perm) {
  std::vector<double> out;
  for (std::size_t i : perm) out.insert(out.end(), flat.begin() + i * d, flat.begin() + (i + 1) * d);
  return out;
}

void zero_generator(SetModel& m) {
  for (const auto& p : m.parameters())
    if (p.name.starts_with("psi/")) {
      Tensor t = p.tensor;
      std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
    }
}

TEST(Family, NamesRoundTrip) {
  for (Family f : all_families()) EXPECT_EQ(parse_family(family_name(f)), f);
  EXPECT_EQ(all_families().size(), 10u);
  EXPECT_THROW(parse_family("transformer"), ConfigError);
  EXPECT_TRUE(family_has_generator(Family::quann1));
  EXPECT_TRUE(family_has_generator(Family::quann2));
  EXPECT_FALSE(family_has_generator(Family::ablation1));
  EXPECT_EQ(family_arity(Family::quann2), 2u);
  EXPECT_EQ(family_arity(Family::settransformer_j2), 2u);
  EXPECT_EQ(family_arity(Family::hpds), 1u);
}

TEST(ModelConfig, ValidationNamesField) {
  ModelConfig c = preset_config(Family::quann1, kWidth, kWidth, small_preset());
  c.generator.reset();
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("generator"), std::string::npos);
  }
  ModelConfig d = preset_config(Family::deepset, kWidth, kWidth, small_preset());
  d.generator = RevNetSpec{.dim = 6, .num_blocks = 1, .subnet_hidden = {4}};
  EXPECT_THROW(d.validate(), ConfigError);

  PresetOptions odd = small_preset();
  odd.latent_width = 5;
  EXPECT_THROW(preset_config(Family::quann1, kWidth, kWidth, odd).validate(), ConfigError);
  EXPECT_NO_THROW(preset_config(Family::norm_deepset, kWidth, kWidth, odd).validate());

  ModelConfig e = preset_config(Family::deepset, kWidth, kWidth, small_preset());
  e.encoder.widths.front() = 3;
  try {
    e.validate();
    FAIL();
  } catch (const ConfigError& err) {
    EXPECT_NE(std::string(err.what()).find("encoder"), std::string::npos);
  }
}

TEST(SetModel, ParameterCountIsSumOfTensors) {
  for (Family f : all_families()) {
    const SetModel m = small_model(f);
    std::size_t total = 0;
    for (const auto& p : m.parameters()) total += p.tensor.numel();
    EXPECT_EQ(m.parameter_count(), total) << family_name(f);
    EXPECT_EQ(config_parameter_count(m.config()), total) << family_name(f);
  }
}

TEST(SetModel, SyntheticPresetAblation2MatchesQuann1) {
  const std::size_t q = build_model(preset_config(Family::quann1, 16, 16)).parameter_count();
  const std::size_t a = build_model(preset_config(Family::ablation2, 16, 16)).parameter_count();
  EXPECT_LE(std::abs(static_cast<double>(a) - static_cast<double>(q)), 0.05 * static_cast<double>(q));
  // Hand count of quann1: phi 16-128-16, rho 16-128-16, psi one block of two 8-32-32-8 nets.
  const std::size_t mlp = (16 * 128 + 128) + (128 * 16 + 16);
  const std::size_t sub = (8 * 32 + 32) + (32 * 32 + 32) + (32 * 8 + 8);
  EXPECT_EQ(q, 2 * mlp + 2 * sub);
}

TEST(SetModel, SameSeedBitIdenticalParameters) {
  for (Family f : all_families()) {
    const SetModel a = small_model(f, 11), b = small_model(f, 11), c = small_model(f, 12);
    bool differs = false;
    for (std::size_t i = 0; i < a.parameters().size(); ++i) {
      const auto x = a.parameters()[i].tensor.data(), y = b.parameters()[i].tensor.data();
      EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin()));
      const auto z = c.parameters()[i].tensor.data();
      differs = differs || !std::equal(x.begin(), x.end(), z.begin());
    }
    EXPECT_TRUE(differs) << family_name(f);
  }
}

TEST(SetModel, IdentityGeneratorQuann1EqualsNormDeepset) {
  SetModel q = small_model(Family::quann1, 3);
  zero_generator(q);
  const SetModel nd = small_model(Family::norm_deepset, 3);
  Rng rng(1);
  const SetBatch b = SetBatch::from_sets(kWidth, {random_set(rng, 5), random_set(rng, 2), random_set(rng, 9)});
  const Tensor yq = run(q, b), yn = run(nd, b);
  for (std::size_t i = 0; i < yq.numel(); ++i) EXPECT_NEAR(yq.at(i), yn.at(i), 1e-14);
}

TEST(SetModel, ForwardMatchesHandWiring) {
  Rng rng(2);
  const auto x = random_set(rng, 6);
  const SetBatch b = SetBatch::from_sets(kWidth, {x});
  Tape t(Tape::Mode::inference);
  const Tensor rowsx({6, kWidth}, x);
  for (Family f : {Family::quann1, Family::deepset, Family::pointnet, Family::norm_deepset, Family::ablation3}) {
    const SetModel m = small_model(f);
    const Tensor h = m.encoder().forward(t, rowsx);
    const std::size_t L = h.dim(1);
    std::vector<double> pooled(L, f == Family::pointnet ? -INFINITY : 0.0);
    if (f == Family::quann1 || f == Family::ablation3) {
      const Tensor ph = m.generator()->forward(t, h);
      std::vector<double> s(L, 0.0);
      for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t c = 0; c < L; ++c) s[c] += ph.at(i, c);
      if (f == Family::quann1)
        for (double& v : s) v /= 6.0;
      const Tensor inv = m.generator()->inverse(t, Tensor({1, L}, s));
      pooled.assign(inv.data().begin(), inv.data().end());
    } else {
      for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t c = 0; c < L; ++c) {
          if (f == Family::pointnet) pooled[c] = std::max(pooled[c], h.at(i, c));
          else pooled[c] += h.at(i, c);
        }
      if (f == Family::norm_deepset)
        for (double& v : pooled) v /= 6.0;
    }
    const Tensor ref = m.estimator().forward(t, Tensor({1, L}, pooled));
    const Tensor y = run(m, b);
    for (std::size_t c = 0; c < kWidth; ++c) EXPECT_NEAR(y.at(c), ref.at(c), 1e-12) << family_name(f);
  }
}

TEST(SetModel, SingletonQuann1IsRhoOfPhi) {
  const SetModel m = small_model(Family::quann1);
  Rng rng(3);
  const auto x = random_set(rng, 1);
  Tape t(Tape::Mode::inference);
  const Tensor ref = m.estimator().forward(t, m.encoder().forward(t, Tensor({1, kWidth}, x)));
  const Tensor y = run(m, SetBatch::from_sets(kWidth, {x}));
  for (std::size_t c = 0; c < kWidth; ++c) EXPECT_NEAR(y.at(c), ref.at(c), 1e-12);
}

TEST(SetModel, DuplicationBehaviour) {
  Rng rng(4);
  const auto x = random_set(rng, 1);
  auto xx = x;
  xx.insert(xx.end(), x.begin(), x.end());
  Tape t(Tape::Mode::inference);
  const SetModel ds = small_model(Family::deepset);
  const Tensor p1 = ds.pooled(t, SetBatch::from_sets(kWidth, {x}));
  const Tensor p2 = ds.pooled(t, SetBatch::from_sets(kWidth, {xx}));
  for (std::size_t c = 0; c < p1.numel(); ++c) EXPECT_DOUBLE_EQ(p2.at(c), 2.0 * p1.at(c));
  const SetModel nd = small_model(Family::norm_deepset);
  const Tensor y1 = run(nd, SetBatch::from_sets(kWidth, {x})), y2 = run(nd, SetBatch::from_sets(kWidth, {xx}));
  for (std::size_t c = 0; c < kWidth; ++c) EXPECT_NEAR(y1.at(c), y2.at(c), 1e-15);
}

TEST(SetModel, EveryFamilyPermutationInvariant) {
  Rng rng(5);
  const std::size_t n = 7;
  const auto x = random_set(rng, n);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (Family f : all_families()) {
    const SetModel m = small_model(f);
    const Tensor ref = run(m, SetBatch::from_sets(kWidth, {x}));
    for (int t = 0; t < 10; ++t) {
      rng.shuffle(std::span<std::size_t>(perm));
      const Tensor y = run(m, SetBatch::from_sets(kWidth, {rows(x, kWidth, perm)}));
      for (std::size_t c = 0; c < kWidth; ++c) EXPECT_NEAR(y.at(c), ref.at(c), 1e-8) << family_name(f);
    }
  }
}

TEST(SetModel, Quann1PooledIsMeanInGeneratorSpace) {
  const SetModel m = small_model(Family::quann1);
  Rng rng(6);
  const auto x = random_set(rng, 8);
  Tape t(Tape::Mode::inference);
  const Tensor pooled = m.pooled(t, SetBatch::from_sets(kWidth, {x}));
  const Tensor psi_pooled = m.generator()->forward(t, pooled);
  const Tensor psi_h = m.generator()->forward(t, m.encoder().forward(t, Tensor({8, kWidth}, x)));
  for (std::size_t c = 0; c < pooled.numel(); ++c) {
    double mean = 0.0;
    for (std::size_t i = 0; i < 8; ++i) mean += psi_h.at(i, c) / 8.0;
    EXPECT_NEAR(psi_pooled.at(c), mean, 1e-8);
  }
}

TEST(SetModel, Ablation3CoincidesWithQuann1ForSingletons) {
  const SetModel q = small_model(Family::quann1, 9), a = small_model(Family::ablation3, 9);
  Rng rng(7);
  const SetBatch one = SetBatch::from_sets(kWidth, {random_set(rng, 1), random_set(rng, 1)});
  const Tensor yq = run(q, one), ya = run(a, one);
  for (std::size_t i = 0; i < yq.numel(); ++i) EXPECT_EQ(yq.at(i), ya.at(i));
  const SetBatch many = SetBatch::from_sets(kWidth, {random_set(rng, 5)});
  const Tensor mq = run(q, many), ma = run(a, many);
  double diff = 0.0;
  for (std::size_t i = 0; i < mq.numel(); ++i) diff += std::abs(mq.at(i) - ma.at(i));
  EXPECT_GT(diff, 1e-6);
}

TEST(SetModel, BinaryFamiliesAggregateOrderedPairs) {
  Rng rng(8);
  const std::size_t n = 4;
  const auto x = random_set(rng, n);
  Tape t(Tape::Mode::inference);
  for (Family f : {Family::quann2, Family::settransformer_j2}) {
    const SetModel m = small_model(f);
    std::vector<double> xi, xj;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) {
          xi.insert(xi.end(), x.begin() + i * kWidth, x.begin() + (i + 1) * kWidth);
          xj.insert(xj.end(), x.begin() + j * kWidth, x.begin() + (j + 1) * kWidth);
        }
    const std::size_t P = n * (n - 1);
    const Tensor h = m.pairwise()->encode(t, Tensor({P, kWidth}, xi), Tensor({P, kWidth}, xj));
    const std::size_t L = h.dim(1);
    Tensor pooled_ref;
    if (f == Family::quann2) {
      const Tensor ph = m.generator()->forward(t, h);
      std::vector<double> s(L, 0.0);
      for (std::size_t r = 0; r < P; ++r)
        for (std::size_t c = 0; c < L; ++c) s[c] += ph.at(r, c) / static_cast<double>(P);
      pooled_ref = m.generator()->inverse(t, Tensor({1, L}, s));
    } else {
      std::vector<double> s(L, 0.0);
      for (std::size_t r = 0; r < P; ++r)
        for (std::size_t c = 0; c < L; ++c) s[c] += h.at(r, c);
      pooled_ref = Tensor({1, L}, s);
    }
    const Tensor pooled = m.pooled(t, SetBatch::from_sets(kWidth, {x}));
    for (std::size_t c = 0; c < L; ++c) EXPECT_NEAR(pooled.at(c), pooled_ref.at(c), 1e-12) << family_name(f);
    EXPECT_THROW(run(m, SetBatch::from_sets(kWidth, {random_set(rng, 1)})), EmptySetError);
  }
}

TEST(SetModel, HpdsUsesPowerMeanOfSoftplus) {
  const SetModel m = small_model(Family::hpds);
  EXPECT_EQ(m.hpds_exponent().item(), 1.0);
  Rng rng(9);
  const auto x = random_set(rng, 3);
  Tape t(Tape::Mode::inference);
  const Tensor h = m.encoder().forward(t, Tensor({3, kWidth}, x));
  const Tensor pooled = m.pooled(t, SetBatch::from_sets(kWidth, {x}));
  for (std::size_t c = 0; c < h.dim(1); ++c) {
    double mean = 0.0;
    for (std::size_t i = 0; i < 3; ++i) mean += (std::log1p(std::exp(h.at(i, c))) + kHpdsShift) / 3.0;
    EXPECT_NEAR(pooled.at(c), mean, 1e-12);  // w = 1 gives the arithmetic mean
  }
}

TEST(SetModel, WidthMismatchRejected) {
  const SetModel m = small_model(Family::deepset);
  EXPECT_THROW(run(m, SetBatch::from_sets(3, {{1, 2, 3}})), ShapeError);
}

TEST(SetModel, GradientsMatchFiniteDifferencesPerGroup) {
  const SetModel m = small_model(Family::quann1, 21);
  Rng rng(10);
  const SetBatch b = SetBatch::from_sets(kWidth, {random_set(rng, 4), random_set(rng, 3)});
  std::vector<double> target(2 * kWidth);
  for (double& v : target) v = rng.uniform(-1, 1);
  const Tensor y({2, kWidth}, target);
  auto loss = [&]() {
    Tape t(Tape::Mode::inference);
    return loss_mse(t, m.forward(t, b), y).item();
  };
  {
    Tape t;
    t.backward(loss_mse(t, m.forward(t, b), y));
  }
  for (const char* group : {"phi/", "psi/", "rho/"}) {
    std::vector<double> analytic, numeric;
    for (const auto& p : m.parameters()) {
      if (!p.name.starts_with(group)) continue;
      Tensor w = p.tensor;
      for (std::size_t i = 0; i < w.numel(); ++i) {
        const double orig = w.at(i), h = 1e-6;
        w.mutable_data()[i] = orig + h;
        const double up = loss();
        w.mutable_data()[i] = orig - h;
        const double down = loss();
        w.mutable_data()[i] = orig;
        numeric.push_back((up - down) / (2 * h));
        analytic.push_back(w.has_grad() ? w.grad()[i] : 0.0);
      }
    }
    ASSERT_FALSE(analytic.empty()) << group;
    EXPECT_LT(relative_error(analytic, numeric), 1e-3) << group;
  }
}

TEST(Equivariant, PermutationEquivariantAndSpecialCases) {
  const SetModel m = small_model(Family::quann1, 4, true);
  EXPECT_THROW(run(m, SetBatch::from_sets(kWidth, {{1, 2, 3, 4}})), ConfigError);
  Rng rng(11);
  const std::size_t n = 5;
  const auto x = random_set(rng, n);
  Tape t(Tape::Mode::inference);
  const Tensor ref = m.equivariant_forward(t, SetBatch::from_sets(kWidth, {x}));
  ASSERT_EQ(ref.shape(), (Shape{1, n, kWidth}));
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  for (int k = 0; k < 10; ++k) {
    rng.shuffle(std::span<std::size_t>(perm));
    const Tensor y = m.equivariant_forward(t, SetBatch::from_sets(kWidth, {rows(x, kWidth, perm)}));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < kWidth; ++c) EXPECT_NEAR(y.at(i * kWidth + c), ref.at(perm[i] * kWidth + c), 1e-10);
  }

  // Singleton: rho(concat(x, phi(x))).
  const auto one = random_set(rng, 1);
  const Tensor ys = m.equivariant_forward(t, SetBatch::from_sets(kWidth, {one}));
  const Tensor h = m.encoder().forward(t, Tensor({1, kWidth}, one));
  std::vector<double> cat = one;
  cat.insert(cat.end(), h.data().begin(), h.data().end());
  const Tensor expect = m.estimator().forward(t, Tensor({1, cat.size()}, cat));
  for (std::size_t c = 0; c < kWidth; ++c) EXPECT_NEAR(ys.at(c), expect.at(c), 1e-12);

  // All-equal set: identical rows; padding rows stay zero.
  std::vector<double> same;
  for (int i = 0; i < 3; ++i) same.insert(same.end(), one.begin(), one.end());
  const Tensor ye = m.equivariant_forward(t, SetBatch::from_sets(kWidth, {same, one}));
  for (std::size_t i = 1; i < 3; ++i)
    for (std::size_t c = 0; c < kWidth; ++c) EXPECT_NEAR(ye.at(i * kWidth + c), ye.at(c), 1e-12);
  for (std::size_t i = 1; i < 3; ++i)
    for (std::size_t c = 0; c < kWidth; ++c) EXPECT_EQ(ye.at((3 + i) * kWidth + c), 0.0);
}

TEST(LossMse, Examples) {
  Tape t;
  EXPECT_EQ(loss_mse(t, Tensor::matrix({{1, 2}}), Tensor::matrix({{1, 2}})).item(), 0.0);
  EXPECT_EQ(loss_mse(t, Tensor::matrix({{0}}), Tensor::matrix({{2}})).item(), 4.0);
  EXPECT_EQ(loss_mse(t, Tensor::matrix({{0}, {2}}), Tensor::matrix({{1}, {1}})).item(), 1.0);
  EXPECT_THROW(loss_mse(t, Tensor::matrix({{0, 1}}), Tensor::matrix({{0}})), ShapeError);
}

TEST(SetModel, CheckpointRoundTripReproducesOutputs) {
  const SetModel a = small_model(Family::quann1, 30);
  SetModel b = small_model(Family::quann1, 31);
  const auto path = std::filesystem::temp_directory_path() / "quann_models_ckpt.qnn";
  save_checkpoint(path, a.parameters(), std::string(family_name(a.family())));
  const Checkpoint ck = load_checkpoint(path);
  EXPECT_EQ(ck.family, "quann1");
  ParameterList target = b.parameters();
  assign_parameters(ck.tensors, target);
  Rng rng(12);
  const SetBatch batch = SetBatch::from_sets(kWidth, {random_set(rng, 4)});
  const Tensor ya = run(a, batch), yb = run(b, batch);
  for (std::size_t i = 0; i < ya.numel(); ++i) EXPECT_EQ(ya.at(i), yb.at(i));
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace quann
