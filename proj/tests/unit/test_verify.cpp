#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "quann/errors.hpp"
#include "quann/nkm.hpp"
#include "quann/verify.hpp"

namespace quann {
namespace {

std::vector<std::size_t> powers_of_two(std::size_t hi) {
  std::vector<std::size_t> out;
  for (std::size_t n = 2; n <= hi; n *= 2) out.push_back(n);
  return out;
}

TEST(LinearCollapse, PassesAndIsDeterministic) {
  const PropositionCheck a = check_linear_collapse(1000, 1), b = check_linear_collapse(1000, 1);
  EXPECT_TRUE(a.passed) << a.detail;
  EXPECT_EQ(a.instances, 1000u);
  EXPECT_LE(a.observed_max_violation, 0.0);
  EXPECT_EQ(a.observed_max_violation, b.observed_max_violation);
  EXPECT_EQ(a.worst_values, b.worst_values);
  EXPECT_FALSE(a.worst_values.empty());
}

TEST(LinearCollapse, HandInstances) {
  EXPECT_EQ(closed_form_kolmogorov(AffineFn{2, 3}, std::vector<double>{1, 2, 3}), 2.0);
  EXPECT_EQ(closed_form_kolmogorov(AffineFn{1, 0}, std::vector<double>{-4, 9, 1.5}), 6.5 / 3.0);
}

TEST(MaxBound, SpecGridPasses) {
  const std::vector<double> ws{1, 5, 25};
  const auto ns = powers_of_two(1024);
  EXPECT_EQ(ns.size(), 10u);
  const PropositionCheck c = check_max_bound(ws, ns, 100, 2);
  EXPECT_TRUE(c.passed) << c.detail;
  EXPECT_EQ(c.instances, 100u * 3u * 10u);
  EXPECT_GE(c.params.at("min_tightness"), 0.99);
}

TEST(MaxBound, DirectEvaluationAtTenAndFive) {
  const double bound = std::log(10.0) / 5.0;
  EXPECT_NEAR(bound, 0.46052, 1e-5);
  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> x(10);
    for (double& v : x) v = rng.uniform(-10, 10);
    const double mx = *std::max_element(x.begin(), x.end());
    // log-mean-exp in long double as an independent reference
    long double s = 0;
    for (double v : x) s += std::exp(5.0L * (v - mx));
    const double m = static_cast<double>(mx + std::log(s / 10.0L) / 5.0L);
    EXPECT_NEAR(closed_form_kolmogorov(ExpFn{5.0}, x), m, 1e-12);
    EXPECT_GE(mx - m, 0.0);
    EXPECT_LE(mx - m, bound + 1e-12);
  }
  const std::vector<double> same(7, 3.25);
  EXPECT_EQ(closed_form_kolmogorov(ExpFn{5.0}, same), 3.25);
  EXPECT_EQ(closed_form_kolmogorov(ExpFn{5.0}, std::vector<double>{-2.0}), -2.0);
}

TEST(MaxBound, RejectsNonPositiveW) {
  const std::vector<double> ws{0.0};
  const std::vector<std::size_t> ns{2};
  EXPECT_THROW(check_max_bound(ws, ns, 10, 0), ConfigError);
}

TEST(SumGrowth, SlopesAndConstantSets) {
  const std::vector<std::size_t> ns{2, 8, 32, 128};
  const PropositionCheck c = check_sum_growth(ns, 200, 4);
  EXPECT_TRUE(c.passed) << c.detail;
  for (const auto& [k, v] : c.params)
    if (k.starts_with("slope:")) EXPECT_GE(v, 0.45) << k;
  // Constant sets: error is exactly (n - 1) c for every generator.
  for (std::size_t n : ns) {
    const std::vector<double> x(n, 0.75);
    for (const ScalarGenerator& g : {ScalarGenerator{AffineFn{2, 1}}, ScalarGenerator{ExpFn{1}},
                                     ScalarGenerator{LogFn{}}, ScalarGenerator{PowerFn{2}}})
      EXPECT_NEAR(0.75 * n - closed_form_kolmogorov(g, x), (n - 1) * 0.75, 1e-12);
  }
}

TEST(SumGrowth, IndependentSlopeFit) {
  // Least squares by hand on exact errors of the identity generator.
  const std::vector<double> ns{2, 8, 32, 128};
  Rng rng(5);
  std::vector<double> err;
  for (double n : ns) {
    double tot = 0;
    for (int i = 0; i < 200; ++i) {
      std::vector<double> x(static_cast<std::size_t>(n));
      for (double& v : x) v = rng.uniform(0.5, 1.0);
      double s = 0;
      for (double v : x) s += v;
      tot += s - s / n;
    }
    err.push_back(tot / 200);
  }
  const double mx = (2 + 8 + 32 + 128) / 4.0;
  double my = 0;
  for (double e : err) my += e / 4;
  double sxy = 0, sxx = 0;
  for (int i = 0; i < 4; ++i) sxy += (ns[i] - mx) * (err[i] - my), sxx += (ns[i] - mx) * (ns[i] - mx);
  // Expected slope 0.75 (the value mean) times (1 - tiny 1/n effect).
  EXPECT_GT(sxy / sxx, 0.45);
  EXPECT_NEAR(sxy / sxx, 0.75, 0.05);
}

TEST(ExpectedSumRescale, DegenerateIsExactAndSpreadImproves) {
  const std::vector<std::size_t> ten{10};
  const PropositionCheck d = check_expected_sum_rescale(ten, 1000, 6);
  EXPECT_TRUE(d.passed) << d.detail;
  EXPECT_EQ(d.worst.at("error"), 0.0);
  const std::vector<std::size_t> spread{9, 10, 11};
  const PropositionCheck s = check_expected_sum_rescale(spread, 1000, 6);
  EXPECT_TRUE(s.passed) << s.detail;
  EXPECT_LT(s.params.at("mean_error_rescaled"), s.params.at("mean_error_unscaled"));
  EXPECT_THROW(check_expected_sum_rescale(std::vector<std::size_t>{}, 10, 0), ConfigError);
}

TEST(AppendixDerivative, RevNetDim8) {
  const PropositionCheck c = check_appendix_derivative(8, 100, 7);
  EXPECT_TRUE(c.passed) << c.detail;
  EXPECT_GT(c.params.at("min_abs_det"), 1e-12);
  EXPECT_GT(c.params.at("min_scalar_derivative"), 0.0);
  EXPECT_THROW(check_appendix_derivative(7, 1, 0), ConfigError);
}

TEST(RunAll, FiveChecksPassAndZeroToleranceFails) {
  const auto checks = run_all_checks(0);
  ASSERT_EQ(checks.size(), 5u);
  for (const auto& c : checks) EXPECT_TRUE(c.passed) << c.name << ": " << c.detail;

  const auto strict = run_all_checks(0, 0.0);
  EXPECT_TRUE(std::any_of(strict.begin(), strict.end(), [](const auto& c) { return !c.passed; }));

  const auto j = nlohmann::json::parse(checks_to_json(checks));
  ASSERT_TRUE(j.is_array());
  ASSERT_EQ(j.size(), 5u);
  for (const auto& e : j) {
    EXPECT_TRUE(e.contains("name"));
    EXPECT_TRUE(e.at("passed").get<bool>());
    ASSERT_TRUE(e.contains("worst_instance"));
    EXPECT_TRUE(e.at("worst_instance").contains("values"));
  }
}

}  // namespace
}  // namespace quann
