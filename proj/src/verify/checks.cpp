#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>
#include <numeric>

#include "quann/errors.hpp"
#include "quann/gradcheck.hpp"
#include "quann/nkm.hpp"
#include "quann/rng.hpp"
#include "quann/verify.hpp"

namespace quann {
namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::vector<double> uniform_values(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

double plain_mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double plain_sum(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

// Least-squares slope of y against x.
double slope(std::span<const double> x, std::span<const double> y) {
  const double mx = plain_mean(x), my = plain_mean(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

void finish(PropositionCheck& c, bool extra_ok = true) {
  c.passed = c.observed_max_violation <= 0.0 && extra_ok;
}

}  // namespace

PropositionCheck check_linear_collapse(std::size_t instances, std::uint64_t seed, double tolerance) {
  if (instances == 0) throw ConfigError("check_linear_collapse: instances must be positive");
  PropositionCheck c;
  c.name = "linear_collapse";
  c.instances = instances;
  c.bound = "|M_affine(x) - mean(x)| <= tolerance";
  c.tolerance = tolerance;
  c.params = {{"w1_lo", 0.1}, {"w1_hi", 10.0}, {"w2_lo", -5.0}, {"w2_hi", 5.0}, {"n_max", 64.0}};
  c.observed_max_violation = -INFINITY;
  for (std::size_t i = 0; i < instances; ++i) {
    Rng rng(derive_seed(seed, {1, i}));
    const AffineFn f{rng.uniform(0.1, 10.0), rng.uniform(-5.0, 5.0)};
    const std::vector<double> x = uniform_values(rng, rng.between(1, 64), -10.0, 10.0);
    const double dev = std::abs(closed_form_kolmogorov(f, x) - plain_mean(x));
    const double violation = dev - tolerance;
    if (violation > c.observed_max_violation) {
      c.observed_max_violation = violation;
      c.worst = {{"instance", static_cast<double>(i)}, {"w1", f.w1}, {"w2", f.w2}, {"deviation", dev}};
      c.worst_values = x;
    }
  }
  finish(c);
  c.detail = "max deviation " + num(c.worst.at("deviation"));
  return c;
}

PropositionCheck check_max_bound(std::span<const double> w_values, std::span<const std::size_t> n_values,
                                 std::size_t instances, std::uint64_t seed, double tolerance) {
  if (w_values.empty() || n_values.empty() || instances == 0) throw ConfigError("check_max_bound: empty grid");
  for (double w : w_values) {
    if (!(w > 0.0)) throw ConfigError("check_max_bound: w must be positive");
  }
  PropositionCheck c;
  c.name = "max_bound";
  c.instances = instances * w_values.size() * n_values.size();
  c.bound = "0 <= max(x) - M_exp(w)(x) <= log(n) / w";
  c.tolerance = tolerance;
  c.params = {{"L_a", 1.0}, {"x_lo", -10.0}, {"x_hi", 10.0}, {"instances_per_cell", static_cast<double>(instances)}};
  c.observed_max_violation = -INFINITY;
  double min_tightness = INFINITY;
  for (std::size_t wi = 0; wi < w_values.size(); ++wi) {
    const double w = w_values[wi];
    for (std::size_t ni = 0; ni < n_values.size(); ++ni) {
      const std::size_t n = n_values[ni];
      if (n == 0) throw ConfigError("check_max_bound: n must be positive");
      const double bound = std::log(static_cast<double>(n)) / w;
      for (std::size_t i = 0; i < instances; ++i) {
        Rng rng(derive_seed(seed, {2, wi, ni, i}));
        const std::vector<double> x = uniform_values(rng, n, -10.0, 10.0);
        const double gap = *std::max_element(x.begin(), x.end()) - closed_form_kolmogorov(ExpFn{w}, x);
        const double violation = std::max(-gap, gap - bound) - tolerance;
        if (violation > c.observed_max_violation) {
          c.observed_max_violation = violation;
          c.worst = {{"w", w}, {"n", static_cast<double>(n)}, {"instance", static_cast<double>(i)},
                     {"gap", gap}, {"bound", bound}};
          c.worst_values = x;
        }
      }
      if (n > 1) {
        // one element dominates: the gap approaches the bound itself
        std::vector<double> x(n, -1000.0 / w);
        x[0] = 0.0;
        const double gap = -closed_form_kolmogorov(ExpFn{w}, x);
        min_tightness = std::min(min_tightness, gap / bound);
      }
    }
  }
  c.params["min_tightness"] = min_tightness;
  finish(c, !(min_tightness < 0.99));
  c.detail = "worst gap/bound margin " + num(c.observed_max_violation + tolerance) +
             ", dominant-element gap reaches " + num(min_tightness) + " of the bound";
  return c;
}

PropositionCheck check_sum_growth(std::span<const std::size_t> n_values, std::size_t instances, std::uint64_t seed,
                                  double b0, double b1) {
  if (n_values.size() < 2 || instances == 0) throw ConfigError("check_sum_growth: need two n values and instances");
  if (!(b0 > 0.0 && b0 < b1)) throw ConfigError("check_sum_growth: need 0 < b0 < b1");
  PropositionCheck c;
  c.name = "sum_growth";
  c.instances = instances * n_values.size();
  c.bound = "slope of mean |sum(x) - M_f(x)| over n >= 0.9 * B0";
  c.params = {{"B0", b0}, {"B1", b1}, {"L_a", 1.0}};
  const double required = 0.9 * b0;
  const std::vector<std::pair<std::string, ScalarGenerator>> families{
      {"affine(2,1)", AffineFn{2.0, 1.0}}, {"exp(1)", ExpFn{1.0}},  {"exp(5)", ExpFn{5.0}},
      {"log", LogFn{}},                    {"power(2)", PowerFn{2.0}}, {"power(0.5)", PowerFn{0.5}},
  };
  std::vector<double> ns;
  for (std::size_t n : n_values) ns.push_back(static_cast<double>(n));
  c.observed_max_violation = -INFINITY;
  std::string slopes;
  for (std::size_t fi = 0; fi < families.size(); ++fi) {
    std::vector<double> mean_err;
    for (std::size_t ni = 0; ni < n_values.size(); ++ni) {
      double total = 0.0;
      for (std::size_t i = 0; i < instances; ++i) {
        Rng rng(derive_seed(seed, {3, ni, i}));
        const std::vector<double> x = uniform_values(rng, n_values[ni], b0, b1);
        total += std::abs(plain_sum(x) - closed_form_kolmogorov(families[fi].second, x));
      }
      mean_err.push_back(total / static_cast<double>(instances));
    }
    const double s = slope(ns, mean_err);
    c.params["slope:" + families[fi].first] = s;
    slopes += (slopes.empty() ? "" : ", ") + families[fi].first + " " + num(s);
    const double violation = required - s;
    if (violation > c.observed_max_violation) {
      c.observed_max_violation = violation;
      c.worst = {{"family_index", static_cast<double>(fi)}, {"slope", s}, {"required", required}};
      c.worst_values = mean_err;
    }
  }
  finish(c);
  c.detail = "slopes: " + slopes;
  return c;
}

PropositionCheck check_expected_sum_rescale(std::span<const std::size_t> n_distribution, std::size_t instances,
                                            std::uint64_t seed, double tolerance) {
  if (n_distribution.empty()) throw ConfigError("check_expected_sum_rescale: empty cardinality distribution");
  if (instances == 0) throw ConfigError("check_expected_sum_rescale: instances must be positive");
  for (std::size_t n : n_distribution) {
    if (n == 0) throw ConfigError("check_expected_sum_rescale: cardinalities must be positive");
  }
  std::vector<double> support(n_distribution.begin(), n_distribution.end());
  const double n_bar = plain_mean(support);
  const bool degenerate = std::all_of(n_distribution.begin(), n_distribution.end(),
                                      [&](std::size_t n) { return n == n_distribution[0]; });
  PropositionCheck c;
  c.name = "expected_sum_rescale";
  c.instances = instances;
  c.tolerance = tolerance;
  c.bound = degenerate ? "|sum(x) - n_bar * mean(x)| <= tolerance for n == n_bar"
                       : "E|sum(x) - n_bar * mean(x)| < E|sum(x) - mean(x)|";
  c.params = {{"n_bar", n_bar}, {"B0", 0.5}, {"B1", 1.0}, {"degenerate", degenerate ? 1.0 : 0.0}};
  double max_err = 0.0, total_rescaled = 0.0, total_plain = 0.0;
  for (std::size_t i = 0; i < instances; ++i) {
    Rng rng(derive_seed(seed, {4, i}));
    const std::size_t n = n_distribution[rng.below(n_distribution.size())];
    const std::vector<double> x = uniform_values(rng, n, 0.5, 1.0);
    const double sum = plain_sum(x);
    // mean of the n_bar-scaled encodings under the identity generator
    const double rescaled = (n_bar / static_cast<double>(n)) * sum;
    const double err = std::abs(sum - rescaled);
    total_rescaled += err;
    total_plain += std::abs(sum - sum / static_cast<double>(n));
    if (err >= max_err) {
      max_err = err;
      c.worst = {{"instance", static_cast<double>(i)}, {"n", static_cast<double>(n)}, {"error", err}};
      c.worst_values = x;
    }
  }
  const double mean_rescaled = total_rescaled / static_cast<double>(instances);
  const double mean_plain = total_plain / static_cast<double>(instances);
  c.params["mean_error_rescaled"] = mean_rescaled;
  c.params["mean_error_unscaled"] = mean_plain;
  if (degenerate) {
    c.observed_max_violation = max_err - tolerance;
    finish(c);
  } else {
    c.observed_max_violation = mean_rescaled - mean_plain;
    c.passed = mean_rescaled < mean_plain;
  }
  c.detail = "max error " + num(max_err) + ", mean error rescaled " + num(mean_rescaled) +
             " vs unscaled " + num(mean_plain);
  return c;
}

PropositionCheck check_appendix_derivative(std::size_t dim, std::size_t instances, std::uint64_t seed,
                                           double tolerance) {
  if (dim == 0 || dim % 2 != 0) throw ConfigError("check_appendix_derivative: dim must be even and positive");
  if (instances == 0) throw ConfigError("check_appendix_derivative: instances must be positive");
  constexpr double kStep = 1e-6;
  constexpr double kMinDet = 1e-12;
  PropositionCheck c;
  c.name = "appendix_derivative";
  c.instances = instances;
  c.tolerance = tolerance;
  c.bound = "relerr(J_analytic, J_fd) <= tolerance; |det J| > 1e-12; scalar dM/dx_j > 0";
  c.params = {{"dim", static_cast<double>(dim)}, {"fd_step", kStep}, {"min_det", kMinDet}};
  c.observed_max_violation = -INFINITY;
  double min_abs_det = INFINITY;
  for (std::size_t inst = 0; inst < instances; ++inst) {
    Rng rng(derive_seed(seed, {5, inst}));
    const RevNetGenerator psi(RevNet(RevNetSpec{dim, 2, {16}}, rng));
    const std::size_t n = rng.between(2, 8);
    const std::size_t j = rng.below(n);
    Tensor set({n, dim}, uniform_values(rng, n * dim, -1.0, 1.0));
    const Tensor analytic = nkm_jacobian(psi, set, j);

    std::vector<double> fd(dim * dim);
    auto pool_at = [&](const Tensor& s) {
      Tape tape(Tape::Mode::inference);
      return nkm_pool(tape, psi, PackedSets{s, {0, n}});
    };
    for (std::size_t k = 0; k < dim; ++k) {
      Tensor up = set.clone(), down = set.clone();
      up.mutable_data()[j * dim + k] += kStep;
      down.mutable_data()[j * dim + k] -= kStep;
      const Tensor yu = pool_at(up), yd = pool_at(down);
      for (std::size_t r = 0; r < dim; ++r) fd[r * dim + k] = (yu.at(r) - yd.at(r)) / (2.0 * kStep);
    }
    const double rel = relative_error(analytic.data(), fd);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> jm(
        analytic.data().data(), dim, dim);
    const double det = std::abs(jm.determinant());
    min_abs_det = std::min(min_abs_det, det);
    const double violation = rel - tolerance;
    if (violation > c.observed_max_violation) {
      c.observed_max_violation = violation;
      c.worst = {{"instance", static_cast<double>(inst)}, {"n", static_cast<double>(n)}, {"j", static_cast<double>(j)},
                 {"relative_error", rel}, {"abs_det", det}};
      c.worst_values.assign(set.data().begin(), set.data().end());
    }
  }

  // monotone increasing scalar generators: every partial derivative is positive
  double min_scalar_derivative = INFINITY;
  const std::vector<ScalarGenerator> scalar{ExpFn{0.5}, ExpFn{1.0}, ExpFn{5.0}, LogFn{}, PowerFn{2.0}, AffineFn{3.0, -1.0}};
  for (std::size_t inst = 0; inst < instances; ++inst) {
    Rng rng(derive_seed(seed, {6, inst}));
    const std::vector<double> x = uniform_values(rng, rng.between(1, 32), 0.1, 5.0);
    for (const ScalarGenerator& f : scalar) {
      for (std::size_t j = 0; j < x.size(); ++j) {
        min_scalar_derivative = std::min(min_scalar_derivative, closed_form_derivative(f, x, j));
      }
    }
  }
  c.params["min_abs_det"] = min_abs_det;
  c.params["min_scalar_derivative"] = min_scalar_derivative;
  finish(c, min_abs_det > kMinDet && min_scalar_derivative > 0.0);
  c.detail = "max relative error " + num(c.observed_max_violation + tolerance) + ", min |det| " +
             num(min_abs_det) + ", min scalar derivative " + num(min_scalar_derivative);
  return c;
}

std::vector<PropositionCheck> run_all_checks(std::uint64_t seed, std::optional<double> tolerance) {
  std::vector<std::size_t> powers;
  for (std::size_t n = 2; n <= 1024; n *= 2) powers.push_back(n);
  const std::vector<double> ws{1.0, 5.0, 25.0};
  const std::vector<std::size_t> growth_n{2, 8, 32, 128};
  const std::vector<std::size_t> degenerate{10};
  return {
      check_linear_collapse(1000, seed, tolerance.value_or(1e-10)),
      check_max_bound(ws, powers, 1000, seed, tolerance.value_or(1e-9)),
      check_sum_growth(growth_n, 200, seed),
      check_expected_sum_rescale(degenerate, 1000, seed, tolerance.value_or(0.0)),
      check_appendix_derivative(8, 100, seed, tolerance.value_or(1e-4)),
  };
}

std::string checks_to_json(std::span<const PropositionCheck> checks) {
  nlohmann::json out = nlohmann::json::array();
  for (const PropositionCheck& c : checks) {
    nlohmann::json params = nlohmann::json::object();
    for (const auto& [k, v] : c.params) params[k] = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
    nlohmann::json worst = nlohmann::json::object();
    for (const auto& [k, v] : c.worst) worst[k] = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
    worst["values"] = c.worst_values;
    out.push_back({{"name", c.name},
                   {"passed", c.passed},
                   {"instances", c.instances},
                   {"bound", c.bound},
                   {"tolerance", c.tolerance},
                   {"observed_max_violation", c.observed_max_violation},
                   {"params", params},
                   {"detail", c.detail},
                   {"worst_instance", worst}});
  }
  return out.dump(2);
}

}  // namespace quann
