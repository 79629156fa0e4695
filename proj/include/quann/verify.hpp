#pragma once

// Numerical checks of the closed-form properties of Kolmogorov means and of
// the NKM derivative. Each check is deterministic in its seed and records
// the instance that came closest to (or furthest past) its bound.
//
// violation = error - (bound + tolerance); a check passes when the largest
// violation is <= 0 and any extra conditions listed in `detail` hold.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace quann {

struct PropositionCheck {
  std::string name;
  std::size_t instances = 0;
  std::map<std::string, double> params;
  std::string bound;  // human-readable bound expression
  double tolerance = 0.0;
  double observed_max_violation = 0.0;
  bool passed = false;
  std::string detail;
  // Worst instance: scalar settings plus its input values.
  std::map<std::string, double> worst;
  std::vector<double> worst_values;
};

// Affine generators w1 in [0.1, 10], w2 in [-5, 5], sets of up to 64 values
// in [-10, 10]: |M_f - mean| <= tolerance.
PropositionCheck check_linear_collapse(std::size_t instances, std::uint64_t seed, double tolerance = 1e-10);

// Exponential generator exp(w x): 0 <= max(x) - M <= log(n) / w. Also
// checks that the bound is tight for one dominant element among very
// small ones (gap >= 0.99 log(n) / w).
PropositionCheck check_max_bound(std::span<const double> w_values, std::span<const std::size_t> n_values,
                                 std::size_t instances, std::uint64_t seed, double tolerance = 1e-9);

// Values uniform in (b0, b1): the mean error |sum x - M_f(x)| of every
// closed-form generator family grows with slope >= 0.9 b0 in n.
PropositionCheck check_sum_growth(std::span<const std::size_t> n_values, std::size_t instances, std::uint64_t seed,
                                  double b0 = 0.5, double b1 = 1.0);

// n drawn uniformly from n_distribution, identity generator with phi scaled
// by n_bar: error |sum x - (n_bar / n) sum x|. A degenerate distribution
// must give exactly 0; otherwise the rescaled error must beat scale 1.
PropositionCheck check_expected_sum_rescale(std::span<const std::size_t> n_distribution, std::size_t instances,
                                            std::uint64_t seed, double tolerance = 0.0);

// Random RevNet generators of width dim: analytic NKM Jacobian vs central
// finite differences (relative error <= tolerance), |det| > 1e-12, and a
// positive derivative for scalar monotone increasing generators.
PropositionCheck check_appendix_derivative(std::size_t dim, std::size_t instances, std::uint64_t seed,
                                           double tolerance = 1e-4);

// The five checks with their default sizes. A tolerance override replaces
// every check's tolerance (0 turns floating-point noise into failures).
std::vector<PropositionCheck> run_all_checks(std::uint64_t seed, std::optional<double> tolerance = std::nullopt);

std::string checks_to_json(std::span<const PropositionCheck> checks);

}  // namespace quann
