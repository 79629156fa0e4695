#pragma once

// Set pooling. The learnable operator is the neuralized Kolmogorov mean
//
//   M_psi(Z) = psi^-1( (1/n) sum_i psi(z_i) )
//
// with psi invertible. Fixed poolings (sum, mean, max) and the power mean
// live here too, plus closed-form scalar Kolmogorov means and the analytic
// Jacobian of M_psi.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <variant>
#include <vector>

#include "quann/autodiff.hpp"
#include "quann/nets.hpp"
#include "quann/tensor.hpp"

namespace quann {

// Variable-size sets, padded to the largest one. Padding slots are zero and
// masked out; valid elements of a set are always the leading slots.
class SetBatch {
 public:
  SetBatch() = default;
  // data: [batch x n_max x width]. Every cardinality must be in [1, n_max]
  // and the padding must be zero.
  SetBatch(Tensor data, std::vector<std::size_t> cardinalities);

  // Each set is given flat, n_i * width values.
  static SetBatch from_sets(std::size_t width, const std::vector<std::vector<double>>& sets);

  const Tensor& data() const { return data_; }
  std::size_t batch() const { return data_.dim(0); }
  std::size_t n_max() const { return data_.dim(1); }
  std::size_t width() const { return data_.dim(2); }
  std::span<const std::size_t> cardinalities() const { return card_; }
  bool mask(std::size_t set, std::size_t slot) const { return slot < card_.at(set); }
  // Set s occupies rows [offsets[s], offsets[s+1]) of the packed layout.
  std::span<const std::size_t> offsets() const { return offsets_; }
  std::size_t total_elements() const { return offsets_.back(); }

  // Elements of set s as a flat n_s * width copy.
  std::vector<double> set_values(std::size_t s) const;

 private:
  Tensor data_;
  std::vector<std::size_t> card_;
  std::vector<std::size_t> offsets_;
};

// Valid elements stacked as rows, with segment offsets per set.
struct PackedSets {
  Tensor rows;                       // [total x width]
  std::vector<std::size_t> offsets;  // size batch + 1
  std::size_t sets() const { return offsets.size() - 1; }
};

// Differentiable w.r.t. the batch data only through the returned rows.
PackedSets pack(Tape& tape, const SetBatch& batch);

class GeneratingFunction {
 public:
  virtual ~GeneratingFunction() = default;
  virtual std::size_t dim() const = 0;
  // [rows x dim] -> [rows x dim]
  virtual Tensor forward(Tape& tape, const Tensor& x) const = 0;
  virtual Tensor inverse(Tape& tape, const Tensor& y) const = 0;
};

class IdentityGenerator final : public GeneratingFunction {
 public:
  explicit IdentityGenerator(std::size_t dim) : dim_(dim) {}
  std::size_t dim() const override { return dim_; }
  Tensor forward(Tape&, const Tensor& x) const override { return x; }
  Tensor inverse(Tape&, const Tensor& y) const override { return y; }

 private:
  std::size_t dim_;
};

// psi(x) = scale * x + shift, elementwise; scale != 0.
class AffineGenerator final : public GeneratingFunction {
 public:
  AffineGenerator(std::size_t dim, double scale, double shift);
  std::size_t dim() const override { return dim_; }
  Tensor forward(Tape& tape, const Tensor& x) const override;
  Tensor inverse(Tape& tape, const Tensor& y) const override;

 private:
  std::size_t dim_;
  double scale_, shift_;
};

// psi(x) = exp(w x), elementwise; w != 0.
class ExpGenerator final : public GeneratingFunction {
 public:
  ExpGenerator(std::size_t dim, double w);
  std::size_t dim() const override { return dim_; }
  Tensor forward(Tape& tape, const Tensor& x) const override;
  Tensor inverse(Tape& tape, const Tensor& y) const override;

 private:
  std::size_t dim_;
  double w_;
};

class RevNetGenerator final : public GeneratingFunction {
 public:
  explicit RevNetGenerator(RevNet net) : net_(std::move(net)) {}
  std::size_t dim() const override { return net_.spec().dim; }
  Tensor forward(Tape& tape, const Tensor& x) const override { return net_.forward(tape, x); }
  Tensor inverse(Tape& tape, const Tensor& y) const override { return net_.inverse(tape, y); }
  const RevNet& net() const { return net_; }

 private:
  RevNet net_;
};

// psi^-1((1/n) sum psi(z_i)) per set; with normalize = false the 1/n is
// dropped, i.e. psi^-1(sum psi(z_i)). Output [sets x dim].
Tensor nkm_pool(Tape& tape, const GeneratingFunction& psi, const PackedSets& latents, bool normalize = true);
Tensor nkm_pool(Tape& tape, const GeneratingFunction& psi, const SetBatch& latents, bool normalize = true);

enum class FixedPool { sum, mean, max };
Tensor fixed_pool(Tape& tape, FixedPool kind, const PackedSets& latents);
Tensor fixed_pool(Tape& tape, FixedPool kind, const SetBatch& latents);

inline constexpr double kPowerMeanMinExponent = 1e-3;

// ((1/n) sum z_i^w)^(1/w) elementwise. w has one element and is clamped to
// |w| >= 1e-3; latents must be strictly positive.
Tensor power_mean_pool(Tape& tape, const Tensor& w, const PackedSets& latents);
Tensor power_mean_pool(Tape& tape, const Tensor& w, const SetBatch& latents);

// Closed-form scalar generators.
struct AffineFn {
  double w1 = 1.0, w2 = 0.0;  // f(x) = w1 x + w2
};
struct ExpFn {
  double w = 1.0;  // f(x) = exp(w x)
};
struct LogFn {};  // f(x) = log x
struct PowerFn {
  double p = 1.0;  // f(x) = x^p
};
using ScalarGenerator = std::variant<AffineFn, ExpFn, LogFn, PowerFn>;

double closed_form_kolmogorov(const ScalarGenerator& f, std::span<const double> values);
double generator_value(const ScalarGenerator& f, double x);
double generator_derivative(const ScalarGenerator& f, double x);
// dM/dx_j = f'(x_j) / (n f'(M)).
double closed_form_derivative(const ScalarGenerator& f, std::span<const double> values, std::size_t j);

inline constexpr double kJacobianConditionLimit = 1e12;

// J_psi at a single point, [dim x dim], row r = d psi_r / dx.
std::vector<double> generator_jacobian(const GeneratingFunction& psi, std::span<const double> point);

// dM/dz_j = (1/n) J_psi(y)^-1 J_psi(z_j), y = M_psi(Z). `set` is [n x dim].
// Throws SingularJacobianError when J_psi(y) has condition number > 1e12.
Tensor nkm_jacobian(const GeneratingFunction& psi, const Tensor& set, std::size_t j);

}  // namespace quann
