#include <cmath>

#include "quann/errors.hpp"
#include "quann/nets.hpp"

namespace quann {
namespace {

void check_mlp(std::size_t width, const MlpSpec& mlp) {
  if (width == 0) throw ConfigError("pairwise encoder width must be positive");
  mlp.validate();
  if (mlp.in_width() != 2 * width) {
    throw ConfigError("pairwise encoder mlp input must be 2 x element width (" +
                      std::to_string(2 * width) + "), got " + std::to_string(mlp.in_width()));
  }
}

}  // namespace

PairwiseEncoder::PairwiseEncoder(std::size_t width, MlpSpec mlp, Rng& rng) : width_(width) {
  check_mlp(width, mlp);
  const double bound = 1.0 / std::sqrt(static_cast<double>(width));
  for (Tensor* t : {&q_, &k_, &v_}) {
    *t = Tensor::zeros({width, width}, true);
    for (double& v : t->mutable_data()) v = rng.uniform(-bound, bound);
  }
  mlp_ = Mlp(std::move(mlp), rng);
}

PairwiseEncoder PairwiseEncoder::zeros(std::size_t width, MlpSpec mlp) {
  check_mlp(width, mlp);
  PairwiseEncoder e;
  e.width_ = width;
  e.q_ = Tensor::zeros({width, width}, true);
  e.k_ = Tensor::zeros({width, width}, true);
  e.v_ = Tensor::zeros({width, width}, true);
  e.mlp_ = Mlp::zeros(std::move(mlp));
  return e;
}

Tensor PairwiseEncoder::encode(Tape& tape, const Tensor& xi, const Tensor& xj) const {
  if (xi.rank() != 2 || xj.rank() != 2 || xi.dim(1) != width_ || xj.dim(1) != width_ ||
      xi.dim(0) != xj.dim(0)) {
    throw ShapeError("pairwise encoder expects two [pairs x " + std::to_string(width_) + "] inputs, got " +
                     shape_str(xi.shape()) + " and " + shape_str(xj.shape()));
  }
  Tensor qi = ad::matmul(tape, xi, q_);
  Tensor kj = ad::matmul(tape, xj, k_);
  Tensor score = ad::scale(tape, ad::sum_reduce(tape, ad::mul(tape, qi, kj), 1),
                           1.0 / std::sqrt(static_cast<double>(width_)));
  Tensor gated = ad::mul_rows(tape, ad::matmul(tape, xj, v_), score);
  return mlp_.forward(tape, ad::concat(tape, {xi, gated}, 1));
}

void PairwiseEncoder::append_parameters(ParameterList& out, const std::string& prefix) const {
  out.push_back({prefix + "/q", q_});
  out.push_back({prefix + "/k", k_});
  out.push_back({prefix + "/v", v_});
  mlp_.append_parameters(out, prefix + "/mlp");
}

std::size_t PairwiseEncoder::parameter_count(std::size_t width, const MlpSpec& mlp) {
  return 3 * width * width + mlp.parameter_count();
}

}  // namespace quann
