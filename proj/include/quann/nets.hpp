#pragma once

// Trainable building blocks: plain MLPs (encoder phi, estimator rho), the
// additive-coupling RevNet used as an invertible generating function psi,
// and the pairwise encoder for binary (k = 2) models.
//
// Every module owns its parameter tensors. forward() takes rank-2 input
// [rows x width]; callers flatten batch/set axes first.

#include <cstddef>
#include <string>
#include <vector>

#include "quann/autodiff.hpp"
#include "quann/rng.hpp"
#include "quann/tensor.hpp"

namespace quann {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using ParameterList = std::vector<NamedTensor>;

std::size_t count_parameters(const ParameterList& params);

struct MlpSpec {
  // Input width first, output width last; relu between layers, none after the last.
  std::vector<std::size_t> widths;

  void validate() const;
  std::size_t in_width() const { return widths.front(); }
  std::size_t out_width() const { return widths.back(); }
  std::size_t parameter_count() const;
};

class Mlp {
 public:
  Mlp() = default;
  // Weights and biases uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  Mlp(MlpSpec spec, Rng& rng);

  static Mlp zeros(MlpSpec spec);
  // Every layer the identity matrix with zero bias; needs all widths equal.
  static Mlp identity(MlpSpec spec);

  Tensor forward(Tape& tape, const Tensor& x) const;

  const MlpSpec& spec() const { return spec_; }
  std::size_t layers() const { return weights_.size(); }
  // weight(l) has shape {in, out}.
  const Tensor& weight(std::size_t l) const { return weights_.at(l); }
  const Tensor& bias(std::size_t l) const { return biases_.at(l); }

  void append_parameters(ParameterList& out, const std::string& prefix) const;

 private:
  explicit Mlp(MlpSpec spec);

  MlpSpec spec_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

struct RevNetSpec {
  std::size_t dim = 0;         // even; split into halves x1, x2
  std::size_t num_blocks = 1;
  std::vector<std::size_t> subnet_hidden;

  void validate() const;
  MlpSpec subnet_spec() const;
  std::size_t parameter_count() const;
};

// Stack of additive coupling blocks:
//   x1' = x1 + f(x2),  x2' = x2 + g(x1')
// inverted exactly by  x2 = x2' - g(x1'),  x1 = x1' - f(x2).
class RevNet {
 public:
  RevNet() = default;
  RevNet(RevNetSpec spec, Rng& rng);
  // All subnets zero: the identity map.
  static RevNet zeros(RevNetSpec spec);

  Tensor forward(Tape& tape, const Tensor& x) const;
  Tensor inverse(Tape& tape, const Tensor& y) const;

  const RevNetSpec& spec() const { return spec_; }
  const Mlp& f(std::size_t block) const { return f_.at(block); }
  const Mlp& g(std::size_t block) const { return g_.at(block); }

  void append_parameters(ParameterList& out, const std::string& prefix) const;

 private:
  void check_width(const Tensor& x, const char* what) const;

  RevNetSpec spec_;
  std::vector<Mlp> f_;
  std::vector<Mlp> g_;
};

// phi(x_i, x_j) for an ordered pair. With width w:
//   s   = (x_i Q) . (x_j K) / sqrt(w)
//   out = mlp(concat(x_i, s * (x_j V)))
// Q, K, V are w x w; mlp maps 2w to the latent width.
class PairwiseEncoder {
 public:
  PairwiseEncoder() = default;
  PairwiseEncoder(std::size_t width, MlpSpec mlp, Rng& rng);
  static PairwiseEncoder zeros(std::size_t width, MlpSpec mlp);

  // xi, xj: [pairs x w] -> [pairs x latent]
  Tensor encode(Tape& tape, const Tensor& xi, const Tensor& xj) const;

  std::size_t width() const { return width_; }
  std::size_t out_width() const { return mlp_.spec().out_width(); }
  const Mlp& mlp() const { return mlp_; }

  void append_parameters(ParameterList& out, const std::string& prefix) const;

  static std::size_t parameter_count(std::size_t width, const MlpSpec& mlp);

 private:
  std::size_t width_ = 0;
  Tensor q_, k_, v_;
  Mlp mlp_;
};

}  // namespace quann
