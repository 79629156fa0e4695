#include <cmath>

#include "quann/errors.hpp"
#include "quann/nets.hpp"

namespace quann {

std::size_t count_parameters(const ParameterList& params) {
  std::size_t n = 0;
  for (const NamedTensor& p : params) n += p.tensor.numel();
  return n;
}

void MlpSpec::validate() const {
  if (widths.size() < 2) throw ConfigError("mlp needs at least an input and an output width");
  for (std::size_t w : widths) {
    if (w == 0) throw ConfigError("mlp widths must be positive");
  }
}

std::size_t MlpSpec::parameter_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) n += (widths[l] + 1) * widths[l + 1];
  return n;
}

Mlp::Mlp(MlpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  for (std::size_t l = 0; l + 1 < spec_.widths.size(); ++l) {
    weights_.push_back(Tensor::zeros({spec_.widths[l], spec_.widths[l + 1]}, true));
    biases_.push_back(Tensor::zeros({spec_.widths[l + 1]}, true));
  }
}

Mlp::Mlp(MlpSpec spec, Rng& rng) : Mlp(std::move(spec)) {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec_.widths[l]));
    for (double& v : weights_[l].mutable_data()) v = rng.uniform(-bound, bound);
    for (double& v : biases_[l].mutable_data()) v = rng.uniform(-bound, bound);
  }
}

Mlp Mlp::zeros(MlpSpec spec) { return Mlp(std::move(spec)); }

Mlp Mlp::identity(MlpSpec spec) {
  Mlp m(std::move(spec));
  for (std::size_t l = 0; l < m.weights_.size(); ++l) {
    const std::size_t in = m.spec_.widths[l];
    if (in != m.spec_.widths[l + 1]) throw ConfigError("identity mlp needs equal widths");
    auto w = m.weights_[l].mutable_data();
    for (std::size_t i = 0; i < in; ++i) w[i * in + i] = 1.0;
  }
  return m;
}

Tensor Mlp::forward(Tape& tape, const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != spec_.in_width()) {
    throw ShapeError("mlp expects [rows x " + std::to_string(spec_.in_width()) + "], got " +
                     shape_str(x.shape()));
  }
  // Hidden activations feed only the next layer, so their relu masks are
  // applied by the next layer's input-gradient gemm.
  Tensor h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    const bool last = l + 1 == weights_.size();
    h = ad::linear(tape, h, weights_[l], biases_[l], last ? ad::Activation::identity : ad::Activation::relu,
                   {.mask_input_grad = l > 0, .output_grad_masked = !last});
  }
  return h;
}

void Mlp::append_parameters(ParameterList& out, const std::string& prefix) const {
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    out.push_back({prefix + "/w" + std::to_string(l), weights_[l]});
    out.push_back({prefix + "/b" + std::to_string(l), biases_[l]});
  }
}

}  // namespace quann
