#include <cmath>

#include "quann/errors.hpp"
#include "quann/harness.hpp"
#include "quann/kernels.hpp"

namespace quann {

Adam::Adam(ParameterList params, AdamConfig config) : params_(std::move(params)), cfg_(config) {
  if (!(cfg_.lr > 0.0)) throw ConfigError("learning rate must be positive");
  for (const NamedTensor& p : params_) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double t = static_cast<double>(t_);
  const kernels::AdamStep s{cfg_.lr, cfg_.beta1, cfg_.beta2, cfg_.eps, 1.0 - std::pow(cfg_.beta1, t),
                            1.0 - std::pow(cfg_.beta2, t)};
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].tensor;
    if (!p.has_grad()) continue;
    kernels::adam_update(p.numel(), p.mutable_data().data(), p.grad().data(), m_[i].data(), v_[i].data(), s);
    p.clear_grad();
  }
}

}  // namespace quann
