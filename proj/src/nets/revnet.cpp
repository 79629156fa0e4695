#include "quann/errors.hpp"
#include "quann/nets.hpp"

namespace quann {

void RevNetSpec::validate() const {
  if (dim == 0 || dim % 2 != 0) {
    throw ConfigError("revnet dim must be even and positive, got " + std::to_string(dim));
  }
  if (num_blocks == 0) throw ConfigError("revnet needs at least one block");
  for (std::size_t h : subnet_hidden) {
    if (h == 0) throw ConfigError("revnet subnet widths must be positive");
  }
}

MlpSpec RevNetSpec::subnet_spec() const {
  MlpSpec s;
  s.widths.push_back(dim / 2);
  s.widths.insert(s.widths.end(), subnet_hidden.begin(), subnet_hidden.end());
  s.widths.push_back(dim / 2);
  return s;
}

std::size_t RevNetSpec::parameter_count() const { return 2 * num_blocks * subnet_spec().parameter_count(); }

RevNet::RevNet(RevNetSpec spec, Rng& rng) : spec_(std::move(spec)) {
  spec_.validate();
  for (std::size_t b = 0; b < spec_.num_blocks; ++b) {
    f_.emplace_back(spec_.subnet_spec(), rng);
    g_.emplace_back(spec_.subnet_spec(), rng);
  }
}

RevNet RevNet::zeros(RevNetSpec spec) {
  spec.validate();
  RevNet r;
  r.spec_ = std::move(spec);
  for (std::size_t b = 0; b < r.spec_.num_blocks; ++b) {
    r.f_.push_back(Mlp::zeros(r.spec_.subnet_spec()));
    r.g_.push_back(Mlp::zeros(r.spec_.subnet_spec()));
  }
  return r;
}

void RevNet::check_width(const Tensor& x, const char* what) const {
  if (x.rank() != 2 || x.dim(1) % 2 != 0) {
    throw ShapeError(std::string("revnet ") + what + ": input width must be even, got " + shape_str(x.shape()));
  }
  if (x.dim(1) != spec_.dim) {
    throw ShapeError(std::string("revnet ") + what + ": expected width " + std::to_string(spec_.dim) +
                     ", got " + shape_str(x.shape()));
  }
}

Tensor RevNet::forward(Tape& tape, const Tensor& x) const {
  check_width(x, "forward");
  const std::size_t h = spec_.dim / 2;
  Tensor x1 = ad::slice(tape, x, 1, 0, h);
  Tensor x2 = ad::slice(tape, x, 1, h, spec_.dim);
  for (std::size_t b = 0; b < spec_.num_blocks; ++b) {
    x1 = ad::add(tape, x1, f_[b].forward(tape, x2));
    x2 = ad::add(tape, x2, g_[b].forward(tape, x1));
  }
  return ad::concat(tape, {x1, x2}, 1);
}

Tensor RevNet::inverse(Tape& tape, const Tensor& y) const {
  check_width(y, "inverse");
  const std::size_t h = spec_.dim / 2;
  Tensor x1 = ad::slice(tape, y, 1, 0, h);
  Tensor x2 = ad::slice(tape, y, 1, h, spec_.dim);
  for (std::size_t b = spec_.num_blocks; b-- > 0;) {
    x2 = ad::sub(tape, x2, g_[b].forward(tape, x1));
    x1 = ad::sub(tape, x1, f_[b].forward(tape, x2));
  }
  return ad::concat(tape, {x1, x2}, 1);
}

void RevNet::append_parameters(ParameterList& out, const std::string& prefix) const {
  for (std::size_t b = 0; b < f_.size(); ++b) {
    f_[b].append_parameters(out, prefix + "/block" + std::to_string(b) + "/f");
    g_[b].append_parameters(out, prefix + "/block" + std::to_string(b) + "/g");
  }
}

}  // namespace quann
