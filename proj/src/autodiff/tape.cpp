#include <algorithm>

#include "quann/autodiff.hpp"
#include "quann/errors.hpp"

namespace quann {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::matmul: return "matmul";
    case OpKind::linear: return "linear";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::div: return "div";
    case OpKind::relu: return "relu";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::pow: return "pow";
    case OpKind::softplus: return "softplus";
    case OpKind::scale: return "scale";
    case OpKind::add_scalar: return "add_scalar";
    case OpKind::sum_reduce: return "sum_reduce";
    case OpKind::mean_reduce: return "mean_reduce";
    case OpKind::max_reduce: return "max_reduce";
    case OpKind::concat: return "concat";
    case OpKind::slice: return "slice";
    case OpKind::broadcast: return "broadcast";
    case OpKind::reshape: return "reshape";
    case OpKind::gather_rows: return "gather_rows";
    case OpKind::segment_sum: return "segment_sum";
    case OpKind::segment_mean: return "segment_mean";
    case OpKind::segment_max: return "segment_max";
    case OpKind::repeat_segments: return "repeat_segments";
    case OpKind::mul_rows: return "mul_rows";
    case OpKind::clamp_magnitude: return "clamp_magnitude";
  }
  return "unknown";
}

bool Tape::tracks(std::span<const Tensor> inputs) const {
  if (!recording()) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
}

bool Tape::tracks(std::initializer_list<Tensor> inputs) const {
  return tracks(std::span<const Tensor>(inputs.begin(), inputs.size()));
}

void Tape::record(OpKind kind, std::vector<Tensor> inputs, Tensor output,
                  std::function<void()> backward) {
  if (consumed_) throw TapeError("tape already consumed by backward(); call reset() first");
  nodes_.push_back(Node{kind, std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::backward(const Tensor& output) {
  if (output.numel() != 1) {
    throw ShapeError("backward() without a seed needs a scalar output, got " + shape_str(output.shape()));
  }
  const double one = 1.0;
  backward(output, std::span<const double>(&one, 1));
}

void Tape::backward(const Tensor& output, std::span<const double> seed) {
  if (consumed_) throw TapeError("backward() called twice on one tape without reset()");
  if (!output.requires_grad()) {
    throw TapeError("backward() output was not produced through a recording tape");
  }
  if (seed.size() != output.numel()) throw ShapeError("backward() seed length mismatch");
  // Intermediate results may carry stale gradients from an earlier tape.
  for (Node& n : nodes_) n.output.clear_grad();
  Tensor out = output;
  std::span<double> g = out.grad_buffer();
  std::copy(seed.begin(), seed.end(), g.begin());
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output.has_grad()) it->backward();
  }
  consumed_ = true;
}

void Tape::reset() {
  nodes_.clear();
  consumed_ = false;
}

}  // namespace quann
