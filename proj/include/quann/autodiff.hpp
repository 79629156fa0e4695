#pragma once

// Define-by-run reverse-mode differentiation. A Tape records one node per
// operation whose inputs require gradients; backward() replays the nodes in
// reverse and accumulates into every input's gradient slot.
//
//   Tape tape;
//   Tensor h = ad::linear(tape, x, w, b, ad::Activation::relu);
//   Tensor loss = ad::mean_all(tape, h);
//   tape.backward(loss);        // w.grad(), b.grad() now hold dloss/dparam
//
// Tensors that do not require grad are never recorded, and a Tape in
// inference mode records nothing.

#include <cstddef>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "quann/tensor.hpp"

namespace quann {

enum class OpKind {
  matmul,
  linear,
  add,
  sub,
  mul,
  div,
  relu,
  exp,
  log,
  pow,
  softplus,
  scale,
  add_scalar,
  sum_reduce,
  mean_reduce,
  max_reduce,
  concat,
  slice,
  broadcast,
  reshape,
  gather_rows,
  segment_sum,
  segment_mean,
  segment_max,
  repeat_segments,
  mul_rows,
  clamp_magnitude,
};

std::string_view op_name(OpKind kind);

class Tape {
 public:
  enum class Mode { record, inference };

  struct Node {
    OpKind kind;
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> backward;
  };

  explicit Tape(Mode mode = Mode::record) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return mode_ == Mode::record; }

  // Whether an op over these inputs must be recorded (and its output
  // therefore requires grad).
  bool tracks(std::span<const Tensor> inputs) const;
  bool tracks(std::initializer_list<Tensor> inputs) const;

  void record(OpKind kind, std::vector<Tensor> inputs, Tensor output,
              std::function<void()> backward);

  // Seeds d(output)/d(output) = 1 for a single-element output.
  void backward(const Tensor& output);
  // Seeds the output gradient with an explicit vector (vector-Jacobian product).
  void backward(const Tensor& output, std::span<const double> seed);

  // Drops all nodes so the tape can be reused.
  void reset();

  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }
  std::span<const Node> nodes() const { return nodes_; }

 private:
  Mode mode_;
  bool consumed_ = false;
  std::vector<Node> nodes_;
};

namespace ad {

enum class Activation { identity, relu };

// 2-D matrix product.
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
// x[m x k] * w[k x n] + b[n], optionally followed by relu, fused in one node.
Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b,
              Activation act = Activation::identity);

// For a chain of linear layers where each hidden activation has exactly one
// consumer. mask_input_grad: x came from a relu linear, so the gradient
// written into x is multiplied by (x > 0) in the gemm that produces it.
// output_grad_masked: this node's relu was already applied to its output
// gradient that way. After backward such hidden tensors hold the
// pre-activation gradient.
struct LinearChain {
  bool mask_input_grad = false;
  bool output_grad_masked = false;
};
Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b, Activation act,
              LinearChain chain);

// Elementwise; b may also have a shape equal to the trailing dims of a, in
// which case it is expanded along a's leading dims (a scalar {} always fits).
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor div(Tape& tape, const Tensor& a, const Tensor& b);
// x^e for x > 0; e broadcasts like the elementwise ops above.
Tensor pow(Tape& tape, const Tensor& x, const Tensor& e);

Tensor relu(Tape& tape, const Tensor& x);
Tensor exp(Tape& tape, const Tensor& x);
Tensor log(Tape& tape, const Tensor& x);
Tensor softplus(Tape& tape, const Tensor& x);
Tensor scale(Tape& tape, const Tensor& x, double factor);
Tensor add_scalar(Tape& tape, const Tensor& x, double offset);
// Keeps |x| >= floor (sign preserved, +floor at 0); gradient is zero where clamped.
Tensor clamp_magnitude(Tape& tape, const Tensor& x, double floor);

// Reductions remove the reduced axis. max routes gradient to the first
// maximal index on ties.
Tensor sum_reduce(Tape& tape, const Tensor& x, std::size_t axis);
Tensor mean_reduce(Tape& tape, const Tensor& x, std::size_t axis);
Tensor max_reduce(Tape& tape, const Tensor& x, std::size_t axis);
Tensor sum_all(Tape& tape, const Tensor& x);
Tensor mean_all(Tape& tape, const Tensor& x);

Tensor concat(Tape& tape, std::span<const Tensor> parts, std::size_t axis);
Tensor concat(Tape& tape, std::initializer_list<Tensor> parts, std::size_t axis);
Tensor slice(Tape& tape, const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
// Prepends `leading` dims, repeating x.
Tensor broadcast(Tape& tape, const Tensor& x, const Shape& leading);
Tensor reshape(Tape& tape, const Tensor& x, Shape shape);

// Row-indexed ops over 2-D tensors. `offsets` has one entry per segment plus
// a final end marker; segment s covers rows [offsets[s], offsets[s+1]).
Tensor gather_rows(Tape& tape, const Tensor& x, std::span<const std::size_t> rows);
Tensor segment_sum(Tape& tape, const Tensor& x, std::span<const std::size_t> offsets);
Tensor segment_mean(Tape& tape, const Tensor& x, std::span<const std::size_t> offsets);
Tensor segment_max(Tape& tape, const Tensor& x, std::span<const std::size_t> offsets);
// Inverse layout of segment_sum: row s of x is copied to every row of segment s.
Tensor repeat_segments(Tape& tape, const Tensor& x, std::span<const std::size_t> offsets);
// x[r x d] scaled per row by s[r].
Tensor mul_rows(Tape& tape, const Tensor& x, const Tensor& s);

}  // namespace ad
}  // namespace quann
