#include <algorithm>
#include <cmath>
#include <string>

#include "quann/autodiff.hpp"
#include "quann/errors.hpp"
#include "quann/kernels.hpp"

namespace quann::ad {
namespace {

std::string op_str(OpKind kind) { return std::string(op_name(kind)); }

Tensor emit(Tape& tape, OpKind kind, std::vector<Tensor> inputs, Tensor out,
            std::function<void()> backward) {
  if (!kernels::all_finite(out.numel(), out.data().data())) {
    throw NonFiniteError(op_str(kind) + " produced a non-finite value");
  }
  if (tape.tracks(inputs)) {
    out.set_requires_grad(true);
    tape.record(kind, std::move(inputs), out, std::move(backward));
  }
  return out;
}

void require_rank(OpKind kind, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw ShapeError(op_str(kind) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_str(t.shape()));
  }
}

// b broadcasts over a when a.shape == b.shape or b.shape is a suffix of a.shape.
struct Expansion {
  std::size_t outer;
  std::size_t inner;
};

Expansion expansion(OpKind kind, const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sb.size() <= sa.size() && std::equal(sb.rbegin(), sb.rend(), sa.rbegin())) {
    return {a.numel() / std::max<std::size_t>(b.numel(), 1), b.numel()};
  }
  throw ShapeError(op_str(kind) + ": cannot combine " + shape_str(sa) + " with " + shape_str(sb));
}

// Shared driver for binary elementwise ops. Fwd(a, b) -> value;
// Bwd(a, b, out, g, &ga, &gb) writes the two partial contributions.
template <class Fwd, class Bwd>
Tensor binary(Tape& tape, OpKind kind, const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd) {
  const Expansion e = expansion(kind, a, b);
  Buffer out(a.numel());
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t o = 0; o < e.outer; ++o) {
    for (std::size_t i = 0; i < e.inner; ++i) out[o * e.inner + i] = fwd(ad[o * e.inner + i], bd[i]);
  }
  Tensor result = Tensor::from_buffer(a.shape(), std::move(out));
  return emit(tape, kind, {a, b}, result, [a, b, result, e, bwd]() mutable {
    const auto g = result.grad();
    const auto ad = a.data();
    const auto bd = b.data();
    const auto od = result.data();
    std::span<double> ga = a.requires_grad() ? a.grad_buffer() : std::span<double>();
    std::span<double> gb = b.requires_grad() ? b.grad_buffer() : std::span<double>();
    for (std::size_t o = 0; o < e.outer; ++o) {
      for (std::size_t i = 0; i < e.inner; ++i) {
        const std::size_t k = o * e.inner + i;
        double da = 0.0, db = 0.0;
        bwd(ad[k], bd[i], od[k], g[k], da, db);
        if (!ga.empty()) ga[k] += da;
        if (!gb.empty()) gb[i] += db;
      }
    }
  });
}

// Unary elementwise. Bwd(x, y, g) -> dx.
template <class Fwd, class Bwd>
Tensor unary(Tape& tape, OpKind kind, const Tensor& x, Fwd fwd, Bwd bwd) {
  Buffer out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xd[i]);
  Tensor result = Tensor::from_buffer(x.shape(), std::move(out));
  return emit(tape, kind, {x}, result, [x, result, bwd]() mutable {
    const auto g = result.grad();
    const auto xd = x.data();
    const auto yd = result.data();
    auto gx = x.grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += bwd(xd[i], yd[i], g[i]);
  });
}

Buffer transpose(std::span<const double> m, std::size_t rows, std::size_t cols) {
  Buffer t(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) t[j * rows + i] = m[i * cols + j];
  }
  return t;
}

struct AxisSplit {
  std::size_t outer;
  std::size_t len;
  std::size_t inner;
};

AxisSplit split_axis(OpKind kind, const Shape& s, std::size_t axis) {
  if (axis >= s.size()) {
    throw ShapeError(op_str(kind) + ": axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  AxisSplit r{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

Shape without_axis(const Shape& s, std::size_t axis) {
  Shape out = s;
  out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  return out;
}

std::vector<std::size_t> checked_offsets(OpKind kind, std::span<const std::size_t> offsets,
                                         std::size_t rows) {
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != rows) {
    throw ShapeError(op_str(kind) + ": offsets must start at 0 and end at the row count " +
                     std::to_string(rows));
  }
  for (std::size_t s = 1; s < offsets.size(); ++s) {
    if (offsets[s] < offsets[s - 1]) throw ShapeError(op_str(kind) + ": offsets must be non-decreasing");
  }
  return {offsets.begin(), offsets.end()};
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank(OpKind::matmul, a, 2);
  require_rank(OpKind::matmul, b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dims differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor out = Tensor::empty({m, n});
  kernels::gemm(m, n, k, a.data().data(), k, 1, b.data().data(), n, out.mutable_data().data(), n);
  return emit(tape, OpKind::matmul, {a, b}, out, [a, b, out, m, k, n]() mutable {
    const double* g = out.grad().data();
    if (a.requires_grad()) {
      const Buffer bt = transpose(b.data(), k, n);
      const bool fresh = !a.has_grad();
      double* ga = (fresh ? a.fresh_grad_buffer() : a.grad_buffer()).data();
      kernels::gemm(m, k, n, g, n, 1, bt.data(), k, ga, k, {.accumulate = !fresh});
    }
    if (b.requires_grad()) {
      kernels::gemm_tn_acc(m, k, n, a.data().data(), k, g, n, b.grad_buffer().data(), n);
    }
  });
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b, Activation act) {
  return linear(tape, x, w, b, act, LinearChain{});
}

Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b, Activation act,
              LinearChain chain) {
  require_rank(OpKind::linear, x, 2);
  require_rank(OpKind::linear, w, 2);
  require_rank(OpKind::linear, b, 1);
  const std::size_t m = x.dim(0), k = x.dim(1), n = w.dim(1);
  if (w.dim(0) != k || b.dim(0) != n) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(w.shape()) + " and bias " + shape_str(b.shape()));
  }
  const bool relu = act == Activation::relu;
  Tensor out = Tensor::empty({m, n});
  kernels::gemm(m, n, k, x.data().data(), k, 1, w.data().data(), n, out.mutable_data().data(), n,
                {.bias = b.data().data(), .relu = relu});
  return emit(tape, OpKind::linear, {x, w, b}, out, [x, w, b, out, m, k, n, relu, chain]() mutable {
    const double* g = out.grad().data();
    double* gb = b.requires_grad() ? b.grad_buffer().data() : nullptr;
    Buffer masked;
    if (relu && !chain.output_grad_masked) {
      masked.resize(m * n);
      kernels::relu_backward(m, n, g, out.data().data(), masked.data(), gb);
      g = masked.data();
    } else if (gb) {
      kernels::colsum_acc(m, n, g, gb);
    }
    if (w.requires_grad()) {
      kernels::gemm_tn_acc(m, k, n, x.data().data(), k, g, n, w.grad_buffer().data(), n);
    }
    if (x.requires_grad()) {
      const Buffer wt = transpose(w.data(), k, n);
      const bool fresh = !x.has_grad();
      double* gx = (fresh ? x.fresh_grad_buffer() : x.grad_buffer()).data();
      if (chain.mask_input_grad && fresh) {
        kernels::gemm(m, k, n, g, n, 1, wt.data(), k, gx, k, {.gate = x.data().data()});
      } else {
        kernels::gemm(m, k, n, g, n, 1, wt.data(), k, gx, k, {.accumulate = !fresh});
        if (chain.mask_input_grad) {
          const auto xd = x.data();
          for (std::size_t i = 0; i < m * k; ++i) gx[i] = xd[i] > 0.0 ? gx[i] : 0.0;
        }
      }
    }
  });
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary(
      tape, OpKind::add, a, b, [](double x, double y) { return x + y; },
      [](double, double, double, double g, double& da, double& db) {
        da = g;
        db = g;
      });
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary(
      tape, OpKind::sub, a, b, [](double x, double y) { return x - y; },
      [](double, double, double, double g, double& da, double& db) {
        da = g;
        db = -g;
      });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary(
      tape, OpKind::mul, a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double, double g, double& da, double& db) {
        da = g * y;
        db = g * x;
      });
}

Tensor div(Tape& tape, const Tensor& a, const Tensor& b) {
  for (double v : b.data()) {
    if (v == 0.0) throw DomainError("div: division by zero");
  }
  return binary(
      tape, OpKind::div, a, b, [](double x, double y) { return x / y; },
      [](double x, double y, double, double g, double& da, double& db) {
        da = g / y;
        db = -g * x / (y * y);
      });
}

Tensor pow(Tape& tape, const Tensor& x, const Tensor& e) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw DomainError("pow: base must be positive, got " + std::to_string(v));
  }
  return binary(
      tape, OpKind::pow, x, e, [](double b, double p) { return std::pow(b, p); },
      [](double b, double p, double y, double g, double& db, double& dp) {
        db = g * p * std::pow(b, p - 1.0);
        dp = g * y * std::log(b);
      });
}

Tensor relu(Tape& tape, const Tensor& x) {
  return unary(
      tape, OpKind::relu, x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double, double g) { return v > 0.0 ? g : 0.0; });
}

Tensor exp(Tape& tape, const Tensor& x) {
  return unary(
      tape, OpKind::exp, x, [](double v) { return std::exp(v); },
      [](double, double y, double g) { return g * y; });
}

Tensor log(Tape& tape, const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw DomainError("log: argument must be positive, got " + std::to_string(v));
  }
  return unary(
      tape, OpKind::log, x, [](double v) { return std::log(v); },
      [](double v, double, double g) { return g / v; });
}

Tensor softplus(Tape& tape, const Tensor& x) {
  return unary(
      tape, OpKind::softplus, x,
      [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
      [](double v, double, double g) {
        // sigmoid(v), evaluated without overflow
        const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        return g * s;
      });
}

Tensor scale(Tape& tape, const Tensor& x, double factor) {
  return unary(
      tape, OpKind::scale, x, [factor](double v) { return v * factor; },
      [factor](double, double, double g) { return g * factor; });
}

Tensor add_scalar(Tape& tape, const Tensor& x, double offset) {
  return unary(
      tape, OpKind::add_scalar, x, [offset](double v) { return v + offset; },
      [](double, double, double g) { return g; });
}

Tensor clamp_magnitude(Tape& tape, const Tensor& x, double floor) {
  return unary(
      tape, OpKind::clamp_magnitude, x,
      [floor](double v) {
        if (std::abs(v) >= floor) return v;
        return v < 0.0 ? -floor : floor;
      },
      [floor](double v, double, double g) { return std::abs(v) >= floor ? g : 0.0; });
}

Tensor sum_reduce(Tape& tape, const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis(OpKind::sum_reduce, x.shape(), axis);
  Buffer out(s.outer * s.inner, 0.0);
  const auto xd = x.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t l = 0; l < s.len; ++l)
      for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += xd[(o * s.len + l) * s.inner + i];
  Tensor result = Tensor::from_buffer(without_axis(x.shape(), axis), std::move(out));
  return emit(tape, OpKind::sum_reduce, {x}, result, [x, result, s]() mutable {
    const auto g = result.grad();
    auto gx = x.grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t l = 0; l < s.len; ++l)
        for (std::size_t i = 0; i < s.inner; ++i) gx[(o * s.len + l) * s.inner + i] += g[o * s.inner + i];
  });
}

Tensor mean_reduce(Tape& tape, const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis(OpKind::mean_reduce, x.shape(), axis);
  Buffer out(s.outer * s.inner, 0.0);
  const auto xd = x.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t l = 0; l < s.len; ++l)
      for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += xd[(o * s.len + l) * s.inner + i];
  const double inv = 1.0 / static_cast<double>(s.len);
  for (double& v : out) v *= inv;
  Tensor result = Tensor::from_buffer(without_axis(x.shape(), axis), std::move(out));
  return emit(tape, OpKind::mean_reduce, {x}, result, [x, result, s, inv]() mutable {
    const auto g = result.grad();
    auto gx = x.grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t l = 0; l < s.len; ++l)
        for (std::size_t i = 0; i < s.inner; ++i) gx[(o * s.len + l) * s.inner + i] += g[o * s.inner + i] * inv;
  });
}

Tensor max_reduce(Tape& tape, const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis(OpKind::max_reduce, x.shape(), axis);
  Buffer out(s.outer * s.inner);
  std::vector<std::size_t> arg(s.outer * s.inner, 0);
  const auto xd = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      std::size_t best = 0;
      double bv = xd[o * s.len * s.inner + i];
      for (std::size_t l = 1; l < s.len; ++l) {
        const double v = xd[(o * s.len + l) * s.inner + i];
        if (v > bv) {
          bv = v;
          best = l;
        }
      }
      out[o * s.inner + i] = bv;
      arg[o * s.inner + i] = best;
    }
  }
  Tensor result = Tensor::from_buffer(without_axis(x.shape(), axis), std::move(out));
  return emit(tape, OpKind::max_reduce, {x}, result, [x, result, s, arg]() mutable {
    const auto g = result.grad();
    auto gx = x.grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < s.inner; ++i)
        gx[(o * s.len + arg[o * s.inner + i]) * s.inner + i] += g[o * s.inner + i];
  });
}

Tensor sum_all(Tape& tape, const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor result = Tensor::scalar(total);
  return emit(tape, OpKind::sum_reduce, {x}, result, [x, result]() mutable {
    const double g = result.grad()[0];
    for (double& v : x.grad_buffer()) v += g;
  });
}

Tensor mean_all(Tape& tape, const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  const double inv = 1.0 / static_cast<double>(x.numel());
  Tensor result = Tensor::scalar(total * inv);
  return emit(tape, OpKind::mean_reduce, {x}, result, [x, result, inv]() mutable {
    const double g = result.grad()[0] * inv;
    for (double& v : x.grad_buffer()) v += g;
  });
}

Tensor concat(Tape& tape, std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  Shape out_shape = first;
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + shape_str(first));
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) throw ShapeError("concat: " + shape_str(s) + " incompatible with " + shape_str(first));
    out_shape[axis] += s[axis];
  }
  const AxisSplit total = split_axis(OpKind::concat, out_shape, axis);
  Buffer out(shape_numel(out_shape));
  std::size_t col = 0;
  std::vector<std::size_t> starts;
  for (const Tensor& p : parts) {
    const std::size_t chunk = p.dim(axis) * total.inner;
    const auto pd = p.data();
    for (std::size_t o = 0; o < total.outer; ++o) {
      std::copy_n(pd.begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                  out.begin() + static_cast<std::ptrdiff_t>(o * total.len * total.inner + col));
    }
    starts.push_back(col);
    col += chunk;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  Tensor result = Tensor::from_buffer(out_shape, std::move(out));
  return emit(tape, OpKind::concat, inputs, result, [inputs, result, total, starts, axis]() mutable {
    const auto g = result.grad();
    for (std::size_t idx = 0; idx < inputs.size(); ++idx) {
      Tensor& p = inputs[idx];
      if (!p.requires_grad()) continue;
      const std::size_t chunk = p.dim(axis) * total.inner;
      auto gp = p.grad_buffer();
      for (std::size_t o = 0; o < total.outer; ++o) {
        const std::size_t base = o * total.len * total.inner + starts[idx];
        for (std::size_t c = 0; c < chunk; ++c) gp[o * chunk + c] += g[base + c];
      }
    }
  });
}

Tensor concat(Tape& tape, std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(tape, std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice(Tape& tape, const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const AxisSplit s = split_axis(OpKind::slice, x.shape(), axis);
  if (begin >= end || end > s.len) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") invalid for axis of length " + std::to_string(s.len));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = end - begin;
  const std::size_t chunk = (end - begin) * s.inner;
  Buffer out(s.outer * chunk);
  const auto xd = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(xd.begin() + static_cast<std::ptrdiff_t>((o * s.len + begin) * s.inner), chunk,
                out.begin() + static_cast<std::ptrdiff_t>(o * chunk));
  }
  Tensor result = Tensor::from_buffer(out_shape, std::move(out));
  return emit(tape, OpKind::slice, {x}, result, [x, result, s, begin, chunk]() mutable {
    const auto g = result.grad();
    auto gx = x.grad_buffer();
    for (std::size_t o = 0; o < s.outer; ++o) {
      const std::size_t base = (o * s.len + begin) * s.inner;
      for (std::size_t c = 0; c < chunk; ++c) gx[base + c] += g[o * chunk + c];
    }
  });
}

Tensor broadcast(Tape& tape, const Tensor& x, const Shape& leading) {
  Shape out_shape = leading;
  out_shape.insert(out_shape.end(), x.shape().begin(), x.shape().end());
  const std::size_t reps = shape_numel(leading);
  const std::size_t n = x.numel();
  Buffer out(reps * n);
  for (std::size_t r = 0; r < reps; ++r) std::copy(x.data().begin(), x.data().end(), out.begin() + static_cast<std::ptrdiff_t>(r * n));
  Tensor result = Tensor::from_buffer(out_shape, std::move(out));
  return emit(tape, OpKind::broadcast, {x}, result, [x, result, reps, n]() mutable {
    const auto g = result.grad();
    auto gx = x.grad_buffer();
    for (std::size_t r = 0; r < reps; ++r)
      for (std::size_t i = 0; i < n; ++i) gx[i] += g[r * n + i];
  });
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  Tensor result(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  return emit(tape, OpKind::reshape, {x}, result, [x, result]() mutable {
    const auto g = result.grad();
    auto gx = x.grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
  });
}

Tensor gather_rows(Tape& tape, const Tensor& x, std::span<const std::size_t> rows) {
  require_rank(OpKind::gather_rows, x, 2);
  const std::size_t n = x.dim(0), d = x.dim(1);
  if (rows.empty()) throw ShapeError("gather_rows: empty row list");
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  Buffer out(idx.size() * d);
  const auto xd = x.data();
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= n) throw ShapeError("gather_rows: row index out of range");
    std::copy_n(xd.begin() + static_cast<std::ptrdiff_t>(idx[r] * d), d, out.begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  Tensor result = Tensor::from_buffer({idx.size(), d}, std::move(out));
  return emit(tape, OpKind::gather_rows, {x}, result, [x, result, idx, d]() mutable {
    const auto g = result.grad();
    auto gx = x.grad_buffer();
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < d; ++j) gx[idx[r] * d + j] += g[r * d + j];
  });
}

Tensor segment_sum(Tape& tape, const Tensor& x, std::span<const std::size_t> offsets) {
  require_rank(OpKind::segment_sum, x, 2);
  const std::size_t d = x.dim(1);
  std::vector<std::size_t> off = checked_offsets(OpKind::segment_sum, offsets, x.dim(0));
  const std::size_t segs = off.size() - 1;
  Buffer out(segs * d, 0.0);
  const auto xd = x.data();
  for (std::size_t s = 0; s < segs; ++s)
    for (std::size_t r = off[s]; r < off[s + 1]; ++r)
      for (std::size_t j = 0; j < d; ++j) out[s * d + j] += xd[r * d + j];
  Tensor result = Tensor::from_buffer({segs, d}, std::move(out));
  return emit(tape, OpKind::segment_sum, {x}, result, [x, result, off, d]() mutable {
    const auto g = result.grad();
    auto gx = x.grad_buffer();
    for (std::size_t s = 0; s + 1 < off.size(); ++s)
      for (std::size_t r = off[s]; r < off[s + 1]; ++r)
        for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += g[s * d + j];
  });
}

Tensor segment_mean(Tape& tape, const Tensor& x, std::span<const std::size_t> offsets) {
  require_rank(OpKind::segment_mean, x, 2);
  const std::size_t d = x.dim(1);
  std::vector<std::size_t> off = checked_offsets(OpKind::segment_mean, offsets, x.dim(0));
  const std::size_t segs = off.size() - 1;
  Buffer out(segs * d, 0.0);
  const auto xd = x.data();
  for (std::size_t s = 0; s < segs; ++s) {
    const std::size_t count = off[s + 1] - off[s];
    if (count == 0) throw EmptySetError("segment_mean: segment " + std::to_string(s) + " is empty");
    for (std::size_t r = off[s]; r < off[s + 1]; ++r)
      for (std::size_t j = 0; j < d; ++j) out[s * d + j] += xd[r * d + j];
    const double inv = 1.0 / static_cast<double>(count);
    for (std::size_t j = 0; j < d; ++j) out[s * d + j] *= inv;
  }
  Tensor result = Tensor::from_buffer({segs, d}, std::move(out));
  return emit(tape, OpKind::segment_mean, {x}, result, [x, result, off, d]() mutable {
    const auto g = result.grad();
    auto gx = x.grad_buffer();
    for (std::size_t s = 0; s + 1 < off.size(); ++s) {
      const double inv = 1.0 / static_cast<double>(off[s + 1] - off[s]);
      for (std::size_t r = off[s]; r < off[s + 1]; ++r)
        for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += g[s * d + j] * inv;
    }
  });
}

Tensor segment_max(Tape& tape, const Tensor& x, std::span<const std::size_t> offsets) {
  require_rank(OpKind::segment_max, x, 2);
  const std::size_t d = x.dim(1);
  std::vector<std::size_t> off = checked_offsets(OpKind::segment_max, offsets, x.dim(0));
  const std::size_t segs = off.size() - 1;
  Buffer out(segs * d);
  std::vector<std::size_t> arg(segs * d);
  const auto xd = x.data();
  for (std::size_t s = 0; s < segs; ++s) {
    if (off[s + 1] == off[s]) throw EmptySetError("segment_max: segment " + std::to_string(s) + " is empty");
    for (std::size_t j = 0; j < d; ++j) {
      std::size_t best = off[s];
      for (std::size_t r = off[s] + 1; r < off[s + 1]; ++r) {
        if (xd[r * d + j] > xd[best * d + j]) best = r;
      }
      out[s * d + j] = xd[best * d + j];
      arg[s * d + j] = best;
    }
  }
  Tensor result = Tensor::from_buffer({segs, d}, std::move(out));
  return emit(tape, OpKind::segment_max, {x}, result, [x, result, arg, d]() mutable {
    const auto g = result.grad();
    auto gx = x.grad_buffer();
    for (std::size_t k = 0; k < arg.size(); ++k) gx[arg[k] * d + k % d] += g[k];
  });
}

Tensor repeat_segments(Tape& tape, const Tensor& x, std::span<const std::size_t> offsets) {
  require_rank(OpKind::repeat_segments, x, 2);
  const std::size_t d = x.dim(1);
  if (offsets.size() != x.dim(0) + 1) throw ShapeError("repeat_segments: one offset per row plus end expected");
  std::vector<std::size_t> off = checked_offsets(OpKind::repeat_segments, offsets, offsets.back());
  const std::size_t rows = off.back();
  if (rows == 0) throw ShapeError("repeat_segments: no output rows");
  Buffer out(rows * d);
  const auto xd = x.data();
  for (std::size_t s = 0; s + 1 < off.size(); ++s)
    for (std::size_t r = off[s]; r < off[s + 1]; ++r)
      std::copy_n(xd.begin() + static_cast<std::ptrdiff_t>(s * d), d, out.begin() + static_cast<std::ptrdiff_t>(r * d));
  Tensor result = Tensor::from_buffer({rows, d}, std::move(out));
  return emit(tape, OpKind::repeat_segments, {x}, result, [x, result, off, d]() mutable {
    const auto g = result.grad();
    auto gx = x.grad_buffer();
    for (std::size_t s = 0; s + 1 < off.size(); ++s)
      for (std::size_t r = off[s]; r < off[s + 1]; ++r)
        for (std::size_t j = 0; j < d; ++j) gx[s * d + j] += g[r * d + j];
  });
}

Tensor mul_rows(Tape& tape, const Tensor& x, const Tensor& s) {
  require_rank(OpKind::mul_rows, x, 2);
  require_rank(OpKind::mul_rows, s, 1);
  const std::size_t r = x.dim(0), d = x.dim(1);
  if (s.dim(0) != r) throw ShapeError("mul_rows: " + shape_str(x.shape()) + " vs " + shape_str(s.shape()));
  Buffer out(r * d);
  const auto xd = x.data();
  const auto sd = s.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = xd[i * d + j] * sd[i];
  Tensor result = Tensor::from_buffer({r, d}, std::move(out));
  return emit(tape, OpKind::mul_rows, {x, s}, result, [x, s, result, r, d]() mutable {
    const auto g = result.grad();
    const auto xd = x.data();
    const auto sd = s.data();
    if (x.requires_grad()) {
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < d; ++j) gx[i * d + j] += g[i * d + j] * sd[i];
    }
    if (s.requires_grad()) {
      auto gs = s.grad_buffer();
      for (std::size_t i = 0; i < r; ++i) gs[i] += kernels::dot(d, g.data() + i * d, xd.data() + i * d);
    }
  });
}

}  // namespace quann::ad
