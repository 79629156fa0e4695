#include "quann/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "quann/errors.hpp"

namespace quann {

Tensor finite_diff_grad(const ScalarFunction& f, const Tensor& x, double step) {
  if (!(step > 0.0)) throw DomainError("finite_diff_grad: step must be positive");
  Tensor probe = x.clone();
  std::vector<double> grad(x.numel());
  auto values = probe.mutable_data();
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double orig = values[i];
    values[i] = orig + step;
    const double up = f(probe);
    values[i] = orig - step;
    const double down = f(probe);
    values[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NonFiniteError("finite_diff_grad: f is not finite near coordinate " + std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * step);
  }
  return Tensor(x.shape(), std::move(grad));
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("relative_error: length mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  if (denom == 0.0) return 0.0;
  return std::sqrt(diff) / denom;
}

}  // namespace quann
