#include <Eigen/Dense>

#include "quann/errors.hpp"
#include "quann/nkm.hpp"

namespace quann {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

std::vector<double> generator_jacobian(const GeneratingFunction& psi, std::span<const double> point) {
  const std::size_t d = psi.dim();
  if (point.size() != d) throw ShapeError("generator_jacobian: point width differs from generator dim");
  std::vector<double> jac(d * d);
  std::vector<double> seed(d, 0.0);
  for (std::size_t r = 0; r < d; ++r) {
    Tape tape;
    Tensor x({1, d}, std::vector<double>(point.begin(), point.end()), true);
    Tensor y = psi.forward(tape, x);
    seed.assign(d, 0.0);
    seed[r] = 1.0;
    tape.backward(y, seed);
    const auto g = x.grad();
    std::copy(g.begin(), g.end(), jac.begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  return jac;
}

Tensor nkm_jacobian(const GeneratingFunction& psi, const Tensor& set, std::size_t j) {
  const std::size_t d = psi.dim();
  if (set.rank() != 2 || set.dim(1) != d) {
    throw ShapeError("nkm_jacobian: set must be [n x " + std::to_string(d) + "], got " + shape_str(set.shape()));
  }
  const std::size_t n = set.dim(0);
  if (j >= n) throw ShapeError("nkm_jacobian: element index out of range");

  Tape tape(Tape::Mode::inference);
  PackedSets z{set.clone(), {0, n}};
  const Tensor y = nkm_pool(tape, psi, z);

  const std::vector<double> jy = generator_jacobian(psi, y.data());
  const auto row = set.data().subspan(j * d, d);
  const std::vector<double> jx = generator_jacobian(psi, row);
  Eigen::Map<const RowMatrix> Jy(jy.data(), d, d);
  Eigen::Map<const RowMatrix> Jx(jx.data(), d, d);

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Jy);
  const auto& sv = svd.singularValues();
  const double smax = sv(0), smin = sv(sv.size() - 1);
  if (!(smin > 0.0) || smax / smin > kJacobianConditionLimit) {
    throw SingularJacobianError("nkm_jacobian: J_psi(y) is singular or ill-conditioned (condition " +
                                std::to_string(smin > 0.0 ? smax / smin : INFINITY) + ")");
  }
  RowMatrix m = Jy.partialPivLu().solve(Jx) / static_cast<double>(n);
  return Tensor({d, d}, std::vector<double>(m.data(), m.data() + d * d));
}

}  // namespace quann
