#include "quann/errors.hpp"
#include "quann/nkm.hpp"

namespace quann {

AffineGenerator::AffineGenerator(std::size_t dim, double scale, double shift)
    : dim_(dim), scale_(scale), shift_(shift) {
  if (scale == 0.0) throw DomainError("affine generator needs a non-zero scale");
}

Tensor AffineGenerator::forward(Tape& tape, const Tensor& x) const {
  return ad::add_scalar(tape, ad::scale(tape, x, scale_), shift_);
}

Tensor AffineGenerator::inverse(Tape& tape, const Tensor& y) const {
  return ad::scale(tape, ad::add_scalar(tape, y, -shift_), 1.0 / scale_);
}

ExpGenerator::ExpGenerator(std::size_t dim, double w) : dim_(dim), w_(w) {
  if (w == 0.0) throw DomainError("exponential generator needs w != 0");
}

Tensor ExpGenerator::forward(Tape& tape, const Tensor& x) const { return ad::exp(tape, ad::scale(tape, x, w_)); }

Tensor ExpGenerator::inverse(Tape& tape, const Tensor& y) const { return ad::scale(tape, ad::log(tape, y), 1.0 / w_); }

}  // namespace quann
