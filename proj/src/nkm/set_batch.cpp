#include <algorithm>

#include "quann/errors.hpp"
#include "quann/nkm.hpp"

namespace quann {

SetBatch::SetBatch(Tensor data, std::vector<std::size_t> cardinalities)
    : data_(std::move(data)), card_(std::move(cardinalities)) {
  if (data_.rank() != 3) throw ShapeError("set batch data must be [batch x n_max x width], got " + shape_str(data_.shape()));
  if (card_.size() != data_.dim(0)) {
    throw ShapeError("set batch has " + std::to_string(data_.dim(0)) + " sets but " +
                     std::to_string(card_.size()) + " cardinalities");
  }
  const std::size_t n_max = data_.dim(1), w = data_.dim(2);
  const auto d = data_.data();
  offsets_.assign(1, 0);
  for (std::size_t s = 0; s < card_.size(); ++s) {
    if (card_[s] > n_max) throw ShapeError("cardinality " + std::to_string(card_[s]) + " exceeds n_max");
    const auto pad_begin = d.begin() + static_cast<std::ptrdiff_t>((s * n_max + card_[s]) * w);
    const auto pad_end = d.begin() + static_cast<std::ptrdiff_t>((s + 1) * n_max * w);
    if (std::any_of(pad_begin, pad_end, [](double v) { return v != 0.0; })) {
      throw ShapeError("set batch padding of set " + std::to_string(s) + " is not zero");
    }
    offsets_.push_back(offsets_.back() + card_[s]);
  }
}

SetBatch SetBatch::from_sets(std::size_t width, const std::vector<std::vector<double>>& sets) {
  if (width == 0 || sets.empty()) throw ShapeError("set batch needs a positive width and at least one set");
  std::size_t n_max = 1;
  std::vector<std::size_t> card;
  for (const auto& s : sets) {
    if (s.size() % width != 0) throw ShapeError("set size is not a multiple of the width");
    card.push_back(s.size() / width);
    n_max = std::max(n_max, card.back());
  }
  std::vector<double> data(sets.size() * n_max * width, 0.0);
  for (std::size_t s = 0; s < sets.size(); ++s) {
    std::copy(sets[s].begin(), sets[s].end(), data.begin() + static_cast<std::ptrdiff_t>(s * n_max * width));
  }
  return SetBatch(Tensor({sets.size(), n_max, width}, std::move(data)), std::move(card));
}

std::vector<double> SetBatch::set_values(std::size_t s) const {
  const std::size_t w = width();
  const auto begin = data_.data().begin() + static_cast<std::ptrdiff_t>(s * n_max() * w);
  return {begin, begin + static_cast<std::ptrdiff_t>(card_.at(s) * w)};
}

PackedSets pack(Tape& tape, const SetBatch& batch) {
  const std::size_t w = batch.width();
  Tensor flat = ad::reshape(tape, batch.data(), {batch.batch() * batch.n_max(), w});
  PackedSets out;
  out.offsets.assign(batch.offsets().begin(), batch.offsets().end());
  if (batch.total_elements() == batch.batch() * batch.n_max()) {
    out.rows = flat;
    return out;
  }
  if (batch.total_elements() == 0) throw EmptySetError("set batch contains no elements");
  std::vector<std::size_t> rows;
  rows.reserve(batch.total_elements());
  for (std::size_t s = 0; s < batch.batch(); ++s) {
    for (std::size_t i = 0; i < batch.cardinalities()[s]; ++i) rows.push_back(s * batch.n_max() + i);
  }
  out.rows = ad::gather_rows(tape, flat, rows);
  return out;
}

}  // namespace quann
