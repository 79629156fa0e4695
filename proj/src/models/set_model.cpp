#include "quann/errors.hpp"
#include "quann/models.hpp"

namespace quann {
namespace {

// Independent init streams per component, so e.g. norm_deepset and
// ablation1 built from the same seed hold identical weights.
enum Stream : std::uint64_t { kPhi = 1, kPsi = 2, kRho = 3, kPair = 4 };

}  // namespace

SetModel::SetModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const std::uint64_t seed = config_.seed;
  if (family_arity(config_.family) == 2) {
    Rng rng(derive_seed(seed, {kPair}));
    pair_ = PairwiseEncoder(config_.element_width, config_.encoder, rng);
    pair_.append_parameters(params_, "phi");
  } else {
    Rng rng(derive_seed(seed, {kPhi}));
    phi_ = Mlp(config_.encoder, rng);
    phi_.append_parameters(params_, "phi");
  }
  if (config_.generator) {
    Rng rng(derive_seed(seed, {kPsi}));
    psi_.emplace(RevNet(*config_.generator, rng));
    psi_->net().append_parameters(params_, "psi");
  }
  {
    Rng rng(derive_seed(seed, {kRho}));
    rho_ = Mlp(config_.estimator, rng);
    rho_.append_parameters(params_, "rho");
  }
  if (config_.family == Family::hpds) {
    hpds_w_ = Tensor::full({1}, 1.0, true);
    params_.push_back({"pool/w", hpds_w_});
  }
}

SetModel build_model(const ModelConfig& config) { return SetModel(config); }

Tensor SetModel::pool_unary(Tape& tape, const PackedSets& latents) const {
  switch (config_.family) {
    case Family::quann1:
      return nkm_pool(tape, *psi_, latents, true);
    case Family::ablation3:
      return nkm_pool(tape, *psi_, latents, false);
    case Family::deepset:
      return fixed_pool(tape, FixedPool::sum, latents);
    case Family::pointnet:
      return fixed_pool(tape, FixedPool::max, latents);
    case Family::norm_deepset:
    case Family::ablation1:
    case Family::ablation2:
      return fixed_pool(tape, FixedPool::mean, latents);
    case Family::hpds: {
      PackedSets shifted{ad::add_scalar(tape, ad::softplus(tape, latents.rows), kHpdsShift), latents.offsets};
      return power_mean_pool(tape, hpds_w_, shifted);
    }
    case Family::quann2:
    case Family::settransformer_j2:
      break;
  }
  throw ConfigError("pool_unary called for a binary family");
}

Tensor SetModel::pooled_binary(Tape& tape, const SetBatch& batch) const {
  PackedSets x = pack(tape, batch);
  std::vector<std::size_t> left, right;
  std::vector<std::size_t> offsets{0};
  for (std::size_t s = 0; s < x.sets(); ++s) {
    const std::size_t begin = x.offsets[s], end = x.offsets[s + 1];
    if (end - begin < 2) {
      throw EmptySetError(std::string(family_name(config_.family)) + ": set " + std::to_string(s) +
                          " has fewer than two elements, so it has no ordered pairs");
    }
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t j = begin; j < end; ++j) {
        if (i == j) continue;
        left.push_back(i);
        right.push_back(j);
      }
    }
    offsets.push_back(left.size());
  }
  Tensor xi = ad::gather_rows(tape, x.rows, left);
  Tensor xj = ad::gather_rows(tape, x.rows, right);
  PackedSets pairs{pair_.encode(tape, xi, xj), std::move(offsets)};
  if (config_.family == Family::quann2) return nkm_pool(tape, *psi_, pairs, true);
  return fixed_pool(tape, FixedPool::sum, pairs);
}

Tensor SetModel::pooled(Tape& tape, const SetBatch& batch) const {
  if (batch.width() != config_.element_width) {
    throw ShapeError(std::string(family_name(config_.family)) + ": element width " + std::to_string(batch.width()) +
                     " does not match the configured " + std::to_string(config_.element_width));
  }
  if (family_arity(config_.family) == 2) return pooled_binary(tape, batch);
  PackedSets x = pack(tape, batch);
  PackedSets latents{phi_.forward(tape, x.rows), x.offsets};
  return pool_unary(tape, latents);
}

Tensor SetModel::forward(Tape& tape, const SetBatch& batch) const {
  if (config_.equivariant) throw ConfigError("forward() on an equivariant model; use equivariant_forward()");
  return rho_.forward(tape, pooled(tape, batch));
}

Tensor SetModel::equivariant_forward(Tape& tape, const SetBatch& batch) const {
  if (!config_.equivariant) throw ConfigError("equivariant_forward() needs a config built with equivariant = true");
  Tensor pool = pooled(tape, batch);
  PackedSets x = pack(tape, batch);
  Tensor context = ad::repeat_segments(tape, pool, x.offsets);
  Tensor rows = rho_.forward(tape, ad::concat(tape, {x.rows, context}, 1));

  // Scatter back to the padded layout; padding slots read a zero row.
  const std::size_t total = x.offsets.back(), n_max = batch.n_max(), out = config_.output_width;
  Tensor padded = ad::concat(tape, {rows, Tensor::zeros({1, out})}, 0);
  std::vector<std::size_t> index(batch.batch() * n_max, total);
  for (std::size_t s = 0; s < batch.batch(); ++s) {
    for (std::size_t i = 0; i < batch.cardinalities()[s]; ++i) index[s * n_max + i] = x.offsets[s] + i;
  }
  return ad::reshape(tape, ad::gather_rows(tape, padded, index), {batch.batch(), n_max, out});
}

Tensor loss_mse(Tape& tape, const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("loss_mse: prediction " + shape_str(pred.shape()) + " vs target " + shape_str(target.shape()));
  }
  Tensor diff = ad::sub(tape, pred, target);
  return ad::mean_all(tape, ad::mul(tape, diff, diff));
}

}  // namespace quann
