#include "quann/errors.hpp"
#include "quann/nkm.hpp"

namespace quann {
namespace {

void require_nonempty(const PackedSets& z, const char* what) {
  if (z.offsets.size() < 2) throw EmptySetError(std::string(what) + ": no sets");
  for (std::size_t s = 0; s + 1 < z.offsets.size(); ++s) {
    if (z.offsets[s + 1] == z.offsets[s]) {
      throw EmptySetError(std::string(what) + ": set " + std::to_string(s) + " is empty");
    }
  }
}

}  // namespace

Tensor nkm_pool(Tape& tape, const GeneratingFunction& psi, const PackedSets& latents, bool normalize) {
  require_nonempty(latents, "nkm_pool");
  if (latents.rows.rank() != 2 || latents.rows.dim(1) != psi.dim()) {
    throw ShapeError("nkm_pool: latents " + shape_str(latents.rows.shape()) + " do not match generator dim " +
                     std::to_string(psi.dim()));
  }
  Tensor mapped = psi.forward(tape, latents.rows);
  Tensor pooled = normalize ? ad::segment_mean(tape, mapped, latents.offsets)
                            : ad::segment_sum(tape, mapped, latents.offsets);
  return psi.inverse(tape, pooled);
}

Tensor nkm_pool(Tape& tape, const GeneratingFunction& psi, const SetBatch& latents, bool normalize) {
  return nkm_pool(tape, psi, pack(tape, latents), normalize);
}

Tensor fixed_pool(Tape& tape, FixedPool kind, const PackedSets& latents) {
  require_nonempty(latents, "fixed_pool");
  switch (kind) {
    case FixedPool::sum:
      return ad::segment_sum(tape, latents.rows, latents.offsets);
    case FixedPool::mean:
      return ad::segment_mean(tape, latents.rows, latents.offsets);
    case FixedPool::max:
      return ad::segment_max(tape, latents.rows, latents.offsets);
  }
  throw ConfigError("unknown fixed pool");
}

Tensor fixed_pool(Tape& tape, FixedPool kind, const SetBatch& latents) {
  return fixed_pool(tape, kind, pack(tape, latents));
}

Tensor power_mean_pool(Tape& tape, const Tensor& w, const PackedSets& latents) {
  require_nonempty(latents, "power_mean_pool");
  if (w.numel() != 1) throw ShapeError("power_mean_pool: exponent must have one element");
  for (double v : latents.rows.data()) {
    if (!(v > 0.0)) throw DomainError("power_mean_pool: latents must be strictly positive, got " + std::to_string(v));
  }
  Tensor e = ad::clamp_magnitude(tape, ad::reshape(tape, w, {}), kPowerMeanMinExponent);
  Tensor mean = ad::segment_mean(tape, ad::pow(tape, latents.rows, e), latents.offsets);
  Tensor inv = ad::div(tape, Tensor::scalar(1.0), e);
  return ad::pow(tape, mean, inv);
}

Tensor power_mean_pool(Tape& tape, const Tensor& w, const SetBatch& latents) {
  return power_mean_pool(tape, w, pack(tape, latents));
}

}  // namespace quann
