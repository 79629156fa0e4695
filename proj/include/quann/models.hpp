#pragma once

// Full set-function models. Unary families encode each element with phi,
// pool, then apply rho; binary families encode every ordered pair (i != j)
// with the pairwise encoder before pooling.
//
//   quann1            rho( psi^-1( 1/n sum psi(phi(x_i)) ) )
//   quann2            same over ordered pairs, 1/|P2| normalization
//   deepset           rho( sum phi(x_i) )
//   pointnet          rho( max phi(x_i) )
//   norm_deepset      rho( 1/n sum phi(x_i) )
//   hpds              rho( power mean of softplus(phi(x_i)) + 1e-3, learnable w )
//   settransformer_j2 rho( sum over ordered pairs phi(x_i, x_j) )
//   ablation1         quann1 with psi = identity
//   ablation2         ablation1 with deeper phi and rho
//   ablation3         quann1 without the 1/n factor

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "quann/autodiff.hpp"
#include "quann/nets.hpp"
#include "quann/nkm.hpp"

namespace quann {

enum class Family {
  quann1,
  quann2,
  deepset,
  pointnet,
  norm_deepset,
  hpds,
  settransformer_j2,
  ablation1,
  ablation2,
  ablation3,
};

std::string_view family_name(Family f);
// Throws ConfigError listing the valid names.
Family parse_family(std::string_view name);
const std::vector<Family>& all_families();

std::size_t family_arity(Family f);
bool family_has_generator(Family f);

inline constexpr double kHpdsShift = 1e-3;

struct ModelConfig {
  Family family = Family::quann1;
  std::size_t element_width = 0;
  std::size_t latent_width = 0;
  std::size_t output_width = 0;
  // For binary families the encoder is the pairwise encoder's MLP (input 2w).
  MlpSpec encoder;
  // Input is latent_width, or element_width + latent_width when equivariant.
  MlpSpec estimator;
  std::optional<RevNetSpec> generator;
  bool equivariant = false;
  // ablation2 only: the parameter count it must match within 5%.
  std::optional<std::size_t> match_parameter_count;
  std::uint64_t seed = 0;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

struct PresetOptions {
  std::size_t latent_width = 16;
  std::size_t hidden_width = 128;
  std::size_t revnet_blocks = 1;
  std::vector<std::size_t> revnet_hidden{32, 32};
  bool equivariant = false;
  std::uint64_t seed = 0;
};

// The architecture used for the synthetic experiments:
// phi = in -> hidden -> latent, rho = latent -> hidden -> out, and
// psi = RevNet(latent, 1 block, subnets half -> 32 -> 32 -> half).
// ablation2 gets one extra hidden layer of width h in phi and rho, with h
// chosen so its size is as close as possible to quann1's.
ModelConfig preset_config(Family family, std::size_t element_width, std::size_t output_width,
                          const PresetOptions& options = {});

// Total trainable scalars the config will build.
std::size_t config_parameter_count(const ModelConfig& config);

class SetModel {
 public:
  SetModel() = default;
  explicit SetModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  Family family() const { return config_.family; }

  // [batch x output_width]
  Tensor forward(Tape& tape, const SetBatch& batch) const;
  // The pooled latent before rho, [batch x latent_width].
  Tensor pooled(Tape& tape, const SetBatch& batch) const;
  // Per element: rho(concat(x_i, pooled)); [batch x n_max x output_width],
  // zero in padding slots. Needs an equivariant unary config.
  Tensor equivariant_forward(Tape& tape, const SetBatch& batch) const;

  const ParameterList& parameters() const { return params_; }
  std::size_t parameter_count() const { return count_parameters(params_); }

  const Mlp& encoder() const { return phi_; }
  const Mlp& estimator() const { return rho_; }
  const RevNet* generator() const { return psi_ ? &psi_->net() : nullptr; }
  const PairwiseEncoder* pairwise() const { return family_arity(config_.family) == 2 ? &pair_ : nullptr; }
  const Tensor& hpds_exponent() const { return hpds_w_; }

 private:
  Tensor pool_unary(Tape& tape, const PackedSets& latents) const;
  Tensor pooled_binary(Tape& tape, const SetBatch& batch) const;

  ModelConfig config_;
  Mlp phi_;
  PairwiseEncoder pair_;
  std::optional<RevNetGenerator> psi_;
  Mlp rho_;
  Tensor hpds_w_;
  ParameterList params_;
};

SetModel build_model(const ModelConfig& config);

// Mean over all entries of (pred - target)^2.
Tensor loss_mse(Tape& tape, const Tensor& pred, const Tensor& target);

}  // namespace quann
