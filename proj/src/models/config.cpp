#include <array>
#include <cstdlib>

#include "quann/errors.hpp"
#include "quann/models.hpp"

namespace quann {
namespace {

constexpr std::array<std::pair<Family, std::string_view>, 10> kNames{{
    {Family::quann1, "quann1"},
    {Family::quann2, "quann2"},
    {Family::deepset, "deepset"},
    {Family::pointnet, "pointnet"},
    {Family::norm_deepset, "norm_deepset"},
    {Family::hpds, "hpds"},
    {Family::settransformer_j2, "settransformer_j2"},
    {Family::ablation1, "ablation1"},
    {Family::ablation2, "ablation2"},
    {Family::ablation3, "ablation3"},
}};

std::string widths_str(const MlpSpec& s) {
  std::string out;
  for (std::size_t w : s.widths) out += (out.empty() ? "" : "-") + std::to_string(w);
  return out;
}

}  // namespace

std::string_view family_name(Family f) {
  for (const auto& [fam, name] : kNames) {
    if (fam == f) return name;
  }
  return "unknown";
}

Family parse_family(std::string_view name) {
  std::string valid;
  for (const auto& [fam, n] : kNames) {
    if (n == name) return fam;
    valid += (valid.empty() ? "" : ", ") + std::string(n);
  }
  throw ConfigError("unknown model family '" + std::string(name) + "' (valid: " + valid + ")");
}

const std::vector<Family>& all_families() {
  static const std::vector<Family> all = [] {
    std::vector<Family> v;
    for (const auto& [fam, n] : kNames) v.push_back(fam);
    return v;
  }();
  return all;
}

std::size_t family_arity(Family f) { return f == Family::quann2 || f == Family::settransformer_j2 ? 2 : 1; }

// ablation3 keeps psi; only the normalization is removed.
bool family_has_generator(Family f) { return f == Family::quann1 || f == Family::quann2 || f == Family::ablation3; }

void ModelConfig::validate() const {
  const std::string fam(family_name(family));
  if (element_width == 0) throw ConfigError(fam + ": element_width must be positive");
  if (latent_width == 0) throw ConfigError(fam + ": latent_width must be positive");
  if (output_width == 0) throw ConfigError(fam + ": output_width must be positive");
  try {
    encoder.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(fam + ": encoder: " + e.what());
  }
  try {
    estimator.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(fam + ": estimator: " + e.what());
  }
  const std::size_t arity = family_arity(family);
  if (encoder.in_width() != arity * element_width) {
    throw ConfigError(fam + ": encoder input width " + std::to_string(encoder.in_width()) + " should be " +
                      std::to_string(arity * element_width));
  }
  if (encoder.out_width() != latent_width) {
    throw ConfigError(fam + ": encoder output width must equal latent_width");
  }
  if (equivariant && arity != 1) throw ConfigError(fam + ": equivariant layers need a unary family");
  const std::size_t rho_in = latent_width + (equivariant ? element_width : 0);
  if (estimator.in_width() != rho_in) {
    throw ConfigError(fam + ": estimator input width " + std::to_string(estimator.in_width()) + " should be " +
                      std::to_string(rho_in));
  }
  if (estimator.out_width() != output_width) {
    throw ConfigError(fam + ": estimator output width must equal output_width");
  }
  if (family_has_generator(family) != generator.has_value()) {
    throw ConfigError(fam + (generator ? ": generator must be absent" : ": generator is required"));
  }
  if (generator) {
    if (latent_width % 2 != 0) {
      throw ConfigError(fam + ": latent_width must be even for the RevNet generator, got " + std::to_string(latent_width));
    }
    if (generator->dim != latent_width) throw ConfigError(fam + ": generator dim must equal latent_width");
    try {
      generator->validate();
    } catch (const ConfigError& e) {
      throw ConfigError(fam + ": generator: " + e.what());
    }
  }
  if (match_parameter_count) {
    if (family != Family::ablation2) throw ConfigError(fam + ": match_parameter_count is only for ablation2");
    const double have = static_cast<double>(config_parameter_count(*this));
    const double want = static_cast<double>(*match_parameter_count);
    if (std::abs(have - want) > 0.05 * want) {
      throw ConfigError(fam + ": encoder " + widths_str(encoder) + " / estimator " + widths_str(estimator) + " give " +
                        std::to_string(static_cast<std::size_t>(have)) + " parameters, not within 5% of " +
                        std::to_string(*match_parameter_count));
    }
  }
}

std::size_t config_parameter_count(const ModelConfig& c) {
  std::size_t n = c.encoder.parameter_count() + c.estimator.parameter_count();
  if (family_arity(c.family) == 2) n += 3 * c.element_width * c.element_width;
  if (c.generator) n += c.generator->parameter_count();
  if (c.family == Family::hpds) n += 1;
  return n;
}

ModelConfig preset_config(Family family, std::size_t element_width, std::size_t output_width,
                          const PresetOptions& o) {
  ModelConfig c;
  c.family = family;
  c.element_width = element_width;
  c.latent_width = o.latent_width;
  c.output_width = output_width;
  c.equivariant = o.equivariant;
  c.seed = o.seed;
  const std::size_t rho_in = o.latent_width + (o.equivariant ? element_width : 0);
  c.encoder.widths = {family_arity(family) * element_width, o.hidden_width, o.latent_width};
  c.estimator.widths = {rho_in, o.hidden_width, output_width};
  if (family_has_generator(family)) c.generator = RevNetSpec{o.latent_width, o.revnet_blocks, o.revnet_hidden};

  if (family == Family::ablation2) {
    const std::size_t target = config_parameter_count(preset_config(Family::quann1, element_width, output_width, o));
    std::size_t best_h = 1, best_gap = SIZE_MAX;
    for (std::size_t h = 1; h <= 4096; ++h) {
      ModelConfig trial = c;
      trial.encoder.widths = {element_width, o.hidden_width, h, o.latent_width};
      trial.estimator.widths = {rho_in, o.hidden_width, h, output_width};
      const std::size_t n = config_parameter_count(trial);
      const std::size_t gap = n > target ? n - target : target - n;
      if (gap < best_gap) {
        best_gap = gap;
        best_h = h;
      }
    }
    c.encoder.widths = {element_width, o.hidden_width, best_h, o.latent_width};
    c.estimator.widths = {rho_in, o.hidden_width, best_h, output_width};
    c.match_parameter_count = target;
  }
  return c;
}

}  // namespace quann
