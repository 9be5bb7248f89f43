#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lcpvae/distributions.hpp"
#include "lcpvae/mlp.hpp"

namespace lcpvae {

enum class ModelKind { vae, cvae, lcpvae, lcpvae_ablation };
enum class ConditionKind { one_hot, embedding };
/// Where CSVAE gradients are blocked in the LCPVAE graph: only inside the
/// CPVAE KL term, or also along the extended-sampling path.
enum class FreezeScope { kl_only, full };
enum class SampleMode { prior, conditional_posterior };

std::string to_string(ModelKind kind);
std::string to_string(ConditionKind kind);
std::string to_string(FreezeScope scope);
std::string to_string(SampleMode mode);
ModelKind parse_model_kind(std::string_view s);
ConditionKind parse_condition_kind(std::string_view s);
FreezeScope parse_freeze_scope(std::string_view s);
SampleMode parse_sample_mode(std::string_view s);

bool has_csvae(ModelKind kind);
/// True for the variants whose primary latent is sampled relative to a
/// per-condition Gaussian (LCPVAE and its ablation).
bool has_conditional_prior(ModelKind kind);

struct ModelConfig {
  ModelKind kind = ModelKind::lcpvae;
  std::size_t input_dim = 16;
  std::size_t condition_dim = 4;
  std::size_t latent_dim = 2;
  std::vector<std::size_t> hidden{64, 64};
  std::vector<std::size_t> csvae_hidden{32};
  FreezeScope freeze_scope = FreezeScope::kl_only;
};

/// Per-condition Gaussian used by the ablation in place of the CSVAE
/// posterior. Both tables are [conditions, latent_dim]; std is positive.
struct ConditionStats {
  Tensor mean;
  Tensor std;
};

/// Mini-batch: observations [B, D], condition vectors [B, C] and labels.
struct Batch {
  Tensor x;
  Tensor c;
  std::vector<int> condition_ids;

  std::size_t size() const { return condition_ids.size(); }
};

struct ModelOutput {
  Var reconstruction;
  DiagGaussian primary_posterior;
  std::optional<DiagGaussian> conditional_posterior;
  Var latent;
  std::optional<Var> csvae_latent;
  std::optional<Var> csvae_reconstruction;
};

enum class Init { glorot, zeros };

/// Weights and wiring of one of the four model variants.
///
/// Copies share parameters. `condition_table` ([conditions, condition_dim])
/// maps a label to the vector fed to the networks, so sampling needs only
/// the model.
class Model {
 public:
  Model(ModelConfig config, Tensor condition_table, std::mt19937_64& rng, std::optional<ConditionStats> stats = {},
        Init init = Init::glorot);

  const ModelConfig& config() const { return config_; }
  ModelKind kind() const { return config_.kind; }
  std::size_t num_conditions() const { return condition_table_.rows(); }
  const Tensor& condition_table() const { return condition_table_; }
  const std::optional<ConditionStats>& stats() const { return stats_; }

  Tensor condition_vectors(std::span<const int> ids) const;

  const MlpBlock& encoder() const { return encoder_; }
  const MlpBlock& decoder() const { return decoder_; }
  const MlpBlock& csvae_encoder() const;
  const MlpBlock& csvae_decoder() const;

  /// Dispatches to the forward pass of the configured kind.
  ModelOutput forward(const Batch& batch, const Tensor& eps_primary, const Tensor& eps_cond) const;

  /// CSVAE posterior for LCPVAE, the fixed statistics for the ablation.
  DiagGaussian conditional_posterior(std::span<const int> ids) const;

  std::vector<NamedParameter> parameters() const;
  std::vector<NamedParameter> csvae_parameters() const;

 private:
  ModelConfig config_;
  Tensor condition_table_;
  std::optional<ConditionStats> stats_;
  MlpBlock encoder_;
  MlpBlock decoder_;
  std::optional<MlpBlock> csvae_encoder_;
  std::optional<MlpBlock> csvae_decoder_;
};

ModelOutput vae_forward(const Model& model, const Batch& batch, const Tensor& eps);
/// Condition concatenated to encoder and decoder inputs, N(0, I) prior.
ModelOutput cvae_forward(const Model& model, const Batch& batch, const Tensor& eps);
/// CSVAE over the condition, CPVAE over (x, c), primary latent drawn with
/// the extended reparametrization relative to the CSVAE posterior.
ModelOutput lcpvae_forward(const Model& model, const Batch& batch, const Tensor& eps_primary, const Tensor& eps_cond);
/// LCPVAE wiring with the fixed per-condition statistics standing in for the
/// CSVAE posterior.
ModelOutput ablation_forward(const Model& model, const Batch& batch, const Tensor& eps);

/// Latents drawn at generation time for the given labels, [n, latent_dim].
/// prior: eps itself. conditional_posterior: mean_c + std_c * eps from the
/// CSVAE posterior (or the ablation statistics).
Tensor infer_latent(const Model& model, std::span<const int> ids, const Tensor& eps, SampleMode mode);
/// Decoded samples for the given labels, [n, input_dim].
Tensor infer_sample(const Model& model, std::span<const int> ids, const Tensor& eps, SampleMode mode);
Tensor decode_latent(const Model& model, std::span<const int> ids, const Tensor& z);

SampleMode default_sample_mode(ModelKind kind);

}  // namespace lcpvae
