#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lcpvae/model.hpp"

namespace lcpvae {

inline constexpr int kRunConfigVersion = 1;

enum class AnnealShape { linear, sigmoid };

/// KL weight schedule: zero before `start_step`, rising to `max_weight` over
/// `warmup_steps`, constant afterwards.
struct AnnealSchedule {
  AnnealShape shape = AnnealShape::linear;
  std::size_t warmup_steps = 1000;
  std::size_t start_step = 250;
  double max_weight = 1.0;

  void validate() const;
};

struct OptimizerSettings {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Everything that determines a training run. Two runs with equal configs
/// and datasets produce bit-identical artifacts.
struct RunConfig {
  ModelKind model = ModelKind::lcpvae;
  ConditionKind condition = ConditionKind::embedding;
  std::size_t latent_dim = 2;
  std::vector<std::size_t> hidden{64, 64};
  std::vector<std::size_t> csvae_hidden{32};
  FreezeScope freeze_scope = FreezeScope::kl_only;
  AnnealSchedule anneal;
  OptimizerSettings optimizer;
  std::size_t epochs = 60;
  std::size_t batch_size = 32;
  /// Required; there is no clock-based fallback.
  std::optional<std::uint64_t> seed;
  std::size_t log_every = 50;
  std::string dataset_path;
  std::string output_dir;

  void validate() const;
  std::uint64_t required_seed() const;
};

std::string to_string(AnnealShape shape);
AnnealShape parse_anneal_shape(std::string_view s);

nlohmann::json run_config_to_json(const RunConfig& c);
/// Starts from `base` and overrides only the keys present in `j`. Unknown
/// keys and a mismatched "version" raise ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});

}  // namespace lcpvae
