#pragma once

#include <cstdint>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "lcpvae/model.hpp"

namespace lcpvae {

inline constexpr int kCheckpointVersion = 1;

nlohmann::json tensor_to_json(const Tensor& t);
Tensor tensor_from_json(const nlohmann::json& j);

nlohmann::json model_config_to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct Checkpoint {
  Model model;
  nlohmann::json config;  // echo of the run configuration that produced it
  std::uint64_t seed = 0;
};

/// Versioned JSON document: model configuration, condition table, optional
/// ablation statistics and the flat parameter arrays keyed by
/// "<block>.<w|b><layer>". Doubles round-trip exactly.
nlohmann::json checkpoint_to_json(const Model& model, const nlohmann::json& config, std::uint64_t seed);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const std::filesystem::path& path, const Model& model, const nlohmann::json& config,
                     std::uint64_t seed);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Snapshot of every parameter value in Model::parameters() order.
std::vector<Tensor> snapshot_parameters(const Model& model);
void restore_parameters(const Model& model, const std::vector<Tensor>& values);

}  // namespace lcpvae
