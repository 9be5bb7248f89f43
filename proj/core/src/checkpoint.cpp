#include "lcpvae/checkpoint.hpp"

#include <algorithm>
#include <fstream>

#include "lcpvae/error.hpp"

namespace lcpvae {

using nlohmann::json;

json tensor_to_json(const Tensor& t) { return {{"shape", t.shape()}, {"data", t.vector()}}; }

Tensor tensor_from_json(const json& j) {
  try {
    return Tensor(j.at("shape").get<Shape>(), j.at("data").get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed tensor: ") + e.what());
  } catch (const ShapeError& e) {
    throw DataError(std::string("malformed tensor: ") + e.what());
  }
}

json model_config_to_json(const ModelConfig& c) {
  return {{"kind", to_string(c.kind)},
          {"input_dim", c.input_dim},
          {"condition_dim", c.condition_dim},
          {"latent_dim", c.latent_dim},
          {"hidden", c.hidden},
          {"csvae_hidden", c.csvae_hidden},
          {"freeze_scope", to_string(c.freeze_scope)}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.kind = parse_model_kind(j.at("kind").get<std::string>());
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.condition_dim = j.at("condition_dim").get<std::size_t>();
  c.latent_dim = j.at("latent_dim").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  c.csvae_hidden = j.at("csvae_hidden").get<std::vector<std::size_t>>();
  c.freeze_scope = parse_freeze_scope(j.at("freeze_scope").get<std::string>());
  return c;
}

json checkpoint_to_json(const Model& model, const json& config, std::uint64_t seed) {
  json params = json::object();
  for (const auto& p : model.parameters()) params[p.name] = tensor_to_json(p.var.value());
  json stats = nullptr;
  if (model.stats()) stats = {{"mean", tensor_to_json(model.stats()->mean)}, {"std", tensor_to_json(model.stats()->std)}};
  return {{"format", "lcpvae-checkpoint"},
          {"version", kCheckpointVersion},
          {"seed", seed},
          {"config", config},
          {"model", model_config_to_json(model.config())},
          {"condition_table", tensor_to_json(model.condition_table())},
          {"ablation_stats", stats},
          {"parameters", params}};
}

Checkpoint checkpoint_from_json(const json& j) {
  try {
    if (j.at("format") != "lcpvae-checkpoint") throw DataError("not a checkpoint document");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw DataError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kCheckpointVersion) + ")");
    }
    std::optional<ConditionStats> stats;
    if (!j.at("ablation_stats").is_null()) {
      stats = ConditionStats{tensor_from_json(j["ablation_stats"].at("mean")),
                             tensor_from_json(j["ablation_stats"].at("std"))};
    }
    std::mt19937_64 unused(0);
    Model model(model_config_from_json(j.at("model")), tensor_from_json(j.at("condition_table")), unused, stats,
                Init::zeros);
    const json& params = j.at("parameters");
    auto named = model.parameters();
    if (params.size() != named.size()) {
      throw DataError("checkpoint holds " + std::to_string(params.size()) + " parameters, model expects " +
                      std::to_string(named.size()));
    }
    for (auto& p : named) {
      const Tensor t = tensor_from_json(params.at(p.name));
      if (t.shape() != p.var.shape()) {
        throw DataError("parameter " + p.name + " has shape " + shape_string(t.shape()) + ", expected " +
                        shape_string(p.var.shape()));
      }
      std::copy(t.data().begin(), t.data().end(), p.var.mutable_value().begin());
    }
    return {std::move(model), j.at("config"), j.at("seed").get<std::uint64_t>()};
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const json& config, std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint " + path.string());
  out << checkpoint_to_json(model, config, seed).dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  return checkpoint_from_json(j);
}

std::vector<Tensor> snapshot_parameters(const Model& model) {
  std::vector<Tensor> out;
  for (const auto& p : model.parameters()) out.push_back(p.var.value());
  return out;
}

void restore_parameters(const Model& model, const std::vector<Tensor>& values) {
  auto named = model.parameters();
  if (named.size() != values.size()) throw ShapeError("restore_parameters: parameter count mismatch");
  for (std::size_t i = 0; i < named.size(); ++i) {
    if (named[i].var.shape() != values[i].shape()) throw ShapeError("restore_parameters: shape mismatch");
    std::copy(values[i].data().begin(), values[i].data().end(), named[i].var.mutable_value().begin());
  }
}

}  // namespace lcpvae
