#include "lcpvae/run_config.hpp"

#include <set>

#include "lcpvae/error.hpp"

namespace lcpvae {

using nlohmann::json;

void AnnealSchedule::validate() const {
  if (warmup_steps == 0) throw ConfigError("anneal: warmup_steps must be > 0");
  if (!(max_weight > 0.0 && max_weight <= 1.0)) throw ConfigError("anneal: max_weight must be in (0, 1]");
}

void RunConfig::validate() const {
  anneal.validate();
  if (latent_dim == 0) throw ConfigError("latent_dim must be > 0");
  if (batch_size == 0) throw ConfigError("batch_size must be > 0");
  if (log_every == 0) throw ConfigError("log_every must be > 0");
  if (!(optimizer.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) || !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) {
    throw ConfigError("moment decay rates must be in [0, 1)");
  }
  if (!(optimizer.epsilon > 0.0)) throw ConfigError("optimizer epsilon must be > 0");
  if (!seed) throw ConfigError("a seed is required");
}

std::uint64_t RunConfig::required_seed() const {
  if (!seed) throw ConfigError("a seed is required");
  return *seed;
}

std::string to_string(AnnealShape shape) { return shape == AnnealShape::linear ? "linear" : "sigmoid"; }

AnnealShape parse_anneal_shape(std::string_view s) {
  if (s == "linear") return AnnealShape::linear;
  if (s == "sigmoid") return AnnealShape::sigmoid;
  throw ConfigError("unknown anneal shape '" + std::string(s) + "'");
}

json run_config_to_json(const RunConfig& c) {
  return {{"version", kRunConfigVersion},
          {"model", to_string(c.model)},
          {"condition", to_string(c.condition)},
          {"latent_dim", c.latent_dim},
          {"hidden", c.hidden},
          {"csvae_hidden", c.csvae_hidden},
          {"freeze_scope", to_string(c.freeze_scope)},
          {"anneal",
           {{"shape", to_string(c.anneal.shape)},
            {"warmup_steps", c.anneal.warmup_steps},
            {"start_step", c.anneal.start_step},
            {"max_weight", c.anneal.max_weight}}},
          {"optimizer",
           {{"learning_rate", c.optimizer.learning_rate},
            {"beta1", c.optimizer.beta1},
            {"beta2", c.optimizer.beta2},
            {"epsilon", c.optimizer.epsilon}}},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"seed", c.seed ? json(*c.seed) : json(nullptr)},
          {"log_every", c.log_every},
          {"dataset_path", c.dataset_path},
          {"output_dir", c.output_dir}};
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown config key '" + where + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig run_config_from_json(const json& j, RunConfig c) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  try {
    reject_unknown(j,
                   {"version", "model", "condition", "latent_dim", "hidden", "csvae_hidden", "freeze_scope", "anneal",
                    "optimizer", "epochs", "batch_size", "seed", "log_every", "dataset_path", "output_dir"},
                   "");
    if (j.contains("version") && j.at("version").get<int>() != kRunConfigVersion) {
      throw ConfigError("run config version " + j.at("version").dump() + " is not supported");
    }
    if (j.contains("model")) c.model = parse_model_kind(j.at("model").get<std::string>());
    if (j.contains("condition")) c.condition = parse_condition_kind(j.at("condition").get<std::string>());
    if (j.contains("freeze_scope")) c.freeze_scope = parse_freeze_scope(j.at("freeze_scope").get<std::string>());
    read(j, "latent_dim", c.latent_dim);
    read(j, "hidden", c.hidden);
    read(j, "csvae_hidden", c.csvae_hidden);
    read(j, "epochs", c.epochs);
    read(j, "batch_size", c.batch_size);
    read(j, "log_every", c.log_every);
    read(j, "dataset_path", c.dataset_path);
    read(j, "output_dir", c.output_dir);
    if (j.contains("seed")) {
      if (j.at("seed").is_null()) {
        c.seed.reset();
      } else {
        c.seed = j.at("seed").get<std::uint64_t>();
      }
    }
    if (j.contains("anneal")) {
      const json& a = j.at("anneal");
      reject_unknown(a, {"shape", "warmup_steps", "start_step", "max_weight"}, "anneal.");
      if (a.contains("shape")) c.anneal.shape = parse_anneal_shape(a.at("shape").get<std::string>());
      read(a, "warmup_steps", c.anneal.warmup_steps);
      read(a, "start_step", c.anneal.start_step);
      read(a, "max_weight", c.anneal.max_weight);
    }
    if (j.contains("optimizer")) {
      const json& o = j.at("optimizer");
      reject_unknown(o, {"learning_rate", "beta1", "beta2", "epsilon"}, "optimizer.");
      read(o, "learning_rate", c.optimizer.learning_rate);
      read(o, "beta1", c.optimizer.beta1);
      read(o, "beta2", c.optimizer.beta2);
      read(o, "epsilon", c.optimizer.epsilon);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid run config: ") + e.what());
  }
  return c;
}

}  // namespace lcpvae
