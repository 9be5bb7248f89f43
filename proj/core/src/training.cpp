#include "lcpvae/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "lcpvae/checkpoint.hpp"
#include "lcpvae/error.hpp"
#include "lcpvae/random.hpp"

namespace lcpvae {

using nlohmann::json;

namespace {

enum Purpose : std::uint64_t { kInit = 11, kShuffle = 12, kNoise = 13, kEvalNoise = 14 };

Var zero() { return Var::constant(Tensor::scalar(0.0)); }

LossGraph assemble(Var recon_primary, Var recon_csvae, Var kl_primary, Var kl_csvae, double lambda) {
  LossGraph g;
  g.recon_primary = std::move(recon_primary);
  g.recon_csvae = std::move(recon_csvae);
  g.kl_primary = std::move(kl_primary);
  g.kl_csvae = std::move(kl_csvae);
  g.lambda = lambda;
  g.total = scale(g.kl_csvae + g.kl_primary, lambda) + g.recon_csvae + g.recon_primary;
  return g;
}

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json breakdown_to_json(const LossBreakdown& b) {
  return {{"lambda", b.lambda},         {"total", b.total},           {"recon_primary", b.recon_primary},
          {"recon_csvae", b.recon_csvae}, {"kl_primary", b.kl_primary}, {"kl_csvae", b.kl_csvae}};
}

}  // namespace

double anneal_weight(const AnnealSchedule& s, std::size_t step) {
  if (step < s.start_step) return 0.0;
  const double progress =
      std::min(1.0, static_cast<double>(step - s.start_step) / static_cast<double>(s.warmup_steps));
  if (s.shape == AnnealShape::linear) return s.max_weight * progress;
  // Logistic rescaled to pass through 0 at progress 0 and 1 at progress 1.
  const double lo = sigmoid(-5.0), hi = sigmoid(5.0);
  return s.max_weight * std::clamp((sigmoid(10.0 * progress - 5.0) - lo) / (hi - lo), 0.0, 1.0);
}

LossBreakdown LossGraph::values() const {
  LossBreakdown b;
  b.total = total.value().item();
  b.recon_primary = recon_primary.value().item();
  b.recon_csvae = recon_csvae.value().item();
  b.kl_primary = kl_primary.value().item();
  b.kl_csvae = kl_csvae.value().item();
  b.lambda = lambda;
  return b;
}

Var squared_error(const Var& prediction, const Tensor& target) {
  if (prediction.shape() != target.shape()) {
    throw ShapeError("squared_error: " + shape_string(prediction.shape()) + " vs " + shape_string(target.shape()));
  }
  return scale(sum(square(prediction - Var::constant(target))), 1.0 / static_cast<double>(target.rows()));
}

Var absolute_error(const Var& prediction, const Tensor& target) {
  if (prediction.shape() != target.shape()) {
    throw ShapeError("absolute_error: " + shape_string(prediction.shape()) + " vs " + shape_string(target.shape()));
  }
  return scale(sum(abs(prediction - Var::constant(target))), 1.0 / static_cast<double>(target.rows()));
}

LossGraph cvae_loss(const ModelOutput& output, const Tensor& x, double lambda) {
  return assemble(squared_error(output.reconstruction, x), zero(), kl_to_standard_normal(output.primary_posterior),
                  zero(), lambda);
}

LossGraph lcpvae_loss(const ModelOutput& output, const Tensor& x, const Tensor& c_target, double lambda) {
  if (!output.conditional_posterior || !output.csvae_reconstruction) {
    throw ConfigError("lcpvae_loss: output carries no CSVAE posterior");
  }
  const DiagGaussian& conditional = *output.conditional_posterior;
  const DiagGaussian frozen = stop_gradient(conditional);
  return assemble(squared_error(output.reconstruction, x), absolute_error(*output.csvae_reconstruction, c_target),
                  cpvae_kl(output.primary_posterior, frozen), kl_to_standard_normal(conditional), lambda);
}

LossGraph ablation_loss(const ModelOutput& output, const Tensor& x, double lambda) {
  if (!output.conditional_posterior) throw ConfigError("ablation_loss: output carries no conditional posterior");
  return assemble(squared_error(output.reconstruction, x), zero(),
                  cpvae_kl(output.primary_posterior, stop_gradient(*output.conditional_posterior)), zero(), lambda);
}

LossGraph model_loss(const Model& model, const ModelOutput& output, const Batch& batch, double lambda) {
  switch (model.kind()) {
    case ModelKind::vae:
    case ModelKind::cvae: return cvae_loss(output, batch.x, lambda);
    case ModelKind::lcpvae: return lcpvae_loss(output, batch.x, batch.c, lambda);
    case ModelKind::lcpvae_ablation: return ablation_loss(output, batch.x, lambda);
  }
  throw ConfigError("unknown model kind");
}

OptimizerState::OptimizerState(OptimizerSettings s, std::span<const NamedParameter> params) : settings(s) {
  for (const auto& p : params) {
    first_moment.push_back(Tensor::zeros(p.var.shape()));
    second_moment.push_back(Tensor::zeros(p.var.shape()));
  }
}

void optimizer_step(OptimizerState& state, std::span<NamedParameter> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw ShapeError("optimizer_step: " + std::to_string(params.size()) + " parameters, " +
                     std::to_string(grads.size()) + " gradients, " + std::to_string(state.first_moment.size()) +
                     " moment slots");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (grads[k].shape() != params[k].var.shape() || state.first_moment[k].shape() != params[k].var.shape()) {
      throw ShapeError("optimizer_step: gradient for " + params[k].name + " has shape " +
                       shape_string(grads[k].shape()) + ", parameter is " + shape_string(params[k].var.shape()));
    }
    require_finite(grads[k].data(), "gradient of " + params[k].name);
  }
  const auto& s = state.settings;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(s.beta1, t);
  const double correction2 = 1.0 - std::pow(s.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto w = params[k].var.mutable_value();
    auto m = state.first_moment[k].mutable_data();
    auto v = state.second_moment[k].mutable_data();
    const auto g = grads[k].data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = s.beta1 * m[i] + (1.0 - s.beta1) * g[i];
      v[i] = s.beta2 * v[i] + (1.0 - s.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      w[i] -= s.learning_rate * m_hat / (std::sqrt(v_hat) + s.epsilon);
    }
  }
}

json metrics_record_to_json(const MetricsRecord& r) {
  json j = breakdown_to_json(r.loss);
  j["step"] = r.step;
  j["epoch"] = r.epoch;
  return j;
}

Model build_model(const RunConfig& config, const Dataset& dataset) {
  ModelConfig mc;
  mc.kind = config.model;
  mc.input_dim = dataset.dim();
  mc.latent_dim = config.latent_dim;
  mc.hidden = config.hidden;
  mc.csvae_hidden = config.csvae_hidden;
  mc.freeze_scope = config.freeze_scope;
  Tensor table = condition_table(dataset, config.condition);
  mc.condition_dim = table.cols();
  std::optional<ConditionStats> stats;
  if (config.model == ModelKind::lcpvae_ablation) stats = ablation_stats(dataset.embeddings, config.latent_dim);
  auto rng = seeded_stream(config.required_seed(), kInit);
  return Model(mc, std::move(table), rng, std::move(stats));
}

BatchNoise draw_noise(std::size_t rows, std::size_t latent_dim, std::mt19937_64& rng) {
  BatchNoise n;
  n.primary = standard_normal(rows, latent_dim, rng);
  n.conditional = standard_normal(rows, latent_dim, rng);
  return n;
}

LossBreakdown evaluate_loss(const Model& model, const Dataset& dataset, Split split, double lambda, std::uint64_t seed) {
  const auto& idx = dataset.split(split);
  const Batch batch = make_batch(dataset, idx, model.condition_table());
  auto rng = seeded_stream(seed, kEvalNoise);
  const BatchNoise noise = draw_noise(batch.size(), model.config().latent_dim, rng);
  const ModelOutput out = model.forward(batch, noise.primary, noise.conditional);
  return model_loss(model, out, batch, lambda).values();
}

RunArtifacts train(const RunConfig& config, const Dataset& dataset, const StepObserver& observer) {
  config.validate();
  const auto& train_idx = dataset.split(Split::train);
  if (train_idx.empty()) throw DataError("training split is empty");
  const std::uint64_t seed = config.required_seed();

  RunArtifacts art{build_model(config, dataset), config, {}, {}, {}, 0};
  const Model& model = art.model;
  auto params = model.parameters();
  OptimizerState optimizer(config.optimizer, params);
  auto shuffle_rng = seeded_stream(seed, kShuffle);
  auto noise_rng = seeded_stream(seed, kNoise);
  const double eval_lambda = config.anneal.max_weight;
  const std::filesystem::path out_dir = config.output_dir;
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  art.initial_eval = evaluate_loss(model, dataset, Split::train, eval_lambda, seed);

  const std::size_t per_epoch = (train_idx.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = per_epoch * config.epochs;
  std::vector<std::size_t> order = train_idx;
  std::vector<Tensor> grads(params.size());
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++step) {
      const double lambda = anneal_weight(config.anneal, step);
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      LossBreakdown values;
      try {
        const Batch batch = make_batch(dataset, std::span(order).subspan(start, end - start), model.condition_table());
        const BatchNoise noise = draw_noise(batch.size(), config.latent_dim, noise_rng);
        const ModelOutput out = model.forward(batch, noise.primary, noise.conditional);
        const LossGraph loss = model_loss(model, out, batch, lambda);
        if (observer) observer(StepContext{step, epoch, model, batch, out, loss});
        for (auto& p : params) p.var.zero_grad();
        backward(loss.total);
        for (std::size_t k = 0; k < params.size(); ++k) grads[k] = params[k].var.grad();
        optimizer_step(optimizer, params, grads);
        values = loss.values();
      } catch (const NumericalError& e) {
        // Weights are untouched by a failed step, so they are the last good ones.
        if (!out_dir.empty()) {
          save_checkpoint(out_dir / "checkpoint_last_good.json", model, run_config_to_json(config), seed);
          art.steps = step;
          write_artifacts(art, out_dir);
        }
        throw NumericalAbort("training aborted at step " + std::to_string(step) + ": " + e.what());
      }
      if (step % config.log_every == 0 || step + 1 == total_steps) art.log.push_back({step, epoch, values});
    }
  }
  art.steps = step;
  art.final_eval = evaluate_loss(model, dataset, Split::train, eval_lambda, seed);
  if (!out_dir.empty()) write_artifacts(art, out_dir);
  return art;
}

void write_artifacts(const RunArtifacts& art, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const json config = run_config_to_json(art.config);
  write_json_file(dir / "config.json", config);
  {
    std::ofstream log(dir / "metrics.jsonl", std::ios::binary);
    if (!log) throw DataError("cannot write metrics log in " + dir.string());
    for (const auto& r : art.log) log << metrics_record_to_json(r).dump() << '\n';
  }
  save_checkpoint(dir / "checkpoint.json", art.model, config, art.config.required_seed());
  write_json_file(dir / "final_metrics.json", {{"steps", art.steps},
                                               {"initial_eval", breakdown_to_json(art.initial_eval)},
                                               {"final_eval", breakdown_to_json(art.final_eval)}});
}

}  // namespace lcpvae
