#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "lcpvae/data.hpp"
#include "lcpvae/error.hpp"
#include "lcpvae/model.hpp"
#include "lcpvae/run_config.hpp"

namespace lcpvae {

/// Raised when training hits a non-finite value; the last good weights have
/// been written before it propagates (when an output directory is set).
class NumericalAbort : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

double anneal_weight(const AnnealSchedule& schedule, std::size_t step);

struct LossBreakdown {
  double total = 0.0;
  double recon_primary = 0.0;
  double recon_csvae = 0.0;
  double kl_primary = 0.0;
  double kl_csvae = 0.0;
  double lambda = 0.0;
};

/// Loss terms as graph nodes. Terms a variant does not have are constant
/// zeros, so every variant is assembled as
///   total = lambda * (kl_csvae + kl_primary) + recon_csvae + recon_primary.
struct LossGraph {
  Var total;
  Var recon_primary;
  Var recon_csvae;
  Var kl_primary;
  Var kl_csvae;
  double lambda = 0.0;

  LossBreakdown values() const;
};

/// Squared error summed over features, averaged over rows.
Var squared_error(const Var& prediction, const Tensor& target);
/// Absolute error summed over features, averaged over rows.
Var absolute_error(const Var& prediction, const Tensor& target);

/// VAE and CVAE objective: lambda * KL(q || N(0, I)) + reconstruction.
LossGraph cvae_loss(const ModelOutput& output, const Tensor& x, double lambda);
/// LCPVAE objective. The CPVAE KL sees the CSVAE posterior through a
/// stop-gradient, so it never moves CSVAE weights.
LossGraph lcpvae_loss(const ModelOutput& output, const Tensor& x, const Tensor& c_target, double lambda);
/// Ablation objective: CPVAE KL against the fixed statistics, no CSVAE terms.
LossGraph ablation_loss(const ModelOutput& output, const Tensor& x, double lambda);
LossGraph model_loss(const Model& model, const ModelOutput& output, const Batch& batch, double lambda);

/// Adam moments for one parameter list.
struct OptimizerState {
  OptimizerSettings settings;
  std::size_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  OptimizerState(OptimizerSettings s, std::span<const NamedParameter> params);
};

/// Bias-corrected Adam update of `params` in place. Every gradient is
/// checked for shape and finiteness before any parameter changes.
void optimizer_step(OptimizerState& state, std::span<NamedParameter> params, std::span<const Tensor> grads);

/// Records written every `log_every` steps (and on the final step).
struct MetricsRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  LossBreakdown loss;
};

nlohmann::json metrics_record_to_json(const MetricsRecord& r);

struct RunArtifacts {
  Model model;
  RunConfig config;
  std::vector<MetricsRecord> log;
  /// Full training-split objective at lambda = max_weight with fixed noise,
  /// before and after training.
  LossBreakdown initial_eval;
  LossBreakdown final_eval;
  std::size_t steps = 0;
};

/// Everything one training step exposes to an observer, called after the
/// loss graph is built and before the backward pass and update.
struct StepContext {
  std::size_t step;
  std::size_t epoch;
  const Model& model;
  const Batch& batch;
  const ModelOutput& output;
  const LossGraph& loss;
};

using StepObserver = std::function<void(const StepContext&)>;

/// Builds a freshly initialised model for `config` over `dataset`.
Model build_model(const RunConfig& config, const Dataset& dataset);

/// Noise for one batch: primary and conditional draws, each [rows, latent].
struct BatchNoise {
  Tensor primary;
  Tensor conditional;
};
BatchNoise draw_noise(std::size_t rows, std::size_t latent_dim, std::mt19937_64& rng);

/// Objective over a whole split as a single batch, with noise from `seed`.
LossBreakdown evaluate_loss(const Model& model, const Dataset& dataset, Split split, double lambda, std::uint64_t seed);

/// Mini-batch training loop. When config.output_dir is non-empty the
/// resolved config, metrics log, checkpoint and final metrics are written
/// there.
RunArtifacts train(const RunConfig& config, const Dataset& dataset, const StepObserver& observer = {});

void write_artifacts(const RunArtifacts& artifacts, const std::filesystem::path& dir);

}  // namespace lcpvae
