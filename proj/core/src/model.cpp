#include "lcpvae/model.hpp"

#include <cmath>

#include "lcpvae/error.hpp"

namespace lcpvae {
namespace {

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view s, const std::pair<std::string_view, Enum> (&table)[N], const char* what) {
  for (const auto& [name, value] : table) {
    if (name == s) return value;
  }
  throw ConfigError(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

constexpr std::pair<std::string_view, ModelKind> kModelKinds[] = {
    {"vae", ModelKind::vae}, {"cvae", ModelKind::cvae}, {"lcpvae", ModelKind::lcpvae},
    {"lcpvae_ablation", ModelKind::lcpvae_ablation}};
constexpr std::pair<std::string_view, ConditionKind> kConditionKinds[] = {{"one_hot", ConditionKind::one_hot},
                                                                          {"embedding", ConditionKind::embedding}};
constexpr std::pair<std::string_view, FreezeScope> kFreezeScopes[] = {{"kl_only", FreezeScope::kl_only},
                                                                      {"full", FreezeScope::full}};
constexpr std::pair<std::string_view, SampleMode> kSampleModes[] = {
    {"prior", SampleMode::prior}, {"conditional_posterior", SampleMode::conditional_posterior}};

template <typename Enum, std::size_t N>
std::string enum_name(Enum value, const std::pair<std::string_view, Enum> (&table)[N]) {
  for (const auto& [name, v] : table) {
    if (v == value) return std::string(name);
  }
  return "?";
}

std::vector<std::size_t> widths(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
  std::vector<std::size_t> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

MlpBlock make_block(Init init, std::string name, std::vector<std::size_t> w, std::mt19937_64& rng) {
  return init == Init::zeros ? MlpBlock::zeros(std::move(name), std::move(w)) : MlpBlock(std::move(name), std::move(w), rng);
}

void check_batch(const Model& model, const Batch& batch) {
  const auto& cfg = model.config();
  const std::size_t n = batch.size();
  if (batch.x.rank() != 2 || batch.x.rows() != n || batch.x.cols() != cfg.input_dim) {
    throw ShapeError("batch x has shape " + shape_string(batch.x.shape()) + ", expected [" + std::to_string(n) + ", " +
                     std::to_string(cfg.input_dim) + "]");
  }
  if (batch.c.rank() != 2 || batch.c.rows() != n || batch.c.cols() != cfg.condition_dim) {
    throw ShapeError("batch c has shape " + shape_string(batch.c.shape()) + ", expected [" + std::to_string(n) + ", " +
                     std::to_string(cfg.condition_dim) + "]");
  }
}

void check_eps(const Model& model, std::size_t rows, const Tensor& eps, const char* what) {
  if (eps.rank() != 2 || eps.rows() != rows || eps.cols() != model.config().latent_dim) {
    throw ShapeError(std::string(what) + ": noise shape " + shape_string(eps.shape()) + ", expected [" +
                     std::to_string(rows) + ", " + std::to_string(model.config().latent_dim) + "]");
  }
}

void require_kind(const Model& model, ModelKind kind, const char* what) {
  if (model.kind() != kind) {
    throw ConfigError(std::string(what) + " called on a " + to_string(model.kind()) + " model");
  }
}

}  // namespace

std::string to_string(ModelKind kind) { return enum_name(kind, kModelKinds); }
std::string to_string(ConditionKind kind) { return enum_name(kind, kConditionKinds); }
std::string to_string(FreezeScope scope) { return enum_name(scope, kFreezeScopes); }
std::string to_string(SampleMode mode) { return enum_name(mode, kSampleModes); }
ModelKind parse_model_kind(std::string_view s) { return parse_enum(s, kModelKinds, "model kind"); }
ConditionKind parse_condition_kind(std::string_view s) { return parse_enum(s, kConditionKinds, "condition kind"); }
FreezeScope parse_freeze_scope(std::string_view s) { return parse_enum(s, kFreezeScopes, "freeze scope"); }
SampleMode parse_sample_mode(std::string_view s) { return parse_enum(s, kSampleModes, "sample mode"); }

bool has_csvae(ModelKind kind) { return kind == ModelKind::lcpvae; }

bool has_conditional_prior(ModelKind kind) {
  return kind == ModelKind::lcpvae || kind == ModelKind::lcpvae_ablation;
}

SampleMode default_sample_mode(ModelKind kind) {
  return has_conditional_prior(kind) ? SampleMode::conditional_posterior : SampleMode::prior;
}

Model::Model(ModelConfig config, Tensor condition_table, std::mt19937_64& rng, std::optional<ConditionStats> stats,
             Init init)
    : config_(std::move(config)), condition_table_(std::move(condition_table)), stats_(std::move(stats)) {
  const auto& c = config_;
  if (c.input_dim == 0 || c.condition_dim == 0 || c.latent_dim == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (condition_table_.rank() != 2 || condition_table_.cols() != c.condition_dim || condition_table_.rows() < 1) {
    throw ShapeError("condition table shape " + shape_string(condition_table_.shape()) + " does not match condition_dim " +
                     std::to_string(c.condition_dim));
  }
  const bool conditioned = c.kind != ModelKind::vae;
  const std::size_t enc_in = c.input_dim + (conditioned ? c.condition_dim : 0);
  const std::size_t dec_in = c.latent_dim + (conditioned ? c.condition_dim : 0);
  encoder_ = make_block(init, "encoder", widths(enc_in, c.hidden, 2 * c.latent_dim), rng);
  decoder_ = make_block(init, "decoder", widths(dec_in, c.hidden, c.input_dim), rng);
  if (has_csvae(c.kind)) {
    // CSVAE posterior and CPVAE posterior are combined elementwise, so the
    // two latent spaces share latent_dim.
    csvae_encoder_ = make_block(init, "csvae_encoder", widths(c.condition_dim, c.csvae_hidden, 2 * c.latent_dim), rng);
    csvae_decoder_ = make_block(init, "csvae_decoder", widths(c.latent_dim, c.csvae_hidden, c.condition_dim), rng);
  }
  if (c.kind == ModelKind::lcpvae_ablation) {
    if (!stats_) throw ConfigError("lcpvae_ablation requires per-condition statistics");
    const Shape expected{condition_table_.rows(), c.latent_dim};
    if (stats_->mean.shape() != expected || stats_->std.shape() != expected) {
      throw ShapeError("ablation statistics must be " + shape_string(expected) + ", got " +
                       shape_string(stats_->mean.shape()) + " and " + shape_string(stats_->std.shape()));
    }
    for (double s : stats_->std.data()) {
      if (!(s > 0.0)) throw ConfigError("ablation statistics: std must be positive");
    }
  } else if (stats_) {
    throw ConfigError("per-condition statistics are only used by lcpvae_ablation");
  }
}

Tensor Model::condition_vectors(std::span<const int> ids) const { return gather_rows(condition_table_, ids); }

const MlpBlock& Model::csvae_encoder() const {
  if (!csvae_encoder_) throw ConfigError(to_string(kind()) + " model has no CSVAE");
  return *csvae_encoder_;
}

const MlpBlock& Model::csvae_decoder() const {
  if (!csvae_decoder_) throw ConfigError(to_string(kind()) + " model has no CSVAE");
  return *csvae_decoder_;
}

DiagGaussian Model::conditional_posterior(std::span<const int> ids) const {
  if (has_csvae(kind())) {
    return encode(*csvae_encoder_, Var::constant(condition_vectors(ids)));
  }
  if (kind() == ModelKind::lcpvae_ablation) {
    Tensor std = gather_rows(stats_->std, ids);
    std::vector<double> log_std(std.size());
    for (std::size_t i = 0; i < log_std.size(); ++i) log_std[i] = std::log(std[i]);
    return DiagGaussian::constant(gather_rows(stats_->mean, ids), Tensor(std.shape(), std::move(log_std)));
  }
  throw ConfigError(to_string(kind()) + " model has no conditional prior");
}

ModelOutput Model::forward(const Batch& batch, const Tensor& eps_primary, const Tensor& eps_cond) const {
  switch (kind()) {
    case ModelKind::vae: return vae_forward(*this, batch, eps_primary);
    case ModelKind::cvae: return cvae_forward(*this, batch, eps_primary);
    case ModelKind::lcpvae: return lcpvae_forward(*this, batch, eps_primary, eps_cond);
    case ModelKind::lcpvae_ablation: return ablation_forward(*this, batch, eps_primary);
  }
  throw ConfigError("unknown model kind");
}

std::vector<NamedParameter> Model::parameters() const {
  std::vector<NamedParameter> out = encoder_.parameters();
  for (auto& p : decoder_.parameters()) out.push_back(std::move(p));
  for (auto& p : csvae_parameters()) out.push_back(std::move(p));
  return out;
}

std::vector<NamedParameter> Model::csvae_parameters() const {
  std::vector<NamedParameter> out;
  if (csvae_encoder_) {
    out = csvae_encoder_->parameters();
    for (auto& p : csvae_decoder_->parameters()) out.push_back(std::move(p));
  }
  return out;
}

ModelOutput vae_forward(const Model& model, const Batch& batch, const Tensor& eps) {
  require_kind(model, ModelKind::vae, "vae_forward");
  check_batch(model, batch);
  check_eps(model, batch.size(), eps, "vae_forward");
  ModelOutput out;
  out.primary_posterior = encode(model.encoder(), Var::constant(batch.x));
  out.latent = reparam_sample(out.primary_posterior, eps);
  out.reconstruction = model.decoder().forward(out.latent);
  return out;
}

ModelOutput cvae_forward(const Model& model, const Batch& batch, const Tensor& eps) {
  require_kind(model, ModelKind::cvae, "cvae_forward");
  check_batch(model, batch);
  check_eps(model, batch.size(), eps, "cvae_forward");
  const Var x = Var::constant(batch.x);
  const Var c = Var::constant(batch.c);
  ModelOutput out;
  out.primary_posterior = encode(model.encoder(), concat({x, c}, 1));
  out.latent = reparam_sample(out.primary_posterior, eps);
  out.reconstruction = model.decoder().forward(concat({out.latent, c}, 1));
  return out;
}

ModelOutput lcpvae_forward(const Model& model, const Batch& batch, const Tensor& eps_primary, const Tensor& eps_cond) {
  require_kind(model, ModelKind::lcpvae, "lcpvae_forward");
  check_batch(model, batch);
  check_eps(model, batch.size(), eps_primary, "lcpvae_forward");
  check_eps(model, batch.size(), eps_cond, "lcpvae_forward");
  const Var x = Var::constant(batch.x);
  const Var c = Var::constant(batch.c);
  ModelOutput out;
  const DiagGaussian conditional = encode(model.csvae_encoder(), c);
  out.conditional_posterior = conditional;
  out.csvae_latent = reparam_sample(conditional, eps_cond);
  out.csvae_reconstruction = model.csvae_decoder().forward(*out.csvae_latent);
  out.primary_posterior = encode(model.encoder(), concat({x, c}, 1));
  const DiagGaussian sampler_prior =
      model.config().freeze_scope == FreezeScope::full ? stop_gradient(conditional) : conditional;
  out.latent = extended_reparam_sample(out.primary_posterior, sampler_prior, eps_primary);
  out.reconstruction = model.decoder().forward(concat({out.latent, c}, 1));
  return out;
}

ModelOutput ablation_forward(const Model& model, const Batch& batch, const Tensor& eps) {
  require_kind(model, ModelKind::lcpvae_ablation, "ablation_forward");
  check_batch(model, batch);
  check_eps(model, batch.size(), eps, "ablation_forward");
  const Var x = Var::constant(batch.x);
  const Var c = Var::constant(batch.c);
  ModelOutput out;
  out.conditional_posterior = model.conditional_posterior(batch.condition_ids);
  out.primary_posterior = encode(model.encoder(), concat({x, c}, 1));
  out.latent = extended_reparam_sample(out.primary_posterior, *out.conditional_posterior, eps);
  out.reconstruction = model.decoder().forward(concat({out.latent, c}, 1));
  return out;
}

Tensor infer_latent(const Model& model, std::span<const int> ids, const Tensor& eps, SampleMode mode) {
  check_eps(model, ids.size(), eps, "infer_latent");
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= model.num_conditions()) {
      throw ConfigError("condition " + std::to_string(id) + " out of range [0, " +
                        std::to_string(model.num_conditions()) + ")");
    }
  }
  if (mode == SampleMode::prior) {
    if (has_conditional_prior(model.kind())) {
      throw ConfigError("sample mode 'prior' is not available for " + to_string(model.kind()) +
                        "; its latent space is sampled from the conditional posterior");
    }
    return eps;
  }
  if (!has_conditional_prior(model.kind())) {
    throw ConfigError("sample mode 'conditional_posterior' requires lcpvae or lcpvae_ablation, got " +
                      to_string(model.kind()));
  }
  return reparam_sample(model.conditional_posterior(ids), eps).value();
}

Tensor decode_latent(const Model& model, std::span<const int> ids, const Tensor& z) {
  check_eps(model, ids.size(), z, "decode_latent");
  const Var zv = Var::constant(z);
  if (model.kind() == ModelKind::vae) return model.decoder().forward(zv).value();
  const Var c = Var::constant(model.condition_vectors(ids));
  return model.decoder().forward(concat({zv, c}, 1)).value();
}

Tensor infer_sample(const Model& model, std::span<const int> ids, const Tensor& eps, SampleMode mode) {
  return decode_latent(model, ids, infer_latent(model, ids, eps, mode));
}

}  // namespace lcpvae
