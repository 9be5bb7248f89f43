#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "lcpvae/checkpoint.hpp"
#include "lcpvae/error.hpp"
#include "lcpvae/grad_check.hpp"
#include "lcpvae/training.hpp"
#include "loss_oracle.hpp"
#include "test_support.hpp"

namespace lcpvae {
namespace {

using nlohmann::json;

SynthSpec small_spec() {
  SynthSpec s;
  s.n_per_condition = 40;
  s.embedding_dim = 16;
  return s;
}

const Dataset& small_dataset() {
  static const Dataset d = generate(small_spec());
  return d;
}

const Dataset& default_dataset() {
  static const Dataset d = generate(SynthSpec{});
  return d;
}

RunConfig small_config(ModelKind kind, std::size_t epochs = 2) {
  RunConfig c;
  c.model = kind;
  c.seed = 5;
  c.epochs = epochs;
  c.batch_size = 16;
  c.log_every = 3;
  c.hidden = {8};
  c.csvae_hidden = {6};
  c.anneal.start_step = 2;
  c.anneal.warmup_steps = 10;
  return c;
}

constexpr ModelKind kAllKinds[] = {ModelKind::vae, ModelKind::cvae, ModelKind::lcpvae, ModelKind::lcpvae_ablation};

// ------------------------------------------------------------------ anneal

TEST(Anneal, EndpointsAndMidpoint) {
  AnnealSchedule s;
  s.start_step = 100;
  s.warmup_steps = 400;
  s.max_weight = 0.8;
  EXPECT_EQ(anneal_weight(s, 0), 0.0);
  EXPECT_EQ(anneal_weight(s, 100), 0.0);
  EXPECT_DOUBLE_EQ(anneal_weight(s, 300), 0.4);
  EXPECT_DOUBLE_EQ(anneal_weight(s, 500), 0.8);
  EXPECT_DOUBLE_EQ(anneal_weight(s, 100000), 0.8);
  s.shape = AnnealShape::sigmoid;
  EXPECT_EQ(anneal_weight(s, 100), 0.0);
  EXPECT_NEAR(anneal_weight(s, 300), 0.4, 1e-12) << "logistic is symmetric about the midpoint";
  EXPECT_DOUBLE_EQ(anneal_weight(s, 500), 0.8);
}

TEST(Anneal, MonotoneAndBoundedForEveryShape) {
  for (AnnealShape shape : {AnnealShape::linear, AnnealShape::sigmoid}) {
    for (std::size_t warmup : {1u, 7u, 1000u}) {
      AnnealSchedule s{shape, warmup, 13, 0.6};
      double prev = 0.0;
      for (std::size_t step = 0; step < 1200; ++step) {
        const double w = anneal_weight(s, step);
        ASSERT_GE(w, prev);
        ASSERT_LE(w, 0.6);
        prev = w;
      }
    }
  }
}

TEST(Anneal, ValidationRejectsBadSchedules) {
  EXPECT_THROW((AnnealSchedule{AnnealShape::linear, 0, 0, 1.0}.validate()), ConfigError);
  EXPECT_THROW((AnnealSchedule{AnnealShape::linear, 10, 0, 0.0}.validate()), ConfigError);
  EXPECT_THROW((AnnealSchedule{AnnealShape::linear, 10, 0, 1.5}.validate()), ConfigError);
}

// ------------------------------------------------------------------ losses

ModelOutput fake_output(const Tensor& recon, DiagGaussian primary) {
  ModelOutput o;
  o.reconstruction = Var::constant(recon);
  o.primary_posterior = std::move(primary);
  o.latent = Var::constant(Tensor::zeros({recon.rows(), o.primary_posterior.dim()}));
  return o;
}

TEST(CvaeLoss, PerfectReconstructionAtPriorIsZero) {
  const Tensor x = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  const auto loss = cvae_loss(fake_output(x, DiagGaussian::standard(2, 2)), x, 1.0).values();
  EXPECT_EQ(loss.total, 0.0);
}

TEST(CvaeLoss, ZeroWeightLeavesReconstructionOnly) {
  const Tensor x = Tensor::matrix(1, 2, {1, 2});
  const auto q = DiagGaussian::constant(Tensor::row({3, -1}), Tensor::row({0.5, 0.2}));
  const auto loss = cvae_loss(fake_output(Tensor::row({0, 0}), q), x, 0.0).values();
  EXPECT_EQ(loss.total, loss.recon_primary);
  EXPECT_DOUBLE_EQ(loss.recon_primary, 5.0);
}

TEST(CvaeLoss, HandAssembledValue) {
  const Tensor x = Tensor::matrix(2, 2, {1, 2, 3, 4});
  const Tensor recon = Tensor::matrix(2, 2, {1.5, 2, 2, 4.5});
  const auto q = DiagGaussian::constant(Tensor::matrix(2, 1, {1, 0}), Tensor::matrix(2, 1, {0, std::log(2.0)}));
  const double lambda = 0.3;
  const auto loss = cvae_loss(fake_output(recon, q), x, lambda).values();
  // Squared error summed over features, averaged over rows.
  const double mse = (0.25 + 0.0 + 1.0 + 0.25) / 2.0;
  const double kl = (0.5 * 1.0 + 0.5 * (4.0 - 1.0 - 2.0 * std::log(2.0))) / 2.0;
  EXPECT_DOUBLE_EQ(loss.recon_primary, mse);
  EXPECT_NEAR(loss.kl_primary, kl, 1e-15);
  EXPECT_NEAR(loss.total, lambda * kl + mse, 1e-15);
}

TEST(LcpvaeLoss, FixedPointsOfTheKlTerms) {
  const Tensor x = Tensor::matrix(1, 2, {1, 2});
  const Tensor c = Tensor::matrix(1, 3, {0, 1, 0});
  ModelOutput o = fake_output(x, DiagGaussian::standard(1, 2));
  o.conditional_posterior = DiagGaussian::constant(Tensor::row({2.0, -1.0}), Tensor::row({-0.5, 0.3}));
  o.csvae_reconstruction = Var::constant(c);
  o.csvae_latent = Var::constant(Tensor::zeros({1, 2}));
  auto loss = lcpvae_loss(o, x, c, 1.0).values();
  EXPECT_NEAR(loss.kl_primary, 0.0, 1e-15);
  EXPECT_GT(loss.kl_csvae, 0.0);
  o.conditional_posterior = DiagGaussian::standard(1, 2);
  loss = lcpvae_loss(o, x, c, 1.0).values();
  EXPECT_EQ(loss.kl_primary, 0.0);
  EXPECT_EQ(loss.kl_csvae, 0.0);
  EXPECT_EQ(loss.total, 0.0);
}

void zero_grads(const std::vector<NamedParameter>& params) {
  for (const auto& p : params) {
    Var v = p.var;
    v.zero_grad();
  }
}

double abs_grad_sum(const std::vector<NamedParameter>& params, const std::string& prefix) {
  double s = 0.0;
  for (const auto& p : params) {
    if (p.name.rfind(prefix, 0) == 0) {
      for (double g : p.var.grad().data()) s += std::abs(g);
    }
  }
  return s;
}

TEST(LcpvaeLoss, CsvaeGradientsComeFromEveryTermButThePrimaryKl) {
  RunConfig c = small_config(ModelKind::lcpvae);
  const Model m = build_model(c, small_dataset());
  std::vector<std::size_t> idx(small_dataset().split(Split::train).begin(),
                               small_dataset().split(Split::train).begin() + 4);
  const Batch b = make_batch(small_dataset(), idx, m.condition_table());
  std::mt19937_64 rng(3);
  const BatchNoise noise = draw_noise(4, c.latent_dim, rng);
  const auto out = m.forward(b, noise.primary, noise.conditional);
  const auto loss = lcpvae_loss(out, b.x, b.c, 0.7);
  const auto csvae = m.csvae_parameters();
  const auto all = m.parameters();

  zero_grads(all);
  backward(loss.kl_primary);
  EXPECT_EQ(abs_grad_sum(csvae, "csvae"), 0.0);
  EXPECT_GT(abs_grad_sum(m.parameters(), "encoder"), 0.0);
  zero_grads(all);
  backward(loss.kl_csvae);
  EXPECT_GT(abs_grad_sum(csvae, "csvae_encoder"), 0.0);
  zero_grads(all);
  backward(loss.recon_csvae);
  EXPECT_GT(abs_grad_sum(csvae, "csvae_encoder"), 0.0);
  EXPECT_GT(abs_grad_sum(csvae, "csvae_decoder"), 0.0);
  zero_grads(all);
  backward(loss.recon_primary);
  EXPECT_GT(abs_grad_sum(csvae, "csvae_encoder"), 0.0);
  EXPECT_EQ(abs_grad_sum(csvae, "csvae_decoder"), 0.0) << "the CSVAE decoder only feeds its own reconstruction";
}

TEST(ModelLoss, TotalRecomposesExactlyForEveryVariant) {
  for (ModelKind kind : kAllKinds) {
    const RunConfig c = small_config(kind);
    const Model m = build_model(c, small_dataset());
    const Batch b = make_batch(small_dataset(), small_dataset().split(Split::validation), m.condition_table());
    std::mt19937_64 rng(9);
    const BatchNoise noise = draw_noise(b.size(), c.latent_dim, rng);
    const auto l = model_loss(m, m.forward(b, noise.primary, noise.conditional), b, 0.37).values();
    EXPECT_EQ(l.total, 0.37 * (l.kl_csvae + l.kl_primary) + l.recon_csvae + l.recon_primary) << to_string(kind);
    if (!has_csvae(kind)) {
      EXPECT_EQ(l.kl_csvae, 0.0);
      EXPECT_EQ(l.recon_csvae, 0.0);
    }
  }
}

TEST(ModelLoss, FullObjectivePassesGradCheckForEveryVariant) {
  for (ModelKind kind : kAllKinds) {
    const RunConfig c = small_config(kind);
    const Model m = build_model(c, small_dataset());
    std::vector<std::size_t> idx(small_dataset().split(Split::train).begin(),
                                 small_dataset().split(Split::train).begin() + 4);
    const Batch b = make_batch(small_dataset(), idx, m.condition_table());
    std::mt19937_64 rng(10);
    const BatchNoise noise = draw_noise(4, c.latent_dim, rng);
    const auto params = m.parameters();
    std::vector<Var> vars;
    for (const auto& p : params) vars.push_back(p.var);

    const auto oracle = testing::gradient_oracle(m, b, noise, 0.8);
    const auto r = grad_check(oracle, vars);
    EXPECT_LT(r.max_relative_error, 1e-5) << to_string(kind) << " " << params[r.parameter].name << "[" << r.element
                                          << "] analytic " << r.analytic << " numeric " << r.numeric;

    // The training graph produces the same gradients as the oracle.
    zero_grads(params);
    backward(oracle());
    std::vector<Tensor> expected;
    for (const auto& p : params) expected.push_back(p.var.grad());
    zero_grads(params);
    backward(model_loss(m, m.forward(b, noise.primary, noise.conditional), b, 0.8).total);
    for (std::size_t k = 0; k < params.size(); ++k) {
      for (std::size_t i = 0; i < expected[k].size(); ++i) {
        ASSERT_NEAR(params[k].var.grad()[i], expected[k][i], 1e-12 * std::max(1.0, std::abs(expected[k][i])))
            << to_string(kind) << " " << params[k].name;
      }
    }
  }
}

// --------------------------------------------------------------- optimizer

TEST(Optimizer, ZeroGradientLeavesParametersUnchanged) {
  std::vector<NamedParameter> p{{"w", Var::parameter(Tensor::row({1.0, -2.0}))}};
  OptimizerState state(OptimizerSettings{}, p);
  const std::vector<Tensor> g{Tensor::zeros({1, 2})};
  for (int i = 0; i < 5; ++i) optimizer_step(state, p, g);
  EXPECT_EQ(p[0].var.value().vector(), (std::vector<double>{1.0, -2.0}));
}

TEST(Optimizer, FirstBiasCorrectedStepMovesByTheLearningRate) {
  std::vector<NamedParameter> p{{"w", Var::parameter(Tensor::scalar(3.0))}};
  OptimizerSettings s;
  s.learning_rate = 0.1;
  OptimizerState state(s, p);
  optimizer_step(state, p, std::vector<Tensor>{Tensor::scalar(1.0)});
  // m_hat = 1, v_hat = 1: step = lr / (1 + epsilon).
  EXPECT_NEAR(p[0].var.value().item(), 3.0 - 0.1 / (1.0 + 1e-8), 1e-15);
}

TEST(Optimizer, RejectsBadGradientsWithoutTouchingAnything) {
  std::vector<NamedParameter> p{{"a", Var::parameter(Tensor::row({1.0}))}, {"b", Var::parameter(Tensor::row({2.0}))}};
  OptimizerState state(OptimizerSettings{}, p);
  std::vector<Tensor> g{Tensor::row({0.5}), Tensor::row({0.5})};
  g[1].mutable_data()[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(optimizer_step(state, p, g), NumericalError);
  EXPECT_EQ(p[0].var.value()[0], 1.0);
  EXPECT_EQ(state.step, 0u);
  EXPECT_THROW(optimizer_step(state, p, std::vector<Tensor>{Tensor::row({1.0}), Tensor::row({1.0, 2.0})}),
               ShapeError);
}

TEST(Optimizer, IdenticalRunsAreBitIdentical) {
  auto run = [] {
    std::vector<NamedParameter> p{{"w", Var::parameter(Tensor::row({0.3, -0.7, 1.1}))}};
    OptimizerState state(OptimizerSettings{}, p);
    for (int step = 0; step < 100; ++step) {
      backward(sum(square(p[0].var) * tanh(p[0].var)));
      optimizer_step(state, p, std::vector<Tensor>{p[0].var.grad()});
    }
    return p[0].var.value();
  };
  EXPECT_TRUE(run().identical(run()));
}

// -------------------------------------------------------------------- loop

TEST(Train, ZeroEpochsPersistsTheInitialWeights) {
  testing::TempDir dir("train0");
  RunConfig c = small_config(ModelKind::lcpvae, 0);
  c.output_dir = dir.path().string();
  const RunArtifacts art = train(c, small_dataset());
  EXPECT_EQ(art.steps, 0u);
  EXPECT_TRUE(art.log.empty());
  const auto fresh = snapshot_parameters(build_model(c, small_dataset()));
  const auto saved = snapshot_parameters(load_checkpoint(dir / "checkpoint.json").model);
  ASSERT_EQ(fresh.size(), saved.size());
  for (std::size_t i = 0; i < fresh.size(); ++i) EXPECT_TRUE(fresh[i].identical(saved[i]));
}

TEST(Train, WritesArtifactsAndEchoesTheResolvedConfig) {
  testing::TempDir dir("train-art");
  RunConfig c = small_config(ModelKind::cvae);
  c.output_dir = dir.path().string();
  const RunArtifacts art = train(c, small_dataset());
  for (const char* f : {"config.json", "metrics.jsonl", "checkpoint.json", "final_metrics.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
  }
  std::ifstream cfg(dir / "config.json");
  EXPECT_EQ(json::parse(cfg), run_config_to_json(c));

  std::ifstream log(dir / "metrics.jsonl");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(log, line)) {
    const json r = json::parse(line);
    for (const char* key : {"step", "epoch", "lambda", "total", "recon_primary", "recon_csvae", "kl_primary", "kl_csvae"}) {
      EXPECT_TRUE(r.contains(key)) << key;
    }
    // Doubles round-trip through the log, so the identity survives serialisation.
    EXPECT_EQ(r["total"].get<double>(), r["lambda"].get<double>() * (r["kl_csvae"].get<double>() + r["kl_primary"].get<double>()) +
                                            r["recon_csvae"].get<double>() + r["recon_primary"].get<double>());
    ++lines;
  }
  EXPECT_EQ(lines, art.log.size());
  EXPECT_EQ(art.log.back().step + 1, art.steps) << "the final step is always logged";
}

TEST(Train, LossIdentityAndFreezeHoldAtEveryStep) {
  RunConfig c = small_config(ModelKind::lcpvae, 3);
  std::size_t checked = 0;
  train(c, small_dataset(), [&](const StepContext& ctx) {
    const auto l = ctx.loss.values();
    ASSERT_EQ(l.total, l.lambda * (l.kl_csvae + l.kl_primary) + l.recon_csvae + l.recon_primary);
    zero_grads(ctx.model.parameters());
    backward(ctx.loss.kl_primary);
    for (const auto& p : ctx.model.csvae_parameters()) {
      for (double g : p.var.grad().data()) ASSERT_EQ(g, 0.0);
    }
    ++checked;
  });
  EXPECT_EQ(checked, 3u * ((small_dataset().split(Split::train).size() + 15) / 16));
}

TEST(Train, IdenticalConfigsGiveBitIdenticalArtifacts) {
  testing::TempDir a("det-a"), b("det-b");
  for (ModelKind kind : kAllKinds) {
    RunConfig c = small_config(kind);
    c.output_dir = (a / "run").string();
    const RunArtifacts first = train(c, small_dataset());
    const std::string log1 = testing::slurp(a / "run" / "metrics.jsonl");
    const std::string ckpt1 = testing::slurp(a / "run" / "checkpoint.json");
    const RunArtifacts second = train(c, small_dataset());
    EXPECT_EQ(log1, testing::slurp(a / "run" / "metrics.jsonl")) << to_string(kind);
    EXPECT_EQ(ckpt1, testing::slurp(a / "run" / "checkpoint.json")) << to_string(kind);
    const auto p1 = snapshot_parameters(first.model), p2 = snapshot_parameters(second.model);
    for (std::size_t i = 0; i < p1.size(); ++i) EXPECT_TRUE(p1[i].identical(p2[i]));
  }
}

TEST(Train, NumericalFailureSavesLastGoodWeightsAndAborts) {
  testing::TempDir dir("abort");
  RunConfig c = small_config(ModelKind::cvae);
  c.output_dir = dir.path().string();
  std::vector<Tensor> before_failure;
  EXPECT_THROW(train(c, small_dataset(),
                     [&](const StepContext& ctx) {
                       if (ctx.step == 4) {
                         before_failure = snapshot_parameters(ctx.model);
                         throw NumericalError("injected non-finite loss");
                       }
                     }),
               NumericalAbort);
  const auto saved = snapshot_parameters(load_checkpoint(dir / "checkpoint_last_good.json").model);
  ASSERT_EQ(saved.size(), before_failure.size());
  for (std::size_t i = 0; i < saved.size(); ++i) EXPECT_TRUE(saved[i].identical(before_failure[i]));
  EXPECT_TRUE(std::filesystem::exists(dir / "metrics.jsonl"));
}

TEST(Train, RejectsMissingSeedAndEmptyData) {
  RunConfig c = small_config(ModelKind::cvae);
  c.seed.reset();
  EXPECT_THROW(train(c, small_dataset()), ConfigError);
  Dataset empty = small_dataset();
  empty.splits[0].clear();
  EXPECT_THROW(train(small_config(ModelKind::cvae), empty), DataError);
}

TEST(Train, CvaeDescendsOnTheDefaultDataset) {
  RunConfig c;
  c.model = ModelKind::cvae;
  c.seed = 0;
  c.epochs = 30;
  const RunArtifacts art = train(c, default_dataset());
  EXPECT_LT(art.final_eval.total, art.initial_eval.total);
}

TEST(Train, LcpvaeSeparatesCsvaePosteriorMeans) {
  RunConfig c;
  c.model = ModelKind::lcpvae;
  c.seed = 0;
  const RunArtifacts art = train(c, default_dataset());
  const std::vector<int> ids{0, 1, 2, 3};
  const auto q = art.model.conditional_posterior(ids);
  double max_sigma = 0.0;
  for (double v : q.log_std.value().data()) max_sigma = std::max(max_sigma, std::exp(v));
  for (std::size_t a = 0; a < 4; ++a) {
    for (std::size_t b = a + 1; b < 4; ++b) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < q.dim(); ++j) {
        const double d = q.mean.value().at(a, j) - q.mean.value().at(b, j);
        d2 += d * d;
      }
      EXPECT_GE(std::sqrt(d2), 2.0 * max_sigma) << "conditions " << a << ", " << b;
    }
  }
}

TEST(EvaluateLoss, IsDeterministicForAFixedSeed) {
  const RunConfig c = small_config(ModelKind::lcpvae_ablation);
  const Model m = build_model(c, small_dataset());
  const auto a = evaluate_loss(m, small_dataset(), Split::validation, 1.0, 3);
  const auto b = evaluate_loss(m, small_dataset(), Split::validation, 1.0, 3);
  EXPECT_EQ(a.total, b.total);
  EXPECT_NE(a.total, evaluate_loss(m, small_dataset(), Split::validation, 1.0, 4).total);
}

// ------------------------------------------------------------------ config

TEST(RunConfigJson, RoundTripsAndOverridesOnlyPresentKeys) {
  RunConfig c = small_config(ModelKind::lcpvae_ablation);
  c.anneal.shape = AnnealShape::sigmoid;
  c.freeze_scope = FreezeScope::full;
  c.dataset_path = "data.jsonl";
  const json j = run_config_to_json(c);
  EXPECT_EQ(run_config_to_json(run_config_from_json(j)), j);

  const RunConfig partial = run_config_from_json(json{{"epochs", 7}, {"anneal", {{"max_weight", 0.5}}}}, c);
  EXPECT_EQ(partial.epochs, 7u);
  EXPECT_EQ(partial.anneal.max_weight, 0.5);
  EXPECT_EQ(partial.anneal.shape, AnnealShape::sigmoid);
  EXPECT_EQ(partial.model, ModelKind::lcpvae_ablation);
}

TEST(RunConfigJson, RejectsUnknownKeysWrongVersionAndBadValues) {
  EXPECT_THROW(run_config_from_json(json{{"epoch", 3}}), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"anneal", {{"warmup", 3}}}}), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"version", 2}}), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"model", "gan"}}), ConfigError);
  EXPECT_THROW(run_config_from_json(json{{"epochs", "many"}}), ConfigError);
  EXPECT_THROW(run_config_from_json(json::array()), ConfigError);
  RunConfig c;
  EXPECT_THROW(c.validate(), ConfigError) << "no seed";
  c.seed = 1;
  EXPECT_NO_THROW(c.validate());
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

}  // namespace
}  // namespace lcpvae
