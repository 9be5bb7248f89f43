#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <future>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lcpvae/checkpoint.hpp"
#include "lcpvae/distributions.hpp"
#include "lcpvae/data.hpp"
#include "lcpvae/error.hpp"
#include "lcpvae/eval.hpp"
#include "lcpvae/random.hpp"
#include "lcpvae/training.hpp"

namespace lcpvae::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path output_root() {
  const char* root = std::getenv(kOutputRootEnv);
  return root && *root ? fs::path(root) : fs::path("runs");
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json_file(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string(what) + " is required");
  if (!fs::is_regular_file(path)) throw DataError(std::string(what) + " '" + path + "' does not exist");
}

template <typename T>
void apply(const std::optional<T>& flag, T& target) {
  if (flag) target = *flag;
}

// ---------------------------------------------------------------- gen-data

struct GenDataFlags {
  std::string spec_file;
  std::optional<std::size_t> conditions, dim, n, within_factors, embedding_dim;
  std::optional<double> between, within, noise, train_ratio, validation_ratio, embedding_noise;
  std::optional<std::uint64_t> seed;
  std::string out;
};

int gen_data(const GenDataFlags& f, std::ostream& out) {
  SynthSpec spec;
  if (!f.spec_file.empty()) spec = synth_spec_from_json(read_json_file(f.spec_file));
  apply(f.conditions, spec.conditions);
  apply(f.dim, spec.dim);
  apply(f.n, spec.n_per_condition);
  apply(f.within_factors, spec.within_factors);
  apply(f.embedding_dim, spec.embedding_dim);
  apply(f.between, spec.between_scale);
  apply(f.within, spec.within_scale);
  apply(f.noise, spec.noise_scale);
  apply(f.train_ratio, spec.train_ratio);
  apply(f.validation_ratio, spec.validation_ratio);
  apply(f.embedding_noise, spec.embedding_noise);
  apply(f.seed, spec.seed);
  spec.validate();

  const Dataset dataset = generate(spec);
  const fs::path path = f.out.empty() ? output_root() / "dataset.jsonl" : fs::path(f.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  save_dataset(path, dataset);

  out << "dataset " << path.string() << " (" << dataset.samples.size() << " samples, hash " << file_hash(path)
      << ")\n";
  out << "condition  train  validation  test\n";
  for (std::size_t k = 0; k < dataset.num_conditions(); ++k) {
    out << std::setw(9) << k;
    for (Split s : {Split::train, Split::validation, Split::test}) {
      const auto& idx = dataset.split(s);
      const auto count = std::count_if(idx.begin(), idx.end(), [&](std::size_t i) {
        return dataset.samples[i].condition_id == static_cast<int>(k);
      });
      out << std::setw(s == Split::validation ? 12 : 7) << count;
    }
    out << '\n';
  }
  out << "raw centroid accuracy " << std::fixed << std::setprecision(4) << dataset.raw_centroid_accuracy << '\n';
  return kSuccess;
}

// ------------------------------------------------------------------- train

struct RunFlags {
  std::string config_file;
  std::optional<std::string> model, condition, freeze_scope, anneal_shape, dataset, out;
  std::optional<std::size_t> latent_dim, warmup, anneal_start, epochs, batch_size, log_every;
  std::optional<std::vector<std::size_t>> hidden, csvae_hidden;
  std::optional<double> max_weight, learning_rate;
  std::optional<std::uint64_t> seed;
};

void add_run_flags(CLI::App& cmd, RunFlags& f, bool with_model) {
  cmd.add_option("--config", f.config_file, "JSON run config; flags override its values")->check(CLI::ExistingFile);
  if (with_model) cmd.add_option("--model", f.model, "vae | cvae | lcpvae | lcpvae_ablation");
  cmd.add_option("--condition", f.condition, "one_hot | embedding");
  cmd.add_option("--latent-dim", f.latent_dim);
  cmd.add_option("--hidden", f.hidden, "primary encoder/decoder hidden widths");
  cmd.add_option("--csvae-hidden", f.csvae_hidden, "CSVAE hidden widths");
  cmd.add_option("--freeze-scope", f.freeze_scope, "kl_only | full");
  cmd.add_option("--anneal-shape", f.anneal_shape, "linear | sigmoid");
  cmd.add_option("--warmup", f.warmup, "KL anneal warmup steps");
  cmd.add_option("--anneal-start", f.anneal_start, "first step with non-zero KL weight");
  cmd.add_option("--max-weight", f.max_weight, "final KL weight");
  cmd.add_option("--lr", f.learning_rate, "Adam learning rate");
  cmd.add_option("--epochs", f.epochs);
  cmd.add_option("--batch-size", f.batch_size);
  cmd.add_option("--log-every", f.log_every);
  cmd.add_option("--seed", f.seed, "required, either here or in the config");
  cmd.add_option("--dataset", f.dataset, "dataset file written by gen-data");
  cmd.add_option("--out", f.out, "output directory");
}

RunConfig resolve_run_config(const RunFlags& f) {
  RunConfig c;
  if (!f.config_file.empty()) c = run_config_from_json(read_json_file(f.config_file));
  if (f.model) c.model = parse_model_kind(*f.model);
  if (f.condition) c.condition = parse_condition_kind(*f.condition);
  if (f.freeze_scope) c.freeze_scope = parse_freeze_scope(*f.freeze_scope);
  if (f.anneal_shape) c.anneal.shape = parse_anneal_shape(*f.anneal_shape);
  apply(f.latent_dim, c.latent_dim);
  apply(f.hidden, c.hidden);
  apply(f.csvae_hidden, c.csvae_hidden);
  apply(f.warmup, c.anneal.warmup_steps);
  apply(f.anneal_start, c.anneal.start_step);
  apply(f.max_weight, c.anneal.max_weight);
  apply(f.learning_rate, c.optimizer.learning_rate);
  apply(f.epochs, c.epochs);
  apply(f.batch_size, c.batch_size);
  apply(f.log_every, c.log_every);
  if (f.seed) c.seed = *f.seed;
  if (f.dataset) c.dataset_path = *f.dataset;
  if (f.out) c.output_dir = *f.out;
  c.validate();
  require_file(c.dataset_path, "dataset");
  return c;
}

void print_loss(std::ostream& out, const char* label, const LossBreakdown& l) {
  out << label << " total " << l.total << " (recon " << l.recon_primary << ", kl " << l.kl_primary;
  if (l.recon_csvae != 0.0 || l.kl_csvae != 0.0) out << ", csvae recon " << l.recon_csvae << ", csvae kl " << l.kl_csvae;
  out << ")\n";
}

int train_command(const RunFlags& f, std::ostream& out) {
  RunConfig c = resolve_run_config(f);
  if (c.output_dir.empty()) {
    c.output_dir = (output_root() / (to_string(c.model) + "-seed" + std::to_string(*c.seed))).string();
  }
  const Dataset dataset = load_dataset(c.dataset_path);
  const RunArtifacts run = train(c, dataset);
  out << to_string(c.model) << ": " << run.steps << " steps, artifacts in " << c.output_dir << '\n'
      << std::setprecision(6);
  print_loss(out, "initial", run.initial_eval);
  print_loss(out, "final  ", run.final_eval);
  return kSuccess;
}

// -------------------------------------------------------------------- eval

struct EvalFlags {
  std::string checkpoint, dataset, out;
  std::string space = "primary";
  std::string split = "test";
  std::size_t samples = 100;
  std::optional<std::uint64_t> seed;
};

std::string scatter_for(const LatentDump& dump, const std::string& title) {
  std::vector<int> labels;
  std::vector<std::vector<double>> pts;
  for (const auto& r : dump.rows) labels.push_back(r.condition_id);
  if (dump.dim() >= 2) {
    pts = pca_project(dump, 2);
  } else {
    for (const auto& r : dump.rows) pts.push_back({r.z.at(0), 0.0});
  }
  return scatter_svg(pts, labels, title);
}

int eval_command(const EvalFlags& f, std::ostream& out) {
  require_file(f.checkpoint, "checkpoint");
  require_file(f.dataset, "dataset");
  const Checkpoint ckpt = load_checkpoint(f.checkpoint);
  const Dataset dataset = load_dataset(f.dataset);

  EvalOptions options;
  options.dump.space = parse_latent_space(f.space);
  options.dump.split = parse_split(f.split);
  options.dump.samples_per_condition = f.samples;
  options.dump.seed = f.seed.value_or(ckpt.seed);
  options.variability_samples = f.samples;
  const fs::path dir =
      f.out.empty() ? fs::path(f.checkpoint).parent_path() / ("eval-" + f.space) : fs::path(f.out);

  const Evaluation ev = evaluate(ckpt.model, dataset, options);
  fs::create_directories(dir);
  write_json_file(dir / "eval_config.json", {{"checkpoint", f.checkpoint},
                                             {"dataset", f.dataset},
                                             {"dataset_hash", file_hash(f.dataset)},
                                             {"space", f.space},
                                             {"split", f.split},
                                             {"samples_per_condition", f.samples},
                                             {"seed", options.dump.seed}});
  write_json_file(dir / "eval_report.json", ev.report.to_json());
  write_latent_csv(dir / "latents.csv", ev.dump);
  const LatentDump inferred = ev.dump.filtered(LatentSource::inference_sample);
  write_text_file(dir / "latents.svg",
                  scatter_for(inferred, ev.report.model_tag + " " + f.space + " latent samples (PCA)"));

  out << ev.report.model_tag << " (" << f.space << " space) -> " << dir.string() << '\n'
      << std::fixed << std::setprecision(4) << "silhouette " << ev.report.silhouette << ", encoder silhouette "
      << ev.report.encoder_silhouette << ", condition accuracy " << ev.report.condition_accuracy << '\n';
  return kSuccess;
}

// ------------------------------------------------------------------ sample

struct SampleFlags {
  std::string checkpoint, out, mode;
  int condition = 0;
  std::size_t n = 1;
  std::optional<std::uint64_t> seed;
};

int sample_command(const SampleFlags& f, std::ostream& out) {
  require_file(f.checkpoint, "checkpoint");
  const Checkpoint ckpt = load_checkpoint(f.checkpoint);
  const Model& model = ckpt.model;
  if (f.condition < 0 || static_cast<std::size_t>(f.condition) >= model.num_conditions()) {
    throw ConfigError("condition " + std::to_string(f.condition) + " is outside [0, " +
                      std::to_string(model.num_conditions()) + ")");
  }
  if (f.n == 0) throw ConfigError("--n must be at least 1");
  const SampleMode mode = f.mode.empty() ? default_sample_mode(model.kind()) : parse_sample_mode(f.mode);
  const std::uint64_t seed = f.seed.value_or(ckpt.seed);

  auto rng = seeded_stream(seed, 31, static_cast<std::uint64_t>(f.condition));
  const std::vector<int> ids(f.n, f.condition);
  const Tensor eps = standard_normal(f.n, model.config().latent_dim, rng);
  const Tensor samples = infer_sample(model, ids, eps, mode);

  const fs::path path = f.out.empty() ? fs::path(f.checkpoint).parent_path() /
                                            ("samples-c" + std::to_string(f.condition) + ".csv")
                                      : fs::path(f.out);
  std::ostringstream csv;
  csv << "condition_id";
  for (std::size_t j = 0; j < samples.cols(); ++j) csv << ",x_" << j;
  csv << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < samples.rows(); ++i) {
    csv << f.condition;
    for (std::size_t j = 0; j < samples.cols(); ++j) csv << ',' << samples.at(i, j);
    csv << '\n';
  }
  write_text_file(path, csv.str());
  out << f.n << " samples for condition " << f.condition << " (" << to_string(mode) << ") -> " << path.string()
      << '\n';
  return kSuccess;
}

// ----------------------------------------------------------------- compare

struct CompareEntry {
  ModelKind kind;
  RunArtifacts run;
  EvalReport report;
  std::optional<double> csvae_silhouette;
};

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

json loss_json(const LossBreakdown& l) {
  return {{"total", l.total},
          {"recon_primary", l.recon_primary},
          {"recon_csvae", l.recon_csvae},
          {"kl_primary", l.kl_primary},
          {"kl_csvae", l.kl_csvae},
          {"lambda", l.lambda}};
}

json entry_json(const CompareEntry& e) {
  json j = {{"silhouette", e.report.silhouette},
            {"encoder_silhouette", e.report.encoder_silhouette},
            {"intra_inter_ratio", e.report.intra_inter_ratio},
            {"condition_accuracy", e.report.condition_accuracy},
            {"variability", e.report.per_condition_output_variance},
            {"mean_variability", mean(e.report.per_condition_output_variance)},
            {"per_dim_kl", e.report.per_dim_kl},
            {"final_losses", loss_json(e.run.final_eval)},
            {"initial_losses", loss_json(e.run.initial_eval)},
            {"condition", to_string(e.run.config.condition)}};
  if (e.csvae_silhouette) j["csvae_silhouette"] = *e.csvae_silhouette;
  return j;
}

json delta_json(const CompareEntry& a, const CompareEntry& b) {
  return {{"silhouette", a.report.silhouette - b.report.silhouette},
          {"condition_accuracy", a.report.condition_accuracy - b.report.condition_accuracy},
          {"mean_variability",
           mean(a.report.per_condition_output_variance) - mean(b.report.per_condition_output_variance)},
          {"final_total_loss", a.run.final_eval.total - b.run.final_eval.total}};
}

int compare_command(const RunFlags& f, std::ostream& out) {
  const RunConfig base = resolve_run_config(f);
  const fs::path dir = base.output_dir.empty() ? output_root() / ("compare-seed" + std::to_string(*base.seed))
                                               : fs::path(base.output_dir);
  const Dataset dataset = load_dataset(base.dataset_path);
  const std::uint64_t seed = *base.seed;

  auto run_one = [&](ModelKind kind) {
    RunConfig c = base;
    c.model = kind;
    c.output_dir = (dir / to_string(kind)).string();
    CompareEntry e{kind, train(c, dataset), {}, std::nullopt};
    EvalOptions options;
    options.dump.seed = seed;
    const Evaluation ev = evaluate(e.run.model, dataset, options);
    e.report = ev.report;
    write_json_file(fs::path(c.output_dir) / "eval_report.json", ev.report.to_json());
    write_latent_csv(fs::path(c.output_dir) / "latents.csv", ev.dump);
    const LatentDump inferred = ev.dump.filtered(LatentSource::inference_sample);
    write_text_file(fs::path(c.output_dir) / "latents.svg",
                    scatter_for(inferred, to_string(kind) + " latent samples (PCA)"));
    if (has_csvae(kind)) {
      options.dump.space = LatentSpace::csvae;
      e.csvae_silhouette = evaluate(e.run.model, dataset, options).report.silhouette;
    }
    return e;
  };

  // Each model owns its graph and seed streams, so the three runs are independent.
  const ModelKind kinds[] = {ModelKind::cvae, ModelKind::lcpvae, ModelKind::lcpvae_ablation};
  std::vector<std::future<CompareEntry>> jobs;
  for (ModelKind k : kinds) jobs.push_back(std::async(std::launch::async, run_one, k));
  std::vector<CompareEntry> entries;
  for (auto& j : jobs) entries.push_back(j.get());

  json models = json::object();
  for (const auto& e : entries) models[to_string(e.kind)] = entry_json(e);
  const json result = {{"dataset", base.dataset_path},
                       {"dataset_hash", file_hash(base.dataset_path)},
                       {"seed", seed},
                       {"config", run_config_to_json(base)},
                       {"models", models},
                       {"deltas",
                        {{"lcpvae-cvae", delta_json(entries[1], entries[0])},
                         {"lcpvae-lcpvae_ablation", delta_json(entries[1], entries[2])},
                         {"lcpvae_ablation-cvae", delta_json(entries[2], entries[0])}}}};
  write_json_file(dir / "compare.json", result);

  out << "model             silhouette  accuracy  variability\n" << std::fixed << std::setprecision(4);
  for (const auto& e : entries) {
    out << std::left << std::setw(18) << to_string(e.kind) << std::right << std::setw(10) << e.report.silhouette
        << std::setw(10) << e.report.condition_accuracy << std::setw(13)
        << mean(e.report.per_condition_output_variance) << '\n';
  }
  out << "written " << (dir / "compare.json").string() << '\n';
  return kSuccess;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conditional VAE experiments with learned conditional priors", "lcpvae"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "lcpvae 0.1.0");

  GenDataFlags gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic condition-labelled dataset");
  gen_cmd->add_option("--spec", gen.spec_file, "JSON SynthSpec; flags override its values")->check(CLI::ExistingFile);
  gen_cmd->add_option("--k", gen.conditions, "number of conditions");
  gen_cmd->add_option("--dim", gen.dim, "feature dimension");
  gen_cmd->add_option("--n", gen.n, "samples per condition");
  gen_cmd->add_option("--between", gen.between, "minimum distance between condition centers");
  gen_cmd->add_option("--within-factors", gen.within_factors);
  gen_cmd->add_option("--within", gen.within, "within-condition factor scale");
  gen_cmd->add_option("--noise", gen.noise, "isotropic noise scale");
  gen_cmd->add_option("--train-ratio", gen.train_ratio);
  gen_cmd->add_option("--validation-ratio", gen.validation_ratio);
  gen_cmd->add_option("--embedding-dim", gen.embedding_dim);
  gen_cmd->add_option("--embedding-noise", gen.embedding_noise);
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--out", gen.out, "dataset file");

  RunFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "Train one model");
  add_run_flags(*train_cmd, train_flags, true);

  EvalFlags eval_flags;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint and dump its latents");
  eval_cmd->add_option("--checkpoint", eval_flags.checkpoint)->required();
  eval_cmd->add_option("--dataset", eval_flags.dataset)->required();
  eval_cmd->add_option("--dump-space", eval_flags.space, "primary | csvae")->capture_default_str();
  eval_cmd->add_option("--split", eval_flags.split, "train | validation | test")->capture_default_str();
  eval_cmd->add_option("--samples", eval_flags.samples, "inference samples per condition")->capture_default_str();
  eval_cmd->add_option("--seed", eval_flags.seed, "defaults to the checkpoint seed");
  eval_cmd->add_option("--out", eval_flags.out, "output directory");

  SampleFlags sample_flags;
  auto* sample_cmd = app.add_subcommand("sample", "Generate feature vectors for one condition");
  sample_cmd->add_option("--checkpoint", sample_flags.checkpoint)->required();
  sample_cmd->add_option("--condition", sample_flags.condition)->required();
  sample_cmd->add_option("--n", sample_flags.n)->capture_default_str();
  sample_cmd->add_option("--seed", sample_flags.seed, "defaults to the checkpoint seed");
  sample_cmd->add_option("--mode", sample_flags.mode, "prior | conditional_posterior");
  sample_cmd->add_option("--out", sample_flags.out, "CSV file");

  RunFlags compare_flags;
  auto* compare_cmd = app.add_subcommand("compare", "Train and compare cvae, lcpvae and lcpvae_ablation");
  add_run_flags(*compare_cmd, compare_flags, false);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kConfigError;
  }

  try {
    if (*gen_cmd) return gen_data(gen, out);
    if (*train_cmd) return train_command(train_flags, out);
    if (*eval_cmd) return eval_command(eval_flags, out);
    if (*sample_cmd) return sample_command(sample_flags, out);
    if (*compare_cmd) return compare_command(compare_flags, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const NumericalError& e) {
    err << "numerical abort: " << e.what() << '\n';
    return kNumericalAbort;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}

}  // namespace lcpvae::cli
