#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lcpvae/data.hpp"
#include "lcpvae/model.hpp"

namespace lcpvae {

enum class LatentSource { encoder_posterior, inference_sample };
/// primary: the CVAE/CPVAE latent; csvae: the conditioning-signal latent.
enum class LatentSpace { primary, csvae };

std::string to_string(LatentSource s);
std::string to_string(LatentSpace s);
LatentSource parse_latent_source(std::string_view s);
LatentSpace parse_latent_space(std::string_view s);

struct LatentRow {
  int condition_id = 0;
  LatentSource source = LatentSource::encoder_posterior;
  std::vector<double> z;
};

struct LatentDump {
  std::string model_tag;
  std::uint64_t seed = 0;
  std::vector<LatentRow> rows;

  std::size_t dim() const { return rows.empty() ? 0 : rows.front().z.size(); }
  /// Rows from one source only.
  LatentDump filtered(LatentSource source) const;
};

/// Mean silhouette coefficient with Euclidean distance, labels as clusters.
/// Needs at least two labels with at least two points each.
double silhouette(std::span<const std::vector<double>> points, std::span<const int> labels);
double silhouette(const LatentDump& dump);

/// Mean distance between same-label pairs over mean distance between
/// different-label pairs.
double intra_inter_ratio(std::span<const std::vector<double>> points, std::span<const int> labels);
double intra_inter_ratio(const LatentDump& dump);

struct GeneratedSample {
  int condition_id = 0;
  std::vector<double> output;
};

/// Fraction of outputs whose nearest centroid row is the requested condition.
double condition_accuracy(std::span<const GeneratedSample> generated, const Tensor& centroids);

/// Mean KL per latent dimension of the primary posterior against its prior
/// (N(0, I) for VAE/CVAE, the frozen conditional posterior otherwise).
std::vector<double> per_dim_kl(const Model& model, const Batch& batch);
std::vector<double> per_dim_kl(const Model& model, const Dataset& dataset, Split split);

/// Draws n_samples generations for one condition and returns the mean over
/// output dimensions of the per-dimension standard deviation.
double output_variability(const Model& model, int condition, std::size_t n_samples, std::uint64_t seed);
double output_variability(const Model& model, int condition, std::size_t n_samples, std::uint64_t seed,
                          SampleMode mode);

/// Centers the points and projects them onto the top `out_dims` principal
/// directions. Each direction is oriented so that its largest-magnitude
/// component is positive.
std::vector<std::vector<double>> pca_project(std::span<const std::vector<double>> points, std::size_t out_dims = 2);
std::vector<std::vector<double>> pca_project(const LatentDump& dump, std::size_t out_dims = 2);

/// Generated samples, n per condition, with labels.
std::vector<GeneratedSample> generate_samples(const Model& model, std::size_t n_per_condition, std::uint64_t seed,
                                              SampleMode mode);

struct DumpOptions {
  LatentSpace space = LatentSpace::primary;
  Split split = Split::test;
  std::size_t samples_per_condition = 100;
  std::uint64_t seed = 0;
};

/// Encoder-posterior latents of every sample in the split plus
/// inference-time latents drawn for each condition.
LatentDump collect_latents(const Model& model, const Dataset& dataset, const DumpOptions& options);

struct EvalReport {
  std::string model_tag;
  LatentSpace space = LatentSpace::primary;
  /// Over the inference-time latents.
  double silhouette = 0.0;
  double intra_inter_ratio = 0.0;
  /// Over the encoder-posterior latents.
  double encoder_silhouette = 0.0;
  double condition_accuracy = 0.0;
  std::vector<double> per_dim_kl;
  std::vector<double> per_condition_output_variance;

  nlohmann::json to_json() const;
};

struct EvalOptions {
  DumpOptions dump;
  std::size_t variability_samples = 100;
};

struct Evaluation {
  EvalReport report;
  LatentDump dump;
};

Evaluation evaluate(const Model& model, const Dataset& dataset, const EvalOptions& options);

/// CSV with header condition_id,source,z_0..z_{d-1}.
void write_latent_csv(const std::filesystem::path& path, const LatentDump& dump);
LatentDump read_latent_csv(const std::filesystem::path& path);

/// Standalone 800x800 SVG scatter, one colour per label, with a legend.
std::string scatter_svg(std::span<const std::vector<double>> points, std::span<const int> labels,
                        const std::string& title);

}  // namespace lcpvae
