#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "lcpvae/model.hpp"
#include "lcpvae/tensor.hpp"

namespace lcpvae {

inline constexpr int kDatasetVersion = 1;

/// Parameters of the synthetic condition-labelled corpus.
///
/// Each condition k has a center m_k; a sample is
///   x = m_k + W u + noise,   u ~ N(0, I_factors),
/// with W a seeded [dim, within_factors] matrix shared by every condition.
struct SynthSpec {
  std::size_t conditions = 4;
  std::size_t dim = 16;
  std::size_t n_per_condition = 500;
  double between_scale = 6.0;
  std::size_t within_factors = 2;
  double within_scale = 2.0;
  double noise_scale = 0.1;
  double train_ratio = 0.8;
  double validation_ratio = 0.1;
  // Simulated pretrained speaker embeddings.
  std::size_t embedding_dim = 64;
  double embedding_noise = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

nlohmann::json synth_spec_to_json(const SynthSpec& s);
SynthSpec synth_spec_from_json(const nlohmann::json& j);

enum class Split { train = 0, validation = 1, test = 2 };
std::string to_string(Split split);
Split parse_split(std::string_view s);

struct LabeledSample {
  std::vector<double> x;
  int condition_id = 0;
};

/// Either a one-hot label (exactly one entry equal to 1) or a dense
/// embedding.
struct ConditionVector {
  std::vector<double> values;
  ConditionKind kind = ConditionKind::one_hot;

  void validate() const;
};

/// Simulated pretrained embeddings. `per_sample` holds one jittered vector
/// per dataset sample; `table` is the per-condition average over the
/// training split and `mean`/`std` the matching per-condition statistics.
struct EmbeddingSet {
  Tensor per_sample;
  Tensor table;
  Tensor mean;
  Tensor std;
};

struct Dataset {
  SynthSpec spec;
  std::vector<LabeledSample> samples;
  std::array<std::vector<std::size_t>, 3> splits;
  /// Nearest-centroid accuracy of raw x on the test split, centroids from
  /// the training split.
  double raw_centroid_accuracy = 0.0;
  EmbeddingSet embeddings;

  std::size_t num_conditions() const { return spec.conditions; }
  std::size_t dim() const { return spec.dim; }
  const std::vector<std::size_t>& split(Split s) const { return splits[static_cast<std::size_t>(s)]; }
};

/// Pure function of the spec.
Dataset generate(const SynthSpec& spec);

EmbeddingSet make_embeddings(const Dataset& dataset, std::size_t dim, double noise);

/// [conditions, condition_dim] lookup table: the identity for one-hot, the
/// embedding table otherwise.
Tensor condition_table(const Dataset& dataset, ConditionKind kind);
ConditionVector condition_vector(const Dataset& dataset, int condition_id, ConditionKind kind);

/// Embedding statistics truncated to the first `latent_dim` coordinates,
/// std floored at `std_floor`.
ConditionStats ablation_stats(const EmbeddingSet& embeddings, std::size_t latent_dim, double std_floor = 1e-3);

/// Per-condition mean of raw x over a split, [conditions, dim].
Tensor raw_centroids(const Dataset& dataset, Split split = Split::train);
int nearest_centroid(const Tensor& centroids, std::span<const double> x);
double nearest_centroid_accuracy(const Dataset& dataset, Split eval_split = Split::test);

Batch make_batch(const Dataset& dataset, std::span<const std::size_t> indices, const Tensor& condition_table);

/// JSON-lines: header {version, spec, seed, split_indices,
/// raw_centroid_accuracy}, then {condition_id, x, embedding_id} per sample.
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& path);

/// FNV-1a over the file bytes, as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

}  // namespace lcpvae
