#include "lcpvae/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

#include "lcpvae/error.hpp"
#include "lcpvae/random.hpp"

namespace lcpvae {

using nlohmann::json;

namespace {

constexpr int kMaxCenterAttempts = 1000;

// Independent stream per purpose so that, e.g., changing the embedding
// settings never perturbs the observations.
std::mt19937_64 stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index = 0) {
  return seeded_stream(seed, purpose, index);
}

enum Purpose : std::uint64_t { kCenters = 1, kLoading = 2, kSamples = 3, kSplits = 4, kEmbedBase = 5, kEmbedJitter = 6 };

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return d;
}

std::array<std::size_t, 3> split_counts(const SynthSpec& s) {
  const double n = static_cast<double>(s.n_per_condition);
  const auto n_train = static_cast<std::size_t>(std::llround(n * s.train_ratio));
  const auto n_val = static_cast<std::size_t>(std::llround(n * s.validation_ratio));
  if (n_train < 1 || n_val < 1 || n_train + n_val >= s.n_per_condition) {
    throw ConfigError("n_per_condition " + std::to_string(s.n_per_condition) +
                      " is too small to give every split at least one sample per condition");
  }
  return {n_train, n_val, s.n_per_condition - n_train - n_val};
}

void check_splits(const Dataset& d) {
  std::vector<int> seen(d.samples.size(), 0);
  for (const auto& split : d.splits) {
    std::vector<int> per_condition(d.num_conditions(), 0);
    for (std::size_t i : split) {
      if (i >= d.samples.size()) throw DataError("split index " + std::to_string(i) + " out of range");
      if (seen[i]++) throw DataError("sample " + std::to_string(i) + " appears in more than one split");
      per_condition[static_cast<std::size_t>(d.samples[i].condition_id)]++;
    }
    if (std::find(per_condition.begin(), per_condition.end(), 0) != per_condition.end()) {
      throw DataError("a split is missing a condition");
    }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) throw DataError("splits do not cover every sample");
}

}  // namespace

void SynthSpec::validate() const {
  if (conditions < 2) throw ConfigError("synthetic spec: need at least 2 conditions");
  if (within_factors < 1 || dim < within_factors) {
    throw ConfigError("synthetic spec: require dim >= within_factors >= 1");
  }
  // Zero within/noise scales are allowed: they give exact copies of the centers.
  if (!(between_scale > 0.0) || !(within_scale >= 0.0) || !(noise_scale >= 0.0)) {
    throw ConfigError("synthetic spec: between_scale must be positive, other scales non-negative");
  }
  if (!(train_ratio > 0.0) || !(validation_ratio > 0.0) || train_ratio + validation_ratio >= 1.0) {
    throw ConfigError("synthetic spec: split ratios must be positive and leave room for a test split");
  }
  if (embedding_dim < 1) throw ConfigError("synthetic spec: embedding_dim must be >= 1");
  if (embedding_noise < 0.0) throw ConfigError("synthetic spec: embedding_noise must be >= 0");
  split_counts(*this);
}

json synth_spec_to_json(const SynthSpec& s) {
  return {{"conditions", s.conditions},         {"dim", s.dim},
          {"n_per_condition", s.n_per_condition}, {"between_scale", s.between_scale},
          {"within_factors", s.within_factors},   {"within_scale", s.within_scale},
          {"noise_scale", s.noise_scale},         {"train_ratio", s.train_ratio},
          {"validation_ratio", s.validation_ratio}, {"embedding_dim", s.embedding_dim},
          {"embedding_noise", s.embedding_noise}, {"seed", s.seed}};
}

SynthSpec synth_spec_from_json(const json& j) {
  SynthSpec s;
  s.conditions = j.at("conditions").get<std::size_t>();
  s.dim = j.at("dim").get<std::size_t>();
  s.n_per_condition = j.at("n_per_condition").get<std::size_t>();
  s.between_scale = j.at("between_scale").get<double>();
  s.within_factors = j.at("within_factors").get<std::size_t>();
  s.within_scale = j.at("within_scale").get<double>();
  s.noise_scale = j.at("noise_scale").get<double>();
  s.train_ratio = j.at("train_ratio").get<double>();
  s.validation_ratio = j.at("validation_ratio").get<double>();
  s.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  s.embedding_noise = j.at("embedding_noise").get<double>();
  s.seed = j.at("seed").get<std::uint64_t>();
  return s;
}

std::string to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split '" + std::string(s) + "'");
}

void ConditionVector::validate() const {
  if (kind == ConditionKind::one_hot) {
    const auto ones = std::count(values.begin(), values.end(), 1.0);
    const auto zeros = std::count(values.begin(), values.end(), 0.0);
    if (ones != 1 || static_cast<std::size_t>(ones + zeros) != values.size()) {
      throw ConfigError("one-hot condition vector must have exactly one entry equal to 1 and the rest 0");
    }
  } else {
    require_finite(values, "condition embedding");
  }
}

Dataset generate(const SynthSpec& spec) {
  spec.validate();
  const std::size_t K = spec.conditions, D = spec.dim, F = spec.within_factors;
  std::normal_distribution<double> normal(0.0, 1.0);

  // Centers with per-coordinate std between_scale / sqrt(D): the expected
  // pairwise distance is sqrt(2) * between_scale, and draws closer than
  // between_scale to an existing center are rejected.
  auto center_rng = stream(spec.seed, kCenters);
  const double center_sd = spec.between_scale / std::sqrt(static_cast<double>(D));
  std::vector<std::vector<double>> centers;
  for (std::size_t k = 0; k < K; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxCenterAttempts && !placed; ++attempt) {
      std::vector<double> m(D);
      for (double& v : m) v = center_sd * normal(center_rng);
      placed = std::all_of(centers.begin(), centers.end(), [&](const auto& other) {
        return squared_distance(m, other) >= spec.between_scale * spec.between_scale;
      });
      if (placed) centers.push_back(std::move(m));
    }
    if (!placed) {
      throw ConfigError("could not place " + std::to_string(K) + " centers at pairwise distance >= " +
                        std::to_string(spec.between_scale) + " in " + std::to_string(D) + " dimensions");
    }
  }

  // Shared variation directions, columns of norm ~within_scale.
  auto loading_rng = stream(spec.seed, kLoading);
  std::vector<double> W(D * F);
  const double w_sd = spec.within_scale / std::sqrt(static_cast<double>(D));
  for (double& v : W) v = w_sd * normal(loading_rng);

  Dataset d;
  d.spec = spec;
  auto sample_rng = stream(spec.seed, kSamples);
  std::vector<double> u(F);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t n = 0; n < spec.n_per_condition; ++n) {
      for (double& v : u) v = normal(sample_rng);
      LabeledSample s;
      s.condition_id = static_cast<int>(k);
      s.x = centers[k];
      for (std::size_t i = 0; i < D; ++i) {
        for (std::size_t f = 0; f < F; ++f) s.x[i] += W[i * F + f] * u[f];
        s.x[i] += spec.noise_scale * normal(sample_rng);
      }
      d.samples.push_back(std::move(s));
    }
  }

  const auto counts = split_counts(spec);
  auto split_rng = stream(spec.seed, kSplits);
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<std::size_t> idx(spec.n_per_condition);
    for (std::size_t n = 0; n < idx.size(); ++n) idx[n] = k * spec.n_per_condition + n;
    std::shuffle(idx.begin(), idx.end(), split_rng);
    auto it = idx.begin();
    for (std::size_t s = 0; s < 3; ++s) {
      d.splits[s].insert(d.splits[s].end(), it, it + static_cast<std::ptrdiff_t>(counts[s]));
      it += static_cast<std::ptrdiff_t>(counts[s]);
    }
  }
  for (auto& s : d.splits) std::sort(s.begin(), s.end());

  d.raw_centroid_accuracy = nearest_centroid_accuracy(d);
  d.embeddings = make_embeddings(d, spec.embedding_dim, spec.embedding_noise);
  return d;
}

EmbeddingSet make_embeddings(const Dataset& dataset, std::size_t dim, double noise) {
  if (dim < 1) throw ConfigError("make_embeddings: dim must be >= 1");
  const std::size_t K = dataset.num_conditions(), N = dataset.samples.size();
  const double sd = 1.0 / std::sqrt(static_cast<double>(dim));
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<std::vector<double>> base(K, std::vector<double>(dim));
  for (std::size_t k = 0; k < K; ++k) {
    auto rng = stream(dataset.spec.seed, kEmbedBase, k);
    for (double& v : base[k]) v = sd * normal(rng);
  }
  auto jitter_rng = stream(dataset.spec.seed, kEmbedJitter);
  std::vector<double> per_sample(N * dim);
  for (std::size_t i = 0; i < N; ++i) {
    const auto& b = base[static_cast<std::size_t>(dataset.samples[i].condition_id)];
    for (std::size_t j = 0; j < dim; ++j) per_sample[i * dim + j] = b[j] + noise * sd * normal(jitter_rng);
  }

  std::vector<double> mean(K * dim, 0.0), var(K * dim, 0.0);
  std::vector<std::size_t> count(K, 0);
  for (std::size_t i : dataset.split(Split::train)) {
    const auto k = static_cast<std::size_t>(dataset.samples[i].condition_id);
    ++count[k];
    for (std::size_t j = 0; j < dim; ++j) mean[k * dim + j] += per_sample[i * dim + j];
  }
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < dim; ++j) mean[k * dim + j] /= static_cast<double>(count[k]);
  for (std::size_t i : dataset.split(Split::train)) {
    const auto k = static_cast<std::size_t>(dataset.samples[i].condition_id);
    for (std::size_t j = 0; j < dim; ++j) {
      const double r = per_sample[i * dim + j] - mean[k * dim + j];
      var[k * dim + j] += r * r;
    }
  }
  std::vector<double> std_dev(K * dim);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < dim; ++j)
      std_dev[k * dim + j] = std::sqrt(var[k * dim + j] / static_cast<double>(count[k]));

  EmbeddingSet e;
  e.per_sample = Tensor({N, dim}, std::move(per_sample));
  e.table = Tensor({K, dim}, mean);
  e.mean = Tensor({K, dim}, std::move(mean));
  e.std = Tensor({K, dim}, std::move(std_dev));
  return e;
}

Tensor condition_table(const Dataset& dataset, ConditionKind kind) {
  if (kind == ConditionKind::embedding) return dataset.embeddings.table;
  const std::size_t K = dataset.num_conditions();
  Tensor t = Tensor::zeros({K, K});
  for (std::size_t k = 0; k < K; ++k) t.mutable_data()[k * K + k] = 1.0;
  return t;
}

ConditionVector condition_vector(const Dataset& dataset, int condition_id, ConditionKind kind) {
  if (condition_id < 0 || static_cast<std::size_t>(condition_id) >= dataset.num_conditions()) {
    throw ConfigError("condition " + std::to_string(condition_id) + " out of range");
  }
  ConditionVector v{condition_table(dataset, kind).row_vector(static_cast<std::size_t>(condition_id)), kind};
  v.validate();
  return v;
}

ConditionStats ablation_stats(const EmbeddingSet& embeddings, std::size_t latent_dim, double std_floor) {
  const std::size_t K = embeddings.mean.rows(), E = embeddings.mean.cols();
  if (latent_dim > E) {
    throw ConfigError("ablation: latent_dim " + std::to_string(latent_dim) + " exceeds embedding dim " +
                      std::to_string(E));
  }
  std::vector<double> mean, std_dev;
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t j = 0; j < latent_dim; ++j) {
      mean.push_back(embeddings.mean.at(k, j));
      std_dev.push_back(std::max(embeddings.std.at(k, j), std_floor));
    }
  }
  return {Tensor({K, latent_dim}, std::move(mean)), Tensor({K, latent_dim}, std::move(std_dev))};
}

Tensor raw_centroids(const Dataset& dataset, Split split) {
  const std::size_t K = dataset.num_conditions(), D = dataset.dim();
  std::vector<double> sums(K * D, 0.0);
  std::vector<std::size_t> count(K, 0);
  for (std::size_t i : dataset.split(split)) {
    const auto& s = dataset.samples[i];
    const auto k = static_cast<std::size_t>(s.condition_id);
    ++count[k];
    for (std::size_t j = 0; j < D; ++j) sums[k * D + j] += s.x[j];
  }
  for (std::size_t k = 0; k < K; ++k) {
    if (count[k] == 0) throw DataError("condition " + std::to_string(k) + " missing from split " + to_string(split));
    for (std::size_t j = 0; j < D; ++j) sums[k * D + j] /= static_cast<double>(count[k]);
  }
  return Tensor({K, D}, std::move(sums));
}

int nearest_centroid(const Tensor& centroids, std::span<const double> x) {
  const std::size_t D = centroids.cols();
  if (x.size() != D) throw ShapeError("nearest_centroid: vector length does not match centroids");
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < centroids.rows(); ++k) {
    const double dk = squared_distance(x, centroids.data().subspan(k * D, D));
    if (dk < best_d) {
      best_d = dk;
      best = static_cast<int>(k);
    }
  }
  return best;
}

double nearest_centroid_accuracy(const Dataset& dataset, Split eval_split) {
  const Tensor centroids = raw_centroids(dataset, Split::train);
  const auto& idx = dataset.split(eval_split);
  std::size_t hits = 0;
  for (std::size_t i : idx) {
    if (nearest_centroid(centroids, dataset.samples[i].x) == dataset.samples[i].condition_id) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(idx.size());
}

Batch make_batch(const Dataset& dataset, std::span<const std::size_t> indices, const Tensor& condition_table) {
  const std::size_t D = dataset.dim();
  Batch b;
  std::vector<double> x;
  x.reserve(indices.size() * D);
  for (std::size_t i : indices) {
    const auto& s = dataset.samples.at(i);
    x.insert(x.end(), s.x.begin(), s.x.end());
    b.condition_ids.push_back(s.condition_id);
  }
  b.x = Tensor({indices.size(), D}, std::move(x));
  b.c = gather_rows(condition_table, b.condition_ids);
  return b;
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset " + path.string());
  const json header = {{"version", kDatasetVersion},
                       {"spec", synth_spec_to_json(dataset.spec)},
                       {"seed", dataset.spec.seed},
                       {"split_indices",
                        {{"train", dataset.split(Split::train)},
                         {"validation", dataset.split(Split::validation)},
                         {"test", dataset.split(Split::test)}}},
                       {"raw_centroid_accuracy", dataset.raw_centroid_accuracy}};
  out << header.dump() << '\n';
  for (const auto& s : dataset.samples) {
    const json record = {{"condition_id", s.condition_id}, {"x", s.x}, {"embedding_id", s.condition_id}};
    out << record.dump() << '\n';
  }
  if (!out) throw DataError("failed writing dataset " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw DataError("dataset " + path.string() + " is empty");
  Dataset d;
  std::size_t line_no = 1;
  try {
    const json header = json::parse(line);
    const int version = header.at("version").get<int>();
    if (version != kDatasetVersion) {
      throw DataError("dataset version " + std::to_string(version) + " is not supported (expected " +
                      std::to_string(kDatasetVersion) + ")");
    }
    d.spec = synth_spec_from_json(header.at("spec"));
    if (header.at("seed").get<std::uint64_t>() != d.spec.seed) throw DataError("header seed disagrees with spec");
    const json& splits = header.at("split_indices");
    d.splits[0] = splits.at("train").get<std::vector<std::size_t>>();
    d.splits[1] = splits.at("validation").get<std::vector<std::size_t>>();
    d.splits[2] = splits.at("test").get<std::vector<std::size_t>>();
    d.raw_centroid_accuracy = header.at("raw_centroid_accuracy").get<double>();

    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const json record = json::parse(line);
      LabeledSample s;
      s.condition_id = record.at("condition_id").get<int>();
      s.x = record.at("x").get<std::vector<double>>();
      if (s.condition_id < 0 || static_cast<std::size_t>(s.condition_id) >= d.spec.conditions) {
        throw DataError("condition_id " + std::to_string(s.condition_id) + " out of range");
      }
      if (record.at("embedding_id").get<int>() != s.condition_id) throw DataError("embedding_id disagrees with condition_id");
      if (s.x.size() != d.spec.dim) throw DataError("sample has " + std::to_string(s.x.size()) + " features");
      require_finite(s.x, "dataset sample");
      d.samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw DataError("dataset " + path.string() + " line " + std::to_string(line_no) + ": " + e.what());
  } catch (const NumericalError& e) {
    throw DataError("dataset " + path.string() + " line " + std::to_string(line_no) + ": " + e.what());
  } catch (const ConfigError& e) {
    throw DataError("dataset " + path.string() + ": invalid spec: " + e.what());
  }
  const std::size_t expected = d.spec.conditions * d.spec.n_per_condition;
  if (d.samples.size() != expected) {
    throw DataError("dataset " + path.string() + " holds " + std::to_string(d.samples.size()) + " samples, header promises " +
                    std::to_string(expected));
  }
  check_splits(d);
  d.embeddings = make_embeddings(d, d.spec.embedding_dim, d.spec.embedding_noise);
  return d;
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 14];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace lcpvae
