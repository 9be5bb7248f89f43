#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <functional>
#include <set>

#include "lcpvae/data.hpp"
#include "lcpvae/error.hpp"
#include "test_support.hpp"

namespace lcpvae {
namespace {

SynthSpec tiny_spec() {
  SynthSpec s;
  s.n_per_condition = 30;
  s.embedding_dim = 8;
  return s;
}

const Dataset& default_dataset() {
  static const Dataset d = generate(SynthSpec{});
  return d;
}

bool same_dataset(const Dataset& a, const Dataset& b) {
  if (a.samples.size() != b.samples.size() || a.splits != b.splits) return false;
  if (a.raw_centroid_accuracy != b.raw_centroid_accuracy) return false;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    if (a.samples[i].condition_id != b.samples[i].condition_id || a.samples[i].x != b.samples[i].x) return false;
  }
  return a.embeddings.per_sample.identical(b.embeddings.per_sample) &&
         a.embeddings.table.identical(b.embeddings.table) && a.embeddings.std.identical(b.embeddings.std);
}

// Brute-force nearest centroid over the raw samples.
double oracle_accuracy(const Dataset& d) {
  const std::size_t K = d.num_conditions(), D = d.dim();
  std::vector<std::vector<double>> centroid(K, std::vector<double>(D, 0.0));
  std::vector<double> count(K, 0.0);
  for (std::size_t i : d.split(Split::train)) {
    const auto k = static_cast<std::size_t>(d.samples[i].condition_id);
    count[k] += 1.0;
    for (std::size_t j = 0; j < D; ++j) centroid[k][j] += d.samples[i].x[j];
  }
  for (std::size_t k = 0; k < K; ++k)
    for (double& v : centroid[k]) v /= count[k];
  double hits = 0.0;
  for (std::size_t i : d.split(Split::test)) {
    double best = INFINITY;
    int arg = -1;
    for (std::size_t k = 0; k < K; ++k) {
      double dist = 0.0;
      for (std::size_t j = 0; j < D; ++j) dist += std::pow(d.samples[i].x[j] - centroid[k][j], 2);
      if (dist < best) {
        best = dist;
        arg = static_cast<int>(k);
      }
    }
    hits += arg == d.samples[i].condition_id ? 1.0 : 0.0;
  }
  return hits / static_cast<double>(d.split(Split::test).size());
}

TEST(Generate, ZeroVariationCopiesTheCenter) {
  SynthSpec s = tiny_spec();
  s.within_scale = 0.0;
  s.noise_scale = 0.0;
  const Dataset d = generate(s);
  for (const auto& sample : d.samples) {
    EXPECT_EQ(sample.x, d.samples[static_cast<std::size_t>(sample.condition_id) * s.n_per_condition].x);
  }
  EXPECT_NE(d.samples.front().x, d.samples.back().x);
}

TEST(Generate, WellSeparatedPairIsPerfectlyClassified) {
  SynthSpec s = tiny_spec();
  s.conditions = 2;
  s.between_scale = 1000.0;
  EXPECT_EQ(generate(s).raw_centroid_accuracy, 1.0);
}

TEST(Generate, DefaultRawAccuracyMatchesBruteForce) {
  const Dataset& d = default_dataset();
  EXPECT_EQ(d.raw_centroid_accuracy, oracle_accuracy(d));
  EXPECT_GT(d.raw_centroid_accuracy, 0.9);
}

TEST(Generate, CentersRespectTheMinimumDistance) {
  SynthSpec s = tiny_spec();
  s.within_scale = 0.0;
  s.noise_scale = 0.0;
  s.conditions = 6;
  const Dataset d = generate(s);
  for (std::size_t a = 0; a < 6; ++a) {
    for (std::size_t b = a + 1; b < 6; ++b) {
      double dist = 0.0;
      for (std::size_t j = 0; j < s.dim; ++j) {
        dist += std::pow(d.samples[a * s.n_per_condition].x[j] - d.samples[b * s.n_per_condition].x[j], 2);
      }
      EXPECT_GE(std::sqrt(dist), s.between_scale);
    }
  }
}

TEST(Generate, IsAPureFunctionOfTheSpec) {
  EXPECT_TRUE(same_dataset(generate(tiny_spec()), generate(tiny_spec())));
  SynthSpec other = tiny_spec();
  other.seed = 1;
  EXPECT_FALSE(same_dataset(generate(tiny_spec()), generate(other)));
}

TEST(Generate, EmbeddingSettingsLeaveObservationsAlone) {
  SynthSpec s = tiny_spec();
  s.embedding_dim = 3;
  s.embedding_noise = 2.0;
  const Dataset a = generate(tiny_spec()), b = generate(s);
  for (std::size_t i = 0; i < a.samples.size(); ++i) ASSERT_EQ(a.samples[i].x, b.samples[i].x);
  EXPECT_EQ(a.splits, b.splits);
}

TEST(Generate, CountsAndSplitsFollowTheSpec) {
  for (std::size_t n : {10u, 37u, 500u}) {
    SynthSpec s = tiny_spec();
    s.n_per_condition = n;
    s.train_ratio = 0.7;
    s.validation_ratio = 0.15;
    const Dataset d = generate(s);
    ASSERT_EQ(d.samples.size(), s.conditions * n);
    std::set<std::size_t> all;
    for (std::size_t split = 0; split < 3; ++split) {
      std::vector<std::size_t> per(s.conditions, 0);
      for (std::size_t i : d.splits[split]) {
        EXPECT_TRUE(all.insert(i).second) << "index " << i << " in two splits";
        per[static_cast<std::size_t>(d.samples[i].condition_id)]++;
      }
      const double ratio = split == 0 ? 0.7 : split == 1 ? 0.15 : 0.15;
      for (std::size_t k = 0; k < s.conditions; ++k) {
        EXPECT_GE(per[k], 1u);
        EXPECT_LE(std::abs(static_cast<double>(per[k]) - ratio * static_cast<double>(n)), 1.0);
      }
    }
    EXPECT_EQ(all.size(), d.samples.size());
  }
}

TEST(Generate, InvalidSpecsAreConfigErrors) {
  SynthSpec s = tiny_spec();
  s.conditions = 1;
  EXPECT_THROW(generate(s), ConfigError);
  s = tiny_spec();
  s.within_factors = s.dim + 1;
  EXPECT_THROW(generate(s), ConfigError);
  s = tiny_spec();
  s.n_per_condition = 3;
  EXPECT_THROW(generate(s), ConfigError);
  s = tiny_spec();
  s.dim = 1;
  s.within_factors = 1;
  s.conditions = 12;
  s.between_scale = 50.0;
  EXPECT_THROW(generate(s), ConfigError) << "12 centers cannot sit 50 apart on a line drawn with std 50";
}

TEST(Embeddings, ZeroNoiseGivesZeroStdFlooredByTheAblation) {
  const Dataset d = generate(tiny_spec());
  const EmbeddingSet e = make_embeddings(d, 8, 0.0);
  for (double v : e.std.data()) EXPECT_LT(v, 1e-12) << "zero up to rounding of the mean";
  const ConditionStats stats = ablation_stats(e, 2);
  for (double v : stats.std.data()) EXPECT_EQ(v, 1e-3);
  EXPECT_EQ(stats.mean.shape(), (Shape{4, 2}));
  EXPECT_EQ(stats.mean.at(3, 1), e.mean.at(3, 1));
  EXPECT_THROW(ablation_stats(e, 9), ConfigError);
}

TEST(Embeddings, DistinctConditionsAreNearlyOrthogonal) {
  SynthSpec s = tiny_spec();
  s.embedding_dim = 256;
  const Dataset d = generate(s);
  const Tensor& t = d.embeddings.table;
  for (std::size_t a = 0; a < t.rows(); ++a) {
    for (std::size_t b = a + 1; b < t.rows(); ++b) {
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (std::size_t j = 0; j < t.cols(); ++j) {
        dot += t.at(a, j) * t.at(b, j);
        na += t.at(a, j) * t.at(a, j);
        nb += t.at(b, j) * t.at(b, j);
      }
      // Random directions in 256 dimensions: cosine has std 1/16.
      EXPECT_LT(std::abs(dot / std::sqrt(na * nb)), 0.25);
    }
  }
}

TEST(Embeddings, TableIsTheTrainingMeanOfEachCondition) {
  const Dataset d = generate(tiny_spec());
  const auto& e = d.embeddings;
  for (std::size_t k = 0; k < d.num_conditions(); ++k) {
    for (std::size_t j = 0; j < e.table.cols(); ++j) {
      double sum = 0.0, n = 0.0;
      for (std::size_t i : d.split(Split::train)) {
        if (d.samples[i].condition_id != static_cast<int>(k)) continue;
        sum += e.per_sample.at(i, j);
        n += 1.0;
      }
      EXPECT_NEAR(e.table.at(k, j), sum / n, 1e-14);
      EXPECT_EQ(e.table.at(k, j), e.mean.at(k, j));
      EXPECT_GT(e.std.at(k, j), 0.0);
    }
  }
}

TEST(Conditions, OneHotAndEmbeddingTables) {
  const Dataset d = generate(tiny_spec());
  const Tensor one_hot = condition_table(d, ConditionKind::one_hot);
  EXPECT_EQ(one_hot.shape(), (Shape{4, 4}));
  EXPECT_EQ(condition_vector(d, 2, ConditionKind::one_hot).values, (std::vector<double>{0, 0, 1, 0}));
  EXPECT_EQ(condition_vector(d, 1, ConditionKind::embedding).values, d.embeddings.table.row_vector(1));
  EXPECT_THROW(condition_vector(d, 4, ConditionKind::one_hot), ConfigError);
  EXPECT_THROW((ConditionVector{{1, 1, 0}, ConditionKind::one_hot}.validate()), ConfigError);
  EXPECT_THROW((ConditionVector{{0.5, 0, 0}, ConditionKind::one_hot}.validate()), ConfigError);
}

TEST(Batches, GatherRowsAndConditions) {
  const Dataset d = generate(tiny_spec());
  const std::vector<std::size_t> idx{0, 31, 119};
  const Batch b = make_batch(d, idx, condition_table(d, ConditionKind::one_hot));
  EXPECT_EQ(b.condition_ids, (std::vector<int>{0, 1, 3}));
  EXPECT_EQ(b.x.row_vector(1), d.samples[31].x);
  EXPECT_EQ(b.c.row_vector(2), (std::vector<double>{0, 0, 0, 1}));
}

TEST(NearestCentroid, PicksTheClosestRow) {
  const Tensor c = Tensor::matrix(3, 2, {0, 0, 10, 0, 0, 10});
  EXPECT_EQ(nearest_centroid(c, std::vector<double>{9, 1}), 1);
  EXPECT_EQ(nearest_centroid(c, std::vector<double>{1, 8}), 2);
  EXPECT_THROW(nearest_centroid(c, std::vector<double>{1, 2, 3}), ShapeError);
}

TEST(DatasetFile, RoundTripIsBitExact) {
  testing::TempDir dir("data");
  const Dataset d = generate(tiny_spec());
  save_dataset(dir / "d.jsonl", d);
  const Dataset back = load_dataset(dir / "d.jsonl");
  EXPECT_TRUE(same_dataset(d, back));
  EXPECT_EQ(synth_spec_to_json(back.spec), synth_spec_to_json(d.spec));
  save_dataset(dir / "e.jsonl", back);
  EXPECT_EQ(testing::slurp(dir / "d.jsonl"), testing::slurp(dir / "e.jsonl"));
  EXPECT_EQ(file_hash(dir / "d.jsonl"), file_hash(dir / "e.jsonl"));
}

TEST(DatasetFile, OtherSeedLoadsWithItsOwnSpec) {
  testing::TempDir dir("data");
  SynthSpec s = tiny_spec();
  s.seed = 9;
  save_dataset(dir / "d.jsonl", generate(s));
  const Dataset back = load_dataset(dir / "d.jsonl");
  EXPECT_EQ(back.spec.seed, 9u);
  EXPECT_NE(synth_spec_to_json(back.spec), synth_spec_to_json(tiny_spec()));
}

TEST(DatasetFile, HeaderFields) {
  testing::TempDir dir("data");
  save_dataset(dir / "d.jsonl", generate(tiny_spec()));
  std::ifstream in(dir / "d.jsonl");
  std::string line;
  std::getline(in, line);
  const auto header = nlohmann::json::parse(line);
  for (const char* key : {"version", "spec", "seed", "split_indices", "raw_centroid_accuracy"}) {
    EXPECT_TRUE(header.contains(key)) << key;
  }
  std::getline(in, line);
  const auto record = nlohmann::json::parse(line);
  for (const char* key : {"condition_id", "x", "embedding_id"}) EXPECT_TRUE(record.contains(key)) << key;
}

void rewrite(const std::filesystem::path& p, const std::function<void(std::vector<std::string>&)>& edit) {
  std::ifstream in(p);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  in.close();
  edit(lines);
  std::ofstream out(p);
  for (const auto& l : lines) out << l << '\n';
}

TEST(DatasetFile, CorruptInputsAreDataErrors) {
  testing::TempDir dir("data");
  const auto path = dir / "d.jsonl";
  auto fresh = [&] { save_dataset(path, generate(tiny_spec())); };

  fresh();
  rewrite(path, [](auto& l) { l[0] = l[0].substr(0, l[0].size() / 2); });
  EXPECT_THROW(load_dataset(path), DataError) << "truncated header";

  fresh();
  rewrite(path, [](auto& l) {
    auto h = nlohmann::json::parse(l[0]);
    h["version"] = 99;
    l[0] = h.dump();
  });
  EXPECT_THROW(load_dataset(path), DataError) << "version";

  fresh();
  rewrite(path, [](auto& l) {
    auto h = nlohmann::json::parse(l[0]);
    h.erase("split_indices");
    l[0] = h.dump();
  });
  EXPECT_THROW(load_dataset(path), DataError) << "schema";

  fresh();
  rewrite(path, [](auto& l) { l.pop_back(); });
  EXPECT_THROW(load_dataset(path), DataError) << "missing records";

  fresh();
  rewrite(path, [](auto& l) {
    auto r = nlohmann::json::parse(l[3]);
    r["condition_id"] = 7;
    l[3] = r.dump();
  });
  EXPECT_THROW(load_dataset(path), DataError) << "label range";

  fresh();
  rewrite(path, [](auto& l) {
    auto h = nlohmann::json::parse(l[0]);
    h["split_indices"]["test"].push_back(0);
    l[0] = h.dump();
  });
  EXPECT_THROW(load_dataset(path), DataError) << "overlapping splits";

  EXPECT_THROW(load_dataset(dir / "absent.jsonl"), DataError);
}

TEST(DatasetFile, HashTracksContent) {
  testing::TempDir dir("data");
  {
    std::ofstream(dir / "a") << "a";
    std::ofstream(dir / "b") << "b";
    std::ofstream(dir / "empty");
  }
  EXPECT_EQ(file_hash(dir / "empty"), "cbf29ce484222325");
  EXPECT_EQ(file_hash(dir / "a"), "af63dc4c8601ec8c");
  EXPECT_NE(file_hash(dir / "a"), file_hash(dir / "b"));
}

}  // namespace
}  // namespace lcpvae
