#include "lcpvae/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include <Eigen/Dense>

#include "lcpvae/error.hpp"
#include "lcpvae/random.hpp"

namespace lcpvae {

using nlohmann::json;

namespace {

enum Purpose : std::uint64_t { kDumpNoise = 21, kInferNoise = 22, kGenerateNoise = 23, kVariabilityNoise = 24 };

double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(d);
}

// Dense cluster indices 0..K-1 in order of first appearance of each label value.
std::vector<std::size_t> cluster_index(std::span<const int> labels, std::size_t& clusters) {
  std::map<int, std::size_t> ids;
  for (int l : labels) ids.emplace(l, 0);
  std::size_t next = 0;
  for (auto& [label, id] : ids) id = next++;
  clusters = next;
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (int l : labels) out.push_back(ids[l]);
  return out;
}

void check_points(std::span<const std::vector<double>> points, std::span<const int> labels, const char* what) {
  if (points.size() != labels.size()) throw ShapeError(std::string(what) + ": points and labels differ in length");
  for (const auto& p : points) {
    if (p.size() != points.front().size()) throw ShapeError(std::string(what) + ": points differ in dimension");
  }
}

std::vector<std::vector<double>> dump_points(const LatentDump& dump, std::vector<int>& labels) {
  std::vector<std::vector<double>> pts;
  labels.clear();
  for (const auto& r : dump.rows) {
    pts.push_back(r.z);
    labels.push_back(r.condition_id);
  }
  return pts;
}

std::vector<int> repeated_ids(std::size_t conditions, std::size_t n_per_condition) {
  std::vector<int> ids;
  for (std::size_t k = 0; k < conditions; ++k) ids.insert(ids.end(), n_per_condition, static_cast<int>(k));
  return ids;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << v;
  return os.str();
}

constexpr const char* kPalette[12] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                                      "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939"};

}  // namespace

std::string to_string(LatentSource s) {
  return s == LatentSource::encoder_posterior ? "encoder_posterior" : "inference_sample";
}

std::string to_string(LatentSpace s) { return s == LatentSpace::primary ? "primary" : "csvae"; }

LatentSource parse_latent_source(std::string_view s) {
  if (s == "encoder_posterior") return LatentSource::encoder_posterior;
  if (s == "inference_sample") return LatentSource::inference_sample;
  throw DataError("unknown latent source '" + std::string(s) + "'");
}

LatentSpace parse_latent_space(std::string_view s) {
  if (s == "primary") return LatentSpace::primary;
  if (s == "csvae") return LatentSpace::csvae;
  throw ConfigError("unknown latent space '" + std::string(s) + "'");
}

LatentDump LatentDump::filtered(LatentSource source) const {
  LatentDump out{model_tag, seed, {}};
  for (const auto& r : rows)
    if (r.source == source) out.rows.push_back(r);
  return out;
}

double silhouette(std::span<const std::vector<double>> points, std::span<const int> labels) {
  check_points(points, labels, "silhouette");
  std::size_t K = 0;
  const auto cluster = cluster_index(labels, K);
  std::vector<std::size_t> sizes(K, 0);
  for (std::size_t c : cluster) ++sizes[c];
  if (K < 2) throw ConfigError("silhouette: need at least two conditions");
  if (*std::min_element(sizes.begin(), sizes.end()) < 2) {
    throw ConfigError("silhouette: every condition needs at least two points");
  }
  const std::size_t n = points.size();
  double total = 0.0;
  std::vector<double> sums(K);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) sums[cluster[j]] += distance(points[i], points[j]);
    }
    const std::size_t own = cluster[i];
    const double a = sums[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < K; ++c) {
      if (c != own) b = std::min(b, sums[c] / static_cast<double>(sizes[c]));
    }
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(n);
}

double silhouette(const LatentDump& dump) {
  std::vector<int> labels;
  const auto pts = dump_points(dump, labels);
  return silhouette(pts, labels);
}

double intra_inter_ratio(std::span<const std::vector<double>> points, std::span<const int> labels) {
  check_points(points, labels, "intra_inter_ratio");
  double intra = 0.0, inter = 0.0;
  std::size_t n_intra = 0, n_inter = 0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      const double d = distance(points[i], points[j]);
      if (labels[i] == labels[j]) {
        intra += d;
        ++n_intra;
      } else {
        inter += d;
        ++n_inter;
      }
    }
  }
  if (n_intra == 0 || n_inter == 0) throw ConfigError("intra_inter_ratio: need repeated and distinct labels");
  const double mean_inter = inter / static_cast<double>(n_inter);
  if (mean_inter == 0.0) throw NumericalError("intra_inter_ratio: all points coincide");
  return (intra / static_cast<double>(n_intra)) / mean_inter;
}

double intra_inter_ratio(const LatentDump& dump) {
  std::vector<int> labels;
  const auto pts = dump_points(dump, labels);
  return intra_inter_ratio(pts, labels);
}

double condition_accuracy(std::span<const GeneratedSample> generated, const Tensor& centroids) {
  if (generated.empty()) throw ConfigError("condition_accuracy: no generated samples");
  std::size_t hits = 0;
  for (const auto& g : generated) {
    if (g.condition_id < 0 || static_cast<std::size_t>(g.condition_id) >= centroids.rows()) {
      throw ConfigError("condition_accuracy: unknown condition " + std::to_string(g.condition_id));
    }
    if (nearest_centroid(centroids, g.output) == g.condition_id) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(generated.size());
}

std::vector<double> per_dim_kl(const Model& model, const Batch& batch) {
  const std::size_t d = model.config().latent_dim;
  const Tensor zeros = Tensor::zeros({batch.size(), d});
  const ModelOutput out = model.forward(batch, zeros, zeros);
  const Var terms = has_conditional_prior(model.kind())
                        ? cpvae_kl_terms(out.primary_posterior, *out.conditional_posterior)
                        : kl_to_standard_normal_terms(out.primary_posterior);
  std::vector<double> result(d, 0.0);
  const Tensor& t = terms.value();
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < d; ++j) result[j] += t.at(i, j);
  for (double& v : result) v /= static_cast<double>(t.rows());
  return result;
}

std::vector<double> per_dim_kl(const Model& model, const Dataset& dataset, Split split) {
  return per_dim_kl(model, make_batch(dataset, dataset.split(split), model.condition_table()));
}

double output_variability(const Model& model, int condition, std::size_t n_samples, std::uint64_t seed) {
  return output_variability(model, condition, n_samples, seed, default_sample_mode(model.kind()));
}

double output_variability(const Model& model, int condition, std::size_t n_samples, std::uint64_t seed,
                          SampleMode mode) {
  if (n_samples < 2) throw ConfigError("output_variability: need at least two samples");
  auto rng = seeded_stream(seed, kVariabilityNoise, static_cast<std::uint64_t>(condition));
  const std::vector<int> ids(n_samples, condition);
  const Tensor eps = standard_normal(n_samples, model.config().latent_dim, rng);
  const Tensor out = infer_sample(model, ids, eps, mode);
  const std::size_t D = out.cols();
  double total = 0.0;
  for (std::size_t j = 0; j < D; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n_samples; ++i) mean += out.at(i, j);
    mean /= static_cast<double>(n_samples);
    double ss = 0.0;
    for (std::size_t i = 0; i < n_samples; ++i) ss += (out.at(i, j) - mean) * (out.at(i, j) - mean);
    total += std::sqrt(ss / static_cast<double>(n_samples - 1));
  }
  return total / static_cast<double>(D);
}

std::vector<std::vector<double>> pca_project(std::span<const std::vector<double>> points, std::size_t out_dims) {
  const std::size_t n = points.size();
  if (n < 2 || n < out_dims) throw ConfigError("pca_project: need at least max(2, out_dims) points");
  const std::size_t d = points.front().size();
  if (out_dims == 0 || out_dims > d) throw ConfigError("pca_project: out_dims must be in [1, dim]");
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    if (points[i].size() != d) throw ShapeError("pca_project: points differ in dimension");
    for (std::size_t j = 0; j < d; ++j) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = points[i][j];
  }
  X.rowwise() -= X.colwise().mean();
  const Eigen::MatrixXd cov = X.transpose() * X / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericalError("pca_project: eigen-decomposition failed");
  // Eigenvalues ascend; the leading directions are the last columns.
  const Eigen::VectorXd& values = solver.eigenvalues();
  if (!(values(values.size() - 1) > 0.0)) throw NumericalError("pca_project: input has zero variance");
  Eigen::MatrixXd basis(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(out_dims));
  for (std::size_t k = 0; k < out_dims; ++k) {
    Eigen::VectorXd v = solver.eigenvectors().col(static_cast<Eigen::Index>(d - 1 - k));
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0.0) v = -v;
    basis.col(static_cast<Eigen::Index>(k)) = v;
  }
  const Eigen::MatrixXd projected = X * basis;
  std::vector<std::vector<double>> out(n, std::vector<double>(out_dims));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < out_dims; ++k)
      out[i][k] = projected(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
  return out;
}

std::vector<std::vector<double>> pca_project(const LatentDump& dump, std::size_t out_dims) {
  std::vector<int> labels;
  const auto pts = dump_points(dump, labels);
  return pca_project(pts, out_dims);
}

std::vector<GeneratedSample> generate_samples(const Model& model, std::size_t n_per_condition, std::uint64_t seed,
                                              SampleMode mode) {
  const auto ids = repeated_ids(model.num_conditions(), n_per_condition);
  auto rng = seeded_stream(seed, kGenerateNoise);
  const Tensor eps = standard_normal(ids.size(), model.config().latent_dim, rng);
  const Tensor out = infer_sample(model, ids, eps, mode);
  std::vector<GeneratedSample> samples;
  for (std::size_t i = 0; i < ids.size(); ++i) samples.push_back({ids[i], out.row_vector(i)});
  return samples;
}

LatentDump collect_latents(const Model& model, const Dataset& dataset, const DumpOptions& options) {
  if (options.space == LatentSpace::csvae && !has_csvae(model.kind())) {
    throw ConfigError("a " + to_string(model.kind()) + " model has no CSVAE latent space");
  }
  LatentDump dump{to_string(model.kind()) + "/" + to_string(options.space), options.seed, {}};
  const std::size_t d = model.config().latent_dim;

  const Batch batch = make_batch(dataset, dataset.split(options.split), model.condition_table());
  auto dump_rng = seeded_stream(options.seed, kDumpNoise);
  const Tensor eps_primary = standard_normal(batch.size(), d, dump_rng);
  const Tensor eps_cond = standard_normal(batch.size(), d, dump_rng);
  const ModelOutput out = model.forward(batch, eps_primary, eps_cond);
  const Tensor& encoded = options.space == LatentSpace::csvae ? out.csvae_latent->value() : out.latent.value();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    dump.rows.push_back({batch.condition_ids[i], LatentSource::encoder_posterior, encoded.row_vector(i)});
  }

  const auto ids = repeated_ids(model.num_conditions(), options.samples_per_condition);
  auto infer_rng = seeded_stream(options.seed, kInferNoise);
  const Tensor eps = standard_normal(ids.size(), d, infer_rng);
  // In the CSVAE space the inference draw is the CSVAE posterior sample,
  // which is also what LCPVAE decodes from.
  const Tensor z = infer_latent(model, ids, eps, default_sample_mode(model.kind()));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    dump.rows.push_back({ids[i], LatentSource::inference_sample, z.row_vector(i)});
  }
  return dump;
}

json EvalReport::to_json() const {
  return {{"model", model_tag},
          {"space", lcpvae::to_string(space)},
          {"silhouette", silhouette},
          {"intra_inter_ratio", intra_inter_ratio},
          {"encoder_silhouette", encoder_silhouette},
          {"condition_accuracy", condition_accuracy},
          {"per_dim_kl", per_dim_kl},
          {"per_condition_output_variance", per_condition_output_variance}};
}

Evaluation evaluate(const Model& model, const Dataset& dataset, const EvalOptions& options) {
  Evaluation ev;
  ev.dump = collect_latents(model, dataset, options.dump);
  EvalReport& r = ev.report;
  r.model_tag = to_string(model.kind());
  r.space = options.dump.space;
  const LatentDump inferred = ev.dump.filtered(LatentSource::inference_sample);
  r.silhouette = silhouette(inferred);
  r.intra_inter_ratio = intra_inter_ratio(inferred);
  r.encoder_silhouette = silhouette(ev.dump.filtered(LatentSource::encoder_posterior));
  const SampleMode mode = default_sample_mode(model.kind());
  const auto generated = generate_samples(model, options.dump.samples_per_condition, options.dump.seed, mode);
  r.condition_accuracy = condition_accuracy(generated, raw_centroids(dataset, Split::train));
  r.per_dim_kl = per_dim_kl(model, dataset, options.dump.split);
  for (std::size_t k = 0; k < model.num_conditions(); ++k) {
    r.per_condition_output_variance.push_back(
        output_variability(model, static_cast<int>(k), options.variability_samples, options.dump.seed, mode));
  }
  return ev;
}

void write_latent_csv(const std::filesystem::path& path, const LatentDump& dump) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "condition_id,source";
  for (std::size_t j = 0; j < dump.dim(); ++j) out << ",z_" << j;
  out << '\n' << std::setprecision(17);
  for (const auto& r : dump.rows) {
    out << r.condition_id << ',' << to_string(r.source);
    for (double v : r.z) out << ',' << v;
    out << '\n';
  }
}

LatentDump read_latent_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("condition_id,source", 0) != 0) {
    throw DataError(path.string() + ": missing latent dump header");
  }
  const std::size_t dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) - 1;
  LatentDump dump;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    LatentRow r;
    try {
      std::getline(row, cell, ',');
      r.condition_id = std::stoi(cell);
      std::getline(row, cell, ',');
      r.source = parse_latent_source(cell);
      while (std::getline(row, cell, ',')) r.z.push_back(std::stod(cell));
    } catch (const std::logic_error&) {
      throw DataError(path.string() + ": malformed row '" + line + "'");
    }
    if (r.z.size() != dim) throw DataError(path.string() + ": row has wrong number of columns");
    dump.rows.push_back(std::move(r));
  }
  return dump;
}

std::string scatter_svg(std::span<const std::vector<double>> points, std::span<const int> labels,
                        const std::string& title) {
  check_points(points, labels, "scatter_svg");
  constexpr double kSize = 800.0, kMargin = 60.0;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin, ymin = xmin, ymax = -xmin;
  for (const auto& p : points) {
    if (p.size() < 2) throw ShapeError("scatter_svg: points must have two coordinates");
    xmin = std::min(xmin, p[0]);
    xmax = std::max(xmax, p[0]);
    ymin = std::min(ymin, p[1]);
    ymax = std::max(ymax, p[1]);
  }
  const double span = std::max({xmax - xmin, ymax - ymin, 1e-12});
  const double cx = 0.5 * (xmin + xmax), cy = 0.5 * (ymin + ymax);
  const double scale = (kSize - 2.0 * kMargin) / span;
  std::vector<int> distinct(labels.begin(), labels.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  auto colour = [&](int label) {
    const auto pos = std::lower_bound(distinct.begin(), distinct.end(), label) - distinct.begin();
    return kPalette[static_cast<std::size_t>(pos) % 12];
  };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"800\" viewBox=\"0 0 800 800\">\n"
     << "<rect width=\"800\" height=\"800\" fill=\"white\"/>\n"
     << "<text x=\"400\" y=\"30\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"18\">" << title
     << "</text>\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double x = kSize / 2 + (points[i][0] - cx) * scale;
    const double y = kSize / 2 - (points[i][1] - cy) * scale;
    os << "<circle cx=\"" << fmt(x) << "\" cy=\"" << fmt(y) << "\" r=\"3\" fill=\"" << colour(labels[i])
       << "\" fill-opacity=\"0.7\"/>\n";
  }
  os << "<g font-family=\"sans-serif\" font-size=\"14\">\n";
  for (std::size_t k = 0; k < distinct.size(); ++k) {
    const double y = 60.0 + 22.0 * static_cast<double>(k);
    os << "<rect x=\"680\" y=\"" << fmt(y - 11) << "\" width=\"12\" height=\"12\" fill=\"" << colour(distinct[k])
       << "\"/>\n<text x=\"700\" y=\"" << fmt(y) << "\">condition " << distinct[k] << "</text>\n";
  }
  os << "</g>\n</svg>\n";
  return os.str();
}

}  // namespace lcpvae
