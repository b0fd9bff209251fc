#include "fedsim/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "fedsim/rng.hpp"
#include "json_util.hpp"

namespace fedsim {

void Dataset::validate() const {
  if (examples.empty()) throw std::invalid_argument("dataset is empty");
  if (num_classes < 2) throw std::invalid_argument("dataset needs at least 2 classes");
  if (feature_dim < 1) throw std::invalid_argument("dataset feature_dim must be positive");
  for (const auto& ex : examples) {
    if (ex.features.size() != static_cast<std::size_t>(feature_dim))
      throw std::invalid_argument("example feature dimension mismatch");
    if (ex.label < 0 || ex.label >= num_classes)
      throw std::invalid_argument("example label out of range");
    if (ex.repo_owner.empty()) throw std::invalid_argument("example with empty repo owner");
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.num_classes = num_classes;
  out.feature_dim = feature_dim;
  out.examples.reserve(indices.size());
  for (std::size_t i : indices) out.examples.push_back(examples.at(i));
  return out;
}

void SyntheticCorpusConfig::validate() const {
  if (n_examples == 0) throw std::invalid_argument("n_examples must be positive");
  if (feature_dim < 1) throw std::invalid_argument("feature_dim must be positive");
  if (num_classes < 2) throw std::invalid_argument("num_classes must be at least 2");
  if (n_owners < 1) throw std::invalid_argument("n_owners must be positive");
  if (cluster_spread < 0.0) throw std::invalid_argument("cluster_spread must be non-negative");
}

namespace {

constexpr double kOwnerScatter = 1.0;  // std of owner base centers
constexpr double kClassSep = 3.5;      // length of each class offset vector

// Nearest-class-centroid accuracy, fitted and scored on the corpus itself.
// A linear rule, used as the generation-time recoverability check.
double centroid_accuracy(const Dataset& data) {
  const auto d = static_cast<std::size_t>(data.feature_dim);
  const auto c = static_cast<std::size_t>(data.num_classes);
  std::vector<double> centroid(c * d, 0.0);
  std::vector<std::size_t> count(c, 0);
  for (const auto& ex : data.examples) {
    double* row = centroid.data() + static_cast<std::size_t>(ex.label) * d;
    for (std::size_t j = 0; j < d; ++j) row[j] += ex.features[j];
    ++count[static_cast<std::size_t>(ex.label)];
  }
  for (std::size_t k = 0; k < c; ++k) {
    if (count[k] == 0) continue;
    double* row = centroid.data() + k * d;
    for (std::size_t j = 0; j < d; ++j) row[j] /= static_cast<double>(count[k]);
  }
  std::size_t hits = 0;
  for (const auto& ex : data.examples) {
    double best = -1.0;
    std::size_t best_k = 0;
    for (std::size_t k = 0; k < c; ++k) {
      if (count[k] == 0) continue;
      const double* row = centroid.data() + k * d;
      double dist = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = ex.features[j] - row[j];
        dist += diff * diff;
      }
      if (best < 0.0 || dist < best) {
        best = dist;
        best_k = k;
      }
    }
    if (static_cast<int>(best_k) == ex.label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace

Dataset make_synthetic_corpus(const SyntheticCorpusConfig& cfg) {
  cfg.validate();
  const auto d = static_cast<std::size_t>(cfg.feature_dim);
  const auto c = static_cast<std::size_t>(cfg.num_classes);
  const auto n_owners = static_cast<std::size_t>(cfg.n_owners);

  auto rng = make_rng(derive_seed(static_cast<std::uint64_t>(cfg.seed), 0x5EEDC0DEULL));
  std::normal_distribution<double> unit_normal(0.0, 1.0);

  std::vector<double> owner_base(n_owners * d);
  for (double& v : owner_base) v = kOwnerScatter * unit_normal(rng);

  // Class offsets: random directions of fixed length, shared by all owners so
  // labels stay linearly recoverable.
  std::vector<double> class_offset(c * d);
  for (std::size_t k = 0; k < c; ++k) {
    double* row = class_offset.data() + k * d;
    double norm = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      row[j] = unit_normal(rng);
      norm += row[j] * row[j];
    }
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < d; ++j) row[j] *= kClassSep / norm;
  }

  std::uniform_int_distribution<std::size_t> owner_dist(0, n_owners - 1);
  std::uniform_int_distribution<int> class_dist(0, cfg.num_classes - 1);

  Dataset data;
  data.num_classes = cfg.num_classes;
  data.feature_dim = cfg.feature_dim;
  data.examples.reserve(cfg.n_examples);
  for (std::size_t i = 0; i < cfg.n_examples; ++i) {
    const std::size_t owner = owner_dist(rng);
    const int label = class_dist(rng);
    LabeledExample ex;
    ex.label = label;
    ex.repo_owner = "owner_" + std::to_string(owner);
    ex.features.resize(d);
    const double* base = owner_base.data() + owner * d;
    const double* off = class_offset.data() + static_cast<std::size_t>(label) * d;
    for (std::size_t j = 0; j < d; ++j)
      ex.features[j] = base[j] + off[j] + cfg.cluster_spread * unit_normal(rng);
    data.examples.push_back(std::move(ex));
  }

  if (cfg.cluster_spread <= 1.0 && data.size() >= 10 * c) {
    const double acc = centroid_accuracy(data);
    if (acc <= 0.8)
      throw std::runtime_error(
          "synthetic corpus self-test failed: labels not linearly recoverable "
          "(centroid accuracy " + detail::format_double(acc) + ")");
  }
  return data;
}

Dataset make_synthetic_corpus(std::size_t n_examples, int feature_dim, int num_classes,
                              int n_owners, double cluster_spread, std::int64_t seed) {
  SyntheticCorpusConfig cfg;
  cfg.n_examples = n_examples;
  cfg.feature_dim = feature_dim;
  cfg.num_classes = num_classes;
  cfg.n_owners = n_owners;
  cfg.cluster_spread = cluster_spread;
  cfg.seed = seed;
  return make_synthetic_corpus(cfg);
}

std::vector<std::size_t> label_histogram(const Dataset& data) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(data.num_classes), 0);
  for (const auto& ex : data.examples) ++counts[static_cast<std::size_t>(ex.label)];
  return counts;
}

std::vector<std::size_t> label_histogram(const Dataset& data,
                                         std::span<const std::size_t> indices) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(data.num_classes), 0);
  for (std::size_t i : indices)
    ++counts[static_cast<std::size_t>(data.examples.at(i).label)];
  return counts;
}

void save_dataset(const std::filesystem::path& path, const Dataset& data) {
  data.validate();
  detail::json j;
  j["format_version"] = 1;
  j["num_classes"] = data.num_classes;
  j["feature_dim"] = data.feature_dim;
  auto& arr = j["examples"] = detail::json::array();
  for (const auto& ex : data.examples) {
    detail::json e;
    e["features"] = ex.features;
    e["label"] = ex.label;
    e["owner"] = ex.repo_owner;
    arr.push_back(std::move(e));
  }
  detail::write_text_file(path, j.dump());
}

Dataset load_dataset(const std::filesystem::path& path) {
  const auto j = detail::read_json_file(path);
  const std::string where = "dataset " + path.string();
  Dataset data;
  data.num_classes = detail::require_field<int>(j, "num_classes", where);
  data.feature_dim = detail::require_field<int>(j, "feature_dim", where);
  if (!j.contains("examples") || !j.at("examples").is_array())
    throw std::runtime_error(where + ": missing examples array");
  for (const auto& e : j.at("examples")) {
    LabeledExample ex;
    ex.features = detail::require_field<std::vector<double>>(e, "features", where);
    ex.label = detail::require_field<int>(e, "label", where);
    ex.repo_owner = detail::require_field<std::string>(e, "owner", where);
    data.examples.push_back(std::move(ex));
  }
  data.validate();
  return data;
}

}  // namespace fedsim
