#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace fedsim {

struct LabeledExample {
  std::vector<double> features;
  int label = 0;
  std::string repo_owner;
};

// Labeled corpus with a uniform feature dimension and label range.
struct Dataset {
  std::vector<LabeledExample> examples;
  int num_classes = 0;
  int feature_dim = 0;

  std::size_t size() const { return examples.size(); }
  void validate() const;
  Dataset subset(std::span<const std::size_t> indices) const;
};

// Synthetic stand-in for a multi-organization code corpus. Every owner gets a
// Gaussian feature-cluster center; an example samples (owner, class) and then
// features from the owner-class center. Owner structure makes by-repository
// partitioning induce real covariate shift.
struct SyntheticCorpusConfig {
  std::size_t n_examples = 10000;
  int feature_dim = 20;
  int num_classes = 5;
  int n_owners = 50;
  double cluster_spread = 1.0;
  std::int64_t seed = 0;

  void validate() const;
};

Dataset make_synthetic_corpus(const SyntheticCorpusConfig& cfg);
Dataset make_synthetic_corpus(std::size_t n_examples, int feature_dim, int num_classes,
                              int n_owners, double cluster_spread, std::int64_t seed);

// Per-class example counts over `indices` (or the whole dataset).
std::vector<std::size_t> label_histogram(const Dataset& data);
std::vector<std::size_t> label_histogram(const Dataset& data,
                                         std::span<const std::size_t> indices);

void save_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace fedsim
