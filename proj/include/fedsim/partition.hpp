#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fedsim/dataset.hpp"

namespace fedsim {

enum class PartitionStrategy {
  uniform,
  label_imbalanced,
  quantity_imbalanced,
  by_repository,
  single_client,
};

std::string to_string(PartitionStrategy s);
PartitionStrategy partition_strategy_from_string(const std::string& s);

// Strategy-tagged assignment of example indices to clients. Assignment lists
// are pairwise disjoint, nonempty, and index into the source dataset.
struct PartitionPlan {
  PartitionStrategy strategy = PartitionStrategy::uniform;
  std::int64_t seed = 0;
  std::map<std::string, double> params;                 // strategy parameters, e.g. alpha
  std::map<int, std::vector<std::size_t>> assignments;  // client id -> example indices

  std::size_t n_clients() const { return assignments.size(); }
  void validate(const Dataset& data) const;
};

// Evenly sized clients with near-global label proportions (stratified deal).
PartitionPlan partition_uniform(const Dataset& data, int n_clients, std::int64_t seed);

// Similar client sizes, per-client label mix drawn from Dirichlet(alpha).
// Small alpha concentrates each client on few classes; large alpha degrades
// to the uniform strategy.
PartitionPlan partition_label_imbalanced(const Dataset& data, int n_clients, double alpha,
                                         std::int64_t seed);

// Geometric client sizes with largest/smallest == size_ratio, label
// proportions kept near-global on every client.
PartitionPlan partition_quantity_imbalanced(const Dataset& data, int n_clients,
                                            double size_ratio, std::int64_t seed);

// No repo owner spans two clients: owners are shuffled (seeded tie-break),
// then placed largest-first onto the currently smallest client.
PartitionPlan partition_by_repository(const Dataset& data, int n_clients, std::int64_t seed);

// One client holding a uniform random sample of round(fraction * |data|) indices.
PartitionPlan select_single_client(const Dataset& data, double fraction, std::int64_t seed);

void save_plan(const std::filesystem::path& path, const PartitionPlan& plan);
PartitionPlan load_plan(const std::filesystem::path& path);

}  // namespace fedsim
