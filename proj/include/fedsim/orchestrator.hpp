#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fedsim/aggregation.hpp"
#include "fedsim/dataset.hpp"
#include "fedsim/model.hpp"
#include "fedsim/partition.hpp"

namespace fedsim {

enum class RunMode { federated, centralized, single_client };

std::string to_string(RunMode mode);
RunMode run_mode_from_string(const std::string& s);

// Inline partition parameters; the plan is built on the training split, after
// the eval split has been carved out.
struct PartitionConfig {
  PartitionStrategy strategy = PartitionStrategy::uniform;
  int n_clients = 10;
  double alpha = 0.5;       // label_imbalanced
  double size_ratio = 4.0;  // quantity_imbalanced
  double fraction = 0.1;    // single_client
};

struct ExperimentConfig {
  RunMode mode = RunMode::federated;
  ModelSpec model;
  TrainConfig train;
  AggregationConfig aggregation;
  PartitionConfig partition;
  SyntheticCorpusConfig corpus;
  int rounds = 30;
  double eval_split_fraction = 0.1;
  std::int64_t seed = 0;
  double participation = 1.0;        // fraction of clients drawn each round
  std::vector<int> sign_flip_clients;  // fault injection: these clients submit negated parameters

  void validate() const;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);
void save_experiment_config(const std::filesystem::path& path, const ExperimentConfig& cfg);

struct RoundReport {
  int round = 0;
  std::map<std::string, double> global_metrics;
  std::map<int, double> per_client_loss;
  std::vector<int> participating_clients;
};

struct RunResult {
  ParameterVector final_params;
  std::vector<RoundReport> reports;
};

// Eval indices are drawn before any partitioning; train and eval are disjoint
// by construction and both returned sorted.
struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> eval;
};
SplitIndices split_eval_indices(std::size_t n, double eval_fraction, std::uint64_t seed);

// accuracy, loss (mean cross-entropy), and f1 for binary tasks.
std::map<std::string, double> evaluate_model(const ModelSpec& spec,
                                             const ParameterVector& params,
                                             const Dataset& data);

// One round: broadcast global params, local-train every participating client
// (global params double as the proximal anchor), aggregate, evaluate.
RunResult run_federated(const ExperimentConfig& cfg, const Dataset& corpus);

// One model trained on the union of all training data for `rounds` epochs;
// equals local_train(full corpus, epochs=rounds, seed=train.seed) exactly.
RunResult run_centralized(const ExperimentConfig& cfg, const Dataset& corpus);

// The centralized loop restricted to a single sampled client subset.
RunResult run_single_client(const ExperimentConfig& cfg, const Dataset& corpus);

RunResult run_experiment(const ExperimentConfig& cfg, const Dataset& corpus);
RunResult run_experiment(const ExperimentConfig& cfg);  // corpus from cfg.corpus

struct LabeledRun {
  std::string label;
  RunMode mode = RunMode::federated;
  std::vector<RoundReport> reports;
};

struct ComparisonRow {
  std::string label;
  std::map<std::string, double> metrics;  // final-round metrics
  std::map<std::string, double> delta;    // vs the centralized row
};

// Rows keep input order; deltas are taken against the first centralized run
// (or the first row when no run is centralized).
struct ComparisonTable {
  std::vector<std::string> metric_names;
  std::vector<ComparisonRow> rows;
};

ComparisonTable compare_runs(std::span<const LabeledRun> runs);
std::string render_comparison(const ComparisonTable& table);

void write_reports_ndjson(const std::filesystem::path& path,
                          std::span<const RoundReport> reports);
void write_reports_csv(const std::filesystem::path& path,
                       std::span<const RoundReport> reports);
std::vector<RoundReport> load_reports_ndjson(const std::filesystem::path& path);

}  // namespace fedsim
