#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fedsim/aggregation.hpp"
#include "fedsim/dataset.hpp"
#include "fedsim/model.hpp"
#include "fedsim/params.hpp"

namespace fedsim::gov {

// Benchmark acceptance gate: a release candidate must reach min_score on the
// primary metric and may not lose more than regression_tolerance on any of
// the no-regression metrics.
struct GateConfig {
  std::string benchmark_dataset;  // path to a Dataset file
  std::string primary_metric = "accuracy";
  double min_score = 0.8;
  std::vector<std::string> no_regression_metrics;
  double regression_tolerance = 0.0;
};

struct RegistryOptions {
  std::size_t genesis_num_examples = 1000;  // head weight in the first merge
  int tokens_per_accept = 10;
  AggregationKind merge_strategy = AggregationKind::fedavg;
  std::function<std::int64_t()> clock;  // unix seconds; system clock when empty
};

struct ModelVersion {
  int version_id = 0;
  std::optional<int> parent;       // empty for genesis
  std::string checkpoint_ref;      // relative to the registry directory
  std::map<std::string, double> benchmark_scores;  // empty only for genesis
  std::string contributor;
  std::int64_t created_at = 0;
  std::string notes;               // newly incorporated features
  std::optional<int> contribution_id;
  std::size_t cumulative_examples = 0;
};

enum class ContributionStatus { pending, accepted, rejected };

std::string to_string(ContributionStatus s);

struct MetricDelta {
  double before = 0.0;
  double after = 0.0;
};

struct GateReport {
  std::map<std::string, MetricDelta> metrics;
  bool pass = false;
  std::string candidate_checkpoint;
};

struct Contribution {
  int contribution_id = 0;
  std::string contributor;
  int base_version = 0;
  std::string update_checkpoint;
  std::size_t claimed_num_examples = 0;
  std::optional<std::string> new_test_set;  // extra dataset the contributor publishes
  ContributionStatus status = ContributionStatus::pending;
  std::optional<GateReport> gate_report;
  std::string notes;
};

// Contribution as submitted; the registry assigns the id and checkpoint ref.
struct ContributionDraft {
  std::string contributor;
  int base_version = 0;
  ParameterVector update;
  std::size_t claimed_num_examples = 0;
  std::optional<std::string> new_test_set;
  std::string notes;
};

struct LedgerEvent {
  int seq = 0;
  std::string contributor;
  int contribution_id = 0;
  int tokens = 0;
  std::string reason;
};

// Append-only contribution-token ledger; balances are the fold of the events.
class Ledger {
 public:
  void append(LedgerEvent event);
  const std::vector<LedgerEvent>& events() const { return events_; }
  std::map<std::string, long long> balances() const;

  static Ledger replay(const std::vector<LedgerEvent>& events);

 private:
  std::vector<LedgerEvent> events_;
};

enum class Verdict { accept, reject };

// Versioned model registry persisted as a directory:
//   manifest.json           model/gate configuration, written once at init
//   versions.ndjson         append-only version chain (one record per line)
//   contributions.ndjson    append-only contribution events
//   ledger.ndjson           append-only token awards
//   checkpoints/            parameter checkpoints
// Every record carries an fnv1a-64 checksum; open() verifies checksums and
// parent links and refuses corrupted stores. Mutations follow a single-writer
// contract.
class Registry {
 public:
  static Registry init(const std::filesystem::path& dir, const ModelSpec& spec,
                       const ParameterVector& genesis_params, const GateConfig& gate,
                       RegistryOptions options = {});
  static Registry open(const std::filesystem::path& dir, RegistryOptions options = {});

  // Stores a pending contribution; rejects stale bases and layout mismatches.
  int submit(const ContributionDraft& draft);

  // Merges head and update via the configured strategy (FedAvg weighted by
  // accumulated/claimed example counts by default), evaluates the candidate
  // against the benchmark, and records before/after per metric.
  GateReport evaluate_gate(int contribution_id);

  // accept requires a passing gate report; creates the next version and
  // awards tokens. reject closes the contribution without touching the head.
  std::optional<ModelVersion> decide(int contribution_id, Verdict verdict,
                                     const std::string& reviewer);

  // Manual token grant against an accepted contribution.
  void award_tokens(const std::string& contributor, int contribution_id, int tokens,
                    const std::string& reason);

  const ModelVersion& head() const;
  std::vector<std::pair<ModelVersion, std::optional<Contribution>>> history() const;
  const std::vector<ModelVersion>& versions() const { return versions_; }
  const Contribution& contribution(int contribution_id) const;
  const std::vector<Contribution>& contributions() const { return contributions_; }
  const Ledger& ledger() const { return ledger_; }
  const ModelSpec& spec() const { return spec_; }
  const GateConfig& gate() const { return gate_; }
  const std::filesystem::path& dir() const { return dir_; }

  ParameterVector load_version_params(int version_id) const;

 private:
  Registry() = default;

  std::int64_t now() const;
  std::map<std::string, double> benchmark_scores(const ParameterVector& params,
                                                 const Dataset& benchmark) const;
  Dataset load_benchmark() const;
  void append_version_record(const ModelVersion& v);
  void append_contribution_event(const std::string& kind, const Contribution& c);
  void append_ledger_record(const LedgerEvent& e);
  Contribution& contribution_mut(int contribution_id);

  std::filesystem::path dir_;
  ModelSpec spec_;
  GateConfig gate_;
  RegistryOptions options_;
  std::vector<ModelVersion> versions_;
  std::vector<Contribution> contributions_;
  Ledger ledger_;
};

}  // namespace fedsim::gov
