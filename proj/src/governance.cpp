#include "fedsim/governance.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <stdexcept>

#include "fedsim/checkpoint.hpp"
#include "fedsim/orchestrator.hpp"
#include "json_util.hpp"

namespace fedsim::gov {

using detail::json;

std::string to_string(ContributionStatus s) {
  switch (s) {
    case ContributionStatus::pending: return "pending";
    case ContributionStatus::accepted: return "accepted";
    case ContributionStatus::rejected: return "rejected";
  }
  throw std::logic_error("unknown contribution status");
}

namespace {

ContributionStatus status_from_string(const std::string& s) {
  if (s == "pending") return ContributionStatus::pending;
  if (s == "accepted") return ContributionStatus::accepted;
  if (s == "rejected") return ContributionStatus::rejected;
  throw std::runtime_error("unknown contribution status: " + s);
}

constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kVersionsFile = "versions.ndjson";
constexpr const char* kContributionsFile = "contributions.ndjson";
constexpr const char* kLedgerFile = "ledger.ndjson";
constexpr const char* kCheckpointDir = "checkpoints";

// Record line = JSON object with a "checksum" field over the rest of the
// object's canonical dump. Tampering with any field breaks the checksum.
std::string seal_record(json record) {
  record.erase("checksum");
  const std::string payload = record.dump();
  record["checksum"] = detail::fnv1a64_hex(payload);
  return record.dump();
}

json verify_record(const std::string& line, const std::string& where) {
  json record;
  try {
    record = json::parse(line);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(where + ": corrupted record (bad JSON): " + e.what());
  }
  if (!record.contains("checksum"))
    throw std::runtime_error(where + ": corrupted record (missing checksum)");
  const std::string stored = record.at("checksum").get<std::string>();
  json stripped = record;
  stripped.erase("checksum");
  if (detail::fnv1a64_hex(stripped.dump()) != stored)
    throw std::runtime_error(where + ": corrupted record (checksum mismatch)");
  return record;
}

std::vector<json> read_records(const std::filesystem::path& path, const std::string& where) {
  std::vector<json> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    out.push_back(verify_record(line, where + ":" + std::to_string(lineno)));
  }
  return out;
}

json gate_report_to_json(const GateReport& r) {
  json metrics = json::object();
  for (const auto& [name, delta] : r.metrics)
    metrics[name] = {{"before", delta.before}, {"after", delta.after}};
  return {{"metrics", metrics}, {"pass", r.pass},
          {"candidate_checkpoint", r.candidate_checkpoint}};
}

GateReport gate_report_from_json(const json& j) {
  GateReport r;
  r.pass = j.at("pass").get<bool>();
  r.candidate_checkpoint = j.at("candidate_checkpoint").get<std::string>();
  for (const auto& [name, delta] : j.at("metrics").items())
    r.metrics[name] = {delta.at("before").get<double>(), delta.at("after").get<double>()};
  return r;
}

json version_to_json(const ModelVersion& v) {
  json j;
  j["version_id"] = v.version_id;
  if (v.parent) j["parent"] = *v.parent;
  else j["parent"] = nullptr;
  j["checkpoint"] = v.checkpoint_ref;
  j["benchmark_scores"] = v.benchmark_scores;
  j["contributor"] = v.contributor;
  j["created_at"] = v.created_at;
  j["notes"] = v.notes;
  if (v.contribution_id) j["contribution_id"] = *v.contribution_id;
  j["cumulative_examples"] = v.cumulative_examples;
  return j;
}

ModelVersion version_from_json(const json& j, const std::string& where) {
  ModelVersion v;
  v.version_id = detail::require_field<int>(j, "version_id", where);
  if (j.contains("parent") && !j.at("parent").is_null()) v.parent = j.at("parent").get<int>();
  v.checkpoint_ref = detail::require_field<std::string>(j, "checkpoint", where);
  v.benchmark_scores =
      detail::require_field<std::map<std::string, double>>(j, "benchmark_scores", where);
  v.contributor = detail::require_field<std::string>(j, "contributor", where);
  v.created_at = detail::require_field<std::int64_t>(j, "created_at", where);
  v.notes = detail::require_field<std::string>(j, "notes", where);
  if (j.contains("contribution_id") && !j.at("contribution_id").is_null())
    v.contribution_id = j.at("contribution_id").get<int>();
  v.cumulative_examples = detail::require_field<std::size_t>(j, "cumulative_examples", where);
  return v;
}

}  // namespace

void Ledger::append(LedgerEvent event) {
  if (event.tokens < 1) throw std::invalid_argument("ledger: token amount must be positive");
  if (event.seq != static_cast<int>(events_.size()))
    throw std::invalid_argument("ledger: non-contiguous sequence number");
  events_.push_back(std::move(event));
}

std::map<std::string, long long> Ledger::balances() const {
  std::map<std::string, long long> out;
  for (const auto& e : events_) out[e.contributor] += e.tokens;
  return out;
}

Ledger Ledger::replay(const std::vector<LedgerEvent>& events) {
  Ledger ledger;
  for (const auto& e : events) ledger.append(e);
  return ledger;
}

std::int64_t Registry::now() const {
  if (options_.clock) return options_.clock();
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

Dataset Registry::load_benchmark() const {
  std::filesystem::path p = gate_.benchmark_dataset;
  if (p.is_relative() && std::filesystem::exists(dir_ / p)) p = dir_ / p;
  return load_dataset(p);
}

std::map<std::string, double> Registry::benchmark_scores(const ParameterVector& params,
                                                         const Dataset& benchmark) const {
  auto metrics = evaluate_model(spec_, params, benchmark);
  metrics.erase("loss");  // gate metrics are score-valued: higher is better
  return metrics;
}

Registry Registry::init(const std::filesystem::path& dir, const ModelSpec& spec,
                        const ParameterVector& genesis_params, const GateConfig& gate,
                        RegistryOptions options) {
  spec.validate();
  if (genesis_params.segments() != spec.layout())
    throw std::invalid_argument("genesis parameters do not match the model spec");
  if (options.genesis_num_examples == 0)
    throw std::invalid_argument("genesis_num_examples must be positive");
  if (options.tokens_per_accept < 1)
    throw std::invalid_argument("tokens_per_accept must be positive");
  if (std::filesystem::exists(dir / kManifestFile))
    throw std::invalid_argument("registry already exists at " + dir.string());

  Registry reg;
  reg.dir_ = dir;
  reg.spec_ = spec;
  reg.gate_ = gate;
  reg.options_ = std::move(options);

  // Fail early on an unusable gate: the benchmark must load and expose the
  // configured metrics.
  const Dataset benchmark = reg.load_benchmark();
  const auto available = reg.benchmark_scores(genesis_params, benchmark);
  if (!available.count(gate.primary_metric))
    throw std::invalid_argument("primary metric '" + gate.primary_metric +
                                "' is not produced by the benchmark evaluation");
  for (const auto& name : gate.no_regression_metrics)
    if (!available.count(name))
      throw std::invalid_argument("no-regression metric '" + name +
                                  "' is not produced by the benchmark evaluation");
  if (gate.regression_tolerance < 0.0)
    throw std::invalid_argument("regression_tolerance must be non-negative");

  std::filesystem::create_directories(dir / kCheckpointDir);

  json manifest;
  manifest["format_version"] = 1;
  manifest["spec"] = {{"kind", fedsim::to_string(spec.kind)},
                      {"feature_dim", spec.feature_dim},
                      {"num_classes", spec.num_classes}};
  if (spec.kind == ModelKind::mlp) manifest["spec"]["hidden_dim"] = spec.hidden_dim;
  manifest["gate"] = {{"benchmark_dataset", gate.benchmark_dataset},
                      {"primary_metric", gate.primary_metric},
                      {"min_score", gate.min_score},
                      {"no_regression_metrics", gate.no_regression_metrics},
                      {"regression_tolerance", gate.regression_tolerance}};
  manifest["genesis_num_examples"] = reg.options_.genesis_num_examples;
  manifest["tokens_per_accept"] = reg.options_.tokens_per_accept;
  manifest["merge_strategy"] = fedsim::to_string(reg.options_.merge_strategy);
  detail::write_text_file(dir / kManifestFile, manifest.dump(2) + "\n");

  const std::string ckpt = std::string(kCheckpointDir) + "/v0.json";
  save_checkpoint(dir / ckpt, spec, genesis_params);

  ModelVersion genesis;
  genesis.version_id = 0;
  genesis.checkpoint_ref = ckpt;
  genesis.contributor = "genesis";
  genesis.created_at = reg.now();
  genesis.notes = "genesis model";
  genesis.cumulative_examples = reg.options_.genesis_num_examples;
  reg.append_version_record(genesis);
  reg.versions_.push_back(std::move(genesis));
  return reg;
}

Registry Registry::open(const std::filesystem::path& dir, RegistryOptions options) {
  const auto manifest_path = dir / kManifestFile;
  if (!std::filesystem::exists(manifest_path))
    throw std::runtime_error("no registry at " + dir.string());
  const json manifest = detail::read_json_file(manifest_path);
  const std::string where = "registry " + dir.string();

  Registry reg;
  reg.dir_ = dir;
  const auto& js = manifest.at("spec");
  reg.spec_.kind = model_kind_from_string(js.at("kind").get<std::string>());
  reg.spec_.feature_dim = js.at("feature_dim").get<int>();
  reg.spec_.num_classes = js.at("num_classes").get<int>();
  if (js.contains("hidden_dim")) reg.spec_.hidden_dim = js.at("hidden_dim").get<int>();
  const auto& jg = manifest.at("gate");
  reg.gate_.benchmark_dataset = jg.at("benchmark_dataset").get<std::string>();
  reg.gate_.primary_metric = jg.at("primary_metric").get<std::string>();
  reg.gate_.min_score = jg.at("min_score").get<double>();
  reg.gate_.no_regression_metrics =
      jg.at("no_regression_metrics").get<std::vector<std::string>>();
  reg.gate_.regression_tolerance = jg.at("regression_tolerance").get<double>();
  reg.options_ = std::move(options);
  reg.options_.genesis_num_examples = manifest.at("genesis_num_examples").get<std::size_t>();
  reg.options_.tokens_per_accept = manifest.at("tokens_per_accept").get<int>();
  reg.options_.merge_strategy =
      aggregation_kind_from_string(manifest.at("merge_strategy").get<std::string>());

  // Versions: verify the parent chain record by record.
  for (const auto& rec : read_records(dir / kVersionsFile, where + "/versions")) {
    ModelVersion v = version_from_json(rec, where);
    if (reg.versions_.empty()) {
      if (v.version_id != 0 || v.parent)
        throw std::runtime_error(where + ": corrupted chain (bad genesis record)");
    } else {
      const auto& prev = reg.versions_.back();
      if (v.version_id != prev.version_id + 1 || !v.parent || *v.parent != prev.version_id)
        throw std::runtime_error(where + ": corrupted chain (broken parent link at version " +
                                 std::to_string(v.version_id) + ")");
    }
    reg.versions_.push_back(std::move(v));
  }
  if (reg.versions_.empty()) throw std::runtime_error(where + ": no versions recorded");

  // Contributions: fold the event stream.
  for (const auto& rec : read_records(dir / kContributionsFile, where + "/contributions")) {
    const std::string kind = rec.at("event").get<std::string>();
    if (kind == "submitted") {
      Contribution c;
      c.contribution_id = rec.at("contribution_id").get<int>();
      c.contributor = rec.at("contributor").get<std::string>();
      c.base_version = rec.at("base_version").get<int>();
      c.update_checkpoint = rec.at("update_checkpoint").get<std::string>();
      c.claimed_num_examples = rec.at("claimed_num_examples").get<std::size_t>();
      if (rec.contains("new_test_set") && !rec.at("new_test_set").is_null())
        c.new_test_set = rec.at("new_test_set").get<std::string>();
      c.notes = rec.at("notes").get<std::string>();
      c.status = ContributionStatus::pending;
      if (c.contribution_id != static_cast<int>(reg.contributions_.size()) + 1)
        throw std::runtime_error(where + ": corrupted contributions (bad id sequence)");
      reg.contributions_.push_back(std::move(c));
    } else if (kind == "gated") {
      auto& c = reg.contribution_mut(rec.at("contribution_id").get<int>());
      c.gate_report = gate_report_from_json(rec.at("report"));
    } else if (kind == "decided") {
      auto& c = reg.contribution_mut(rec.at("contribution_id").get<int>());
      if (c.status != ContributionStatus::pending)
        throw std::runtime_error(where + ": corrupted contributions (double decision)");
      c.status = status_from_string(rec.at("status").get<std::string>());
    } else {
      throw std::runtime_error(where + ": unknown contribution event '" + kind + "'");
    }
  }

  for (const auto& rec : read_records(dir / kLedgerFile, where + "/ledger")) {
    LedgerEvent e;
    e.seq = rec.at("seq").get<int>();
    e.contributor = rec.at("contributor").get<std::string>();
    e.contribution_id = rec.at("contribution_id").get<int>();
    e.tokens = rec.at("tokens").get<int>();
    e.reason = rec.at("reason").get<std::string>();
    reg.ledger_.append(std::move(e));
  }
  return reg;
}

void Registry::append_version_record(const ModelVersion& v) {
  detail::append_line(dir_ / kVersionsFile, seal_record(version_to_json(v)));
}

void Registry::append_contribution_event(const std::string& kind, const Contribution& c) {
  json j;
  j["event"] = kind;
  j["contribution_id"] = c.contribution_id;
  if (kind == "submitted") {
    j["contributor"] = c.contributor;
    j["base_version"] = c.base_version;
    j["update_checkpoint"] = c.update_checkpoint;
    j["claimed_num_examples"] = c.claimed_num_examples;
    if (c.new_test_set) j["new_test_set"] = *c.new_test_set;
    else j["new_test_set"] = nullptr;
    j["notes"] = c.notes;
  } else if (kind == "gated") {
    j["report"] = gate_report_to_json(*c.gate_report);
  } else if (kind == "decided") {
    j["status"] = to_string(c.status);
  }
  detail::append_line(dir_ / kContributionsFile, seal_record(std::move(j)));
}

void Registry::append_ledger_record(const LedgerEvent& e) {
  json j;
  j["seq"] = e.seq;
  j["contributor"] = e.contributor;
  j["contribution_id"] = e.contribution_id;
  j["tokens"] = e.tokens;
  j["reason"] = e.reason;
  detail::append_line(dir_ / kLedgerFile, seal_record(std::move(j)));
}

const ModelVersion& Registry::head() const {
  if (versions_.empty()) throw std::logic_error("registry has no versions");
  return versions_.back();
}

Contribution& Registry::contribution_mut(int contribution_id) {
  if (contribution_id < 1 || contribution_id > static_cast<int>(contributions_.size()))
    throw std::invalid_argument("unknown contribution id " + std::to_string(contribution_id));
  return contributions_[static_cast<std::size_t>(contribution_id - 1)];
}

const Contribution& Registry::contribution(int contribution_id) const {
  return const_cast<Registry*>(this)->contribution_mut(contribution_id);
}

ParameterVector Registry::load_version_params(int version_id) const {
  for (const auto& v : versions_)
    if (v.version_id == version_id) return load_checkpoint(dir_ / v.checkpoint_ref).params;
  throw std::invalid_argument("unknown version id " + std::to_string(version_id));
}

int Registry::submit(const ContributionDraft& draft) {
  if (draft.contributor.empty()) throw std::invalid_argument("contributor must be named");
  if (draft.claimed_num_examples == 0)
    throw std::invalid_argument("claimed_num_examples must be positive");
  if (draft.base_version != head().version_id)
    throw std::invalid_argument("stale base version " + std::to_string(draft.base_version) +
                                " (head is " + std::to_string(head().version_id) + ")");
  if (draft.update.segments() != spec_.layout())
    throw std::invalid_argument("update is not layout-compatible with the registry spec");

  Contribution c;
  c.contribution_id = static_cast<int>(contributions_.size()) + 1;
  c.contributor = draft.contributor;
  c.base_version = draft.base_version;
  c.claimed_num_examples = draft.claimed_num_examples;
  c.new_test_set = draft.new_test_set;
  c.notes = draft.notes;
  c.status = ContributionStatus::pending;
  c.update_checkpoint =
      std::string(kCheckpointDir) + "/contrib_" + std::to_string(c.contribution_id) + ".json";
  save_checkpoint(dir_ / c.update_checkpoint, spec_, draft.update);

  append_contribution_event("submitted", c);
  contributions_.push_back(c);
  return c.contribution_id;
}

GateReport Registry::evaluate_gate(int contribution_id) {
  Contribution& c = contribution_mut(contribution_id);
  if (c.status != ContributionStatus::pending)
    throw std::invalid_argument("contribution " + std::to_string(contribution_id) +
                                " is not pending");
  if (c.base_version != head().version_id)
    throw std::invalid_argument("contribution " + std::to_string(contribution_id) +
                                " is stale: base " + std::to_string(c.base_version) +
                                ", head " + std::to_string(head().version_id));

  const ParameterVector head_params = load_version_params(head().version_id);
  const ParameterVector update = load_checkpoint(dir_ / c.update_checkpoint).params;

  // Candidate = merge of head and update, weighted by accumulated vs claimed
  // example counts, through the same aggregators the training rounds use.
  std::vector<ClientUpdate> two(2);
  two[0].client_id = 0;
  two[0].params = head_params;
  two[0].num_examples = head().cumulative_examples;
  two[1].client_id = 1;
  two[1].params = update;
  two[1].num_examples = c.claimed_num_examples;
  const ParameterVector candidate = aggregate(two, AggregationConfig{options_.merge_strategy});

  const Dataset benchmark = load_benchmark();
  const auto before = benchmark_scores(head_params, benchmark);
  const auto after = benchmark_scores(candidate, benchmark);

  GateReport report;
  for (const auto& [name, value] : before) report.metrics[name] = {value, after.at(name)};
  if (c.new_test_set) {
    std::filesystem::path p = *c.new_test_set;
    if (p.is_relative() && std::filesystem::exists(dir_ / p)) p = dir_ / p;
    const Dataset extra = load_dataset(p);
    const auto extra_before = benchmark_scores(head_params, extra);
    const auto extra_after = benchmark_scores(candidate, extra);
    for (const auto& [name, value] : extra_before)
      report.metrics["new_test_" + name] = {value, extra_after.at(name)};
  }

  bool pass = report.metrics.at(gate_.primary_metric).after >= gate_.min_score;
  for (const auto& name : gate_.no_regression_metrics) {
    const auto& delta = report.metrics.at(name);
    if (delta.after < delta.before - gate_.regression_tolerance) pass = false;
  }
  report.pass = pass;
  report.candidate_checkpoint =
      std::string(kCheckpointDir) + "/candidate_" + std::to_string(contribution_id) + ".json";
  save_checkpoint(dir_ / report.candidate_checkpoint, spec_, candidate);

  c.gate_report = report;
  append_contribution_event("gated", c);
  return report;
}

std::optional<ModelVersion> Registry::decide(int contribution_id, Verdict verdict,
                                             const std::string& reviewer) {
  if (reviewer.empty()) throw std::invalid_argument("reviewer must be named");
  Contribution& c = contribution_mut(contribution_id);
  if (c.status != ContributionStatus::pending)
    throw std::invalid_argument("contribution " + std::to_string(contribution_id) +
                                " already decided");
  if (!c.gate_report)
    throw std::invalid_argument("contribution " + std::to_string(contribution_id) +
                                " has no gate report");

  if (verdict == Verdict::reject) {
    c.status = ContributionStatus::rejected;
    append_contribution_event("decided", c);
    return std::nullopt;
  }

  if (!c.gate_report->pass)
    throw std::invalid_argument("cannot accept contribution " +
                                std::to_string(contribution_id) + ": gate did not pass");
  if (c.base_version != head().version_id)
    throw std::invalid_argument("contribution " + std::to_string(contribution_id) +
                                " is stale and cannot merge");

  const ParameterVector candidate =
      load_checkpoint(dir_ / c.gate_report->candidate_checkpoint).params;

  ModelVersion v;
  v.version_id = head().version_id + 1;
  v.parent = head().version_id;
  v.checkpoint_ref = std::string(kCheckpointDir) + "/v" + std::to_string(v.version_id) + ".json";
  for (const auto& [name, delta] : c.gate_report->metrics) v.benchmark_scores[name] = delta.after;
  v.contributor = c.contributor;
  v.created_at = now();
  v.notes = c.notes.empty() ? ("merge of contribution " + std::to_string(contribution_id))
                            : c.notes;
  v.contribution_id = contribution_id;
  v.cumulative_examples = head().cumulative_examples + c.claimed_num_examples;
  save_checkpoint(dir_ / v.checkpoint_ref, spec_, candidate);

  c.status = ContributionStatus::accepted;
  append_contribution_event("decided", c);
  append_version_record(v);
  versions_.push_back(v);

  LedgerEvent e;
  e.seq = static_cast<int>(ledger_.events().size());
  e.contributor = c.contributor;
  e.contribution_id = contribution_id;
  e.tokens = options_.tokens_per_accept;
  e.reason = "contribution accepted by " + reviewer;
  append_ledger_record(e);
  ledger_.append(std::move(e));

  return v;
}

void Registry::award_tokens(const std::string& contributor, int contribution_id, int tokens,
                            const std::string& reason) {
  if (tokens < 1) throw std::invalid_argument("token amount must be positive");
  const Contribution& c = contribution(contribution_id);
  if (c.status != ContributionStatus::accepted)
    throw std::invalid_argument("tokens can only be awarded for accepted contributions");

  LedgerEvent e;
  e.seq = static_cast<int>(ledger_.events().size());
  e.contributor = contributor;
  e.contribution_id = contribution_id;
  e.tokens = tokens;
  e.reason = reason;
  append_ledger_record(e);
  ledger_.append(std::move(e));
}

std::vector<std::pair<ModelVersion, std::optional<Contribution>>> Registry::history() const {
  std::vector<std::pair<ModelVersion, std::optional<Contribution>>> out;
  for (std::size_t i = 0; i < versions_.size(); ++i) {
    const auto& v = versions_[i];
    if (i == 0) {
      if (v.version_id != 0 || v.parent)
        throw std::runtime_error("corrupted chain: bad genesis version");
    } else if (!v.parent || *v.parent != versions_[i - 1].version_id ||
               v.version_id != versions_[i - 1].version_id + 1) {
      throw std::runtime_error("corrupted chain: broken parent link at version " +
                               std::to_string(v.version_id));
    }
    std::optional<Contribution> c;
    if (v.contribution_id) c = contribution(*v.contribution_id);
    out.emplace_back(v, std::move(c));
  }
  return out;
}

}  // namespace fedsim::gov
