#include "fedsim/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "fedsim/metrics.hpp"
#include "fedsim/rng.hpp"
#include "json_util.hpp"

namespace fedsim {

namespace {

// Stream tags for deriving independent seeds from the experiment seed.
constexpr std::uint64_t kStreamSplit = 0x51;
constexpr std::uint64_t kStreamPlan = 0x52;
constexpr std::uint64_t kStreamClient = 0x53;
constexpr std::uint64_t kStreamParticipation = 0x54;

}  // namespace

std::string to_string(RunMode mode) {
  switch (mode) {
    case RunMode::federated: return "federated";
    case RunMode::centralized: return "centralized";
    case RunMode::single_client: return "single_client";
  }
  throw std::logic_error("unknown run mode");
}

RunMode run_mode_from_string(const std::string& s) {
  if (s == "federated") return RunMode::federated;
  if (s == "centralized") return RunMode::centralized;
  if (s == "single_client") return RunMode::single_client;
  throw std::invalid_argument("unknown run mode: " + s);
}

void ExperimentConfig::validate() const {
  model.validate();
  train.validate();
  corpus.validate();
  if (rounds < 1) throw std::invalid_argument("rounds must be at least 1");
  if (!(eval_split_fraction > 0.0) || !(eval_split_fraction < 1.0))
    throw std::invalid_argument("eval_split_fraction must be in (0, 1)");
  if (!(participation > 0.0) || participation > 1.0)
    throw std::invalid_argument("participation must be in (0, 1]");
  if (mode == RunMode::federated) {
    if (partition.strategy == PartitionStrategy::single_client)
      throw std::invalid_argument("federated mode needs a multi-client partition strategy");
    if (partition.n_clients < 2)
      throw std::invalid_argument("federated mode needs at least 2 clients");
  }
  if (mode == RunMode::single_client &&
      partition.strategy != PartitionStrategy::single_client)
    throw std::invalid_argument("single_client mode requires the single_client strategy");
  if (model.feature_dim != corpus.feature_dim)
    throw std::invalid_argument("model feature_dim does not match corpus feature_dim");
  if (model.num_classes != corpus.num_classes)
    throw std::invalid_argument("model num_classes does not match corpus num_classes");
}

SplitIndices split_eval_indices(std::size_t n, double eval_fraction, std::uint64_t seed) {
  if (!(eval_fraction > 0.0) || !(eval_fraction < 1.0))
    throw std::invalid_argument("eval_fraction must be in (0, 1)");
  const auto want = static_cast<std::size_t>(
      std::llround(eval_fraction * static_cast<double>(n)));
  if (want == 0 || want >= n)
    throw std::invalid_argument("eval split would leave train or eval empty");

  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  auto rng = make_rng(seed);
  std::shuffle(all.begin(), all.end(), rng);

  SplitIndices out;
  out.eval.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(want));
  out.train.assign(all.begin() + static_cast<std::ptrdiff_t>(want), all.end());
  std::sort(out.eval.begin(), out.eval.end());
  std::sort(out.train.begin(), out.train.end());
  return out;
}

std::map<std::string, double> evaluate_model(const ModelSpec& spec,
                                             const ParameterVector& params,
                                             const Dataset& data) {
  std::vector<int> preds, golds;
  preds.reserve(data.size());
  golds.reserve(data.size());
  for (const auto& ex : data.examples) {
    preds.push_back(predict_class(spec, params.values(), ex.features));
    golds.push_back(ex.label);
  }
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});

  std::map<std::string, double> out;
  out["accuracy"] = metrics::accuracy(preds, golds);
  out["loss"] = mean_cross_entropy(spec, params.values(), data, all);
  if (data.num_classes == 2) out["f1"] = metrics::f1_binary(preds, golds);
  return out;
}

namespace {

struct PreparedData {
  Dataset train;
  Dataset eval;
  SplitIndices split;
};

PreparedData prepare(const ExperimentConfig& cfg, const Dataset& corpus) {
  corpus.validate();
  PreparedData out;
  out.split = split_eval_indices(corpus.size(), cfg.eval_split_fraction,
                                 derive_seed(static_cast<std::uint64_t>(cfg.seed), kStreamSplit));
  out.train = corpus.subset(out.split.train);
  out.eval = corpus.subset(out.split.eval);
  return out;
}

PartitionPlan build_plan(const ExperimentConfig& cfg, const Dataset& train) {
  const auto plan_seed = static_cast<std::int64_t>(
      derive_seed(static_cast<std::uint64_t>(cfg.seed), kStreamPlan));
  switch (cfg.partition.strategy) {
    case PartitionStrategy::uniform:
      return partition_uniform(train, cfg.partition.n_clients, plan_seed);
    case PartitionStrategy::label_imbalanced:
      return partition_label_imbalanced(train, cfg.partition.n_clients, cfg.partition.alpha,
                                        plan_seed);
    case PartitionStrategy::quantity_imbalanced:
      return partition_quantity_imbalanced(train, cfg.partition.n_clients,
                                           cfg.partition.size_ratio, plan_seed);
    case PartitionStrategy::by_repository:
      return partition_by_repository(train, cfg.partition.n_clients, plan_seed);
    case PartitionStrategy::single_client:
      return select_single_client(train, cfg.partition.fraction, plan_seed);
  }
  throw std::logic_error("unknown partition strategy");
}

std::vector<int> pick_participants(const ExperimentConfig& cfg, int n_clients, int round) {
  std::vector<int> ids(static_cast<std::size_t>(n_clients));
  std::iota(ids.begin(), ids.end(), 0);
  if (cfg.participation >= 1.0) return ids;
  const auto want = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::ceil(cfg.participation * static_cast<double>(n_clients))));
  auto rng = make_rng(derive_seed(static_cast<std::uint64_t>(cfg.seed), kStreamParticipation,
                                  static_cast<std::uint64_t>(round)));
  std::shuffle(ids.begin(), ids.end(), rng);
  ids.resize(want);
  std::sort(ids.begin(), ids.end());
  return ids;
}

// The training loop shared by the centralized and single-client baselines:
// `rounds` epochs over one index pool, evaluated after each epoch. Epoch r
// shuffles with seed train.seed + r - 1, so the whole run equals a single
// local_train call with epochs == rounds.
RunResult run_epochs(const ExperimentConfig& cfg, const Dataset& train, const Dataset& eval,
                     std::span<const std::size_t> pool) {
  ParameterVector params = init_params(cfg.model, cfg.seed);

  std::vector<RoundReport> reports;
  reports.reserve(static_cast<std::size_t>(cfg.rounds));
  for (int r = 1; r <= cfg.rounds; ++r) {
    TrainConfig step = cfg.train;
    step.epochs = 1;
    step.seed = cfg.train.seed + (r - 1);
    const TrainResult res = local_train(cfg.model, params, train, pool, step, params);
    params = res.params;

    RoundReport report;
    report.round = r;
    report.global_metrics = evaluate_model(cfg.model, params, eval);
    report.per_client_loss[0] = res.train_loss;
    report.participating_clients = {0};
    reports.push_back(std::move(report));
  }
  return {std::move(params), std::move(reports)};
}

}  // namespace

RunResult run_federated(const ExperimentConfig& cfg, const Dataset& corpus) {
  cfg.validate();
  if (cfg.mode != RunMode::federated)
    throw std::invalid_argument("run_federated requires federated mode");

  const PreparedData data = prepare(cfg, corpus);
  const PartitionPlan plan = build_plan(cfg, data.train);
  if (plan.n_clients() < 2)
    throw std::invalid_argument("federated run requires at least 2 clients");

  const std::set<int> flipped(cfg.sign_flip_clients.begin(), cfg.sign_flip_clients.end());

  ParameterVector global = init_params(cfg.model, cfg.seed);
  std::vector<RoundReport> reports;
  reports.reserve(static_cast<std::size_t>(cfg.rounds));

  for (int round = 1; round <= cfg.rounds; ++round) {
    const std::vector<int> participants =
        pick_participants(cfg, static_cast<int>(plan.n_clients()), round);

    // Clients are independent given the broadcast parameters; run them
    // concurrently and collect into fixed slots so scheduling cannot change
    // the result.
    std::vector<ClientUpdate> updates(participants.size());
    {
      std::vector<std::future<void>> tasks;
      tasks.reserve(participants.size());
      for (std::size_t slot = 0; slot < participants.size(); ++slot) {
        tasks.push_back(std::async(std::launch::async, [&, slot] {
          const int client = participants[slot];
          const auto& shard = plan.assignments.at(client);
          TrainConfig local = cfg.train;
          local.seed = static_cast<std::int64_t>(
              derive_seed(static_cast<std::uint64_t>(cfg.seed), kStreamClient,
                          (static_cast<std::uint64_t>(round) << 20) ^
                              static_cast<std::uint64_t>(client)));
          TrainResult res = local_train(cfg.model, global, data.train, shard, local, global);

          ClientUpdate u;
          u.client_id = client;
          u.round = round;
          u.num_examples = shard.size();
          u.train_loss = res.train_loss;
          if (flipped.count(client)) {
            std::vector<double> neg(res.params.values().begin(), res.params.values().end());
            for (double& v : neg) v = -v;
            u.params = ParameterVector(res.params.segments(), std::move(neg));
          } else {
            u.params = std::move(res.params);
          }
          updates[slot] = std::move(u);
        }));
      }
      for (auto& t : tasks) t.get();
    }

    global = aggregate(updates, cfg.aggregation);

    RoundReport report;
    report.round = round;
    report.global_metrics = evaluate_model(cfg.model, global, data.eval);
    for (const auto& u : updates) report.per_client_loss[u.client_id] = u.train_loss;
    report.participating_clients = participants;
    reports.push_back(std::move(report));
  }
  return {std::move(global), std::move(reports)};
}

RunResult run_centralized(const ExperimentConfig& cfg, const Dataset& corpus) {
  cfg.validate();
  if (cfg.mode != RunMode::centralized)
    throw std::invalid_argument("run_centralized requires centralized mode");
  const PreparedData data = prepare(cfg, corpus);
  std::vector<std::size_t> pool(data.train.size());
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  return run_epochs(cfg, data.train, data.eval, pool);
}

RunResult run_single_client(const ExperimentConfig& cfg, const Dataset& corpus) {
  cfg.validate();
  if (cfg.mode != RunMode::single_client)
    throw std::invalid_argument("run_single_client requires single_client mode");
  const PreparedData data = prepare(cfg, corpus);
  const PartitionPlan plan = build_plan(cfg, data.train);
  return run_epochs(cfg, data.train, data.eval, plan.assignments.at(0));
}

RunResult run_experiment(const ExperimentConfig& cfg, const Dataset& corpus) {
  switch (cfg.mode) {
    case RunMode::federated: return run_federated(cfg, corpus);
    case RunMode::centralized: return run_centralized(cfg, corpus);
    case RunMode::single_client: return run_single_client(cfg, corpus);
  }
  throw std::logic_error("unknown run mode");
}

RunResult run_experiment(const ExperimentConfig& cfg) {
  return run_experiment(cfg, make_synthetic_corpus(cfg.corpus));
}

ComparisonTable compare_runs(std::span<const LabeledRun> runs) {
  if (runs.empty()) throw std::invalid_argument("compare_runs: no runs");
  for (const auto& run : runs)
    if (run.reports.empty())
      throw std::invalid_argument("compare_runs: run '" + run.label + "' has no reports");

  const auto& reference = runs.front().reports.back().global_metrics;
  for (const auto& run : runs) {
    const auto& m = run.reports.back().global_metrics;
    if (m.size() != reference.size() ||
        !std::equal(m.begin(), m.end(), reference.begin(),
                    [](const auto& a, const auto& b) { return a.first == b.first; }))
      throw std::invalid_argument("compare_runs: metric-set mismatch in run '" + run.label + "'");
  }

  std::size_t baseline = 0;
  for (std::size_t i = 0; i < runs.size(); ++i)
    if (runs[i].mode == RunMode::centralized) {
      baseline = i;
      break;
    }
  const auto& base_metrics = runs[baseline].reports.back().global_metrics;

  ComparisonTable table;
  for (const auto& [name, _] : reference) table.metric_names.push_back(name);
  for (const auto& run : runs) {
    ComparisonRow row;
    row.label = run.label;
    row.metrics = run.reports.back().global_metrics;
    for (const auto& [name, value] : row.metrics)
      row.delta[name] = value - base_metrics.at(name);
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string render_comparison(const ComparisonTable& table) {
  std::ostringstream os;
  os << "run";
  for (const auto& name : table.metric_names) os << '\t' << name << "\tdelta_" << name;
  os << '\n';
  for (const auto& row : table.rows) {
    os << row.label;
    for (const auto& name : table.metric_names)
      os << '\t' << detail::format_double(row.metrics.at(name)) << '\t'
         << detail::format_double(row.delta.at(name));
    os << '\n';
  }
  return os.str();
}

namespace {

detail::json report_to_json(const RoundReport& r) {
  detail::json j;
  j["round"] = r.round;
  j["global_metrics"] = r.global_metrics;
  auto& losses = j["per_client_loss"] = detail::json::object();
  for (const auto& [client, loss] : r.per_client_loss) losses[std::to_string(client)] = loss;
  j["participating_clients"] = r.participating_clients;
  return j;
}

RoundReport report_from_json(const detail::json& j, const std::string& where) {
  RoundReport r;
  r.round = detail::require_field<int>(j, "round", where);
  r.global_metrics =
      detail::require_field<std::map<std::string, double>>(j, "global_metrics", where);
  if (j.contains("per_client_loss"))
    for (const auto& [key, val] : j.at("per_client_loss").items())
      r.per_client_loss[std::stoi(key)] = val.get<double>();
  if (j.contains("participating_clients"))
    r.participating_clients = j.at("participating_clients").get<std::vector<int>>();
  return r;
}

}  // namespace

void write_reports_ndjson(const std::filesystem::path& path,
                          std::span<const RoundReport> reports) {
  std::string out;
  for (const auto& r : reports) {
    out += report_to_json(r).dump();
    out += '\n';
  }
  detail::write_text_file(path, out);
}

std::vector<RoundReport> load_reports_ndjson(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open reports file: " + path.string());
  std::vector<RoundReport> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(report_from_json(detail::json::parse(line), "reports " + path.string()));
  }
  return out;
}

void write_reports_csv(const std::filesystem::path& path,
                       std::span<const RoundReport> reports) {
  std::set<std::string> metric_names;
  std::set<int> client_ids;
  for (const auto& r : reports) {
    for (const auto& [name, _] : r.global_metrics) metric_names.insert(name);
    for (const auto& [client, _] : r.per_client_loss) client_ids.insert(client);
  }

  std::ostringstream os;
  os << "round";
  for (const auto& name : metric_names) os << ',' << name;
  for (int client : client_ids) os << ",loss_client_" << client;
  os << ",participants\n";
  for (const auto& r : reports) {
    os << r.round;
    for (const auto& name : metric_names) {
      os << ',';
      const auto it = r.global_metrics.find(name);
      if (it != r.global_metrics.end()) os << detail::format_double(it->second);
    }
    for (int client : client_ids) {
      os << ',';
      const auto it = r.per_client_loss.find(client);
      if (it != r.per_client_loss.end()) os << detail::format_double(it->second);
    }
    os << ',';
    for (std::size_t i = 0; i < r.participating_clients.size(); ++i) {
      if (i) os << ';';
      os << r.participating_clients[i];
    }
    os << '\n';
  }
  detail::write_text_file(path, os.str());
}

namespace {

detail::json corpus_to_json(const SyntheticCorpusConfig& c) {
  return {{"n_examples", c.n_examples}, {"feature_dim", c.feature_dim},
          {"num_classes", c.num_classes}, {"n_owners", c.n_owners},
          {"cluster_spread", c.cluster_spread}, {"seed", c.seed}};
}

SyntheticCorpusConfig corpus_from_json(const detail::json& j, const std::string& where) {
  SyntheticCorpusConfig c;
  if (j.contains("n_examples")) c.n_examples = j.at("n_examples").get<std::size_t>();
  if (j.contains("feature_dim")) c.feature_dim = j.at("feature_dim").get<int>();
  if (j.contains("num_classes")) c.num_classes = j.at("num_classes").get<int>();
  if (j.contains("n_owners")) c.n_owners = j.at("n_owners").get<int>();
  if (j.contains("cluster_spread")) c.cluster_spread = j.at("cluster_spread").get<double>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::int64_t>();
  (void)where;
  return c;
}

}  // namespace

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  const auto j = detail::read_json_file(path);
  const std::string where = "experiment config " + path.string();
  ExperimentConfig cfg;

  cfg.mode = run_mode_from_string(detail::require_field<std::string>(j, "mode", where));
  cfg.rounds = detail::require_field<int>(j, "rounds", where);
  cfg.seed = detail::require_field<std::int64_t>(j, "seed", where);
  if (j.contains("eval_split_fraction"))
    cfg.eval_split_fraction = j.at("eval_split_fraction").get<double>();
  if (j.contains("participation")) cfg.participation = j.at("participation").get<double>();
  if (j.contains("sign_flip_clients"))
    cfg.sign_flip_clients = j.at("sign_flip_clients").get<std::vector<int>>();

  if (j.contains("corpus")) cfg.corpus = corpus_from_json(j.at("corpus"), where);

  if (!j.contains("model")) throw std::runtime_error(where + ": missing model");
  const auto& jm = j.at("model");
  cfg.model.kind = model_kind_from_string(detail::require_field<std::string>(jm, "kind", where));
  cfg.model.feature_dim = jm.contains("feature_dim") ? jm.at("feature_dim").get<int>()
                                                     : cfg.corpus.feature_dim;
  cfg.model.num_classes = jm.contains("num_classes") ? jm.at("num_classes").get<int>()
                                                     : cfg.corpus.num_classes;
  if (jm.contains("hidden_dim")) cfg.model.hidden_dim = jm.at("hidden_dim").get<int>();

  if (j.contains("train")) {
    const auto& jt = j.at("train");
    if (jt.contains("epochs")) cfg.train.epochs = jt.at("epochs").get<int>();
    if (jt.contains("batch_size")) cfg.train.batch_size = jt.at("batch_size").get<int>();
    if (jt.contains("learning_rate")) cfg.train.learning_rate = jt.at("learning_rate").get<double>();
    if (jt.contains("prox_mu")) cfg.train.prox_mu = jt.at("prox_mu").get<double>();
    cfg.train.seed = jt.contains("seed")
                         ? jt.at("seed").get<std::int64_t>()
                         : static_cast<std::int64_t>(
                               derive_seed(static_cast<std::uint64_t>(cfg.seed), 0x55));
  } else {
    cfg.train.seed =
        static_cast<std::int64_t>(derive_seed(static_cast<std::uint64_t>(cfg.seed), 0x55));
  }

  if (j.contains("aggregation")) {
    const auto& ja = j.at("aggregation");
    if (ja.contains("kind"))
      cfg.aggregation.kind = aggregation_kind_from_string(ja.at("kind").get<std::string>());
    if (ja.contains("trim_beta")) cfg.aggregation.trim_beta = ja.at("trim_beta").get<double>();
  }

  if (j.contains("partition")) {
    const auto& jp = j.at("partition");
    if (jp.contains("strategy"))
      cfg.partition.strategy =
          partition_strategy_from_string(jp.at("strategy").get<std::string>());
    if (jp.contains("n_clients")) cfg.partition.n_clients = jp.at("n_clients").get<int>();
    if (jp.contains("alpha")) cfg.partition.alpha = jp.at("alpha").get<double>();
    if (jp.contains("size_ratio")) cfg.partition.size_ratio = jp.at("size_ratio").get<double>();
    if (jp.contains("fraction")) cfg.partition.fraction = jp.at("fraction").get<double>();
  }

  cfg.validate();
  return cfg;
}

void save_experiment_config(const std::filesystem::path& path, const ExperimentConfig& cfg) {
  cfg.validate();
  detail::json j;
  j["mode"] = to_string(cfg.mode);
  j["rounds"] = cfg.rounds;
  j["seed"] = cfg.seed;
  j["eval_split_fraction"] = cfg.eval_split_fraction;
  j["participation"] = cfg.participation;
  if (!cfg.sign_flip_clients.empty()) j["sign_flip_clients"] = cfg.sign_flip_clients;
  j["corpus"] = corpus_to_json(cfg.corpus);
  j["model"] = {{"kind", to_string(cfg.model.kind)},
                {"feature_dim", cfg.model.feature_dim},
                {"num_classes", cfg.model.num_classes}};
  if (cfg.model.kind == ModelKind::mlp) j["model"]["hidden_dim"] = cfg.model.hidden_dim;
  j["train"] = {{"epochs", cfg.train.epochs},
                {"batch_size", cfg.train.batch_size},
                {"learning_rate", cfg.train.learning_rate},
                {"prox_mu", cfg.train.prox_mu},
                {"seed", cfg.train.seed}};
  j["aggregation"] = {{"kind", to_string(cfg.aggregation.kind)},
                      {"trim_beta", cfg.aggregation.trim_beta}};
  j["partition"] = {{"strategy", to_string(cfg.partition.strategy)},
                    {"n_clients", cfg.partition.n_clients},
                    {"alpha", cfg.partition.alpha},
                    {"size_ratio", cfg.partition.size_ratio},
                    {"fraction", cfg.partition.fraction}};
  detail::write_text_file(path, j.dump(2) + "\n");
}

}  // namespace fedsim
