#include "fedsim/partition.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

#include "fedsim/rng.hpp"
#include "json_util.hpp"

namespace fedsim {

std::string to_string(PartitionStrategy s) {
  switch (s) {
    case PartitionStrategy::uniform: return "uniform";
    case PartitionStrategy::label_imbalanced: return "label_imbalanced";
    case PartitionStrategy::quantity_imbalanced: return "quantity_imbalanced";
    case PartitionStrategy::by_repository: return "by_repository";
    case PartitionStrategy::single_client: return "single_client";
  }
  throw std::logic_error("unknown partition strategy");
}

PartitionStrategy partition_strategy_from_string(const std::string& s) {
  if (s == "uniform") return PartitionStrategy::uniform;
  if (s == "label_imbalanced") return PartitionStrategy::label_imbalanced;
  if (s == "quantity_imbalanced") return PartitionStrategy::quantity_imbalanced;
  if (s == "by_repository") return PartitionStrategy::by_repository;
  if (s == "single_client") return PartitionStrategy::single_client;
  throw std::invalid_argument("unknown partition strategy: " + s);
}

void PartitionPlan::validate(const Dataset& data) const {
  if (assignments.empty()) throw std::invalid_argument("partition plan has no clients");
  std::vector<char> seen(data.size(), 0);
  for (const auto& [client, indices] : assignments) {
    if (client < 0) throw std::invalid_argument("negative client id");
    if (indices.empty())
      throw std::invalid_argument("client " + std::to_string(client) + " has no examples");
    for (std::size_t idx : indices) {
      if (idx >= data.size()) throw std::invalid_argument("plan index out of range");
      if (seen[idx]) throw std::invalid_argument("plan assigns an example twice");
      seen[idx] = 1;
    }
  }
}

namespace {

// Integer apportionment by largest remainder: counts >= 0 summing to total,
// proportional to non-negative weights.
std::vector<std::size_t> largest_remainder(const std::vector<double>& weights,
                                           std::size_t total) {
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(wsum > 0.0)) throw std::invalid_argument("apportionment weights sum to zero");
  std::vector<std::size_t> counts(weights.size(), 0);
  std::vector<std::pair<double, std::size_t>> frac;  // (-fraction, index)
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double share = weights[i] / wsum * static_cast<double>(total);
    counts[i] = static_cast<std::size_t>(std::floor(share));
    assigned += counts[i];
    frac.emplace_back(-(share - std::floor(share)), i);
  }
  std::sort(frac.begin(), frac.end());
  for (std::size_t r = 0; assigned < total; ++r, ++assigned)
    ++counts[frac[r % frac.size()].second];
  return counts;
}

std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& data) {
  std::vector<std::vector<std::size_t>> pools(static_cast<std::size_t>(data.num_classes));
  for (std::size_t i = 0; i < data.size(); ++i)
    pools[static_cast<std::size_t>(data.examples[i].label)].push_back(i);
  return pools;
}

void shuffle_client_lists(PartitionPlan& plan, std::mt19937_64& rng) {
  for (auto& [client, indices] : plan.assignments) std::shuffle(indices.begin(), indices.end(), rng);
}

void require_clients(const Dataset& data, int n_clients) {
  if (n_clients < 2) throw std::invalid_argument("need at least 2 clients");
  if (data.size() < static_cast<std::size_t>(n_clients))
    throw std::invalid_argument("fewer examples than clients");
}

}  // namespace

PartitionPlan partition_uniform(const Dataset& data, int n_clients, std::int64_t seed) {
  data.validate();
  require_clients(data, n_clients);

  auto rng = make_rng(derive_seed(static_cast<std::uint64_t>(seed), 0x0001));
  auto pools = indices_by_class(data);
  for (auto& pool : pools) std::shuffle(pool.begin(), pool.end(), rng);

  PartitionPlan plan;
  plan.strategy = PartitionStrategy::uniform;
  plan.seed = seed;
  plan.params["n_clients"] = n_clients;
  for (int k = 0; k < n_clients; ++k) plan.assignments[k];

  // Deal the stratified stream one example at a time; sizes differ by <= 1
  // and every class splits evenly across clients.
  const auto n = static_cast<std::size_t>(n_clients);
  std::size_t cursor = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
  for (const auto& pool : pools)
    for (std::size_t idx : pool) {
      plan.assignments[static_cast<int>(cursor)].push_back(idx);
      cursor = (cursor + 1) % n;
    }

  shuffle_client_lists(plan, rng);
  plan.validate(data);
  return plan;
}

PartitionPlan partition_label_imbalanced(const Dataset& data, int n_clients, double alpha,
                                         std::int64_t seed) {
  data.validate();
  require_clients(data, n_clients);
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  for (std::size_t cnt : label_histogram(data))
    if (cnt < static_cast<std::size_t>(n_clients))
      throw std::invalid_argument("a class has fewer examples than clients");

  auto rng = make_rng(derive_seed(static_cast<std::uint64_t>(seed), 0x0002));
  const auto c = static_cast<std::size_t>(data.num_classes);
  const auto n = static_cast<std::size_t>(n_clients);

  auto pools = indices_by_class(data);
  for (auto& pool : pools) std::shuffle(pool.begin(), pool.end(), rng);
  std::vector<std::size_t> remaining(c);
  for (std::size_t k = 0; k < c; ++k) remaining[k] = pools[k].size();

  // Equal client sizes; the skew lives entirely in the label mix.
  const std::vector<std::size_t> sizes =
      largest_remainder(std::vector<double>(n, 1.0), data.size());

  // Per-client class proportions from Dirichlet(alpha).
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<std::vector<double>> mix(n, std::vector<double>(c, 0.0));
  for (auto& p : mix) {
    double sum = 0.0;
    for (int tries = 0; tries < 16 && !(sum > 0.0); ++tries) {
      sum = 0.0;
      for (std::size_t k = 0; k < c; ++k) sum += p[k] = gamma(rng);
    }
    if (!(sum > 0.0)) p.assign(c, 1.0), sum = static_cast<double>(c);
    for (double& v : p) v /= sum;
  }

  // Serve clients in seeded order so depletion effects do not favor low ids.
  std::vector<std::size_t> client_order(n);
  std::iota(client_order.begin(), client_order.end(), std::size_t{0});
  std::shuffle(client_order.begin(), client_order.end(), rng);

  PartitionPlan plan;
  plan.strategy = PartitionStrategy::label_imbalanced;
  plan.seed = seed;
  plan.params["n_clients"] = n_clients;
  plan.params["alpha"] = alpha;

  for (std::size_t kc = 0; kc < n; ++kc) {
    const std::size_t k = client_order[kc];
    const std::size_t want = sizes[k];

    // Quota per class, masked to classes that still have stock, capped by it.
    std::vector<double> weights(c, 0.0);
    for (std::size_t cl = 0; cl < c; ++cl)
      if (remaining[cl] > 0) weights[cl] = std::max(mix[k][cl], 1e-12);
    std::vector<std::size_t> take = largest_remainder(weights, want);
    std::size_t short_by = 0;
    for (std::size_t cl = 0; cl < c; ++cl) {
      if (take[cl] > remaining[cl]) {
        short_by += take[cl] - remaining[cl];
        take[cl] = remaining[cl];
      }
    }
    while (short_by > 0) {
      std::size_t best = c;
      std::size_t best_slack = 0;
      for (std::size_t cl = 0; cl < c; ++cl) {
        const std::size_t slack = remaining[cl] - take[cl];
        if (slack > best_slack) {
          best_slack = slack;
          best = cl;
        }
      }
      if (best == c) throw std::logic_error("label-imbalanced partition ran out of examples");
      ++take[best];
      --short_by;
    }

    auto& mine = plan.assignments[static_cast<int>(k)];
    for (std::size_t cl = 0; cl < c; ++cl) {
      for (std::size_t t = 0; t < take[cl]; ++t) {
        mine.push_back(pools[cl][remaining[cl] - 1]);
        --remaining[cl];
      }
    }
  }

  shuffle_client_lists(plan, rng);
  plan.validate(data);
  return plan;
}

PartitionPlan partition_quantity_imbalanced(const Dataset& data, int n_clients,
                                            double size_ratio, std::int64_t seed) {
  data.validate();
  require_clients(data, n_clients);
  if (!(size_ratio > 1.0))
    throw std::invalid_argument("size_ratio must exceed 1");

  auto rng = make_rng(derive_seed(static_cast<std::uint64_t>(seed), 0x0003));
  const auto c = static_cast<std::size_t>(data.num_classes);
  const auto n = static_cast<std::size_t>(n_clients);

  // Geometric size progression with largest/smallest == size_ratio.
  std::vector<double> growth(n);
  for (std::size_t k = 0; k < n; ++k)
    growth[k] = std::pow(size_ratio, static_cast<double>(k) / static_cast<double>(n - 1));
  const std::vector<std::size_t> sizes = largest_remainder(growth, data.size());

  auto pools = indices_by_class(data);
  for (auto& pool : pools) std::shuffle(pool.begin(), pool.end(), rng);

  // Each class is apportioned across clients by client size, which keeps every
  // client's label mix near the global proportions.
  std::vector<std::vector<std::size_t>> counts(n, std::vector<std::size_t>(c, 0));
  std::vector<double> size_weights(sizes.begin(), sizes.end());
  for (std::size_t cl = 0; cl < c; ++cl) {
    const auto per_client = largest_remainder(size_weights, pools[cl].size());
    for (std::size_t k = 0; k < n; ++k) {
      counts[k][cl] = per_client[k];
      if (per_client[k] == 0)
        throw std::invalid_argument(
            "infeasible size_ratio: a client would receive no example of class " +
            std::to_string(cl));
    }
  }

  PartitionPlan plan;
  plan.strategy = PartitionStrategy::quantity_imbalanced;
  plan.seed = seed;
  plan.params["n_clients"] = n_clients;
  plan.params["size_ratio"] = size_ratio;

  std::vector<std::size_t> used(c, 0);
  for (std::size_t k = 0; k < n; ++k) {
    auto& mine = plan.assignments[static_cast<int>(k)];
    for (std::size_t cl = 0; cl < c; ++cl)
      for (std::size_t t = 0; t < counts[k][cl]; ++t) mine.push_back(pools[cl][used[cl]++]);
  }

  shuffle_client_lists(plan, rng);
  plan.validate(data);
  return plan;
}

PartitionPlan partition_by_repository(const Dataset& data, int n_clients, std::int64_t seed) {
  data.validate();
  require_clients(data, n_clients);

  std::map<std::string, std::vector<std::size_t>> owners;
  for (std::size_t i = 0; i < data.size(); ++i) owners[data.examples[i].repo_owner].push_back(i);
  if (owners.size() < static_cast<std::size_t>(n_clients))
    throw std::invalid_argument("fewer repository owners than clients");

  std::vector<const std::pair<const std::string, std::vector<std::size_t>>*> order;
  order.reserve(owners.size());
  for (const auto& kv : owners) order.push_back(&kv);

  // Seeded shuffle breaks ties between equal-sized owners; the stable sort
  // then places big owners first so the greedy fill stays balanced.
  auto rng = make_rng(derive_seed(static_cast<std::uint64_t>(seed), 0x0004));
  std::shuffle(order.begin(), order.end(), rng);
  std::stable_sort(order.begin(), order.end(),
                   [](const auto* a, const auto* b) { return a->second.size() > b->second.size(); });

  PartitionPlan plan;
  plan.strategy = PartitionStrategy::by_repository;
  plan.seed = seed;
  plan.params["n_clients"] = n_clients;
  for (int k = 0; k < n_clients; ++k) plan.assignments[k];

  std::vector<std::size_t> load(static_cast<std::size_t>(n_clients), 0);
  for (const auto* kv : order) {
    const std::size_t target = static_cast<std::size_t>(
        std::min_element(load.begin(), load.end()) - load.begin());
    auto& mine = plan.assignments[static_cast<int>(target)];
    mine.insert(mine.end(), kv->second.begin(), kv->second.end());
    load[target] += kv->second.size();
  }

  shuffle_client_lists(plan, rng);
  plan.validate(data);
  return plan;
}

PartitionPlan select_single_client(const Dataset& data, double fraction, std::int64_t seed) {
  data.validate();
  if (!(fraction > 0.0) || fraction > 1.0)
    throw std::invalid_argument("fraction must be in (0, 1]");
  const auto want = static_cast<std::size_t>(
      std::llround(fraction * static_cast<double>(data.size())));
  if (want == 0) throw std::invalid_argument("fraction selects no examples");

  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  auto rng = make_rng(derive_seed(static_cast<std::uint64_t>(seed), 0x0005));
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(std::min(want, data.size()));

  PartitionPlan plan;
  plan.strategy = PartitionStrategy::single_client;
  plan.seed = seed;
  plan.params["fraction"] = fraction;
  plan.assignments[0] = std::move(all);
  plan.validate(data);
  return plan;
}

void save_plan(const std::filesystem::path& path, const PartitionPlan& plan) {
  detail::json j;
  j["format_version"] = 1;
  j["strategy"] = to_string(plan.strategy);
  j["seed"] = plan.seed;
  j["params"] = plan.params;
  auto& a = j["assignments"] = detail::json::object();
  for (const auto& [client, indices] : plan.assignments)
    a[std::to_string(client)] = indices;
  detail::write_text_file(path, j.dump());
}

PartitionPlan load_plan(const std::filesystem::path& path) {
  const auto j = detail::read_json_file(path);
  const std::string where = "plan " + path.string();
  PartitionPlan plan;
  plan.strategy =
      partition_strategy_from_string(detail::require_field<std::string>(j, "strategy", where));
  plan.seed = detail::require_field<std::int64_t>(j, "seed", where);
  if (j.contains("params"))
    plan.params = j.at("params").get<std::map<std::string, double>>();
  if (!j.contains("assignments") || !j.at("assignments").is_object())
    throw std::runtime_error(where + ": missing assignments");
  for (const auto& [key, val] : j.at("assignments").items())
    plan.assignments[std::stoi(key)] = val.get<std::vector<std::size_t>>();
  return plan;
}

}  // namespace fedsim
