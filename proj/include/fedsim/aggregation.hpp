#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "fedsim/params.hpp"

namespace fedsim {

// What a client sends back to the server after local training.
struct ClientUpdate {
  int client_id = 0;
  int round = 0;
  ParameterVector params;
  std::size_t num_examples = 0;  // n_k, must be >= 1
  double train_loss = 0.0;
};

enum class AggregationKind { fedavg, fedtrimmedavg, fedmedian };

std::string to_string(AggregationKind kind);
AggregationKind aggregation_kind_from_string(const std::string& s);

struct AggregationConfig {
  AggregationKind kind = AggregationKind::fedavg;
  double trim_beta = 0.2;  // fedtrimmedavg only, in [0, 0.5)
};

// Coordinate-wise mean weighted by n_k / sum(n_j). Per-coordinate accumulation
// runs in sorted value order, so the output is exactly permutation-invariant.
ParameterVector aggregate_fedavg(std::span<const ClientUpdate> updates);

// Per coordinate: sort the m client values, drop floor(trim_beta*m) from each
// tail, return the unweighted mean of the survivors.
ParameterVector aggregate_trimmed_mean(std::span<const ClientUpdate> updates,
                                       double trim_beta);

// Per coordinate: the median; for even m, the mean of the two middle values.
ParameterVector aggregate_median(std::span<const ClientUpdate> updates);

ParameterVector aggregate(std::span<const ClientUpdate> updates,
                          const AggregationConfig& cfg);

}  // namespace fedsim
