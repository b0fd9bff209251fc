#include "fedsim/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace fedsim {

std::string to_string(AggregationKind kind) {
  switch (kind) {
    case AggregationKind::fedavg: return "fedavg";
    case AggregationKind::fedtrimmedavg: return "fedtrimmedavg";
    case AggregationKind::fedmedian: return "fedmedian";
  }
  throw std::logic_error("unknown aggregation kind");
}

AggregationKind aggregation_kind_from_string(const std::string& s) {
  if (s == "fedavg") return AggregationKind::fedavg;
  if (s == "fedtrimmedavg") return AggregationKind::fedtrimmedavg;
  if (s == "fedmedian") return AggregationKind::fedmedian;
  throw std::invalid_argument("unknown aggregation kind: " + s);
}

namespace {

void check_updates(std::span<const ClientUpdate> updates) {
  if (updates.empty()) throw std::invalid_argument("no client updates to aggregate");
  const auto& first = updates.front().params;
  if (first.empty()) throw std::invalid_argument("client update with empty parameters");
  for (const auto& u : updates) {
    if (u.num_examples == 0) throw std::invalid_argument("client update with zero examples");
    if (!u.params.layout_compatible(first))
      throw std::invalid_argument("client updates are not layout-compatible");
  }
}

// Anchored, sorted accumulation: exactly permutation-invariant, and exactly
// the common value when all inputs agree on a coordinate.
double weighted_mean_sorted(std::vector<std::pair<double, double>>& vw) {
  std::sort(vw.begin(), vw.end());
  const double lo = vw.front().first;
  double acc = 0.0;
  double wsum = 0.0;
  for (const auto& [v, w] : vw) {
    acc += w * (v - lo);
    wsum += w;
  }
  return lo + acc / wsum;
}

double mean_sorted_range(std::span<const double> sorted, std::size_t lo, std::size_t hi) {
  const double base = sorted[lo];
  double acc = 0.0;
  for (std::size_t i = lo; i < hi; ++i) acc += sorted[i] - base;
  return base + acc / static_cast<double>(hi - lo);
}

}  // namespace

ParameterVector aggregate_fedavg(std::span<const ClientUpdate> updates) {
  check_updates(updates);
  const std::size_t dim = updates.front().params.size();
  const std::size_t m = updates.size();

  unsigned long long total = 0;
  for (const auto& u : updates) total += u.num_examples;

  std::vector<double> out(dim, 0.0);
  std::vector<std::pair<double, double>> vw(m);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t k = 0; k < m; ++k)
      vw[k] = {updates[k].params.values()[i],
               static_cast<double>(updates[k].num_examples) / static_cast<double>(total)};
    out[i] = weighted_mean_sorted(vw);
  }
  return {updates.front().params.segments(), std::move(out)};
}

ParameterVector aggregate_trimmed_mean(std::span<const ClientUpdate> updates,
                                       double trim_beta) {
  check_updates(updates);
  if (!(trim_beta >= 0.0) || trim_beta >= 0.5)
    throw std::invalid_argument("trim_beta must be in [0, 0.5)");
  const std::size_t m = updates.size();
  const auto k = static_cast<std::size_t>(std::floor(trim_beta * static_cast<double>(m)));
  if (2 * k >= m) throw std::invalid_argument("trim_beta leaves no surviving values");

  const std::size_t dim = updates.front().params.size();
  std::vector<double> out(dim, 0.0);
  std::vector<double> buf(m);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < m; ++j) buf[j] = updates[j].params.values()[i];
    std::sort(buf.begin(), buf.end());
    out[i] = mean_sorted_range(buf, k, m - k);
  }
  return {updates.front().params.segments(), std::move(out)};
}

ParameterVector aggregate_median(std::span<const ClientUpdate> updates) {
  check_updates(updates);
  const std::size_t m = updates.size();
  const std::size_t dim = updates.front().params.size();
  std::vector<double> out(dim, 0.0);
  std::vector<double> buf(m);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < m; ++j) buf[j] = updates[j].params.values()[i];
    std::sort(buf.begin(), buf.end());
    out[i] = (m % 2 == 1) ? buf[m / 2] : (buf[m / 2 - 1] + buf[m / 2]) / 2.0;
  }
  return {updates.front().params.segments(), std::move(out)};
}

ParameterVector aggregate(std::span<const ClientUpdate> updates, const AggregationConfig& cfg) {
  switch (cfg.kind) {
    case AggregationKind::fedavg: return aggregate_fedavg(updates);
    case AggregationKind::fedtrimmedavg: return aggregate_trimmed_mean(updates, cfg.trim_beta);
    case AggregationKind::fedmedian: return aggregate_median(updates);
  }
  throw std::logic_error("unknown aggregation kind");
}

}  // namespace fedsim
