#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedsim/dataset.hpp"
#include "fedsim/params.hpp"

namespace fedsim {

enum class ModelKind { logistic_regression, mlp };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

// Toy predictive models: multinomial logistic regression and a one-hidden-layer
// tanh MLP. The parameter layout is a pure function of the spec, so two models
// built from the same spec are always layout-compatible.
struct ModelSpec {
  ModelKind kind = ModelKind::logistic_regression;
  int feature_dim = 0;
  int num_classes = 0;
  int hidden_dim = 0;  // mlp only

  std::vector<Segment> layout() const;
  void validate() const;
  bool operator==(const ModelSpec&) const = default;
};

struct TrainConfig {
  int epochs = 1;
  int batch_size = 64;
  double learning_rate = 0.1;
  double prox_mu = 0.0;  // proximal penalty weight; 0 disables it
  std::int64_t seed = 0;

  void validate() const;
};

// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero.
ParameterVector init_params(const ModelSpec& spec, std::int64_t seed);

// Raw class scores; softmax of these defines class probabilities.
std::vector<double> forward(const ModelSpec& spec, const ParameterVector& params,
                            std::span<const double> features);

int predict_class(const ModelSpec& spec, std::span<const double> params,
                  std::span<const double> features);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

// Mean softmax cross-entropy over `batch` plus (mu/2)*||w - anchor||^2 when
// mu > 0, with its gradient w.r.t. the flat parameter vector.
LossGrad loss_and_gradient(const ModelSpec& spec, std::span<const double> params,
                           const Dataset& data, std::span<const std::size_t> batch,
                           std::span<const double> anchor, double mu);

double mean_cross_entropy(const ModelSpec& spec, std::span<const double> params,
                          const Dataset& data, std::span<const std::size_t> indices);

struct TrainResult {
  ParameterVector params;
  double train_loss = 0.0;  // mean batch objective over the last epoch
};

// Mini-batch SGD on cross-entropy, with the proximal anchor term when
// cfg.prox_mu > 0. The index set is canonicalized (sorted) before the seeded
// shuffle, so the result depends on the set of examples, not their order.
// Epoch e shuffles with seed cfg.seed + e; a run of `epochs` epochs therefore
// equals chaining single-epoch runs with seeds cfg.seed, cfg.seed+1, ...
TrainResult local_train(const ModelSpec& spec, const ParameterVector& start,
                        const Dataset& data, std::span<const std::size_t> indices,
                        const TrainConfig& cfg, const ParameterVector& global_anchor);

// Convenience overload over the whole dataset.
TrainResult local_train(const ModelSpec& spec, const ParameterVector& start,
                        const Dataset& data, const TrainConfig& cfg,
                        const ParameterVector& global_anchor);

}  // namespace fedsim
