#include "fedsim/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "fedsim/rng.hpp"

namespace fedsim {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::logistic_regression: return "logistic_regression";
    case ModelKind::mlp: return "mlp";
  }
  throw std::logic_error("unknown model kind");
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "logistic_regression") return ModelKind::logistic_regression;
  if (s == "mlp") return ModelKind::mlp;
  throw std::invalid_argument("unknown model kind: " + s);
}

void ModelSpec::validate() const {
  if (feature_dim < 1) throw std::invalid_argument("feature_dim must be positive");
  if (num_classes < 2) throw std::invalid_argument("num_classes must be at least 2");
  if (kind == ModelKind::mlp && hidden_dim < 1)
    throw std::invalid_argument("hidden_dim must be positive for mlp");
}

std::vector<Segment> ModelSpec::layout() const {
  validate();
  const auto d = static_cast<std::size_t>(feature_dim);
  const auto c = static_cast<std::size_t>(num_classes);
  if (kind == ModelKind::logistic_regression) {
    return {{"w", {c, d}}, {"b", {c}}};
  }
  const auto h = static_cast<std::size_t>(hidden_dim);
  return {{"w1", {h, d}}, {"b1", {h}}, {"w2", {c, h}}, {"b2", {c}}};
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("epochs must be positive");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (prox_mu < 0.0) throw std::invalid_argument("prox_mu must be non-negative");
}

ParameterVector init_params(const ModelSpec& spec, std::int64_t seed) {
  auto layout = spec.layout();
  std::vector<double> values;
  values.reserve(total_size(layout));
  auto rng = make_rng(static_cast<std::uint64_t>(seed));
  for (const auto& seg : layout) {
    const bool is_weight = seg.shape.size() == 2;
    if (!is_weight) {
      values.insert(values.end(), seg.size(), 0.0);  // biases start at zero
      continue;
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(seg.shape[1]));
    std::uniform_real_distribution<double> dist(-scale, scale);
    for (std::size_t i = 0; i < seg.size(); ++i) values.push_back(dist(rng));
  }
  return {std::move(layout), std::move(values)};
}

namespace {

void check_layout(const ModelSpec& spec, const ParameterVector& params) {
  if (params.segments() != spec.layout())
    throw std::invalid_argument("parameters are not layout-compatible with the model spec");
}

struct Layout {
  std::size_t d, c, h;
  bool mlp;
  // flat offsets
  std::size_t w1, b1, w2, b2;
};

Layout make_offsets(const ModelSpec& spec) {
  Layout l{};
  l.d = static_cast<std::size_t>(spec.feature_dim);
  l.c = static_cast<std::size_t>(spec.num_classes);
  l.mlp = spec.kind == ModelKind::mlp;
  if (!l.mlp) {
    l.w1 = 0;
    l.b1 = l.c * l.d;
    return l;
  }
  l.h = static_cast<std::size_t>(spec.hidden_dim);
  l.w1 = 0;
  l.b1 = l.h * l.d;
  l.w2 = l.b1 + l.h;
  l.b2 = l.w2 + l.c * l.h;
  return l;
}

// Scores plus, for the mlp, the hidden activations needed by backprop.
void forward_raw(const Layout& l, std::span<const double> w,
                 std::span<const double> x, std::vector<double>& hidden,
                 std::vector<double>& scores) {
  if (!l.mlp) {
    scores.assign(l.c, 0.0);
    for (std::size_t c = 0; c < l.c; ++c) {
      double s = w[l.b1 + c];
      const double* row = w.data() + c * l.d;
      for (std::size_t j = 0; j < l.d; ++j) s += row[j] * x[j];
      scores[c] = s;
    }
    return;
  }
  hidden.assign(l.h, 0.0);
  for (std::size_t i = 0; i < l.h; ++i) {
    double s = w[l.b1 + i];
    const double* row = w.data() + i * l.d;
    for (std::size_t j = 0; j < l.d; ++j) s += row[j] * x[j];
    hidden[i] = std::tanh(s);
  }
  scores.assign(l.c, 0.0);
  for (std::size_t c = 0; c < l.c; ++c) {
    double s = w[l.b2 + c];
    const double* row = w.data() + l.w2 + c * l.h;
    for (std::size_t i = 0; i < l.h; ++i) s += row[i] * hidden[i];
    scores[c] = s;
  }
}

// In place: scores -> softmax probabilities. Returns log-sum-exp for the loss.
double softmax_inplace(std::vector<double>& scores) {
  const double m = *std::max_element(scores.begin(), scores.end());
  double sum = 0.0;
  for (double& s : scores) {
    s = std::exp(s - m);
    sum += s;
  }
  for (double& s : scores) s /= sum;
  return m + std::log(sum);
}

}  // namespace

std::vector<double> forward(const ModelSpec& spec, const ParameterVector& params,
                            std::span<const double> features) {
  check_layout(spec, params);
  if (features.size() != static_cast<std::size_t>(spec.feature_dim))
    throw std::invalid_argument("feature dimension mismatch");
  const Layout l = make_offsets(spec);
  std::vector<double> hidden, scores;
  forward_raw(l, params.values(), features, hidden, scores);
  return scores;
}

int predict_class(const ModelSpec& spec, std::span<const double> params,
                  std::span<const double> features) {
  const Layout l = make_offsets(spec);
  std::vector<double> hidden, scores;
  forward_raw(l, params, features, hidden, scores);
  return static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
}

LossGrad loss_and_gradient(const ModelSpec& spec, std::span<const double> params,
                           const Dataset& data, std::span<const std::size_t> batch,
                           std::span<const double> anchor, double mu) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const Layout l = make_offsets(spec);
  LossGrad out;
  out.grad.assign(params.size(), 0.0);

  std::vector<double> hidden, probs, dpre;
  double loss_sum = 0.0;
  for (std::size_t idx : batch) {
    const auto& ex = data.examples.at(idx);
    forward_raw(l, params, ex.features, hidden, probs);
    const double score_y = probs[static_cast<std::size_t>(ex.label)];
    const double lse = softmax_inplace(probs);
    loss_sum += lse - score_y;

    // dL/dscore = p - onehot(y)
    probs[static_cast<std::size_t>(ex.label)] -= 1.0;
    const std::span<const double> x = ex.features;
    if (!l.mlp) {
      for (std::size_t c = 0; c < l.c; ++c) {
        const double ds = probs[c];
        double* row = out.grad.data() + c * l.d;
        for (std::size_t j = 0; j < l.d; ++j) row[j] += ds * x[j];
        out.grad[l.b1 + c] += ds;
      }
      continue;
    }
    for (std::size_t c = 0; c < l.c; ++c) {
      const double ds = probs[c];
      double* row = out.grad.data() + l.w2 + c * l.h;
      for (std::size_t i = 0; i < l.h; ++i) row[i] += ds * hidden[i];
      out.grad[l.b2 + c] += ds;
    }
    dpre.assign(l.h, 0.0);
    for (std::size_t c = 0; c < l.c; ++c) {
      const double ds = probs[c];
      const double* row = params.data() + l.w2 + c * l.h;
      for (std::size_t i = 0; i < l.h; ++i) dpre[i] += ds * row[i];
    }
    for (std::size_t i = 0; i < l.h; ++i) dpre[i] *= 1.0 - hidden[i] * hidden[i];
    for (std::size_t i = 0; i < l.h; ++i) {
      double* row = out.grad.data() + i * l.d;
      const double dp = dpre[i];
      for (std::size_t j = 0; j < l.d; ++j) row[j] += dp * x[j];
      out.grad[l.b1 + i] += dp;
    }
  }

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (double& g : out.grad) g *= inv_n;
  out.loss = loss_sum * inv_n;

  if (mu > 0.0) {
    double sq = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double diff = params[i] - anchor[i];
      sq += diff * diff;
      out.grad[i] += mu * diff;
    }
    out.loss += 0.5 * mu * sq;
  }
  return out;
}

double mean_cross_entropy(const ModelSpec& spec, std::span<const double> params,
                          const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("empty index set");
  const Layout l = make_offsets(spec);
  std::vector<double> hidden, probs;
  double loss_sum = 0.0;
  for (std::size_t idx : indices) {
    const auto& ex = data.examples.at(idx);
    forward_raw(l, params, ex.features, hidden, probs);
    const double score_y = probs[static_cast<std::size_t>(ex.label)];
    loss_sum += softmax_inplace(probs) - score_y;
  }
  return loss_sum / static_cast<double>(indices.size());
}

TrainResult local_train(const ModelSpec& spec, const ParameterVector& start,
                        const Dataset& data, std::span<const std::size_t> indices,
                        const TrainConfig& cfg, const ParameterVector& global_anchor) {
  cfg.validate();
  check_layout(spec, start);
  check_layout(spec, global_anchor);
  if (indices.empty()) throw std::invalid_argument("local_train: empty data");
  for (std::size_t idx : indices)
    if (idx >= data.size()) throw std::out_of_range("local_train: index out of range");

  std::vector<double> w(start.values().begin(), start.values().end());
  const std::span<const double> anchor = global_anchor.values();

  // Canonical order: epoch e's permutation is a pure function of the index
  // set and cfg.seed + e, independent of caller ordering and of earlier
  // epochs. This is what makes single-epoch runs chain exactly.
  std::vector<std::size_t> canonical(indices.begin(), indices.end());
  std::sort(canonical.begin(), canonical.end());
  std::vector<std::size_t> order(canonical.size());

  const std::size_t n = canonical.size();
  const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), n);
  double last_epoch_loss = 0.0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto rng = make_rng(static_cast<std::uint64_t>(cfg.seed) + static_cast<std::uint64_t>(epoch));
    order = canonical;
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t off = 0; off < n; off += bs) {
      const std::size_t len = std::min(bs, n - off);
      const std::span<const std::size_t> batch(order.data() + off, len);
      LossGrad lg = loss_and_gradient(spec, w, data, batch, anchor, cfg.prox_mu);
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg.learning_rate * lg.grad[i];
      loss_sum += lg.loss;
      ++n_batches;
    }
    last_epoch_loss = loss_sum / static_cast<double>(n_batches);
  }

  for (double v : w)
    if (!std::isfinite(v))
      throw std::runtime_error("local_train diverged: non-finite parameters "
                               "(reduce learning_rate or prox_mu)");
  return {ParameterVector(spec.layout(), std::move(w)), last_epoch_loss};
}

TrainResult local_train(const ModelSpec& spec, const ParameterVector& start,
                        const Dataset& data, const TrainConfig& cfg,
                        const ParameterVector& global_anchor) {
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return local_train(spec, start, data, all, cfg, global_anchor);
}

}  // namespace fedsim
