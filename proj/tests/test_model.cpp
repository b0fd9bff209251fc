#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "fedsim/model.hpp"
#include "fedsim/rng.hpp"

using namespace fedsim;

namespace {

Dataset tiny_dataset(int feature_dim, int num_classes,
                     std::vector<std::pair<std::vector<double>, int>> rows) {
  Dataset d;
  d.feature_dim = feature_dim;
  d.num_classes = num_classes;
  for (auto& [x, y] : rows) d.examples.push_back({std::move(x), y, "o"});
  return d;
}

std::vector<std::size_t> all_indices(const Dataset& d) {
  std::vector<std::size_t> idx(d.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

// Independent dense-forward oracle: explicit loops over hand-unpacked
// matrices, no shared code with the implementation.
std::vector<double> mlp_forward_oracle(const ModelSpec& spec, std::span<const double> v,
                                       std::span<const double> x) {
  const int d = spec.feature_dim, h = spec.hidden_dim, c = spec.num_classes;
  const double* w1 = v.data();
  const double* b1 = v.data() + h * d;
  const double* w2 = b1 + h;
  const double* b2 = w2 + c * h;
  std::vector<double> hid(h), out(c);
  for (int i = 0; i < h; ++i) {
    double s = b1[i];
    for (int j = 0; j < d; ++j) s += w1[i * d + j] * x[j];
    hid[i] = std::tanh(s);
  }
  for (int k = 0; k < c; ++k) {
    double s = b2[k];
    for (int i = 0; i < h; ++i) s += w2[k * h + i] * hid[i];
    out[k] = s;
  }
  return out;
}

// Oracle loss via the model's forward pass only (a hand-rolled softmax CE),
// used to drive central finite differences against the analytic gradient.
double oracle_loss(const ModelSpec& spec, const std::vector<double>& v, const Dataset& data,
                   std::span<const std::size_t> batch, const std::vector<double>& anchor,
                   double mu) {
  double total = 0.0;
  for (std::size_t idx : batch) {
    const auto& ex = data.examples[idx];
    const ParameterVector pv(spec.layout(), v);
    const auto scores = forward(spec, pv, ex.features);
    double mx = scores[0];
    for (double s : scores) mx = std::max(mx, s);
    double lse = 0.0;
    for (double s : scores) lse += std::exp(s - mx);
    lse = mx + std::log(lse);
    total += lse - scores[static_cast<std::size_t>(ex.label)];
  }
  total /= static_cast<double>(batch.size());
  if (mu > 0.0) {
    double sq = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) sq += (v[i] - anchor[i]) * (v[i] - anchor[i]);
    total += 0.5 * mu * sq;
  }
  return total;
}

}  // namespace

TEST_CASE("logistic regression layout and size") {
  ModelSpec spec{ModelKind::logistic_regression, 3, 2, 0};
  const auto layout = spec.layout();
  REQUIRE(layout.size() == 2);
  CHECK(layout[0].name == "w");
  CHECK(layout[0].shape == std::vector<std::size_t>{2, 3});
  CHECK(layout[1].name == "b");
  CHECK(layout[1].shape == std::vector<std::size_t>{2});
  CHECK(total_size(layout) == 8);

  const auto params = init_params(spec, 7);
  REQUIRE(params.size() == 8);
  // biases are the trailing segment and start at zero
  CHECK(params.values()[6] == 0.0);
  CHECK(params.values()[7] == 0.0);
}

TEST_CASE("init_params is deterministic per seed and varies across seeds") {
  ModelSpec spec{ModelKind::mlp, 4, 3, 5};
  CHECK(init_params(spec, 7) == init_params(spec, 7));
  CHECK(init_params(spec, 1) != init_params(spec, 2));

  // weight scale bound: |w| <= 1/sqrt(fan_in)
  const auto params = init_params(spec, 3);
  const double bound = 1.0 / std::sqrt(4.0);
  for (std::size_t i = 0; i < 20; ++i) CHECK(std::abs(params.values()[i]) <= bound);
}

TEST_CASE("forward: zero params give zero scores (uniform probabilities)") {
  ModelSpec spec{ModelKind::logistic_regression, 3, 4, 0};
  ParameterVector zeros(spec.layout(), std::vector<double>(total_size(spec.layout()), 0.0));
  const auto scores = forward(spec, zeros, std::vector<double>{1.5, -2.0, 0.25});
  REQUIRE(scores.size() == 4);
  for (double s : scores) CHECK(s == 0.0);
}

TEST_CASE("forward: identity weight rows pick out features") {
  ModelSpec spec{ModelKind::logistic_regression, 2, 2, 0};
  ParameterVector params(spec.layout(), {1, 0, 0, 1, 0, 0});
  const auto scores = forward(spec, params, std::vector<double>{2.0, 0.0});
  CHECK(scores[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(scores[1] == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("forward: mlp matches the dense oracle") {
  ModelSpec spec{ModelKind::mlp, 3, 2, 4};
  const auto params = init_params(spec, 11);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  for (int t = 0; t < 25; ++t) {
    std::vector<double> x{dist(rng), dist(rng), dist(rng)};
    const auto got = forward(spec, params, x);
    const auto want = mlp_forward_oracle(spec, params.values(), x);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i)
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("forward: dimension mismatch throws") {
  ModelSpec spec{ModelKind::logistic_regression, 3, 2, 0};
  const auto params = init_params(spec, 1);
  CHECK_THROWS_AS(forward(spec, params, std::vector<double>{1.0}), std::invalid_argument);

  ModelSpec other{ModelKind::logistic_regression, 4, 2, 0};
  CHECK_THROWS_AS(forward(other, params, std::vector<double>{1, 2, 3, 4}),
                  std::invalid_argument);
}

TEST_CASE("analytic gradient matches central finite differences") {
  // random small instances of both model kinds, with and without the
  // proximal term
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> xdist(-1.5, 1.5);
  for (int trial = 0; trial < 6; ++trial) {
    const bool mlp = trial % 2 == 1;
    ModelSpec spec = mlp ? ModelSpec{ModelKind::mlp, 3, 3, 4}
                         : ModelSpec{ModelKind::logistic_regression, 3, 3, 0};
    Dataset data;
    data.feature_dim = 3;
    data.num_classes = 3;
    for (int i = 0; i < 5; ++i)
      data.examples.push_back({{xdist(rng), xdist(rng), xdist(rng)}, i % 3, "o"});

    const auto start = init_params(spec, 100 + trial);
    const auto anchor = init_params(spec, 200 + trial);
    const double mu = (trial % 3 == 0) ? 0.0 : 0.37;
    std::vector<double> v(start.values().begin(), start.values().end());
    std::vector<double> a(anchor.values().begin(), anchor.values().end());

    const auto idx = all_indices(data);
    const auto lg = loss_and_gradient(spec, v, data, idx, a, mu);
    CHECK(lg.loss == doctest::Approx(oracle_loss(spec, v, data, idx, a, mu)).epsilon(1e-12));

    for (std::size_t i = 0; i < v.size(); ++i) {
      const double h = 1e-6 * std::max(1.0, std::abs(v[i]));
      auto hi = v, lo = v;
      hi[i] += h;
      lo[i] -= h;
      const double fd =
          (oracle_loss(spec, hi, data, idx, a, mu) - oracle_loss(spec, lo, data, idx, a, mu)) /
          (2.0 * h);
      const double scale = std::max({1e-8, std::abs(fd), std::abs(lg.grad[i])});
      CHECK(std::abs(lg.grad[i] - fd) / scale < 1e-5);
    }
  }
}

TEST_CASE("local_train: one full-batch epoch equals one explicit gradient step") {
  ModelSpec spec{ModelKind::logistic_regression, 2, 2, 0};
  Dataset data = tiny_dataset(2, 2, {{{1.0, 0.5}, 0}, {{-0.5, 1.0}, 1}});
  const auto start = init_params(spec, 42);

  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = static_cast<int>(data.size());
  cfg.learning_rate = 0.3;
  cfg.prox_mu = 0.0;
  cfg.seed = 5;

  const auto res = local_train(spec, start, data, cfg, start);

  std::vector<double> v(start.values().begin(), start.values().end());
  const auto lg = loss_and_gradient(spec, v, data, all_indices(data), v, 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double want = v[i] - cfg.learning_rate * lg.grad[i];
    CHECK(res.params.values()[i] == doctest::Approx(want).epsilon(1e-12));
  }
  CHECK(res.train_loss == doctest::Approx(lg.loss).epsilon(1e-12));
}

TEST_CASE("local_train: a dominant proximal penalty pins parameters to the anchor") {
  ModelSpec spec{ModelKind::logistic_regression, 2, 2, 0};
  Dataset data = tiny_dataset(2, 2, {{{2.0, -1.0}, 0}, {{-2.0, 1.5}, 1}, {{0.3, 0.4}, 0}});
  const auto start = init_params(spec, 8);

  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.batch_size = 2;
  cfg.learning_rate = 1e-7;  // keeps lr*mu contractive
  cfg.prox_mu = 1e6;
  cfg.seed = 3;

  const auto res = local_train(spec, start, data, cfg, start);
  double moved = 0.0;
  for (std::size_t i = 0; i < start.size(); ++i) {
    const double d = res.params.values()[i] - start.values()[i];
    moved += d * d;
  }
  CHECK(std::sqrt(moved) < 1e-3);
}

TEST_CASE("local_train: deterministic and order-insensitive") {
  ModelSpec spec{ModelKind::mlp, 3, 2, 4};
  Dataset data = tiny_dataset(3, 2,
                              {{{1, 0, 0}, 0}, {{0, 1, 0}, 1}, {{0, 0, 1}, 0}, {{1, 1, 0}, 1}});
  const auto start = init_params(spec, 17);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 2;
  cfg.learning_rate = 0.1;
  cfg.seed = 21;

  const auto a = local_train(spec, start, data, cfg, start);
  const auto b = local_train(spec, start, data, cfg, start);
  CHECK(a.params == b.params);
  CHECK(a.train_loss == b.train_loss);

  // same index set presented in a different order
  std::vector<std::size_t> backwards{3, 2, 1, 0};
  const auto c = local_train(spec, start, data, backwards, cfg, start);
  CHECK(a.params == c.params);
}

TEST_CASE("local_train: epoch chaining composes exactly") {
  ModelSpec spec{ModelKind::logistic_regression, 2, 3, 0};
  Dataset data = tiny_dataset(2, 3, {{{1, 2}, 0}, {{2, 1}, 1}, {{-1, 0}, 2}, {{0, -1}, 1},
                                     {{0.5, 0.5}, 0}});
  const auto start = init_params(spec, 4);

  TrainConfig full;
  full.epochs = 4;
  full.batch_size = 2;
  full.learning_rate = 0.2;
  full.seed = 11;
  const auto direct = local_train(spec, start, data, full, start);

  ParameterVector chained = start;
  for (int e = 0; e < 4; ++e) {
    TrainConfig one = full;
    one.epochs = 1;
    one.seed = full.seed + e;
    chained = local_train(spec, chained, data, one, chained).params;
  }
  CHECK(chained == direct.params);
}

TEST_CASE("local_train: loss decreases on separable data with a small rate") {
  ModelSpec spec{ModelKind::logistic_regression, 2, 2, 0};
  Dataset data = tiny_dataset(
      2, 2, {{{2, 2}, 1}, {{3, 1}, 1}, {{2.5, 2.5}, 1}, {{-2, -2}, 0}, {{-3, -1}, 0},
             {{-2.5, -1.5}, 0}});
  const auto start = init_params(spec, 9);
  std::vector<double> v(start.values().begin(), start.values().end());
  const double initial = mean_cross_entropy(spec, v, data, all_indices(data));

  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.batch_size = 3;
  cfg.learning_rate = 0.05;
  cfg.seed = 1;
  const auto res = local_train(spec, start, data, cfg, start);
  const double final_loss =
      mean_cross_entropy(spec, res.params.values(), data, all_indices(data));
  CHECK(final_loss < initial);
}

TEST_CASE("local_train error paths") {
  ModelSpec spec{ModelKind::logistic_regression, 2, 2, 0};
  Dataset data = tiny_dataset(2, 2, {{{1, 0}, 0}});
  const auto start = init_params(spec, 1);
  TrainConfig cfg;

  std::vector<std::size_t> empty;
  CHECK_THROWS_AS(local_train(spec, start, data, empty, cfg, start), std::invalid_argument);

  ModelSpec other{ModelKind::logistic_regression, 3, 2, 0};
  const auto wrong = init_params(other, 1);
  CHECK_THROWS_AS(local_train(spec, wrong, data, cfg, start), std::invalid_argument);
  CHECK_THROWS_AS(local_train(spec, start, data, cfg, wrong), std::invalid_argument);

  TrainConfig bad = cfg;
  bad.learning_rate = 0.0;
  CHECK_THROWS_AS(local_train(spec, start, data, bad, start), std::invalid_argument);
  bad = cfg;
  bad.prox_mu = -0.1;
  CHECK_THROWS_AS(local_train(spec, start, data, bad, start), std::invalid_argument);
}

TEST_CASE("parameter vector invariants") {
  CHECK_THROWS_AS(ParameterVector({{"w", {2, 2}}}, {1, 2, 3}), std::invalid_argument);
  CHECK_THROWS_AS(ParameterVector({{"w", {2}}}, {1.0, std::nan("")}), std::invalid_argument);
  CHECK_THROWS_AS(ParameterVector({{"w", {0}}}, {}), std::invalid_argument);

  ParameterVector a({{"w", {2}}}, {1, 2});
  ParameterVector b({{"w", {2}}}, {3, 4});
  ParameterVector c({{"v", {2}}}, {1, 2});
  CHECK(a.layout_compatible(b));
  CHECK_FALSE(a.layout_compatible(c));
}
