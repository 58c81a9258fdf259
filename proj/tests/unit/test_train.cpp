#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "doctest.h"
#include "logsparse/common/error.hpp"
#include "logsparse/data/synthetic.hpp"
#include "logsparse/train/evaluation.hpp"
#include "logsparse/train/trainer.hpp"

using namespace logsparse;
using namespace logsparse::train;
using ad::Tensor;

namespace {

// Direct transcription of the pinball-loss formula, accumulated in long double.
double brute_force_rho(const std::vector<double>& x, const std::vector<double>& xhat, double rho) {
  long double num = 0.0L, den = 0.0L;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const long double diff = static_cast<long double>(x[i]) - xhat[i];
    num += std::max(rho * diff, (rho - 1.0L) * diff);
    den += std::fabs(static_cast<long double>(x[i]));
  }
  return static_cast<double>(2.0L * num / den);
}

model::ModelConfig tiny_model(std::size_t t0, std::size_t tau) {
  model::ModelConfig c;
  c.layers = 1;
  c.attention.heads = 2;
  c.attention.d_model = 8;
  c.attention.kernel_size = 2;
  c.embedding_dim = 4;
  c.max_length = t0 + tau;
  return c;
}

std::vector<data::Window> windows_of(const data::TimeSeriesSet& set, std::size_t t0, std::size_t tau) {
  std::vector<data::Window> out;
  data::WindowOptions wo;
  wo.t0 = t0;
  wo.tau = tau;
  wo.shared_id = true;
  for (std::size_t i = 0; i < set.series.size(); ++i) out.push_back(data::make_window(set, {}, i, 0, wo));
  return out;
}

data::SyntheticDataset small_synthetic(std::size_t train, std::size_t val, std::size_t test, std::uint64_t seed) {
  data::SyntheticConfig sc;
  sc.t0 = 24;
  sc.tau = 12;
  sc.train_count = train;
  sc.val_count = val;
  sc.test_count = test;
  sc.seed = seed;
  return data::generate_synthetic(sc);
}

data::TimeSeriesSet periodic_set(std::size_t count, std::size_t length, std::size_t period) {
  data::TimeSeriesSet set;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(1.0, 10.0);
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<double> cycle(period);
    for (auto& v : cycle) v = u(rng);
    data::Series s;
    s.id = "s" + std::to_string(i);
    for (std::size_t t = 0; t < length; ++t) s.values.push_back(cycle[t % period]);
    set.series.push_back(std::move(s));
  }
  return set;
}

}  // namespace

TEST_CASE("quantile loss examples") {
  const std::vector<double> x{3.0, -1.0, 7.5};
  CHECK(rho_quantile_loss(x, x, 0.5) == 0.0);
  CHECK(rho_quantile_loss(x, x, 0.9) == 0.0);
  CHECK(rho_quantile_loss(std::vector<double>{10.0}, std::vector<double>{8.0}, 0.5) == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(rho_quantile_loss(std::vector<double>{8.0}, std::vector<double>{10.0}, 0.9) == doctest::Approx(0.05).epsilon(1e-15));
  CHECK_THROWS_AS(rho_quantile_loss(std::vector<double>{0.0, 0.0}, std::vector<double>{1.0, 2.0}, 0.5), DataError);
  CHECK_THROWS_AS(rho_quantile_loss(x, x, 0.0), ArgumentError);
  CHECK_THROWS_AS(rho_quantile_loss(x, x, 1.0), ArgumentError);
  CHECK_THROWS_AS(rho_quantile_loss(x, std::vector<double>{1.0}, 0.5), ArgumentError);
}

TEST_CASE("quantile loss matches the brute-force formula") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::size_t> size(1, 50);
  std::uniform_real_distribution<double> value(-100.0, 100.0), rho(0.01, 0.99);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = size(rng);
    std::vector<double> x(n), xhat(n);
    for (auto& v : x) v = value(rng);
    for (auto& v : xhat) v = value(rng);
    if (trial % 5 == 0) xhat[0] = x[0];
    const double r = rho(rng);
    const double expected = brute_force_rho(x, xhat, r);
    CHECK(std::abs(rho_quantile_loss(x, xhat, r) - expected) <= 1e-12 * std::max(1.0, std::abs(expected)));

    double abs_err = 0.0, norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      abs_err += std::abs(x[i] - xhat[i]);
      norm += std::abs(x[i]);
    }
    CHECK(rho_quantile_loss(x, xhat, 0.5) == doctest::Approx(abs_err / norm).epsilon(1e-12));
  }
}

TEST_CASE("empirical quantile") {
  CHECK(empirical_quantile(Tensor(ad::Shape{5, 1}, {4, 2, 5, 1, 3}), 0.5) == std::vector<double>{3});
  CHECK(empirical_quantile(Tensor(ad::Shape{3, 2}, std::vector<double>(6, 2.5)), 0.1) == std::vector<double>{2.5, 2.5});
  CHECK(empirical_quantile(Tensor(ad::Shape{3, 2}, std::vector<double>(6, 2.5)), 0.9) == std::vector<double>{2.5, 2.5});
  std::vector<double> hundred(100);
  for (std::size_t i = 0; i < 100; ++i) hundred[i] = static_cast<double>(100 - i);
  CHECK(empirical_quantile(Tensor(ad::Shape{100, 1}, hundred), 0.9)[0] == 90.0);
  CHECK(empirical_quantile(Tensor(ad::Shape{100, 1}, hundred), 0.1)[0] == 10.0);
  CHECK(empirical_quantile(Tensor(ad::Shape{100, 1}, hundred), 0.001)[0] == 1.0);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  std::vector<double> draws(100000);
  for (auto& v : draws) v = normal(rng);
  const double q = empirical_quantile(Tensor(ad::Shape{100000, 1}, draws), 0.9)[0];
  CHECK(std::abs(q - 1.2815515655446004) <= 0.02);
}

TEST_CASE("seasonal naive") {
  CHECK(seasonal_naive(std::vector<double>{1, 2, 3, 4}, 1, 3) == std::vector<double>{4, 4, 4});
  CHECK(seasonal_naive(std::vector<double>{1, 2, 3, 4, 5}, 3, 5) == std::vector<double>{3, 4, 5, 3, 4});
  CHECK_THROWS_AS(seasonal_naive(std::vector<double>{1, 2}, 3, 1), ArgumentError);

  const auto set = periodic_set(4, 24 * 10, 24);
  EvalOptions o;
  o.t0 = 48;
  o.horizon = 24;
  o.days = 7;
  o.test_start = 72;
  CHECK(evaluate_seasonal_naive(set, {}, o, 24).r50 == 0.0);
  o.mode = EvalMode::Direct;
  CHECK(evaluate_seasonal_naive(set, {}, o, 24).r50 == 0.0);

  // The synthetic target switches period and amplitude at t0.
  data::SyntheticConfig sc;
  sc.t0 = 96;
  sc.train_count = 1;
  sc.val_count = 1;
  sc.test_count = 50;
  sc.noise_std = 0.0;
  const auto ds = data::generate_synthetic(sc);
  EvalOptions so;
  so.t0 = 96;
  so.horizon = 24;
  so.days = 1;
  so.test_start = 96;
  CHECK(evaluate_seasonal_naive(ds.test, {}, so, 24).r50 > 0.05);
}

TEST_CASE("rolling and direct segment layout") {
  const auto set = periodic_set(3, 24 * 12, 24);
  EvalOptions o;
  o.t0 = 48;
  o.horizon = 24;
  o.days = 7;
  o.test_start = 24 * 5;
  o.samples = 4;
  std::vector<std::size_t> starts;
  const auto oracle = [&](const data::Window& w, std::uint64_t) {
    // Perfect point forecasts read from the full series.
    const auto& values = set.series[w.series_index].values;
    const std::size_t start = w.start + w.t0;
    Tensor paths(ad::Shape{2, w.tau});
    for (std::size_t s = 0; s < 2; ++s)
      for (std::size_t i = 0; i < w.tau; ++i) paths(s, i) = values[start + i];
    return paths;
  };
  const auto rolling = evaluate_segments(set, {}, o, oracle);
  CHECK(rolling.per_segment.size() == 7);
  for (std::size_t d = 0; d < 7; ++d) CHECK(rolling.per_segment[d].start == 24 * d);
  CHECK(rolling.forecasts.size() == 21);
  CHECK(rolling.points == 3 * 168);
  CHECK(rolling.r50 == 0.0);
  CHECK(rolling.r90 == 0.0);

  o.mode = EvalMode::Direct;
  const auto direct = evaluate_segments(set, {}, o, oracle);
  CHECK(direct.per_segment.size() == 1);
  CHECK(direct.forecasts.front().actual.size() == 168);
  CHECK(direct.points == 3 * 168);
  CHECK(direct.r50 == 0.0);

  o.test_start = 24 * 6;
  CHECK_THROWS_AS(evaluate_segments(set, {}, o, oracle), ConfigError);
  o.test_start = 24;
  CHECK_THROWS_AS(evaluate_segments(set, {}, o, oracle), ConfigError);
}

TEST_CASE("rolling evaluation never reads at or after the forecast start") {
  auto set = periodic_set(2, 24 * 10, 24);
  EvalOptions o;
  o.t0 = 24;
  o.horizon = 24;
  o.days = 7;
  o.test_start = 48;
  const auto check_window = [&](const data::Window& w, std::uint64_t) {
    const auto& values = set.series[w.series_index].values;
    for (std::size_t i = 0; i < w.t0; ++i) REQUIRE(w.z[i] == values[w.start + i]);
    for (std::size_t i = w.t0; i < w.length(); ++i) REQUIRE(w.z[i] == 0.0);
    Tensor paths(ad::Shape{1, w.tau});
    for (std::size_t i = 0; i < w.tau; ++i) paths(0, i) = w.z[w.t0 - 1];
    return paths;
  };
  const auto report = evaluate_segments(set, {}, o, check_window);
  // Changing the final day cannot change any earlier day's forecast.
  for (auto& s : set.series)
    for (std::size_t t = 48 + 6 * 24; t < s.values.size(); ++t) s.values[t] += 100.0;
  const auto moved = evaluate_segments(set, {}, o, check_window);
  for (std::size_t k = 0; k < report.forecasts.size(); ++k) {
    if (report.forecasts[k].segment < 6) CHECK(moved.forecasts[k].q50 == report.forecasts[k].q50);
  }
}

TEST_CASE("network evaluation is deterministic and thread-independent") {
  const auto ds = small_synthetic(2, 2, 6, 4);
  model::Forecaster model(tiny_model(24, 12), 2);
  EvalOptions o;
  o.t0 = 24;
  o.horizon = 12;
  o.days = 1;
  o.test_start = 24;
  o.samples = 20;
  o.seed = 9;
  o.shared_id = true;
  o.threads = 1;
  const auto a = evaluate_rolling(model, ds.test, {}, o);
  o.threads = 3;
  const auto b = evaluate_rolling(model, ds.test, {}, o);
  CHECK(to_json(a, false).dump() == to_json(b, false).dump());
  CHECK(a.r50 >= 0.0);
  CHECK(std::isfinite(a.r90));
  std::ostringstream csv;
  write_forecast_csv(a, csv);
  CHECK(csv.str().rfind("series_id,step,mu,sigma,q0.1,q0.5,q0.9\ntest-0,24,", 0) == 0);
  const auto j = to_json(a);
  CHECK(j.contains("runtime"));
  CHECK(j["per_segment"].size() == 1);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK(c.learning_rate == 1e-3);
  CHECK(c.batch_size == 64);
  CHECK(c.warmup_steps == 0);
  c.patience = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  const auto back = train_config_from_json(to_json(TrainConfig{}));
  CHECK(to_json(back) == to_json(TrainConfig{}));
  CHECK_THROWS_AS(train_config_from_json({{"patience", 0}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json({{"learning_rte", 0.1}}), ConfigError);
  CHECK(train_config_from_json({{"warmup_steps", 10}}).warmup_steps == 10);
}

TEST_CASE("single tiny batch overfits") {
  const auto ds = small_synthetic(4, 1, 1, 11);
  const auto windows = windows_of(ds.train, 24, 12);
  model::Forecaster model(tiny_model(24, 12), 5);
  const double before = mean_nll(model, windows, false);
  TrainConfig c;
  c.learning_rate = 1e-2;
  c.batch_size = 4;
  c.max_epochs = 300;
  c.patience = 300;
  const auto result = train::train(model, windows, windows, c);
  const double after = mean_nll(model, windows, false);
  INFO("before " << before << " after " << after);
  CHECK(before > 0.0);
  CHECK(after <= 0.5 * before);
  CHECK(result.steps == result.curve.size());
}

TEST_CASE("early stopping") {
  const auto ds = small_synthetic(12, 4, 1, 2);
  const auto train_w = windows_of(ds.train, 24, 12);
  const auto val_w = windows_of(ds.val, 24, 12);
  for (std::size_t patience : {1u, 2u}) {
    model::Forecaster model(tiny_model(24, 12), 1);
    TrainConfig c;
    c.batch_size = 5;
    c.max_epochs = 10;
    c.patience = patience;
    const auto result = train::train(model, train_w, val_w, c, [](std::size_t, const model::Forecaster&) { return 1.0; });
    CHECK(result.epoch_val_nll.size() == 1 + patience);
    CHECK(result.best_epoch == 1);
    CHECK(result.steps == 3 * (1 + patience));
  }

  model::Forecaster model(tiny_model(24, 12), 1);
  TrainConfig c;
  c.batch_size = 4;
  c.max_epochs = 6;
  c.patience = 2;
  c.learning_rate = 3e-2;
  const auto result = train::train(model, train_w, val_w, c);
  const double minimum = *std::min_element(result.epoch_val_nll.begin(), result.epoch_val_nll.end());
  CHECK(result.best_val_nll == minimum);
  CHECK(mean_nll(model, val_w, false) == minimum);
}

TEST_CASE("training is deterministic per seed and thread count") {
  const auto ds = small_synthetic(10, 3, 1, 6);
  const auto train_w = windows_of(ds.train, 24, 12);
  const auto val_w = windows_of(ds.val, 24, 12);
  const auto run = [&](std::uint64_t seed, std::size_t threads) {
    model::Forecaster model(tiny_model(24, 12), 3);
    TrainConfig c;
    c.batch_size = 4;
    c.max_epochs = 3;
    c.seed = seed;
    c.threads = threads;
    c.warmup_steps = 4;
    std::ostringstream out;
    write_curve_csv(train::train(model, train_w, val_w, c).curve, out);
    return out.str();
  };
  const auto a = run(1, 1);
  CHECK(a == run(1, 1));
  CHECK(a == run(1, 3));
  CHECK(a != run(2, 1));
  CHECK(a.rfind("step,train_nll,val_nll\n1,", 0) == 0);
  // Only the last step of each epoch carries a validation value.
  std::istringstream lines(a);
  std::string line;
  std::getline(lines, line);
  std::size_t with_val = 0, rows = 0;
  while (std::getline(lines, line)) {
    ++rows;
    if (line.back() != ',') ++with_val;
  }
  CHECK(rows == 9);
  CHECK(with_val == 3);
}

TEST_CASE("training errors") {
  const auto ds = small_synthetic(3, 2, 1, 6);
  auto train_w = windows_of(ds.train, 24, 12);
  const auto val_w = windows_of(ds.val, 24, 12);
  model::Forecaster model(tiny_model(24, 12), 3);
  TrainConfig c;
  CHECK_THROWS_AS(train::train(model, {}, val_w, c), ConfigError);
  CHECK_THROWS_AS(train::train(model, train_w, {}, c), ConfigError);
  train_w[1].z[30] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(train::train(model, train_w, val_w, c), DivergenceError);
}
