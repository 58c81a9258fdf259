#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "../support/oracles.hpp"
#include "doctest.h"
#include "logsparse/autodiff/grad_check.hpp"
#include "logsparse/autodiff/ops.hpp"
#include "logsparse/common/error.hpp"
#include "logsparse/model/forecaster.hpp"
#include "logsparse/model/sampling.hpp"

using namespace logsparse;
using namespace logsparse::model;
using ad::Tape;
using ad::Tensor;
using sparsity::PatternSpec;

namespace {

ModelConfig small_config(std::size_t t0, std::size_t tau, std::size_t covariates = 2, std::size_t k = 2) {
  ModelConfig c;
  c.layers = 2;
  c.attention.heads = 2;
  c.attention.d_model = 8;
  c.attention.kernel_size = k;
  c.attention.d_ff = 12;
  c.attention.pattern = PatternSpec::log_sparse();
  c.embedding_dim = 5;
  c.max_length = t0 + tau;
  c.vocabulary = 3;
  c.covariate_width = covariates;
  return c;
}

data::Window random_window(std::size_t t0, std::size_t tau, std::size_t covariates, std::uint64_t seed,
                           std::size_t id = 0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> value(0.0, 40.0);
  data::Window w;
  w.series_id = "s";
  w.embedding_id = id;
  w.t0 = t0;
  w.tau = tau;
  for (std::size_t i = 0; i < t0 + tau; ++i) w.z.push_back(value(rng));
  w.covariates = ad::uniform_tensor({t0 + tau, covariates}, 1.0, rng);
  return w;
}

// Gives every parameter a generic value so no path is trivially zero.
void randomize(Forecaster& model, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (auto& p : model.parameters()) {
    if (p->name.find("gain") != std::string::npos) {
      for (auto& v : p->value.values()) v = 1.0 + std::uniform_real_distribution<double>(-0.2, 0.2)(rng);
    } else if (p->name.find("bias") != std::string::npos || p->name.find("shift") != std::string::npos) {
      p->value = ad::uniform_tensor(p->value.shape(), 0.2, rng);
    }
  }
}

}  // namespace

TEST_CASE("config validation and JSON round trip") {
  auto c = small_config(12, 4);
  CHECK_NOTHROW(c.validate());
  CHECK(c.input_width() == 1 + 5 + 2);
  const auto back = model_config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  c.attention.pattern = PatternSpec::log_sparse_restart(40);
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config(12, 4);
  c.layers = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("compute_scale examples") {
  const std::vector<double> zeros(10, 0.0), nines(10, 9.0);
  CHECK(compute_scale(zeros, 5) == 1.0);
  CHECK(compute_scale(nines, 5) == 10.0);
  CHECK(compute_scale(std::vector<double>{1, 3, 100}, 2) == 3.0);
  CHECK_THROWS_AS(compute_scale(zeros, 0), ArgumentError);
}

TEST_CASE("assemble_inputs layout") {
  Forecaster model(small_config(6, 2), 1);
  auto w = random_window(6, 2, 2, 3, 1);
  Tape tape;
  const auto rows = assemble_inputs(tape, model, w, 2.0).value();
  CHECK(rows.shape() == ad::Shape{8, 1 + 20 - 15 + 2});
  CHECK(rows(0, 0) == 0.0);
  CHECK(rows(3, 0) == w.z[2] / 2.0);
  const auto& pos = model.position_embedding().value;
  const auto& ids = model.id_embedding().value;
  CHECK(rows(4, 1) == pos(4, 0) + ids(1, 0));
  CHECK(rows(4, 7) == w.covariates(4, 1));

  // Same time step, different series: only the z column and the ID part differ.
  auto other = w;
  other.embedding_id = 2;
  for (auto& v : other.z) v += 1.0;
  const auto rows2 = assemble_inputs(tape, model, other, 2.0).value();
  for (std::size_t t = 0; t < 8; ++t) {
    for (std::size_t c = 1; c <= 5; ++c) {
      CHECK(rows2(t, c) - rows(t, c) == doctest::Approx(ids(2, c - 1) - ids(1, c - 1)));
    }
    CHECK(rows2(t, 6) == rows(t, 6));
  }

  auto bad = w;
  bad.embedding_id = 3;
  CHECK_THROWS_AS(assemble_inputs(tape, model, bad, 1.0), DataError);
  bad = w;
  bad.covariates = Tensor(ad::Shape{8, 1});
  CHECK_THROWS_AS(assemble_inputs(tape, model, bad, 1.0), DataError);
}

TEST_CASE("default embedding width is 20") {
  ModelConfig c;
  c.covariate_width = 3;
  CHECK(c.input_width() == 1 + 20 + 3);
}

TEST_CASE("scaling stage") {
  Tape tape;
  const auto raw_mu = tape.constant(Tensor::vector({1.5, -2.0, 0.0}));
  const auto raw_sigma = tape.constant(Tensor::vector({0.0, 3.0, -4.0}));
  const auto base = unscale(raw_mu, raw_sigma, 2.0);
  CHECK(base.sigma.value()[0] == doctest::Approx(2.0 * std::log(2.0)));
  for (double c : {0.5, 3.0, 1000.0}) {
    const auto scaled = unscale(raw_mu, raw_sigma, 2.0 * c);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(scaled.mu.value()[i] == doctest::Approx(c * base.mu.value()[i]).epsilon(1e-15));
      CHECK(scaled.sigma.value()[i] == doctest::Approx(c * base.sigma.value()[i]).epsilon(1e-15));
    }
  }
  // A predictor whose raw mean is its scaled lag input reproduces the lag.
  Forecaster model(small_config(6, 2), 1);
  const auto w = random_window(6, 2, 2, 5);
  const double nu = compute_scale(w.z, 6);
  const auto inputs = assemble_inputs(tape, model, w, nu);
  const auto mu = unscale(ad::column(inputs, 0), ad::column(inputs, 0), nu).mu;
  for (std::size_t t = 1; t < 8; ++t) CHECK(mu.value()[t] == doctest::Approx(w.z[t - 1]).epsilon(1e-15));
}

TEST_CASE("forward distribution is positive and causal") {
  for (std::size_t k : {1u, 3u}) {
    Forecaster model(small_config(10, 6, 2, k), 4 + k);
    randomize(model, 9);
    const auto w = random_window(10, 6, 2, 7);
    const double nu = compute_scale(w.z, 10);
    Tape tape;
    const auto base = forward_distribution_scaled(tape, model, w, nu);
    for (const double s : base.sigma.value().values()) CHECK(s > 0.0);
    for (std::size_t t = 0; t < 16; ++t) {
      auto moved = w;
      for (std::size_t s = t; s < 16; ++s) moved.z[s] += 17.0;
      for (std::size_t s = t; s < 16; ++s) moved.covariates(s, 0) -= 0.5;
      Tape t2;
      const auto changed = forward_distribution_scaled(t2, model, moved, nu);
      // Output t predicts z_t from z_{<t}; covariates at t are known at t.
      for (std::size_t r = 0; r < t; ++r) {
        CHECK(changed.mu.value()[r] == base.mu.value()[r]);
        CHECK(changed.sigma.value()[r] == base.sigma.value()[r]);
      }
    }
    // With the scale computed from the window, changes after t0 keep the prefix intact.
    auto future = w;
    for (std::size_t s = 10; s < 16; ++s) future.z[s] = -5.0;
    const auto a = evaluate_distribution(model, w);
    const auto b = evaluate_distribution(model, future);
    for (std::size_t r = 0; r <= 10; ++r) CHECK(a.mu[r] == b.mu[r]);
  }
}

TEST_CASE("negative log-likelihood examples") {
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  data::Window w;
  w.z = {1.0, 2.0, 0.0};
  Tape tape;
  DistributionVars d{tape.constant(Tensor::vector({1.0, 1.0, 0.0})), tape.constant(Tensor::vector({1.0, 1.0, 2.0})), 1.0};
  CHECK(negative_log_likelihood(d, w, 0, 1).value().item() == doctest::Approx(half_log_2pi));
  CHECK(negative_log_likelihood(d, w, 1, 2).value().item() == doctest::Approx(half_log_2pi + 0.5));
  CHECK(negative_log_likelihood(d, w, 2, 3).value().item() == doctest::Approx(half_log_2pi + std::log(2.0)));
  CHECK(negative_log_likelihood(d, w, 0, 3).value().item() ==
        doctest::Approx(3 * half_log_2pi + 0.5 + std::log(2.0)));
}

TEST_CASE("NLL gradient through the full model passes grad_check") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Forecaster model(small_config(6, 3, 1, 2), seed);
    randomize(model, seed + 50);
    auto w = random_window(6, 3, 1, seed + 7, seed % 3);
    for (std::uint64_t redraw = 1;; ++redraw) {
      Tape probe;
      const double nu = compute_scale(w.z, w.t0);
      const auto projected = ad::affine(assemble_inputs(probe, model, w, nu), probe.parameter(model.input_weight()),
                                        probe.parameter(model.input_bias()));
      if (oracle::relu_margin(projected, model.layers(), model.config().attention, *model.mask()) > 5e-3) break;
      REQUIRE(redraw < 200);
      w = random_window(6, 3, 1, seed + 7 + 1000 * redraw, seed % 3);
    }
    const auto loss = [&](Tape& t) {
      const auto dist = forward_distribution(t, model, w);
      return ad::scale(negative_log_likelihood(dist, w, 0, w.length()), 1.0 / static_cast<double>(w.length()));
    };
    const auto result = ad::grad_check(loss, model.parameters());
    INFO("seed " << seed << " worst " << result.worst_parameter << "[" << result.worst_index
                 << "] a=" << result.worst_analytic << " n=" << result.worst_numeric);
    CHECK(result.max_relative_error < 1e-4);
  }
}

namespace {

struct LastValue final : StepModel {
  double last;
  double eps;
  LastValue(double l, double e) : last(l), eps(e) {}
  std::pair<double, double> begin(std::size_t) override { return {last, eps}; }
  void advance(std::span<const double> values, std::span<double> mu, std::span<double> sigma) override {
    for (std::size_t i = 0; i < values.size(); ++i) {
      mu[i] = values[i];
      sigma[i] = eps;
    }
  }
};

}  // namespace

TEST_CASE("degenerate sampler continues the last value") {
  LastValue stub(42.0, 1e-9);
  const auto paths = ancestral_sample(stub, 24, 7, 1);
  CHECK(paths.shape() == ad::Shape{7, 24});
  for (const double v : paths.values()) CHECK(v == doctest::Approx(42.0).epsilon(1e-6));
}

TEST_CASE("first-step sample mean obeys the CLT bound") {
  Forecaster model(small_config(8, 4), 2);
  randomize(model, 3);
  const auto w = random_window(8, 4, 2, 11);
  const auto dist = evaluate_distribution(model, w);
  const std::size_t S = 10000;
  const auto paths = ancestral_forecast(model, w, S, 5);
  CHECK(paths.shape() == ad::Shape{S, 4});
  double mean = 0.0;
  for (std::size_t s = 0; s < S; ++s) mean += paths(s, 0);
  mean /= static_cast<double>(S);
  CHECK(std::abs(mean - dist.mu[8]) <= 4.0 * dist.sigma[8] / std::sqrt(static_cast<double>(S)));
}

TEST_CASE("network sampler agrees with the taped forward") {
  Forecaster model(small_config(8, 4, 2, 3), 6);
  randomize(model, 8);
  const auto w = random_window(8, 4, 2, 13, 2);
  const auto dist = evaluate_distribution(model, w);
  NetworkStepModel step(model, w);
  const auto [mu0, sigma0] = step.begin(2);
  CHECK(std::abs(mu0 - dist.mu[8]) <= 1e-10 * std::max(1.0, std::abs(mu0)));
  CHECK(std::abs(sigma0 - dist.sigma[8]) <= 1e-10 * std::max(1.0, sigma0));

  std::vector<double> values{w.z[8], 3.25}, mu(2), sigma(2);
  step.advance(values, mu, sigma);
  CHECK(std::abs(mu[0] - dist.mu[9]) <= 1e-10 * std::max(1.0, std::abs(mu[0])));
  auto alt = w;
  alt.z[8] = 3.25;
  const auto dist_alt = evaluate_distribution(model, alt);
  CHECK(std::abs(mu[1] - dist_alt.mu[9]) <= 1e-10 * std::max(1.0, std::abs(mu[1])));
  CHECK(std::abs(sigma[1] - dist_alt.sigma[9]) <= 1e-10 * std::max(1.0, sigma[1]));
}

TEST_CASE("sampling is deterministic per seed") {
  Forecaster model(small_config(8, 4), 2);
  const auto w = random_window(8, 4, 2, 11);
  CHECK(ancestral_forecast(model, w, 20, 3) == ancestral_forecast(model, w, 20, 3));
  CHECK_FALSE(ancestral_forecast(model, w, 20, 3) == ancestral_forecast(model, w, 20, 4));
}

TEST_CASE("shorter windows use the leading block of the model mask") {
  Forecaster model(small_config(8, 4), 2);
  auto w = random_window(8, 4, 2, 11);
  auto shorter = w;
  shorter.tau = 2;
  shorter.z.resize(10);
  shorter.covariates = Tensor(ad::Shape{10, 2}, std::vector<double>(w.covariates.values().begin(),
                                                                   w.covariates.values().begin() + 20));
  const auto a = evaluate_distribution(model, w);
  const auto b = evaluate_distribution(model, shorter);
  for (std::size_t t = 0; t < 10; ++t) CHECK(std::abs(a.mu[t] - b.mu[t]) <= 1e-12);
  auto longer = random_window(8, 5, 2, 11);
  CHECK_THROWS_AS(evaluate_distribution(model, longer), ShapeError);
}

TEST_CASE("attention export") {
  const auto dir = std::filesystem::temp_directory_path() / "logsparse_attention_export";
  std::filesystem::remove_all(dir);
  auto config = small_config(1, 1, 0, 1);
  config.attention.pattern = PatternSpec::full_causal();
  Forecaster model(config, 3);
  for (const auto& layer : model.layers()) layer.q_kernels->value.fill(0.0);
  data::Window w;
  w.t0 = 1;
  w.tau = 1;
  w.z = {2.0, 3.0};
  w.covariates = Tensor(ad::Shape{2, 0});
  const auto files = export_attention(model, w, dir);
  CHECK(files.size() == config.layers * config.attention.heads);
  std::ifstream in(files.front());
  std::stringstream text;
  text << in.rdbuf();
  CHECK(text.str() == "1,0\n0.5,0.5\n");
  std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint round trip keeps predictions") {
  const auto dir = std::filesystem::temp_directory_path() / "logsparse_model_ckpt";
  std::filesystem::remove_all(dir);
  Forecaster model(small_config(8, 4), 21);
  randomize(model, 1);
  model.save(dir, {{"note", "x"}});
  const auto loaded = Forecaster::load(dir);
  const auto w = random_window(8, 4, 2, 2);
  CHECK(evaluate_distribution(model, w).mu == evaluate_distribution(loaded, w).mu);
  CHECK(to_json(loaded.config()) == to_json(model.config()));
  std::filesystem::remove_all(dir);
}
