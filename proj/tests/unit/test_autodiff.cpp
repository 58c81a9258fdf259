#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "logsparse/autodiff/checkpoint.hpp"
#include "logsparse/autodiff/grad_check.hpp"
#include "logsparse/autodiff/ops.hpp"
#include "logsparse/autodiff/optimizer.hpp"
#include "logsparse/autodiff/parameter.hpp"
#include "logsparse/autodiff/tape.hpp"
#include "logsparse/common/error.hpp"
#include "logsparse/sparsity/pattern.hpp"

using namespace logsparse;
using namespace logsparse::ad;
using sparsity::PatternSpec;

namespace {

constexpr double kGradTolerance = 1e-4;

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double bound = 1.0) {
  return uniform_tensor(std::move(shape), bound, rng);
}

// Random linear read-out, averaged so the loss stays O(1) and round-off
// in the finite differences stays well below the 1e-8 floor.
Var weighted_sum(Tape& tape, Var x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / static_cast<double>(x.value().size());
  return sum(mul(x, tape.constant(random_tensor(x.shape(), rng, bound))));
}

struct Fixture {
  explicit Fixture(std::uint64_t seed) : rng(seed) {}
  Parameter& add(const std::string& name, Shape shape, double bound = 1.0) {
    return store.add(name, random_tensor(std::move(shape), rng, bound));
  }
  ParameterStore store;
  std::mt19937_64 rng;
};

double check_store(const LossBuilder& build, ParameterStore& store) {
  const auto result = grad_check(build, store);
  INFO("worst parameter " << result.worst_parameter << "[" << result.worst_index
                          << "] analytic " << result.worst_analytic << " numeric "
                          << result.worst_numeric);
  CHECK(result.coordinates_checked == store.scalar_count());
  return result.max_relative_error;
}

}  // namespace

TEST_CASE("tensor basics") {
  const Tensor t = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t(1, 2) == 6);
  CHECK(Tensor::vector({1, 2}).rows() == 1);
  CHECK(Tensor::scalar(4).item() == 4);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(t.item(), ShapeError);
  CHECK(max_abs_difference(t, Tensor::matrix({{1, 2, 3}, {4, 5, 7}})) == 1);
}

TEST_CASE("affine examples") {
  Tape tape;
  const auto x = tape.constant(Tensor::matrix({{1, 2}}));
  const auto eye = tape.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  CHECK(affine(x, eye, tape.constant(Tensor::vector({0, 0}))).value() ==
        Tensor::matrix({{1, 2}}));
  const auto ones = tape.constant(Tensor::matrix({{1}, {1}}));
  CHECK(affine(x, ones, tape.constant(Tensor::vector({1}))).value() == Tensor::matrix({{4}}));
  CHECK_THROWS_AS(affine(x, tape.constant(Tensor::matrix({{1, 1}})), tape.constant(Tensor::vector({1, 1}))),
                  ShapeError);
}

TEST_CASE("affine gradients: dW is column sums of x, db is the row count") {
  ParameterStore store;
  auto& w = store.add("w", Tensor::matrix({{0.5, -1}, {2, 0.25}}));
  auto& b = store.add("b", Tensor::vector({0, 0}));
  const auto x = Tensor::matrix({{1, 2}, {3, 4}, {5, 6}});
  Tape tape;
  backward(tape, sum(affine(tape.constant(x), tape.parameter(w), tape.parameter(b))));
  CHECK(w.grad == Tensor::matrix({{9, 9}, {12, 12}}));
  CHECK(b.grad == Tensor::vector({3, 3}));
}

TEST_CASE("backward: x^2 at 3 is 6 and untouched parameters read zero") {
  ParameterStore store;
  auto& x = store.add("x", Tensor::scalar(3));
  auto& unused = store.add("unused", Tensor::vector({1, 2}));
  Tape tape;
  const auto v = tape.parameter(x);
  backward(tape, mul(v, v));
  CHECK(x.grad.item() == doctest::Approx(6));
  CHECK(unused.grad == Tensor::vector({0, 0}));

  Tape other;
  CHECK_THROWS_AS(backward(other, other.constant(Tensor::vector({1, 2}))), ArgumentError);
}

TEST_CASE("parameter leaves are shared across uses") {
  ParameterStore store;
  auto& x = store.add("x", Tensor::scalar(2));
  Tape tape;
  CHECK(tape.parameter(x).id() == tape.parameter(x).id());
  backward(tape, add(tape.parameter(x), tape.parameter(x)));
  CHECK(x.grad.item() == 2);
  CHECK_THROWS_AS(store.add("x", Tensor::scalar(1)), ArgumentError);
}

TEST_CASE("causal_conv1d examples") {
  Tape tape;
  const auto x = tape.constant(Tensor::matrix(3, 1, {1, 2, 3}));
  const auto k1 = tape.constant(Tensor(Shape{1, 1, 1}, 1.0));
  const auto zero = tape.constant(Tensor::vector({0}));
  CHECK(causal_conv1d(x, k1, zero).value() == Tensor::matrix(3, 1, {1, 2, 3}));

  const auto x4 = tape.constant(Tensor::matrix(4, 1, {1, 2, 3, 4}));
  const auto k3 = tape.constant(Tensor(Shape{3, 1, 1}, 1.0));
  CHECK(causal_conv1d(x4, k3, zero).value() == Tensor::matrix(4, 1, {1, 3, 6, 9}));

  const auto x4b = tape.constant(Tensor::matrix(4, 1, {1, 2, 3, 40}));
  const auto out = causal_conv1d(x4b, k3, zero).value();
  for (std::size_t t = 0; t < 3; ++t) CHECK(out[t] == Tensor::matrix(4, 1, {1, 3, 6, 9})[t]);

  CHECK_THROWS_AS(causal_conv1d(x, tape.constant(Tensor(Shape{0, 1, 1})), zero), ArgumentError);
}

TEST_CASE("causal_conv1d kernel slices are ordered oldest first") {
  Tape tape;
  const auto x = tape.constant(Tensor::matrix(3, 1, {1, 10, 100}));
  // Slice 0 multiplies t-1, slice 1 multiplies t.
  const auto kernel = tape.constant(Tensor(Shape{2, 1, 1}, std::vector<double>{2, 3}));
  CHECK(causal_conv1d(x, kernel, tape.constant(Tensor::vector({0}))).value() ==
        Tensor::matrix(3, 1, {3, 32, 320}));
}

TEST_CASE("property: k=1 convolution equals affine") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 5; ++trial) {
    Tape tape;
    const auto x = tape.constant(random_tensor({9, 4}, rng));
    const auto w = random_tensor({4, 3}, rng);
    const auto b = tape.constant(random_tensor({3}, rng));
    const auto conv = causal_conv1d(x, tape.constant(Tensor(Shape{1, 4, 3}, std::vector(w.values().begin(), w.values().end()))), b);
    const auto lin = affine(x, tape.constant(w), b);
    CHECK(max_abs_difference(conv.value(), lin.value()) <= 1e-15);
  }
}

TEST_CASE("masked_softmax examples") {
  const auto mask = sparsity::build_mask(PatternSpec::full_causal(), 2);
  Tape tape;
  const auto p = masked_softmax(tape.constant(Tensor::matrix({{5, 7}, {0, std::log(3.0)}})), mask).value();
  CHECK(p(0, 0) == 1.0);
  CHECK(p(0, 1) == 0.0);
  CHECK(p(1, 0) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(p(1, 1) == doctest::Approx(0.75).epsilon(1e-14));
  const auto q = masked_softmax(tape.constant(Tensor::matrix({{0, 0}, {2, 2}})), mask).value();
  CHECK(q(1, 0) == 0.5);
  CHECK(q(1, 1) == 0.5);
  CHECK_THROWS_AS(masked_softmax(tape.constant(Tensor::matrix({{1}})), mask), ShapeError);
}

TEST_CASE("property: masked_softmax rows sum to one with exact zeros outside the mask") {
  std::mt19937_64 rng(8);
  for (const auto& spec : {PatternSpec::log_sparse(), PatternSpec::log_sparse_restart_local(8),
                           PatternSpec::full_causal()}) {
    const auto mask = sparsity::build_mask(spec, 40);
    Tape tape;
    const auto p = masked_softmax(tape.constant(random_tensor({40, 40}, rng, 30.0)), mask).value();
    for (std::size_t l = 0; l < 40; ++l) {
      double row = 0.0;
      for (std::size_t j = 0; j < 40; ++j) {
        if (!mask.allowed(l + 1, j + 1)) REQUIRE(p(l, j) == 0.0);
        row += p(l, j);
      }
      CHECK(std::abs(row - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("attention examples") {
  const auto mask = sparsity::build_mask(PatternSpec::full_causal(), 2);
  Tape tape;
  // q . k scaled by 1/sqrt(1): row 2 logits (0, ln 3).
  const auto q = tape.constant(Tensor::matrix({{0}, {1}}));
  const auto k = tape.constant(Tensor::matrix({{0}, {std::log(3.0)}}));
  const auto v = tape.constant(Tensor::matrix({{1, 0}, {0, 4}}));
  std::vector<HeadWeights> weights;
  const auto out = multi_head_attention(q, k, v, mask, 1, &weights).value();
  CHECK(out(1, 0) == doctest::Approx(0.25));
  CHECK(out(1, 1) == doctest::Approx(3.0));
  REQUIRE(weights.size() == 1);
  CHECK(weights[0].values.size() == mask.nnz());
  CHECK(max_abs_difference(attend(q, k, v, mask).value(), out) == 0.0);
}

TEST_CASE("property: multi-head attention equals per-head softmax over dense logits") {
  std::mt19937_64 rng(4);
  const std::size_t L = 12, heads = 3, dk = 2, dv = 3;
  const auto mask = sparsity::build_mask(PatternSpec::log_sparse(), L);
  Tape tape;
  const auto q = random_tensor({L, heads * dk}, rng);
  const auto k = random_tensor({L, heads * dk}, rng);
  const auto v = random_tensor({L, heads * dv}, rng);
  const auto fused = multi_head_attention(tape.constant(q), tape.constant(k), tape.constant(v), mask, heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor logits(Shape{L, L});
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t j = 0; j < L; ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < dk; ++c) dot += q(l, h * dk + c) * k(j, h * dk + c);
        logits(l, j) = dot / std::sqrt(static_cast<double>(dk));
      }
    const auto p = masked_softmax(tape.constant(logits), mask).value();
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t c = 0; c < dv; ++c) {
        double expected = 0.0;
        for (std::size_t j = 0; j < L; ++j) expected += p(l, j) * v(j, h * dv + c);
        CHECK(fused.value()(l, h * dv + c) == doctest::Approx(expected).epsilon(1e-12));
      }
  }
}

TEST_CASE("layer_norm examples") {
  Tape tape;
  const auto gain = tape.constant(Tensor::vector({1, 1}));
  const auto shift = tape.constant(Tensor::vector({0, 0}));
  const auto out = layer_norm(tape.constant(Tensor::matrix({{3, 3}, {1, -1}})), gain, shift).value();
  CHECK(out(0, 0) == 0.0);
  CHECK(out(0, 1) == 0.0);
  CHECK(out(1, 0) == doctest::Approx(1.0 / std::sqrt(1.0 + 1e-5)).epsilon(1e-14));
  CHECK(out(1, 1) == doctest::Approx(-1.0 / std::sqrt(1.0 + 1e-5)).epsilon(1e-14));
  CHECK_THROWS_AS(layer_norm(tape.constant(Tensor::matrix({{1}})), tape.constant(Tensor::vector({1})),
                             tape.constant(Tensor::vector({0}))),
                  ShapeError);
}

TEST_CASE("gaussian_nll examples") {
  const double half_log_2pi = 0.5 * std::log(2.0 * M_PI);
  Tape tape;
  const std::vector<double> z{1.0, 2.0, 3.0};
  const auto mu = tape.constant(Tensor::vector({1.0, 1.0, 3.0}));
  const auto one = tape.constant(Tensor::vector({1.0, 1.0, 1.0}));
  const auto two = tape.constant(Tensor::vector({2.0, 2.0, 2.0}));
  CHECK(gaussian_nll(mu, one, z, 0, 1).value().item() == doctest::Approx(half_log_2pi));
  CHECK(half_log_2pi == doctest::Approx(0.9189385).epsilon(1e-7));
  CHECK(gaussian_nll(mu, one, z, 1, 2).value().item() == doctest::Approx(half_log_2pi + 0.5));
  CHECK(gaussian_nll(mu, two, z, 2, 3).value().item() - gaussian_nll(mu, one, z, 2, 3).value().item() ==
        doctest::Approx(std::log(2.0)));
  CHECK(softplus(tape.constant(Tensor::scalar(0))).value().item() == doctest::Approx(0.6931471805599453));
}

TEST_CASE("softplus is stable for large magnitudes") {
  Tape tape;
  const auto out = softplus(tape.constant(Tensor::vector({-800, 800}))).value();
  CHECK(out[0] >= 0.0);
  CHECK(out[0] < 1e-300);
  CHECK(out[1] == 800);
}

TEST_CASE("adam examples") {
  AdamConfig config;
  config.learning_rate = 0.01;
  ParameterStore store;
  auto& p = store.add("p", Tensor::vector({1.0, -2.0}));
  adam_step(store, config, 1);
  CHECK(p.value == Tensor::vector({1.0, -2.0}));

  p.grad = Tensor::vector({0.3, -5.0});
  adam_step(store, config, 1);
  CHECK(p.value[0] == doctest::Approx(1.0 - 0.01).epsilon(1e-6));
  CHECK(p.value[1] == doctest::Approx(-2.0 + 0.01).epsilon(1e-6));
  CHECK(p.grad == Tensor::vector({0.0, 0.0}));

  const double before = p.value[0];
  p.grad = Tensor::vector({0.3, -5.0});
  adam_step(store, config, 2);
  CHECK(p.value[0] < before);
  CHECK_THROWS_AS(adam_step(store, config, 0), ArgumentError);
}

TEST_CASE("grad_check on an affine-only graph is near exact") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Fixture f(seed);
    auto& x = f.add("x", {4, 3});
    auto& w = f.add("w", {3, 2});
    auto& b = f.add("b", {2});
    const LossBuilder build = [&](Tape& t) {
      return weighted_sum(t, affine(t.parameter(x), t.parameter(w), t.parameter(b)), seed);
    };
    CHECK(check_store(build, f.store) < 1e-6);
    CHECK(grad_check(build, f.store, 1e-3, DifferenceScheme::Central).max_relative_error < 1e-6);
  }
}

TEST_CASE("property: every primitive passes grad_check on 5 seeds") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    CAPTURE(seed);
    SUBCASE("elementwise") {
      Fixture f(seed);
      auto& a = f.add("a", {3, 4});
      auto& b = f.add("b", {3, 4});
      const LossBuilder build = [&](Tape& t) {
        const auto x = t.parameter(a), y = t.parameter(b);
        const auto mixed = add(mul(x, y), sub(scale(x, 1.5), softplus(y)));
        return add(weighted_sum(t, mixed, seed), add(mean(mul(y, y)), sum(scale(x, -0.5))));
      };
      CHECK(check_store(build, f.store) < kGradTolerance);
    }
    SUBCASE("relu away from the kink") {
      Fixture f(seed);
      auto& a = f.add("a", {5, 3});
      for (auto& v : a.value.values()) v += v >= 0 ? 0.1 : -0.1;
      const LossBuilder build = [&](Tape& t) { return weighted_sum(t, relu(t.parameter(a)), seed); };
      CHECK(check_store(build, f.store) < kGradTolerance);
    }
    SUBCASE("matmul and add_row") {
      Fixture f(seed);
      auto& a = f.add("a", {4, 3});
      auto& b = f.add("b", {3, 5});
      auto& c = f.add("c", {2, 5});
      auto& bias = f.add("bias", {2});
      const LossBuilder build = [&](Tape& t) {
        const auto ab = matmul(t.parameter(a), t.parameter(b));
        const auto abct = add_row(matmul(ab, t.parameter(c), true), t.parameter(bias));
        return weighted_sum(t, abct, seed);
      };
      CHECK(check_store(build, f.store) < kGradTolerance);
    }
    SUBCASE("causal conv into masked softmax") {
      Fixture f(seed);
      const auto mask = sparsity::build_mask(PatternSpec::log_sparse(), 10);
      auto& x = f.add("x", {10, 3});
      auto& kernel = f.add("kernel", {3, 3, 10});
      auto& bias = f.add("bias", {10});
      const LossBuilder build = [&](Tape& t) {
        const auto logits = causal_conv1d(t.parameter(x), t.parameter(kernel), t.parameter(bias));
        return weighted_sum(t, masked_softmax(logits, mask), seed);
      };
      CHECK(check_store(build, f.store) < kGradTolerance);
    }
    SUBCASE("multi-head attention") {
      Fixture f(seed);
      const auto mask = sparsity::build_mask(PatternSpec::log_sparse_restart_local(6, 2), 12);
      auto& q = f.add("q", {12, 4});
      auto& k = f.add("k", {12, 4});
      auto& v = f.add("v", {12, 6});
      const LossBuilder build = [&](Tape& t) {
        return weighted_sum(t, multi_head_attention(t.parameter(q), t.parameter(k), t.parameter(v), mask, 2), seed);
      };
      CHECK(check_store(build, f.store) < kGradTolerance);
    }
    SUBCASE("layer norm") {
      Fixture f(seed);
      auto& x = f.add("x", {5, 4}, 2.0);
      auto& gain = f.add("gain", {4});
      auto& shift = f.add("shift", {4});
      const LossBuilder build = [&](Tape& t) {
        return weighted_sum(t, layer_norm(t.parameter(x), t.parameter(gain), t.parameter(shift)), seed);
      };
      CHECK(check_store(build, f.store) < kGradTolerance);
    }
    SUBCASE("reshaping ops") {
      Fixture f(seed);
      auto& a = f.add("a", {6, 2});
      auto& b = f.add("b", {6, 3});
      const LossBuilder build = [&](Tape& t) {
        const auto joined = concat_columns({t.parameter(a), t.parameter(b)});
        const auto rows = slice_rows(joined, 2, 3);
        return add(weighted_sum(t, rows, seed), weighted_sum(t, column(joined, 3), seed + 1));
      };
      CHECK(check_store(build, f.store) < kGradTolerance);
    }
    SUBCASE("gaussian likelihood") {
      Fixture f(seed);
      auto& mu = f.add("mu", {8});
      auto& raw = f.add("raw", {8});
      std::vector<double> z(8);
      for (auto& value : z) value = std::uniform_real_distribution<double>(-2, 2)(f.rng);
      const LossBuilder build = [&](Tape& t) {
        return gaussian_nll(t.parameter(mu), softplus(t.parameter(raw)), z, 2, 8);
      };
      CHECK(check_store(build, f.store) < kGradTolerance);
    }
  }
}

TEST_CASE("grad_check flags a corrupted adjoint") {
  ParameterStore store;
  std::mt19937_64 rng(9);
  auto& x = store.add("x", random_tensor({3, 3}, rng));
  // y = 2x with an adjoint that claims 3.
  const LossBuilder build = [&](Tape& t) {
    const auto in = t.parameter(x);
    Tensor value = in.value();
    for (auto& v : value.values()) v *= 2.0;
    const auto y = t.record(std::move(value), {in}, [id = in.id()](Tape& tape, std::size_t self) {
      const Tensor upstream = tape.grad(self);
      auto& target = tape.grad(id);
      for (std::size_t i = 0; i < target.size(); ++i) target[i] += 3.0 * upstream[i];
    });
    return weighted_sum(t, y, 1);
  };
  CHECK(grad_check(build, store).max_relative_error > 1e-2);
}

TEST_CASE("determinism: identical inputs give identical outputs") {
  auto run = [] {
    std::mt19937_64 rng(77);
    const auto mask = sparsity::build_mask(PatternSpec::log_sparse(), 16);
    Tape tape;
    const auto x = tape.constant(random_tensor({16, 4}, rng));
    return multi_head_attention(x, x, x, mask, 2).value();
  };
  CHECK(run() == run());
}

TEST_CASE("checkpoint round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "logsparse_ckpt_test";
  std::filesystem::remove_all(dir);
  std::mt19937_64 rng(2);
  ParameterStore source;
  source.add("layer0/w", random_tensor({3, 4}, rng));
  source.add("bias", random_tensor({4}, rng));
  save_checkpoint(source, dir, {{"epoch", 7}});

  ParameterStore target;
  target.add("layer0/w", Tensor(Shape{3, 4}));
  target.add("bias", Tensor(Shape{4}));
  const auto meta = load_checkpoint(target, dir);
  CHECK(meta.at("epoch") == 7);
  CHECK(read_checkpoint_metadata(dir).at("epoch") == 7);
  CHECK(target[0].value == source[0].value);
  CHECK(target[1].value == source[1].value);

  ParameterStore wrong;
  wrong.add("layer0/w", Tensor(Shape{4, 3}));
  wrong.add("bias", Tensor(Shape{4}));
  CHECK_THROWS(load_checkpoint(wrong, dir));
  CHECK_THROWS(load_checkpoint(target, dir / "missing"));
  std::filesystem::remove_all(dir);
}
