#include "logsparse/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

#include "logsparse/autodiff/ops.hpp"
#include "logsparse/autodiff/optimizer.hpp"
#include "logsparse/common/error.hpp"
#include "logsparse/common/parallel.hpp"

namespace logsparse::train {

using ad::Tensor;

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning rate must be positive");
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  if (max_epochs == 0) throw ConfigError("max epochs must be at least 1");
  if (patience < 1) throw ConfigError("patience must be at least 1");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},       {"patience", c.patience},
          {"warmup_steps", c.warmup_steps},   {"seed", c.seed},
          {"threads", c.threads},             {"include_conditioning", c.include_conditioning}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("training config must be an object");
  TrainConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "batch_size") c.batch_size = value.get<std::size_t>();
      else if (key == "max_epochs") c.max_epochs = value.get<std::size_t>();
      else if (key == "patience") c.patience = value.get<std::size_t>();
      else if (key == "warmup_steps") c.warmup_steps = value.get<std::size_t>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "threads") c.threads = value.get<std::size_t>();
      else if (key == "include_conditioning") c.include_conditioning = value.get<bool>();
      else throw ConfigError("unknown training key: " + key);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("training config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

std::size_t loss_begin(const data::Window& w, bool include_conditioning) {
  return include_conditioning ? 0 : w.t0;
}

struct WindowGradient {
  double loss = 0.0;
  std::size_t points = 0;
  std::vector<Tensor> grads;  // by parameter index; empty if untouched
};

WindowGradient window_gradient(const model::Forecaster& model, const data::Window& w, bool include_conditioning) {
  ad::Tape tape;
  const auto dist = model::forward_distribution(tape, model, w);
  const std::size_t begin = loss_begin(w, include_conditioning);
  const auto loss = model::negative_log_likelihood(dist, w, begin, w.length());
  tape.propagate(loss);
  WindowGradient out;
  out.loss = loss.value().item();
  out.points = w.length() - begin;
  out.grads.resize(model.parameters().size());
  tape.for_each_parameter_gradient([&](ad::Parameter& p, const Tensor& g) { out.grads[p.index] = g; });
  return out;
}

double window_loss(const model::Forecaster& model, const data::Window& w, bool include_conditioning) {
  ad::Tape tape;
  const auto dist = model::forward_distribution(tape, model, w);
  return model::negative_log_likelihood(dist, w, loss_begin(w, include_conditioning), w.length()).value().item();
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

double mean_nll(const model::Forecaster& model, const std::vector<data::Window>& windows, bool include_conditioning,
                std::size_t threads) {
  if (windows.empty()) throw ArgumentError("mean_nll needs at least one window");
  std::vector<double> losses(windows.size());
  parallel_for(windows.size(), threads,
               [&](std::size_t i) { losses[i] = window_loss(model, windows[i], include_conditioning); });
  double total = 0.0;
  std::size_t points = 0;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    total += losses[i];
    points += windows[i].length() - loss_begin(windows[i], include_conditioning);
  }
  return total / static_cast<double>(points);
}

TrainResult train(model::Forecaster& model, const std::vector<data::Window>& train_windows,
                  const std::vector<data::Window>& val_windows, const TrainConfig& config,
                  const ValidationMetric& metric) {
  config.validate();
  if (train_windows.empty()) throw ConfigError("training partition is empty");
  if (val_windows.empty() && !metric) throw ConfigError("validation partition is empty");
  for (const auto& w : train_windows) model::check_window(model, w);
  for (const auto& w : val_windows) model::check_window(model, w);

  auto& params = model.parameters();
  params.zero_grad();
  const ad::AdamConfig adam{config.learning_rate};
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(train_windows.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.best_val_nll = std::numeric_limits<double>::infinity();
  std::vector<Tensor> best = params.snapshot_values();
  std::size_t stale = 0;
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t first = 0; first < order.size(); first += config.batch_size) {
      const std::size_t count = std::min(config.batch_size, order.size() - first);
      std::vector<WindowGradient> parts(count);
      parallel_for(count, config.threads, [&](std::size_t i) {
        parts[i] = window_gradient(model, train_windows[order[first + i]], config.include_conditioning);
      });
      ++step;
      double loss = 0.0;
      std::size_t points = 0;
      for (const auto& part : parts) {
        loss += part.loss;
        points += part.points;
      }
      const double inv = 1.0 / static_cast<double>(points);
      // Summed in batch order so the result does not depend on threading.
      for (const auto& part : parts) {
        for (std::size_t p = 0; p < part.grads.size(); ++p) {
          if (part.grads[p].empty()) continue;
          auto grad = params[p].grad.values();
          const auto g = part.grads[p].values();
          for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += g[i] * inv;
        }
      }
      const double batch_nll = loss * inv;
      bool finite = std::isfinite(batch_nll);
      for (auto& p : params) finite = finite && all_finite(p->grad.values());
      if (!finite) {
        throw DivergenceError("non-finite loss or gradient at step " + std::to_string(step) + " (epoch " +
                              std::to_string(epoch) + ", batch nll " + std::to_string(batch_nll) + ")");
      }
      ad::AdamConfig scheduled = adam;
      if (config.warmup_steps > 0 && step < config.warmup_steps) {
        scheduled.learning_rate *= static_cast<double>(step) / static_cast<double>(config.warmup_steps);
      }
      ad::adam_step(params, scheduled, step);
      result.curve.push_back({step, epoch, batch_nll, std::numeric_limits<double>::quiet_NaN()});
    }

    const double val = metric ? metric(epoch, model) : mean_nll(model, val_windows, config.include_conditioning,
                                                                config.threads);
    if (!std::isfinite(val)) throw DivergenceError("non-finite validation NLL after epoch " + std::to_string(epoch));
    result.curve.back().val_nll = val;
    result.epoch_val_nll.push_back(val);
    spdlog::info("epoch {} step {} train_nll {:.6f} val_nll {:.6f}", epoch, step, result.curve.back().train_nll,
                 val);
    if (val < result.best_val_nll) {
      result.best_val_nll = val;
      result.best_epoch = epoch;
      best = params.snapshot_values();
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  params.restore_values(best);
  result.steps = step;
  return result;
}

void write_curve_csv(const std::vector<CurvePoint>& curve, std::ostream& out) {
  out.precision(std::numeric_limits<double>::max_digits10);
  out << "step,train_nll,val_nll\n";
  for (const auto& p : curve) {
    out << p.step << ',' << p.train_nll << ',';
    if (!std::isnan(p.val_nll)) out << p.val_nll;
    out << '\n';
  }
}

void save_curve_csv(const std::vector<CurvePoint>& curve, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_curve_csv(curve, out);
}

}  // namespace logsparse::train
