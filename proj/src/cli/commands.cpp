#include "logsparse/cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "logsparse/cli/experiment.hpp"
#include "logsparse/common/error.hpp"
#include "logsparse/model/sampling.hpp"
#include "logsparse/sparsity/analysis.hpp"
#include "logsparse/sparsity/export.hpp"

namespace logsparse::cli {

namespace {

std::size_t parse_size(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || text.empty() || text[0] == '-') throw ConfigError("bad " + what + ": " + text);
  return static_cast<std::size_t>(v);
}

bool parse_flag(const std::string& text, const std::string& what) {
  if (text == "1" || text == "true" || text == "on") return true;
  if (text == "0" || text == "false" || text == "off") return false;
  throw ConfigError("bad " + what + ": " + text);
}

std::pair<std::size_t, std::size_t> parse_pair(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw ConfigError("path pairs are written from:to, got " + text);
  return {parse_size(text.substr(0, colon), "path source"), parse_size(text.substr(colon + 1), "path target")};
}

}  // namespace

MaskRequest parse_mask_tokens(const std::vector<std::string>& tokens) {
  if (tokens.empty()) throw ConfigError("mask needs a pattern name");
  MaskRequest r;
  try {
    r.spec.kind = sparsity::parse_pattern_kind(tokens.front());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("expected key=value, got " + t);
    const std::string key = t.substr(0, eq);
    const std::string value = t.substr(eq + 1);
    if (key == "L") r.length = parse_size(value, "L");
    else if (key == "sub") r.spec.subseq_len = parse_size(value, "sub");
    else if (key == "win") r.spec.local_window = parse_size(value, "win");
    else if (key == "densify") r.spec.densify = parse_flag(value, "densify");
    else if (key == "cross") r.spec.cross_subsequence = parse_flag(value, "cross");
    else throw ConfigError("unknown mask token: " + key);
  }
  if (r.length == 0) throw ConfigError("mask needs L=<length>");
  return r;
}

nlohmann::json mask_report(const MaskRequest& r) {
  try {
    sparsity::validate(r.spec, r.length);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const auto mask = sparsity::build_mask(r.spec, r.length);
  const std::size_t bound = sparsity::floor_log2(r.length) + 1;
  nlohmann::json j;
  j["pattern"] = sparsity::to_json(r.spec);
  j["length"] = r.length;
  if (r.spec.uses_local()) j["effective_local_window"] = sparsity::effective_local_window(r.spec, r.length);
  j["budget"] = sparsity::to_json(sparsity::attended_budget(mask));
  const auto depth = sparsity::min_layers_full_coverage(mask);
  j["min_layers_full_coverage"] = depth ? nlohmann::json(*depth) : nlohmann::json();
  j["theorem_bound"] = bound;
  if (r.verify_theorem) j["theorem_holds"] = depth.has_value() && *depth <= bound;
  if (!r.paths.empty()) {
    const std::size_t layers = r.path_layers == 0 ? bound : r.path_layers;
    nlohmann::json paths = nlohmann::json::array();
    for (const auto& [from, to] : r.paths) {
      if (from < 1 || to > r.length || from > to) {
        throw ConfigError("path pair " + std::to_string(from) + ":" + std::to_string(to) + " is out of range");
      }
      paths.push_back({{"from", from}, {"to", to}, {"layers", layers},
                       {"count", sparsity::count_paths(mask, from, to, layers).str()}});
    }
    j["paths"] = paths;
  }
  return j;
}

namespace {

void print_mask_text(const nlohmann::json& j, const MaskRequest& r, std::ostream& out) {
  out << "pattern " << j["pattern"]["kind"].get<std::string>() << '\n';
  out << "length " << r.length << '\n';
  if (r.spec.uses_restart()) out << "subseq_len " << r.spec.subseq_len << '\n';
  if (j.contains("effective_local_window")) out << "local_window " << j["effective_local_window"] << '\n';
  for (const char* key : {"nnz", "dense_cells", "row_max", "analytic_bound", "equivalent_full_length"}) {
    out << key << ' ' << j["budget"][key] << '\n';
  }
  const auto& depth = j["min_layers_full_coverage"];
  out << "min_layers_full_coverage " << (depth.is_null() ? std::string("none") : depth.dump()) << '\n';
  if (r.verify_theorem) {
    out << (j["theorem_holds"].get<bool>() ? "covered" : "NOT covered") << " within " << j["theorem_bound"]
        << " layers\n";
  }
  if (j.contains("paths")) {
    for (const auto& p : j["paths"]) {
      out << "paths " << p["from"] << "->" << p["to"] << " layers " << p["layers"] << ' '
          << p["count"].get<std::string>() << '\n';
    }
  }
}

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string pattern;
  std::optional<std::size_t> subseq_len;
  std::optional<std::size_t> local_window;
  std::optional<std::size_t> kernel_size;
  std::optional<std::size_t> layers;
  std::string mode;
  std::optional<std::size_t> samples;
  std::optional<std::size_t> threads;
  std::string checkpoint;
};

void add_experiment_options(CLI::App* app, Overrides& o) {
  app->add_option("--config", o.config, "experiment config (JSON)");
  app->add_option("--seed", o.seed, "random seed");
  app->add_option("--out", o.out, "output directory");
  app->add_option("--pattern", o.pattern, "attention pattern name");
  app->add_option("--subseq-len", o.subseq_len, "restart subsequence length");
  app->add_option("--local-window", o.local_window, "local window size");
  app->add_option("--kernel-size", o.kernel_size, "query/key convolution kernel size");
  app->add_option("--layers", o.layers, "decoder layers");
  app->add_option("--mode", o.mode, "rolling or direct");
  app->add_option("--samples", o.samples, "sample paths per forecast");
  app->add_option("--threads", o.threads, "worker threads (0 = all cores)");
}

ExperimentConfig load_with_overrides(const Overrides& o) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : load_experiment(o.config);
  if (o.seed) c.seed = o.seed;
  if (!o.out.empty()) c.out = o.out;
  if (!o.pattern.empty()) {
    try {
      c.model.attention.pattern.kind = sparsity::parse_pattern_kind(o.pattern);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
  if (o.subseq_len) c.model.attention.pattern.subseq_len = *o.subseq_len;
  if (o.local_window) c.model.attention.pattern.local_window = *o.local_window;
  if (o.kernel_size) c.model.attention.kernel_size = *o.kernel_size;
  if (o.layers) c.model.layers = *o.layers;
  if (!o.mode.empty()) c.eval.mode = train::parse_eval_mode(o.mode);
  if (o.samples) c.eval.samples = *o.samples;
  if (o.threads) {
    c.eval.threads = *o.threads;
    c.train.threads = *o.threads;
  }
  return c;
}

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

void write_text(const std::filesystem::path& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write " + path.string());
  body(f);
}

std::filesystem::path make_out_dir(const ExperimentConfig& c) {
  std::error_code ec;
  std::filesystem::create_directories(c.out, ec);
  if (ec) throw IoError("cannot create " + c.out.string() + ": " + ec.message());
  return c.out;
}

nlohmann::json stamp(const ExperimentConfig& c) {
  return {{"config_hash", config_hash(c)}, {"seed", *c.seed}};
}

struct Trained {
  model::Forecaster model;
  train::TrainResult result;
};

Trained train_and_save(ExperimentConfig& c, const PreparedData& data, const std::filesystem::path& dir) {
  model::Forecaster model(c.model, *c.seed ^ 0x30de1ULL);
  spdlog::info("training on {} windows, validating on {}", data.train.size(), data.val.size());
  auto result = train::train(model, data.train, data.val, c.train);
  model.save(dir / "checkpoint", {{"run", stamp(c)}, {"best_epoch", result.best_epoch},
                                  {"best_val_nll", result.best_val_nll}});
  train::save_curve_csv(result.curve, dir / "training_curve.csv");
  return {std::move(model), std::move(result)};
}

nlohmann::json evaluate_and_write(const ExperimentConfig& c, const model::Forecaster& model, const PreparedData& data,
                                  const std::filesystem::path& dir) {
  const auto report = train::evaluate_rolling(model, data.eval_set, data.covariates, data.eval);
  const auto naive = train::evaluate_seasonal_naive(data.eval_set, data.covariates, data.eval, c.eval.seasonal_period);
  auto j = train::to_json(report);
  j["seasonal_naive"] = {{"period", c.eval.seasonal_period}, {"r50", naive.r50}, {"r90", naive.r90}};
  j["run"] = stamp(c);
  write_json(j, dir / "eval_report.json");
  write_text(dir / "forecasts.csv", [&](std::ostream& f) { train::write_forecast_csv(report, f); });
  return j;
}

void print_summary(const nlohmann::json& report, std::ostream& out) {
  out << "R0.5 " << report["r50"].get<double>() << " R0.9 " << report["r90"].get<double>() << " (seasonal naive R0.5 "
      << report["seasonal_naive"]["r50"].get<double>() << ")\n";
}

model::Forecaster load_checkpoint_for(const ExperimentConfig& c, const Overrides& o) {
  const std::filesystem::path dir = o.checkpoint.empty() ? c.out / "checkpoint" : std::filesystem::path(o.checkpoint);
  if (!std::filesystem::exists(dir / "manifest.json")) throw ConfigError("no checkpoint at " + dir.string());
  auto model = model::Forecaster::load(dir);
  if (model::to_json(model.config()) != model::to_json(c.model)) {
    throw ConfigError("checkpoint " + dir.string() + " does not match the configured model");
  }
  return model;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
  auto logger = std::make_shared<spdlog::logger>("logsparse", sink);
  logger->set_pattern("[%l] %v");
  auto previous = spdlog::default_logger();
  spdlog::set_default_logger(logger);
  struct Restore {
    std::shared_ptr<spdlog::logger> logger;
    ~Restore() { spdlog::set_default_logger(logger); }
  } restore{previous};

  CLI::App app{"Probabilistic forecasting with sparse convolutional self-attention", "logsparse"};
  app.require_subcommand(1);
  app.fallthrough();
  bool quiet = false;
  app.add_flag("--quiet", quiet, "only log warnings and errors");

  Overrides o;
  std::function<int()> action;

  auto* run = app.add_subcommand("run", "generate or load data, train, evaluate and write every artifact");
  add_experiment_options(run, o);
  run->callback([&] {
    action = [&] {
      auto c = load_with_overrides(o);
      auto data = prepare_data(c);
      const auto dir = make_out_dir(c);
      write_json(to_json(c), dir / "config.json");
      const auto trained = train_and_save(c, data, dir);
      print_summary(evaluate_and_write(c, trained.model, data, dir), out);
      return 0;
    };
  });

  auto* train_cmd = app.add_subcommand("train", "train and write the checkpoint and training curve");
  add_experiment_options(train_cmd, o);
  train_cmd->callback([&] {
    action = [&] {
      auto c = load_with_overrides(o);
      auto data = prepare_data(c);
      const auto dir = make_out_dir(c);
      write_json(to_json(c), dir / "config.json");
      const auto trained = train_and_save(c, data, dir);
      out << "best epoch " << trained.result.best_epoch << " val_nll " << trained.result.best_val_nll << '\n';
      return 0;
    };
  });

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test range");
  add_experiment_options(eval_cmd, o);
  eval_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint directory (default <out>/checkpoint)");
  eval_cmd->callback([&] {
    action = [&] {
      auto c = load_with_overrides(o);
      auto data = prepare_data(c);
      const auto model = load_checkpoint_for(c, o);
      print_summary(evaluate_and_write(c, model, data, make_out_dir(c)), out);
      return 0;
    };
  });

  auto* forecast_cmd = app.add_subcommand("forecast", "write sampled forecasts for the test range");
  add_experiment_options(forecast_cmd, o);
  forecast_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint directory (default <out>/checkpoint)");
  forecast_cmd->callback([&] {
    action = [&] {
      auto c = load_with_overrides(o);
      auto data = prepare_data(c);
      const auto model = load_checkpoint_for(c, o);
      const auto report = train::evaluate_rolling(model, data.eval_set, data.covariates, data.eval);
      const auto path = make_out_dir(c) / "forecasts.csv";
      write_text(path, [&](std::ostream& f) { train::write_forecast_csv(report, f); });
      out << "wrote " << path.string() << '\n';
      return 0;
    };
  });

  auto* synth = app.add_subcommand("synth", "write the synthetic train/val/test splits as CSV");
  add_experiment_options(synth, o);
  synth->callback([&] {
    action = [&] {
      auto c = load_with_overrides(o);
      if (c.data.source != DataSource::Synthetic) throw ConfigError("synth needs a synthetic data source");
      if (!c.seed) throw ConfigError("a seed is required (config \"seed\" or --seed)");
      auto sc = c.data.synthetic;
      sc.seed = *c.seed;
      const auto ds = data::generate_synthetic(sc);
      const auto dir = make_out_dir(c);
      data::save_csv(ds.train, dir / "train.csv");
      data::save_csv(ds.val, dir / "val.csv");
      data::save_csv(ds.test, dir / "test.csv");
      out << "wrote " << ds.train.count() << '/' << ds.val.count() << '/' << ds.test.count() << " series to "
          << dir.string() << '\n';
      return 0;
    };
  });

  std::vector<std::string> mask_tokens;
  bool verify = false;
  bool as_json = false;
  std::vector<std::string> pairs;
  std::size_t path_layers = 0;
  std::string mask_csv;
  auto* mask = app.add_subcommand("mask", "analyse an attention pattern");
  mask->add_option("tokens", mask_tokens, "pattern name followed by L=, sub=, win=, densify=, cross=")->required();
  mask->add_flag("--verify-theorem1", verify, "check full coverage within floor(log2 L) + 1 layers");
  mask->add_option("--paths", pairs, "from:to pairs to count paths for");
  mask->add_option("--path-layers", path_layers, "layers for path counts (default floor(log2 L) + 1)");
  mask->add_option("--csv", mask_csv, "write the dense 0/1 mask to this file");
  mask->add_flag("--json", as_json, "print JSON instead of text");
  mask->callback([&] {
    action = [&] {
      auto request = parse_mask_tokens(mask_tokens);
      request.verify_theorem = verify;
      request.path_layers = path_layers;
      for (const auto& p : pairs) request.paths.push_back(parse_pair(p));
      const auto j = mask_report(request);
      if (!mask_csv.empty()) {
        write_text(mask_csv, [&](std::ostream& f) {
          sparsity::write_mask_dense_csv(sparsity::build_mask(request.spec, request.length), f);
        });
      }
      if (as_json) out << j.dump(2) << '\n';
      else print_mask_text(j, request, out);
      return verify && !j["theorem_holds"].get<bool>() ? 3 : 0;
    };
  });

  std::size_t series_index = 0;
  auto* export_cmd = app.add_subcommand("export-attention", "write per-layer, per-head attention matrices");
  add_experiment_options(export_cmd, o);
  export_cmd->add_option("--checkpoint", o.checkpoint, "checkpoint directory (default <out>/checkpoint)");
  export_cmd->add_option("--series", series_index, "index of the test series");
  export_cmd->callback([&] {
    action = [&] {
      auto c = load_with_overrides(o);
      auto data = prepare_data(c);
      const auto model = load_checkpoint_for(c, o);
      if (series_index >= data.eval_set.count()) throw ConfigError("--series is out of range");
      data::WindowOptions wo;
      wo.t0 = data.eval.t0;
      wo.tau = c.tau();
      wo.boundary = data.eval.test_start;
      wo.shared_id = data.eval.shared_id;
      const auto window = data::make_window(data.eval_set, data.covariates, series_index,
                                            data.eval.test_start - data.eval.t0, wo);
      const auto files = model::export_attention(model, window, make_out_dir(c) / "attention");
      out << "wrote " << files.size() << " attention matrices\n";
      return 0;
    };
  });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  logger->set_level(quiet ? spdlog::level::warn : spdlog::level::info);

  try {
    return action ? action() : 2;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const ArgumentError& e) {
    err << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const DivergenceError& e) {
    err << "training diverged: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  }
}

}  // namespace logsparse::cli
