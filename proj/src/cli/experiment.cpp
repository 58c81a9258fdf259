#include "logsparse/cli/experiment.hpp"

#include <cstdio>
#include <fstream>

#include "logsparse/common/error.hpp"
#include "logsparse/sparsity/export.hpp"

namespace logsparse::cli {

namespace {

template <typename T>
T get(const nlohmann::json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad value for \"" + key + "\": " + e.what());
  }
}

void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& known, const std::string& section) {
  if (!j.is_object()) throw ConfigError(section + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError("unknown key in " + section + ": " + key);
    }
  }
}

DataConfig data_from_json(const nlohmann::json& j, const std::filesystem::path& base) {
  reject_unknown(j,
                 {"source", "t0", "tau", "train_count", "val_count", "test_count", "noise_std", "amplitude_max",
                  "path", "id_column", "timestamp_column", "value_column", "train_windows", "covariates",
                  "shared_id"},
                 "data");
  DataConfig d;
  const auto source = get<std::string>(j, "source", "synthetic");
  if (source == "synthetic") {
    d.source = DataSource::Synthetic;
    auto& s = d.synthetic;
    s.t0 = get(j, "t0", s.t0);
    s.tau = get(j, "tau", s.tau);
    s.train_count = get(j, "train_count", s.train_count);
    s.val_count = get(j, "val_count", s.val_count);
    s.test_count = get(j, "test_count", s.test_count);
    s.noise_std = get(j, "noise_std", s.noise_std);
    s.amplitude_max = get(j, "amplitude_max", s.amplitude_max);
    for (const char* key : {"path", "train_windows", "shared_id"}) {
      if (j.contains(key)) throw ConfigError(std::string("data.") + key + " applies to CSV sources only");
    }
  } else if (source == "csv") {
    d.source = DataSource::Csv;
    if (!j.contains("path")) throw ConfigError("CSV data source needs data.path");
    d.csv_path = get<std::string>(j, "path", "");
    if (d.csv_path.is_relative() && !base.empty()) d.csv_path = base / d.csv_path;
    d.schema.id_column = get(j, "id_column", d.schema.id_column);
    d.schema.timestamp_column = get(j, "timestamp_column", d.schema.timestamp_column);
    d.schema.value_column = get(j, "value_column", d.schema.value_column);
    d.t0 = get(j, "t0", d.t0);
    d.train_windows = get(j, "train_windows", d.train_windows);
    d.shared_id = get(j, "shared_id", d.shared_id);
    if (j.contains("tau")) throw ConfigError("CSV windows take tau from eval.horizon and eval.days");
  } else {
    throw ConfigError("unknown data source: " + source);
  }
  for (const auto& name : get<std::vector<std::string>>(j, "covariates", {})) {
    d.covariates.push_back(data::parse_time_feature(name));
  }
  return d;
}

nlohmann::json data_to_json(const DataConfig& d) {
  nlohmann::json features = nlohmann::json::array();
  for (auto f : d.covariates) features.push_back(data::to_string(f));
  if (d.source == DataSource::Synthetic) {
    const auto& s = d.synthetic;
    return {{"source", "synthetic"},          {"t0", s.t0},
            {"tau", s.tau},                   {"train_count", s.train_count},
            {"val_count", s.val_count},       {"test_count", s.test_count},
            {"noise_std", s.noise_std},       {"amplitude_max", s.amplitude_max},
            {"covariates", features}};
  }
  return {{"source", "csv"},
          {"path", d.csv_path.string()},
          {"id_column", d.schema.id_column},
          {"timestamp_column", d.schema.timestamp_column},
          {"value_column", d.schema.value_column},
          {"t0", d.t0},
          {"train_windows", d.train_windows},
          {"shared_id", d.shared_id},
          {"covariates", features}};
}

EvalConfig eval_from_json(const nlohmann::json& j) {
  reject_unknown(j, {"mode", "horizon", "days", "samples", "seasonal_period", "threads"}, "eval");
  EvalConfig e;
  e.mode = train::parse_eval_mode(get<std::string>(j, "mode", "rolling"));
  e.horizon = get(j, "horizon", e.horizon);
  e.days = get(j, "days", e.days);
  e.samples = get(j, "samples", e.samples);
  e.seasonal_period = get(j, "seasonal_period", e.seasonal_period);
  e.threads = get(j, "threads", e.threads);
  return e;
}

nlohmann::json eval_to_json(const EvalConfig& e) {
  return {{"mode", train::to_string(e.mode)}, {"horizon", e.horizon}, {"days", e.days},
          {"samples", e.samples},             {"seasonal_period", e.seasonal_period}, {"threads", e.threads}};
}

}  // namespace

std::size_t ExperimentConfig::t0() const {
  return data.source == DataSource::Synthetic ? data.synthetic.t0 : data.t0;
}

std::size_t ExperimentConfig::horizon() const {
  return data.source == DataSource::Synthetic ? data.synthetic.tau : eval.horizon;
}

std::size_t ExperimentConfig::days() const { return data.source == DataSource::Synthetic ? 1 : eval.days; }

std::size_t ExperimentConfig::tau() const {
  return eval.mode == train::EvalMode::Direct ? horizon() * days() : horizon();
}

ExperimentConfig experiment_from_json(const nlohmann::json& j, const std::filesystem::path& base) {
  reject_unknown(j, {"seed", "out", "data", "model", "train", "eval"}, "config");
  ExperimentConfig c;
  if (j.contains("seed")) c.seed = get<std::uint64_t>(j, "seed", 0);
  if (j.contains("out")) c.out = get<std::string>(j, "out", "");
  if (j.contains("data")) c.data = data_from_json(j.at("data"), base);
  if (j.contains("model")) {
    reject_unknown(j.at("model"),
                   {"layers", "heads", "d_model", "d_k", "d_v", "d_ff", "kernel_size", "pattern", "embedding_dim",
                    "max_length", "vocabulary", "covariate_width"},
                   "model");
    c.model = model::model_config_from_json(j.at("model"));
  }
  if (j.contains("train")) c.train = train::train_config_from_json(j.at("train"));
  if (j.contains("eval")) c.eval = eval_from_json(j.at("eval"));
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return experiment_from_json(j, path.parent_path());
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j = {{"out", c.out.string()},
                      {"data", data_to_json(c.data)},
                      {"model", model::to_json(c.model)},
                      {"train", train::to_json(c.train)},
                      {"eval", eval_to_json(c.eval)}};
  if (c.seed) j["seed"] = *c.seed;
  return j;
}

void resolve(ExperimentConfig& c, std::size_t series_count) {
  if (c.data.source == DataSource::Synthetic) c.data.synthetic.validate();
  if (c.eval.horizon == 0 || c.eval.days == 0) throw ConfigError("eval horizon and days must be at least 1");
  if (c.eval.samples == 0) throw ConfigError("eval samples must be at least 1");
  if (c.eval.seasonal_period == 0) throw ConfigError("seasonal period must be at least 1");
  if (c.t0() == 0) throw ConfigError("t0 must be at least 1");
  if (c.eval.seasonal_period > c.t0()) throw ConfigError("seasonal period exceeds the conditioning length");
  const bool shared = c.data.source == DataSource::Synthetic || c.data.shared_id;
  c.model.max_length = c.t0() + c.tau();
  c.model.vocabulary = shared ? 1 : std::max<std::size_t>(series_count, 1);
  c.model.covariate_width = c.data.covariates.size();
  c.model.validate();
  c.train.validate();
}

std::string config_hash(const ExperimentConfig& config) {
  auto j = to_json(config);
  j.erase("out");  // where results go does not change them
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

PreparedData prepare_data(ExperimentConfig& c) {
  if (!c.seed) throw ConfigError("a seed is required (config \"seed\" or --seed)");
  const std::uint64_t seed = *c.seed;
  c.train.seed = seed;
  PreparedData p;
  const std::size_t t0 = c.t0();
  const std::size_t tau = c.tau();

  if (c.data.source == DataSource::Synthetic) {
    resolve(c, 0);
    auto sc = c.data.synthetic;
    sc.seed = seed;
    auto ds = data::generate_synthetic(sc);
    const std::size_t length = t0 + tau;
    p.covariates = data::fit_covariates(c.data.covariates, ds.train, length);
    data::WindowOptions wo;
    wo.t0 = t0;
    wo.tau = tau;
    wo.shared_id = true;
    for (std::size_t i = 0; i < ds.train.count(); ++i) p.train.push_back(data::make_window(ds.train, p.covariates, i, 0, wo));
    for (std::size_t i = 0; i < ds.val.count(); ++i) p.val.push_back(data::make_window(ds.val, p.covariates, i, 0, wo));
    p.train_set = std::move(ds.train);
    p.eval_set = std::move(ds.test);
    p.eval.test_start = t0;
    p.eval.shared_id = true;
  } else {
    if (!std::filesystem::exists(c.data.csv_path)) {
      throw ConfigError("data file does not exist: " + c.data.csv_path.string());
    }
    auto set = data::load_csv(c.data.csv_path, c.data.schema);
    resolve(c, set.count());
    if (set.count() == 0) throw ConfigError("data file has no series");
    const std::size_t length = set.series.front().values.size();
    for (const auto& s : set.series) {
      if (s.values.size() != length) throw ConfigError("CSV series must have equal lengths for evaluation");
    }
    const std::size_t span = c.days() * c.horizon();
    if (length < span + t0 + tau) {
      throw ConfigError("series of " + std::to_string(length) + " points leave no training window before the " +
                        std::to_string(span) + "-point test range");
    }
    const std::size_t test_start = length - span;
    p.covariates = data::fit_covariates(c.data.covariates, set, test_start);
    data::WindowOptions wo;
    wo.t0 = t0;
    wo.tau = tau;
    wo.boundary = test_start;
    wo.shared_id = c.data.shared_id;
    auto windows = data::sample_windows(set, p.covariates, wo, c.data.train_windows, seed ^ 0x5eedULL);
    auto [train_w, val_w] = data::split_train_val(std::move(windows), seed ^ 0x5917ULL);
    p.train = std::move(train_w);
    p.val = std::move(val_w);
    p.eval_set = set;
    p.train_set = std::move(set);
    p.eval.test_start = test_start;
    p.eval.shared_id = c.data.shared_id;
  }
  p.eval.mode = c.eval.mode;
  p.eval.t0 = t0;
  p.eval.horizon = c.horizon();
  p.eval.days = c.days();
  p.eval.samples = c.eval.samples;
  p.eval.seed = seed ^ 0xe7a1ULL;
  p.eval.threads = c.eval.threads;
  return p;
}

}  // namespace logsparse::cli
