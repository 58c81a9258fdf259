#include "logsparse/model/sampling.hpp"

#include <cmath>
#include <random>

#include "logsparse/common/error.hpp"

namespace logsparse::model {

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

NetworkStepModel::NetworkStepModel(const Forecaster& model, const data::Window& window)
    : model_(model),
      window_(window),
      nu_(compute_scale(window.z, window.t0)),
      stack_(model.layers(), model.config().attention, mask_for_length(model, window.length())) {
  check_window(model, window);
  const auto& c = model.config();
  const std::size_t L = window.length();
  const std::size_t e = c.embedding_dim;
  const auto w = ad::as_matrix(model.input_weight().value);
  z_weight_ = w.row(0);

  ad::RowMatrix features(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(e + c.covariate_width));
  const auto pos = ad::as_matrix(model.position_embedding().value);
  const auto id = ad::as_matrix(model.id_embedding().value).row(static_cast<Eigen::Index>(window.embedding_id));
  for (std::size_t t = 0; t < L; ++t) {
    const auto r = static_cast<Eigen::Index>(t);
    features.row(r).head(static_cast<Eigen::Index>(e)) = pos.row(r) + id;
    for (std::size_t f = 0; f < c.covariate_width; ++f) {
      features(r, static_cast<Eigen::Index>(e + f)) = window.covariates(t, f);
    }
  }
  static_part_ = features * w.bottomRows(w.rows() - 1);
  static_part_.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(
      model.input_bias().value.data(), static_cast<Eigen::Index>(model.input_bias().value.size()));
}

ad::RowMatrix NetworkStepModel::project(std::size_t position, const Eigen::VectorXd& z) const {
  ad::RowMatrix rows(z.size(), static_part_.cols());
  for (Eigen::Index b = 0; b < z.size(); ++b) {
    rows.row(b) = static_part_.row(static_cast<Eigen::Index>(position)) + (z(b) / nu_) * z_weight_;
  }
  return rows;
}

void NetworkStepModel::head(const ad::RowMatrix& out, std::span<double> mu, std::span<double> sigma) const {
  const auto w = ad::as_matrix(model_.head_weight().value);
  const auto& bias = model_.head_bias().value;
  const ad::RowMatrix raw = out * w;
  for (Eigen::Index b = 0; b < raw.rows(); ++b) {
    mu[static_cast<std::size_t>(b)] = (raw(b, 0) + bias[0]) * nu_;
    sigma[static_cast<std::size_t>(b)] = softplus(raw(b, 1) + bias[1]) * nu_;
  }
}

std::pair<double, double> NetworkStepModel::begin(std::size_t paths) {
  if (paths < 1) throw ArgumentError("sampling needs at least one path");
  if (window_.tau < 1) throw ArgumentError("window has no forecast range");
  stack_.reset(1);
  ad::RowMatrix out;
  Eigen::VectorXd z(1);
  for (std::size_t t = 0; t <= window_.t0; ++t) {
    z(0) = t == 0 ? 0.0 : window_.z[t - 1];
    out = stack_.step(project(t, z));
  }
  double mu = 0.0, sigma = 0.0;
  head(out, {&mu, 1}, {&sigma, 1});
  stack_.broadcast(paths);
  return {mu, sigma};
}

void NetworkStepModel::advance(std::span<const double> values, std::span<double> mu, std::span<double> sigma) {
  if (values.size() != stack_.batch() || mu.size() != values.size() || sigma.size() != values.size()) {
    throw ShapeError("advance: expected one value per path");
  }
  const Eigen::VectorXd z = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
  head(stack_.step(project(stack_.position(), z)), mu, sigma);
}

ad::Tensor ancestral_sample(StepModel& model, std::size_t tau, std::size_t paths, std::uint64_t seed) {
  if (paths < 1) throw ArgumentError("sampling needs at least one path");
  ad::Tensor out(ad::Shape{paths, tau});
  if (tau == 0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto [mu0, sigma0] = model.begin(paths);
  for (std::size_t s = 0; s < paths; ++s) out(s, 0) = mu0 + sigma0 * normal(rng);
  std::vector<double> last(paths), mu(paths), sigma(paths);
  for (std::size_t step = 1; step < tau; ++step) {
    for (std::size_t s = 0; s < paths; ++s) last[s] = out(s, step - 1);
    model.advance(last, mu, sigma);
    for (std::size_t s = 0; s < paths; ++s) out(s, step) = mu[s] + sigma[s] * normal(rng);
  }
  return out;
}

ad::Tensor ancestral_forecast(const Forecaster& model, const data::Window& window, std::size_t paths,
                              std::uint64_t seed) {
  NetworkStepModel step(model, window);
  return ancestral_sample(step, window.tau, paths, seed);
}

}  // namespace logsparse::model
