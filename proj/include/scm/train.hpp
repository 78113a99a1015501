#pragma once

#include "scm/data.hpp"
#include "scm/kernels.hpp"
#include "scm/model.hpp"

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

namespace scm {

struct TrainConfig {
  double lambda_d = 0.1;
  double lambda_w = 0.1;
  double alpha_d = 0.9;
  double alpha_w = 0.9;
  double gamma = 75.0;
  int cadres = 2;
  int batch_size = 256;
  int max_steps = 10000;
  double learning_rate = 1e-2;
  std::uint64_t seed = 0;
  double tol = 1e-6;
  // Adam moment decay rates and denominator offset.
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  /// Throws std::invalid_argument naming the first out-of-range field.
  void check() const;
};

struct TrainResult {
  ScmParams params;
  double final_objective = 0.0;
  std::vector<std::pair<int, double>> objective_trace;
  bool converged = false;
  int steps = 0;
};

class TrainingDiverged : public std::runtime_error {
public:
  TrainingDiverged(const std::string& what, std::vector<std::pair<int, double>> trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const std::vector<std::pair<int, double>>& trace() const { return trace_; }

private:
  std::vector<std::pair<int, double>> trace_;
};

/// Elastic-net penalty (lambda/2)(alpha ||v||_1 + (1-alpha) ||v||_2^2) on d
/// and on all expert weights; centers and intercepts are unpenalized.
double penalty_d(const ScmParams& params, const TrainConfig& cfg);
double penalty_w(const ScmParams& params, const TrainConfig& cfg);

/// Survey-weighted hinge log posterior for the hypertension response.
double objective_hyp(const ScmParams& params, const SurveyDataset& data, const VariableRoles& roles,
                     const TrainConfig& cfg);

/// Survey-weighted Gaussian log posterior for the two-dimensional blood
/// pressure response. Penalties are divided by |Sigma| and the objective
/// carries a -(1 + N) ln|Sigma| term.
double objective_cbp(const ScmParams& params, const SurveyDataset& data, const VariableRoles& roles,
                     const TrainConfig& cfg);

double objective(const ScmParams& params, const SurveyDataset& data, const VariableRoles& roles,
                 const TrainConfig& cfg);

/// Unpenalized data log likelihood: the hinge term for hyp, and for cbp the
/// Mahalanobis term plus -(1 + N) ln|Sigma|.
double data_log_likelihood(const ScmParams& params, const SurveyDataset& data, const VariableRoles& roles);

/// Gradient of `objective` in ScmParams layout (sigma2 through its log).
/// Subgradient 0 is used at the hinge kink and at d_p = 0 / W entries = 0.
ScmGradient objective_gradient(const ScmParams& params, const SurveyDataset& data, const VariableRoles& roles,
                               const TrainConfig& cfg);

/// Flat parameter vector: centers (row-major), d, each W_m (row-major), W0
/// (row-major), ln sigma2.
VectorXd pack(const ScmParams& params);
VectorXd pack(const ScmGradient& grad);
ScmParams unpack(const VectorXd& flat, const ScmParams& shape);

/// Random starting point: k-means++ seeded centers over the control columns,
/// d = 1, expert weights ~ N(0, 0.1^2), sigma2 = 1.
ScmParams initial_params(const Design& design, const TrainConfig& cfg, std::uint64_t seed);

/// Maximizes the objective with minibatch Adam. Deterministic for a given
/// seed. Throws TrainingDiverged when the objective becomes non-finite.
TrainResult fit_scm(const SurveyDataset& data, const VariableRoles& roles, const TrainConfig& cfg,
                    std::uint64_t init_seed);

}  // namespace scm
