#pragma once

#include "scm/data.hpp"
#include "scm/model.hpp"
#include "scm/train.hpp"

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace scm {

struct SelectionConfig {
  std::vector<int> m_values{1, 2, 3};
  std::vector<std::pair<double, double>> lambda_grid = default_lambda_grid();
  double entropy_cap = 0.2;
  double gamma = 75.0;
  double alpha = 0.9;
  int restarts = 1;

  /// Cartesian product of {1e-2, 10^-1.5, 1e-1, 10^-0.5, 1} with itself.
  static std::vector<std::pair<double, double>> default_lambda_grid();
  void check() const;
};

struct FittedScm {
  TrainResult train;
  CadreAssignment assignment;
  double bic = 0.0;
  int effective_params = 0;
};

/// One (M, lambda_d, lambda_W) grid point.
struct Candidate {
  int m = 0;
  double lambda_d = 0.0;
  double lambda_w = 0.0;
  std::optional<FittedScm> fit;  // empty when training failed
  bool admissible = false;
  std::string reason;            // why the candidate was rejected
};

struct SelectedModel {
  int m = 0;
  std::optional<FittedScm> fitted;  // set when admissible
  double bic = 0.0;
  double lambda_d = 0.0;
  double lambda_w = 0.0;
  bool admissible = false;
  std::optional<std::string> rejected_reason;
  std::vector<Candidate> candidates;  // in grid order
};

/// Parameters with magnitude above 1e-6 among centers, d, W, W0, plus one per
/// response variance for the continuous task.
int effective_parameter_count(const ScmParams& params);

/// k_eff ln N - 2 L, N the unweighted sample size and L the unpenalized
/// survey-weighted data log likelihood.
double bic(const TrainResult& fit, const SurveyDataset& data, const VariableRoles& roles);

/// Grid search per cadre count. Each candidate is trained `restarts` times
/// (best objective kept); candidates with an empty cadre or an entropy above
/// the cap are rejected, and the admissible candidate with the lowest BIC is
/// returned per M. Training failures are recorded on the candidate.
std::map<int, SelectedModel> select_model(const SurveyDataset& data, const VariableRoles& roles,
                                          const SelectionConfig& cfg, const TrainConfig& train_base,
                                          int workers = 1);

/// Trains and scores one grid point.
Candidate evaluate_candidate(const SurveyDataset& data, const VariableRoles& roles, const SelectionConfig& cfg,
                             const TrainConfig& train_base, int m, double lambda_d, double lambda_w);

/// Picks the best admissible candidate per M. `candidates` holds, for each
/// entry of cfg.m_values in order, one candidate per grid point in grid order.
std::map<int, SelectedModel> aggregate_candidates(const SelectionConfig& cfg, std::vector<Candidate> candidates);

/// Cadre count with the lowest BIC among admissible entries (ties go to the
/// smaller M); nullopt when nothing is admissible.
std::optional<int> best_order(const std::map<int, SelectedModel>& selection);

/// Seed for a grid point, keyed by values so grid order does not matter.
std::uint64_t grid_seed(std::uint64_t base, int m, double lambda_d, double lambda_w, int restart);

}  // namespace scm
