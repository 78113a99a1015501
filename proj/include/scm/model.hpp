#pragma once

#include "scm/data.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <vector>

namespace scm {

/// Parameters of a supervised cadre model.
///
/// Cadre m has center `centers.row(m)` in the cadre-assignment space (the
/// control columns) and a linear expert `W[m]^T x_T + W0.row(m)^T` over the
/// target columns. Membership is a softmax of -gamma * ||x_C - c^m||_d^2 where
/// ||z||_d^2 = sum_p |d_p| z_p^2. `sigma2` is the diagonal response variance,
/// present only for the continuous task.
struct ScmParams {
  MatrixXd centers;        // M x P_C
  VectorXd d;              // P_C
  std::vector<MatrixXd> W; // M entries, each P_T x P_Y
  MatrixXd W0;             // M x P_Y
  std::optional<VectorXd> sigma2;
  double gamma = 75.0;

  Index cadres() const { return centers.rows(); }
  Index cadre_dim() const { return centers.cols(); }
  Index target_dim() const { return W.empty() ? 0 : W.front().rows(); }
  Index response_dim() const { return W0.cols(); }

  /// All-zero parameters of the given shape.
  static ScmParams zeros(Index m, Index pc, Index pt, Index py, double gamma, bool with_sigma);

  /// Throws std::invalid_argument on inconsistent shapes or nonpositive sigma2.
  void check() const;
};

/// Cadre membership probabilities for one subject (length M).
VectorXd membership(std::span<const double> x_cadre, const ScmParams& params);

/// Score f(x) = sum_m g_m(x_C) (W_m^T x_T + w0_m) for a full feature row.
VectorXd predict(std::span<const double> x, const VariableRoles& roles, const ScmParams& params);

/// Index of the largest entry in each row; ties go to the lowest index.
/// Labels are zero-based.
std::vector<int> harden(const MatrixXd& probabilities);

/// Conditional entropy (bits) of cadre membership among subjects hardened
/// into cadre `m`. The conditional distribution is the weight-weighted mean
/// of membership rows over those subjects.
double cadre_conditional_entropy(const MatrixXd& probabilities, const std::vector<int>& hard_labels,
                                 const VectorXd& weights, int m);

struct CadreAssignment {
  MatrixXd probabilities;  // N x M
  std::vector<int> hard_labels;
  std::vector<double> per_cadre_entropy;  // NaN for cadres with no members
  std::vector<std::size_t> cadre_sizes;

  bool has_empty_cadre() const;
  double max_entropy() const;
};

CadreAssignment assign_cadres(const SurveyDataset& data, const VariableRoles& roles, const ScmParams& params);

}  // namespace scm
