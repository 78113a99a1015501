#pragma once

// Row-parallel kernels for membership and the data-fit part of the training
// objective. Each parallel kernel has a plain serial reference kept for
// testing and benchmarking. Parallel reductions sum fixed-size row blocks in
// block order, so results do not depend on the thread count.

#include "scm/data.hpp"
#include "scm/model.hpp"

#include <span>
#include <vector>

namespace scm {

/// Gradient with the same layout as ScmParams. `log_sigma2` is the gradient
/// with respect to ln(sigma2) and is empty for the classification task.
struct ScmGradient {
  MatrixXd centers;
  VectorXd d;
  std::vector<MatrixXd> W;
  MatrixXd W0;
  VectorXd log_sigma2;

  static ScmGradient zeros_like(const ScmParams& params);
  ScmGradient& operator+=(const ScmGradient& other);
  ScmGradient& operator*=(double k);
};

/// Training matrices extracted once per fit.
struct Design {
  MatrixXd xc;  // N x P_C, cadre-assignment columns
  MatrixXd xt;  // N x P_T, expert columns
  MatrixXd y;   // N x P_Y
  VectorXd s;   // survey weights
  Task task = Task::cbp;

  Index rows() const { return xc.rows(); }
  static Design from(const SurveyDataset& data, const VariableRoles& roles);
};

/// Data-fit term of the log posterior summed over the selected rows:
/// -sum s_n hinge_n (hyp) or -sum (s_n/2) r_n^T Sigma^{-1} r_n (cbp).
struct DataTerm {
  double value = 0.0;
  ScmGradient grad;  // filled only when requested
};

namespace kernels {

inline constexpr Index kBlockRows = 128;

MatrixXd gather_columns(const MatrixXd& x, const std::vector<Index>& cols);

/// Writes M membership probabilities for one cadre-space row.
void membership_row(const double* xc, const ScmParams& params, double* out);

MatrixXd membership_batch(const MatrixXd& xc, const ScmParams& params);
MatrixXd membership_batch_serial(const MatrixXd& xc, const ScmParams& params);

/// `rows` empty means all rows.
DataTerm data_term(const Design& design, const ScmParams& params, std::span<const Index> rows, bool want_grad);
DataTerm data_term_serial(const Design& design, const ScmParams& params, std::span<const Index> rows,
                          bool want_grad);

}  // namespace kernels
}  // namespace scm
