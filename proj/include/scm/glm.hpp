#pragma once

#include "scm/data.hpp"

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace scm {

enum class GlmFamily { linear, logistic };

std::string to_string(GlmFamily family);

/// Survey-weighted GLM on one cadre (or on all subjects). The covariate list
/// should hold the risk factor followed by the controls; an intercept is
/// always prepended.
struct GlmSpec {
  GlmFamily family = GlmFamily::linear;
  std::string response_col;
  std::vector<std::string> covariate_cols;
  std::optional<int> cadre;        // zero-based; nullopt means all subjects
  std::vector<int> cadre_labels;   // hardened labels, required when cadre is set
  bool design_df = false;          // t reference with (varunits - strata) df; fitting throws when that is < 1
};

struct GlmFit {
  GlmFamily family = GlmFamily::linear;
  std::vector<std::string> names;  // "(intercept)" then covariates
  VectorXd coefficients;
  MatrixXd covariance;
  VectorXd std_errors;
  VectorXd wald_z;
  VectorXd p_values;
  int n_obs = 0;
  int n_strata = 0;
  int n_varunits = 0;
  int iterations = 0;
  bool converged = true;
  std::vector<std::string> warnings;

  Index index_of(const std::string& name) const;
};

class RankDeficient : public std::runtime_error {
public:
  RankDeficient(const std::string& what, std::vector<std::string> columns)
      : std::runtime_error(what), columns_(std::move(columns)) {}
  const std::vector<std::string>& columns() const { return columns_; }

private:
  std::vector<std::string> columns_;
};

/// Weighted least squares (linear) or IRLS on the weighted Bernoulli
/// likelihood (logistic, labels recoded from {-1,+1} to {0,1}), followed by
/// design-based covariance and Wald p-values.
GlmFit fit_weighted_glm(const SurveyDataset& data, const GlmSpec& spec);

/// Taylor-linearization sandwich A^-1 G A^-1. G sums, per stratum with n_h
/// varunits, n_h/(n_h-1) times the scatter of varunit score totals about the
/// stratum mean. A stratum with a single varunit contributes its deviation
/// from the mean of all varunit totals.
MatrixXd linearized_covariance(const SurveyDataset& data, const GlmSpec& spec, const GlmFit& fit);

/// Two-sided p-values for coefficient / std_error. With `df` set, the t
/// distribution with that many degrees of freedom is used instead of the
/// normal. A zero standard error yields p = 0 and a warning on the fit.
VectorXd wald_pvalues(GlmFit& fit, std::optional<int> df = std::nullopt);

/// Two-sided normal tail probability of |z|.
double normal_two_sided_p(double z);

}  // namespace scm
