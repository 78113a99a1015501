#include "scm/glm.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace scm {

std::string to_string(GlmFamily family) { return family == GlmFamily::linear ? "linear" : "logistic"; }

Index GlmFit::index_of(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw std::invalid_argument("GlmFit has no coefficient '" + name + "'");
  return static_cast<Index>(it - names.begin());
}

namespace {

constexpr int kMaxIrls = 100;
constexpr double kIrlsTol = 1e-8;

struct GlmDesign {
  MatrixXd x;  // with intercept column
  VectorXd y;
  VectorXd s;
  std::vector<int> strata;
  std::vector<int> varunits;
  std::vector<std::string> names;
};

GlmDesign build_design(const SurveyDataset& data, const GlmSpec& spec) {
  auto rit = std::find(data.response_names.begin(), data.response_names.end(), spec.response_col);
  if (rit == data.response_names.end()) throw std::invalid_argument("unknown response '" + spec.response_col + "'");
  const Index rcol = static_cast<Index>(rit - data.response_names.begin());
  std::vector<Index> cols;
  for (const auto& c : spec.covariate_cols) cols.push_back(data.column_index(c));
  if (spec.cadre && static_cast<Index>(spec.cadre_labels.size()) != data.rows())
    throw std::invalid_argument("cadre filter needs one label per subject");

  std::vector<Index> rows;
  for (Index i = 0; i < data.rows(); ++i) {
    if (!spec.cadre || spec.cadre_labels[static_cast<std::size_t>(i)] == *spec.cadre) rows.push_back(i);
  }
  if (rows.empty()) throw std::invalid_argument("GLM subset is empty");

  GlmDesign g;
  const auto n = static_cast<Index>(rows.size());
  const auto p = static_cast<Index>(cols.size()) + 1;
  g.x.resize(n, p);
  g.y.resize(n);
  g.s.resize(n);
  g.names.push_back("(intercept)");
  g.names.insert(g.names.end(), spec.covariate_cols.begin(), spec.covariate_cols.end());
  for (Index k = 0; k < n; ++k) {
    const Index i = rows[static_cast<std::size_t>(k)];
    g.x(k, 0) = 1.0;
    for (std::size_t j = 0; j < cols.size(); ++j) g.x(k, static_cast<Index>(j) + 1) = data.features(i, cols[j]);
    double y = data.responses(i, rcol);
    if (spec.family == GlmFamily::logistic) {
      if (y != 1.0 && y != -1.0 && y != 0.0) throw std::invalid_argument("logistic response must be a class label");
      y = y > 0.0 ? 1.0 : 0.0;
    }
    g.y[k] = y;
    g.s[k] = data.weights[i];
    g.strata.push_back(data.strata[static_cast<std::size_t>(i)]);
    g.varunits.push_back(data.varunits[static_cast<std::size_t>(i)]);
  }
  if (!g.x.allFinite() || !g.y.allFinite() || !g.s.allFinite())
    throw std::invalid_argument("GLM subset contains non-finite values");
  return g;
}

void check_rank(const GlmDesign& g) {
  const MatrixXd xs = g.s.cwiseSqrt().asDiagonal() * g.x;
  Eigen::ColPivHouseholderQR<MatrixXd> qr(xs);
  if (qr.rank() == xs.cols()) return;
  std::vector<std::string> bad;
  const auto perm = qr.colsPermutation().indices();
  for (Index k = qr.rank(); k < xs.cols(); ++k) bad.push_back(g.names[static_cast<std::size_t>(perm[k])]);
  std::string msg = "design matrix is rank deficient; collinear columns:";
  for (const auto& b : bad) msg += " " + b;
  throw RankDeficient(msg, bad);
}

double logistic(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

// Working weights of the information matrix and score multipliers at beta.
void working_terms(const GlmDesign& g, GlmFamily family, const VectorXd& beta, VectorXd& info_w, VectorXd& resid) {
  const VectorXd eta = g.x * beta;
  if (family == GlmFamily::linear) {
    info_w = g.s;
    resid = g.y - eta;
  } else {
    const VectorXd p = eta.unaryExpr(&logistic);
    info_w = g.s.cwiseProduct(p.cwiseProduct((1.0 - p.array()).matrix()));
    resid = g.y - p;
  }
}

MatrixXd covariance_from(const GlmDesign& g, GlmFamily family, const VectorXd& beta) {
  VectorXd info_w, resid;
  working_terms(g, family, beta, info_w, resid);
  const Index p = g.x.cols();
  const MatrixXd a = g.x.transpose() * info_w.asDiagonal() * g.x;

  // Score totals per varunit, grouped by stratum (ordered for determinism).
  std::map<int, std::map<int, VectorXd>> totals;
  for (Index k = 0; k < g.x.rows(); ++k) {
    const VectorXd u = g.s[k] * resid[k] * g.x.row(k).transpose();
    auto& slot = totals[g.strata[static_cast<std::size_t>(k)]][g.varunits[static_cast<std::size_t>(k)]];
    if (slot.size() == 0) slot = VectorXd::Zero(p);
    slot += u;
  }
  VectorXd grand = VectorXd::Zero(p);
  int units = 0;
  for (const auto& [h, by_unit] : totals)
    for (const auto& [u, z] : by_unit) {
      grand += z;
      ++units;
    }
  grand /= static_cast<double>(units);

  MatrixXd meat = MatrixXd::Zero(p, p);
  for (const auto& [h, by_unit] : totals) {
    const auto nh = static_cast<double>(by_unit.size());
    if (by_unit.size() == 1) {
      const VectorXd dev = by_unit.begin()->second - grand;
      meat += dev * dev.transpose();
      continue;
    }
    VectorXd mean = VectorXd::Zero(p);
    for (const auto& [u, z] : by_unit) mean += z;
    mean /= nh;
    MatrixXd scatter = MatrixXd::Zero(p, p);
    for (const auto& [u, z] : by_unit) {
      const VectorXd dev = z - mean;
      scatter += dev * dev.transpose();
    }
    meat += nh / (nh - 1.0) * scatter;
  }
  const MatrixXd a_inv = a.ldlt().solve(MatrixXd::Identity(p, p));
  MatrixXd cov = a_inv * meat * a_inv;
  return 0.5 * (cov + cov.transpose());
}

}  // namespace

double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

VectorXd wald_pvalues(GlmFit& fit, std::optional<int> df) {
  const Index p = fit.coefficients.size();
  fit.wald_z.resize(p);
  fit.p_values.resize(p);
  for (Index j = 0; j < p; ++j) {
    const double se = fit.std_errors[j];
    if (!(se > 0.0)) {
      fit.wald_z[j] = fit.coefficients[j] == 0.0 ? 0.0 : std::copysign(INFINITY, fit.coefficients[j]);
      fit.p_values[j] = 0.0;
      fit.warnings.push_back("degenerate variance for '" + fit.names[static_cast<std::size_t>(j)] + "'");
      continue;
    }
    const double z = fit.coefficients[j] / se;
    fit.wald_z[j] = z;
    if (df && *df > 0) {
      boost::math::students_t dist(static_cast<double>(*df));
      fit.p_values[j] = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(z)));
    } else {
      fit.p_values[j] = normal_two_sided_p(z);
    }
    fit.p_values[j] = std::clamp(fit.p_values[j], 0.0, 1.0);
  }
  return fit.p_values;
}

MatrixXd linearized_covariance(const SurveyDataset& data, const GlmSpec& spec, const GlmFit& fit) {
  const GlmDesign g = build_design(data, spec);
  return covariance_from(g, spec.family, fit.coefficients);
}

GlmFit fit_weighted_glm(const SurveyDataset& data, const GlmSpec& spec) {
  const GlmDesign g = build_design(data, spec);
  check_rank(g);

  GlmFit fit;
  fit.family = spec.family;
  fit.names = g.names;
  fit.n_obs = static_cast<int>(g.x.rows());
  fit.n_strata = static_cast<int>(std::set<int>(g.strata.begin(), g.strata.end()).size());
  {
    std::set<std::pair<int, int>> units;
    for (std::size_t k = 0; k < g.strata.size(); ++k) units.emplace(g.strata[k], g.varunits[k]);
    fit.n_varunits = static_cast<int>(units.size());
  }

  const Index p = g.x.cols();
  if (spec.family == GlmFamily::linear) {
    const MatrixXd xs = g.s.cwiseSqrt().asDiagonal() * g.x;
    const VectorXd ys = g.s.cwiseSqrt().cwiseProduct(g.y);
    fit.coefficients = xs.colPivHouseholderQr().solve(ys);
    fit.iterations = 1;
  } else {
    VectorXd beta = VectorXd::Zero(p);
    fit.converged = false;
    for (int it = 1; it <= kMaxIrls; ++it) {
      VectorXd info_w, resid;
      working_terms(g, GlmFamily::logistic, beta, info_w, resid);
      const MatrixXd a = g.x.transpose() * info_w.asDiagonal() * g.x;
      const VectorXd score = g.x.transpose() * g.s.cwiseProduct(resid);
      const VectorXd step = a.ldlt().solve(score);
      fit.iterations = it;
      if (!step.allFinite()) break;
      beta += step;
      if (step.cwiseAbs().maxCoeff() < kIrlsTol) {
        fit.converged = true;
        break;
      }
    }
    if (!fit.converged || beta.cwiseAbs().maxCoeff() > 30.0) {
      fit.converged = false;
      fit.warnings.push_back("logistic fit did not converge (possible separation)");
    }
    fit.coefficients = beta;
  }

  fit.covariance = covariance_from(g, spec.family, fit.coefficients);
  fit.std_errors = fit.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  std::optional<int> df;
  if (spec.design_df) {
    df = fit.n_varunits - fit.n_strata;
    if (*df < 1)
      throw std::runtime_error("no design degrees of freedom (" + std::to_string(fit.n_varunits) + " varunits in " +
                               std::to_string(fit.n_strata) + " strata)");
  }
  wald_pvalues(fit, df);
  return fit;
}

}  // namespace scm
