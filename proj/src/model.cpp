#include "scm/model.hpp"

#include "scm/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace scm {

ScmParams ScmParams::zeros(Index m, Index pc, Index pt, Index py, double gamma, bool with_sigma) {
  ScmParams p;
  p.centers = MatrixXd::Zero(m, pc);
  p.d = VectorXd::Zero(pc);
  p.W.assign(static_cast<std::size_t>(m), MatrixXd::Zero(pt, py));
  p.W0 = MatrixXd::Zero(m, py);
  if (with_sigma) p.sigma2 = VectorXd::Ones(py);
  p.gamma = gamma;
  return p;
}

void ScmParams::check() const {
  const Index m = cadres();
  if (m < 1) throw std::invalid_argument("ScmParams: need at least one cadre");
  if (d.size() != cadre_dim()) throw std::invalid_argument("ScmParams: d length does not match centers");
  if (static_cast<Index>(W.size()) != m || W0.rows() != m)
    throw std::invalid_argument("ScmParams: expert count does not match cadre count");
  for (const auto& w : W) {
    if (w.rows() != target_dim() || w.cols() != response_dim())
      throw std::invalid_argument("ScmParams: expert weight shapes differ");
  }
  if (!(gamma > 0.0)) throw std::invalid_argument("ScmParams: gamma must be positive");
  if (sigma2) {
    if (sigma2->size() != response_dim()) throw std::invalid_argument("ScmParams: sigma2 length mismatch");
    if (!((sigma2->array() > 0.0).all() && sigma2->allFinite()))
      throw std::invalid_argument("ScmParams: sigma2 entries must be positive");
  }
}

namespace {

void require_finite(std::span<const double> x) {
  for (std::size_t p = 0; p < x.size(); ++p) {
    if (!std::isfinite(x[p])) throw std::invalid_argument("non-finite input at coordinate " + std::to_string(p));
  }
}

}  // namespace

VectorXd membership(std::span<const double> x_cadre, const ScmParams& params) {
  if (static_cast<Index>(x_cadre.size()) != params.cadre_dim())
    throw std::invalid_argument("membership: expected " + std::to_string(params.cadre_dim()) + " coordinates");
  require_finite(x_cadre);
  VectorXd g(params.cadres());
  kernels::membership_row(x_cadre.data(), params, g.data());
  return g;
}

VectorXd predict(std::span<const double> x, const VariableRoles& roles, const ScmParams& params) {
  std::vector<double> xc, xt;
  for (Index c : roles.cadre_idx()) xc.push_back(x[static_cast<std::size_t>(c)]);
  for (Index c : roles.target_idx()) xt.push_back(x[static_cast<std::size_t>(c)]);
  if (static_cast<Index>(xt.size()) != params.target_dim())
    throw std::invalid_argument("predict: target dimension mismatch");
  require_finite(xt);
  const VectorXd g = membership(xc, params);
  const Eigen::Map<const VectorXd> xtv(xt.data(), static_cast<Index>(xt.size()));
  VectorXd f = VectorXd::Zero(params.response_dim());
  for (Index m = 0; m < params.cadres(); ++m) {
    const auto mm = static_cast<std::size_t>(m);
    f += g[m] * (params.W[mm].transpose() * xtv + params.W0.row(m).transpose());
  }
  return f;
}

std::vector<int> harden(const MatrixXd& probabilities) {
  std::vector<int> labels(static_cast<std::size_t>(probabilities.rows()));
  for (Index i = 0; i < probabilities.rows(); ++i) {
    Index best = 0;
    for (Index m = 1; m < probabilities.cols(); ++m) {
      if (probabilities(i, m) > probabilities(i, best)) best = m;
    }
    labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return labels;
}

double cadre_conditional_entropy(const MatrixXd& probabilities, const std::vector<int>& hard_labels,
                                 const VectorXd& weights, int m) {
  VectorXd mean = VectorXd::Zero(probabilities.cols());
  double total = 0.0;
  for (Index i = 0; i < probabilities.rows(); ++i) {
    if (hard_labels[static_cast<std::size_t>(i)] != m) continue;
    mean += weights[i] * probabilities.row(i).transpose();
    total += weights[i];
  }
  if (total <= 0.0) throw std::invalid_argument("empty cadre " + std::to_string(m));
  const double mass = mean.sum();
  double h = 0.0;
  for (Index k = 0; k < mean.size(); ++k) {
    const double p = mean[k] / mass;
    if (p > 0.0) h -= p * std::log2(p);
  }
  return std::clamp(h, 0.0, std::log2(static_cast<double>(probabilities.cols())));
}

bool CadreAssignment::has_empty_cadre() const {
  return std::any_of(cadre_sizes.begin(), cadre_sizes.end(), [](std::size_t s) { return s == 0; });
}

double CadreAssignment::max_entropy() const {
  double out = 0.0;
  for (double h : per_cadre_entropy) {
    if (std::isnan(h)) return std::numeric_limits<double>::infinity();
    out = std::max(out, h);
  }
  return out;
}

CadreAssignment assign_cadres(const SurveyDataset& data, const VariableRoles& roles, const ScmParams& params) {
  CadreAssignment out;
  const MatrixXd xc = kernels::gather_columns(data.features, roles.cadre_idx());
  out.probabilities = kernels::membership_batch(xc, params);
  out.hard_labels = harden(out.probabilities);
  const Index m = params.cadres();
  out.cadre_sizes.assign(static_cast<std::size_t>(m), 0);
  for (int l : out.hard_labels) ++out.cadre_sizes[static_cast<std::size_t>(l)];
  for (Index k = 0; k < m; ++k) {
    out.per_cadre_entropy.push_back(
        out.cadre_sizes[static_cast<std::size_t>(k)] == 0
            ? std::numeric_limits<double>::quiet_NaN()
            : cadre_conditional_entropy(out.probabilities, out.hard_labels, data.weights, static_cast<int>(k)));
  }
  return out;
}

}  // namespace scm
