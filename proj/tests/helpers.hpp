#pragma once

#include "scm/data.hpp"
#include "scm/model.hpp"

#include <random>
#include <string>
#include <vector>

namespace testing_support {

/// Dataset with named feature columns, one stratum and one varunit per row.
inline scm::SurveyDataset make_dataset(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const Eigen::VectorXd& s,
                                       std::vector<std::string> names, scm::Task task) {
  scm::SurveyDataset d;
  d.features = x;
  d.responses = y;
  d.weights = s;
  d.column_names = std::move(names);
  d.task = task;
  d.response_names = task == scm::Task::cbp ? std::vector<std::string>{"sbp", "dbp"} : std::vector<std::string>{"hyp"};
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    d.strata.push_back(0);
    d.varunits.push_back(static_cast<int>(i));
  }
  return d;
}

/// Random smooth problem: P_C controls, one risk factor, responses for `task`.
inline scm::SurveyDataset random_dataset(int n, int pc, scm::Task task, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  Eigen::MatrixXd x(n, pc + 1);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= pc; ++j) x(i, j) = z(rng);
  Eigen::MatrixXd y(n, task == scm::Task::cbp ? 2 : 1);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < y.cols(); ++k) y(i, k) = task == scm::Task::cbp ? z(rng) : (z(rng) > 0 ? 1.0 : -1.0);
  Eigen::VectorXd s(n);
  for (int i = 0; i < n; ++i) s[i] = u(rng);
  std::vector<std::string> names;
  for (int j = 0; j < pc; ++j) names.push_back("c" + std::to_string(j + 1));
  names.push_back("rf");
  return make_dataset(x, y, s, names, task);
}

inline scm::VariableRoles roles_for(const scm::SurveyDataset& d) {
  std::vector<std::string> controls(d.column_names.begin(), d.column_names.end() - 1);
  return scm::VariableRoles::make(d, controls, d.column_names.back());
}

/// Random parameters; d entries are kept away from zero so |d| is smooth.
inline scm::ScmParams random_params(int m, int pc, int pt, int py, bool sigma, double gamma, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> mag(0.3, 1.5);
  auto p = scm::ScmParams::zeros(m, pc, pt, py, gamma, sigma);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < pc; ++j) p.centers(i, j) = z(rng);
  for (int j = 0; j < pc; ++j) p.d[j] = (z(rng) > 0 ? 1.0 : -1.0) * mag(rng);
  for (auto& w : p.W)
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = (z(rng) > 0 ? 1.0 : -1.0) * mag(rng);
  for (Eigen::Index i = 0; i < p.W0.size(); ++i) p.W0.data()[i] = z(rng);
  if (sigma)
    for (Eigen::Index k = 0; k < py; ++k) (*p.sigma2)[k] = mag(rng);
  return p;
}

}  // namespace testing_support
