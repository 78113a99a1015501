#include "gradcheck.hpp"
#include "helpers.hpp"
#include "scm/train.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace scm;
using testing_support::make_dataset;

namespace {

TrainConfig no_penalty() {
  TrainConfig cfg;
  cfg.lambda_d = 0.0;
  cfg.lambda_w = 0.0;
  return cfg;
}

// One subject with controls (c1, c2) and risk factor rf, all zero.
SurveyDataset single_subject(Task task, const Eigen::RowVectorXd& y) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(1, 3);
  Eigen::MatrixXd yy = y;
  return make_dataset(x, yy, Eigen::VectorXd::Ones(1), {"c1", "c2", "rf"}, task);
}

}  // namespace

TEST_CASE("hinge objective examples") {
  Eigen::RowVectorXd y(1);
  y << 1.0;
  const auto d = single_subject(Task::hyp, y);
  const auto roles = testing_support::roles_for(d);
  auto p = ScmParams::zeros(1, 2, 3, 1, 75.0, false);
  p.d << 1.0, -1.0;
  p.W0 << 2.0;
  CHECK(objective_hyp(p, d, roles, no_penalty()) == 0.0);
  p.W0 << 0.0;
  CHECK(objective_hyp(p, d, roles, no_penalty()) == -1.0);
  auto cfg = no_penalty();
  cfg.lambda_d = 2.0;
  cfg.alpha_d = 0.9;
  CHECK(objective_hyp(p, d, roles, cfg) == doctest::Approx(-3.0).epsilon(1e-15));
}

TEST_CASE("Gaussian objective examples") {
  Eigen::RowVectorXd y(2);
  y << 1.0, 0.0;
  auto d = single_subject(Task::cbp, y);
  const auto roles = testing_support::roles_for(d);
  auto p = ScmParams::zeros(1, 2, 3, 2, 75.0, true);
  p.d.setOnes();
  p.sigma2->setOnes();
  CHECK(objective_cbp(p, d, roles, no_penalty()) == doctest::Approx(-0.5).epsilon(1e-15));

  p.W0 << 1.0, 0.0;
  CHECK(objective_cbp(p, d, roles, no_penalty()) == 0.0);

  d.responses << 1.0, 1.0;
  p.W0.setZero();
  p.sigma2->setConstant(2.0);
  CHECK(objective_cbp(p, d, roles, no_penalty()) == doctest::Approx(-3.272588722239781).epsilon(1e-14));
}

TEST_CASE("penalties are divided by the variance determinant for the Gaussian task") {
  Eigen::RowVectorXd y(2);
  y << 0.0, 0.0;
  const auto d = single_subject(Task::cbp, y);
  const auto roles = testing_support::roles_for(d);
  auto p = ScmParams::zeros(1, 2, 3, 2, 75.0, true);
  p.d << 1.0, -1.0;
  p.sigma2->setConstant(2.0);
  auto cfg = no_penalty();
  cfg.lambda_d = 2.0;
  cfg.alpha_d = 0.9;
  CHECK(objective_cbp(p, d, roles, cfg) == doctest::Approx(-2.0 / 4.0 - 2.0 * std::log(4.0)).epsilon(1e-14));
}

TEST_CASE("zero gradient for an inactive intercept-only classifier") {
  auto d = testing_support::random_dataset(30, 2, Task::hyp, 2);
  d.responses.setOnes();
  const auto roles = testing_support::roles_for(d);
  auto p = ScmParams::zeros(1, 2, 3, 1, 75.0, false);
  p.d.setOnes();
  p.W0 << 5.0;
  CHECK(pack(objective_gradient(p, d, roles, no_penalty())).isZero());
}

TEST_CASE("hinge at margin exactly one uses subgradient zero") {
  Eigen::RowVectorXd y(1);
  y << 1.0;
  const auto d = single_subject(Task::hyp, y);
  const auto roles = testing_support::roles_for(d);
  auto p = ScmParams::zeros(1, 2, 3, 1, 75.0, false);
  p.d.setOnes();
  p.W0 << 1.0;
  CHECK(objective_gradient(p, d, roles, no_penalty()).W0(0, 0) == 0.0);
}

TEST_CASE("L2-only penalty gradient on d is -lambda d") {
  const auto d = testing_support::random_dataset(20, 3, Task::cbp, 4);
  const auto roles = testing_support::roles_for(d);
  auto p = testing_support::random_params(1, 3, 4, 2, true, 75.0, 5);
  p.sigma2->setOnes();  // |Sigma| = 1 so the penalty is unscaled
  auto cfg = no_penalty();
  cfg.lambda_d = 0.7;
  cfg.alpha_d = 0.0;
  const auto g = objective_gradient(p, d, roles, cfg);
  CHECK((g.d + cfg.lambda_d * p.d).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("analytic gradients match central differences") {
  for (Task task : {Task::cbp, Task::hyp}) {
    CAPTURE(to_string(task));
    const auto d = testing_support::random_dataset(60, 2, task, 31);
    const auto roles = testing_support::roles_for(d);
    TrainConfig cfg;
    cfg.lambda_d = 0.3;
    cfg.lambda_w = 0.2;
    for (unsigned seed = 0; seed < 4; ++seed) {
      const auto p = testing_support::random_params(2, 2, 3, task == Task::cbp ? 2 : 1, task == Task::cbp, 3.0, seed);
      if (!testing_support::hinge_smooth(p, d, roles, 1e-3)) continue;
      CHECK(testing_support::finite_difference_check(p, d, roles, cfg).worst_relative < 1e-4);
    }
  }
}

TEST_CASE("scaling survey weights scales the data term") {
  for (Task task : {Task::cbp, Task::hyp}) {
    auto d = testing_support::random_dataset(80, 2, task, 12);
    const auto roles = testing_support::roles_for(d);
    const auto p = testing_support::random_params(2, 2, 3, task == Task::cbp ? 2 : 1, task == Task::cbp, 3.0, 1);
    const double base = kernels::data_term(Design::from(d, roles), p, {}, false).value;
    d.weights *= 2.0;
    CHECK(kernels::data_term(Design::from(d, roles), p, {}, false).value == 2.0 * base);
    d.weights *= 1.7;
    CHECK(kernels::data_term(Design::from(d, roles), p, {}, false).value ==
          doctest::Approx(3.4 * base).epsilon(1e-13));
  }
}

TEST_CASE("single-cadre Gaussian objective equals a standalone weighted likelihood") {
  const auto d = testing_support::random_dataset(40, 2, Task::cbp, 13);
  const auto roles = testing_support::roles_for(d);
  const auto p = testing_support::random_params(1, 2, 3, 2, true, 75.0, 3);
  double expected = 0.0;
  for (Index i = 0; i < d.rows(); ++i) {
    const double x[] = {d.features(i, 2), d.features(i, 0), d.features(i, 1)};  // rf, c1, c2
    for (Index k = 0; k < 2; ++k) {
      double f = p.W0(0, k);
      for (int j = 0; j < 3; ++j) f += p.W[0](j, k) * x[j];
      const double r = d.responses(i, k) - f;
      expected -= 0.5 * d.weights[i] * r * r / (*p.sigma2)[k];
    }
  }
  expected -= (1.0 + 40.0) * std::log((*p.sigma2)[0] * (*p.sigma2)[1]);
  CHECK(objective_cbp(p, d, roles, no_penalty()) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(data_log_likelihood(p, d, roles) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("growing an expert weight at perfect fit never raises the objective") {
  auto d = testing_support::random_dataset(25, 2, Task::cbp, 14);
  const auto roles = testing_support::roles_for(d);
  auto p = testing_support::random_params(2, 2, 3, 2, true, 3.0, 8);
  TrainConfig cfg = no_penalty();
  cfg.lambda_w = 0.5;
  double previous = INFINITY;
  for (double w = 0.0; w <= 3.0; w += 0.25) {
    p.W[1](0, 1) = w;
    for (Index i = 0; i < d.rows(); ++i) {
      const VectorXd row = d.features.row(i).transpose();
      d.responses.row(i) = predict(std::span<const double>(row.data(), 3), roles, p).transpose();
    }
    const double obj = objective_cbp(p, d, roles, cfg);
    CHECK(obj <= previous);
    previous = obj;
  }
}

TEST_CASE("pack and unpack are inverse") {
  const auto p = testing_support::random_params(3, 2, 3, 2, true, 75.0, 10);
  const auto q = unpack(pack(p), p);
  CHECK(pack(q) == pack(p));
  CHECK((*q.sigma2 - *p.sigma2).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("training config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.check());
  cfg.alpha_d = 1.5;
  CHECK_THROWS_AS(cfg.check(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.check(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.lambda_w = -1.0;
  CHECK_THROWS_AS(cfg.check(), std::invalid_argument);
}

TEST_CASE("noiseless linear data is recovered by a single cadre") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  const int n = 400;
  Eigen::MatrixXd x(n, 3), y(n, 2);
  Eigen::VectorXd s(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = z(rng);
    y(i, 0) = 0.2 + 1.5 * x(i, 2) + 0.5 * x(i, 0) - 0.3 * x(i, 1);
    y(i, 1) = -x(i, 2) + 0.7 * x(i, 1);
    s[i] = u(rng);
  }
  const auto d = make_dataset(x, y, s, {"c1", "c2", "rf"}, Task::cbp);
  const auto roles = testing_support::roles_for(d);
  TrainConfig cfg = no_penalty();
  cfg.cadres = 1;
  cfg.max_steps = 3000;
  const auto fit = fit_scm(d, roles, cfg, 1);
  Eigen::MatrixXd expected(3, 2);  // rows: rf, c1, c2
  expected << 1.5, -1.0, 0.5, 0.0, -0.3, 0.7;
  CHECK((fit.params.W[0] - expected).cwiseAbs().maxCoeff() < 1e-2);
  CHECK(std::abs(fit.params.W0(0, 0) - 0.2) < 1e-2);
}

TEST_CASE("separable classification reaches zero hinge loss") {
  std::mt19937_64 rng(19);
  std::normal_distribution<double> z(0.0, 1.0);
  const int n = 300;
  Eigen::MatrixXd x(n, 3), y(n, 1);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < 3; ++j) x(i, j) = z(rng);
    x(i, 2) += x(i, 2) > 0 ? 0.5 : -0.5;
    y(i, 0) = x(i, 2) > 0 ? 1.0 : -1.0;
  }
  const auto d = make_dataset(x, y, Eigen::VectorXd::Ones(n), {"c1", "c2", "rf"}, Task::hyp);
  const auto roles = testing_support::roles_for(d);
  TrainConfig cfg = no_penalty();
  cfg.cadres = 1;
  cfg.max_steps = 2000;
  const auto fit = fit_scm(d, roles, cfg, 3);
  CHECK(fit.final_objective >= -1e-3);
}

TEST_CASE("training is deterministic for a seed") {
  const auto d = testing_support::random_dataset(300, 2, Task::cbp, 23);
  const auto roles = testing_support::roles_for(d);
  TrainConfig cfg;
  cfg.max_steps = 300;
  const auto a = fit_scm(d, roles, cfg, 5);
  const auto b = fit_scm(d, roles, cfg, 5);
  REQUIRE_FALSE(a.objective_trace.empty());
  CHECK(a.objective_trace == b.objective_trace);
  CHECK(pack(a.params) == pack(b.params));
  CHECK(std::isfinite(a.final_objective));
  const auto c = fit_scm(d, roles, cfg, 6);
  CHECK(pack(c.params) != pack(a.params));
}

TEST_CASE("initial parameters follow the documented starting point") {
  const auto d = testing_support::random_dataset(100, 3, Task::cbp, 29);
  const auto roles = testing_support::roles_for(d);
  const auto design = Design::from(d, roles);
  TrainConfig cfg;
  cfg.cadres = 3;
  const auto p = initial_params(design, cfg, 2);
  CHECK(p.d == VectorXd::Ones(3));
  CHECK(*p.sigma2 == VectorXd::Ones(2));
  // Centers are distinct subjects.
  for (Index m = 0; m < 3; ++m) {
    bool found = false;
    for (Index i = 0; i < design.rows(); ++i) found = found || design.xc.row(i) == p.centers.row(m);
    CHECK(found);
  }
  CHECK(p.centers.row(0) != p.centers.row(1));
  CHECK(p.centers.row(1) != p.centers.row(2));
}
