#include "helpers.hpp"
#include "scm/select.hpp"
#include "scm/synthetic.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace scm;
using testing_support::make_dataset;

namespace {

SelectionConfig small_grid() {
  SelectionConfig cfg;
  cfg.lambda_grid = {{0.01, 0.01}, {0.1, 0.1}, {1.0, 0.1}};
  return cfg;
}

TrainConfig quick_train() {
  TrainConfig t;
  t.max_steps = 400;
  return t;
}

}  // namespace

TEST_CASE("BIC of an intercept-only model matches the standalone formula") {
  Eigen::MatrixXd x(4, 2);
  x << 0.1, 1.0, -0.4, 2.0, 0.8, 0.5, 0.2, -1.0;
  Eigen::MatrixXd y(4, 2);
  y << 1.2, 2.5, 0.4, 1.0, 1.9, 2.2, 0.7, 1.6;
  Eigen::VectorXd s(4);
  s << 1.0, 2.0, 0.5, 1.5;
  const auto d = make_dataset(x, y, s, {"c1", "rf"}, Task::cbp);
  const auto roles = testing_support::roles_for(d);
  TrainResult fit;
  fit.params = ScmParams::zeros(1, 1, 2, 2, 75.0, true);
  fit.params.centers << 0.3;
  fit.params.d << 1.0;
  fit.params.W0 << 1.0, 2.0;
  *fit.params.sigma2 << 2.0, 0.5;
  CHECK(effective_parameter_count(fit.params) == 6);
  CHECK(data_log_likelihood(fit.params, d, roles) == doctest::Approx(-2.835).epsilon(1e-14));
  CHECK(bic(fit, d, roles) == doctest::Approx(13.987766166719343).epsilon(1e-14));

  SUBCASE("a weight below the threshold is not counted") {
    fit.params.W[0](0, 0) = 5e-7;
    CHECK(effective_parameter_count(fit.params) == 6);
    fit.params.W[0](0, 0) = 2e-6;
    CHECK(effective_parameter_count(fit.params) == 7);
    const double dense = bic(fit, d, roles);
    fit.params.W[0](0, 0) = 5e-7;
    // Same likelihood up to a negligible change, one fewer parameter.
    CHECK(bic(fit, d, roles) < dense);
  }
}

TEST_CASE("grid seeds depend on values, not positions") {
  CHECK(grid_seed(1, 2, 0.1, 0.01, 0) == grid_seed(1, 2, 0.1, 0.01, 0));
  CHECK(grid_seed(1, 2, 0.1, 0.01, 0) != grid_seed(1, 2, 0.01, 0.1, 0));
  CHECK(grid_seed(1, 2, 0.1, 0.01, 0) != grid_seed(1, 3, 0.1, 0.01, 0));
  CHECK(grid_seed(1, 2, 0.1, 0.01, 0) != grid_seed(1, 2, 0.1, 0.01, 1));
  CHECK(grid_seed(1, 2, 0.1, 0.01, 0) != grid_seed(2, 2, 0.1, 0.01, 0));
}

TEST_CASE("selection invariants on a two-cadre study") {
  SyntheticSpec spec;
  spec.n = 600;
  spec.seed = 4;
  const auto study = generate_synthetic(spec);
  auto data = study.data;
  const auto roles = VariableRoles::make(data, study.control_names, "e1");
  data = log_transform_exposures(data, {roles.risk_factor});
  const auto cfg = small_grid();
  const auto sel = select_model(data, roles, cfg, quick_train());

  REQUIRE(sel.size() == 3);
  CHECK(sel.at(1).admissible);
  for (const auto& [m, s] : sel) {
    CHECK(s.candidates.size() == cfg.lambda_grid.size());
    if (!s.admissible) {
      CHECK(s.rejected_reason.has_value());
      continue;
    }
    CHECK(s.fitted->assignment.max_entropy() <= cfg.entropy_cap + 1e-12);
    for (const auto& c : s.candidates)
      if (c.admissible) CHECK(s.bic <= c.fit->bic);
  }
  CHECK(sel.at(1).fitted->assignment.per_cadre_entropy[0] == 0.0);

  SUBCASE("permuting the grid selects the same model") {
    auto reversed = cfg;
    std::reverse(reversed.lambda_grid.begin(), reversed.lambda_grid.end());
    const auto again = select_model(data, roles, reversed, quick_train());
    for (const auto& [m, s] : sel) {
      CHECK(again.at(m).admissible == s.admissible);
      if (s.admissible) {
        CHECK(again.at(m).bic == s.bic);
        CHECK(again.at(m).lambda_d == s.lambda_d);
        CHECK(again.at(m).lambda_w == s.lambda_w);
      }
    }
    CHECK(best_order(again) == best_order(sel));
  }
  SUBCASE("worker count does not change the result") {
    const auto par = select_model(data, roles, cfg, quick_train(), 3);
    for (const auto& [m, s] : sel) {
      CHECK(par.at(m).admissible == s.admissible);
      if (s.admissible) CHECK(par.at(m).bic == s.bic);
    }
  }
}

TEST_CASE("an impossible entropy cap rejects every multi-cadre model") {
  SyntheticSpec spec;
  spec.n = 300;
  spec.seed = 2;
  const auto study = generate_synthetic(spec);
  const auto roles = VariableRoles::make(study.data, study.control_names, "e1");
  auto cfg = small_grid();
  cfg.m_values = {1, 3};
  cfg.entropy_cap = -0.0;
  cfg.gamma = 0.05;  // soft gating, so no cadre is certain
  const auto sel = select_model(study.data, roles, cfg, quick_train());
  CHECK(sel.at(1).admissible);
  CHECK_FALSE(sel.at(3).admissible);
  CHECK(std::isinf(sel.at(3).bic));
  const auto& reason = *sel.at(3).rejected_reason;
  CHECK((reason == "entropy cap" || reason == "empty cadre"));
  CHECK(best_order(sel) == 1);
}

TEST_CASE("aggregation breaks BIC ties by smaller regularization") {
  SelectionConfig cfg;
  cfg.m_values = {2};
  cfg.lambda_grid = {{1.0, 0.1}, {0.1, 1.0}, {0.1, 0.5}};
  std::vector<Candidate> cands;
  for (const auto& [ld, lw] : cfg.lambda_grid) {
    Candidate c;
    c.m = 2;
    c.lambda_d = ld;
    c.lambda_w = lw;
    c.fit = FittedScm{};
    c.fit->bic = 10.0;
    c.admissible = true;
    cands.push_back(c);
  }
  const auto sel = aggregate_candidates(cfg, cands);
  CHECK(sel.at(2).lambda_d == 0.1);
  CHECK(sel.at(2).lambda_w == 0.5);
  CHECK_THROWS_AS(aggregate_candidates(cfg, {}), std::invalid_argument);
}

TEST_CASE("selection config validation") {
  SelectionConfig cfg;
  CHECK(cfg.lambda_grid.size() == 25);
  CHECK_NOTHROW(cfg.check());
  cfg.lambda_grid.clear();
  CHECK_THROWS_AS(cfg.check(), std::invalid_argument);
  cfg = SelectionConfig{};
  cfg.entropy_cap = -1.0;
  CHECK_THROWS_AS(cfg.check(), std::invalid_argument);
}
