#include "helpers.hpp"
#include "scm/model.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace scm;

namespace {

// One control; the expert sees the risk factor and that control.
ScmParams one_dim_pair(double gamma) {
  auto p = ScmParams::zeros(2, 1, 2, 1, gamma, false);
  p.centers << 0.0, 1.0;
  p.d << 1.0;
  return p;
}

}  // namespace

TEST_CASE("single cadre membership is one") {
  auto p = ScmParams::zeros(1, 2, 3, 1, 75.0, false);
  p.d.setOnes();
  const double x[] = {4.0, -2.0};
  CHECK(membership(x, p)[0] == 1.0);
}

TEST_CASE("equidistant point splits evenly") {
  auto p = one_dim_pair(75.0);
  const double x[] = {0.5};
  const auto g = membership(x, p);
  CHECK(g[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(g[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("softmax(0, -1) example") {
  const auto p = one_dim_pair(1.0);
  const double x[] = {0.0};
  const auto g = membership(x, p);
  CHECK(g[0] == doctest::Approx(0.7310585786300049).epsilon(1e-15));
  CHECK(g[1] == doctest::Approx(0.2689414213699951).epsilon(1e-15));
}

TEST_CASE("prediction mixes experts by membership") {
  auto p = one_dim_pair(1.0);
  p.W0 << 1.0, -1.0;
  VariableRoles roles;
  roles.controls = {0};
  roles.risk_factor = 1;
  const double x[] = {0.0, 5.0};  // the expert weights are zero, so the risk factor is ignored
  CHECK(predict(x, roles, p)[0] == doctest::Approx(0.4621171572600098).epsilon(1e-14));

  SUBCASE("intercept-only single cadre") {
    auto q = ScmParams::zeros(1, 1, 2, 1, 1.0, false);
    q.d << 1.0;
    q.W0 << 3.0;
    CHECK(predict(x, roles, q)[0] == 3.0);
  }
  SUBCASE("identical experts ignore the gate") {
    p.W[0] << 0.4, -1.0;
    p.W[1] = p.W[0];
    p.W0 << 2.0, 2.0;
    CHECK(predict(x, roles, p)[0] == doctest::Approx(2.0 + 0.4 * 5.0).epsilon(1e-14));
  }
}

TEST_CASE("non-finite input names the coordinate") {
  const auto p = one_dim_pair(1.0);
  const double x[] = {std::nan("")};
  CHECK_THROWS_WITH(membership(x, p), doctest::Contains("coordinate 0"));
}

TEST_CASE("hardening picks the argmax with ties to the lowest index") {
  MatrixXd pr(4, 2);
  pr << 0.9, 0.1, 0.5, 0.5, 0.2, 0.8, 0.6, 0.4;
  CHECK(harden(pr) == std::vector<int>{0, 0, 1, 0});
}

TEST_CASE("entropy examples") {
  VectorXd w = VectorXd::Ones(3);
  MatrixXd onehot(3, 2);
  onehot << 1, 0, 1, 0, 0, 1;
  CHECK(cadre_conditional_entropy(onehot, {0, 0, 1}, w, 0) == 0.0);

  MatrixXd half(2, 2);
  half << 0.5, 0.5, 0.5, 0.5;
  CHECK(cadre_conditional_entropy(half, {0, 0}, VectorXd::Ones(2), 0) == doctest::Approx(1.0).epsilon(1e-15));

  MatrixXd skew(2, 2);
  skew << 0.95, 0.05, 0.85, 0.15;  // mean row [0.9, 0.1]
  CHECK(cadre_conditional_entropy(skew, {0, 0}, VectorXd::Ones(2), 0) ==
        doctest::Approx(0.4689955935892812).epsilon(1e-14));

  CHECK_THROWS_WITH(cadre_conditional_entropy(skew, {0, 0}, VectorXd::Ones(2), 1), doctest::Contains("empty cadre 1"));
}

TEST_CASE("entropy uses survey weights") {
  MatrixXd pr(2, 2);
  pr << 1.0, 0.0, 0.6, 0.4;
  VectorXd w(2);
  w << 3.0, 1.0;  // weighted mean row [0.9, 0.1]
  CHECK(cadre_conditional_entropy(pr, {0, 0}, w, 0) == doctest::Approx(0.4689955935892812).epsilon(1e-14));
}

TEST_CASE("membership properties on random points") {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int m = 1 + trial % 4;
    auto p = testing_support::random_params(m, 3, 4, 1, false, 2.0, static_cast<unsigned>(trial));
    const double x[] = {z(rng), z(rng), z(rng)};
    const auto g = membership(x, p);
    CHECK(std::abs(g.sum() - 1.0) < 1e-8);
    CHECK((g.array() >= 0.0).all());

    // Only |d| enters the seminorm.
    auto flipped = p;
    flipped.d = -p.d;
    CHECK((membership(x, flipped) - g).cwiseAbs().maxCoeff() < 1e-15);

    // A shared extra coordinate adds the same constant to every distance.
    auto shifted = ScmParams::zeros(m, 4, 4, 1, 2.0, false);
    shifted.centers.leftCols(3) = p.centers;
    shifted.centers.col(3).setConstant(0.7);
    shifted.d.head(3) = p.d;
    shifted.d[3] = 1.3;
    const double x4[] = {x[0], x[1], x[2], -1.1};
    CHECK((membership(x4, shifted) - g).cwiseAbs().maxCoeff() < 1e-12);

    // Relabelling cadres permutes membership and leaves predictions alone.
    if (m >= 2) {
      auto perm = p;
      perm.centers.row(0) = p.centers.row(m - 1);
      perm.centers.row(m - 1) = p.centers.row(0);
      std::swap(perm.W[0], perm.W[static_cast<std::size_t>(m - 1)]);
      perm.W0.row(0) = p.W0.row(m - 1);
      perm.W0.row(m - 1) = p.W0.row(0);
      const auto gp = membership(x, perm);
      CHECK(std::abs(gp[0] - g[m - 1]) < 1e-15);
      CHECK(std::abs(gp[m - 1] - g[0]) < 1e-15);
      VariableRoles roles;
      roles.controls = {0, 1, 2};
      roles.risk_factor = 3;
      const double full[] = {x[0], x[1], x[2], z(rng)};
      CHECK(std::abs(predict(full, roles, perm)[0] - predict(full, roles, p)[0]) < 1e-12);
    }
  }
}

TEST_CASE("large gamma gives one-hot membership on separated points") {
  auto p = ScmParams::zeros(3, 1, 1, 1, 1e4, false);
  p.centers << -2.0, 0.0, 2.0;
  p.d << 1.0;
  for (double x0 : {-2.1, -0.4, 0.3, 1.7, 5.0}) {
    const double x[] = {x0};
    CHECK(membership(x, p).maxCoeff() > 1.0 - 1e-6);
  }
}

TEST_CASE("assign_cadres reports sizes, entropies and empty cadres") {
  auto d = testing_support::random_dataset(40, 1, Task::cbp, 9);
  for (Index i = 0; i < 40; ++i) d.features(i, 0) = i < 20 ? -3.0 - 0.01 * i : 3.0 + 0.01 * i;
  const auto roles = testing_support::roles_for(d);
  auto p = ScmParams::zeros(2, 1, 2, 2, 75.0, true);
  p.centers << -3.0, 3.0;
  p.d << 1.0;
  const auto a = assign_cadres(d, roles, p);
  CHECK(a.cadre_sizes == std::vector<std::size_t>{20, 20});
  CHECK_FALSE(a.has_empty_cadre());
  CHECK(a.max_entropy() < 1e-10);

  p.centers << 100.0, 3.0;
  const auto b = assign_cadres(d, roles, p);
  CHECK(b.has_empty_cadre());
  CHECK(std::isnan(b.per_cadre_entropy[0]));
  CHECK(std::isinf(b.max_entropy()));
}
