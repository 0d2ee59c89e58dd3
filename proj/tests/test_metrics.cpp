#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>

#include "hdgp/errors.hpp"
#include "hdgp/metrics.hpp"
#include "hdgp/models.hpp"
#include "hdgp/testbed.hpp"

using namespace hdgp;

TEST_CASE("rmse matches a hand computation") {
  Eigen::Vector2d t(1.0, 2.0);
  Eigen::Vector2d p(4.0, -2.0);
  // sqrt((9 + 16) / 2)
  CHECK(rmse(t, p) == doctest::Approx(3.5355339059327378).epsilon(1e-15));
  CHECK(rmse(t, t) == 0.0);
}

TEST_CASE("rmse rejects mismatched or empty input") {
  Eigen::Vector2d a(1.0, 2.0);
  Eigen::Vector3d b(1.0, 2.0, 3.0);
  CHECK_THROWS_AS(rmse(a, b), DimensionError);
  CHECK_THROWS_AS(rmse(Eigen::VectorXd(), Eigen::VectorXd()), DimensionError);
}

TEST_CASE("a perfect mean with variance 1/(2 pi) scores exactly zero") {
  Eigen::Vector3d y(0.4, -1.1, 2.7);
  Prediction p;
  p.mean = y;
  p.variance = Eigen::Vector3d::Constant(1.0 / (2.0 * 3.14159265358979323846));
  CHECK(score(y, p) == 0.0);
}

TEST_CASE("score matches the gaussian log density") {
  Eigen::Vector2d y(1.0, 2.0);
  Prediction p;
  p.mean = Eigen::Vector2d(1.5, 1.0);
  p.variance = Eigen::Vector2d(1.0, 4.0);
  const double two_pi = 2.0 * 3.14159265358979323846;
  const double want = 0.5 * ((-0.5 * std::log(two_pi * 1.0) - 0.25 / 2.0) +
                             (-0.5 * std::log(two_pi * 4.0) - 1.0 / 8.0));
  CHECK(score(y, p) == doctest::Approx(want).epsilon(1e-15));
}

TEST_CASE("degenerate variances are lifted to a tiny floor") {
  Eigen::VectorXd y(1);
  y << 0.0;
  Prediction p;
  p.mean = y;
  p.variance = Eigen::VectorXd::Zero(1);
  const double two_pi = 2.0 * 3.14159265358979323846;
  CHECK(score(y, p) == doctest::Approx(-0.5 * std::log(two_pi * 1e-12)).epsilon(1e-12));
}

TEST_CASE("flooring clips only from below") {
  CHECK(floor_score(-7.0, -5.0) == -5.0);
  CHECK(floor_score(-3.0, -5.0) == -3.0);
  CHECK(floor_score(2.0, -5.0) == 2.0);
}

TEST_CASE("the reference model is accurate on a smooth draw") {
  const Problem prob = make_registry_problem("gpdraw8", 19);
  const Split sp = make_split(prob, 200, 19);
  ZooOptions opts;
  opts.seed = 19;
  opts.n_starts = 2;
  const ZooModel m = fit_model(ModelKind::Ref, sp.X_train, sp.y_train, opts);
  const Prediction pred = model_predict(m, sp.X_test);
  CHECK(rmse(sp.y_test, pred.mean) < 1.0);  // y is standardized, so 1 = trivial
  CHECK(score(sp.y_test, pred) > score(sp.y_test, Prediction{
                                            Eigen::VectorXd::Zero(sp.y_test.size()),
                                            Eigen::VectorXd::Ones(sp.y_test.size())}));
}
