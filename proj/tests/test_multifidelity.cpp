#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <vector>

#include "hdgp/errors.hpp"
#include "hdgp/multifidelity.hpp"
#include "hdgp/optim.hpp"
#include "hdgp/testbed.hpp"
#include "helpers.hpp"

using namespace hdgp;
using testutil::gaussian_vector;
using testutil::smooth_response;
using testutil::uniform_design;

namespace {

struct NestedPair {
  Eigen::MatrixXd X_C, X_E;
  std::vector<Eigen::Index> rows;
};

NestedPair nested_designs(int n_C, int n_E, int d, std::uint64_t seed) {
  NestedPair p;
  p.X_C = uniform_design(n_C, d, seed);
  p.rows = sample_without_replacement(n_C, n_E, seed + 1);
  p.X_E.resize(n_E, d);
  for (int i = 0; i < n_E; ++i) p.X_E.row(i) = p.X_C.row(p.rows[i]);
  return p;
}

Eigen::VectorXd pick(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[rows[i]];
  return out;
}

double pop_var(const Eigen::VectorXd& v) {
  const double m = v.mean();
  return (v.array() - m).square().mean();
}

}  // namespace

TEST_CASE("analytic rho derivative matches central finite differences") {
  const Eigen::MatrixXd X = uniform_design(12, 2, 301);
  const Eigen::VectorXd y = smooth_response(X);
  const Eigen::VectorXd mc = 0.8 * y + 0.1 * gaussian_vector(12, 302);
  const KernelSpec shape =
      KernelSpec::product(KernelFamily::Matern52, Eigen::Vector2d(0.5, 0.9), 1.0);
  const double rel = 1e-3;
  for (double rho : {-1.2, -0.3, 0.4, 1.0, 2.5}) {
    const MFRhoEval at = mf_rho_likelihood(X, y, mc, shape, rel, rho);
    const double eps = 1e-5;
    const double up = mf_rho_likelihood(X, y, mc, shape, rel, rho + eps).log_lik;
    const double dn = mf_rho_likelihood(X, y, mc, shape, rel, rho - eps).log_lik;
    const double fd = (up - dn) / (2.0 * eps);
    CAPTURE(rho);
    CHECK(at.dll_drho == doctest::Approx(fd).epsilon(1e-5).scale(1e-6));
    CHECK(at.sigma2_hat > 0.0);
  }
}

TEST_CASE("a pure scaling between levels recovers rho") {
  const NestedPair p = nested_designs(30, 12, 2, 303);
  const Eigen::VectorXd y_C = smooth_response(p.X_C);
  const FittedGP coarse = gp_fit(
      p.X_C, y_C,
      KernelSpec::product(KernelFamily::Matern52, Eigen::Vector2d(0.5, 0.8), 1.0), 0.0);
  const Eigen::VectorXd y_E = 2.0 * gp_predict(coarse, p.X_E).mean;

  MFFitOptions opts;
  opts.seed = 7;
  opts.n_starts = 2;
  const MFModel m = mf_fit(p.X_E, y_E, CoarseHandle::from(coarse), opts);
  CHECK(m.rho == doctest::Approx(2.0).epsilon(1e-4));
  CHECK(m.fine_residual.spec.variance < 1e-6 * pop_var(y_E));
}

TEST_CASE("unrelated levels give a small rho") {
  int small = 0;
  for (std::uint64_t seed : {305u, 307u, 309u, 311u, 313u}) {
    const Eigen::MatrixXd X = uniform_design(100, 2, seed);
    const Eigen::VectorXd y_C = smooth_response(X);
    const FittedGP coarse = gp_fit(
        X, y_C,
        KernelSpec::product(KernelFamily::Matern52, Eigen::Vector2d(0.5, 0.8), 1.0),
        1e-6);
    // Shuffle the responses so the fine level carries no signal the coarse
    // posterior can explain.
    const std::vector<Eigen::Index> perm = sample_without_replacement(100, 100, seed + 1);
    Eigen::VectorXd y_E(100);
    const Eigen::VectorXd shuffled = gaussian_vector(100, seed + 2);
    for (int i = 0; i < 100; ++i) y_E[i] = shuffled[perm[i]];

    MFFitOptions opts;
    opts.seed = seed;
    opts.n_starts = 2;
    const MFModel m = mf_fit(X, y_E, CoarseHandle::from(coarse), opts);
    // Pure-noise fine data keeps the estimate well under a genuine coupling
    // (around one), though its sampling spread at n = 100 is roughly 0.15.
    if (std::abs(m.rho) < 0.5) ++small;
  }
  CHECK(small == 5);
}

TEST_CASE("rho fixed at zero collapses to a single-level gp") {
  const NestedPair p = nested_designs(25, 10, 2, 315);
  const Eigen::VectorXd y_C = smooth_response(p.X_C);
  const FittedGP coarse = gp_fit(
      p.X_C, y_C,
      KernelSpec::product(KernelFamily::Matern52, Eigen::Vector2d(0.5, 0.8), 1.0),
      1e-4);
  const Eigen::VectorXd y_E =
      pick(y_C, p.rows) + 0.3 * gaussian_vector(10, 316);

  MFFitOptions opts;
  opts.seed = 11;
  opts.n_starts = 2;
  opts.fixed_rho = 0.0;
  const MFModel m = mf_fit(p.X_E, y_E, CoarseHandle::from(coarse), opts);
  CHECK(m.rho == 0.0);

  const Eigen::MatrixXd Xs = uniform_design(20, 2, 317);
  const Prediction mf = mf_predict_direct(m, Xs);
  const Prediction solo = gp_predict(m.fine_residual, Xs);
  CHECK((mf.mean - solo.mean).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((mf.variance - solo.variance).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("noiseless nested levels make recursive and direct prediction identical") {
  const NestedPair p = nested_designs(20, 8, 2, 319);
  const Eigen::VectorXd y_C = smooth_response(p.X_C);
  const FittedGP coarse = gp_fit(
      p.X_C, y_C,
      KernelSpec::product(KernelFamily::Matern52, Eigen::Vector2d(0.5, 0.8), 1.0), 0.0);
  Eigen::VectorXd y_E = 1.5 * pick(y_C, p.rows);
  for (int i = 0; i < 8; ++i) y_E[i] += 0.1 * std::sin(4.0 * p.X_E(i, 0));

  MFFitOptions opts;
  opts.seed = 13;
  opts.n_starts = 3;
  opts.fixed_relative_nugget = 0.0;
  const MFModel m = mf_fit(p.X_E, y_E, CoarseHandle::from(coarse), opts);
  CHECK(m.nested);
  CHECK(m.has_strict);
  REQUIRE(m.fine_rows_in_coarse.size() == 8);
  for (int i = 0; i < 8; ++i)
    CHECK((p.X_C.row(m.fine_rows_in_coarse[i]) - p.X_E.row(i)).cwiseAbs().maxCoeff() ==
          0.0);

  const Eigen::MatrixXd Xs = uniform_design(50, 2, 320);
  const Prediction dir = mf_predict_direct(m, Xs);
  const Prediction rec = mf_predict_recursive(m, Xs);
  CHECK((dir.mean - rec.mean).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((dir.variance - rec.variance).cwiseAbs().maxCoeff() < 1e-8);

  // Both reproduce the fine data at the fine sites.
  const Prediction at_train = mf_predict_direct(m, p.X_E);
  CHECK((at_train.mean - y_E).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("a noisy coarse level makes the recursive variance pessimistic") {
  const NestedPair p = nested_designs(25, 10, 2, 321);
  const Eigen::VectorXd y_C =
      smooth_response(p.X_C) + 0.3 * gaussian_vector(25, 322);
  const FittedGP coarse = gp_fit(
      p.X_C, y_C,
      KernelSpec::product(KernelFamily::Matern52, Eigen::Vector2d(0.4, 0.6), 1.0),
      0.1);
  const Eigen::VectorXd y_E =
      1.2 * pick(y_C, p.rows) + 0.2 * gaussian_vector(10, 323);

  MFFitOptions opts;
  opts.seed = 17;
  opts.n_starts = 2;
  const MFModel m = mf_fit(p.X_E, y_E, CoarseHandle::from(coarse), opts);
  CHECK(m.nested);
  CHECK_FALSE(m.has_strict);

  const Prediction dir = mf_predict_direct(m, p.X_E);
  const Prediction rec = mf_predict_recursive(m, p.X_E, true);
  for (int i = 0; i < 10; ++i) {
    CAPTURE(i);
    CHECK(rec.variance[i] > dir.variance[i]);
  }
}

TEST_CASE("recursive prediction must be requested as an approximation") {
  const NestedPair p = nested_designs(20, 8, 2, 325);
  const Eigen::VectorXd y_C =
      smooth_response(p.X_C) + 0.2 * gaussian_vector(20, 326);
  const FittedGP coarse = gp_fit(
      p.X_C, y_C,
      KernelSpec::product(KernelFamily::Matern52, Eigen::Vector2d(0.5, 0.8), 1.0),
      0.05);
  const Eigen::VectorXd y_E = pick(y_C, p.rows);

  MFFitOptions opts;
  opts.seed = 19;
  opts.n_starts = 2;
  const MFModel m = mf_fit(p.X_E, y_E, CoarseHandle::from(coarse), opts);
  CHECK_FALSE(m.has_strict);
  const Eigen::MatrixXd Xs = uniform_design(5, 2, 327);
  CHECK_THROWS_AS(mf_predict_recursive(m, Xs), ConstructionError);
  CHECK_NOTHROW(mf_predict_recursive(m, Xs, true));

  // Fitting in recursive mode opts in once and for all.
  opts.mode = MFMode::Recursive;
  const MFModel mr = mf_fit(p.X_E, y_E, CoarseHandle::from(coarse), opts);
  CHECK(mr.recursive_is_approximation);
  CHECK_NOTHROW(mf_predict_recursive(mr, Xs));
  const Prediction via_dispatch = mf_predict(mr, Xs);
  const Prediction direct_call = mf_predict_recursive(mr, Xs, true);
  CHECK((via_dispatch.mean - direct_call.mean).cwiseAbs().maxCoeff() == 0.0);

  const Prediction dd = mf_predict(m, Xs);
  const Prediction dx = mf_predict_direct(m, Xs);
  CHECK((dd.mean - dx.mean).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("nesting detection requires exact row matches") {
  NestedPair p = nested_designs(20, 6, 2, 329);
  const Eigen::VectorXd y_C = smooth_response(p.X_C);
  const FittedGP coarse = gp_fit(
      p.X_C, y_C,
      KernelSpec::product(KernelFamily::Matern52, Eigen::Vector2d(0.5, 0.8), 1.0),
      1e-4);
  MFFitOptions opts;
  opts.seed = 23;
  opts.n_starts = 2;

  const MFModel ok = mf_fit(p.X_E, pick(y_C, p.rows), CoarseHandle::from(coarse), opts);
  CHECK(ok.nested);

  Eigen::MatrixXd X_off = p.X_E;
  X_off(3, 1) += 1e-10;
  const MFModel off = mf_fit(X_off, pick(y_C, p.rows), CoarseHandle::from(coarse), opts);
  CHECK_FALSE(off.nested);
  CHECK_FALSE(off.has_strict);
}

TEST_CASE("far from all data the variance reverts to the combined prior") {
  const int n_C = 20, n_E = 8;
  Eigen::MatrixXd X_C = 0.25 * uniform_design(n_C, 2, 331);
  Eigen::MatrixXd X_E = X_C.topRows(n_E);
  const Eigen::VectorXd y_C = smooth_response(X_C);
  const FittedGP coarse = gp_fit(
      X_C, y_C,
      KernelSpec::product(KernelFamily::Matern52, Eigen::Vector2d(0.05, 0.05), 0.8),
      0.0);
  Eigen::VectorXd y_E = 1.3 * y_C.head(n_E);
  for (int i = 0; i < n_E; ++i) y_E[i] += 0.2 * std::cos(7.0 * X_E(i, 1));

  MFFitOptions opts;
  opts.seed = 29;
  opts.n_starts = 3;
  opts.bounds.theta_lo = 0.01;
  opts.bounds.theta_hi = 0.25;
  const MFModel m = mf_fit(X_E, y_E, CoarseHandle::from(coarse), opts);

  Eigen::MatrixXd far(1, 2);
  far << 0.95, 0.95;
  const Prediction pr = mf_predict_direct(m, far);
  const double prior = m.rho * m.rho * 0.8 + m.fine_residual.spec.variance;
  CHECK(std::abs(pr.variance[0] - prior) < 0.01 * prior);
  CHECK(std::abs(pr.mean[0]) < 0.05 * y_E.cwiseAbs().maxCoeff());
}

TEST_CASE("coarse handles wrap each model family consistently") {
  const Eigen::MatrixXd X = uniform_design(25, 3, 333);
  const Eigen::VectorXd y = smooth_response(X);
  const Eigen::MatrixXd Xs = uniform_design(9, 3, 334);

  AdditiveFitOptions ao;
  ao.seed = 31;
  ao.n_starts = 2;
  const AdditiveGP add = additive_fit(X, y, KernelFamily::Matern52, ao);
  const CoarseHandle hadd = CoarseHandle::from(add);
  const Prediction pa = coarse_predict(hadd, Xs);
  const Prediction pa_ref = additive_predict(add, Xs);
  CHECK((pa.mean - pa_ref.mean).cwiseAbs().maxCoeff() == 0.0);
  CHECK((pa.variance - pa_ref.variance).cwiseAbs().maxCoeff() == 0.0);
  CHECK(coarse_prior_variance(hadd) == doctest::Approx(add.process_variance()));
  CHECK(coarse_mean_offset(hadd) == add.center);

  FitOptions fo;
  fo.seed = 37;
  fo.n_starts = 2;
  fo.fixed_relative_nugget = 1e-6;
  const FittedGP plain = optimize_hyperparams(
      X, y, KernelSpec::product(KernelFamily::Matern52, Eigen::VectorXd::Ones(3), 1.0),
      fo);
  const ASDecomposition dec = estimate_C(plain, CEstimator::MonteCarlo, {0, 41});
  const ASGP asgp = select_r(X, y, dec, {2}, KernelFamily::Matern52, fo);
  const CoarseHandle has = CoarseHandle::from(asgp, X, y);
  const Prediction ps = coarse_predict(has, Xs);
  const Prediction ps_ref = as_predict(asgp, Xs);
  CHECK((ps.mean - ps_ref.mean).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ps.variance - ps_ref.variance).cwiseAbs().maxCoeff() == 0.0);

  // The fine level can ride on a rotated design too.
  MFFitOptions mo;
  mo.seed = 43;
  mo.n_starts = 2;
  mo.fine_rotation = dec;
  mo.fine_r = 2;
  const Eigen::VectorXd y_E = y.head(10);
  const MFModel m = mf_fit(X.topRows(10), y_E, has, mo);
  CHECK(m.fine_rotation.has_value());
  CHECK(m.fine_r == 2);
  CHECK(m.fine_residual.spec.dimension == 2);
  CHECK_NOTHROW(mf_predict_direct(m, Xs));
}
