#include "hdgp/additive.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <vector>

#include "hdgp/errors.hpp"
#include "hdgp/optim.hpp"

namespace hdgp {

namespace {

constexpr double kLog2Pi = 1.83787706640934548356065947281124;

Eigen::MatrixXd one_dim_matrix(KernelFamily f, const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                               double theta) {
  Eigen::MatrixXd M(a.size(), b.size());
  for (Eigen::Index c = 0; c < b.size(); ++c)
    for (Eigen::Index r = 0; r < a.size(); ++r)
      M(r, c) = kern1d::value(f, a[r] - b[c], theta);
  return M;
}

Eigen::MatrixXd one_dim_dtheta(KernelFamily f, const Eigen::VectorXd& a, double theta) {
  Eigen::MatrixXd M(a.size(), a.size());
  for (Eigen::Index c = 0; c < a.size(); ++c)
    for (Eigen::Index r = 0; r < a.size(); ++r)
      M(r, c) = kern1d::dtheta(f, a[r] - a[c], theta);
  return M;
}

}  // namespace

double additive_ll_grad(const Eigen::MatrixXd& X, const Eigen::VectorXd& y_centered,
                        const KernelSpec& spec, double g, bool free_nugget,
                        Eigen::VectorXd* grad) {
  validate_spec(spec);
  if (spec.composition != Composition::AdditiveSum)
    throw SpecError("additive_ll_grad: requires an AdditiveSum kernel");
  if (X.rows() != y_centered.size()) throw DimensionError("X rows and y size differ");
  if (g < 0.0 || !std::isfinite(g)) throw SpecError("additive_ll_grad: g must be >= 0");

  const Eigen::Index n = X.rows();
  const int d = spec.dimension;
  const double var_norm = spec.component_variances.sum();

  std::vector<Eigen::MatrixXd> comps(d);
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < d; ++i) {
    comps[i] = one_dim_matrix(spec.family, X.col(i), X.col(i), spec.lengthscales[i]);
    K += spec.component_variances[i] * comps[i];
  }
  K.diagonal().array() += g;
  auto [L, jitter] = detail::chol_with_jitter(std::move(K), var_norm);

  Eigen::VectorXd v = L.triangularView<Eigen::Lower>().solve(y_centered);
  const double quad = v.squaredNorm();
  Eigen::VectorXd alpha = L.transpose().triangularView<Eigen::Upper>().solve(v);
  const double ll =
      -0.5 * static_cast<double>(n) * kLog2Pi - detail::half_logdet(L) - 0.5 * quad;

  if (grad) {
    grad->resize(2 * d + (free_nugget ? 1 : 0));
    Eigen::MatrixXd Kinv = Eigen::MatrixXd::Identity(n, n);
    L.triangularView<Eigen::Lower>().solveInPlace(Kinv);
    L.transpose().triangularView<Eigen::Upper>().solveInPlace(Kinv);
    const double rel_jitter = jitter / var_norm;  // d jitter / d sum(alpha)
    for (int i = 0; i < d; ++i) {
      // d/d log theta_i
      const Eigen::MatrixXd dK =
          spec.component_variances[i] * spec.lengthscales[i] *
          one_dim_dtheta(spec.family, X.col(i), spec.lengthscales[i]);
      (*grad)[i] = 0.5 * alpha.dot(dK * alpha) - 0.5 * Kinv.cwiseProduct(dK).sum();
      // d/d log alpha_i, including the jitter's dependence on sum(alpha)
      const double quad_i = alpha.dot(comps[i] * alpha) + rel_jitter * alpha.squaredNorm();
      const double tr_i = Kinv.cwiseProduct(comps[i]).sum() + rel_jitter * Kinv.trace();
      (*grad)[d + i] = spec.component_variances[i] * 0.5 * (quad_i - tr_i);
    }
    if (free_nugget) (*grad)[2 * d] = g * 0.5 * (alpha.squaredNorm() - Kinv.trace());
  }
  return ll;
}

AdditiveGP additive_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, KernelFamily family,
                        const AdditiveFitOptions& options) {
  if (X.rows() == 0) throw DegenerateDataError("additive_fit: empty training design");
  if (X.rows() != y.size()) throw DimensionError("additive_fit: X rows and y size differ");
  if (!X.allFinite() || !y.allFinite())
    throw DegenerateDataError("additive_fit: non-finite training values");
  if (options.n_starts < 1) throw SpecError("additive_fit: n_starts must be >= 1");

  const Eigen::Index n = X.rows();
  const int d = static_cast<int>(X.cols());
  const double center = y.mean();
  const Eigen::VectorXd yc = y.array() - center;
  const double var_y = yc.squaredNorm() / static_cast<double>(n);
  if (!(var_y > 0.0)) throw DegenerateDataError("additive_fit: constant y");

  const double t_lo = options.bounds.resolved_theta_lo(d);
  const double t_hi = options.bounds.resolved_theta_hi(d);
  const double a_lo = 1e-10 * var_y, a_hi = 10.0 * var_y;
  const double g_lo = std::max(options.bounds.nugget_lo, 1e-12) * var_y;
  const double g_hi = std::max(options.bounds.nugget_hi * var_y, g_lo);
  const bool free_g = !options.fix_nugget.has_value();
  const double fixed_g = options.fix_nugget.value_or(0.0);
  if (!free_g && (fixed_g < 0.0 || !std::isfinite(fixed_g)))
    throw SpecError("additive_fit: fixed nugget must be >= 0");

  const int np = 2 * d + (free_g ? 1 : 0);
  Eigen::VectorXd lo(np), hi(np);
  lo.head(d).setConstant(std::log(t_lo));
  hi.head(d).setConstant(std::log(t_hi));
  lo.segment(d, d).setConstant(std::log(a_lo));
  hi.segment(d, d).setConstant(std::log(a_hi));
  if (free_g) {
    lo[2 * d] = std::log(g_lo);
    hi[2 * d] = std::log(g_hi);
  }

  KernelSpec shape =
      KernelSpec::additive(family, Eigen::VectorXd::Ones(d), Eigen::VectorXd::Ones(d));

  const auto objective = [&](const Eigen::VectorXd& p, Eigen::VectorXd* grad) -> double {
    KernelSpec s = shape;
    for (int i = 0; i < d; ++i) {
      s.lengthscales[i] = std::exp(p[i]);
      s.component_variances[i] = std::exp(p[d + i]);
    }
    const double g = free_g ? std::exp(p[2 * d]) : fixed_g;
    Eigen::VectorXd ll_grad;
    const double ll = additive_ll_grad(X, yc, s, g, free_g, grad ? &ll_grad : nullptr);
    if (grad) *grad = -ll_grad;
    return -ll;
  };

  std::mt19937_64 rng(mix64(options.seed));
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  bool have_best = false;
  Eigen::VectorXd best_p;
  double best_f = 0.0;
  for (int start = 0; start < options.n_starts; ++start) {
    Eigen::VectorXd p0(np);
    if (start == 0) {
      // Equal split of the empirical variance across components.
      p0.head(d).setConstant(0.5 * (std::log(t_lo) + std::log(t_hi)));
      p0.segment(d, d).setConstant(std::log(var_y / d));
      if (free_g) p0[2 * d] = std::log(std::max(1e-6 * var_y, g_lo));
    } else {
      for (int i = 0; i < np; ++i) p0[i] = lo[i] + unif(rng) * (hi[i] - lo[i]);
      p0.segment(d, d).setConstant(std::log(var_y / d));
      for (int i = 0; i < d; ++i) p0[d + i] += 2.0 * (unif(rng) - 0.5);
    }
    LbfgsResult r = minimize_lbfgs(objective, std::move(p0), lo, hi);
    if (!have_best || r.f < best_f) {
      have_best = true;
      best_f = r.f;
      best_p = std::move(r.x);
    }
  }

  KernelSpec fitted = shape;
  for (int i = 0; i < d; ++i) {
    fitted.lengthscales[i] = std::exp(best_p[i]);
    fitted.component_variances[i] = std::exp(best_p[d + i]);
  }
  const double g = free_g ? std::exp(best_p[2 * d]) : fixed_g;

  AdditiveGP model;
  model.base = gp_fit(X, yc, fitted, g);
  model.center = center;
  return model;
}

Prediction additive_predict(const AdditiveGP& model, const Eigen::MatrixXd& Xstar) {
  Prediction p = gp_predict(model.base, Xstar);
  p.mean.array() += model.center;
  return p;
}

Eigen::VectorXd main_effect(const AdditiveGP& model, int dim, const Eigen::VectorXd& grid) {
  const KernelSpec& spec = model.base.spec;
  if (dim < 0 || dim >= spec.dimension) throw DimensionError("main_effect: dimension out of range");
  const double a = spec.component_variances[dim];
  if (a == 0.0) return Eigen::VectorXd::Zero(grid.size());
  const Eigen::MatrixXd k1 =
      one_dim_matrix(spec.family, grid, model.base.X.col(dim), spec.lengthscales[dim]);
  return a * (k1 * model.base.alpha);
}

void export_main_effects_csv(const AdditiveGP& model, int grid_size, const std::string& path) {
  if (grid_size < 2) throw SpecError("export_main_effects_csv: grid_size must be >= 2");
  std::ofstream out(path);
  if (!out) throw IoError("export_main_effects_csv: cannot open " + path);
  Eigen::VectorXd grid(grid_size);
  for (int i = 0; i < grid_size; ++i) grid[i] = static_cast<double>(i) / (grid_size - 1);
  out << "dim,x,effect\n";
  char buf[64];
  for (int dim = 0; dim < model.base.spec.dimension; ++dim) {
    const Eigen::VectorXd eff = main_effect(model, dim, grid);
    for (int i = 0; i < grid_size; ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", grid[i]);
      out << dim << ',' << buf << ',';
      std::snprintf(buf, sizeof(buf), "%.17g", eff[i]);
      out << buf << '\n';
    }
  }
}

bool overfit_guard(const AdditiveGP& model, double threshold) {
  return model.nugget() <= threshold * model.process_variance();
}

}  // namespace hdgp
