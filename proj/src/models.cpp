#include "hdgp/models.hpp"

#include "hdgp/active_subspace.hpp"
#include "hdgp/errors.hpp"
#include "hdgp/optim.hpp"

namespace hdgp {

const char* model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::Ref: return "Ref";
    case ModelKind::Iso: return "Iso";
    case ModelKind::Add: return "Add";
    case ModelKind::AS: return "AS";
    case ModelKind::MF: return "MF";
    case ModelKind::ASMF: return "ASMF";
    case ModelKind::nMF: return "n-MF";
    case ModelKind::nASMF: return "n-ASMF";
  }
  return "?";
}

std::optional<ModelKind> model_kind_from_name(const std::string& name) {
  for (ModelKind k : all_model_kinds())
    if (name == model_kind_name(k)) return k;
  return std::nullopt;
}

std::vector<ModelKind> all_model_kinds() {
  return {ModelKind::Ref, ModelKind::Iso,  ModelKind::Add, ModelKind::AS,
          ModelKind::MF,  ModelKind::ASMF, ModelKind::nMF, ModelKind::nASMF};
}

ZooModel fit_model(ModelKind kind, const Eigen::MatrixXd& X,
                   const Eigen::VectorXd& y, const ZooOptions& options) {
  const int d = static_cast<int>(X.cols());
  ZooModel m;
  m.kind = kind;

  FitOptions fo;
  fo.bounds = options.bounds;
  fo.n_starts = options.n_starts;
  fo.seed = options.seed;
  if (options.noiseless) fo.fixed_relative_nugget = 0.0;

  switch (kind) {
    case ModelKind::Ref:
      m.impl = optimize_hyperparams(
          X, y, KernelSpec::product(KernelFamily::Matern52, Eigen::VectorXd::Ones(d), 1.0),
          fo);
      break;
    case ModelKind::Iso:
      m.impl = optimize_hyperparams(
          X, y, KernelSpec::isotropic(KernelFamily::Matern52, 1.0, 1.0, d), fo);
      break;
    case ModelKind::Add: {
      AdditiveFitOptions ao;
      ao.bounds = options.bounds;
      ao.n_starts = options.n_starts;
      ao.seed = options.seed;
      if (options.noiseless) ao.fix_nugget = 0.0;
      m.impl = additive_fit(X, y, KernelFamily::Matern52, ao);
      break;
    }
    case ModelKind::AS: {
      FitOptions full = fo;
      full.seed = hash_seed(options.seed, "as-full", 0, 0);
      const FittedGP gp = optimize_hyperparams(
          X, y, KernelSpec::product(KernelFamily::Matern52, Eigen::VectorXd::Ones(d), 1.0),
          full);
      MonteCarloOptions mc;
      mc.seed = hash_seed(options.seed, "as-C", 0, 0);
      const ASDecomposition dec = estimate_C(gp, CEstimator::MonteCarlo, mc);
      FitOptions sl = fo;
      sl.seed = hash_seed(options.seed, "as-r", 0, 0);
      ASGP sel = select_r(X, y, dec,
                          options.r_candidates.empty() ? default_r_candidates(d)
                                                       : options.r_candidates,
                          KernelFamily::Matern52, sl);
      m.r_selected = sel.r;
      m.impl = std::move(sel);
      break;
    }
    case ModelKind::MF:
    case ModelKind::ASMF:
    case ModelKind::nMF:
    case ModelKind::nASMF: {
      ASMFConfig cfg;
      cfg.r_candidates = options.r_candidates;
      cfg.n_starts = options.n_starts;
      cfg.seed = options.seed;
      cfg.bounds = options.bounds;
      if (options.noiseless) {
        cfg.fix_coarse_nugget = 0.0;
        cfg.fixed_relative_nugget = 0.0;
      }
      const ASMFVariant v = kind == ModelKind::MF      ? ASMFVariant::MF_full
                            : kind == ModelKind::ASMF  ? ASMFVariant::ASMF
                            : kind == ModelKind::nMF   ? ASMFVariant::Naive_MF
                                                       : ASMFVariant::Naive_ASMF;
      ASMFModel fitted = build_variant(X, y, cfg, v);
      if (kind == ModelKind::ASMF || kind == ModelKind::nASMF)
        m.r_selected = fitted.r_selected;
      m.impl = std::move(fitted);
      break;
    }
  }
  return m;
}

Prediction model_predict(const ZooModel& model, const Eigen::MatrixXd& Xs) {
  if (const auto* g = std::get_if<FittedGP>(&model.impl)) return gp_predict(*g, Xs);
  if (const auto* a = std::get_if<AdditiveGP>(&model.impl)) return additive_predict(*a, Xs);
  if (const auto* s = std::get_if<ASGP>(&model.impl)) return as_predict(*s, Xs);
  return asmf_predict(std::get<ASMFModel>(model.impl), Xs);
}

}  // namespace hdgp
