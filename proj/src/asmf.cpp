#include "hdgp/asmf.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "hdgp/active_subspace.hpp"
#include "hdgp/errors.hpp"
#include "hdgp/optim.hpp"

namespace hdgp {

namespace {

std::string step_tag(int step, const char* what) {
  return "step " + std::to_string(step) + ": " + what;
}

// Rethrows stage failures with the step number prefixed, keeping the type.
template <class Fn>
auto run_step(int step, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const SpecError& e) {
    throw SpecError(step_tag(step, e.what()));
  } catch (const DimensionError& e) {
    throw DimensionError(step_tag(step, e.what()));
  } catch (const FactorizationError& e) {
    throw FactorizationError(step_tag(step, e.what()));
  } catch (const DegenerateDataError& e) {
    throw DegenerateDataError(step_tag(step, e.what()));
  } catch (const EigenDegeneracyError& e) {
    throw EigenDegeneracyError(step_tag(step, e.what()));
  } catch (const ConstructionError& e) {
    throw ConstructionError(step_tag(step, e.what()));
  } catch (const IoError& e) {
    throw IoError(step_tag(step, e.what()));
  } catch (const Error& e) {
    throw Error(step_tag(step, e.what()));
  }
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void push(std::vector<TraceEntry>& trace, int step, const char* name,
          std::string info) {
  trace.push_back({step, name, std::move(info)});
}

}  // namespace

const char* variant_name(ASMFVariant v) {
  switch (v) {
    case ASMFVariant::ASMF: return "ASMF";
    case ASMFVariant::MF_full: return "MF_full";
    case ASMFVariant::Naive_ASMF: return "Naive_ASMF";
    case ASMFVariant::Naive_MF: return "Naive_MF";
  }
  return "?";
}

ASMFModel build_variant(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        const ASMFConfig& config, ASMFVariant variant) {
  if (!(config.p > 0.0 && config.p <= 1.0))
    throw SpecError("build_variant: p must be in (0, 1]");
  if (!(config.guard_threshold > 0.0))
    throw SpecError("build_variant: guard_threshold must be positive");
  if (y.size() != X.rows())
    throw DimensionError("build_variant: y size does not match X");

  const Eigen::Index n = X.rows();
  const int d = static_cast<int>(X.cols());
  const bool naive =
      variant == ASMFVariant::Naive_ASMF || variant == ASMFVariant::Naive_MF;
  const bool rotated =
      variant == ASMFVariant::ASMF || variant == ASMFVariant::Naive_ASMF;

  ASMFModel m;
  m.variant = variant;
  push(m.trace, 1, "input",
       "{\"n\":" + std::to_string(n) + ",\"d\":" + std::to_string(d) + "}");

  AdditiveFitOptions aopt;
  aopt.bounds = config.bounds;
  aopt.n_starts = config.n_starts;
  aopt.seed = hash_seed(config.seed, "coarse", 0, 0);
  aopt.fix_nugget = config.fix_coarse_nugget;
  m.coarse = run_step(2, [&] {
    return additive_fit(X, y, KernelFamily::Matern52, aopt);
  });
  push(m.trace, 2, "fit_additive",
       "{\"n\":" + std::to_string(n) + ",\"d\":" + std::to_string(d) + "}");

  const bool fired = overfit_guard(m.coarse, config.guard_threshold);
  push(m.trace, 3, "overfit_guard",
       std::string("{\"fired\":") + (fired ? "true" : "false") +
           ",\"tau2\":" + num(m.coarse.nugget()) +
           ",\"process_variance\":" + num(m.coarse.process_variance()) + "}");

  if (fired) {
    const Eigen::Index n0 = std::clamp<Eigen::Index>(
        static_cast<Eigen::Index>(std::llround(config.p * static_cast<double>(n))),
        1, n);
    const std::vector<Eigen::Index> keep = sample_without_replacement(
        n, n0, hash_seed(config.seed, "subsample", static_cast<std::uint64_t>(n),
                         static_cast<std::uint64_t>(n0)));
    Eigen::MatrixXd XC(n0, d);
    Eigen::VectorXd yC(n0);
    for (Eigen::Index i = 0; i < n0; ++i) {
      XC.row(i) = X.row(keep[static_cast<std::size_t>(i)]);
      yC[i] = y[keep[static_cast<std::size_t>(i)]];
    }
    push(m.trace, 4, "subsample",
         "{\"n\":" + std::to_string(n) + ",\"n0\":" + std::to_string(n0) + "}");
    AdditiveFitOptions aopt2 = aopt;
    aopt2.seed = hash_seed(config.seed, "coarse_sub", 0, 0);
    m.coarse = run_step(5, [&] {
      return additive_fit(XC, yC, KernelFamily::Matern52, aopt2);
    });
    push(m.trace, 5, "refit_additive",
         "{\"n\":" + std::to_string(n0) + ",\"d\":" + std::to_string(d) + "}");
  }

  // The withheld points stay in the fine design; only the coarse set shrank.
  push(m.trace, 7, "coarse_predict",
       "{\"n\":" + std::to_string(n) + ",\"d\":" + std::to_string(d) + "}");

  MFFitOptions mo;
  mo.bounds = config.bounds;
  mo.n_starts = config.n_starts;
  mo.seed = hash_seed(config.seed, "mf8", 0, 0);
  mo.fine_family = KernelFamily::Matern52;
  mo.fixed_relative_nugget = config.fixed_relative_nugget;
  if (naive) {
    mo.fixed_rho = 1.0;
    mo.mode = MFMode::Recursive;
  }
  m.mf = run_step(8, [&] {
    return mf_fit(X, y, CoarseHandle::from(m.coarse), mo);
  });
  push(m.trace, 8, "fit_mf_residual",
       "{\"n\":" + std::to_string(n) + ",\"d\":" + std::to_string(d) +
           ",\"rho\":" + num(m.mf.rho) + "}");

  if (!rotated) return m;

  MonteCarloOptions mc;
  mc.seed = hash_seed(config.seed, "C9", 0, 0);
  const ASDecomposition dec = run_step(9, [&] {
    return estimate_C(m.mf.fine_residual, CEstimator::MonteCarlo, mc);
  });
  push(m.trace, 9, "estimate_C",
       "{\"n\":" + std::to_string(n) + ",\"d\":" + std::to_string(d) +
           ",\"samples\":" + std::to_string(212 * d) + "}");

  const Eigen::VectorXd resid = y - m.mf.rho * m.mf.coarse_mean_at_fine;
  const std::vector<int> candidates =
      config.r_candidates.empty() ? default_r_candidates(d) : config.r_candidates;
  FitOptions fo;
  fo.bounds = config.bounds;
  fo.n_starts = config.n_starts;
  fo.seed = hash_seed(config.seed, "r10", 0, 0);
  fo.fixed_relative_nugget = config.fixed_relative_nugget;
  const ASGP sel = run_step(10, [&] {
    return select_r(X, resid, dec, candidates, KernelFamily::Matern52, fo);
  });
  MFFitOptions mo2 = mo;
  mo2.seed = hash_seed(config.seed, "mf10", 0, 0);
  mo2.fine_rotation = dec;
  mo2.fine_r = sel.r;
  m.mf = run_step(10, [&] {
    return mf_fit(X, y, CoarseHandle::from(m.coarse), mo2);
  });
  m.r_selected = sel.r;
  push(m.trace, 10, "select_r",
       "{\"n\":" + std::to_string(n) +
           ",\"candidates\":" + std::to_string(candidates.size()) +
           ",\"r\":" + std::to_string(sel.r) + "}");
  return m;
}

ASMFModel asmf_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                   const ASMFConfig& config) {
  return build_variant(X, y, config, ASMFVariant::ASMF);
}

Prediction asmf_predict(const ASMFModel& m, const Eigen::MatrixXd& Xs) {
  return mf_predict(m.mf, Xs);
}

std::string trace_ndjson(const ASMFModel& m) {
  std::string out;
  for (const TraceEntry& t : m.trace) {
    out += "{\"step\":" + std::to_string(t.step) + ",\"name\":\"" + t.name +
           "\",\"info\":" + t.info + "}\n";
  }
  return out;
}

void export_trace_ndjson(const ASMFModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("export_trace_ndjson: cannot open " + path);
  out << trace_ndjson(m);
  if (!out) throw IoError("export_trace_ndjson: write failed for " + path);
}

}  // namespace hdgp
