#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hdgp/additive.hpp"
#include "hdgp/multifidelity.hpp"

namespace hdgp {

enum class ASMFVariant { ASMF, MF_full, Naive_ASMF, Naive_MF };

struct ASMFConfig {
  double p = 0.8;                // subsample fraction for the guard refit
  double guard_threshold = 0.01;
  std::vector<int> r_candidates;  // empty: 1..min(d,10) plus d
  int n_starts = 5;
  std::uint64_t seed = 0;
  Bounds bounds;
  // Noiseless / fixed-noise runs: absolute coarse noise variance and relative
  // fine nugget, both fitted when unset.
  std::optional<double> fix_coarse_nugget;
  std::optional<double> fixed_relative_nugget;
};

// One executed pipeline stage, numbered as in the construction algorithm.
struct TraceEntry {
  int step = 0;
  std::string name;
  std::string info;  // compact JSON object with input shapes / stage results
};

struct ASMFModel {
  AdditiveGP coarse;
  MFModel mf;
  ASMFVariant variant = ASMFVariant::ASMF;
  int r_selected = 0;  // 0 when the fine level is unrotated
  std::vector<TraceEntry> trace;
};

// Full pipeline on a single design (the fine level keeps every point even
// when the coarse refit drops some): additive coarse fit with interpolation
// guard, joint residual MF fit, active-subspace estimation on the residual
// model, r selection, final rotated refit. Stage failures are rethrown with
// the step number prefixed to the message.
ASMFModel asmf_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                   const ASMFConfig& config);

// ASMF runs everything; MF_full stops after the unrotated joint fit;
// Naive_* pin rho = 1 and predict as an independent sum of the two levels.
ASMFModel build_variant(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        const ASMFConfig& config, ASMFVariant variant);

Prediction asmf_predict(const ASMFModel& m, const Eigen::MatrixXd& Xs);

const char* variant_name(ASMFVariant v);

// One JSON object per line, in execution order.
std::string trace_ndjson(const ASMFModel& m);
void export_trace_ndjson(const ASMFModel& m, const std::string& path);

}  // namespace hdgp
