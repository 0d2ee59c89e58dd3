#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "hdgp/asmf.hpp"

namespace hdgp {

// Benchmark roster. Ref: anisotropic Product Matern GP. Iso: one shared
// lengthscale. Add: first-order additive GP. AS: active-subspace GP with
// selected r. MF / ASMF: two-level models (unrotated / rotated fine level).
// nMF / nASMF: naive rho=1 sums of the same parts.
enum class ModelKind { Ref, Iso, Add, AS, MF, ASMF, nMF, nASMF };

struct ZooOptions {
  int n_starts = 5;
  std::uint64_t seed = 0;
  Bounds bounds;
  bool noiseless = false;         // pin every noise variance at zero
  std::vector<int> r_candidates;  // empty: 1..min(d,10) plus d
};

struct ZooModel {
  ModelKind kind = ModelKind::Ref;
  std::variant<FittedGP, AdditiveGP, ASGP, ASMFModel> impl;
  int r_selected = -1;  // -1: not applicable for this kind
};

const char* model_kind_name(ModelKind kind);  // "Ref", "n-MF", ...
std::optional<ModelKind> model_kind_from_name(const std::string& name);
std::vector<ModelKind> all_model_kinds();

ZooModel fit_model(ModelKind kind, const Eigen::MatrixXd& X,
                   const Eigen::VectorXd& y, const ZooOptions& options);

Prediction model_predict(const ZooModel& model, const Eigen::MatrixXd& Xs);

}  // namespace hdgp
