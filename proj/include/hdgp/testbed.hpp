#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hdgp/kernels.hpp"

namespace hdgp {

enum class Provenance { Analytic, GPDraw, Embedded, Dataset };
enum class EmbedKind { Orthonormal, Hashing, IdentityPadding };

// Benchmark function on the unit hypercube. Analytic and embedded problems
// evaluate anywhere; GP draws and datasets are realized over a finite pool
// and evaluate only at pool locations (exact match).
struct Problem {
  std::string name;
  int d = 0;
  Provenance provenance = Provenance::Analytic;
  std::uint64_t seed = 0;  // draw / embedding-matrix seed
  std::string path;        // dataset source file
  std::function<double(const Eigen::RowVectorXd&)> fn;
  Eigen::MatrixXd pool_X;
  Eigen::VectorXd pool_y;
  Eigen::MatrixXd embed_A;  // d x d_inner matrix actually used

  bool pool_backed() const { return pool_X.rows() > 0; }
  double evaluate(const Eigen::RowVectorXd& x) const;
};

// branin (d=2), hartmann3 (d=3), levy (any d >= 1), sobol (any d >= 1, with
// default coefficients a_i = (i-1)/2). Domains are rescaled to [0,1]^d.
Problem analytic_function(const std::string& name, int d);

// Sobol g-function with explicit coefficients.
Problem sobol_g(int d, const Eigen::VectorXd& a);

// Single sample path of a zero-mean GP realized jointly at n_points uniform
// locations. additive=true instead sums d independent 1-D draws, one per
// coordinate, splitting the process variance evenly unless spec is an
// AdditiveSum carrying explicit component variances.
Problem gp_draw(int d, const KernelSpec& spec, int n_points, std::uint64_t seed,
                bool additive);

// evaluate(x) = inner(clip(affine(A^T (2x - 1)))): each inner coordinate is
// mapped from its theoretical range over the outer cube onto [0,1], then
// clamped. Orthonormal: thin Q of a standard-normal d_outer x d_inner matrix.
// Hashing: one random +-1 entry per row. IdentityPadding: test hook, identity
// on the first d_inner rows.
Problem embed(const Problem& inner, int d_outer, EmbedKind kind,
              std::uint64_t seed);

// First-order additive GP draw plus Hartmann3 behind a seeded orthonormal
// embedding, both realized over one shared pool.
Problem addgp_hartmann3(int d, int n_points, std::uint64_t seed);

// Header row, comma-separated, UTF-8, numeric columns only. Rows with missing
// values are dropped with a count warning on stderr.
Problem ingest_csv(const std::string& path, const std::string& target_column);

struct Split {
  Eigen::MatrixXd X_train, X_test;
  Eigen::VectorXd y_train, y_test;
  double y_mean = 0.0;  // training statistics behind the y scaling
  double y_sd = 1.0;
};

// Deterministic train/test partition of the problem's location pool (1000
// fresh uniform points for problems without one). y is centered and scaled to
// unit variance by training statistics, applied to both halves; dataset
// inputs are min-max scaled to [0,1]^d by training statistics.
Split make_split(const Problem& problem, int n_train, std::uint64_t seed);

// Registered benchmark problems buildable by name; pool-backed entries are
// realized with the given seed.
std::vector<std::string> registry_names();
Problem make_registry_problem(const std::string& name, std::uint64_t seed);

}  // namespace hdgp
