#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace hdgp {

// Objective callback: returns f(x) and, when grad != nullptr, fills the
// gradient. Must tolerate any x inside the box.
using ObjectiveFn = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct LbfgsOptions {
  int max_iters = 200;
  int memory = 8;
  double grad_tol = 1e-6;   // projected-gradient infinity norm
  double f_tol = 1e-11;     // relative decrease per step
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  int iters = 0;
  bool converged = false;
};

// Box-constrained minimization: L-BFGS directions with projection onto
// [lo, hi] and Armijo backtracking along the projection arc.
LbfgsResult minimize_lbfgs(const ObjectiveFn& fn, Eigen::VectorXd x0,
                           const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                           const LbfgsOptions& opts = {});

// SplitMix64 finalizer; the basis for all derived seeds.
std::uint64_t mix64(std::uint64_t z);

// Order-sensitive seed derivation for (config seed, problem, n, replicate) style keys.
std::uint64_t hash_seed(std::uint64_t seed, const std::string& tag, std::uint64_t a,
                        std::uint64_t b);

// First k entries of a seeded uniform permutation of 0..n-1, sorted ascending.
std::vector<Eigen::Index> sample_without_replacement(Eigen::Index n, Eigen::Index k,
                                                     std::uint64_t seed);

}  // namespace hdgp
