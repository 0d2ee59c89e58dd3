#include "hdgp/optim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <random>
#include <vector>

#include "hdgp/errors.hpp"

namespace hdgp {

namespace {

Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigen::VectorXd& lo,
                        const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

}  // namespace

LbfgsResult minimize_lbfgs(const ObjectiveFn& fn, Eigen::VectorXd x0, const Eigen::VectorXd& lo,
                           const Eigen::VectorXd& hi, const LbfgsOptions& opts) {
  const Eigen::Index n = x0.size();
  if (lo.size() != n || hi.size() != n)
    throw DimensionError("minimize_lbfgs: bound sizes do not match x0");

  Eigen::VectorXd x = project(std::move(x0), lo, hi);
  Eigen::VectorXd g(n);
  double f = fn(x, &g);

  std::deque<Eigen::VectorXd> ss, ys;
  std::deque<double> rhos;

  LbfgsResult res;
  res.converged = false;
  int it = 0;
  for (; it < opts.max_iters; ++it) {
    // Projected gradient as the stationarity measure.
    const Eigen::VectorXd pg = x - project(x - g, lo, hi);
    if (pg.lpNorm<Eigen::Infinity>() <= opts.grad_tol) {
      res.converged = true;
      break;
    }

    // Two-loop recursion.
    Eigen::VectorXd q = g;
    std::vector<double> alpha(ss.size());
    for (int i = static_cast<int>(ss.size()) - 1; i >= 0; --i) {
      alpha[i] = rhos[i] * ss[i].dot(q);
      q -= alpha[i] * ys[i];
    }
    if (!ss.empty()) {
      const double gamma = ss.back().dot(ys.back()) / ys.back().squaredNorm();
      q *= gamma;
    }
    for (std::size_t i = 0; i < ss.size(); ++i) {
      const double beta = rhos[i] * ys[i].dot(q);
      q += (alpha[i] - beta) * ss[i];
    }
    Eigen::VectorXd dir = -q;
    if (!(dir.dot(g) < 0.0)) dir = -g;  // fall back to steepest descent

    // Armijo backtracking along the projection arc.
    double step = 1.0;
    const double c1 = 1e-4;
    Eigen::VectorXd x_new;
    double f_new = f;
    bool accepted = false;
    for (int ls = 0; ls < 50; ++ls) {
      x_new = project(x + step * dir, lo, hi);
      const Eigen::VectorXd dx = x_new - x;
      if (dx.lpNorm<Eigen::Infinity>() == 0.0) break;
      f_new = fn(x_new, nullptr);
      if (std::isfinite(f_new) && f_new <= f + c1 * g.dot(dx)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      res.converged = true;  // no progress possible along any tried step
      break;
    }

    Eigen::VectorXd g_new(n);
    const double f_check = fn(x_new, &g_new);
    (void)f_check;

    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd yv = g_new - g;
    const double sy = s.dot(yv);
    if (sy > 1e-10 * s.norm() * yv.norm()) {
      ss.push_back(s);
      ys.push_back(yv);
      rhos.push_back(1.0 / sy);
      if (static_cast<int>(ss.size()) > opts.memory) {
        ss.pop_front();
        ys.pop_front();
        rhos.pop_front();
      }
    }

    const double df = f - f_new;
    x = std::move(x_new);
    g = std::move(g_new);
    f = f_new;
    if (df <= opts.f_tol * (std::abs(f) + 1.0)) {
      ++it;
      res.converged = true;
      break;
    }
  }

  res.x = std::move(x);
  res.f = f;
  res.iters = it;
  return res;
}

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t hash_seed(std::uint64_t seed, const std::string& tag, std::uint64_t a,
                        std::uint64_t b) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the tag
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t out = mix64(seed ^ h);
  out = mix64(out ^ a);
  out = mix64(out ^ b);
  return out;
}

std::vector<Eigen::Index> sample_without_replacement(Eigen::Index n, Eigen::Index k,
                                                     std::uint64_t seed) {
  if (k < 0 || k > n) throw SpecError("sample_without_replacement: k out of range");
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  for (Eigen::Index i = 0; i < k; ++i) {
    std::uniform_int_distribution<Eigen::Index> pick(i, n - 1);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
  }
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace hdgp
