#include "hdgp/testbed.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "hdgp/errors.hpp"
#include "hdgp/gp.hpp"
#include "hdgp/optim.hpp"

namespace hdgp {

namespace {

constexpr double kPi = std::numbers::pi;

double branin_fn(const Eigen::RowVectorXd& u) {
  const double x1 = 15.0 * u[0] - 5.0;
  const double x2 = 15.0 * u[1];
  const double b = 5.1 / (4.0 * kPi * kPi);
  const double c = 5.0 / kPi;
  const double t = 1.0 / (8.0 * kPi);
  const double z = x2 - b * x1 * x1 + c * x1 - 6.0;
  return z * z + 10.0 * (1.0 - t) * std::cos(x1) + 10.0;
}

double hartmann3_fn(const Eigen::RowVectorXd& u) {
  static const double alpha[4] = {1.0, 1.2, 3.0, 3.2};
  static const double A[4][3] = {
      {3.0, 10.0, 30.0}, {0.1, 10.0, 35.0}, {3.0, 10.0, 30.0}, {0.1, 10.0, 35.0}};
  static const double P[4][3] = {{0.3689, 0.1170, 0.2673},
                                 {0.4699, 0.4387, 0.7470},
                                 {0.1091, 0.8732, 0.5547},
                                 {0.0381, 0.5743, 0.8828}};
  double f = 0.0;
  for (int i = 0; i < 4; ++i) {
    double e = 0.0;
    for (int j = 0; j < 3; ++j) {
      const double dj = u[j] - P[i][j];
      e += A[i][j] * dj * dj;
    }
    f -= alpha[i] * std::exp(-e);
  }
  return f;
}

double levy_fn(const Eigen::RowVectorXd& u) {
  const int d = static_cast<int>(u.size());
  const auto w = [&](int i) { return 1.0 + (20.0 * u[i] - 10.0 - 1.0) / 4.0; };
  const double s0 = std::sin(kPi * w(0));
  double f = s0 * s0;
  for (int i = 0; i + 1 < d; ++i) {
    const double wi = w(i);
    const double s = std::sin(kPi * wi + 1.0);
    f += (wi - 1.0) * (wi - 1.0) * (1.0 + 10.0 * s * s);
  }
  const double wd = w(d - 1);
  const double sd = std::sin(2.0 * kPi * wd);
  f += (wd - 1.0) * (wd - 1.0) * (1.0 + sd * sd);
  return f;
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

Eigen::MatrixXd uniform_pool(Eigen::Index n, int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::MatrixXd X(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) X(i, j) = unif(rng);
  return X;
}

Eigen::VectorXd gaussian_vector(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = gauss(rng);
  return z;
}

std::string basename_no_ext(const std::string& path) {
  const std::size_t slash = path.find_last_of("/\\");
  std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
  const std::size_t dot = base.find_last_of('.');
  if (dot != std::string::npos && dot > 0) base.resize(dot);
  return base;
}

}  // namespace

double Problem::evaluate(const Eigen::RowVectorXd& x) const {
  if (x.size() != d) throw DimensionError("Problem::evaluate: wrong input dimension");
  if (fn) return fn(x);
  for (Eigen::Index i = 0; i < pool_X.rows(); ++i)
    if (pool_X.row(i) == x) return pool_y[i];
  throw SpecError("Problem::evaluate: " + name + " is realized on its pool only");
}

Problem sobol_g(int d, const Eigen::VectorXd& a) {
  if (d < 1) throw DimensionError("sobol_g: d must be >= 1");
  if (a.size() != d) throw DimensionError("sobol_g: coefficient count != d");
  if ((a.array() < 0.0).any()) throw SpecError("sobol_g: coefficients must be >= 0");
  Problem p;
  p.name = "sobol" + std::to_string(d);
  p.d = d;
  p.fn = [a](const Eigen::RowVectorXd& u) {
    double f = 1.0;
    for (Eigen::Index i = 0; i < a.size(); ++i)
      f *= (std::abs(4.0 * u[i] - 2.0) + a[i]) / (1.0 + a[i]);
    return f;
  };
  return p;
}

Problem analytic_function(const std::string& name, int d) {
  const std::string key = lower(name);
  Problem p;
  p.d = d;
  if (key == "branin") {
    if (d != 2) throw DimensionError("branin is 2-dimensional");
    p.name = "branin";
    p.fn = branin_fn;
  } else if (key == "hartmann3") {
    if (d != 3) throw DimensionError("hartmann3 is 3-dimensional");
    p.name = "hartmann3";
    p.fn = hartmann3_fn;
  } else if (key == "levy") {
    if (d < 1) throw DimensionError("levy: d must be >= 1");
    p.name = "levy" + std::to_string(d);
    p.fn = levy_fn;
  } else if (key == "sobol") {
    Eigen::VectorXd a(d);
    for (int i = 0; i < d; ++i) a[i] = 0.5 * i;
    return sobol_g(d, a);
  } else {
    throw SpecError("analytic_function: unknown name " + name);
  }
  return p;
}

Problem gp_draw(int d, const KernelSpec& spec, int n_points, std::uint64_t seed,
                bool additive) {
  if (d < 1) throw DimensionError("gp_draw: d must be >= 1");
  if (n_points < 1) throw SpecError("gp_draw: n_points must be >= 1");
  if (spec.dimension != d) throw DimensionError("gp_draw: spec dimension != d");
  validate_spec(spec);

  Problem p;
  p.name = (additive ? "addgpdraw" : "gpdraw") + std::to_string(d);
  p.d = d;
  p.provenance = Provenance::GPDraw;
  p.seed = seed;
  p.pool_X = uniform_pool(n_points, d, hash_seed(seed, "pool", d, n_points));
  p.pool_y.setZero(n_points);
  if (!additive) {
    Eigen::MatrixXd K = kernel_matrix(spec, p.pool_X, 0.0);
    const detail::CholFactor F =
        detail::chol_with_jitter(std::move(K), variance_normalization(spec));
    p.pool_y = F.L * gaussian_vector(n_points, hash_seed(seed, "draw", 0, 0));
  } else {
    for (int i = 0; i < d; ++i) {
      const double alpha = spec.composition == Composition::AdditiveSum
                               ? spec.component_variances[i]
                               : spec.variance / d;
      const KernelSpec one = KernelSpec::product(
          spec.family, Eigen::VectorXd::Constant(1, spec.theta(i)), alpha);
      Eigen::MatrixXd K = kernel_matrix(one, p.pool_X.col(i), 0.0);
      const detail::CholFactor F = detail::chol_with_jitter(std::move(K), alpha);
      p.pool_y += F.L * gaussian_vector(n_points, hash_seed(seed, "draw", i, 1));
    }
  }
  return p;
}

Problem embed(const Problem& inner, int d_outer, EmbedKind kind,
              std::uint64_t seed) {
  if (!inner.fn)
    throw SpecError("embed: inner problem must evaluate anywhere, not pool-only");
  if (d_outer < inner.d) throw DimensionError("embed: d_outer < inner dimension");
  const int de = inner.d;

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d_outer, de);
  std::string tag;
  std::mt19937_64 rng(hash_seed(seed, "embed", d_outer, de));
  if (kind == EmbedKind::Orthonormal) {
    tag = "orth";
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd G(d_outer, de);
    for (int i = 0; i < d_outer; ++i)
      for (int j = 0; j < de; ++j) G(i, j) = gauss(rng);
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
    A = qr.householderQ() * Eigen::MatrixXd::Identity(d_outer, de);
  } else if (kind == EmbedKind::Hashing) {
    tag = "hash";
    std::uniform_int_distribution<int> col(0, de - 1);
    std::uniform_int_distribution<int> coin(0, 1);
    for (int i = 0; i < d_outer; ++i) A(i, col(rng)) = coin(rng) ? 1.0 : -1.0;
  } else {
    tag = "pad";
    A.topRows(de).setIdentity();
  }

  Eigen::VectorXd span = A.cwiseAbs().colwise().sum();  // range of A^T u over the cube
  Problem p;
  p.name = inner.name + "_" + tag + std::to_string(d_outer);
  p.d = d_outer;
  p.provenance = Provenance::Embedded;
  p.seed = seed;
  p.embed_A = A;
  p.fn = [inner, A, span](const Eigen::RowVectorXd& x) {
    const Eigen::VectorXd u = (2.0 * x.array() - 1.0).matrix().transpose();
    const Eigen::VectorXd zraw = A.transpose() * u;
    Eigen::RowVectorXd z(zraw.size());
    for (Eigen::Index j = 0; j < zraw.size(); ++j) {
      const double v = span[j] > 0.0 ? (zraw[j] + span[j]) / (2.0 * span[j]) : 0.5;
      z[j] = std::clamp(v, 0.0, 1.0);
    }
    return inner.evaluate(z);
  };
  return p;
}

Problem addgp_hartmann3(int d, int n_points, std::uint64_t seed) {
  if (d < 3) throw DimensionError("addgp_hartmann3: d must be >= 3");
  const KernelSpec spec = KernelSpec::additive(
      KernelFamily::Matern52, Eigen::VectorXd::Constant(d, 0.5),
      Eigen::VectorXd::Constant(d, 1.0 / d));
  Problem draw = gp_draw(d, spec, n_points, hash_seed(seed, "adddraw", 0, 0), true);
  const Problem emb = embed(analytic_function("hartmann3", 3), d,
                            EmbedKind::Orthonormal, hash_seed(seed, "h3", 0, 0));
  for (Eigen::Index i = 0; i < draw.pool_X.rows(); ++i)
    draw.pool_y[i] += emb.evaluate(draw.pool_X.row(i));
  draw.name = "addgp_hartmann3";
  draw.seed = seed;
  draw.embed_A = emb.embed_A;
  return draw;
}

Problem ingest_csv(const std::string& path, const std::string& target_column) {
  std::ifstream in(path);
  if (!in) throw IoError("ingest_csv: cannot open " + path);

  const auto split_line = [](const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    std::stringstream ss(line);
    while (std::getline(ss, cur, ',')) fields.push_back(cur);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
  };
  const auto trim = [](std::string s) {
    while (!s.empty() && (std::isspace(static_cast<unsigned char>(s.back())) || s.back() == '\r'))
      s.pop_back();
    std::size_t i = 0;
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    return s.substr(i);
  };

  std::string line;
  if (!std::getline(in, line)) throw IoError("ingest_csv: empty file " + path);
  std::vector<std::string> header = split_line(line);
  for (std::string& h : header) h = trim(h);
  const std::size_t ncol = header.size();
  std::ptrdiff_t target = -1;
  for (std::size_t j = 0; j < ncol; ++j)
    if (header[j] == target_column) target = static_cast<std::ptrdiff_t>(j);
  if (target < 0)
    throw IoError("ingest_csv: target column '" + target_column + "' not in header");
  if (ncol < 2) throw IoError("ingest_csv: need at least one feature column");

  std::vector<std::vector<double>> rows;
  std::size_t dropped = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> fields = split_line(line);
    if (fields.size() != ncol)
      throw IoError("ingest_csv: row with " + std::to_string(fields.size()) +
                    " fields, expected " + std::to_string(ncol));
    std::vector<double> row(ncol);
    bool missing = false;
    for (std::size_t j = 0; j < ncol && !missing; ++j) {
      const std::string f = trim(fields[j]);
      const std::string fl = lower(f);
      if (f.empty() || fl == "na" || fl == "nan" || fl == "null" || fl == "?") {
        missing = true;
        break;
      }
      char* end = nullptr;
      row[j] = std::strtod(f.c_str(), &end);
      if (end != f.c_str() + f.size())
        throw IoError("ingest_csv: non-numeric value '" + f + "' in column " + header[j]);
    }
    if (missing) {
      ++dropped;
      continue;
    }
    rows.push_back(std::move(row));
  }
  if (dropped > 0)
    std::fprintf(stderr, "ingest_csv: dropped %zu row(s) with missing values\n", dropped);
  if (rows.empty()) throw DegenerateDataError("ingest_csv: no usable rows in " + path);

  Problem p;
  p.name = basename_no_ext(path);
  p.d = static_cast<int>(ncol) - 1;
  p.provenance = Provenance::Dataset;
  p.path = path;
  p.pool_X.resize(static_cast<Eigen::Index>(rows.size()), p.d);
  p.pool_y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    int k = 0;
    for (std::size_t j = 0; j < ncol; ++j) {
      if (static_cast<std::ptrdiff_t>(j) == target)
        p.pool_y[static_cast<Eigen::Index>(i)] = rows[i][j];
      else
        p.pool_X(static_cast<Eigen::Index>(i), k++) = rows[i][j];
    }
  }
  return p;
}

Split make_split(const Problem& problem, int n_train, std::uint64_t seed) {
  if (n_train < 1) throw SpecError("make_split: n_train must be >= 1");
  Eigen::MatrixXd PX;
  Eigen::VectorXd PY;
  if (problem.pool_backed()) {
    PX = problem.pool_X;
    PY = problem.pool_y;
  } else {
    const Eigen::Index N = 1000;
    PX = uniform_pool(N, problem.d, hash_seed(seed, "pool", problem.d, N));
    PY.resize(N);
    for (Eigen::Index i = 0; i < N; ++i) PY[i] = problem.evaluate(PX.row(i));
  }
  const Eigen::Index n = PX.rows();
  if (n_train >= n)
    throw SpecError("make_split: n_train must leave at least one test row");

  const std::vector<Eigen::Index> tr = sample_without_replacement(
      n, n_train, hash_seed(seed, "split", static_cast<std::uint64_t>(n),
                            static_cast<std::uint64_t>(n_train)));
  std::vector<char> in_train(static_cast<std::size_t>(n), 0);
  for (Eigen::Index i : tr) in_train[static_cast<std::size_t>(i)] = 1;

  Split s;
  s.X_train.resize(n_train, problem.d);
  s.y_train.resize(n_train);
  s.X_test.resize(n - n_train, problem.d);
  s.y_test.resize(n - n_train);
  Eigen::Index a = 0, b = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (in_train[static_cast<std::size_t>(i)]) {
      s.X_train.row(a) = PX.row(i);
      s.y_train[a++] = PY[i];
    } else {
      s.X_test.row(b) = PX.row(i);
      s.y_test[b++] = PY[i];
    }
  }

  if (problem.provenance == Provenance::Dataset) {
    const Eigen::RowVectorXd mn = s.X_train.colwise().minCoeff();
    const Eigen::RowVectorXd mx = s.X_train.colwise().maxCoeff();
    for (int j = 0; j < problem.d; ++j) {
      const double range = mx[j] - mn[j];
      if (range > 0.0) {
        s.X_train.col(j) = (s.X_train.col(j).array() - mn[j]) / range;
        s.X_test.col(j) = (s.X_test.col(j).array() - mn[j]) / range;
      } else {
        s.X_train.col(j).setConstant(0.5);
        s.X_test.col(j).setConstant(0.5);
      }
    }
  }

  s.y_mean = s.y_train.mean();
  s.y_sd = std::sqrt((s.y_train.array() - s.y_mean).square().sum() /
                     static_cast<double>(n_train));
  if (s.y_sd == 0.0)
    throw DegenerateDataError("make_split: constant training responses");
  s.y_train = ((s.y_train.array() - s.y_mean) / s.y_sd).matrix();
  s.y_test = ((s.y_test.array() - s.y_mean) / s.y_sd).matrix();
  return s;
}

std::vector<std::string> registry_names() {
  return {"branin",          "hartmann3",        "levy10",
          "levy20",          "sobol8",           "hartmann3_orth8",
          "hartmann3_orth15", "branin_hash10",   "gpdraw8",
          "addgpdraw8",      "addgp_hartmann3"};
}

Problem make_registry_problem(const std::string& name, std::uint64_t seed) {
  if (name == "branin") return analytic_function("branin", 2);
  if (name == "hartmann3") return analytic_function("hartmann3", 3);
  if (name == "levy10") return analytic_function("levy", 10);
  if (name == "levy20") return analytic_function("levy", 20);
  if (name == "sobol8") return analytic_function("sobol", 8);
  if (name == "hartmann3_orth8")
    return embed(analytic_function("hartmann3", 3), 8, EmbedKind::Orthonormal,
                 hash_seed(seed, "emb", 8, 3));
  if (name == "hartmann3_orth15")
    return embed(analytic_function("hartmann3", 3), 15, EmbedKind::Orthonormal,
                 hash_seed(seed, "emb", 15, 3));
  if (name == "branin_hash10")
    return embed(analytic_function("branin", 2), 10, EmbedKind::Hashing,
                 hash_seed(seed, "emb", 10, 2));
  if (name == "gpdraw8")
    return gp_draw(8, KernelSpec::product(KernelFamily::Matern52,
                                          Eigen::VectorXd::Constant(8, 0.5), 1.0),
                   1000, seed, false);
  if (name == "addgpdraw8")
    return gp_draw(8, KernelSpec::additive(KernelFamily::Matern52,
                                           Eigen::VectorXd::Constant(8, 0.5),
                                           Eigen::VectorXd::Constant(8, 0.125)),
                   1000, seed, true);
  if (name == "addgp_hartmann3") return addgp_hartmann3(8, 1000, seed);
  throw SpecError("make_registry_problem: unknown problem " + name);
}

}  // namespace hdgp
