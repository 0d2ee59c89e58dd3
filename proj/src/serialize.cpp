#include "hdgp/serialize.hpp"

#include <fstream>

#include <json.hpp>

#include "hdgp/errors.hpp"

namespace hdgp {

namespace {

using json = nlohmann::json;

json mat_json(const Eigen::MatrixXd& M) {
  json data = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    for (Eigen::Index j = 0; j < M.cols(); ++j) data.push_back(M(i, j));
  return {{"rows", M.rows()}, {"cols", M.cols()}, {"data", std::move(data)}};
}

Eigen::MatrixXd mat_from(const json& j) {
  const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
  const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw IoError("model JSON: matrix data size mismatch");
  Eigen::MatrixXd M(rows, cols);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j2 = 0; j2 < cols; ++j2) M(i, j2) = data[k++].get<double>();
  return M;
}

json vec_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

Eigen::VectorXd vec_from(const json& j) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i)
    v[i] = j[static_cast<std::size_t>(i)].get<double>();
  return v;
}

json spec_json(const KernelSpec& s) {
  return {{"family", s.family == KernelFamily::Matern52 ? "matern52" : "gaussian"},
          {"composition", s.composition == Composition::Product     ? "product"
                          : s.composition == Composition::Isotropic ? "isotropic"
                                                                    : "additive"},
          {"lengthscales", vec_json(s.lengthscales)},
          {"variance", s.variance},
          {"component_variances", vec_json(s.component_variances)},
          {"dimension", s.dimension}};
}

KernelSpec spec_from(const json& j) {
  KernelSpec s;
  const std::string fam = j.at("family").get<std::string>();
  if (fam == "matern52") s.family = KernelFamily::Matern52;
  else if (fam == "gaussian") s.family = KernelFamily::Gaussian;
  else throw IoError("model JSON: unknown kernel family " + fam);
  const std::string comp = j.at("composition").get<std::string>();
  if (comp == "product") s.composition = Composition::Product;
  else if (comp == "isotropic") s.composition = Composition::Isotropic;
  else if (comp == "additive") s.composition = Composition::AdditiveSum;
  else throw IoError("model JSON: unknown composition " + comp);
  s.lengthscales = vec_from(j.at("lengthscales"));
  s.variance = j.at("variance").get<double>();
  s.component_variances = vec_from(j.at("component_variances"));
  s.dimension = j.at("dimension").get<int>();
  return s;
}

json gp_json(const FittedGP& g) {
  return {{"spec", spec_json(g.spec)},   {"nugget", g.nugget},
          {"jitter", g.jitter},          {"X", mat_json(g.X)},
          {"y", vec_json(g.y)},          {"chol", mat_json(g.chol)},
          {"alpha", vec_json(g.alpha)},  {"log_lik", g.log_lik},
          {"sigma2_hat", g.sigma2_hat}};
}

FittedGP gp_from(const json& j) {
  FittedGP g;
  g.spec = spec_from(j.at("spec"));
  g.nugget = j.at("nugget").get<double>();
  g.jitter = j.at("jitter").get<double>();
  g.X = mat_from(j.at("X"));
  g.y = vec_from(j.at("y"));
  g.chol = mat_from(j.at("chol"));
  g.alpha = vec_from(j.at("alpha"));
  g.log_lik = j.at("log_lik").get<double>();
  g.sigma2_hat = j.at("sigma2_hat").get<double>();
  return g;
}

json additive_json(const AdditiveGP& a) {
  return {{"base", gp_json(a.base)}, {"center", a.center}};
}

AdditiveGP additive_from(const json& j) {
  AdditiveGP a;
  a.base = gp_from(j.at("base"));
  a.center = j.at("center").get<double>();
  return a;
}

json dec_json(const ASDecomposition& d) {
  return {{"C", mat_json(d.C)},
          {"U", mat_json(d.U)},
          {"lambdas", vec_json(d.lambdas)},
          {"center", vec_json(d.center.transpose())}};
}

ASDecomposition dec_from(const json& j) {
  ASDecomposition d;
  d.C = mat_from(j.at("C"));
  d.U = mat_from(j.at("U"));
  d.lambdas = vec_from(j.at("lambdas"));
  d.center = vec_from(j.at("center")).transpose();
  return d;
}

json asgp_json(const ASGP& a) {
  return {{"dec", dec_json(a.dec)},
          {"r", a.r},
          {"inner", gp_json(a.inner)},
          {"log_lik", a.log_lik},
          {"candidate_loglik", a.candidate_loglik},
          {"candidates", a.candidates}};
}

ASGP asgp_from(const json& j) {
  ASGP a;
  a.dec = dec_from(j.at("dec"));
  a.r = j.at("r").get<int>();
  a.inner = gp_from(j.at("inner"));
  a.log_lik = j.at("log_lik").get<double>();
  a.candidate_loglik = j.at("candidate_loglik").get<std::vector<double>>();
  a.candidates = j.at("candidates").get<std::vector<int>>();
  return a;
}

json coarse_json(const CoarseHandle& c) {
  json out = {{"X", mat_json(c.X)}, {"y", vec_json(c.y)}};
  if (const auto* g = std::get_if<FittedGP>(&c.model)) {
    out["type"] = "gp";
    out["model"] = gp_json(*g);
  } else if (const auto* a = std::get_if<AdditiveGP>(&c.model)) {
    out["type"] = "additive";
    out["model"] = additive_json(*a);
  } else {
    out["type"] = "asgp";
    out["model"] = asgp_json(std::get<ASGP>(c.model));
  }
  return out;
}

CoarseHandle coarse_from(const json& j) {
  CoarseHandle c;
  const std::string type = j.at("type").get<std::string>();
  if (type == "gp") c.model = gp_from(j.at("model"));
  else if (type == "additive") c.model = additive_from(j.at("model"));
  else if (type == "asgp") c.model = asgp_from(j.at("model"));
  else throw IoError("model JSON: unknown coarse type " + type);
  c.X = mat_from(j.at("X"));
  c.y = vec_from(j.at("y"));
  return c;
}

json mf_json(const MFModel& m) {
  json out = {{"coarse", coarse_json(m.coarse)},
              {"fine_residual", gp_json(m.fine_residual)},
              {"rho", m.rho},
              {"nested", m.nested},
              {"mode", m.mode == MFMode::Direct ? "direct" : "recursive"},
              {"recursive_is_approximation", m.recursive_is_approximation},
              {"fine_r", m.fine_r},
              {"X_E", mat_json(m.X_E)},
              {"y_E", vec_json(m.y_E)},
              {"coarse_mean_at_fine", vec_json(m.coarse_mean_at_fine)},
              {"has_strict", m.has_strict},
              {"alpha_strict", vec_json(m.alpha_strict)},
              {"fine_rows_in_coarse", m.fine_rows_in_coarse}};
  if (m.fine_rotation) out["fine_rotation"] = dec_json(*m.fine_rotation);
  return out;
}

MFModel mf_from(const json& j) {
  MFModel m;
  m.coarse = coarse_from(j.at("coarse"));
  m.fine_residual = gp_from(j.at("fine_residual"));
  m.rho = j.at("rho").get<double>();
  m.nested = j.at("nested").get<bool>();
  m.mode = j.at("mode").get<std::string>() == "direct" ? MFMode::Direct
                                                       : MFMode::Recursive;
  m.recursive_is_approximation = j.at("recursive_is_approximation").get<bool>();
  m.fine_r = j.at("fine_r").get<int>();
  m.X_E = mat_from(j.at("X_E"));
  m.y_E = vec_from(j.at("y_E"));
  m.coarse_mean_at_fine = vec_from(j.at("coarse_mean_at_fine"));
  m.has_strict = j.at("has_strict").get<bool>();
  m.alpha_strict = vec_from(j.at("alpha_strict"));
  m.fine_rows_in_coarse = j.at("fine_rows_in_coarse").get<std::vector<Eigen::Index>>();
  if (j.contains("fine_rotation")) m.fine_rotation = dec_from(j.at("fine_rotation"));
  return m;
}

json asmf_json(const ASMFModel& m) {
  json trace = json::array();
  for (const TraceEntry& t : m.trace)
    trace.push_back({{"step", t.step}, {"name", t.name}, {"info", t.info}});
  return {{"coarse", additive_json(m.coarse)},
          {"mf", mf_json(m.mf)},
          {"variant", variant_name(m.variant)},
          {"r_selected", m.r_selected},
          {"trace", std::move(trace)}};
}

ASMFModel asmf_from(const json& j) {
  ASMFModel m;
  m.coarse = additive_from(j.at("coarse"));
  m.mf = mf_from(j.at("mf"));
  const std::string v = j.at("variant").get<std::string>();
  if (v == "ASMF") m.variant = ASMFVariant::ASMF;
  else if (v == "MF_full") m.variant = ASMFVariant::MF_full;
  else if (v == "Naive_ASMF") m.variant = ASMFVariant::Naive_ASMF;
  else if (v == "Naive_MF") m.variant = ASMFVariant::Naive_MF;
  else throw IoError("model JSON: unknown variant " + v);
  m.r_selected = j.at("r_selected").get<int>();
  for (const json& t : j.at("trace"))
    m.trace.push_back({t.at("step").get<int>(), t.at("name").get<std::string>(),
                       t.at("info").get<std::string>()});
  return m;
}

}  // namespace

std::string model_to_json(const ZooModel& model) {
  json out;
  out["kind"] = model_kind_name(model.kind);
  out["r_selected"] = model.r_selected;
  if (const auto* g = std::get_if<FittedGP>(&model.impl)) {
    out["type"] = "gp";
    out["model"] = gp_json(*g);
  } else if (const auto* a = std::get_if<AdditiveGP>(&model.impl)) {
    out["type"] = "additive";
    out["model"] = additive_json(*a);
  } else if (const auto* s = std::get_if<ASGP>(&model.impl)) {
    out["type"] = "asgp";
    out["model"] = asgp_json(*s);
  } else {
    out["type"] = "asmf";
    out["model"] = asmf_json(std::get<ASMFModel>(model.impl));
  }
  return out.dump();
}

ZooModel model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(std::string("model JSON: parse failed: ") + e.what());
  }
  try {
    ZooModel m;
    const auto kind = model_kind_from_name(j.at("kind").get<std::string>());
    if (!kind) throw IoError("model JSON: unknown kind");
    m.kind = *kind;
    m.r_selected = j.at("r_selected").get<int>();
    const std::string type = j.at("type").get<std::string>();
    if (type == "gp") m.impl = gp_from(j.at("model"));
    else if (type == "additive") m.impl = additive_from(j.at("model"));
    else if (type == "asgp") m.impl = asgp_from(j.at("model"));
    else if (type == "asmf") m.impl = asmf_from(j.at("model"));
    else throw IoError("model JSON: unknown type " + type);
    return m;
  } catch (const json::exception& e) {
    throw IoError(std::string("model JSON: bad document: ") + e.what());
  }
}

void save_model_json(const ZooModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_model_json: cannot open " + path);
  out << model_to_json(model) << "\n";
  if (!out) throw IoError("save_model_json: write failed for " + path);
}

ZooModel load_model_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_model_json: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return model_from_json(text);
}

}  // namespace hdgp
