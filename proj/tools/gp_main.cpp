#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hdgp/errors.hpp"
#include "hdgp/serialize.hpp"
#include "hdgp/testbed.hpp"

namespace {

using json = nlohmann::json;

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw hdgp::IoError("cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::string> header_fields(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw hdgp::IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw hdgp::IoError("empty file " + path);
  std::vector<std::string> fields;
  std::string cur;
  std::stringstream ss(line);
  while (std::getline(ss, cur, ',')) {
    while (!cur.empty() && (cur.back() == '\r' || cur.back() == ' ')) cur.pop_back();
    fields.push_back(cur);
  }
  return fields;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int run_fit(const std::string& data, const std::string& target,
            const std::string& model_name, const std::string& out_path,
            std::uint64_t seed, int n_starts) {
  const auto kind = hdgp::model_kind_from_name(model_name);
  if (!kind) {
    std::cerr << "error: unknown model '" << model_name << "' (expected one of";
    for (hdgp::ModelKind k : hdgp::all_model_kinds())
      std::cerr << " " << hdgp::model_kind_name(k);
    std::cerr << ")\n";
    return 1;
  }

  const hdgp::Problem prob = hdgp::ingest_csv(data, target);
  std::vector<std::string> features;
  for (const std::string& h : header_fields(data))
    if (h != target) features.push_back(h);

  // Fit on the whole file: inputs min-max scaled to [0,1], responses centered
  // to unit variance. The transform rides along in the model document.
  Eigen::MatrixXd X = prob.pool_X;
  const Eigen::RowVectorXd mn = X.colwise().minCoeff();
  const Eigen::RowVectorXd mx = X.colwise().maxCoeff();
  Eigen::RowVectorXd range = mx - mn;
  for (int j = 0; j < prob.d; ++j) {
    if (range[j] > 0.0)
      X.col(j) = (X.col(j).array() - mn[j]) / range[j];
    else {
      X.col(j).setConstant(0.5);
      range[j] = 1.0;
    }
  }
  const double y_mean = prob.pool_y.mean();
  const double y_sd = std::sqrt((prob.pool_y.array() - y_mean).square().sum() /
                                static_cast<double>(prob.pool_y.size()));
  if (y_sd == 0.0) throw hdgp::DegenerateDataError("constant target column");
  const Eigen::VectorXd y = ((prob.pool_y.array() - y_mean) / y_sd).matrix();

  hdgp::ZooOptions zo;
  zo.seed = seed;
  zo.n_starts = n_starts;
  const hdgp::ZooModel model = hdgp::fit_model(*kind, X, y, zo);

  json doc;
  doc["model"] = json::parse(hdgp::model_to_json(model));
  doc["transform"] = {{"x_min", std::vector<double>(mn.data(), mn.data() + prob.d)},
                      {"x_range", std::vector<double>(range.data(), range.data() + prob.d)},
                      {"y_mean", y_mean},
                      {"y_sd", y_sd}};
  doc["features"] = features;
  std::ofstream out(out_path);
  if (!out) throw hdgp::IoError("cannot open " + out_path);
  out << doc.dump() << "\n";
  return 0;
}

int run_predict(const std::string& model_path, const std::string& data,
                const std::string& out_path) {
  json doc;
  try {
    doc = json::parse(slurp(model_path));
  } catch (const json::exception& e) {
    throw hdgp::IoError(std::string("model file: ") + e.what());
  }
  const hdgp::ZooModel model = hdgp::model_from_json(doc.at("model").dump());
  const std::vector<std::string> features =
      doc.at("features").get<std::vector<std::string>>();
  const std::vector<double> x_min = doc.at("transform").at("x_min").get<std::vector<double>>();
  const std::vector<double> x_range =
      doc.at("transform").at("x_range").get<std::vector<double>>();
  const double y_mean = doc.at("transform").at("y_mean").get<double>();
  const double y_sd = doc.at("transform").at("y_sd").get<double>();

  const std::vector<std::string> header = header_fields(data);
  std::vector<int> where(features.size(), -1);
  for (std::size_t j = 0; j < features.size(); ++j) {
    for (std::size_t h = 0; h < header.size(); ++h)
      if (header[h] == features[j]) where[j] = static_cast<int>(h);
    if (where[j] < 0)
      throw hdgp::IoError("prediction data lacks feature column '" + features[j] + "'");
  }

  std::ifstream in(data);
  std::string line;
  std::getline(in, line);  // header
  std::vector<std::vector<double>> rows;
  std::size_t dropped = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> fields;
    std::string cur;
    std::stringstream ss(line);
    while (std::getline(ss, cur, ',')) {
      while (!cur.empty() && (cur.back() == '\r' || cur.back() == ' ')) cur.pop_back();
      fields.push_back(cur);
    }
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    std::vector<double> row(features.size());
    bool missing = false;
    for (std::size_t j = 0; j < features.size(); ++j) {
      if (where[j] >= static_cast<int>(fields.size())) throw hdgp::IoError("short row");
      const std::string& f = fields[static_cast<std::size_t>(where[j])];
      if (f.empty()) {
        missing = true;
        break;
      }
      char* end = nullptr;
      row[j] = std::strtod(f.c_str(), &end);
      if (end != f.c_str() + f.size())
        throw hdgp::IoError("non-numeric value '" + f + "'");
    }
    if (missing) {
      ++dropped;
      continue;
    }
    rows.push_back(std::move(row));
  }
  if (dropped > 0)
    std::cerr << "warning: dropped " << dropped << " row(s) with missing values\n";

  Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(features.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < features.size(); ++j)
      X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          x_range[j] > 0.0 ? (rows[i][j] - x_min[j]) / x_range[j] : 0.5;

  const hdgp::Prediction pred = hdgp::model_predict(model, X);
  std::ofstream out(out_path);
  if (!out) throw hdgp::IoError("cannot open " + out_path);
  out << "mean,variance\n";
  for (Eigen::Index i = 0; i < pred.mean.size(); ++i)
    out << fmt(y_mean + y_sd * pred.mean[i]) << ','
        << fmt(y_sd * y_sd * pred.variance[i]) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fit and apply single models from CSV data"};
  app.require_subcommand(1);

  std::string data, target, model_name, out_path, model_path;
  std::uint64_t seed = 0;
  int n_starts = 5;

  CLI::App* fit = app.add_subcommand("fit", "Fit a model to a CSV file");
  fit->add_option("--data", data, "training CSV")->required()->check(CLI::ExistingFile);
  fit->add_option("--target", target, "target column name")->required();
  fit->add_option("--model", model_name, "model name (Ref, Iso, Add, AS, MF, ASMF, n-MF, n-ASMF)")
      ->required();
  fit->add_option("--out", out_path, "output model JSON")->required();
  fit->add_option("--seed", seed, "fit seed");
  fit->add_option("--n-starts", n_starts, "multi-start count")->check(CLI::PositiveNumber);

  CLI::App* predict = app.add_subcommand("predict", "Predict with a saved model");
  predict->add_option("--model", model_path, "model JSON from 'fit'")
      ->required()
      ->check(CLI::ExistingFile);
  predict->add_option("--data", data, "CSV with the feature columns")
      ->required()
      ->check(CLI::ExistingFile);
  predict->add_option("--out", out_path, "output CSV (mean,variance)")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (fit->parsed())
      return run_fit(data, target, model_name, out_path, seed, n_starts);
    return run_predict(model_path, data, out_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
