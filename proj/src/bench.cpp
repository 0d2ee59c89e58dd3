#include "hdgp/bench.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <thread>

#include <json.hpp>

#include "hdgp/errors.hpp"
#include "hdgp/metrics.hpp"
#include "hdgp/optim.hpp"

namespace hdgp {

namespace {

using json = nlohmann::json;

constexpr const char* kHeader =
    "problem,d,n,replicate,model,rmse,score,r_selected,wall_clock_s,seed,error";

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

// One CSV record; handles quoted fields (the error column may carry commas).
std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

// Type-7 quantile (linear interpolation) of an already sorted vector.
double quantile7(const std::vector<double>& sorted, double q) {
  const std::size_t m = sorted.size();
  if (m == 1) return sorted[0];
  const double h = (static_cast<double>(m) - 1.0) * q;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, m - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

struct Cell {
  std::size_t problem_idx;
  int n;
  int replicate;
  ModelKind kind;
};

}  // namespace

BenchConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(std::string("config: parse failed: ") + e.what());
  }

  BenchConfig cfg;
  try {
    if (!j.contains("problems") || !j["problems"].is_array() || j["problems"].empty())
      throw SpecError("config: 'problems' must be a non-empty array");
    for (const json& p : j["problems"]) {
      ProblemDescriptor d;
      if (p.is_string()) {
        d.name = p.get<std::string>();
        const auto names = registry_names();
        if (std::find(names.begin(), names.end(), d.name) == names.end())
          throw SpecError("config: unknown registry problem '" + d.name + "'");
      } else if (p.is_object()) {
        d.csv = p.at("csv").get<std::string>();
        d.target = p.at("target").get<std::string>();
        d.name = p.contains("name") ? p["name"].get<std::string>() : [&] {
          const std::size_t slash = d.csv.find_last_of("/\\");
          std::string base = slash == std::string::npos ? d.csv : d.csv.substr(slash + 1);
          const std::size_t dot = base.find_last_of('.');
          if (dot != std::string::npos && dot > 0) base.resize(dot);
          return base;
        }();
      } else {
        throw SpecError("config: each problem must be a name or a {csv,target} object");
      }
      cfg.problems.push_back(std::move(d));
    }
    if (j.contains("budgets")) {
      cfg.budgets = j["budgets"].get<std::vector<int>>();
      if (cfg.budgets.empty()) throw SpecError("config: 'budgets' must be non-empty");
    }
    for (int b : cfg.budgets)
      if (b < 1 || b > 500)
        throw SpecError("config: budgets must lie in [1, 500]");
    if (j.contains("models")) {
      cfg.models.clear();
      for (const json& m : j["models"]) {
        const auto kind = model_kind_from_name(m.get<std::string>());
        if (!kind) throw SpecError("config: unknown model '" + m.get<std::string>() + "'");
        cfg.models.push_back(*kind);
      }
      if (cfg.models.empty()) throw SpecError("config: 'models' must be non-empty");
    }
    if (j.contains("replicates")) cfg.replicates = j["replicates"].get<int>();
    if (cfg.replicates < 1) throw SpecError("config: replicates must be >= 1");
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("score_floor")) cfg.score_floor = j["score_floor"].get<double>();
    if (j.contains("n_starts")) cfg.n_starts = j["n_starts"].get<int>();
    if (cfg.n_starts < 1) throw SpecError("config: n_starts must be >= 1");
    if (j.contains("r_candidates"))
      cfg.r_candidates = j["r_candidates"].get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw IoError(std::string("config: bad document: ") + e.what());
  }
  return cfg;
}

std::vector<BenchRow> run_bench(const BenchConfig& config, int jobs) {
  std::map<std::string, Problem> datasets;
  for (const ProblemDescriptor& p : config.problems)
    if (!p.csv.empty() && !datasets.count(p.name))
      datasets.emplace(p.name, ingest_csv(p.csv, p.target));

  std::vector<Cell> cells;
  for (std::size_t pi = 0; pi < config.problems.size(); ++pi)
    for (int n : config.budgets)
      for (int rep = 0; rep < config.replicates; ++rep)
        for (ModelKind kind : config.models)
          cells.push_back({pi, n, rep, kind});

  std::vector<BenchRow> rows(cells.size());
  const auto work = [&](std::size_t i) {
    const Cell& c = cells[i];
    const ProblemDescriptor& desc = config.problems[c.problem_idx];
    BenchRow& row = rows[i];
    row.problem = desc.name;
    row.n = c.n;
    row.replicate = c.replicate;
    row.model = model_kind_name(c.kind);
    const std::uint64_t rep_seed =
        hash_seed(config.seed, desc.name, static_cast<std::uint64_t>(c.n),
                  static_cast<std::uint64_t>(c.replicate));
    row.seed = rep_seed;
    try {
      const Problem prob = desc.csv.empty()
                               ? make_registry_problem(desc.name, rep_seed)
                               : datasets.at(desc.name);
      row.d = prob.d;
      const Split split = make_split(prob, c.n, rep_seed);
      ZooOptions zo;
      zo.n_starts = config.n_starts;
      zo.seed = hash_seed(rep_seed, row.model, 0, 0);
      zo.r_candidates = config.r_candidates;
      const auto t0 = std::chrono::steady_clock::now();
      const ZooModel model = fit_model(c.kind, split.X_train, split.y_train, zo);
      const Prediction pred = model_predict(model, split.X_test);
      row.wall_clock_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      row.rmse = rmse(split.y_test, pred.mean);
      row.score = score(split.y_test, pred);
      row.r_selected = model.r_selected;
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
  };

  const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(cells.size())));
  if (threads == 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) work(i);
      });
    for (std::thread& t : pool) t.join();
  }
  return rows;
}

void write_bench_csv(const std::vector<BenchRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("write_bench_csv: cannot open " + path);
  out << kHeader << "\n";
  for (const BenchRow& r : rows) {
    out << r.problem << ',' << r.d << ',' << r.n << ',' << r.replicate << ','
        << r.model << ',';
    if (!r.failed) {
      out << fmt(r.rmse) << ',' << fmt(r.score) << ',';
      if (r.r_selected >= 0) out << r.r_selected;
      out << ',' << fmt(r.wall_clock_s);
    } else {
      out << ",,,";
    }
    out << ',' << r.seed << ',';
    if (!r.error.empty()) out << csv_quote(r.error);
    out << "\n";
  }
  if (!out) throw IoError("write_bench_csv: write failed for " + path);
}

void summarize_csv(const std::string& in_path, const std::string& out_path,
                   double score_floor) {
  std::ifstream in(in_path);
  if (!in) throw IoError("summarize: cannot open " + in_path);
  std::string line;
  if (!std::getline(in, line) || parse_csv_line(line) != parse_csv_line(kHeader))
    throw IoError("summarize: input does not match the benchmark CSV schema");

  struct Group {
    std::vector<double> rmse;
    std::vector<double> score;
    int errors = 0;
  };
  std::vector<Group> groups;  // first-appearance order
  std::map<std::string, std::size_t> index;
  std::vector<std::array<std::string, 3>> keys;

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = parse_csv_line(line);
    if (f.size() != 11)
      throw IoError("summarize: malformed row with " + std::to_string(f.size()) +
                    " fields");
    const std::string key = f[0] + "\x1f" + f[2] + "\x1f" + f[4];
    if (!index.count(key)) {
      index[key] = groups.size();
      groups.emplace_back();
      keys.push_back({f[0], f[2], f[4]});
    }
    Group& g = groups[index[key]];
    if (!f[10].empty()) {
      ++g.errors;
      continue;
    }
    g.rmse.push_back(std::strtod(f[5].c_str(), nullptr));
    g.score.push_back(floor_score(std::strtod(f[6].c_str(), nullptr), score_floor));
  }

  std::ofstream out(out_path);
  if (!out) throw IoError("summarize: cannot open " + out_path);
  const std::string stem = out_path.size() > 4 && out_path.ends_with(".csv")
                               ? out_path.substr(0, out_path.size() - 4)
                               : out_path;
  std::ofstream lng(stem + "_long.csv");
  if (!lng) throw IoError("summarize: cannot open " + stem + "_long.csv");

  out << "problem,n,model,replicates,errors,rmse_q1,rmse_median,rmse_q3,"
         "score_q1,score_median,score_q3\n";
  lng << "problem,n,model,metric,stat,value\n";
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    Group& g = groups[gi];
    const auto& k = keys[gi];
    out << k[0] << ',' << k[1] << ',' << k[2] << ',' << g.rmse.size() << ','
        << g.errors;
    if (g.rmse.empty()) {
      out << ",,,,,,\n";
      continue;
    }
    std::sort(g.rmse.begin(), g.rmse.end());
    std::sort(g.score.begin(), g.score.end());
    const double stats[6] = {quantile7(g.rmse, 0.25),  quantile7(g.rmse, 0.5),
                             quantile7(g.rmse, 0.75),  quantile7(g.score, 0.25),
                             quantile7(g.score, 0.5),  quantile7(g.score, 0.75)};
    for (double s : stats) out << ',' << fmt(s);
    out << "\n";
    static const char* metric[6] = {"rmse", "rmse", "rmse", "score", "score", "score"};
    static const char* stat[6] = {"q1", "median", "q3", "q1", "median", "q3"};
    for (int s = 0; s < 6; ++s)
      lng << k[0] << ',' << k[1] << ',' << k[2] << ',' << metric[s] << ','
          << stat[s] << ',' << fmt(stats[s]) << "\n";
  }
  if (!out || !lng) throw IoError("summarize: write failed");
}

}  // namespace hdgp
