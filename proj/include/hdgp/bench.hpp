#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hdgp/models.hpp"
#include "hdgp/testbed.hpp"

namespace hdgp {

// Registry name, or a dataset file with its target column.
struct ProblemDescriptor {
  std::string name;
  std::string csv;     // empty for registry problems
  std::string target;
};

struct BenchConfig {
  std::vector<ProblemDescriptor> problems;
  std::vector<int> budgets = {50, 100, 200, 500};
  std::vector<ModelKind> models = all_model_kinds();
  int replicates = 10;
  std::uint64_t seed = 0;
  double score_floor = -5.0;
  int n_starts = 5;
  std::vector<int> r_candidates;  // empty: per-problem defaults
};

// Parses and validates the config document; throws SpecError / IoError on
// schema violations.
BenchConfig config_from_json(const std::string& text);

struct BenchRow {
  std::string problem;
  int d = 0;
  int n = 0;
  int replicate = 0;
  std::string model;
  double rmse = 0.0;
  double score = 0.0;  // raw, unfloored
  int r_selected = -1;
  double wall_clock_s = 0.0;
  std::uint64_t seed = 0;
  std::string error;  // empty on success
  bool failed = false;
};

// One row per (problem, budget, replicate, model) in config order. Cell
// failures land in the row's error column; everything except wall_clock_s is
// deterministic in the config.
std::vector<BenchRow> run_bench(const BenchConfig& config, int jobs = 1);

void write_bench_csv(const std::vector<BenchRow>& rows, const std::string& path);

// Median / quartile table per (problem, n, model) written to out_path, plus a
// long-format companion (stem + "_long.csv") for plotting. Scores are floored
// here; error rows are excluded and counted.
void summarize_csv(const std::string& in_path, const std::string& out_path,
                   double score_floor = -5.0);

}  // namespace hdgp
