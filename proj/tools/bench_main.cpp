#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "hdgp/bench.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Benchmark runner for the high-dimensional GP toolkit"};
  app.require_subcommand(1);

  std::string config_path, run_out;
  int jobs = 1;
  CLI::App* run = app.add_subcommand("run", "Fit every configured model and write raw results");
  run->add_option("--config", config_path, "JSON configuration file")
      ->required()
      ->check(CLI::ExistingFile);
  run->add_option("--out", run_out, "output CSV path")->required();
  run->add_option("--jobs", jobs, "parallel worker count")->check(CLI::PositiveNumber);

  std::string sum_in, sum_out;
  double floor = -5.0;
  CLI::App* summarize = app.add_subcommand("summarize", "Quartile table from a results CSV");
  summarize->add_option("--in", sum_in, "results CSV from 'run'")
      ->required()
      ->check(CLI::ExistingFile);
  summarize->add_option("--out", sum_out, "summary CSV path")->required();
  summarize->add_option("--floor", floor, "score floor for visualization");

  app.add_subcommand("list-problems", "Print the registered problem names");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      std::ifstream in(config_path);
      std::stringstream buf;
      buf << in.rdbuf();
      const hdgp::BenchConfig config = hdgp::config_from_json(buf.str());
      hdgp::write_bench_csv(hdgp::run_bench(config, jobs), run_out);
    } else if (summarize->parsed()) {
      hdgp::summarize_csv(sum_in, sum_out, floor);
    } else {
      for (const std::string& name : hdgp::registry_names()) std::cout << name << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
