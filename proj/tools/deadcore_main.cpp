#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include "deadcore/errors.hpp"
#include "deadcore/experiments.hpp"
#include "deadcore/parallel.hpp"

namespace {

int run_command(const std::vector<std::string>& paths, const std::string& out, int jobs, bool verbose) {
  std::vector<deadcore::ExperimentConfig> configs;
  for (const std::string& path : paths) {
    try {
      configs.push_back(deadcore::load_config(path));
    } catch (const deadcore::Error& e) {
      fmt::print(stderr, "{}: {}\n", path, e.what());
      return 1;
    }
  }
  // With several configs and --out, each run gets its own subdirectory.
  std::vector<deadcore::RunOutcome> outcomes(configs.size());
  const int outer = std::max(1, std::min(jobs, static_cast<int>(configs.size())));
  const int inner = std::max(1, jobs / outer);
  deadcore::parallel_for(configs.size(), outer, [&](std::size_t k) {
    deadcore::RunOptions options;
    options.jobs = inner;
    options.verbose = verbose;
    if (!out.empty()) options.output = configs.size() == 1 ? out : out + "/" + configs[k].name;
    outcomes[k] = deadcore::run(configs[k], options);
  });

  int code = 0;
  for (std::size_t k = 0; k < configs.size(); ++k) {
    const auto& o = outcomes[k];
    const std::string status = o.summary.value("status", "error");
    if (o.exit_code == 1) {
      fmt::print("{}: {} ({})\n", configs[k].name, status, o.summary.value("reason", "unknown"));
    } else {
      fmt::print("{}: {} -> {}\n", configs[k].name, status, o.output_dir);
    }
    // An error outranks an assertion failure.
    if (o.exit_code == 1) {
      code = 1;
    } else if (o.exit_code == 2 && code == 0) {
      code = 2;
    }
  }
  return code;
}

int validate_command(const std::vector<std::string>& paths) {
  int code = 0;
  for (const std::string& path : paths) {
    try {
      fmt::print("{}\n", deadcore::load_config(path).to_json().dump(2));
    } catch (const deadcore::Error& e) {
      fmt::print(stderr, "{}: {}\n", path, e.what());
      code = 1;
    }
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semilinear reaction-diffusion experiments with dead cores and shape derivatives"};
  app.footer(deadcore::config_defaults_help());
  app.require_subcommand(1);

  std::vector<std::string> configs;
  std::string out;
  int jobs = 1;
  bool verbose = false;

  CLI::App* run = app.add_subcommand("run", "Run experiments and write summary.json, CSV and VTK outputs");
  run->add_option("--config", configs, "Experiment config (JSON); repeat for several")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "Output directory, replaces the config's output field");
  run->add_option("--jobs", jobs, "Worker threads across configs and sequence members")->check(CLI::PositiveNumber);
  run->add_flag("--verbose", verbose, "Log progress to stderr");

  CLI::App* validate = app.add_subcommand("validate", "Parse configs and print them with defaults filled in");
  validate->add_option("--config", configs, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  if (*run) return run_command(configs, out, jobs, verbose);
  return validate_command(configs);
}
