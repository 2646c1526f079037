// Command-line front end: `gtt run <config>` and `gtt certify <config>`.
// Exit codes: 0 success, 1 error, 2 not certified.

#include "gtt/runner.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Gradient target tracking experiments"};
  app.require_subcommand(1);

  std::string config_path;
  int workers = 1;
  std::string out_dir;
  std::uint64_t seed_override = 0;

  auto* run = app.add_subcommand("run", "Run an experiment and write CSV plus manifest");
  run->add_option("config", config_path, "Experiment config file")->required();
  run->add_option("--workers", workers, "Worker threads")
      ->check(CLI::Range(1, 1024))
      ->default_val(1);
  auto* out_opt = run->add_option("--out", out_dir, "Output directory (overrides [output] dir)");
  auto* seed_opt =
      run->add_option("--seed-override", seed_override, "Run only this seed");

  std::string certify_path;
  auto* cert = app.add_subcommand("certify", "Check the stability certificate");
  cert->add_option("config", certify_path, "Experiment config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*run) {
      const gtt::ExperimentConfig config = gtt::load_experiment_config(config_path);
      gtt::RunOptions opts;
      opts.workers = workers;
      if (*out_opt) opts.out_dir = out_dir;
      if (*seed_opt) opts.seed_override = seed_override;
      const gtt::RunSummary summary = gtt::run_experiment(config, opts);
      std::cout << "wrote " << summary.csv_path << " (" << summary.records.size()
                << " runs)\n"
                << "wrote " << summary.manifest_path << '\n';
      if (summary.any_diverged) std::cout << "note: at least one run diverged\n";
      return 0;
    }
    const gtt::ExperimentConfig config = gtt::load_experiment_config(certify_path);
    return gtt::certify_experiment(config, std::cout) ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
