// Experiment runner: dwlif CONFIG [--out-dir DIR] [--threads N]
//                    [--validate-only] [--resolution-scale S]
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "dwlif/config.hpp"
#include "dwlif/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Domain-wall LIF neuron experiments"};
  std::string config_path;
  std::string out_dir;
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  bool validate_only = false;
  double resolution_scale = 1.0;
  app.add_option("config", config_path, "Experiment config (JSON, comments allowed)")
      ->required();
  app.add_option("--out-dir", out_dir, "Override output_dir from the config");
  app.add_option("--threads", threads, "Sweep workers")->check(CLI::PositiveNumber);
  app.add_flag("--validate-only", validate_only, "Validate and print the resolved config");
  app.add_option("--resolution-scale", resolution_scale, "Multiply the cell size")
      ->check(CLI::PositiveNumber);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? dwlif::kExitOk : dwlif::kExitConfig;
  }

  dwlif::ConfigOverrides overrides;
  if (!out_dir.empty()) overrides.output_dir = out_dir;
  overrides.resolution_scale = resolution_scale;

  dwlif::ExperimentConfig cfg;
  try {
    cfg = dwlif::load_config(config_path, overrides);
  } catch (const dwlif::ConfigError& e) {
    std::cerr << config_path << ": invalid config\n" << e.what() << '\n';
    return dwlif::kExitConfig;
  }
  if (validate_only) {
    std::cout << config_path << ": valid\n" << cfg.resolved().dump(2) << '\n';
    return dwlif::kExitOk;
  }
  try {
    const int code = dwlif::run_experiment(cfg, threads, std::cerr);
    std::cerr << (code == dwlif::kExitOk ? "done: " : "finished with failures: ")
              << cfg.output_dir.string() << '\n';
    return code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return dwlif::kExitRuntime;
  }
}
