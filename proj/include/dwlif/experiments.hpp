#pragma once

#include <iosfwd>

#include "dwlif/config.hpp"

namespace dwlif {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;

/// Runs the configured experiment, writing traces, curves.csv and
/// manifest.json into cfg.output_dir. Sweep points run on `threads`
/// workers; a failing point is recorded and the rest continue. Returns
/// kExitOk, or kExitRuntime if any point failed.
int run_experiment(const ExperimentConfig& cfg, int threads, std::ostream& log);

}  // namespace dwlif
