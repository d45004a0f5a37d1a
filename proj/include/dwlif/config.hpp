#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dwlif/analysis.hpp"
#include "dwlif/errors.hpp"
#include "dwlif/geometry.hpp"
#include "dwlif/llg.hpp"

namespace dwlif {

enum class ExperimentKind { Leak, Integrate, RmseSweep, SquashSweep, Activation, NetworkInfer };

std::string_view to_string(ExperimentKind kind);

struct ConfigIssue {
  std::string field;    // dotted path, e.g. "shape.b"
  std::string message;
  int line = 0;         // 1-based, 0 when unknown
};

class ConfigError : public InvalidArgument {
 public:
  explicit ConfigError(std::vector<ConfigIssue> issues);
  const std::vector<ConfigIssue>& issues() const { return issues_; }

 private:
  std::vector<ConfigIssue> issues_;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Leak;
  std::filesystem::path source;
  std::filesystem::path output_dir;
  TrackShape shape;
  MaterialParams material;
  SimOptions sim;
  double resolution_scale = 1.0;
  double t_end = 20e-9;
  std::optional<double> x_start;      // absent: experiment default
  std::vector<double> currents;       // A
  std::vector<double> b_values;
  std::vector<double> w1_values;      // m
  // activation
  ActivationMode activation_mode = ActivationMode::SteadyPosition;
  double threshold_fraction = 0.85;
  double rate_window = 1e-6;
  double rate_dt = 0.1e-9;
  std::optional<std::filesystem::path> neuron_model;
  // network_infer
  std::filesystem::path network_file;
  std::optional<std::filesystem::path> spikes_file;
  double input_rate = 100e6;          // Hz per channel when generating input
  double network_dt = 0.1e-9;
  std::uint64_t seed = 1;

  /// Every field, defaults included, as written to the manifest.
  nlohmann::json resolved() const;
};

struct ConfigOverrides {
  std::optional<std::filesystem::path> output_dir;
  double resolution_scale = 1.0;
};

/// Parses and statically validates a config file (JSON, comments allowed).
/// Throws ConfigError listing every problem found.
ExperimentConfig load_config(const std::filesystem::path& path,
                             const ConfigOverrides& overrides = {});

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& source,
                              const ConfigOverrides& overrides = {});

}  // namespace dwlif
