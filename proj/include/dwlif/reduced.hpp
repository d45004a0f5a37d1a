#pragma once

#include <filesystem>
#include <limits>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dwlif/analysis.hpp"
#include "dwlif/geometry.hpp"
#include "dwlif/llg.hpp"

namespace dwlif {

struct NeuronFit {
  double mobility_r2 = std::numeric_limits<double>::quiet_NaN();
  double stt_r2 = std::numeric_limits<double>::quiet_NaN();
  double leak_residual_rms = std::numeric_limits<double>::quiet_NaN();   // m/s
  double integ_residual_rms = std::numeric_limits<double>::quiet_NaN();  // m/s
  int leak_samples = 0;
  int integ_samples = 0;
  bool calibrated = false;
};

/// One-coordinate wall model: dx/dt = mobility F(x) + stt_gain J(x).
struct NeuronModel {
  TrackShape shape;
  double wall_energy_density = 0.0;  // J/m^2
  double mobility = 0.0;             // m/(s N)
  double stt_gain = 0.0;             // m^3/(A s)
  double threshold_x = 0.0;
  double reset_x = 0.0;
  double x_min = 0.0;
  double x_max = 0.0;
  double cell_size = 5e-9;           // finite-difference step and Euler bound
  NeuronFit fit;

  /// Throws InvalidArgument on any violated invariant.
  void validate() const;
};

struct NeuronOptions {
  double threshold_fraction = 0.85;
  double fixed_margin = kDefaultFixedMargin;
  double cell_size = 5e-9;
};

/// Uncalibrated model. Mobility and gain come from the rigid-wall
/// equations of motion without in-plane anisotropy, evaluated at the mean
/// track width; reset_x is the model's own steady leak position.
NeuronModel make_neuron_model(const TrackShape& shape, const MaterialParams& params,
                              const NeuronOptions& options = {});

/// Leaking force in N; negative values push toward the wide end.
double shape_force(const NeuronModel& model, double x);

/// current / (width(x) thickness).
double current_density(const NeuronModel& model, double x, double current);

double neuron_velocity(const NeuronModel& model, double x, double current);

/// Zero-current rest position reached from the middle of [x_min, threshold_x].
double steady_leak_position(const NeuronModel& model);

struct NeuronState {
  double x = 0.0;
  double t = 0.0;
  std::vector<double> fired_at;
};

NeuronState initial_state(const NeuronModel& model);

/// Advances by dt with Euler sub-steps of at most one cell. On a threshold
/// crossing from below the state is reset to reset_x, the fire time is
/// recorded and the rest of the interval is skipped. Returns whether it
/// fired.
bool step_neuron(const NeuronModel& model, NeuronState& state, double current, double dt);

/// Fits mobility to the leak trace and stt_gain to the residual velocity of
/// the integration trace. Throws CalibrationError on degenerate input.
NeuronModel calibrate(const NeuronModel& model, const PositionTrace& leak_trace,
                      const PositionTrace& integ_trace);

/// Mobility-only fit; stt_gain is kept.
NeuronModel calibrate_leak(const NeuronModel& model, const PositionTrace& leak_trace);

/// Trace of the model from x0 under constant current, sampled every
/// sample_dt. Firing is disabled so the trace can be compared with a
/// micromagnetic one.
PositionTrace simulate_reduced(const NeuronModel& model, double x0, double current,
                               double t_end, double sample_dt);

/// RMS position difference between a trace and the model run from the
/// trace's first sample at the trace's current, on the usable samples.
double trace_rms_error(const NeuronModel& model, const PositionTrace& trace);

void to_json(nlohmann::json& j, const NeuronModel& model);
void from_json(const nlohmann::json& j, NeuronModel& model);

void save_neuron_model(const std::filesystem::path& path, const NeuronModel& model);
NeuronModel load_neuron_model(const std::filesystem::path& path);

}  // namespace dwlif
