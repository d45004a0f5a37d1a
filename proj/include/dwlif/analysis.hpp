#pragma once

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dwlif/geometry.hpp"
#include "dwlif/llg.hpp"

namespace dwlif {

enum class TrackEnd { Left, Right };

std::string_view to_string(TrackEnd end);

/// Raised by dw_position when the column profile has no +z to -z crossing.
class WallSaturated : public std::runtime_error {
 public:
  WallSaturated(const std::string& what, TrackEnd end)
      : std::runtime_error(what), end_(end) {}
  TrackEnd end() const { return end_; }

 private:
  TrackEnd end_;
};

/// Wall position: the interpolated zero crossing of the column-averaged mz.
/// Averaging per column (not summing) keeps the estimate independent of the
/// local track width.
double dw_position(const MagState& state);

struct TraceSample {
  double t = 0.0;
  double x = 0.0;
};

struct PositionTrace {
  std::vector<TraceSample> samples;
  std::string shape_id;
  double current = 0.0;
  std::string params_hash;
  std::string stop_reason = "completed";
  // Travel bounds used for saturation truncation; NaN when unknown.
  double x_lo = std::numeric_limits<double>::quiet_NaN();
  double x_hi = std::numeric_limits<double>::quiet_NaN();
  double wall_width = 0.0;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  /// Samples up to (excluding) the first one within wall_width of a bound.
  std::vector<TraceSample> usable_samples() const;
};

/// Discretisation and run controls shared by the simulated experiments.
struct SimOptions {
  double cell_size = 5e-9;
  double fixed_margin = kDefaultFixedMargin;
  double sample_dt = 0.1e-9;
  IntegratorOptions integrator{};
  RelaxOptions relax{};
  double settle_window = 5e-9;          // steady-state detection window
  double settle_speed = 0.01;           // m/s
  double settle_time_cap = 200e-9;
};

/// pi * Delta, the distance between the mz = +-0.9 points of a tanh wall
/// (up to a 1.5 % difference from 2 atanh(0.9) Delta).
double wall_width(const MaterialParams& params);

/// Stable identifier for a shape, used in file names and trace metadata.
std::string shape_id(const TrackShape& shape);

/// Hex digest of the shape, material and simulation options.
std::string params_hash(const TrackShape& shape, const MaterialParams& params,
                        const SimOptions& options);

/// Default leak start: near the narrow end for tapered tracks, on the outer
/// edge of the right-hand taper for constricted tracks.
double default_leak_start(const TrackShape& shape, const MaterialParams& params,
                          const SimOptions& options);

/// Everything needed to drive the micromagnetic model on one shape.
struct TrackModel {
  TrackShape shape;
  GridSpec grid;
  Mask mask;
  CurrentMap unit_current;  // 1 A solve

  static TrackModel build(const TrackShape& shape, const SimOptions& options);
};

/// Relaxed wall at x_start, then a run at `current` (A, positive drives
/// toward the narrow end). The trace stops early when the wall reaches a
/// fixed region or `stop` returns true on a new sample.
PositionTrace simulate_track(const TrackModel& model, const MaterialParams& params,
                             double current, double t_end, double x_start,
                             const SimOptions& options = {});

PositionTrace simulate_leaking(const TrackShape& shape, const MaterialParams& params,
                               double t_end, std::optional<double> x_start = std::nullopt,
                               const SimOptions& options = {});

/// x_start defaults to steady_leaked_position.
PositionTrace simulate_integration(const TrackShape& shape, const MaterialParams& params,
                                   double current, double t_end,
                                   std::optional<double> x_start = std::nullopt,
                                   const SimOptions& options = {});

/// Runs from x_start (default_leak_start when absent) under a constant
/// current until the wall moves less than settle_speed * settle_window
/// over one settle_window, or reaches a fixed region. Throws
/// ConvergenceError past settle_time_cap.
double settle_position(const TrackModel& model, const MaterialParams& params,
                       double current, double x_start, const SimOptions& options);

double steady_leaked_position(const TrackShape& shape, const MaterialParams& params,
                              const SimOptions& options = {});

struct LinearFit {
  double rmse = 0.0;
  double slope = 0.0;
  double intercept = 0.0;
};

/// Least-squares line through x(t) after saturation truncation.
LinearFit linearity_rmse(const PositionTrace& trace);

struct SigmoidReport {
  double inflection_x = 0.0;
  double max_slope_t = 0.0;
  double max_slope = 0.0;   // |dx/dt| at the maximum, m/s
  bool monotone = false;
  bool interior_peak = false;
  bool sigmoidal = false;   // monotone with a distinct interior slope maximum
};

SigmoidReport sigmoidality_check(const PositionTrace& trace);

/// Sign changes of dx/dt over the last 10 % of travel.
int oscillation_count(const PositionTrace& trace);

/// Time at which the trace first passes `x`, linearly interpolated. Empty
/// when it never does.
std::optional<double> crossing_time(const PositionTrace& trace, double x);

/// Time to cross the middle half of the track, from 0.75 L to 0.25 L when
/// moving left and from 0.25 L to 0.75 L when moving right.
std::optional<double> traversal_time(const PositionTrace& trace, double length);

enum class ActivationMode { FiringRate, SteadyPosition };

struct ActivationPoint {
  double input = 0.0;
  double output = 0.0;
};

struct ActivationCurve {
  ActivationMode mode = ActivationMode::SteadyPosition;
  std::vector<ActivationPoint> points;
};

struct NeuronModel;

struct ActivationProtocol {
  ActivationMode mode = ActivationMode::SteadyPosition;
  double threshold_fraction = 0.85;
  SimOptions sim{};
  // FiringRate mode.
  const NeuronModel* neuron = nullptr;
  double rate_window = 1e-6;
  double rate_dt = 0.1e-9;
};

ActivationCurve extract_activation(const TrackShape& shape, const MaterialParams& params,
                                   const std::vector<double>& current_grid,
                                   const ActivationProtocol& protocol);

/// CSV with a versioned header comment; numbers in %.9e.
void write_trace_csv(std::ostream& out, const PositionTrace& trace);
PositionTrace read_trace_csv(std::istream& in);
void write_activation_csv(std::ostream& out, const ActivationCurve& curve);

std::string format_number(double value);

}  // namespace dwlif
