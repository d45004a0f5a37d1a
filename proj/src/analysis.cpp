#include "dwlif/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>

#include "dwlif/constants.hpp"
#include "dwlif/errors.hpp"
#include "dwlif/reduced.hpp"

namespace dwlif {

std::string_view to_string(TrackEnd end) { return end == TrackEnd::Left ? "left" : "right"; }

double dw_position(const MagState& state) {
  const Lattice& lat = state.lattice();
  const int nx = lat.grid.nx;
  std::vector<double> sum(nx, 0.0);
  std::vector<int> count(nx, 0);
  for (std::size_t c = 0; c < lat.cells.size(); ++c) {
    const int i = lat.cells[c] % nx;
    sum[i] += state.m[c].z;
    ++count[i];
  }
  const double h = lat.grid.cell_size;
  double prev_x = 0.0;
  double prev_p = 0.0;
  bool have_prev = false;
  bool first_positive = false;
  for (int i = 0; i < nx; ++i) {
    if (count[i] == 0) continue;
    const double p = sum[i] / count[i];
    const double x = (i + 0.5) * h;
    if (!have_prev) {
      first_positive = p > 0.0;
      if (!first_positive) {
        throw WallSaturated("no +z domain left of the wall", TrackEnd::Left);
      }
    } else if (prev_p > 0.0 && p <= 0.0) {
      return prev_x + (x - prev_x) * prev_p / (prev_p - p);
    }
    prev_x = x;
    prev_p = p;
    have_prev = true;
  }
  if (!have_prev) throw InvalidArgument("dw_position: empty lattice");
  throw WallSaturated("no -z domain right of the wall", TrackEnd::Right);
}

std::vector<TraceSample> PositionTrace::usable_samples() const {
  if (std::isnan(x_lo) || std::isnan(x_hi)) return samples;
  std::vector<TraceSample> out;
  for (const TraceSample& s : samples) {
    if (s.x - x_lo < wall_width || x_hi - s.x < wall_width) break;
    out.push_back(s);
  }
  return out;
}

double wall_width(const MaterialParams& params) {
  return phys::kPi * params.wall_parameter();
}

std::string format_number(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9e", value);
  return buf;
}

std::string shape_id(const TrackShape& shape) {
  auto nm = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v * 1e9);
    return std::string(buf);
  };
  std::string id(to_string(shape.kind));
  switch (shape.kind) {
    case ShapeKind::Trapezoid:
      id += "_" + nm(shape.w_wide) + "-" + nm(shape.w_narrow);
      break;
    case ShapeKind::Exponential: {
      char buf[32];
      std::snprintf(buf, sizeof buf, "_b%g", shape.b);
      id += buf;
      id += "_" + nm(shape.w_wide) + "-" + nm(shape.w_narrow);
      break;
    }
    case ShapeKind::Constricted:
      id += "_w1-" + nm(shape.w1) + "_c" + nm(shape.constriction_width);
      break;
  }
  id += "_L" + nm(shape.length);
  return id;
}

std::string params_hash(const TrackShape& shape, const MaterialParams& params,
                        const SimOptions& options) {
  std::ostringstream s;
  s << to_string(shape.kind);
  for (double v : {shape.length, shape.w_wide, shape.w_narrow, shape.b, shape.w1,
                   shape.constriction_width, shape.constriction_extent, shape.thickness,
                   params.a_ex, params.alpha, params.xi, params.m_sat, params.ku1,
                   params.polarization, params.gamma, options.cell_size,
                   options.fixed_margin, options.sample_dt, options.integrator.tolerance,
                   options.integrator.max_dt, options.relax.torque_tolerance,
                   options.relax.max_time}) {
    s << ',' << format_number(v);
  }
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016zx", std::hash<std::string>{}(s.str()));
  return buf;
}

double default_leak_start(const TrackShape& shape, const MaterialParams& params,
                          const SimOptions& options) {
  if (shape.kind == ShapeKind::Constricted) {
    return 0.5 * shape.length + 0.45 * shape.constriction_extent;
  }
  return shape.length - 1.5 * options.fixed_margin - 2.0 * wall_width(params);
}

TrackModel TrackModel::build(const TrackShape& shape, const SimOptions& options) {
  TrackModel model;
  model.shape = shape;
  model.grid = fit_grid(shape, options.cell_size);
  model.mask = rasterize(shape, model.grid, options.fixed_margin);
  model.unit_current = solve_current(model.mask, model.grid, shape.thickness, 1.0);
  return model;
}

namespace {

PositionTrace empty_trace(const TrackModel& model, const MaterialParams& params,
                          double current, const SimOptions& options) {
  PositionTrace trace;
  trace.shape_id = shape_id(model.shape);
  trace.current = current;
  trace.params_hash = params_hash(model.shape, params, options);
  trace.wall_width = wall_width(params);
  return trace;
}

DriveSpec drive_for(const TrackModel& model, double current) {
  if (current == 0.0) return DriveSpec::none();
  return DriveSpec{&model.unit_current, current};
}

// Sample callback shared by the trace and settle runs. Returns false with a
// reason once the wall has reached a pinned block or left the track.
bool locate(const MagState& state, double& x, std::string& reason) {
  const Lattice& lat = state.lattice();
  try {
    x = dw_position(state);
  } catch (const WallSaturated& e) {
    reason = std::string("saturated-") + std::string(to_string(e.end()));
    return false;
  }
  const double h = lat.grid.cell_size;
  if (x - lat.fixed_left_edge < h) {
    reason = "fixed-region-left";
    return false;
  }
  if (lat.fixed_right_edge - x < h) {
    reason = "fixed-region-right";
    return false;
  }
  return true;
}

}  // namespace

PositionTrace simulate_track(const TrackModel& model, const MaterialParams& params,
                             double current, double t_end, double x_start,
                             const SimOptions& options) {
  if (!std::isfinite(current)) throw InvalidArgument("current must be finite");
  if (!(t_end >= 0.0)) throw InvalidArgument("t_end must be >= 0");
  params.validate();
  MagState state = init_domain_wall(model.mask, model.grid, model.shape.thickness, params,
                                    x_start, options.relax);
  PositionTrace trace = empty_trace(model, params, current, options);
  trace.x_lo = state.lattice().fixed_left_edge;
  trace.x_hi = state.lattice().fixed_right_edge;

  Recorder recorder = [&](const MagState& s, std::string& reason) {
    double x = 0.0;
    const bool inside = locate(s, x, reason);
    if (reason.rfind("saturated", 0) != 0) trace.samples.push_back({s.time, x});
    return inside ? RecordAction::Continue : RecordAction::Stop;
  };
  const RunOutcome outcome = run(state, params, drive_for(model, current), t_end,
                                 options.sample_dt, recorder, options.integrator);
  trace.stop_reason = outcome.reason;
  return trace;
}

PositionTrace simulate_leaking(const TrackShape& shape, const MaterialParams& params,
                               double t_end, std::optional<double> x_start,
                               const SimOptions& options) {
  const TrackModel model = TrackModel::build(shape, options);
  const double x0 = x_start.value_or(default_leak_start(shape, params, options));
  return simulate_track(model, params, 0.0, t_end, x0, options);
}

PositionTrace simulate_integration(const TrackShape& shape, const MaterialParams& params,
                                   double current, double t_end,
                                   std::optional<double> x_start,
                                   const SimOptions& options) {
  const TrackModel model = TrackModel::build(shape, options);
  double x0 = 0.0;
  if (x_start) {
    x0 = *x_start;
  } else {
    x0 = settle_position(model, params, 0.0, default_leak_start(shape, params, options),
                         options);
  }
  return simulate_track(model, params, current, t_end, x0, options);
}

double settle_position(const TrackModel& model, const MaterialParams& params,
                       double current, double x_start, const SimOptions& options) {
  if (!(options.settle_window > 0.0) || !(options.settle_speed > 0.0)) {
    throw InvalidArgument("settle window and speed must be > 0");
  }
  MagState state = init_domain_wall(model.mask, model.grid, model.shape.thickness, params,
                                    x_start, options.relax);
  const auto lag = static_cast<std::size_t>(
      std::llround(options.settle_window / options.sample_dt));
  const double max_drift = options.settle_speed * options.settle_window;
  std::vector<double> xs;
  double chord = std::numeric_limits<double>::infinity();

  Recorder recorder = [&](const MagState& s, std::string& reason) {
    double x = 0.0;
    const bool inside = locate(s, x, reason);
    if (reason.rfind("saturated", 0) == 0) return RecordAction::Stop;
    xs.push_back(x);
    if (!inside) return RecordAction::Stop;
    if (lag > 0 && xs.size() > lag) {
      chord = std::abs(xs.back() - xs[xs.size() - 1 - lag]);
      if (chord < max_drift) {
        reason = "settled";
        return RecordAction::Stop;
      }
    }
    return RecordAction::Continue;
  };
  const RunOutcome outcome = run(state, params, drive_for(model, current),
                                 options.settle_time_cap, options.sample_dt, recorder,
                                 options.integrator);
  if (outcome.reason == "completed") {
    throw ConvergenceError("wall still moving after " +
                               format_number(options.settle_time_cap) + " s",
                           chord / options.settle_window);
  }
  if (xs.empty()) {
    // Saturated before the first sample: report the pinned block edge.
    const Lattice& lat = state.lattice();
    return outcome.reason == "saturated-left" ? lat.fixed_left_edge : lat.fixed_right_edge;
  }
  return xs.back();
}

double steady_leaked_position(const TrackShape& shape, const MaterialParams& params,
                              const SimOptions& options) {
  const TrackModel model = TrackModel::build(shape, options);
  return settle_position(model, params, 0.0, default_leak_start(shape, params, options),
                         options);
}

LinearFit linearity_rmse(const PositionTrace& trace) {
  const std::vector<TraceSample> s = trace.usable_samples();
  if (s.size() < 3) throw InvalidArgument("linearity_rmse: need at least 3 samples");
  const double n = static_cast<double>(s.size());
  double mt = 0.0, mx = 0.0;
  for (const TraceSample& p : s) {
    mt += p.t;
    mx += p.x;
  }
  mt /= n;
  mx /= n;
  double stt = 0.0, stx = 0.0;
  for (const TraceSample& p : s) {
    stt += (p.t - mt) * (p.t - mt);
    stx += (p.t - mt) * (p.x - mx);
  }
  if (stt <= 0.0) throw InvalidArgument("linearity_rmse: degenerate time axis");
  LinearFit fit;
  fit.slope = stx / stt;
  fit.intercept = mx - fit.slope * mt;
  double ss = 0.0;
  for (const TraceSample& p : s) {
    const double r = p.x - (fit.intercept + fit.slope * p.t);
    ss += r * r;
  }
  fit.rmse = std::sqrt(ss / n);
  return fit;
}

SigmoidReport sigmoidality_check(const PositionTrace& trace) {
  const auto& s = trace.samples;
  const std::size_t n = s.size();
  if (n < 10) throw InvalidArgument("sigmoidality_check: need at least 10 samples");
  std::vector<double> xs(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t half = std::min<std::size_t>({2, i, n - 1 - i});
    double acc = 0.0;
    for (std::size_t k = i - half; k <= i + half; ++k) acc += s[k].x;
    xs[i] = acc / static_cast<double>(2 * half + 1);
  }
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = i == 0 ? 0 : i - 1;
    const std::size_t b = i + 1 == n ? n - 1 : i + 1;
    v[i] = (xs[b] - xs[a]) / (s[b].t - s[a].t);
  }

  SigmoidReport report;
  const double travel = xs.back() - xs.front();
  const double slack = 1e-12 + 1e-6 * std::abs(travel);
  report.monotone = true;
  for (std::size_t i = 1; i < n; ++i) {
    const double d = xs[i] - xs[i - 1];
    if ((travel >= 0.0 && d < -slack) || (travel < 0.0 && d > slack)) {
      report.monotone = false;
      break;
    }
  }
  std::size_t peak = 0;
  double mean_speed = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean_speed += std::abs(v[i]);
    if (std::abs(v[i]) > std::abs(v[peak])) peak = i;
  }
  mean_speed /= static_cast<double>(n);
  report.inflection_x = xs[peak];
  report.max_slope_t = s[peak].t;
  report.max_slope = std::abs(v[peak]);
  const std::size_t edge = std::max<std::size_t>(1, n / 20);
  report.interior_peak = peak >= edge && peak + edge < n &&
                         report.max_slope - mean_speed > 0.1 * mean_speed;
  report.sigmoidal = report.monotone && report.interior_peak;
  return report;
}

int oscillation_count(const PositionTrace& trace) {
  const auto& s = trace.samples;
  if (s.size() < 3) return 0;
  const double x0 = s.front().x;
  const double x1 = s.back().x;
  const double band = 0.1 * std::abs(x1 - x0);
  std::size_t start = s.size();
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (std::abs(s[i].x - x1) <= band) {
      start = i;
      break;
    }
  }
  int changes = 0;
  int last_sign = 0;
  for (std::size_t i = start + 1; i < s.size(); ++i) {
    const double d = s[i].x - s[i - 1].x;
    const int sign = (d > 0.0) - (d < 0.0);
    if (sign == 0) continue;
    if (last_sign != 0 && sign != last_sign) ++changes;
    last_sign = sign;
  }
  return changes;
}

std::optional<double> crossing_time(const PositionTrace& trace, double x) {
  const auto& s = trace.samples;
  for (std::size_t i = 1; i < s.size(); ++i) {
    const double a = s[i - 1].x - x;
    const double b = s[i].x - x;
    if (a == 0.0) return s[i - 1].t;
    if ((a < 0.0) != (b < 0.0) || b == 0.0) {
      const double f = a / (a - b);
      return s[i - 1].t + f * (s[i].t - s[i - 1].t);
    }
  }
  return std::nullopt;
}

std::optional<double> traversal_time(const PositionTrace& trace, double length) {
  if (trace.size() < 2) return std::nullopt;
  const bool leftward = trace.samples.back().x < trace.samples.front().x;
  const double from = leftward ? 0.75 * length : 0.25 * length;
  const double to = leftward ? 0.25 * length : 0.75 * length;
  const auto t0 = crossing_time(trace, from);
  const auto t1 = crossing_time(trace, to);
  if (!t0 || !t1) return std::nullopt;
  return *t1 - *t0;
}

ActivationCurve extract_activation(const TrackShape& shape, const MaterialParams& params,
                                   const std::vector<double>& current_grid,
                                   const ActivationProtocol& protocol) {
  if (current_grid.size() < 3) {
    throw InvalidArgument("extract_activation: need at least 3 currents");
  }
  for (std::size_t i = 1; i < current_grid.size(); ++i) {
    if (!(current_grid[i] > current_grid[i - 1])) {
      throw InvalidArgument("extract_activation: current grid must be strictly increasing");
    }
  }
  ActivationCurve curve;
  curve.mode = protocol.mode;

  if (protocol.mode == ActivationMode::FiringRate) {
    if (protocol.neuron == nullptr) {
      throw InvalidArgument("extract_activation: FiringRate mode needs a neuron model");
    }
    if (!(protocol.rate_window > 0.0) || !(protocol.rate_dt > 0.0)) {
      throw InvalidArgument("extract_activation: rate window and step must be > 0");
    }
    const auto steps =
        static_cast<long>(std::llround(protocol.rate_window / protocol.rate_dt));
    for (double current : current_grid) {
      NeuronState state = initial_state(*protocol.neuron);
      for (long k = 0; k < steps; ++k) {
        step_neuron(*protocol.neuron, state, current, protocol.rate_dt);
      }
      curve.points.push_back(
          {current, static_cast<double>(state.fired_at.size()) / protocol.rate_window});
    }
    return curve;
  }

  const SimOptions& opt = protocol.sim;
  const TrackModel model = TrackModel::build(shape, opt);
  const double origin =
      settle_position(model, params, 0.0, default_leak_start(shape, params, opt), opt);
  const double x_thr = protocol.threshold_fraction * shape.length;
  if (!(x_thr > origin)) {
    throw InvalidArgument("extract_activation: steady leak position " +
                          format_number(origin) + " m lies beyond the threshold");
  }
  for (double current : current_grid) {
    double x = origin;
    if (current != 0.0) {
      SimOptions run_opt = opt;
      // Settled once the wall moves < 1 nm over the window.
      run_opt.settle_speed = 1e-9 / opt.settle_window;
      x = settle_position(model, params, current, origin, run_opt);
    }
    const double out = std::clamp((x - origin) / (x_thr - origin), 0.0, 1.0);
    curve.points.push_back({current, out});
  }
  return curve;
}

void write_trace_csv(std::ostream& out, const PositionTrace& trace) {
  out << "# dwlif-trace v1 shape=" << trace.shape_id
      << " current=" << format_number(trace.current) << " params=" << trace.params_hash
      << " stop=" << trace.stop_reason << '\n';
  out << "t_seconds,x_meters\n";
  for (const TraceSample& s : trace.samples) {
    out << format_number(s.t) << ',' << format_number(s.x) << '\n';
  }
}

PositionTrace read_trace_csv(std::istream& in) {
  PositionTrace trace;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream fields(line.substr(1));
      std::string kv;
      while (fields >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = kv.substr(0, eq);
        const std::string value = kv.substr(eq + 1);
        if (key == "shape") trace.shape_id = value;
        else if (key == "current") trace.current = std::stod(value);
        else if (key == "params") trace.params_hash = value;
        else if (key == "stop") trace.stop_reason = value;
      }
      continue;
    }
    if (!header) {
      if (line != "t_seconds,x_meters") {
        throw InvalidArgument("trace csv: expected header t_seconds,x_meters");
      }
      header = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw InvalidArgument("trace csv: malformed row " + line);
    trace.samples.push_back({std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1))});
  }
  return trace;
}

void write_activation_csv(std::ostream& out, const ActivationCurve& curve) {
  const bool rate = curve.mode == ActivationMode::FiringRate;
  out << "# dwlif-activation v1 mode=" << (rate ? "firing_rate" : "steady_position") << '\n';
  out << (rate ? "current_A,rate_Hz\n" : "current_A,position_normalized\n");
  for (const ActivationPoint& p : curve.points) {
    out << format_number(p.input) << ',' << format_number(p.output) << '\n';
  }
}

}  // namespace dwlif
