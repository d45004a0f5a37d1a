#include "dwlif/reduced.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "dwlif/errors.hpp"
#include "dwlif/serialize.hpp"

namespace dwlif {

void NeuronModel::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw InvalidArgument("neuron model: " + msg);
  };
  require(std::isfinite(wall_energy_density) && wall_energy_density > 0.0,
          "wall_energy_density must be > 0");
  require(std::isfinite(mobility) && mobility > 0.0, "mobility must be > 0");
  require(std::isfinite(stt_gain) && stt_gain > 0.0, "stt_gain must be > 0");
  require(std::isfinite(cell_size) && cell_size > 0.0, "cell_size must be > 0");
  require(x_min >= 0.0 && x_max <= shape.length && x_min < x_max,
          "travel bounds must satisfy 0 <= x_min < x_max <= length");
  require(x_min < threshold_x && threshold_x <= x_max,
          "threshold_x must lie in (x_min, x_max]");
  require(x_min < reset_x && reset_x < threshold_x,
          "reset_x must lie in (x_min, threshold_x)");
}

NeuronModel make_neuron_model(const TrackShape& shape, const MaterialParams& params,
                              const NeuronOptions& options) {
  params.validate();
  if (!(options.cell_size > 0.0)) throw InvalidArgument("cell_size must be > 0");
  if (!(options.threshold_fraction > 0.0 && options.threshold_fraction <= 1.0)) {
    throw InvalidArgument("threshold_fraction must lie in (0, 1]");
  }
  NeuronModel m;
  m.shape = shape;
  m.cell_size = options.cell_size;
  m.wall_energy_density = params.wall_energy_density();
  const double mean_width = shape_area(shape) / shape.length;
  const double a = params.alpha;
  // Rigid wall without in-plane anisotropy: v = a gamma Delta mu0 H / (1 + a^2)
  // with the force expressed as an equivalent field F / (2 mu0 Ms W t).
  m.mobility = a * params.gamma * params.wall_parameter() /
               ((1.0 + a * a) * 2.0 * params.m_sat * mean_width * shape.thickness);
  m.stt_gain = params.stt_velocity_per_current_density() * (1.0 + a * params.xi) /
               (1.0 + a * a);
  m.x_min = options.fixed_margin;
  m.x_max = shape.length - options.fixed_margin;
  if (!(m.x_min < m.x_max)) throw InvalidArgument("fixed_margin leaves no travel range");
  m.threshold_x = std::min(options.threshold_fraction * shape.length, m.x_max);
  m.reset_x = 0.5 * (m.x_min + m.threshold_x);
  m.reset_x = std::clamp(steady_leak_position(m), m.x_min + m.cell_size,
                         m.threshold_x - m.cell_size);
  m.validate();
  return m;
}

double shape_force(const NeuronModel& model, double x) {
  const double L = model.shape.length;
  const double xc = std::clamp(x, 0.0, L);
  const double lo = std::max(0.0, xc - model.cell_size);
  const double hi = std::min(L, xc + model.cell_size);
  const double slope = (width_at(model.shape, hi) - width_at(model.shape, lo)) / (hi - lo);
  return model.wall_energy_density * model.shape.thickness * slope;
}

double current_density(const NeuronModel& model, double x, double current) {
  const double xc = std::clamp(x, 0.0, model.shape.length);
  return current / (width_at(model.shape, xc) * model.shape.thickness);
}

double neuron_velocity(const NeuronModel& model, double x, double current) {
  return model.mobility * shape_force(model, x) +
         model.stt_gain * current_density(model, x, current);
}

double steady_leak_position(const NeuronModel& model) {
  double x = 0.5 * (model.x_min + model.threshold_x);
  const double step = 0.5 * model.cell_size;
  const double still = 1e-9 * model.mobility * model.wall_energy_density *
                       model.shape.thickness;  // velocity of a 1e-9 width slope
  double v = neuron_velocity(model, x, 0.0);
  const auto max_iter = static_cast<long>(4.0 * model.shape.length / step) + 4;
  for (long it = 0; it < max_iter && std::abs(v) > still; ++it) {
    const double next = std::clamp(x + (v > 0.0 ? step : -step), model.x_min, model.x_max);
    if (next == x) break;
    const double v_next = neuron_velocity(model, next, 0.0);
    if ((v > 0.0) != (v_next > 0.0)) {
      return x + (next - x) * v / (v - v_next);
    }
    x = next;
    v = v_next;
  }
  return x;
}

NeuronState initial_state(const NeuronModel& model) {
  NeuronState s;
  s.x = model.reset_x;
  return s;
}

bool step_neuron(const NeuronModel& model, NeuronState& state, double current, double dt) {
  if (!std::isfinite(current)) throw InvalidArgument("step_neuron: current must be finite");
  if (!(std::isfinite(dt) && dt > 0.0)) throw InvalidArgument("step_neuron: dt must be > 0");
  if (!std::isfinite(state.x)) throw InvalidArgument("step_neuron: non-finite position");
  const double t_end = state.t + dt;
  double remaining = dt;
  double x = std::clamp(state.x, model.x_min, model.x_max);
  while (remaining > 0.0) {
    const double v = neuron_velocity(model, x, current);
    double h = remaining;
    if (std::abs(v) * h > model.cell_size) h = model.cell_size / std::abs(v);
    const double next = std::clamp(x + v * h, model.x_min, model.x_max);
    if (x < model.threshold_x && next >= model.threshold_x) {
      state.x = model.reset_x;
      state.fired_at.push_back(t_end - remaining + h);
      state.t = t_end;
      return true;
    }
    if (next == x) break;  // pinned at a bound
    x = next;
    remaining = h == remaining ? 0.0 : remaining - h;
  }
  state.x = x;
  state.t = t_end;
  return false;
}

namespace {

struct VelocitySample {
  double x;
  double v;
};

std::vector<VelocitySample> velocities(const PositionTrace& trace) {
  const std::vector<TraceSample> s = trace.usable_samples();
  std::vector<VelocitySample> out;
  for (std::size_t i = 1; i + 1 < s.size(); ++i) {
    out.push_back({s[i].x, (s[i + 1].x - s[i - 1].x) / (s[i + 1].t - s[i - 1].t)});
  }
  return out;
}

double travel(const PositionTrace& trace) {
  double lo = 0.0, hi = 0.0;
  bool first = true;
  for (const TraceSample& s : trace.usable_samples()) {
    lo = first ? s.x : std::min(lo, s.x);
    hi = first ? s.x : std::max(hi, s.x);
    first = false;
  }
  return hi - lo;
}

// Slope of a line through the origin with R^2 about the mean of y.
struct OriginFit {
  double slope = 0.0;
  double r2 = 0.0;
  double residual_rms = 0.0;
};

OriginFit fit_through_origin(const std::vector<double>& f, const std::vector<double>& y) {
  double sff = 0.0, sfy = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    sff += f[i] * f[i];
    sfy += f[i] * y[i];
    mean += y[i];
  }
  mean /= static_cast<double>(y.size());
  OriginFit fit;
  fit.slope = sfy / sff;
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double r = y[i] - fit.slope * f[i];
    ss_res += r * r;
    ss_tot += (y[i] - mean) * (y[i] - mean);
  }
  fit.r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res == 0.0 ? 1.0 : 0.0);
  fit.residual_rms = std::sqrt(ss_res / static_cast<double>(f.size()));
  return fit;
}

}  // namespace

NeuronModel calibrate_leak(const NeuronModel& model, const PositionTrace& leak_trace) {
  const std::vector<VelocitySample> vs = velocities(leak_trace);
  if (vs.size() < 20) {
    throw CalibrationError("leak trace has " + std::to_string(vs.size()) +
                           " usable velocity samples, need 20");
  }
  if (travel(leak_trace) < 0.5 * model.cell_size) {
    throw CalibrationError("leak trace shows no wall motion");
  }
  std::vector<double> force, v;
  double sff = 0.0;
  for (const VelocitySample& s : vs) {
    force.push_back(shape_force(model, s.x));
    v.push_back(s.v);
    sff += force.back() * force.back();
  }
  if (!(sff > 0.0)) throw CalibrationError("leak trace samples carry no shape force");
  const OriginFit fit = fit_through_origin(force, v);
  if (!(fit.slope > 0.0)) {
    throw CalibrationError("leak trace moves against the shape force (fitted mobility " +
                           format_number(fit.slope) + " m/(s N))");
  }
  NeuronModel out = model;
  out.mobility = fit.slope;
  out.fit.mobility_r2 = fit.r2;
  out.fit.leak_residual_rms = fit.residual_rms;
  out.fit.leak_samples = static_cast<int>(vs.size());
  out.fit.calibrated = true;
  return out;
}

NeuronModel calibrate(const NeuronModel& model, const PositionTrace& leak_trace,
                      const PositionTrace& integ_trace) {
  NeuronModel out = calibrate_leak(model, leak_trace);
  if (integ_trace.current == 0.0) {
    throw CalibrationError("integration trace was recorded at zero current");
  }
  const std::vector<VelocitySample> vs = velocities(integ_trace);
  if (vs.size() < 3 || travel(integ_trace) < 0.5 * model.cell_size) {
    throw CalibrationError("integration trace shows no wall motion");
  }
  std::vector<double> j, r;
  for (const VelocitySample& s : vs) {
    j.push_back(current_density(out, s.x, integ_trace.current));
    r.push_back(s.v - out.mobility * shape_force(out, s.x));
  }
  const OriginFit fit = fit_through_origin(j, r);
  if (!(fit.slope > 0.0)) {
    throw CalibrationError("integration trace moves against the current (fitted gain " +
                           format_number(fit.slope) + " m^3/(A s))");
  }
  out.stt_gain = fit.slope;
  out.fit.stt_r2 = fit.r2;
  out.fit.integ_residual_rms = fit.residual_rms;
  out.fit.integ_samples = static_cast<int>(vs.size());
  return out;
}

PositionTrace simulate_reduced(const NeuronModel& model, double x0, double current,
                               double t_end, double sample_dt) {
  if (!(sample_dt > 0.0)) throw InvalidArgument("sample_dt must be > 0");
  NeuronModel free_run = model;
  free_run.threshold_x = std::numeric_limits<double>::infinity();
  PositionTrace trace;
  trace.shape_id = shape_id(model.shape);
  trace.current = current;
  NeuronState state;
  state.x = std::clamp(x0, model.x_min, model.x_max);
  trace.samples.push_back({0.0, state.x});
  const auto n = static_cast<long>(std::floor(t_end / sample_dt + 1e-9));
  for (long k = 1; k <= n; ++k) {
    step_neuron(free_run, state, current, sample_dt);
    trace.samples.push_back({k * sample_dt, state.x});
  }
  return trace;
}

double trace_rms_error(const NeuronModel& model, const PositionTrace& trace) {
  const std::vector<TraceSample> s = trace.usable_samples();
  if (s.empty()) throw InvalidArgument("trace_rms_error: empty trace");
  NeuronModel free_run = model;
  free_run.threshold_x = std::numeric_limits<double>::infinity();
  NeuronState state;
  state.x = std::clamp(s.front().x, model.x_min, model.x_max);
  state.t = s.front().t;
  double ss = 0.0;
  for (const TraceSample& p : s) {
    if (p.t > state.t) step_neuron(free_run, state, trace.current, p.t - state.t);
    ss += (state.x - p.x) * (state.x - p.x);
  }
  return std::sqrt(ss / static_cast<double>(s.size()));
}

void to_json(nlohmann::json& j, const NeuronModel& m) {
  j = nlohmann::json{{"format", "dwlif-neuron"},
                     {"version", 1},
                     {"shape", m.shape},
                     {"wall_energy_density", m.wall_energy_density},
                     {"mobility", m.mobility},
                     {"stt_gain", m.stt_gain},
                     {"threshold_x", m.threshold_x},
                     {"reset_x", m.reset_x},
                     {"x_min", m.x_min},
                     {"x_max", m.x_max},
                     {"cell_size", m.cell_size}};
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); };
  j["fit"] = {{"calibrated", m.fit.calibrated},
              {"mobility_r2", num(m.fit.mobility_r2)},
              {"stt_r2", num(m.fit.stt_r2)},
              {"leak_residual_rms", num(m.fit.leak_residual_rms)},
              {"integ_residual_rms", num(m.fit.integ_residual_rms)},
              {"leak_samples", m.fit.leak_samples},
              {"integ_samples", m.fit.integ_samples}};
}

void from_json(const nlohmann::json& j, NeuronModel& m) {
  NeuronModel out;
  out.shape = j.at("shape").get<TrackShape>();
  out.wall_energy_density = j.at("wall_energy_density").get<double>();
  out.mobility = j.at("mobility").get<double>();
  out.stt_gain = j.at("stt_gain").get<double>();
  out.threshold_x = j.at("threshold_x").get<double>();
  out.reset_x = j.at("reset_x").get<double>();
  out.x_min = j.at("x_min").get<double>();
  out.x_max = j.at("x_max").get<double>();
  out.cell_size = j.value("cell_size", out.cell_size);
  if (j.contains("fit")) {
    const auto& f = j.at("fit");
    auto num = [&](const char* key) {
      return f.contains(key) && f.at(key).is_number() ? f.at(key).get<double>()
                                                       : std::numeric_limits<double>::quiet_NaN();
    };
    out.fit.calibrated = f.value("calibrated", false);
    out.fit.mobility_r2 = num("mobility_r2");
    out.fit.stt_r2 = num("stt_r2");
    out.fit.leak_residual_rms = num("leak_residual_rms");
    out.fit.integ_residual_rms = num("integ_residual_rms");
    out.fit.leak_samples = f.value("leak_samples", 0);
    out.fit.integ_samples = f.value("integ_samples", 0);
  }
  out.validate();
  m = out;
}

void save_neuron_model(const std::filesystem::path& path, const NeuronModel& model) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << nlohmann::json(model).dump(2) << '\n';
}

NeuronModel load_neuron_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read " + path.string());
  return nlohmann::json::parse(in, nullptr, true, true).get<NeuronModel>();
}

}  // namespace dwlif
