#include "dwlif/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "dwlif/serialize.hpp"

namespace dwlif {

using nlohmann::json;

std::string_view to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Leak: return "leak";
    case ExperimentKind::Integrate: return "integrate";
    case ExperimentKind::RmseSweep: return "rmse_sweep";
    case ExperimentKind::SquashSweep: return "squash_sweep";
    case ExperimentKind::Activation: return "activation";
    case ExperimentKind::NetworkInfer: return "network_infer";
  }
  return "?";
}

namespace {

std::string describe(const std::vector<ConfigIssue>& issues) {
  std::ostringstream s;
  for (const ConfigIssue& i : issues) {
    if (s.tellp() > 0) s << '\n';
    if (i.line > 0) s << "line " << i.line << ": ";
    s << i.field << ": " << i.message;
  }
  return s.str();
}

}  // namespace

ConfigError::ConfigError(std::vector<ConfigIssue> issues)
    : InvalidArgument(describe(issues)), issues_(std::move(issues)) {}

namespace {

const std::set<std::string> kTopKeys = {"experiment", "output_dir", "shape", "material",
                                        "grid", "run", "currents", "sweep", "activation",
                                        "network", "seed"};
const std::set<std::string> kShapeKeys = {"kind", "length", "w_wide", "w_narrow", "b", "w1",
                                          "constriction_width", "constriction_extent",
                                          "thickness"};
const std::set<std::string> kMaterialKeys = {"a_ex", "alpha", "xi", "m_sat", "ku1",
                                             "polarization", "gamma"};
const std::set<std::string> kGridKeys = {"cell_size", "fixed_margin"};
const std::set<std::string> kRunKeys = {"t_end", "sample_dt", "x_start", "tolerance",
                                        "max_dt", "settle_time_cap"};
const std::set<std::string> kSweepKeys = {"b", "w1"};
const std::set<std::string> kActivationKeys = {"mode", "threshold_fraction", "rate_window",
                                               "rate_dt", "neuron_model"};
const std::set<std::string> kNetworkKeys = {"file", "spikes", "input_rate", "dt"};

class Reader {
 public:
  Reader(const std::string& text, std::filesystem::path base)
      : text_(text), base_(std::move(base)) {}

  void issue(const std::string& field, const std::string& message) {
    issues_.push_back({field, message, line_of(field)});
  }
  const std::vector<ConfigIssue>& issues() const { return issues_; }

  // Locates the last path component as a quoted key in the source text.
  int line_of(const std::string& field) const {
    std::string key = field.substr(field.rfind('.') + 1);
    key = key.substr(0, key.find('['));
    const auto pos = text_.find("\"" + key + "\"");
    if (pos == std::string::npos) return 0;
    return 1 + static_cast<int>(std::count(text_.begin(), text_.begin() + pos, '\n'));
  }

  void check_keys(const json& obj, const std::set<std::string>& known,
                  const std::string& prefix) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (!known.count(it.key())) issue(prefix + it.key(), "unknown field");
    }
  }

  const json* section(const json& doc, const std::string& key) {
    if (!doc.contains(key)) return nullptr;
    const json& s = doc.at(key);
    if (!s.is_object()) {
      issue(key, "must be an object");
      return nullptr;
    }
    return &s;
  }

  double number(const json* obj, const std::string& key, const std::string& path,
                double fallback) {
    if (obj == nullptr || !obj->contains(key) || obj->at(key).is_null()) return fallback;
    const json& v = obj->at(key);
    if (!v.is_number()) {
      issue(path, "must be a number");
      return fallback;
    }
    const double d = v.get<double>();
    if (!std::isfinite(d)) issue(path, "must be finite");
    return d;
  }

  double positive(const json* obj, const std::string& key, const std::string& path,
                  double fallback) {
    const double d = number(obj, key, path, fallback);
    if (!(d > 0.0)) issue(path, "must be > 0");
    return d;
  }

  std::vector<double> numbers(const json* obj, const std::string& key, const std::string& path,
                              std::vector<double> fallback) {
    if (obj == nullptr || !obj->contains(key)) return fallback;
    const json& v = obj->at(key);
    if (!v.is_array()) {
      issue(path, "must be an array of numbers");
      return fallback;
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) {
        issue(path + "[" + std::to_string(i) + "]", "must be a number");
        continue;
      }
      out.push_back(v[i].get<double>());
    }
    return out;
  }

  std::optional<std::string> string(const json* obj, const std::string& key,
                                    const std::string& path) {
    if (obj == nullptr || !obj->contains(key) || obj->at(key).is_null()) return std::nullopt;
    if (!obj->at(key).is_string()) {
      issue(path, "must be a string");
      return std::nullopt;
    }
    return obj->at(key).get<std::string>();
  }

  std::optional<std::filesystem::path> existing_file(const json* obj, const std::string& key,
                                                     const std::string& path) {
    const auto s = string(obj, key, path);
    if (!s) return std::nullopt;
    std::filesystem::path p = *s;
    if (p.is_relative()) p = base_ / p;
    if (!std::filesystem::is_regular_file(p)) {
      issue(path, "file not found: " + p.string());
      return std::nullopt;
    }
    return p;
  }

 private:
  const std::string& text_;
  std::filesystem::path base_;
  std::vector<ConfigIssue> issues_;
};

std::vector<double> range(double lo, double hi, double step) {
  std::vector<double> out;
  const auto n = static_cast<int>(std::llround((hi - lo) / step));
  for (int k = 0; k <= n; ++k) out.push_back(lo + k * step);
  return out;
}

bool strictly_increasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (!(v[i] > v[i - 1])) return false;
  }
  return true;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& source,
                              const ConfigOverrides& overrides) {
  json doc;
  try {
    doc = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + upto, '\n'));
    throw ConfigError({{"(syntax)", e.what(), line}});
  }
  if (!doc.is_object()) throw ConfigError({{"(root)", "config must be a JSON object", 1}});

  Reader r(text, source.parent_path());
  r.check_keys(doc, kTopKeys, "");
  ExperimentConfig cfg;
  cfg.source = source;

  // experiment
  const json* root = &doc;
  if (const auto kind = r.string(root, "experiment", "experiment")) {
    bool found = false;
    for (auto k : {ExperimentKind::Leak, ExperimentKind::Integrate, ExperimentKind::RmseSweep,
                   ExperimentKind::SquashSweep, ExperimentKind::Activation,
                   ExperimentKind::NetworkInfer}) {
      if (*kind == to_string(k)) {
        cfg.kind = k;
        found = true;
      }
    }
    if (!found) {
      r.issue("experiment", "unknown kind '" + *kind +
                                "' (leak, integrate, rmse_sweep, squash_sweep, activation, "
                                "network_infer)");
    }
  } else {
    r.issue("experiment", "missing required field");
  }

  // output_dir
  if (overrides.output_dir) {
    cfg.output_dir = *overrides.output_dir;
  } else if (const auto out = r.string(root, "output_dir", "output_dir")) {
    cfg.output_dir = *out;
    if (cfg.output_dir.is_relative()) cfg.output_dir = source.parent_path() / cfg.output_dir;
  } else {
    r.issue("output_dir", "missing required field (or pass --out-dir)");
  }

  // shape
  const json* shape = r.section(doc, "shape");
  if (shape) r.check_keys(*shape, kShapeKeys, "shape.");
  ShapeKind kind = cfg.kind == ExperimentKind::RmseSweep    ? ShapeKind::Exponential
                   : cfg.kind == ExperimentKind::SquashSweep ? ShapeKind::Constricted
                                                             : ShapeKind::Trapezoid;
  if (const auto name = r.string(shape, "kind", "shape.kind")) {
    try {
      kind = shape_kind_from_string(*name);
    } catch (const InvalidArgument& e) {
      r.issue("shape.kind", e.what());
    }
  }
  if (cfg.kind == ExperimentKind::RmseSweep && kind != ShapeKind::Exponential) {
    r.issue("shape.kind", "rmse_sweep needs an exponential shape");
  }
  if (cfg.kind == ExperimentKind::SquashSweep && kind != ShapeKind::Constricted) {
    r.issue("shape.kind", "squash_sweep needs a constricted shape");
  }
  ShapeParams sp;
  sp.length = r.number(shape, "length", "shape.length", sp.length);
  sp.w_wide = r.number(shape, "w_wide", "shape.w_wide", sp.w_wide);
  sp.w_narrow = r.number(shape, "w_narrow", "shape.w_narrow", sp.w_narrow);
  sp.b = r.number(shape, "b", "shape.b", sp.b);
  sp.w1 = r.number(shape, "w1", "shape.w1", sp.w1);
  sp.constriction_width =
      r.number(shape, "constriction_width", "shape.constriction_width", sp.constriction_width);
  sp.constriction_extent = r.number(shape, "constriction_extent", "shape.constriction_extent",
                                    sp.constriction_extent);
  sp.thickness = r.number(shape, "thickness", "shape.thickness", sp.thickness);
  try {
    cfg.shape = make_track_shape(kind, sp);
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    r.issue("shape." + msg.substr(0, msg.find(' ')), msg);
  }

  // material
  const json* mat = r.section(doc, "material");
  if (mat) r.check_keys(*mat, kMaterialKeys, "material.");
  MaterialParams& m = cfg.material;
  m.a_ex = r.number(mat, "a_ex", "material.a_ex", m.a_ex);
  m.alpha = r.number(mat, "alpha", "material.alpha", m.alpha);
  m.xi = r.number(mat, "xi", "material.xi", m.xi);
  m.m_sat = r.number(mat, "m_sat", "material.m_sat", m.m_sat);
  m.ku1 = r.number(mat, "ku1", "material.ku1", m.ku1);
  m.polarization = r.number(mat, "polarization", "material.polarization", m.polarization);
  m.gamma = r.number(mat, "gamma", "material.gamma", m.gamma);
  bool material_ok = true;
  try {
    m.validate();
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    r.issue("material." + msg.substr(0, msg.find(' ')), msg);
    material_ok = false;
  }

  // grid
  const json* grid = r.section(doc, "grid");
  if (grid) r.check_keys(*grid, kGridKeys, "grid.");
  cfg.sim.cell_size = r.positive(grid, "cell_size", "grid.cell_size", cfg.sim.cell_size);
  if (material_ok && cfg.sim.cell_size > m.exchange_length()) {
    r.issue("grid.cell_size", "must not exceed the exchange length " +
                                  format_number(m.exchange_length()) +
                                  " m (use --resolution-scale for coarse smoke runs)");
  }
  cfg.sim.fixed_margin =
      r.positive(grid, "fixed_margin", "grid.fixed_margin", cfg.sim.fixed_margin);
  if (!(overrides.resolution_scale > 0.0) || !std::isfinite(overrides.resolution_scale)) {
    r.issue("--resolution-scale", "must be > 0");
  } else {
    cfg.resolution_scale = overrides.resolution_scale;
    cfg.sim.cell_size *= overrides.resolution_scale;
  }

  // run
  const json* run = r.section(doc, "run");
  if (run) r.check_keys(*run, kRunKeys, "run.");
  const double t_default = cfg.kind == ExperimentKind::SquashSweep    ? 100e-9
                           : cfg.kind == ExperimentKind::NetworkInfer ? 1e-6
                                                                      : 20e-9;
  cfg.t_end = r.positive(run, "t_end", "run.t_end", t_default);
  cfg.sim.sample_dt = r.positive(run, "sample_dt", "run.sample_dt", cfg.sim.sample_dt);
  cfg.sim.integrator.tolerance =
      r.positive(run, "tolerance", "run.tolerance", cfg.sim.integrator.tolerance);
  cfg.sim.integrator.max_dt = r.positive(run, "max_dt", "run.max_dt", cfg.sim.integrator.max_dt);
  cfg.sim.settle_time_cap =
      r.positive(run, "settle_time_cap", "run.settle_time_cap", cfg.sim.settle_time_cap);
  if (cfg.sim.sample_dt < cfg.sim.integrator.max_dt) {
    cfg.sim.integrator.max_dt = cfg.sim.sample_dt;
  }
  if (run && run->contains("x_start") && !run->at("x_start").is_null()) {
    const double x = r.number(run, "x_start", "run.x_start", 0.0);
    if (!(x > cfg.sim.fixed_margin && x < cfg.shape.length - cfg.sim.fixed_margin)) {
      r.issue("run.x_start", "must lie between the fixed regions");
    }
    cfg.x_start = x;
  }

  // currents
  std::vector<double> default_currents;
  if (cfg.kind == ExperimentKind::Integrate) default_currents = {1e-4, 5e-4};
  if (cfg.kind == ExperimentKind::Activation) default_currents = range(0.0, 5e-4, 1e-4);
  cfg.currents = r.numbers(root, "currents", "currents", default_currents);
  if (cfg.kind == ExperimentKind::Integrate && cfg.currents.empty()) {
    r.issue("currents", "integrate needs at least one current");
  }
  if (cfg.kind == ExperimentKind::Activation) {
    if (cfg.currents.size() < 3) r.issue("currents", "activation needs at least 3 currents");
    if (!strictly_increasing(cfg.currents)) r.issue("currents", "must be strictly increasing");
  }

  // sweep
  const json* sweep = r.section(doc, "sweep");
  if (sweep) r.check_keys(*sweep, kSweepKeys, "sweep.");
  cfg.b_values = r.numbers(sweep, "b", "sweep.b",
                           cfg.kind == ExperimentKind::RmseSweep ? range(1.0, 5.0, 0.5)
                                                                 : std::vector<double>{});
  for (std::size_t i = 0; i < cfg.b_values.size(); ++i) {
    if (!(cfg.b_values[i] >= 1.0)) {
      r.issue("sweep.b[" + std::to_string(i) + "]",
              "b must be >= 1 (b < 1 inverts the width profile)");
    }
  }
  cfg.w1_values = r.numbers(sweep, "w1", "sweep.w1",
                            cfg.kind == ExperimentKind::SquashSweep ? range(100e-9, 400e-9, 50e-9)
                                                                    : std::vector<double>{});
  for (std::size_t i = 0; i < cfg.w1_values.size(); ++i) {
    if (!(cfg.w1_values[i] >= cfg.shape.constriction_width)) {
      r.issue("sweep.w1[" + std::to_string(i) + "]", "w1 must be >= constriction_width");
    }
  }
  if (cfg.kind == ExperimentKind::RmseSweep && cfg.b_values.empty()) {
    r.issue("sweep.b", "rmse_sweep needs at least one b");
  }
  if (cfg.kind == ExperimentKind::SquashSweep && cfg.w1_values.empty()) {
    r.issue("sweep.w1", "squash_sweep needs at least one w1");
  }

  // activation
  const json* act = r.section(doc, "activation");
  if (act) r.check_keys(*act, kActivationKeys, "activation.");
  if (const auto mode = r.string(act, "mode", "activation.mode")) {
    if (*mode == "steady_position") cfg.activation_mode = ActivationMode::SteadyPosition;
    else if (*mode == "firing_rate") cfg.activation_mode = ActivationMode::FiringRate;
    else r.issue("activation.mode", "expected steady_position or firing_rate");
  }
  cfg.threshold_fraction = r.number(act, "threshold_fraction", "activation.threshold_fraction",
                                    cfg.threshold_fraction);
  if (!(cfg.threshold_fraction > 0.0 && cfg.threshold_fraction <= 1.0)) {
    r.issue("activation.threshold_fraction", "must lie in (0, 1]");
  }
  cfg.rate_window = r.positive(act, "rate_window", "activation.rate_window", cfg.rate_window);
  cfg.rate_dt = r.positive(act, "rate_dt", "activation.rate_dt", cfg.rate_dt);
  cfg.neuron_model = r.existing_file(act, "neuron_model", "activation.neuron_model");

  // network
  const json* net = r.section(doc, "network");
  if (net) r.check_keys(*net, kNetworkKeys, "network.");
  if (cfg.kind == ExperimentKind::NetworkInfer) {
    if (const auto f = r.existing_file(net, "file", "network.file")) {
      cfg.network_file = *f;
    } else if (!net || !net->contains("file")) {
      r.issue("network.file", "missing required field");
    }
  }
  cfg.spikes_file = r.existing_file(net, "spikes", "network.spikes");
  cfg.input_rate = r.positive(net, "input_rate", "network.input_rate", cfg.input_rate);
  cfg.network_dt = r.positive(net, "dt", "network.dt", cfg.network_dt);

  if (doc.contains("seed")) {
    if (!doc.at("seed").is_number_unsigned()) r.issue("seed", "must be a non-negative integer");
    else cfg.seed = doc.at("seed").get<std::uint64_t>();
  }

  if (!r.issues().empty()) throw ConfigError(r.issues());
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             const ConfigOverrides& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError({{"(file)", "cannot read " + path.string(), 0}});
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path, overrides);
}

json ExperimentConfig::resolved() const {
  json j;
  j["experiment"] = std::string(to_string(kind));
  j["source"] = source.string();
  j["output_dir"] = output_dir.string();
  j["shape"] = shape;
  j["material"] = material;
  j["grid"] = {{"cell_size", sim.cell_size},
               {"fixed_margin", sim.fixed_margin},
               {"resolution_scale", resolution_scale}};
  j["run"] = {{"t_end", t_end},
              {"sample_dt", sim.sample_dt},
              {"x_start", x_start ? json(*x_start) : json()},
              {"tolerance", sim.integrator.tolerance},
              {"max_dt", sim.integrator.max_dt},
              {"min_dt", sim.integrator.min_dt},
              {"relax_torque_tolerance", sim.relax.torque_tolerance},
              {"relax_damping", sim.relax.damping},
              {"relax_max_time", sim.relax.max_time},
              {"settle_window", sim.settle_window},
              {"settle_speed", sim.settle_speed},
              {"settle_time_cap", sim.settle_time_cap}};
  j["currents"] = currents;
  j["sweep"] = {{"b", b_values}, {"w1", w1_values}};
  j["activation"] = {
      {"mode", activation_mode == ActivationMode::FiringRate ? "firing_rate" : "steady_position"},
      {"threshold_fraction", threshold_fraction},
      {"rate_window", rate_window},
      {"rate_dt", rate_dt},
      {"neuron_model", neuron_model ? json(neuron_model->string()) : json()}};
  j["network"] = {{"file", network_file.string()},
                  {"spikes", spikes_file ? json(spikes_file->string()) : json()},
                  {"input_rate", input_rate},
                  {"dt", network_dt}};
  j["seed"] = seed;
  return j;
}

}  // namespace dwlif
