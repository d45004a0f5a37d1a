#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dwlif/analysis.hpp"
#include "dwlif/config.hpp"
#include "dwlif/currentmap.hpp"
#include "dwlif/errors.hpp"
#include "dwlif/experiments.hpp"
#include "dwlif/network.hpp"
#include "dwlif/reduced.hpp"

namespace py = pybind11;
using namespace dwlif;

namespace {

py::array_t<double> column(const PositionTrace& tr, bool times) {
  py::array_t<double> out(static_cast<py::ssize_t>(tr.size()));
  auto v = out.mutable_unchecked<1>();
  for (std::size_t k = 0; k < tr.size(); ++k) {
    v(static_cast<py::ssize_t>(k)) = times ? tr.samples[k].t : tr.samples[k].x;
  }
  return out;
}

py::array_t<double> grid_array(const std::vector<double>& data, const GridSpec& g) {
  py::array_t<double> out({g.ny, g.nx});
  std::copy(data.begin(), data.end(), out.mutable_data());
  return out;
}

TrackShape shape_from(ShapeKind kind, double length, double w_wide, double w_narrow, double b,
                      double w1, double constriction_width, double constriction_extent,
                      double thickness) {
  ShapeParams p;
  p.length = length;
  p.w_wide = w_wide;
  p.w_narrow = w_narrow;
  p.b = b;
  p.w1 = w1;
  p.constriction_width = constriction_width;
  p.constriction_extent = constriction_extent;
  p.thickness = thickness;
  return make_track_shape(kind, p);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Domain-wall LIF neuron simulation core";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<DisconnectedMask>(m, "DisconnectedMask", PyExc_RuntimeError);
  py::register_exception<ConvergenceError>(m, "ConvergenceError", PyExc_RuntimeError);
  py::register_exception<NonFiniteState>(m, "NonFiniteState", PyExc_RuntimeError);
  py::register_exception<CalibrationError>(m, "CalibrationError", PyExc_RuntimeError);
  py::register_exception<WallSaturated>(m, "WallSaturated", PyExc_RuntimeError);

  py::enum_<ShapeKind>(m, "ShapeKind")
      .value("Trapezoid", ShapeKind::Trapezoid)
      .value("Exponential", ShapeKind::Exponential)
      .value("Constricted", ShapeKind::Constricted);

  py::class_<TrackShape>(m, "TrackShape")
      .def_readonly("kind", &TrackShape::kind)
      .def_readonly("length", &TrackShape::length)
      .def_readonly("w_wide", &TrackShape::w_wide)
      .def_readonly("w_narrow", &TrackShape::w_narrow)
      .def_readonly("b", &TrackShape::b)
      .def_readonly("w1", &TrackShape::w1)
      .def_readonly("constriction_width", &TrackShape::constriction_width)
      .def_readonly("constriction_extent", &TrackShape::constriction_extent)
      .def_readonly("thickness", &TrackShape::thickness)
      .def("__repr__", [](const TrackShape& s) { return "<TrackShape " + shape_id(s) + ">"; });

  const ShapeParams d;
  m.def("make_shape", &shape_from, py::arg("kind"), py::kw_only(), py::arg("length") = d.length,
        py::arg("w_wide") = d.w_wide, py::arg("w_narrow") = d.w_narrow, py::arg("b") = d.b,
        py::arg("w1") = d.w1, py::arg("constriction_width") = d.constriction_width,
        py::arg("constriction_extent") = d.constriction_extent,
        py::arg("thickness") = d.thickness);
  m.def("width_at", &width_at, py::arg("shape"), py::arg("d"));
  m.def("shape_area", &shape_area, py::arg("shape"));
  m.def("shape_id", &shape_id, py::arg("shape"));

  py::class_<MaterialParams>(m, "MaterialParams")
      .def(py::init<>())
      .def_readwrite("a_ex", &MaterialParams::a_ex)
      .def_readwrite("alpha", &MaterialParams::alpha)
      .def_readwrite("xi", &MaterialParams::xi)
      .def_readwrite("m_sat", &MaterialParams::m_sat)
      .def_readwrite("ku1", &MaterialParams::ku1)
      .def_readwrite("polarization", &MaterialParams::polarization)
      .def_readwrite("gamma", &MaterialParams::gamma)
      .def("k_eff", &MaterialParams::k_eff)
      .def("wall_parameter", &MaterialParams::wall_parameter)
      .def("exchange_length", &MaterialParams::exchange_length)
      .def("wall_energy_density", &MaterialParams::wall_energy_density)
      .def("validate", &MaterialParams::validate);

  py::class_<SimOptions>(m, "SimOptions")
      .def(py::init<>())
      .def_readwrite("cell_size", &SimOptions::cell_size)
      .def_readwrite("fixed_margin", &SimOptions::fixed_margin)
      .def_readwrite("sample_dt", &SimOptions::sample_dt)
      .def_readwrite("settle_window", &SimOptions::settle_window)
      .def_readwrite("settle_speed", &SimOptions::settle_speed)
      .def_readwrite("settle_time_cap", &SimOptions::settle_time_cap);

  py::class_<CurrentMap>(m, "CurrentMap")
      .def_readonly("total_current", &CurrentMap::total_current)
      .def_readonly("iterations", &CurrentMap::iterations)
      .def_readonly("residual", &CurrentMap::residual)
      .def_property_readonly("jx", [](const CurrentMap& c) { return grid_array(c.jx, c.grid); })
      .def_property_readonly("jy", [](const CurrentMap& c) { return grid_array(c.jy, c.grid); })
      .def("cross_section_current", &cross_section_current, py::arg("x"));
  m.def(
      "solve_current",
      [](const TrackShape& shape, double current, double cell_size) {
        const GridSpec g = fit_grid(shape, cell_size);
        return solve_current(rasterize(shape, g), g, shape.thickness, current);
      },
      py::arg("shape"), py::arg("current"), py::arg("cell_size") = 5e-9,
      py::call_guard<py::gil_scoped_release>());

  py::class_<PositionTrace>(m, "PositionTrace")
      .def_property_readonly("t", [](const PositionTrace& tr) { return column(tr, true); })
      .def_property_readonly("x", [](const PositionTrace& tr) { return column(tr, false); })
      .def_readonly("shape_id", &PositionTrace::shape_id)
      .def_readonly("current", &PositionTrace::current)
      .def_readonly("params_hash", &PositionTrace::params_hash)
      .def_readonly("stop_reason", &PositionTrace::stop_reason)
      .def("__len__", &PositionTrace::size)
      .def("to_csv", [](const PositionTrace& tr) {
        std::ostringstream s;
        write_trace_csv(s, tr);
        return s.str();
      });

  m.def("simulate_leaking", &simulate_leaking, py::arg("shape"), py::arg("params"),
        py::arg("t_end"), py::arg("x_start") = std::nullopt, py::arg("options") = SimOptions{},
        py::call_guard<py::gil_scoped_release>());
  m.def("simulate_integration", &simulate_integration, py::arg("shape"), py::arg("params"),
        py::arg("current"), py::arg("t_end"), py::arg("x_start") = std::nullopt,
        py::arg("options") = SimOptions{}, py::call_guard<py::gil_scoped_release>());
  m.def("wall_width", &wall_width, py::arg("params"));

  py::class_<LinearFit>(m, "LinearFit")
      .def_readonly("rmse", &LinearFit::rmse)
      .def_readonly("slope", &LinearFit::slope)
      .def_readonly("intercept", &LinearFit::intercept);
  py::class_<SigmoidReport>(m, "SigmoidReport")
      .def_readonly("inflection_x", &SigmoidReport::inflection_x)
      .def_readonly("max_slope_t", &SigmoidReport::max_slope_t)
      .def_readonly("max_slope", &SigmoidReport::max_slope)
      .def_readonly("monotone", &SigmoidReport::monotone)
      .def_readonly("interior_peak", &SigmoidReport::interior_peak)
      .def_readonly("sigmoidal", &SigmoidReport::sigmoidal);
  m.def("linearity_rmse", &linearity_rmse, py::arg("trace"));
  m.def("sigmoidality_check", &sigmoidality_check, py::arg("trace"));
  m.def("traversal_time", &traversal_time, py::arg("trace"), py::arg("length"));
  m.def("crossing_time", &crossing_time, py::arg("trace"), py::arg("x"));

  py::class_<NeuronModel>(m, "NeuronModel")
      .def_readonly("shape", &NeuronModel::shape)
      .def_readonly("wall_energy_density", &NeuronModel::wall_energy_density)
      .def_readwrite("mobility", &NeuronModel::mobility)
      .def_readwrite("stt_gain", &NeuronModel::stt_gain)
      .def_readwrite("threshold_x", &NeuronModel::threshold_x)
      .def_readwrite("reset_x", &NeuronModel::reset_x)
      .def_readonly("x_min", &NeuronModel::x_min)
      .def_readonly("x_max", &NeuronModel::x_max)
      .def("validate", &NeuronModel::validate)
      .def("save", [](const NeuronModel& n, const std::filesystem::path& p) {
        save_neuron_model(p, n);
      });
  py::class_<NeuronState>(m, "NeuronState")
      .def(py::init<>())
      .def_readwrite("x", &NeuronState::x)
      .def_readwrite("t", &NeuronState::t)
      .def_readonly("fired_at", &NeuronState::fired_at);
  m.def(
      "make_neuron_model",
      [](const TrackShape& shape, const MaterialParams& params, double threshold_fraction) {
        NeuronOptions o;
        o.threshold_fraction = threshold_fraction;
        return make_neuron_model(shape, params, o);
      },
      py::arg("shape"), py::arg("params") = MaterialParams{},
      py::arg("threshold_fraction") = 0.85);
  m.def("load_neuron_model", &load_neuron_model, py::arg("path"));
  m.def("shape_force", &shape_force, py::arg("model"), py::arg("x"));
  m.def("initial_state", &initial_state, py::arg("model"));
  m.def("step_neuron", &step_neuron, py::arg("model"), py::arg("state"), py::arg("current"),
        py::arg("dt"));
  m.def("simulate_reduced", &simulate_reduced, py::arg("model"), py::arg("x0"),
        py::arg("current"), py::arg("t_end"), py::arg("sample_dt") = 0.1e-9);
  m.def("calibrate", &calibrate, py::arg("model"), py::arg("leak_trace"),
        py::arg("integ_trace"));
  m.def("trace_rms_error", &trace_rms_error, py::arg("model"), py::arg("trace"));

  py::class_<Crossbar>(m, "Crossbar")
      .def(py::init<std::size_t, std::size_t, double, double>(), py::arg("rows"),
           py::arg("cols"), py::arg("v_pulse") = 0.1, py::arg("pulse_width") = 1e-9)
      .def_property_readonly("rows", &Crossbar::rows)
      .def_property_readonly("cols", &Crossbar::cols)
      .def_property_readonly("synapse_count", &Crossbar::synapse_count)
      .def_property_readonly("neuron_count", &Crossbar::neuron_count)
      .def("set_conductance", &Crossbar::set_conductance)
      .def("conductance", &Crossbar::conductance)
      .def("output_currents", &Crossbar::output_currents, py::arg("active"));
  py::class_<Network>(m, "Network")
      .def_property_readonly("input_count", &Network::input_count)
      .def_property_readonly("output_count", &Network::output_count);
  m.def("load_network", &load_network, py::arg("path"));
  m.def(
      "infer",
      [](Network& net, const std::vector<std::vector<double>>& spikes, double t_end, double dt) {
        SpikeTrain train;
        train.channels = spikes;
        const InferenceResult r = infer(net, train, t_end, dt);
        return py::make_tuple(r.counts, r.output.channels);
      },
      py::arg("network"), py::arg("spikes"), py::arg("t_end"), py::arg("dt") = 0.1e-9);

  m.def(
      "run_config",
      [](const std::filesystem::path& config, std::optional<std::filesystem::path> out_dir,
         int threads, double resolution_scale) {
        ConfigOverrides o;
        o.output_dir = std::move(out_dir);
        o.resolution_scale = resolution_scale;
        const ExperimentConfig cfg = load_config(config, o);
        py::gil_scoped_release release;
        std::ostringstream log;
        return run_experiment(cfg, threads, log);
      },
      py::arg("config"), py::arg("out_dir") = std::nullopt, py::arg("threads") = 1,
      py::arg("resolution_scale") = 1.0);
  m.def(
      "validate_config",
      [](const std::filesystem::path& config) { return load_config(config).resolved().dump(); },
      py::arg("config"));
}
