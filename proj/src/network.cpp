#include "dwlif/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "dwlif/errors.hpp"
#include "dwlif/serialize.hpp"

namespace dwlif {

Crossbar::Crossbar(std::size_t rows, std::size_t cols, double v_pulse, double pulse_width)
    : rows_(rows), cols_(cols), g_(rows * cols, 0.0), v_pulse_(v_pulse),
      pulse_width_(pulse_width) {
  if (rows == 0 || cols == 0) throw InvalidArgument("crossbar dimensions must be > 0");
  if (!std::isfinite(v_pulse)) throw InvalidArgument("v_pulse must be finite");
  if (!(pulse_width > 0.0)) throw InvalidArgument("pulse_width must be > 0");
}

void Crossbar::set_conductance(std::size_t i, std::size_t j, double g) {
  if (i >= rows_ || j >= cols_) throw InvalidArgument("crossbar index out of range");
  if (!(std::isfinite(g) && g >= 0.0)) throw InvalidArgument("conductance must be >= 0");
  g_[i * cols_ + j] = g;
}

std::vector<double> Crossbar::output_currents(const std::vector<std::size_t>& active) const {
  std::vector<double> current(cols_, 0.0);
  for (std::size_t i : active) {
    if (i >= rows_) throw InvalidArgument("active input " + std::to_string(i) + " out of range");
    for (std::size_t j = 0; j < cols_; ++j) current[j] += v_pulse_ * g_[i * cols_ + j];
  }
  return current;
}

void NeuronLayer::reset() {
  states.assign(models.size(), NeuronState{});
  for (std::size_t j = 0; j < models.size(); ++j) states[j] = initial_state(*models[j]);
}

std::vector<std::size_t> layer_step(const Crossbar& crossbar, NeuronLayer& layer,
                                    const std::vector<std::size_t>& active, double dt) {
  if (layer.size() != crossbar.cols() || layer.states.size() != layer.size()) {
    throw InvalidArgument("layer size does not match crossbar columns");
  }
  if (!(dt > 0.0) || dt > crossbar.pulse_width() * (1.0 + 1e-12)) {
    throw InvalidArgument("layer_step: dt must lie in (0, pulse_width]");
  }
  const std::vector<double> current = crossbar.output_currents(active);
  std::vector<std::size_t> fired;
  for (std::size_t j = 0; j < layer.size(); ++j) {
    if (step_neuron(*layer.models[j], layer.states[j], current[j], dt)) fired.push_back(j);
  }
  return fired;
}

std::size_t SpikeTrain::spike_count() const {
  std::size_t n = 0;
  for (const auto& c : channels) n += c.size();
  return n;
}

void SpikeTrain::validate() const {
  for (std::size_t c = 0; c < channels.size(); ++c) {
    const auto& times = channels[c];
    for (std::size_t k = 0; k < times.size(); ++k) {
      if (!(std::isfinite(times[k]) && times[k] >= 0.0)) {
        throw InvalidArgument("spike train channel " + std::to_string(c) +
                              ": negative or non-finite time");
      }
      if (k > 0 && !(times[k] > times[k - 1])) {
        throw InvalidArgument("spike train channel " + std::to_string(c) +
                              ": times must be strictly increasing");
      }
    }
  }
}

SpikeTrain read_spike_csv(std::istream& in, std::size_t channels) {
  SpikeTrain train;
  train.channels.resize(channels);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#' || line.rfind("channel", 0) == 0) continue;
    std::istringstream row(line);
    std::string a, b;
    if (!std::getline(row, a, ',') || !std::getline(row, b)) {
      throw InvalidArgument("spike csv line " + std::to_string(lineno) + ": expected channel,time");
    }
    std::size_t ch = 0;
    double t = 0.0;
    try {
      ch = std::stoul(a);
      t = std::stod(b);
    } catch (const std::exception&) {
      throw InvalidArgument("spike csv line " + std::to_string(lineno) + ": not a number");
    }
    if (ch >= channels) {
      throw InvalidArgument("spike csv line " + std::to_string(lineno) + ": channel " +
                            std::to_string(ch) + " out of range");
    }
    train.channels[ch].push_back(t);
  }
  for (auto& c : train.channels) std::sort(c.begin(), c.end());
  train.validate();
  return train;
}

void write_spike_csv(std::ostream& out, const SpikeTrain& train) {
  std::vector<std::pair<double, std::size_t>> events;
  for (std::size_t c = 0; c < train.channels.size(); ++c) {
    for (double t : train.channels[c]) events.emplace_back(t, c);
  }
  std::sort(events.begin(), events.end());
  out << "# dwlif-spikes v1\nchannel,time_seconds\n";
  for (const auto& [t, c] : events) out << c << ',' << format_number(t) << '\n';
}

void Network::validate() const {
  if (crossbars.empty()) throw InvalidArgument("network has no layers");
  if (crossbars.size() != layers.size()) {
    throw InvalidArgument("network needs one neuron layer per crossbar");
  }
  for (std::size_t k = 0; k < crossbars.size(); ++k) {
    if (layers[k].size() != crossbars[k].cols()) {
      throw InvalidArgument("layer " + std::to_string(k) + " has " +
                            std::to_string(layers[k].size()) + " neurons, crossbar has " +
                            std::to_string(crossbars[k].cols()) + " columns");
    }
    if (k > 0 && crossbars[k].rows() != crossbars[k - 1].cols()) {
      throw InvalidArgument("crossbar " + std::to_string(k) +
                            " rows do not match the previous layer size");
    }
  }
}

namespace {

// Pulses feeding one crossbar: (start time, channel), kept sorted.
using PulseList = std::vector<std::pair<double, std::size_t>>;

std::vector<std::size_t> active_at(const PulseList& pulses, double t, double width) {
  std::vector<std::size_t> active;
  for (const auto& [start, ch] : pulses) {
    if (start > t) break;
    if (t < start + width) active.push_back(ch);
  }
  std::sort(active.begin(), active.end());
  return active;
}

double next_edge(const PulseList& pulses, double t, double width) {
  double next = std::numeric_limits<double>::infinity();
  for (const auto& [start, ch] : pulses) {
    if (start > t) next = std::min(next, start);
    if (start + width > t) next = std::min(next, start + width);
  }
  return next;
}

}  // namespace

InferenceResult infer(Network& network, const SpikeTrain& input, double t_end, double dt) {
  network.validate();
  input.validate();
  if (input.channel_count() != network.input_count()) {
    throw InvalidArgument("spike train has " + std::to_string(input.channel_count()) +
                          " channels, network expects " +
                          std::to_string(network.input_count()));
  }
  if (!(dt > 0.0) || !(t_end >= 0.0)) throw InvalidArgument("infer: need dt > 0, t_end >= 0");
  for (NeuronLayer& layer : network.layers) layer.reset();

  const std::size_t n_layers = network.layers.size();
  std::vector<PulseList> pulses(n_layers);
  for (std::size_t c = 0; c < input.channel_count(); ++c) {
    for (double t : input.channels[c]) pulses[0].emplace_back(t, c);
  }
  std::sort(pulses[0].begin(), pulses[0].end());

  InferenceResult result;
  result.counts.assign(network.output_count(), 0);
  result.output.channels.resize(network.output_count());

  double t = 0.0;
  while (t < t_end) {
    double h = std::min(dt, t_end - t);
    for (std::size_t k = 0; k < n_layers; ++k) {
      const double w = network.crossbars[k].pulse_width();
      h = std::min({h, w, next_edge(pulses[k], t, w) - t});
    }
    const double t_next = t + h;
    for (std::size_t k = 0; k < n_layers; ++k) {
      const Crossbar& xb = network.crossbars[k];
      const auto active = active_at(pulses[k], t, xb.pulse_width());
      const auto fired = layer_step(xb, network.layers[k], active, h);
      for (std::size_t j : fired) {
        if (k + 1 < n_layers) {
          pulses[k + 1].emplace_back(t_next, j);
        } else {
          result.counts[j] += 1;
          result.output.channels[j].push_back(network.layers[k].states[j].fired_at.back());
        }
      }
      if (k + 1 < n_layers) std::sort(pulses[k + 1].begin(), pulses[k + 1].end());
    }
    t = t_next;
  }
  return result;
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read network file " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidArgument(path.string() + ": " + e.what());
  }
  const std::filesystem::path base = path.parent_path();
  std::map<std::string, std::shared_ptr<const NeuronModel>> cache;
  Network net;
  const auto& layers = doc.at("layers");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& L = layers[k];
    const auto& g = L.at("conductances");
    const std::size_t rows = g.size();
    const std::size_t cols = rows ? g[0].size() : 0;
    Crossbar xb(rows, cols, L.value("v_pulse", 0.1), L.value("pulse_width", 1e-9));
    for (std::size_t i = 0; i < rows; ++i) {
      if (g[i].size() != cols) {
        throw InvalidArgument("layer " + std::to_string(k) + ": ragged conductance matrix");
      }
      for (std::size_t j = 0; j < cols; ++j) xb.set_conductance(i, j, g[i][j].get<double>());
    }
    std::shared_ptr<const NeuronModel> model;
    const auto& ref = L.at("neuron_model");
    if (ref.is_string()) {
      std::filesystem::path p = ref.get<std::string>();
      if (p.is_relative()) p = base / p;
      auto& slot = cache[p.string()];
      if (!slot) slot = std::make_shared<const NeuronModel>(load_neuron_model(p));
      model = slot;
    } else if (ref.contains("mobility")) {
      model = std::make_shared<const NeuronModel>(ref.get<NeuronModel>());
    } else {
      // Shape only: the uncalibrated default model.
      NeuronOptions opt;
      opt.threshold_fraction = ref.value("threshold_fraction", opt.threshold_fraction);
      const MaterialParams mat =
          ref.contains("material") ? ref.at("material").get<MaterialParams>() : MaterialParams{};
      model = std::make_shared<const NeuronModel>(
          make_neuron_model(ref.at("shape").get<TrackShape>(), mat, opt));
    }
    NeuronLayer layer;
    layer.models.assign(cols, model);
    layer.reset();
    net.crossbars.push_back(std::move(xb));
    net.layers.push_back(std::move(layer));
  }
  net.validate();
  return net;
}

}  // namespace dwlif
