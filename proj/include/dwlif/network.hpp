#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <vector>

#include "dwlif/reduced.hpp"

namespace dwlif {

/// rows x cols conductance matrix (S) between `rows` inputs and `cols`
/// output neurons.
class Crossbar {
 public:
  Crossbar() = default;
  Crossbar(std::size_t rows, std::size_t cols, double v_pulse = 0.1,
           double pulse_width = 1e-9);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t synapse_count() const { return g_.size(); }
  std::size_t neuron_count() const { return rows_ + cols_; }

  double conductance(std::size_t i, std::size_t j) const { return g_[i * cols_ + j]; }
  void set_conductance(std::size_t i, std::size_t j, double g);
  const std::vector<double>& conductances() const { return g_; }

  double v_pulse() const { return v_pulse_; }
  double pulse_width() const { return pulse_width_; }

  /// Current into each output for the given active input rows, A.
  std::vector<double> output_currents(const std::vector<std::size_t>& active) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> g_;
  double v_pulse_ = 0.1;
  double pulse_width_ = 1e-9;
};

struct NeuronLayer {
  std::vector<std::shared_ptr<const NeuronModel>> models;
  std::vector<NeuronState> states;

  std::size_t size() const { return models.size(); }
  /// Puts every neuron at its model's reset position at t = 0.
  void reset();
};

/// Advances the layer by dt with the crossbar current of `active` inputs.
/// Returns the indices that fired, ascending.
std::vector<std::size_t> layer_step(const Crossbar& crossbar, NeuronLayer& layer,
                                    const std::vector<std::size_t>& active, double dt);

/// Sorted spike times per channel.
struct SpikeTrain {
  std::vector<std::vector<double>> channels;

  std::size_t channel_count() const { return channels.size(); }
  std::size_t spike_count() const;
  /// Throws InvalidArgument on negative or non-increasing times.
  void validate() const;
};

SpikeTrain read_spike_csv(std::istream& in, std::size_t channels);
void write_spike_csv(std::ostream& out, const SpikeTrain& train);

struct Network {
  std::vector<Crossbar> crossbars;
  std::vector<NeuronLayer> layers;  // layers[k] is fed by crossbars[k]

  std::size_t input_count() const { return crossbars.empty() ? 0 : crossbars.front().rows(); }
  std::size_t output_count() const { return layers.empty() ? 0 : layers.back().size(); }
  /// Throws InvalidArgument on incompatible dimensions.
  void validate() const;
};

struct InferenceResult {
  std::vector<std::size_t> counts;
  SpikeTrain output;
};

/// Event-driven run: steps end at every pulse edge and are at most dt long.
InferenceResult infer(Network& network, const SpikeTrain& input, double t_end, double dt);

/// JSON description; relative neuron model paths resolve against the file.
Network load_network(const std::filesystem::path& path);

}  // namespace dwlif
