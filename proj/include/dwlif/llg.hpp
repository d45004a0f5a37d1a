#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dwlif/currentmap.hpp"
#include "dwlif/geometry.hpp"
#include "dwlif/vec3.hpp"

namespace dwlif {

/// Micromagnetic constants of the free layer (CoFeB defaults) plus the
/// spin-transfer conversion parameters.
struct MaterialParams {
  double a_ex = 13e-12;          // J/m
  double alpha = 0.05;
  double xi = 0.05;
  double m_sat = 7.958e5;        // A/m
  double ku1 = 5e5;              // J/m^3, easy axis z
  double polarization = 0.7;
  double gamma = 1.7595e11;      // rad/(s T)

  /// ku1 reduced by the thin-film shape anisotropy mu0 Ms^2 / 2.
  double k_eff() const;
  /// Bloch parameter sqrt(a_ex / k_eff).
  double wall_parameter() const;
  /// sqrt(2 a_ex / (mu0 Ms^2)).
  double exchange_length() const;
  /// 4 sqrt(a_ex k_eff), energy per unit wall area.
  double wall_energy_density() const;
  /// Spin-drift velocity per unit current density,
  /// P mu_B / (e Ms (1 + xi^2)), in m^3/(A s).
  double stt_velocity_per_current_density() const;

  /// Throws InvalidArgument on any violated invariant.
  void validate() const;
};

/// Cell list and 4-neighbour table shared by every state on one mask.
struct Lattice {
  GridSpec grid;
  Mask mask;
  double thickness = 0.0;
  std::vector<int> cells;                   // grid index of each included cell
  std::vector<std::array<int, 4>> nbr;      // W, E, S, N as compact indices
  std::vector<std::uint8_t> fixed;          // per compact cell
  std::vector<int> grid_to_compact;         // -1 outside the mask
  double fixed_left_edge = 0.0;             // inner edge of the left pinned block
  double fixed_right_edge = 0.0;            // inner edge of the right pinned block

  static std::shared_ptr<const Lattice> build(const Mask& mask, const GridSpec& grid,
                                              double thickness);
  double x_of(int compact) const;
  double y_of(int compact) const;
  double cell_volume() const { return grid.cell_size * grid.cell_size * thickness; }
};

/// Unit magnetization on every included cell of a lattice.
class MagState {
 public:
  MagState() = default;
  explicit MagState(std::shared_ptr<const Lattice> lattice);

  const Lattice& lattice() const { return *lattice_; }
  std::shared_ptr<const Lattice> lattice_ptr() const { return lattice_; }
  std::size_t size() const { return m.size(); }
  /// Magnetization at grid cell (i, j); zero outside the mask.
  Vec3 at(int i, int j) const;

  std::vector<Vec3> m;
  double time = 0.0;

 private:
  std::shared_ptr<const Lattice> lattice_;
};

/// Applied drive: the unit-current solve times current_scale.
struct DriveSpec {
  const CurrentMap* current_map = nullptr;
  double current_scale = 0.0;

  static DriveSpec none() { return {}; }
};

struct RelaxOptions {
  double torque_tolerance = 1e-4;  // max |m x H| / Ms
  double damping = 0.5;
  double max_time = 0.2e-9;
};

/// Two-domain state: +z for x < x0, -z beyond, tanh profile with a Neel
/// core, then a short high-damping relaxation without current.
MagState init_domain_wall(const Mask& mask, const GridSpec& grid, double thickness,
                          const MaterialParams& params, double x0,
                          const RelaxOptions& relax = {});

/// Unrelaxed tanh profile; init_domain_wall minus the relaxation.
MagState make_wall_profile(std::shared_ptr<const Lattice> lattice,
                           const MaterialParams& params, double x0);

/// Exchange plus effective-anisotropy field in A/m, one entry per cell.
std::vector<Vec3> effective_field(const MagState& state, const MaterialParams& params);

/// Exchange plus anisotropy energy in J.
double total_energy(const MagState& state, const MaterialParams& params);

/// Largest |m x H_eff| / Ms over the free cells.
double max_torque(const MagState& state, const MaterialParams& params);

/// Largest | |m| - 1 | over the included cells.
double max_norm_error(const MagState& state);

struct IntegratorOptions {
  double tolerance = 1e-5;     // max per-step change error in m
  double max_dt = 1e-12;
  double min_dt = 1e-18;
  double initial_dt = 1e-13;
};

/// Dormand-Prince 5(4) integrator for Landau-Lifshitz-Gilbert dynamics with
/// Zhang-Li spin-transfer torque. Owns its stage buffers; one instance per
/// running state.
class LlgIntegrator {
 public:
  LlgIntegrator(const MaterialParams& params, const DriveSpec& drive,
                IntegratorOptions options = {});

  /// One fixed step of size dt; returns the embedded error estimate.
  double step(MagState& state, double dt);

  /// Adaptive step no longer than dt_limit. Returns the step taken.
  double adaptive_step(MagState& state, double dt_limit);

  /// Time derivative of m for the given state.
  void rhs(const MagState& state, const std::vector<Vec3>& m,
           std::vector<Vec3>& dmdt) const;

  const MaterialParams& params() const { return params_; }
  double suggested_dt() const { return dt_; }
  long accepted_steps() const { return accepted_; }
  long rejected_steps() const { return rejected_; }

 private:
  void prepare(const Lattice& lattice);
  double attempt(MagState& state, double dt, std::vector<Vec3>& out);

  MaterialParams params_;
  DriveSpec drive_;
  IntegratorOptions options_;
  const Lattice* prepared_for_ = nullptr;
  std::vector<Vec3> drift_;  // spin-drift velocity per cell (m/s), z unused
  std::array<std::vector<Vec3>, 7> k_;
  std::vector<Vec3> stage_;
  std::vector<Vec3> trial_;
  double dt_;
  long accepted_ = 0;
  long rejected_ = 0;
};

/// One fixed Dormand-Prince step. Throws NonFiniteState on overflow.
MagState step(const MagState& state, const MaterialParams& params,
              const DriveSpec& drive, double dt);

enum class RecordAction { Continue, Stop };

/// Called at t = 0 and at every sample instant. `reason` may be set when
/// returning Stop.
using Recorder = std::function<RecordAction(const MagState& state, std::string& reason)>;

struct RunOutcome {
  std::string reason = "completed";
  double t_final = 0.0;
  long steps = 0;
  long rejected = 0;
};

RunOutcome run(MagState& state, const MaterialParams& params, const DriveSpec& drive,
               double t_end, double sample_dt, const Recorder& recorder,
               const IntegratorOptions& options = {});

/// Flat binary checkpoint with a one-line JSON header.
void save_checkpoint(const std::filesystem::path& path, const MagState& state);
MagState load_checkpoint(const std::filesystem::path& path);

}  // namespace dwlif
