#include "dwlif/llg.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dwlif/constants.hpp"
#include "dwlif/errors.hpp"

namespace dwlif {

using phys::kMu0;

// ---------------------------------------------------------------------------
// MaterialParams

double MaterialParams::k_eff() const { return ku1 - 0.5 * kMu0 * m_sat * m_sat; }

double MaterialParams::wall_parameter() const { return std::sqrt(a_ex / k_eff()); }

double MaterialParams::exchange_length() const {
  return std::sqrt(2.0 * a_ex / (kMu0 * m_sat * m_sat));
}

double MaterialParams::wall_energy_density() const {
  return 4.0 * std::sqrt(a_ex * k_eff());
}

double MaterialParams::stt_velocity_per_current_density() const {
  return polarization * phys::kBohrMagneton /
         (phys::kElementaryCharge * m_sat * (1.0 + xi * xi));
}

void MaterialParams::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw InvalidArgument(msg);
  };
  require(std::isfinite(a_ex) && a_ex > 0.0, "a_ex must be > 0");
  require(std::isfinite(m_sat) && m_sat > 0.0, "m_sat must be > 0");
  require(std::isfinite(ku1) && ku1 > 0.0, "ku1 must be > 0");
  require(std::isfinite(gamma) && gamma > 0.0, "gamma must be > 0");
  require(alpha > 0.0 && alpha <= 1.0, "alpha must lie in (0, 1]");
  require(xi > 0.0 && xi <= 1.0, "xi must lie in (0, 1]");
  require(polarization > 0.0 && polarization <= 1.0,
          "polarization must lie in (0, 1]");
  require(k_eff() > 0.0,
          "ku1 - mu0 m_sat^2 / 2 must be > 0 (perpendicular easy axis lost)");
}

// ---------------------------------------------------------------------------
// Lattice and state

std::shared_ptr<const Lattice> Lattice::build(const Mask& mask, const GridSpec& grid,
                                              double thickness) {
  if (mask.nx != grid.nx || mask.ny != grid.ny) {
    throw InvalidArgument("mask and grid dimensions differ");
  }
  if (!(thickness > 0.0)) throw InvalidArgument("thickness must be > 0");
  auto lat = std::make_shared<Lattice>();
  lat->grid = grid;
  lat->mask = mask;
  lat->thickness = thickness;
  lat->grid_to_compact.assign(grid.cell_count(), -1);
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) {
      const int k = grid.index(i, j);
      if (!mask.included[k]) continue;
      lat->grid_to_compact[k] = static_cast<int>(lat->cells.size());
      lat->cells.push_back(k);
      lat->fixed.push_back(mask.fixed[k]);
    }
  }
  const double h = grid.cell_size;
  const double mid = 0.5 * grid.nx * h;
  lat->fixed_left_edge = 0.0;
  lat->fixed_right_edge = grid.nx * h;
  bool right_seen = false;
  lat->nbr.resize(lat->cells.size());
  for (std::size_t c = 0; c < lat->cells.size(); ++c) {
    const int k = lat->cells[c];
    const int i = k % grid.nx;
    const int j = k / grid.nx;
    auto at = [&](int ii, int jj) {
      if (ii < 0 || jj < 0 || ii >= grid.nx || jj >= grid.ny) return -1;
      return lat->grid_to_compact[grid.index(ii, jj)];
    };
    lat->nbr[c] = {at(i - 1, j), at(i + 1, j), at(i, j - 1), at(i, j + 1)};
    if (lat->fixed[c]) {
      const double x = (i + 0.5) * h;
      if (x < mid) {
        lat->fixed_left_edge = std::max(lat->fixed_left_edge, x + 0.5 * h);
      } else {
        lat->fixed_right_edge = right_seen ? std::min(lat->fixed_right_edge, x - 0.5 * h)
                                           : x - 0.5 * h;
        right_seen = true;
      }
    }
  }
  if (!right_seen) {
    // Right edge of the last included column.
    int last = 0;
    for (int k : lat->cells) last = std::max(last, k % grid.nx);
    lat->fixed_right_edge = (last + 1) * h;
  }
  return lat;
}

double Lattice::x_of(int compact) const {
  return (cells[compact] % grid.nx + 0.5) * grid.cell_size;
}

double Lattice::y_of(int compact) const {
  return (cells[compact] / grid.nx + 0.5) * grid.cell_size;
}

MagState::MagState(std::shared_ptr<const Lattice> lattice)
    : m(lattice->cells.size(), Vec3{0.0, 0.0, 1.0}), lattice_(std::move(lattice)) {}

Vec3 MagState::at(int i, int j) const {
  const int c = lattice_->grid_to_compact[lattice_->grid.index(i, j)];
  return c < 0 ? Vec3{} : m[c];
}

// ---------------------------------------------------------------------------
// Fields and energy

namespace {

struct FieldCoefficients {
  double exchange;    // A/m per unit (m_j - m_i)
  double anisotropy;  // A/m per unit m_z
};

FieldCoefficients coefficients(const Lattice& lat, const MaterialParams& p) {
  const double h = lat.grid.cell_size;
  return {2.0 * p.a_ex / (kMu0 * p.m_sat * h * h),
          2.0 * p.k_eff() / (kMu0 * p.m_sat)};
}

inline Vec3 field_at(const Lattice& lat, const std::vector<Vec3>& m, std::size_t c,
                     const FieldCoefficients& k) {
  const Vec3 mc = m[c];
  Vec3 lap{};
  for (int q : lat.nbr[c]) {
    if (q >= 0) lap += m[q] - mc;
  }
  Vec3 h = k.exchange * lap;
  h.z += k.anisotropy * mc.z;
  return h;
}

std::vector<Vec3> field_of(const Lattice& lat, const std::vector<Vec3>& m,
                           const MaterialParams& p) {
  const FieldCoefficients k = coefficients(lat, p);
  std::vector<Vec3> out(m.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(m.size()); ++c) {
    out[c] = field_at(lat, m, c, k);
  }
  return out;
}

void renormalize(const Lattice& lat, std::vector<Vec3>& m) {
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(m.size()); ++c) {
    if (!lat.fixed[c]) m[c] = normalized(m[c]);
  }
}

}  // namespace

std::vector<Vec3> effective_field(const MagState& state, const MaterialParams& params) {
  return field_of(state.lattice(), state.m, params);
}

double total_energy(const MagState& state, const MaterialParams& params) {
  const Lattice& lat = state.lattice();
  const double h = lat.grid.cell_size;
  const double volume = lat.cell_volume();
  const double k_eff = params.k_eff();
  std::vector<double> per_cell(state.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(state.size()); ++c) {
    const Vec3 mc = state.m[c];
    double bonds = 0.0;
    // East and north bonds only, so every bond is counted once.
    for (int q : {lat.nbr[c][1], lat.nbr[c][3]}) {
      if (q < 0) continue;
      const Vec3 d = state.m[q] - mc;
      bonds += dot(d, d);
    }
    per_cell[c] = params.a_ex * bonds / (h * h) + k_eff * (1.0 - mc.z * mc.z);
  }
  double sum = 0.0;
  for (double e : per_cell) sum += e;
  return sum * volume;
}

double max_torque(const MagState& state, const MaterialParams& params) {
  const Lattice& lat = state.lattice();
  const FieldCoefficients k = coefficients(lat, params);
  double worst = 0.0;
  for (std::size_t c = 0; c < state.size(); ++c) {
    if (lat.fixed[c]) continue;
    const Vec3 t = cross(state.m[c], field_at(lat, state.m, c, k));
    worst = std::max(worst, norm(t));
  }
  return worst / params.m_sat;
}

double max_norm_error(const MagState& state) {
  double worst = 0.0;
  for (const Vec3& v : state.m) worst = std::max(worst, std::abs(norm(v) - 1.0));
  return worst;
}

// ---------------------------------------------------------------------------
// Integrator

namespace {

// Dormand-Prince 5(4) tableau.
constexpr double kA[7][6] = {
    {},
    {1.0 / 5},
    {3.0 / 40, 9.0 / 40},
    {44.0 / 45, -56.0 / 15, 32.0 / 9},
    {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729},
    {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656},
    {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84},
};
constexpr double kB5[7] = {35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192,
                           -2187.0 / 6784, 11.0 / 84, 0.0};
constexpr double kB4[7] = {5179.0 / 57600, 0.0, 7571.0 / 16695, 393.0 / 640,
                           -92097.0 / 339200, 187.0 / 2100, 1.0 / 40};

}  // namespace

LlgIntegrator::LlgIntegrator(const MaterialParams& params, const DriveSpec& drive,
                             IntegratorOptions options)
    : params_(params), drive_(drive), options_(options), dt_(options.initial_dt) {
  params_.validate();
  if (!std::isfinite(drive_.current_scale)) {
    throw InvalidArgument("drive current_scale must be finite");
  }
}

void LlgIntegrator::prepare(const Lattice& lat) {
  if (prepared_for_ == &lat) return;
  const std::size_t n = lat.cells.size();
  for (auto& k : k_) k.assign(n, Vec3{});
  stage_.assign(n, Vec3{});
  trial_.assign(n, Vec3{});
  drift_.assign(n, Vec3{});
  if (drive_.current_map != nullptr && drive_.current_scale != 0.0) {
    const CurrentMap& map = *drive_.current_map;
    if (map.grid.nx != lat.grid.nx || map.grid.ny != lat.grid.ny) {
      throw InvalidArgument("current map grid differs from the state grid");
    }
    const double u = drive_.current_scale * params_.stt_velocity_per_current_density();
    for (std::size_t c = 0; c < n; ++c) {
      const int k = lat.cells[c];
      drift_[c] = {u * map.jx[k], u * map.jy[k], 0.0};
    }
  }
  prepared_for_ = &lat;
}

void LlgIntegrator::rhs(const MagState& state, const std::vector<Vec3>& m,
                        std::vector<Vec3>& dmdt) const {
  const Lattice& lat = state.lattice();
  const MaterialParams& p = params_;
  const FieldCoefficients k = coefficients(lat, p);
  const double a = p.alpha;
  const double gmu = p.gamma * kMu0 / (1.0 + a * a);
  // Landau-Lifshitz form of the Zhang-Li torque; with |m| = 1 and
  // D = (u . grad) m this reads
  //   -(1 + a xi)/(1 + a^2) D + (xi - a)/(1 + a^2) m x D.
  const double c_adiabatic = (1.0 + a * p.xi) / (1.0 + a * a);
  const double c_nonadiabatic = (p.xi - a) / (1.0 + a * a);
  const double inv2h = 0.5 / lat.grid.cell_size;
  const double invh = 1.0 / lat.grid.cell_size;
  const bool driven = !drift_.empty() && drive_.current_scale != 0.0 &&
                      drive_.current_map != nullptr;

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(m.size()); ++c) {
    if (lat.fixed[c]) {
      dmdt[c] = Vec3{};
      continue;
    }
    const Vec3 mc = m[c];
    const Vec3 h = field_at(lat, m, c, k);
    const Vec3 mxh = cross(mc, h);
    Vec3 out = -gmu * (mxh + a * cross(mc, mxh));
    if (driven) {
      const auto& nb = lat.nbr[c];
      auto derivative = [&](int lo, int hi) {
        if (lo >= 0 && hi >= 0) return inv2h * (m[hi] - m[lo]);
        if (hi >= 0) return invh * (m[hi] - mc);
        if (lo >= 0) return invh * (mc - m[lo]);
        return Vec3{};
      };
      const Vec3 u = drift_[c];
      const Vec3 d = u.x * derivative(nb[0], nb[1]) + u.y * derivative(nb[2], nb[3]);
      out += -c_adiabatic * d + c_nonadiabatic * cross(mc, d);
    }
    dmdt[c] = out;
  }
}

double LlgIntegrator::attempt(MagState& state, double dt, std::vector<Vec3>& out) {
  const std::size_t n = state.size();
  rhs(state, state.m, k_[0]);
  for (int s = 1; s < 7; ++s) {
    for (std::size_t c = 0; c < n; ++c) {
      Vec3 acc = state.m[c];
      for (int j = 0; j < s; ++j) {
        if (kA[s][j] != 0.0) acc += (dt * kA[s][j]) * k_[j][c];
      }
      stage_[c] = acc;
    }
    rhs(state, stage_, k_[s]);
  }
  double err = 0.0;
  for (std::size_t c = 0; c < n; ++c) {
    Vec3 e{};
    for (int j = 0; j < 7; ++j) e += (kB5[j] - kB4[j]) * k_[j][c];
    const double ec = dt * std::max({std::abs(e.x), std::abs(e.y), std::abs(e.z)});
    if (!(ec == ec)) {  // NaN
      err = std::numeric_limits<double>::quiet_NaN();
      break;
    }
    err = std::max(err, ec);
  }
  out = stage_;  // stage 7 is the fifth-order solution (FSAL row)
  return err;
}

namespace {

[[noreturn]] void throw_non_finite(const MagState& state, const std::vector<Vec3>& m) {
  for (std::size_t c = 0; c < m.size(); ++c) {
    const Vec3& v = m[c];
    if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z)) {
      const Lattice& lat = state.lattice();
      std::ostringstream msg;
      msg << "non-finite magnetization at cell (" << lat.cells[c] % lat.grid.nx << ", "
          << lat.cells[c] / lat.grid.nx << ") at t = " << state.time;
      throw NonFiniteState(msg.str(), static_cast<int>(c));
    }
  }
  throw NonFiniteState("non-finite error estimate", -1);
}

}  // namespace

double LlgIntegrator::step(MagState& state, double dt) {
  prepare(state.lattice());
  const double err = attempt(state, dt, trial_);
  if (!std::isfinite(err)) throw_non_finite(state, trial_);
  state.m.swap(trial_);
  renormalize(state.lattice(), state.m);
  state.time += dt;
  ++accepted_;
  return err;
}

double LlgIntegrator::adaptive_step(MagState& state, double dt_limit) {
  prepare(state.lattice());
  while (true) {
    const double dt = std::min({dt_, dt_limit, options_.max_dt});
    const double err = attempt(state, dt, trial_);
    if (!std::isfinite(err)) throw_non_finite(state, trial_);
    const double ratio = err > 0.0 ? options_.tolerance / err : 1e9;
    if (err <= options_.tolerance) {
      state.m.swap(trial_);
      renormalize(state.lattice(), state.m);
      state.time += dt;
      ++accepted_;
      const double grow = std::clamp(0.9 * std::pow(ratio, 0.2), 0.2, 5.0);
      // A step clipped by dt_limit says nothing about the natural step size.
      if (dt >= dt_ || grow < 1.0) dt_ = std::min(dt * grow, options_.max_dt);
      return dt;
    }
    ++rejected_;
    dt_ = dt * std::max(0.2, 0.9 * std::pow(ratio, 0.25));
    if (dt_ < options_.min_dt) {
      std::ostringstream msg;
      msg << "step size underflow (dt = " << dt_ << " s) at t = " << state.time;
      throw ConvergenceError(msg.str(), err);
    }
  }
}

MagState step(const MagState& state, const MaterialParams& params,
              const DriveSpec& drive, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("dt must be > 0");
  LlgIntegrator integrator(params, drive);
  MagState next = state;
  integrator.step(next, dt);
  return next;
}

RunOutcome run(MagState& state, const MaterialParams& params, const DriveSpec& drive,
               double t_end, double sample_dt, const Recorder& recorder,
               const IntegratorOptions& options) {
  if (!(t_end >= 0.0)) throw InvalidArgument("t_end must be >= 0");
  if (!(sample_dt > 0.0)) throw InvalidArgument("sample_dt must be > 0");
  LlgIntegrator integrator(params, drive, options);
  RunOutcome outcome;
  const double t0 = state.time;
  std::string reason;
  auto record = [&] {
    if (recorder && recorder(state, reason) == RecordAction::Stop) {
      outcome.reason = reason.empty() ? "stopped by recorder" : reason;
      return false;
    }
    return true;
  };

  if (record()) {
    const long samples = static_cast<long>(std::ceil(t_end / sample_dt - 1e-9));
    for (long s = 1; s <= samples; ++s) {
      const double target = t0 + std::min(s * sample_dt, t_end);
      while (target - state.time > 1e-21) {
        integrator.adaptive_step(state, target - state.time);
      }
      state.time = target;
      if (!record()) break;
    }
  }
  outcome.t_final = state.time;
  outcome.steps = integrator.accepted_steps();
  outcome.rejected = integrator.rejected_steps();
  return outcome;
}

// ---------------------------------------------------------------------------
// Initial states

MagState make_wall_profile(std::shared_ptr<const Lattice> lattice,
                           const MaterialParams& params, double x0) {
  const Lattice& lat = *lattice;
  if (!(x0 > lat.fixed_left_edge && x0 < lat.fixed_right_edge)) {
    std::ostringstream msg;
    msg << "wall position x0 = " << x0 << " lies inside a fixed region ("
        << lat.fixed_left_edge << ", " << lat.fixed_right_edge << ")";
    throw InvalidArgument(msg.str());
  }
  MagState state(lattice);
  const double delta = params.wall_parameter();
  const double mid = 0.5 * lat.grid.nx * lat.grid.cell_size;
  for (std::size_t c = 0; c < state.size(); ++c) {
    const double x = lat.x_of(static_cast<int>(c));
    if (lat.fixed[c]) {
      state.m[c] = {0.0, 0.0, x < mid ? 1.0 : -1.0};
      continue;
    }
    // theta = 2 atan(exp((x - x0)/delta)): mz = -tanh, in-plane part along +x.
    const double arg = (x - x0) / delta;
    state.m[c] = {1.0 / std::cosh(arg), 0.0, -std::tanh(arg)};
  }
  return state;
}

MagState init_domain_wall(const Mask& mask, const GridSpec& grid, double thickness,
                          const MaterialParams& params, double x0,
                          const RelaxOptions& relax) {
  params.validate();
  MagState state = make_wall_profile(Lattice::build(mask, grid, thickness), params, x0);
  MaterialParams damped = params;
  damped.alpha = relax.damping;
  LlgIntegrator integrator(damped, DriveSpec::none());
  int since_check = 0;
  while (state.time < relax.max_time) {
    integrator.adaptive_step(state, relax.max_time - state.time);
    if (++since_check >= 10) {
      since_check = 0;
      if (max_torque(state, params) < relax.torque_tolerance) break;
    }
  }
  state.time = 0.0;
  return state;
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const std::filesystem::path& path, const MagState& state) {
  const Lattice& lat = state.lattice();
  nlohmann::json header = {
      {"format", "dwlif-magstate"}, {"version", 1},
      {"nx", lat.grid.nx},          {"ny", lat.grid.ny},
      {"cell_size", lat.grid.cell_size},
      {"thickness", lat.thickness}, {"time", state.time},
      {"cells", state.size()},
  };
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint " + path.string());
  out << header.dump() << '\n';
  out.write(reinterpret_cast<const char*>(lat.mask.included.data()),
            static_cast<std::streamsize>(lat.mask.included.size()));
  out.write(reinterpret_cast<const char*>(lat.mask.fixed.data()),
            static_cast<std::streamsize>(lat.mask.fixed.size()));
  out.write(reinterpret_cast<const char*>(state.m.data()),
            static_cast<std::streamsize>(state.m.size() * sizeof(Vec3)));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

MagState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string line;
  std::getline(in, line);
  const auto header = nlohmann::json::parse(line);
  if (header.value("format", "") != "dwlif-magstate" || header.value("version", 0) != 1) {
    throw std::runtime_error("not a dwlif-magstate v1 checkpoint: " + path.string());
  }
  GridSpec grid;
  grid.nx = header.at("nx").get<int>();
  grid.ny = header.at("ny").get<int>();
  grid.cell_size = header.at("cell_size").get<double>();
  Mask mask;
  mask.nx = grid.nx;
  mask.ny = grid.ny;
  mask.included.resize(grid.cell_count());
  mask.fixed.resize(grid.cell_count());
  in.read(reinterpret_cast<char*>(mask.included.data()), grid.cell_count());
  in.read(reinterpret_cast<char*>(mask.fixed.data()), grid.cell_count());
  MagState state(Lattice::build(mask, grid, header.at("thickness").get<double>()));
  if (state.size() != header.at("cells").get<std::size_t>()) {
    throw std::runtime_error("checkpoint cell count mismatch: " + path.string());
  }
  in.read(reinterpret_cast<char*>(state.m.data()),
          static_cast<std::streamsize>(state.m.size() * sizeof(Vec3)));
  if (!in) throw std::runtime_error("truncated checkpoint " + path.string());
  state.time = header.at("time").get<double>();
  return state;
}

}  // namespace dwlif
