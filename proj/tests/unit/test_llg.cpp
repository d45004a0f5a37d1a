#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <random>

#include "dwlif/analysis.hpp"
#include "dwlif/errors.hpp"
#include "dwlif/llg.hpp"

using namespace dwlif;

namespace {

constexpr double kMu0 = 4e-7 * 3.14159265358979323846 * 1.00000000055;

struct Strip {
  TrackShape shape;
  GridSpec grid;
  Mask mask;
  std::shared_ptr<const Lattice> lattice;
};

Strip strip(ShapeKind kind, ShapeParams p, double h, double margin = 40e-9) {
  Strip s;
  s.shape = make_track_shape(kind, p);
  s.grid = fit_grid(s.shape, h);
  s.mask = rasterize(s.shape, s.grid, margin);
  s.lattice = Lattice::build(s.mask, s.grid, s.shape.thickness);
  return s;
}

Strip rectangle(double length, double width, double h, double margin = 40e-9) {
  ShapeParams p;
  p.length = length;
  p.w_wide = p.w_narrow = width;
  return strip(ShapeKind::Trapezoid, p, h, margin);
}

// One free cell with no neighbours.
std::shared_ptr<const Lattice> single_cell(double h = 5e-9, double t = 1.5e-9) {
  GridSpec g{h, 1, 1};
  Mask m;
  m.nx = m.ny = 1;
  m.included = {1};
  m.fixed = {0};
  return Lattice::build(m, g, t);
}

Vec3 tilted(double theta, double phi = 0.0) {
  return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)};
}

}  // namespace

TEST_CASE("material derived quantities") {
  const MaterialParams p;
  const double k_eff = 5e5 - 0.5 * kMu0 * 7.958e5 * 7.958e5;
  CHECK(p.k_eff() == doctest::Approx(k_eff).epsilon(1e-6));
  CHECK(p.wall_parameter() == doctest::Approx(std::sqrt(13e-12 / k_eff)).epsilon(1e-6));
  CHECK(p.exchange_length() == doctest::Approx(5.72e-9).epsilon(2e-3));
  // Default cell size resolves the exchange length.
  CHECK(SimOptions{}.cell_size <= p.exchange_length());
  CHECK_NOTHROW(p.validate());
  MaterialParams bad = p;
  bad.ku1 = 3e5;  // below mu0 Ms^2 / 2
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = p;
  bad.alpha = 0.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = p;
  bad.polarization = 1.2;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("effective field of simple states") {
  const MaterialParams p;
  const Strip s = rectangle(400e-9, 50e-9, 5e-9);
  MagState up(s.lattice);
  const double h_k = 2.0 * p.k_eff() / (kMu0 * p.m_sat);
  for (const Vec3& h : effective_field(up, p)) {
    CHECK(h.x == 0.0);
    CHECK(h.y == 0.0);
    CHECK(h.z == doctest::Approx(h_k).epsilon(1e-10));
  }
  CHECK(total_energy(up, p) == 0.0);

  MagState one(single_cell());
  one.m[0] = tilted(0.3, 0.7);
  const Vec3 h = effective_field(one, p)[0];
  CHECK(h.x == 0.0);
  CHECK(h.y == 0.0);
  CHECK(h.z == doctest::Approx(h_k * std::cos(0.3)).epsilon(1e-10));
}

TEST_CASE("three-cell energy equals the hand stencil sum") {
  const MaterialParams p;
  const double h = 5e-9, t = 1.5e-9;
  GridSpec g{h, 3, 1};
  Mask m;
  m.nx = 3;
  m.ny = 1;
  m.included = {1, 1, 1};
  m.fixed = {0, 0, 0};
  MagState s(Lattice::build(m, g, t));
  s.m[1] = {0.0, 0.0, -1.0};
  // Two bonds with |dm|^2 = 4 each: 2 * a_ex * 4 / h^2 * (h^2 t).
  const double hand = 8.0 * p.a_ex * t;
  CHECK(total_energy(s, p) == doctest::Approx(hand).epsilon(1e-12));
  CHECK(total_energy(s, p) > 0.0);
}

TEST_CASE("effective field is the energy gradient") {
  const MaterialParams p;
  const Strip s = strip(ShapeKind::Trapezoid, {}, 10e-9);
  MagState state = make_wall_profile(s.lattice, p, 500e-9);
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (Vec3& v : state.m) v = normalized(v + Vec3{u(rng), u(rng), u(rng)});
  const std::vector<Vec3> field = effective_field(state, p);
  const double scale = kMu0 * p.m_sat * s.lattice->cell_volume();
  std::uniform_int_distribution<std::size_t> pick(0, state.size() - 1);
  for (int n = 0; n < 10; ++n) {
    const std::size_t c = pick(rng);
    const Vec3 m0 = state.m[c];
    double grad[3];
    for (int a = 0; a < 3; ++a) {
      const double eps = 1e-6;
      Vec3 plus = m0, minus = m0;
      (&plus.x)[a] += eps;
      (&minus.x)[a] -= eps;
      state.m[c] = plus;
      const double ep = total_energy(state, p);
      state.m[c] = minus;
      const double em = total_energy(state, p);
      grad[a] = (ep - em) / (2.0 * eps);
    }
    state.m[c] = m0;
    const Vec3 h_fd{-grad[0] / scale, -grad[1] / scale, -grad[2] / scale};
    CHECK(norm(h_fd - field[c]) / norm(field[c]) < 1e-4);
  }
}

TEST_CASE("relaxed wall: width, symmetry and energy") {
  const MaterialParams p;
  const Strip s = rectangle(600e-9, 100e-9, 2.5e-9);
  RelaxOptions relax;
  relax.max_time = 1e-9;
  const MagState state = init_domain_wall(s.mask, s.grid, s.shape.thickness, p, 300e-9, relax);

  double mean = 0.0;
  for (const Vec3& v : state.m) mean += v.z;
  CHECK(std::abs(mean / state.size()) < 0.05);

  // Column profile crossings at mz = +0.9 and -0.9.
  const int nx = s.grid.nx;
  std::vector<double> prof(nx, 0.0);
  std::vector<int> cnt(nx, 0);
  for (std::size_t c = 0; c < state.size(); ++c) {
    prof[s.lattice->cells[c] % nx] += state.m[c].z;
    cnt[s.lattice->cells[c] % nx] += 1;
  }
  auto crossing = [&](double level) {
    for (int i = 1; i < nx; ++i) {
      const double a = prof[i - 1] / cnt[i - 1] - level;
      const double b = prof[i] / cnt[i] - level;
      if (a > 0.0 && b <= 0.0) return s.grid.cell_size * (i - 0.5 + a / (a - b));
    }
    return -1.0;
  };
  const double width = crossing(-0.9) - crossing(0.9);
  const double delta = p.wall_parameter();
  CHECK(width == doctest::Approx(2.0 * std::atanh(0.9) * delta).epsilon(0.05));
  CHECK(width == doctest::Approx(3.14159265358979 * delta).epsilon(0.10));

  const double sigma = 4.0 * std::sqrt(p.a_ex * p.k_eff());
  CHECK(total_energy(state, p) == doctest::Approx(sigma * 100e-9 * s.shape.thickness).epsilon(0.15));
}

TEST_CASE("wall energy scales with the local track width") {
  const MaterialParams p;
  const Strip s = strip(ShapeKind::Trapezoid, {}, 10e-9);
  std::vector<double> e;
  for (double x0 : {300e-9, 500e-9, 700e-9}) {
    RelaxOptions relax;
    relax.max_time = 0.05e-9;
    const MagState st = init_domain_wall(s.mask, s.grid, s.shape.thickness, p, x0, relax);
    e.push_back(total_energy(st, p));
    const double sigma = p.wall_energy_density();
    CHECK(e.back() == doctest::Approx(sigma * width_at(s.shape, x0) * s.shape.thickness)
                          .epsilon(0.15));
  }
  CHECK(e[0] > e[1]);
  CHECK(e[1] > e[2]);
}

TEST_CASE("initial wall position and area imbalance") {
  const MaterialParams p;
  const Strip s = strip(ShapeKind::Trapezoid, {}, 10e-9);
  const MagState fresh = make_wall_profile(s.lattice, p, 437e-9);
  CHECK(std::abs(dw_position(fresh) - 437e-9) < s.grid.cell_size);
  auto mean_mz = [](const MagState& st) {
    double sum = 0.0;
    for (const Vec3& v : st.m) sum += v.z;
    return sum / st.size();
  };
  // +z fills x < x0: a wall near the narrow end leaves more +z area.
  CHECK(mean_mz(make_wall_profile(s.lattice, p, 850e-9)) > 0.0);
  CHECK(mean_mz(make_wall_profile(s.lattice, p, 150e-9)) < 0.0);
  CHECK_THROWS_AS(make_wall_profile(s.lattice, p, 20e-9), InvalidArgument);
  CHECK_THROWS_AS(make_wall_profile(s.lattice, p, 990e-9), InvalidArgument);
}

TEST_CASE("single-spin precession matches the Larmor frequency") {
  MaterialParams p;
  p.alpha = 1e-4;
  const double theta = 10.0 * 3.14159265358979 / 180.0;
  MagState s(single_cell());
  s.m[0] = tilted(theta);
  const double h = 2.0 * p.k_eff() / (kMu0 * p.m_sat) * std::cos(theta);
  const double f = p.gamma / (1.0 + p.alpha * p.alpha) * kMu0 * h / (2.0 * 3.14159265358979);

  LlgIntegrator integ(p, DriveSpec::none());
  const double dt = 0.2e-12;
  double phase = 0.0;
  double last = std::atan2(s.m[0].y, s.m[0].x);
  const int steps = 5000;  // ~7 periods
  for (int k = 0; k < steps; ++k) {
    integ.step(s, dt);
    const double now = std::atan2(s.m[0].y, s.m[0].x);
    double d = now - last;
    if (d > 3.14159265358979) d -= 2 * 3.14159265358979;
    if (d < -3.14159265358979) d += 2 * 3.14159265358979;
    phase += d;
    last = now;
  }
  const double measured = std::abs(phase) / (2 * 3.14159265358979) / (steps * dt);
  CHECK(measured == doctest::Approx(f).epsilon(0.01));
}

TEST_CASE("fixed-step order on smooth precession") {
  const MaterialParams p;
  auto evolve = [&](double dt, int n) {
    MagState s(single_cell());
    s.m[0] = tilted(0.5);
    LlgIntegrator integ(p, DriveSpec::none());
    for (int k = 0; k < n; ++k) integ.step(s, dt);
    return s.m[0];
  };
  const double T = 40e-12;
  const Vec3 ref = evolve(T / 3200, 3200);
  const double e1 = norm(evolve(T / 20, 20) - ref);
  const double e2 = norm(evolve(T / 40, 40) - ref);
  CHECK(std::log2(e1 / e2) >= 4.0);
}

TEST_CASE("uniform magnetization is unchanged by any current") {
  const MaterialParams p;
  const Strip s = rectangle(300e-9, 60e-9, 5e-9);
  const CurrentMap map = solve_current(s.mask, s.grid, s.shape.thickness, 1.0);
  MagState up(s.lattice);
  const MagState next = step(up, p, DriveSpec{&map, 5e-4}, 1e-12);
  for (const Vec3& v : next.m) CHECK(v == Vec3{0.0, 0.0, 1.0});
}

TEST_CASE("zero-current dynamics dissipate, stay normalized and keep pins") {
  const MaterialParams p;
  const Strip s = strip(ShapeKind::Trapezoid, {}, 10e-9);
  MagState state = make_wall_profile(s.lattice, p, 600e-9);
  std::vector<Vec3> pinned;
  for (std::size_t c = 0; c < state.size(); ++c) {
    if (s.lattice->fixed[c]) pinned.push_back(state.m[c]);
  }
  LlgIntegrator integ(p, DriveSpec::none());
  double e = total_energy(state, p);
  for (int k = 0; k < 400; ++k) {
    integ.adaptive_step(state, 1e-12);
    const double e_next = total_energy(state, p);
    CHECK(e_next <= e * (1.0 + 1e-6));
    CHECK(max_norm_error(state) < 1e-6);
    e = e_next;
  }
  std::size_t q = 0;
  for (std::size_t c = 0; c < state.size(); ++c) {
    if (s.lattice->fixed[c]) CHECK(std::memcmp(&state.m[c], &pinned[q++], sizeof(Vec3)) == 0);
  }
}

TEST_CASE("current moves the wall toward the narrow end") {
  const MaterialParams p;
  const Strip s = rectangle(400e-9, 50e-9, 5e-9);
  const CurrentMap map = solve_current(s.mask, s.grid, s.shape.thickness, 1.0);
  MagState state = init_domain_wall(s.mask, s.grid, s.shape.thickness, p, 150e-9);
  const double x0 = dw_position(state);
  run(state, p, DriveSpec{&map, 1e-4}, 2e-9, 1e-9, nullptr);
  const double u = p.stt_velocity_per_current_density() * 1e-4 / (50e-9 * s.shape.thickness);
  const double moved = dw_position(state) - x0;
  CHECK(moved > 0.0);
  CHECK(moved == doctest::Approx(u * 2e-9).epsilon(0.25));
}

TEST_CASE("non-finite state names the cell") {
  const MaterialParams p;
  const Strip s = rectangle(200e-9, 20e-9, 5e-9);
  MagState state(s.lattice);
  std::size_t bad = 0;
  for (std::size_t c = 0; c < state.size(); ++c) {
    if (!s.lattice->fixed[c]) {
      bad = c;
      break;
    }
  }
  state.m[bad] = {NAN, 0.0, 1.0};
  LlgIntegrator integ(p, DriveSpec::none());
  try {
    integ.step(state, 1e-13);
    FAIL("expected NonFiniteState");
  } catch (const NonFiniteState& e) {
    CHECK(e.cell() >= 0);
  }
}

TEST_CASE("run records the initial sample and every sample instant") {
  const MaterialParams p;
  const Strip s = rectangle(300e-9, 30e-9, 5e-9);
  MagState state = make_wall_profile(s.lattice, p, 150e-9);
  std::vector<double> times;
  Recorder rec = [&](const MagState& st, std::string&) {
    times.push_back(st.time);
    return RecordAction::Continue;
  };
  run(state, p, DriveSpec::none(), 0.0, 0.1e-9, rec);
  CHECK(times.size() == 1);
  times.clear();
  state.time = 0.0;
  const RunOutcome out = run(state, p, DriveSpec::none(), 0.5e-9, 0.1e-9, rec);
  REQUIRE(times.size() == 6);
  for (int k = 0; k < 6; ++k) CHECK(times[k] == doctest::Approx(k * 0.1e-9));
  CHECK(out.reason == "completed");
  CHECK_THROWS_AS(run(state, p, DriveSpec::none(), -1.0, 0.1e-9, rec), InvalidArgument);

  int calls = 0;
  Recorder stop = [&](const MagState&, std::string& why) {
    why = "enough";
    return ++calls >= 3 ? RecordAction::Stop : RecordAction::Continue;
  };
  state.time = 0.0;
  CHECK(run(state, p, DriveSpec::none(), 1e-9, 0.1e-9, stop).reason == "enough");
  CHECK(calls == 3);
}

TEST_CASE("rectangle wall stays put without current") {
  const MaterialParams p;
  const Strip s = rectangle(400e-9, 60e-9, 5e-9);
  MagState state = init_domain_wall(s.mask, s.grid, s.shape.thickness, p, 200e-9);
  const double x0 = dw_position(state);
  double worst = 0.0;
  Recorder rec = [&](const MagState& st, std::string&) {
    worst = std::max(worst, std::abs(dw_position(st) - x0));
    return RecordAction::Continue;
  };
  run(state, p, DriveSpec::none(), 20e-9, 0.5e-9, rec);
  CHECK(worst < 2e-9);
}

TEST_CASE("checkpoint round trip") {
  const MaterialParams p;
  const Strip s = strip(ShapeKind::Trapezoid, {}, 10e-9);
  MagState state = make_wall_profile(s.lattice, p, 420e-9);
  state.time = 3.25e-9;
  const auto path = std::filesystem::temp_directory_path() / "dwlif_checkpoint_test.bin";
  save_checkpoint(path, state);
  const MagState back = load_checkpoint(path);
  std::filesystem::remove(path);
  CHECK(back.time == state.time);
  REQUIRE(back.size() == state.size());
  for (std::size_t c = 0; c < state.size(); ++c) CHECK(back.m[c] == state.m[c]);
  CHECK(back.lattice().fixed == s.lattice->fixed);
  CHECK(back.lattice().grid.nx == s.grid.nx);
}
