#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include <nlohmann/json.hpp>

#include "dwlif/errors.hpp"
#include "dwlif/reduced.hpp"

using namespace dwlif;

namespace {

const MaterialParams kMat{};

TrackShape trapezoid() { return make_track_shape(ShapeKind::Trapezoid); }

TrackShape exponential(double b) {
  ShapeParams p;
  p.b = b;
  return make_track_shape(ShapeKind::Exponential, p);
}

TrackShape constricted(double w1) {
  ShapeParams p;
  p.w1 = w1;
  return make_track_shape(ShapeKind::Constricted, p);
}

TrackShape rectangle() {
  ShapeParams p;
  p.w_wide = p.w_narrow = 200e-9;
  return make_track_shape(ShapeKind::Trapezoid, p);
}

// Cosine-ramp slope of the default constricted outline, written out here.
double constricted_slope(double w1, double x) {
  const double L = 1000e-9, half = 100e-9, cw = 50e-9;
  const double off = x - 0.5 * L;
  if (std::abs(off) >= half) return 0.0;
  const double s = std::abs(off) / half;
  const double dw_ds = (w1 - cw) * 0.5 * M_PI * std::sin(M_PI * s);
  return (off < 0.0 ? -1.0 : 1.0) * dw_ds / half;
}

double constricted_w(double w1, double x) {
  const double off = std::abs(x - 500e-9);
  if (off >= 100e-9) return w1;
  return 50e-9 + (w1 - 50e-9) * 0.5 * (1.0 - std::cos(M_PI * off / 100e-9));
}

}  // namespace

TEST_CASE("shape force on reference outlines") {
  const NeuronModel rect = make_neuron_model(rectangle(), kMat);
  for (double x = rect.x_min; x <= rect.x_max; x += 10e-9) CHECK(shape_force(rect, x) == 0.0);

  const NeuronModel trap = make_neuron_model(trapezoid(), kMat);
  const double expected = -trap.wall_energy_density * 1.5e-9 * (400e-9 - 100e-9) / 1000e-9;
  CHECK(trap.wall_energy_density == doctest::Approx(4.0 * std::sqrt(kMat.a_ex * kMat.k_eff())));
  for (double x = trap.x_min; x <= trap.x_max; x += 10e-9) {
    CHECK(shape_force(trap, x) == doctest::Approx(expected).epsilon(1e-9));
  }

  const NeuronModel c = make_neuron_model(constricted(400e-9), kMat);
  double peak = 0.0;
  for (double x = 400e-9; x <= 600e-9; x += 1e-9) peak = std::max(peak, std::abs(shape_force(c, x)));
  CHECK(peak == doctest::Approx(c.wall_energy_density * 1.5e-9 * constricted_slope(400e-9, 550e-9))
                    .epsilon(0.01));
  for (double x : {c.x_min, 150e-9, 250e-9, 380e-9, 620e-9, 750e-9, 900e-9, c.x_max}) {
    CAPTURE(x);
    CHECK(std::abs(shape_force(c, x)) < 0.01 * peak);
  }
}

TEST_CASE("default model coefficients") {
  const NeuronModel m = make_neuron_model(trapezoid(), kMat);
  const double a = kMat.alpha;
  const double mean_w = 250e-9;
  CHECK(m.mobility == doctest::Approx(a * kMat.gamma * kMat.wall_parameter() /
                                      ((1 + a * a) * 2 * kMat.m_sat * mean_w * 1.5e-9)));
  const double mu_b = 9.2740100783e-24, e = 1.602176634e-19;
  CHECK(m.stt_gain == doctest::Approx(kMat.polarization * mu_b / (e * kMat.m_sat) /
                                      (1 + kMat.xi * kMat.xi) * (1 + a * kMat.xi) / (1 + a * a))
                          .epsilon(1e-6));
  CHECK(m.threshold_x == doctest::Approx(850e-9));
  CHECK(m.x_min == doctest::Approx(40e-9));
  CHECK(m.x_max == doctest::Approx(960e-9));
  // Constant leftward force: the rest position is the left bound.
  CHECK(m.reset_x == doctest::Approx(m.x_min + m.cell_size));
  CHECK_THROWS_AS(make_neuron_model(trapezoid(), kMat, {1.5, 40e-9, 5e-9}), InvalidArgument);
}

TEST_CASE("zero current at rest on a rectangle leaves x unchanged") {
  const NeuronModel m = make_neuron_model(rectangle(), kMat);
  NeuronState s = initial_state(m);
  const double x0 = s.x;
  for (int k = 0; k < 1000; ++k) CHECK_FALSE(step_neuron(m, s, 0.0, 1e-9));
  CHECK(s.x == x0);
  CHECK(s.t == doctest::Approx(1e-6));
}

TEST_CASE("constant drive fires periodically at the quadrature period") {
  const NeuronModel m = make_neuron_model(trapezoid(), kMat);
  const double I = 1e-4, t = 1.5e-9, L = 1000e-9;
  const double force = -m.wall_energy_density * t * 300e-9 / L;
  auto v = [&](double x) {
    const double w = 400e-9 - 300e-9 * x / L;
    return m.mobility * force + m.stt_gain * I / (w * t);
  };
  // Simpson rule for the time from reset to threshold.
  const int n = 20000;
  const double a = m.reset_x, b = m.threshold_x, h = (b - a) / n;
  double sum = 1.0 / v(a) + 1.0 / v(b);
  for (int k = 1; k < n; ++k) sum += (k % 2 ? 4.0 : 2.0) / v(a + k * h);
  const double period = sum * h / 3.0;

  NeuronState s = initial_state(m);
  for (int k = 0; k < 20000; ++k) step_neuron(m, s, I, 0.1e-9);
  REQUIRE(s.fired_at.size() >= 10);
  CHECK(s.fired_at.front() == doctest::Approx(period).epsilon(0.02));
  for (std::size_t k = 1; k < s.fired_at.size(); ++k) {
    CHECK(s.fired_at[k] - s.fired_at[k - 1] == doctest::Approx(period).epsilon(0.02));
  }
}

TEST_CASE("current balancing the taper force settles without firing") {
  const double w1 = 400e-9;
  const NeuronModel m = make_neuron_model(constricted(w1), kMat);
  const double t = 1.5e-9;
  auto stall = [&](double x) {
    return m.mobility * m.wall_energy_density * t * std::abs(constricted_slope(w1, x)) *
           constricted_w(w1, x) * t / m.stt_gain;
  };
  double best = 0.0;
  for (double x = 400e-9; x <= 500e-9; x += 0.5e-9) best = std::max(best, stall(x));
  const double I = 0.5 * best;
  // Stable balance point: first x on the left taper where the stall current reaches I.
  double lo = 400e-9, hi = 400e-9;
  while (stall(hi) < I) hi += 0.5e-9;
  lo = hi - 0.5e-9;
  for (int k = 0; k < 60; ++k) {
    const double mid = 0.5 * (lo + hi);
    (stall(mid) < I ? lo : hi) = mid;
  }
  const double x_eq = 0.5 * (lo + hi);

  NeuronState s = initial_state(m);
  for (int k = 0; k < 20000; ++k) CHECK_FALSE(step_neuron(m, s, I, 0.1e-9));
  CHECK(s.fired_at.empty());
  CHECK(std::abs(s.x - x_eq) < m.cell_size);
  CHECK(s.x > 400e-9);
  CHECK(s.x < 500e-9);
}

TEST_CASE("calibration recovers the generating coefficients") {
  const NeuronModel base = make_neuron_model(exponential(3.0), kMat);
  NeuronModel truth = base;
  truth.mobility = 2.0 * base.mobility;
  truth.stt_gain = 0.5 * base.stt_gain;

  PositionTrace leak = simulate_reduced(truth, 600e-9, 0.0, 20e-9, 0.1e-9);
  PositionTrace integ = simulate_reduced(truth, 200e-9, 1e-4, 20e-9, 0.1e-9);
  const NeuronModel fit = calibrate(base, leak, integ);
  CHECK(fit.mobility == doctest::Approx(truth.mobility).epsilon(0.01));
  CHECK(fit.stt_gain == doctest::Approx(truth.stt_gain).epsilon(0.01));
  CHECK(fit.fit.calibrated);
  CHECK(fit.fit.leak_samples == 199);
  CHECK(trace_rms_error(fit, leak) < 0.01 * 1000e-9);

  const NeuronModel leak_only = calibrate_leak(base, leak);
  CHECK(leak_only.stt_gain == base.stt_gain);
}

TEST_CASE("calibration rejects degenerate traces") {
  const NeuronModel rect = make_neuron_model(rectangle(), kMat);
  const PositionTrace flat = simulate_reduced(rect, 500e-9, 0.0, 20e-9, 0.1e-9);
  CHECK_THROWS_AS(calibrate_leak(rect, flat), CalibrationError);

  const NeuronModel trap = make_neuron_model(trapezoid(), kMat);
  PositionTrace short_trace = simulate_reduced(trap, 600e-9, 0.0, 1e-9, 0.1e-9);
  CHECK_THROWS_AS(calibrate_leak(trap, short_trace), CalibrationError);

  // Motion toward the narrow end opposes the model force.
  PositionTrace wrong;
  for (int k = 0; k < 100; ++k) wrong.samples.push_back({k * 0.1e-9, 600e-9 + k * 0.05e-9});
  CHECK_THROWS_AS(calibrate_leak(trap, wrong), CalibrationError);

  const PositionTrace leak = simulate_reduced(trap, 600e-9, 0.0, 20e-9, 0.1e-9);
  PositionTrace zero = simulate_reduced(trap, 200e-9, 0.0, 20e-9, 0.1e-9);
  CHECK_THROWS_AS(calibrate(trap, leak, zero), CalibrationError);
}

TEST_CASE("zero current never moves the wall toward the narrow end") {
  std::vector<TrackShape> shapes{trapezoid()};
  for (double b = 1.0; b <= 5.0; b += 0.5) shapes.push_back(exponential(b));
  for (const TrackShape& shape : shapes) {
    const NeuronModel m = make_neuron_model(shape, kMat);
    for (double x = m.x_min; x <= m.x_max; x += 2.5e-9) CHECK(neuron_velocity(m, x, 0.0) <= 0.0);
  }
}

TEST_CASE("random drive keeps the state bounded and resets exactly") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> current(-2e-3, 2e-3);
  std::uniform_real_distribution<double> dt(1e-12, 5e-9);
  for (const TrackShape& shape : {trapezoid(), exponential(2.5), constricted(150e-9)}) {
    const NeuronModel m = make_neuron_model(shape, kMat);
    NeuronState s = initial_state(m);
    for (int k = 0; k < 5000; ++k) {
      const bool fired = step_neuron(m, s, current(rng), dt(rng));
      CHECK(s.x >= m.x_min);
      CHECK(s.x <= m.x_max);
      if (fired) CHECK(s.x == m.reset_x);
    }
  }
}

TEST_CASE("steady firing rate is non-decreasing in the input") {
  for (const TrackShape& shape : {trapezoid(), constricted(100e-9)}) {
    const NeuronModel m = make_neuron_model(shape, kMat);
    std::size_t previous = 0;
    for (double I = 0.0; I <= 1e-3; I += 0.05e-3) {
      NeuronState s = initial_state(m);
      for (int k = 0; k < 5000; ++k) step_neuron(m, s, I, 0.1e-9);
      CHECK(s.fired_at.size() >= previous);
      previous = s.fired_at.size();
    }
    CHECK(previous > 0);
  }
}

TEST_CASE("non-finite inputs are rejected") {
  const NeuronModel m = make_neuron_model(trapezoid(), kMat);
  NeuronState s = initial_state(m);
  CHECK_THROWS_AS(step_neuron(m, s, NAN, 1e-9), InvalidArgument);
  CHECK_THROWS_AS(step_neuron(m, s, INFINITY, 1e-9), InvalidArgument);
  CHECK_THROWS_AS(step_neuron(m, s, 1e-4, 0.0), InvalidArgument);
  CHECK_THROWS_AS(step_neuron(m, s, 1e-4, NAN), InvalidArgument);
  NeuronModel bad = m;
  bad.mobility = -1.0;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("model json round trip") {
  NeuronModel m = make_neuron_model(exponential(2.0), kMat);
  m.fit.calibrated = true;
  m.fit.mobility_r2 = 0.97;
  const nlohmann::json j = m;
  CHECK(j.at("format") == "dwlif-neuron");
  const NeuronModel back = j.get<NeuronModel>();
  CHECK(back.mobility == m.mobility);
  CHECK(back.stt_gain == m.stt_gain);
  CHECK(back.reset_x == m.reset_x);
  CHECK(back.shape.b == 2.0);
  CHECK(back.fit.mobility_r2 == 0.97);
  CHECK(std::isnan(back.fit.stt_r2));

  const auto path = std::filesystem::temp_directory_path() / "dwlif_test_neuron.json";
  save_neuron_model(path, m);
  const NeuronModel loaded = load_neuron_model(path);
  CHECK(loaded.threshold_x == m.threshold_x);
  std::filesystem::remove(path);

  nlohmann::json broken = j;
  broken["mobility"] = 0.0;
  CHECK_THROWS_AS(broken.get<NeuronModel>(), InvalidArgument);
}
