#include "dwlif/experiments.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <mutex>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "dwlif/analysis.hpp"
#include "dwlif/network.hpp"
#include "dwlif/reduced.hpp"
#include "dwlif/serialize.hpp"

#ifndef DWLIF_VERSION
#define DWLIF_VERSION "unknown"
#endif

namespace dwlif {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Point {
  Point(std::string k, std::function<void(Point&)> w) : key(std::move(k)), work(std::move(w)) {}

  std::string key;
  std::function<void(Point&)> work;
  // filled by work
  std::vector<std::string> cells;  // one curves.csv row
  std::vector<std::string> files;
  std::string error;
};

std::string num(double v) { return format_number(v); }

std::string tag(const char* fmt, double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

void write_trace(const fs::path& dir, const std::string& name, const PositionTrace& trace,
                 Point& p) {
  std::ofstream out(dir / name);
  if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
  write_trace_csv(out, trace);
  p.files.push_back(name);
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : "nan"; }

void run_pool(std::vector<Point>& points, int threads) {
  std::atomic<std::size_t> next{0};
  auto worker = [&](bool nested) {
#ifdef _OPENMP
    if (nested) omp_set_num_threads(1);
#else
    (void)nested;
#endif
    for (std::size_t i = next++; i < points.size(); i = next++) {
      Point& p = points[i];
      try {
        p.work(p);
      } catch (const std::exception& e) {
        p.error = e.what();
      }
    }
  };
  const int n = std::max(1, std::min<int>(threads, static_cast<int>(points.size())));
  if (n == 1) {
    worker(false);
    return;
  }
  std::vector<std::thread> pool;
  for (int k = 0; k < n; ++k) pool.emplace_back(worker, true);
  for (std::thread& t : pool) t.join();
}

TrackShape with_b(const TrackShape& base, double b) {
  ShapeParams p{base.length, base.w_wide, base.w_narrow, b, base.w1,
                base.constriction_width, base.constriction_extent, base.thickness};
  return make_track_shape(ShapeKind::Exponential, p);
}

TrackShape with_w1(const TrackShape& base, double w1) {
  ShapeParams p{base.length, base.w_wide, base.w_narrow, base.b, w1,
                base.constriction_width, base.constriction_extent, base.thickness};
  return make_track_shape(ShapeKind::Constricted, p);
}

double integration_start(const ExperimentConfig& cfg, const TrackModel& model) {
  if (cfg.x_start) return *cfg.x_start;
  return settle_position(model, cfg.material, 0.0,
                         default_leak_start(model.shape, cfg.material, cfg.sim), cfg.sim);
}

SpikeTrain poisson_input(std::size_t channels, double rate, double t_end, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> gap(rate);
  SpikeTrain train;
  train.channels.resize(channels);
  for (auto& ch : train.channels) {
    double t = gap(rng);
    while (t < t_end) {
      if (ch.empty() || t > ch.back()) ch.push_back(t);
      t += gap(rng);
    }
  }
  return train;
}

std::string utc_now() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

}  // namespace

int run_experiment(const ExperimentConfig& cfg, int threads, std::ostream& log) {
  const auto started = std::chrono::steady_clock::now();
  const std::string started_utc = utc_now();
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);

  std::vector<Point> points;
  std::string header;
  std::vector<std::string> extra_files;
  std::mutex log_mutex;
  auto note = [&](const std::string& s) {
    std::lock_guard<std::mutex> lock(log_mutex);
    log << s << '\n';
  };

  switch (cfg.kind) {
    case ExperimentKind::Leak: {
      header = "shape,x_start_m,x_final_m,rmse_m,slope_m_per_s,traversal_s,oscillations,stop";
      points.push_back({shape_id(cfg.shape), [&](Point& p) {
        const TrackModel model = TrackModel::build(cfg.shape, cfg.sim);
        const double x0 = cfg.x_start.value_or(default_leak_start(cfg.shape, cfg.material, cfg.sim));
        const PositionTrace tr = simulate_track(model, cfg.material, 0.0, cfg.t_end, x0, cfg.sim);
        write_trace(dir, "trace_leak_" + p.key + ".csv", tr, p);
        const LinearFit fit = linearity_rmse(tr);
        p.cells = {p.key, num(x0), num(tr.samples.back().x), num(fit.rmse), num(fit.slope),
                   opt_num(traversal_time(tr, cfg.shape.length)),
                   std::to_string(oscillation_count(tr)), tr.stop_reason};
      }});
      break;
    }
    case ExperimentKind::Integrate: {
      header = "current_A,x_start_m,x_final_m,t_threshold_s,traversal_s,stop";
      auto model = std::make_shared<TrackModel>(TrackModel::build(cfg.shape, cfg.sim));
      for (double current : cfg.currents) {
        points.push_back({tag("%gmA", current * 1e3), [&, model, current](Point& p) {
          const double x0 = integration_start(cfg, *model);
          const PositionTrace tr =
              simulate_track(*model, cfg.material, current, cfg.t_end, x0, cfg.sim);
          write_trace(dir, "trace_integrate_" + shape_id(cfg.shape) + "_" + p.key + ".csv", tr, p);
          p.cells = {num(current), num(x0), num(tr.samples.back().x),
                     opt_num(crossing_time(tr, cfg.threshold_fraction * cfg.shape.length)),
                     opt_num(traversal_time(tr, cfg.shape.length)), tr.stop_reason};
        }});
      }
      break;
    }
    case ExperimentKind::RmseSweep: {
      header = "b,rmse_m,slope_m_per_s,intercept_m,traversal_s,oscillations,stop";
      for (double b : cfg.b_values) {
        points.push_back({tag("b%g", b), [&, b](Point& p) {
          const TrackShape shape = with_b(cfg.shape, b);
          const TrackModel model = TrackModel::build(shape, cfg.sim);
          const double x0 = cfg.x_start.value_or(default_leak_start(shape, cfg.material, cfg.sim));
          const PositionTrace tr = simulate_track(model, cfg.material, 0.0, cfg.t_end, x0, cfg.sim);
          write_trace(dir, "trace_leak_" + shape_id(shape) + ".csv", tr, p);
          const LinearFit fit = linearity_rmse(tr);
          p.cells = {num(b), num(fit.rmse), num(fit.slope), num(fit.intercept),
                     opt_num(traversal_time(tr, shape.length)),
                     std::to_string(oscillation_count(tr)), tr.stop_reason};
        }});
      }
      break;
    }
    case ExperimentKind::SquashSweep: {
      header = "w1_m,current_A,inflection_x_m,max_slope_t_s,monotone,sigmoidal,x_final_m,"
               "t_threshold_s,stop";
      for (double w1 : cfg.w1_values) {
        points.push_back({tag("w1-%gnm", w1 * 1e9), [&, w1](Point& p) {
          const TrackShape shape = with_w1(cfg.shape, w1);
          const TrackModel model = TrackModel::build(shape, cfg.sim);
          const double x0 = cfg.x_start.value_or(default_leak_start(shape, cfg.material, cfg.sim));
          const PositionTrace tr = simulate_track(model, cfg.material, 0.0, cfg.t_end, x0, cfg.sim);
          write_trace(dir, "trace_leak_" + shape_id(shape) + ".csv", tr, p);
          const SigmoidReport rep = sigmoidality_check(tr);
          p.cells = {num(w1), num(0.0), num(rep.inflection_x), num(rep.max_slope_t),
                     rep.monotone ? "1" : "0", rep.sigmoidal ? "1" : "0",
                     num(tr.samples.back().x), "nan", tr.stop_reason};
        }});
        for (double current : cfg.currents) {
          points.push_back({tag("w1-%gnm", w1 * 1e9) + tag("_%gmA", current * 1e3),
                            [&, w1, current](Point& p) {
            const TrackShape shape = with_w1(cfg.shape, w1);
            const TrackModel model = TrackModel::build(shape, cfg.sim);
            const double x0 = integration_start(cfg, model);
            const PositionTrace tr =
                simulate_track(model, cfg.material, current, cfg.t_end, x0, cfg.sim);
            write_trace(dir, "trace_integrate_" + shape_id(shape) + tag("_%gmA", current * 1e3) +
                                 ".csv", tr, p);
            p.cells = {num(w1), num(current), "nan", "nan", "", "",
                       num(tr.samples.back().x),
                       opt_num(crossing_time(tr, cfg.threshold_fraction * shape.length)),
                       tr.stop_reason};
          }});
        }
      }
      break;
    }
    case ExperimentKind::Activation: {
      const bool rate = cfg.activation_mode == ActivationMode::FiringRate;
      header = rate ? "current_A,rate_Hz" : "current_A,position_normalized";
      std::shared_ptr<NeuronModel> neuron;
      if (rate) {
        neuron = std::make_shared<NeuronModel>(
            cfg.neuron_model ? load_neuron_model(*cfg.neuron_model)
                             : make_neuron_model(cfg.shape, cfg.material,
                                                 {cfg.threshold_fraction, cfg.sim.fixed_margin,
                                                  cfg.sim.cell_size}));
        std::ofstream out(dir / "neuron_model.json");
        out << json(*neuron).dump(2) << '\n';
        extra_files.push_back("neuron_model.json");
      }
      points.push_back({"activation", [&, neuron](Point& p) {
        ActivationProtocol proto;
        proto.mode = cfg.activation_mode;
        proto.threshold_fraction = cfg.threshold_fraction;
        proto.sim = cfg.sim;
        proto.neuron = neuron.get();
        proto.rate_window = cfg.rate_window;
        proto.rate_dt = cfg.rate_dt;
        const ActivationCurve curve =
            extract_activation(cfg.shape, cfg.material, cfg.currents, proto);
        std::ofstream out(dir / "activation.csv");
        write_activation_csv(out, curve);
        p.files.push_back("activation.csv");
        for (const ActivationPoint& a : curve.points) {
          p.cells.push_back(num(a.input) + "," + num(a.output));
        }
      }});
      break;
    }
    case ExperimentKind::NetworkInfer: {
      header = "output,spike_count,first_spike_s";
      points.push_back({"network", [&](Point& p) {
        Network net = load_network(cfg.network_file);
        SpikeTrain input;
        if (cfg.spikes_file) {
          std::ifstream in(*cfg.spikes_file);
          input = read_spike_csv(in, net.input_count());
        } else {
          input = poisson_input(net.input_count(), cfg.input_rate, cfg.t_end, cfg.seed);
        }
        {
          std::ofstream out(dir / "input_spikes.csv");
          write_spike_csv(out, input);
          p.files.push_back("input_spikes.csv");
        }
        const InferenceResult res = infer(net, input, cfg.t_end, cfg.network_dt);
        {
          std::ofstream out(dir / "output_spikes.csv");
          write_spike_csv(out, res.output);
          p.files.push_back("output_spikes.csv");
        }
        for (std::size_t j = 0; j < res.counts.size(); ++j) {
          const auto& ch = res.output.channels[j];
          p.cells.push_back(std::to_string(j) + "," + std::to_string(res.counts[j]) + "," +
                            (ch.empty() ? std::string("nan") : num(ch.front())));
        }
      }});
      break;
    }
  }

  for (Point& p : points) {
    auto work = std::move(p.work);
    p.work = [work, &note](Point& q) {
      note("running " + q.key);
      work(q);
    };
  }
  run_pool(points, threads);

  // Rows in declaration order, so the file does not depend on scheduling.
  const bool multi_row = cfg.kind == ExperimentKind::Activation ||
                         cfg.kind == ExperimentKind::NetworkInfer;
  std::ofstream curves(dir / "curves.csv");
  curves << "# dwlif-curves v1 experiment=" << to_string(cfg.kind) << '\n';
  curves << "point," << header << ",status\n";
  int failures = 0;
  json point_log = json::array();
  std::vector<std::string> files;
  for (const Point& p : points) {
    const std::string status = p.error.empty() ? "ok" : "error";
    if (!p.error.empty()) {
      ++failures;
      note("point " + p.key + " failed: " + p.error);
      curves << p.key << ",error\n";
    } else if (multi_row) {
      for (const std::string& row : p.cells) curves << p.key << ',' << row << ",ok\n";
    } else {
      curves << p.key;
      for (const std::string& c : p.cells) curves << ',' << c;
      curves << ",ok\n";
    }
    json entry = {{"point", p.key}, {"status", status}, {"files", p.files}};
    if (!p.error.empty()) entry["error"] = p.error;
    point_log.push_back(entry);
    files.insert(files.end(), p.files.begin(), p.files.end());
  }
  curves.close();
  files.insert(files.end(), extra_files.begin(), extra_files.end());
  files.push_back("curves.csv");

  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  const int code = failures == 0 ? kExitOk : kExitRuntime;
  json manifest = {{"tool", "dwlif"},
                   {"version", DWLIF_VERSION},
                   {"experiment", std::string(to_string(cfg.kind))},
                   {"config", cfg.resolved()},
                   {"threads", threads},
                   {"started_utc", started_utc},
                   {"wall_clock_seconds", seconds},
                   {"points", point_log},
                   {"files", files},
                   {"failures", failures},
                   {"exit_code", code}};
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
  return code;
}

}  // namespace dwlif
