#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dwlif/analysis.hpp"
#include "dwlif/config.hpp"

using namespace dwlif;
namespace fs = std::filesystem;

namespace {

const fs::path kConfigs = DWLIF_SOURCE_DIR "/configs";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("dwlif_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run_tool(const std::string& args) {
  const std::string cmd = std::string(DWLIF_TOOL_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<ConfigIssue> issues_of(const std::string& text) {
  try {
    parse_config(text, "inline.json");
  } catch (const ConfigError& e) {
    return e.issues();
  }
  return {};
}

bool names(const std::vector<ConfigIssue>& issues, const std::string& field,
           const std::string& fragment = "") {
  for (const ConfigIssue& i : issues) {
    if (i.field == field && i.message.find(fragment) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("shipped configs validate") {
  const ExperimentConfig cfg = load_config(kConfigs / "leak_trapezoid.json");
  CHECK(cfg.kind == ExperimentKind::Leak);
  CHECK(cfg.shape.w_wide == 400e-9);
  const nlohmann::json r = cfg.resolved();
  for (const char* key : {"experiment", "output_dir", "shape", "material", "grid", "run"}) {
    CHECK(r.contains(key));
  }
  CHECK(r.at("material").at("polarization") == 0.7);
  for (const auto& entry : fs::directory_iterator(kConfigs)) {
    if (entry.path().filename() == "network_2x3x2.json") continue;
    CAPTURE(entry.path().string());
    CHECK_NOTHROW(load_config(entry.path()));
  }
  CHECK(run_tool((kConfigs / "leak_trapezoid.json").string() + " --validate-only") == 0);
}

TEST_CASE("config validation names the offending field") {
  const std::string head = R"({"experiment": "leak", "output_dir": "out", )";
  CHECK(names(issues_of(head + R"("shape": {"kind": "exponential", "b": 0.5}})"), "shape.b",
              "b must be >= 1"));
  CHECK(names(issues_of(R"({"experiment": "leak"})"), "output_dir"));
  CHECK(names(issues_of(head + R"("shape": {"kind": "trapezoid", "w_wide": -4e-7}})"),
              "shape.w_wide"));
  CHECK(names(issues_of(head + R"("shape": {"kind": "trapezoid"}, "colour": 1})"), "colour"));
  CHECK(names(issues_of(head + R"("grid": {"cell_size": 8e-9}})"), "grid.cell_size"));
  CHECK(names(issues_of(R"({"experiment": "stretch", "output_dir": "out"})"), "experiment"));

  const auto syntax = issues_of("{\n  \"experiment\": \"leak\",\n  \"output_dir\" \"out\"\n}\n");
  REQUIRE(syntax.size() == 1);
  CHECK(syntax[0].line == 3);

  const auto located = issues_of("{\n\"experiment\": \"leak\",\n\"output_dir\": \"o\",\n"
                                 "\"shape\": {\"kind\": \"exponential\", \"b\": 0.2}\n}\n");
  REQUIRE(located.size() == 1);
  CHECK(located[0].line == 4);
}

TEST_CASE("overrides and defaults") {
  ConfigOverrides o;
  o.output_dir = "/tmp/elsewhere";
  o.resolution_scale = 2.0;
  const ExperimentConfig cfg =
      parse_config(R"({"experiment": "integrate", "output_dir": "out"})", "/a/b/c.json", o);
  CHECK(cfg.output_dir == fs::path("/tmp/elsewhere"));
  CHECK(cfg.sim.cell_size == doctest::Approx(10e-9));
  CHECK(cfg.currents == std::vector<double>{1e-4, 5e-4});
  const ExperimentConfig rel = parse_config(R"({"experiment": "leak", "output_dir": "out"})",
                                            "/a/b/c.json");
  CHECK(rel.output_dir == fs::path("/a/b/out"));
  CHECK(rel.t_end == 20e-9);
}

TEST_CASE("rectangle leak run produces a flat trace") {
  const fs::path out = scratch("rect");
  REQUIRE(run_tool((kConfigs / "leak_rectangle.json").string() + " --out-dir " + out.string() +
                   " --resolution-scale 2 --threads 1") == 0);
  std::ifstream in(out / "trace_leak_trapezoid_200-200_L1000.csv");
  REQUIRE(in);
  const PositionTrace tr = read_trace_csv(in);
  REQUIRE(tr.size() > 100);
  double lo = tr.samples.front().x, hi = lo;
  for (const TraceSample& s : tr.samples) {
    lo = std::min(lo, s.x);
    hi = std::max(hi, s.x);
  }
  CHECK(hi - lo < 2e-9);
  const nlohmann::json manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
  CHECK(manifest.at("exit_code") == 0);
  CHECK(manifest.at("config").at("grid").at("cell_size") == 10e-9);
  CHECK(manifest.at("config").at("material").contains("gamma"));
  fs::remove_all(out);
}

TEST_CASE("repeated runs are byte-identical") {
  const fs::path dir = scratch("repro");
  {
    std::ofstream cfg(dir / "cfg.json");
    cfg << R"({"experiment": "integrate", "output_dir": "out",
      "shape": {"kind": "trapezoid", "length": 500e-9, "w_wide": 200e-9, "w_narrow": 50e-9},
      "run": {"t_end": 3e-9, "x_start": 150e-9}, "currents": [1e-4, 3e-4]})";
  }
  for (const char* sub : {"a", "b"}) {
    REQUIRE(run_tool((dir / "cfg.json").string() + " --out-dir " + (dir / sub).string() +
                     " --resolution-scale 2 --threads 2") == 0);
  }
  int compared = 0;
  for (const auto& entry : fs::directory_iterator(dir / "a")) {
    if (entry.path().extension() != ".csv") continue;
    CAPTURE(entry.path().filename().string());
    CHECK(slurp(entry.path()) == slurp(dir / "b" / entry.path().filename()));
    ++compared;
  }
  CHECK(compared == 3);
  fs::remove_all(dir);
}

TEST_CASE("malformed config exits with the config code and writes nothing") {
  const fs::path dir = scratch("bad");
  {
    std::ofstream cfg(dir / "bad.json");
    cfg << R"({"experiment": "leak", "output_dir": "out",
      "shape": {"kind": "trapezoid", "w_wide": -400e-9}})";
  }
  CHECK(run_tool((dir / "bad.json").string()) == 1);
  CHECK_FALSE(fs::exists(dir / "out"));
  CHECK(run_tool((dir / "missing.json").string()) == 1);
  CHECK(run_tool("") == 1);
  fs::remove_all(dir);
}
