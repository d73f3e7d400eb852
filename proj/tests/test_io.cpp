#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "gal/app.hpp"

using namespace gal;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

const char* kMinimal = R"({"command":"bounds-eval","bound_inputs":{"n":100,"p":5,"L":2,"nu0":1,"sigma_norm":1}})";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

fs::path scratch_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("gal_test_io_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

RunConfig sweep_config() {
  return parse_config(R"({"command":"max-sweep","seed":3,
    "grid":{"sweep_axis":"n","axis_values":[25,49,100],"fixed":{"p":3},"m":500,"trials":2}})");
}

std::vector<ResultRow> rows_for(const std::vector<double>& axis, const RunConfig& cfg) {
  std::vector<CellResult> cells;
  for (double v : axis) {
    CellResult c;
    c.axis_value = v;
    c.distance = 7.0 / std::sqrt(v);
    c.distance_stderr = 0.1 / 3.0;
    c.theory_bound = std::exp(1.0) * v;
    c.sweeps_used = 42;
    cells.push_back(c);
  }
  return make_rows(cells, cfg, false);
}

}  // namespace

TEST_CASE("minimal bounds document parses with defaults") {
  const RunConfig c = parse_config(kMinimal);
  CHECK(c.command == Command::bounds_eval);
  REQUIRE(c.bound_inputs);
  CHECK(c.bound_inputs->base.n == 100);
  CHECK(c.bound_inputs->base.p == 5);
  CHECK(c.bound_inputs->base.abs_const_C == 1.0);
  CHECK(c.emit_plots);
  CHECK(c.seed == 0);
  CHECK_FALSE(c.grid);
}

TEST_CASE("sweep without a grid names the missing key") {
  try {
    parse_config(R"({"command":"wl-sweep"})");
    FAIL("expected a configuration error");
  } catch (const ConfigError& e) {
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("grid"));
  }
}

TEST_CASE("sweep defaults") {
  const RunConfig c = parse_config(R"({"command":"wl-sweep","grid":{"sweep_axis":"p"}})");
  REQUIRE(c.grid);
  CHECK(c.grid->sinkhorn.blur == 0.01);
  CHECK(c.grid->sinkhorn.scaling == 0.99);
  CHECK(c.grid->trials == 5);
  CHECK(c.grid->m == 2000);
  CHECK(c.grid->axis_values.size() >= 3);
  const RunConfig mx = parse_config(R"({"command":"max-sweep","grid":{"sweep_axis":"n"}})");
  CHECK(mx.grid->m == 20000);
}

TEST_CASE("schema violations") {
  CHECK_THROWS_AS(parse_config(R"({"command":"bounds-eval","bound_inputs":{"n":100,"p":5,"L":2,"nu0":1,"sigma_norm":1},"colour":1})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"command":"wl-sweep","grid":{"sweep_axis":"n","blurr":0.1}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"command":"fly"})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"command":"wl-sweep","grid":{"sweep_axis":"n","trials":0}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"command":"wl-sweep","grid":{"sweep_axis":"n","axis_values":[1,2]}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(std::string(kMinimal).insert(1, R"("grid":{},)")), ConfigError);
  try {
    parse_config(R"({"command":"wl-sweep","grid":{"sweep_axis":"n","sinkhorn":{"blur":-1}}})");
    FAIL("expected a configuration error");
  } catch (const ConfigError& e) {
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("grid.sinkhorn.blur"));
  }
}

TEST_CASE("syntax errors report the position") {
  try {
    parse_config("{\n  \"command\": \"bounds-eval\",,\n}");
    FAIL("expected a configuration error");
  } catch (const ConfigError& e) {
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("line 2"));
    CHECK_THAT(e.what(), Catch::Matchers::ContainsSubstring("column"));
  }
}

TEST_CASE("config hash ignores key order and tracks content") {
  const RunConfig a = parse_config(R"({"command":"bounds-eval","seed":4,"bound_inputs":{"n":100,"p":5,"L":2,"nu0":1,"sigma_norm":1}})");
  const RunConfig b = parse_config(R"({"bound_inputs":{"sigma_norm":1,"nu0":1,"L":2,"p":5,"n":100},"seed":4,"command":"bounds-eval"})");
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  RunConfig c = a;
  override_seed(c, 5);
  CHECK(config_hash(c) != config_hash(a));
  // defaults are part of the canonical document
  const RunConfig d = parse_config(R"({"command":"bounds-eval","seed":4,"bound_inputs":{"n":100,"p":5,"L":2,"nu0":1,"sigma_norm":1,"abs_const_C":1}})");
  CHECK(config_hash(d) == config_hash(a));
}

TEST_CASE("CSV writing") {
  const fs::path dir = scratch_dir("csv");
  const RunConfig cfg = sweep_config();

  write_results(rows_for({100}, cfg), dir / "one.csv", cfg);
  const std::string one = slurp(dir / "one.csv");
  CHECK(count_lines(one) == 2);
  CHECK(one.rfind(kCsvHeader, 0) == 0);
  CHECK(one.find('\r') == std::string::npos);
  CHECK(fs::exists(dir / "one.json"));
  const Json side = Json::parse(slurp(dir / "one.json"));
  CHECK(side["config"] == cfg.effective);
  CHECK(side["config_hash"] == config_hash(cfg));

  std::vector<double> axis;
  for (int i = 30; i >= 1; --i) axis.push_back(i * 3.0);
  write_results(rows_for(axis, cfg), dir / "thirty.csv", cfg);
  const auto parsed = read_csv(slurp(dir / "thirty.csv"));
  REQUIRE(parsed.size() == 31);
  for (std::size_t i = 2; i < parsed.size(); ++i) CHECK(std::stod(parsed[i][1]) > std::stod(parsed[i - 1][1]));

  const std::string first = slurp(dir / "thirty.csv");
  write_results(rows_for(axis, cfg), dir / "thirty.csv", cfg);
  CHECK(slurp(dir / "thirty.csv") == first);

  CHECK_THROWS_AS(write_results({}, dir / "empty.csv", cfg), InputError);
  fs::remove_all(dir);
}

TEST_CASE("CSV round trip is exact") {
  const RunConfig cfg = sweep_config();
  const auto rows = rows_for({3, 7, 11, 1e-300, 12345.678901234567}, cfg);
  const auto parsed = read_csv(results_csv(rows));
  REQUIRE(parsed.size() == rows.size() + 1);
  CHECK(parsed[0].size() == 11);
  auto sorted = rows;
  std::stable_sort(sorted.begin(), sorted.end(), [](auto& a, auto& b) { return a.cell.axis_value < b.cell.axis_value; });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& f = parsed[i + 1];
    REQUIRE(f.size() == 11);
    CHECK(std::stod(f[1]) == sorted[i].cell.axis_value);
    CHECK(std::stod(f[2]) == sorted[i].cell.distance);
    CHECK(std::stod(f[3]) == sorted[i].cell.distance_stderr);
    CHECK(f[4].empty());  // NaN raw distance
    CHECK(std::stod(f[5]) == sorted[i].cell.theory_bound);
    CHECK(f[6] == "42");
    CHECK(f[7] == "true");
    CHECK(f[8] == "3");
    CHECK(f[9] == config_hash(cfg));
    CHECK(f[10].empty());
  }
}

TEST_CASE("unwritable output is an IO error") {
  const fs::path dir = scratch_dir("unwritable");
  {
    std::ofstream blocker(dir / "file");
    blocker << "x";
  }
  const RunConfig cfg = sweep_config();
  CHECK_THROWS_AS(write_results(rows_for({1, 2, 3}, cfg), dir / "file" / "sub" / "r.csv", cfg), IoError);
  CHECK_THROWS_AS(load_config(dir / "missing.json"), IoError);
  fs::remove_all(dir);
}

TEST_CASE("SVG plot") {
  const RunConfig cfg = sweep_config();
  const auto rows = rows_for({25, 49, 100, 225, 400}, cfg);
  std::vector<CellResult> cells;
  for (const auto& r : rows) cells.push_back(r.cell);
  const RateFit fit = fit_rate(cells, Regressor::log);
  const std::string svg = plot_svg(rows, fit);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK_THAT(svg, Catch::Matchers::ContainsSubstring("slope -0.500"));
  CHECK_THAT(svg, Catch::Matchers::ContainsSubstring(">n (log scale)<"));
  CHECK_THROWS_AS(plot_svg(rows_for({1, 2}, cfg), fit), InputError);

  const fs::path dir = scratch_dir("plot");
  emit_plot(rows, fit, dir / "plot.svg");
  CHECK(slurp(dir / "plot.svg") == svg);
  fs::remove_all(dir);
}

TEST_CASE("sweep command writes deterministic outputs") {
  RunConfig cfg = sweep_config();
  const fs::path a = scratch_dir("run_a"), b = scratch_dir("run_b");
  std::ostringstream log;
  cfg.output_dir = a.string();
  run_command(cfg, log);
  cfg.output_dir = b.string();
  run_command(cfg, log);
  CHECK(slurp(a / "results.csv") == slurp(b / "results.csv"));
  CHECK(fs::exists(a / "results.json"));
  CHECK(fs::exists(a / "plot.svg"));
  CHECK(count_lines(slurp(a / "results.csv")) == 4);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("bounds command writes its values") {
  RunConfig cfg = parse_config(kMinimal);
  const fs::path dir = scratch_dir("bounds");
  cfg.output_dir = dir.string();
  std::ostringstream log;
  run_command(cfg, log);
  const Json out = Json::parse(slurp(dir / "bounds.json"));
  BoundInputs in;
  in.n = 100;
  in.p = 5;
  CHECK(out["values"]["main_bound_cnp"].get<double>() == Approx(main_bound_cnp(in)));
  CHECK(out["values"]["wlt_subgaussian_bound"].get<double>() == Approx(wlt_subgaussian_bound(in)));
  fs::remove_all(dir);
}
