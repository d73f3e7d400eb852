#pragma once

// Run configuration (JSON), result CSV + sidecar, and SVG plots.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gal/bounds.hpp"
#include "gal/core.hpp"
#include "gal/experiments.hpp"
#include "gal/sampling.hpp"
#include "gal/transport.hpp"

namespace gal {

using Json = nlohmann::json;

enum class Command { wl_sweep, max_sweep, bounds_eval, ou_diagnostics, hermite_check, calibrate };

inline std::string_view to_string(Command c) noexcept {
  switch (c) {
    case Command::wl_sweep: return "wl-sweep";
    case Command::max_sweep: return "max-sweep";
    case Command::bounds_eval: return "bounds-eval";
    case Command::ou_diagnostics: return "ou-diagnostics";
    case Command::hermite_check: return "hermite-check";
    case Command::calibrate: return "calibrate";
  }
  return "?";
}

inline Command command_from_string(std::string_view s) {
  for (Command c : {Command::wl_sweep, Command::max_sweep, Command::bounds_eval, Command::ou_diagnostics,
                    Command::hermite_check, Command::calibrate})
    if (to_string(c) == s) return c;
  throw ConfigError("command: unknown command '" + std::string(s) + "'");
}

/// Extra inputs for bounds-eval beyond BoundInputs.
struct BoundsEvalInputs {
  BoundInputs base;
  double t = 1.0;             // tail level for the main threshold
  double g = 6.0;             // sub-Gaussian radius
  double sigma_upper = 1.0;   // max standard deviation
  double sigma_lower = 1.0;   // min standard deviation
  double lambda_min = 1.0;
};

struct OuConfig {
  SummandModel model;
  std::size_t m = 500;
  std::size_t trials = 5;
  std::vector<double> times{0.0, 0.25, 0.5, 1.0, 2.0, std::numeric_limits<double>::infinity()};
  std::vector<double> velocity_times{0.25, 0.7, 2.0};
  std::size_t velocity_m = 4000;
  SinkhornConfig sinkhorn;
};

struct HermiteConfig {
  unsigned max_order = 6;   // orthogonality: all component orders <= max_order
  std::size_t p = 3;
  unsigned boni_sets = 20;
  unsigned boni_max_order = 3;
  std::size_t boni_p = 2;
  std::vector<double> q{2.0, 3.0, 4.0};
  std::size_t m = 1000000;
};

struct RunConfig {
  Command command = Command::bounds_eval;
  std::uint64_t seed = 0;
  std::optional<ExperimentGrid> grid;
  std::optional<BoundsEvalInputs> bound_inputs;
  std::optional<OuConfig> ou;
  std::optional<HermiteConfig> hermite;
  std::string output_dir = "gal-out";
  bool emit_plots = true;
  bool record_timing = false;
  unsigned threads = 0;
  Json effective;  // canonical document with defaults applied (result-relevant keys only)
};

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace detail {

inline std::string key_path(const std::string& parent, const std::string& key) {
  return parent.empty() ? key : parent + "." + key;
}

inline void reject_unknown(const Json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError((path.empty() ? std::string("document") : path) + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : obj.items())
    if (!ok.count(k)) throw ConfigError(key_path(path, k) + ": unknown key");
}

inline const Json* find(const Json& obj, const char* key) {
  const auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

inline const Json& require(const Json& obj, const std::string& path, const char* key) {
  const Json* v = find(obj, key);
  if (!v) throw ConfigError(key_path(path, key) + ": required key is missing");
  return *v;
}

inline double get_number(const Json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path + ": expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError(path + ": expected a finite number");
  return d;
}

inline double get_positive(const Json& v, const std::string& path) {
  const double d = get_number(v, path);
  if (!(d > 0.0)) throw ConfigError(path + ": expected a positive number");
  return d;
}

inline std::uint64_t get_count(const Json& v, const std::string& path, std::uint64_t min = 1) {
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
    throw ConfigError(path + ": expected a non-negative integer");
  const auto u = v.get<std::uint64_t>();
  if (u < min) throw ConfigError(path + ": must be >= " + std::to_string(min));
  return u;
}

inline bool get_bool(const Json& v, const std::string& path) {
  if (!v.is_boolean()) throw ConfigError(path + ": expected true or false");
  return v.get<bool>();
}

template <class T, class F>
T opt(const Json& obj, const std::string& path, const char* key, T fallback, F&& conv) {
  const Json* v = find(obj, key);
  return v ? conv(*v, key_path(path, key)) : fallback;
}

inline std::vector<double> get_number_list(const Json& v, const std::string& path) {
  if (!v.is_array()) throw ConfigError(path + ": expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Json& e = v[i];
    const std::string p = path + "[" + std::to_string(i) + "]";
    if (e.is_string() && e.get<std::string>() == "inf") {
      out.push_back(std::numeric_limits<double>::infinity());
    } else {
      out.push_back(get_number(e, p));
    }
  }
  return out;
}

inline Json number_list_json(const std::vector<double>& v) {
  Json a = Json::array();
  for (double d : v) {
    if (std::isinf(d))
      a.push_back("inf");
    else
      a.push_back(d);
  }
  return a;
}

inline SinkhornConfig parse_sinkhorn(const Json* node, const std::string& path, Json& eff) {
  SinkhornConfig c;
  c.max_sweeps = 20;  // final-level budget used by the experiments
  if (node) {
    reject_unknown(*node, path, {"blur", "scaling", "max_sweeps", "sweeps_per_level", "tolerance"});
    c.blur = opt(*node, path, "blur", c.blur, get_positive);
    c.scaling = opt(*node, path, "scaling", c.scaling, get_positive);
    c.max_sweeps = static_cast<int>(opt(*node, path, "max_sweeps", std::uint64_t(c.max_sweeps), [](const Json& v, const std::string& p) { return get_count(v, p); }));
    c.sweeps_per_level = static_cast<int>(opt(*node, path, "sweeps_per_level", std::uint64_t(c.sweeps_per_level), [](const Json& v, const std::string& p) { return get_count(v, p); }));
    c.tolerance = opt(*node, path, "tolerance", c.tolerance, get_positive);
  }
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  eff = {{"blur", c.blur}, {"scaling", c.scaling}, {"max_sweeps", c.max_sweeps},
         {"sweeps_per_level", c.sweeps_per_level}, {"tolerance", c.tolerance}};
  return c;
}

inline SummandModel parse_model(const Json* node, const std::string& path, Json& eff) {
  SummandModel m;
  if (node) {
    reject_unknown(*node, path, {"kind", "scale"});
    if (const Json* k = find(*node, "kind")) {
      if (!k->is_string()) throw ConfigError(key_path(path, "kind") + ": expected a string");
      try {
        m.kind = summand_kind_from_string(k->get<std::string>());
      } catch (const Error& e) {
        throw ConfigError(key_path(path, "kind") + ": " + e.what());
      }
    }
    if (const Json* s = find(*node, "scale")) {
      const double v = get_number(*s, key_path(path, "scale"));
      if (v < 0.0) throw ConfigError(key_path(path, "scale") + ": must be >= 0");
      m.scale = v;
    }
  }
  eff = {{"kind", std::string(to_string(m.kind))}};
  if (m.scale) eff["scale"] = *m.scale;
  return m;
}

inline std::vector<double> default_axis_values(SweepAxis a) {
  switch (a) {
    case SweepAxis::n: return {25, 50, 100, 200, 400};
    case SweepAxis::p: return {2, 4, 8, 16, 32};
    case SweepAxis::L: return {2, 3, 4, 6, 8};
  }
  return {};
}

inline ExperimentGrid parse_grid(const Json& node, const std::string& path, Command cmd, Json& eff) {
  reject_unknown(node, path, {"sweep_axis", "axis_values", "fixed", "m", "trials", "model", "sinkhorn", "nu0",
                              "abs_const_C"});
  ExperimentGrid g;
  if (const Json* a = find(node, "sweep_axis")) {
    if (!a->is_string()) throw ConfigError(key_path(path, "sweep_axis") + ": expected a string");
    try {
      g.sweep_axis = sweep_axis_from_string(a->get<std::string>());
    } catch (const ConfigError& e) {
      throw ConfigError(key_path(path, "sweep_axis") + ": " + e.what());
    }
  }
  g.axis_values = opt(node, path, "axis_values", default_axis_values(g.sweep_axis), get_number_list);
  if (const Json* f = find(node, "fixed")) {
    const std::string fp = key_path(path, "fixed");
    reject_unknown(*f, fp, {"n", "p", "L"});
    g.fixed.n = opt(*f, fp, "n", g.fixed.n, [](const Json& v, const std::string& p) { return static_cast<std::size_t>(get_count(v, p)); });
    g.fixed.p = opt(*f, fp, "p", g.fixed.p, [](const Json& v, const std::string& p) { return static_cast<std::size_t>(get_count(v, p)); });
    g.fixed.L = opt(*f, fp, "L", g.fixed.L, get_number);
  }
  g.m = static_cast<std::size_t>(opt(node, path, "m", std::uint64_t(cmd == Command::max_sweep ? 20000 : 2000), [](const Json& v, const std::string& p) { return get_count(v, p); }));
  g.trials = static_cast<std::size_t>(opt(node, path, "trials", std::uint64_t(5), [](const Json& v, const std::string& p) { return get_count(v, p); }));
  Json model_eff, sink_eff;
  g.model = parse_model(find(node, "model"), key_path(path, "model"), model_eff);
  g.sinkhorn = parse_sinkhorn(find(node, "sinkhorn"), key_path(path, "sinkhorn"), sink_eff);
  g.nu0 = opt(node, path, "nu0", 1.0, get_positive);
  if (const Json* c = find(node, "abs_const_C")) {
    const double v = get_number(*c, key_path(path, "abs_const_C"));
    if (v < 0.0) throw ConfigError(key_path(path, "abs_const_C") + ": must be >= 0");
    g.abs_const_C = v;
  }
  try {
    g.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
  eff = {{"sweep_axis", std::string(to_string(g.sweep_axis))},
         {"axis_values", number_list_json(g.axis_values)},
         {"fixed", {{"n", g.fixed.n}, {"p", g.fixed.p}, {"L", g.fixed.L}}},
         {"m", g.m},
         {"trials", g.trials},
         {"model", model_eff},
         {"sinkhorn", sink_eff},
         {"nu0", g.nu0}};
  if (g.abs_const_C) eff["abs_const_C"] = *g.abs_const_C;
  return g;
}

inline BoundsEvalInputs parse_bound_inputs(const Json& node, const std::string& path, Json& eff) {
  reject_unknown(node, path, {"n", "p", "L", "nu0", "sigma_norm", "abs_const_C", "t", "g", "sigma_upper",
                              "sigma_lower", "lambda_min"});
  BoundsEvalInputs b;
  auto count = [](const Json& v, const std::string& p) { return static_cast<std::size_t>(get_count(v, p)); };
  b.base.n = count(require(node, path, "n"), key_path(path, "n"));
  b.base.p = count(require(node, path, "p"), key_path(path, "p"));
  b.base.L = get_number(require(node, path, "L"), key_path(path, "L"));
  b.base.nu0 = get_positive(require(node, path, "nu0"), key_path(path, "nu0"));
  b.base.sigma_norm = get_positive(require(node, path, "sigma_norm"), key_path(path, "sigma_norm"));
  b.base.abs_const_C = opt(node, path, "abs_const_C", 1.0, get_number);
  if (b.base.abs_const_C < 0.0) throw ConfigError(key_path(path, "abs_const_C") + ": must be >= 0");
  if (!(b.base.L >= 1.0)) throw ConfigError(key_path(path, "L") + ": must be >= 1");
  b.t = opt(node, path, "t", 1.0, get_number);
  b.g = opt(node, path, "g", 6.0, get_positive);
  const double sd = std::sqrt(b.base.sigma_norm);
  b.sigma_upper = opt(node, path, "sigma_upper", sd, get_positive);
  b.sigma_lower = opt(node, path, "sigma_lower", sd, get_positive);
  b.lambda_min = opt(node, path, "lambda_min", b.base.sigma_norm, get_positive);
  eff = {{"n", b.base.n}, {"p", b.base.p}, {"L", b.base.L}, {"nu0", b.base.nu0},
         {"sigma_norm", b.base.sigma_norm}, {"abs_const_C", b.base.abs_const_C}, {"t", b.t}, {"g", b.g},
         {"sigma_upper", b.sigma_upper}, {"sigma_lower", b.sigma_lower}, {"lambda_min", b.lambda_min}};
  return b;
}

inline OuConfig parse_ou(const Json* node, const std::string& path, Json& eff) {
  OuConfig o;
  o.model.n = 25;
  o.model.p = 2;
  Json model_eff, sink_eff;
  const Json empty = Json::object();
  const Json& n = node ? *node : empty;
  reject_unknown(n, path, {"model", "n", "p", "m", "trials", "times", "velocity_times", "velocity_m", "sinkhorn"});
  o.model = parse_model(find(n, "model"), key_path(path, "model"), model_eff);
  auto count = [](const Json& v, const std::string& p) { return static_cast<std::size_t>(get_count(v, p)); };
  o.model.n = opt(n, path, "n", std::size_t(25), count);
  o.model.p = opt(n, path, "p", std::size_t(2), count);
  o.m = opt(n, path, "m", o.m, count);
  o.trials = opt(n, path, "trials", o.trials, count);
  o.times = opt(n, path, "times", o.times, get_number_list);
  o.velocity_times = opt(n, path, "velocity_times", o.velocity_times, get_number_list);
  o.velocity_m = opt(n, path, "velocity_m", o.velocity_m, count);
  o.sinkhorn = parse_sinkhorn(find(n, "sinkhorn"), key_path(path, "sinkhorn"), sink_eff);
  for (double t : o.times)
    if (!(t >= 0.0)) throw ConfigError(key_path(path, "times") + ": times must be >= 0");
  for (double t : o.velocity_times)
    if (!(t > 0.0) || std::isinf(t)) throw ConfigError(key_path(path, "velocity_times") + ": times must be finite and > 0");
  eff = {{"model", model_eff}, {"n", o.model.n}, {"p", o.model.p}, {"m", o.m}, {"trials", o.trials},
         {"times", number_list_json(o.times)}, {"velocity_times", number_list_json(o.velocity_times)},
         {"velocity_m", o.velocity_m}, {"sinkhorn", sink_eff}};
  return o;
}

inline HermiteConfig parse_hermite(const Json* node, const std::string& path, Json& eff) {
  HermiteConfig h;
  const Json empty = Json::object();
  const Json& n = node ? *node : empty;
  reject_unknown(n, path, {"max_order", "p", "boni_sets", "boni_max_order", "boni_p", "q", "m"});
  auto count = [](const Json& v, const std::string& p) { return get_count(v, p); };
  h.max_order = static_cast<unsigned>(opt(n, path, "max_order", std::uint64_t(h.max_order), [](const Json& v, const std::string& p) { return get_count(v, p, 0); }));
  h.p = static_cast<std::size_t>(opt(n, path, "p", std::uint64_t(h.p), count));
  h.boni_sets = static_cast<unsigned>(opt(n, path, "boni_sets", std::uint64_t(h.boni_sets), count));
  h.boni_max_order = static_cast<unsigned>(opt(n, path, "boni_max_order", std::uint64_t(h.boni_max_order), [](const Json& v, const std::string& p) { return get_count(v, p, 0); }));
  h.boni_p = static_cast<std::size_t>(opt(n, path, "boni_p", std::uint64_t(h.boni_p), count));
  h.q = opt(n, path, "q", h.q, get_number_list);
  h.m = static_cast<std::size_t>(opt(n, path, "m", std::uint64_t(h.m), [](const Json& v, const std::string& p) { return get_count(v, p, 2); }));
  if (h.max_order > 12) throw ConfigError(key_path(path, "max_order") + ": must be <= 12");
  if (h.boni_p > 4) throw ConfigError(key_path(path, "boni_p") + ": must be <= 4");
  if (h.boni_max_order > 8)
    throw ConfigError(key_path(path, "boni_max_order") + ": must be <= 8");
  for (double q : h.q)
    if (!(q >= 2.0)) throw ConfigError(key_path(path, "q") + ": values must be >= 2");
  eff = {{"max_order", h.max_order}, {"p", h.p}, {"boni_sets", h.boni_sets}, {"boni_max_order", h.boni_max_order},
         {"boni_p", h.boni_p}, {"q", h.q}, {"m", h.m}};
  return h;
}

}  // namespace detail

/// Parses and validates a configuration document. Syntax errors report line
/// and column; schema errors report the dotted key path.
inline RunConfig parse_config(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("syntax error: ") + e.what());
  }
  using namespace detail;
  reject_unknown(doc, "", {"schema_version", "command", "seed", "output_dir", "emit_plots", "record_timing", "threads",
                           "grid", "bound_inputs", "ou", "hermite"});
  if (const Json* v = find(doc, "schema_version"))
    if (!v->is_number_integer() || v->get<std::int64_t>() != 1) throw ConfigError("schema_version: only version 1 is supported");
  RunConfig c;
  const Json& cmd = require(doc, "", "command");
  if (!cmd.is_string()) throw ConfigError("command: expected a string");
  c.command = command_from_string(cmd.get<std::string>());
  c.seed = opt(doc, "", "seed", std::uint64_t(0), [](const Json& v, const std::string& p) { return get_count(v, p, 0); });
  if (const Json* v = find(doc, "output_dir")) {
    if (!v->is_string() || v->get<std::string>().empty()) throw ConfigError("output_dir: expected a non-empty string");
    c.output_dir = v->get<std::string>();
  }
  c.emit_plots = opt(doc, "", "emit_plots", true, get_bool);
  c.record_timing = opt(doc, "", "record_timing", false, get_bool);
  c.threads = static_cast<unsigned>(opt(doc, "", "threads", std::uint64_t(0), [](const Json& v, const std::string& p) { return get_count(v, p, 0); }));

  c.effective = {{"schema_version", 1}, {"command", std::string(to_string(c.command))}};
  Json eff;
  switch (c.command) {
    case Command::wl_sweep:
    case Command::max_sweep:
    case Command::calibrate:
      c.grid = parse_grid(require(doc, "", "grid"), "grid", c.command, eff);
      c.grid->threads = c.threads;
      c.effective["grid"] = eff;
      break;
    case Command::bounds_eval:
      c.bound_inputs = parse_bound_inputs(require(doc, "", "bound_inputs"), "bound_inputs", eff);
      c.effective["bound_inputs"] = eff;
      break;
    case Command::ou_diagnostics:
      c.ou = parse_ou(find(doc, "ou"), "ou", eff);
      c.effective["ou"] = eff;
      break;
    case Command::hermite_check:
      c.hermite = parse_hermite(find(doc, "hermite"), "hermite", eff);
      c.effective["hermite"] = eff;
      break;
  }
  for (const char* k : {"grid", "bound_inputs", "ou", "hermite"})
    if (find(doc, k) && !c.effective.contains(k))
      throw ConfigError(std::string(k) + ": section not used by command " + std::string(to_string(c.command)));
  c.effective["seed"] = c.seed;
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

/// Replaces the master seed, keeping the effective document in sync.
inline void override_seed(RunConfig& c, std::uint64_t seed) {
  c.seed = seed;
  c.effective["seed"] = seed;
}

inline SeedSpec master_seed(const RunConfig& c) { return SeedSpec{c.seed, 0}; }

/// FNV-1a 64 of the canonical (sorted-key, compact) effective document.
inline std::string config_hash(const Json& effective) {
  const std::string canon = effective.dump();
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : canon) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string config_hash(const RunConfig& c) { return config_hash(c.effective); }

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

struct ResultRow {
  std::string axis_name;
  CellResult cell;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string timestamp;               // sidecar only
  std::optional<double> wall_time_ms;  // written only when timing is recorded
};

inline std::vector<ResultRow> make_rows(const std::vector<CellResult>& cells, const RunConfig& c, bool with_timing) {
  std::vector<ResultRow> rows;
  const std::string hash = config_hash(c);
  for (const auto& cell : cells) {
    ResultRow r;
    r.axis_name = std::string(to_string(c.grid ? c.grid->sweep_axis : SweepAxis::n));
    r.cell = cell;
    r.seed = c.seed;
    r.config_hash = hash;
    if (with_timing) r.wall_time_ms = cell.wall_time_ms;
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::string format_double(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Writes `content` to `path` through a temporary file and a rename.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move result into place at " + path.string());
  }
}

inline constexpr const char* kCsvHeader =
    "axis_name,axis_value,distance,distance_stderr,distance_raw,theory_bound,sweeps_used,converged,seed,"
    "config_hash,wall_time_ms";

inline std::string results_csv(std::vector<ResultRow> rows) {
  if (rows.empty()) throw InputError("no result rows to write");
  std::stable_sort(rows.begin(), rows.end(),
                   [](const ResultRow& a, const ResultRow& b) { return a.cell.axis_value < b.cell.axis_value; });
  std::string s = std::string(kCsvHeader) + "\n";
  for (const auto& r : rows) {
    s += r.axis_name + "," + format_double(r.cell.axis_value) + "," + format_double(r.cell.distance) + "," +
         format_double(r.cell.distance_stderr) + "," + format_double(r.cell.distance_raw) + "," +
         format_double(r.cell.theory_bound) + "," + std::to_string(r.cell.sweeps_used) + "," +
         (r.cell.converged ? "true" : "false") + "," + std::to_string(r.seed) + "," + r.config_hash + "," +
         (r.wall_time_ms ? format_double(*r.wall_time_ms) : std::string()) + "\n";
  }
  return s;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Writes the CSV at `path` and a sidecar `<stem>.json` next to it with the
/// effective configuration and `extra` (fits, timestamp).
inline void write_results(const std::vector<ResultRow>& rows, const std::filesystem::path& path,
                          const RunConfig& config, const Json& extra = Json::object()) {
  const std::string csv = results_csv(rows);
  Json side = {{"config", config.effective},
               {"config_hash", config_hash(config)},
               {"output_dir", config.output_dir},
               {"emit_plots", config.emit_plots},
               {"threads", config.threads},
               {"timestamp", utc_timestamp()},
               {"results", path.filename().string()}};
  for (const auto& [k, v] : extra.items()) side[k] = v;
  atomic_write(path, csv);
  std::filesystem::path sidecar = path;
  sidecar.replace_extension(".json");
  atomic_write(sidecar, side.dump(2) + "\n");
}

/// Parses a CSV produced by results_csv (no quoting is ever needed).
inline std::vector<std::vector<std::string>> read_csv(const std::string& text) {
  std::vector<std::vector<std::string>> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    out.push_back(std::move(fields));
  }
  return out;
}

inline Json fit_json(const RateFit& f) {
  return {{"slope", f.slope}, {"intercept", f.intercept}, {"r2", f.r2},
          {"regressor", f.regressor == Regressor::log ? "log" : "log_log"}};
}

// ---------------------------------------------------------------------------
// SVG plot
// ---------------------------------------------------------------------------

inline std::string svg_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

/// Log-log scatter of distance against the swept parameter with the fitted
/// power law overlaid.
inline std::string plot_svg(const std::vector<ResultRow>& rows, const RateFit& fit) {
  if (rows.size() < 3) throw InputError("a plot needs at least 3 rows");
  const double W = 640, H = 440, left = 80, right = 30, top = 40, bottom = 60;
  std::vector<double> lx, ly;
  for (const auto& r : rows) {
    if (!(r.cell.axis_value > 0.0) || !(r.cell.distance > 0.0)) throw DataError("log-log plot needs positive values");
    lx.push_back(std::log10(r.cell.axis_value));
    ly.push_back(std::log10(r.cell.distance));
  }
  auto fit_y = [&](double log10x) {
    const double x = log10x * std::log(10.0);
    const double reg = fit.regressor == Regressor::log ? x : std::log(x);
    return (fit.intercept + fit.slope * reg) / std::log(10.0);
  };
  const auto [xmin_it, xmax_it] = std::minmax_element(lx.begin(), lx.end());
  double x0 = *xmin_it, x1 = *xmax_it;
  double y0 = *std::min_element(ly.begin(), ly.end()), y1 = *std::max_element(ly.begin(), ly.end());
  const int samples = 60;
  std::vector<std::pair<double, double>> line;
  for (int i = 0; i <= samples; ++i) {
    const double x = x0 + (x1 - x0) * i / samples;
    const double y = fit_y(x);
    if (!std::isfinite(y)) continue;
    line.emplace_back(x, y);
    y0 = std::min(y0, y);
    y1 = std::max(y1, y);
  }
  const double padx = std::max(0.05, 0.05 * (x1 - x0)), pady = std::max(0.05, 0.08 * (y1 - y0));
  x0 -= padx;
  x1 += padx;
  y0 -= pady;
  y1 += pady;
  auto sx = [&](double x) { return left + (x - x0) / (x1 - x0) * (W - left - right); };
  auto sy = [&](double y) { return H - bottom - (y - y0) / (y1 - y0) * (H - top - bottom); };

  std::ostringstream o;
  const std::string axis = rows.front().axis_name;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << W - left - right << "\" height=\""
    << H - top - bottom << "\" fill=\"none\" stroke=\"black\"/>\n";
  // decade ticks
  for (int d = static_cast<int>(std::ceil(x0)); d <= static_cast<int>(std::floor(x1)); ++d)
    o << "<text x=\"" << svg_number(sx(d)) << "\" y=\"" << H - bottom + 16 << "\" text-anchor=\"middle\">1e" << d
      << "</text>\n";
  for (int d = static_cast<int>(std::ceil(y0)); d <= static_cast<int>(std::floor(y1)); ++d)
    o << "<text x=\"" << left - 6 << "\" y=\"" << svg_number(sy(d) + 4) << "\" text-anchor=\"end\">1e" << d
      << "</text>\n";
  for (const auto& r : rows) {
    const double v = r.cell.axis_value;
    o << "<text x=\"" << svg_number(sx(std::log10(v))) << "\" y=\"" << H - bottom + 30
      << "\" text-anchor=\"middle\" fill=\"#555\">" << format_double(v) << "</text>\n";
  }
  o << "<text x=\"" << (left + W - right) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">" << axis
    << " (log scale)</text>\n";
  o << "<text transform=\"translate(18," << (top + H - bottom) / 2
    << ") rotate(-90)\" text-anchor=\"middle\">distance (log scale)</text>\n";
  if (!line.empty()) {
    o << "<polyline fill=\"none\" stroke=\"#c0392b\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : line) o << svg_number(sx(x)) << ',' << svg_number(sy(y)) << ' ';
    o << "\"/>\n";
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double se = rows[i].cell.distance_stderr;
    const double d = rows[i].cell.distance;
    if (se > 0.0 && d - se > 0.0)
      o << "<line x1=\"" << svg_number(sx(lx[i])) << "\" x2=\"" << svg_number(sx(lx[i])) << "\" y1=\""
        << svg_number(sy(std::log10(d - se))) << "\" y2=\"" << svg_number(sy(std::log10(d + se)))
        << "\" stroke=\"#2c3e50\"/>\n";
    o << "<circle cx=\"" << svg_number(sx(lx[i])) << "\" cy=\"" << svg_number(sy(ly[i]))
      << "\" r=\"4\" fill=\"#2c3e50\"/>\n";
  }
  char ann[96];
  std::snprintf(ann, sizeof ann, "slope %.3f  (R^2 = %.3f, regressor %s %s)", fit.slope, fit.r2,
                fit.regressor == Regressor::log ? "ln" : "ln ln", axis.c_str());
  o << "<text x=\"" << left + 10 << "\" y=\"" << top - 12 << "\">" << ann << "</text>\n";
  o << "</svg>\n";
  return o.str();
}

inline void emit_plot(const std::vector<ResultRow>& rows, const RateFit& fit, const std::filesystem::path& path) {
  atomic_write(path, plot_svg(rows, fit));
}

}  // namespace gal
