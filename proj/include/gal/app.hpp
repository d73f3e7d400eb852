#pragma once

// Command execution behind the `gal` CLI.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "gal/bounds.hpp"
#include "gal/experiments.hpp"
#include "gal/hermite.hpp"
#include "gal/io.hpp"

namespace gal {

namespace detail {

inline void log_cells(const std::vector<CellResult>& cells, SweepAxis axis, std::ostream& log) {
  for (const auto& c : cells) {
    char line[200];
    std::snprintf(line, sizeof line, "cell %s=%g  distance=%.6g +- %.2g  bound=%.4g  converged=%s\n",
                  std::string(to_string(axis)).c_str(), c.axis_value, c.distance, c.distance_stderr, c.theory_bound,
                  c.converged ? "yes" : "no");
    log << line;
  }
}

inline Json sweep_fits(const std::vector<CellResult>& cells, SweepAxis axis) {
  Json fits = Json::object();
  bool positive = true;
  for (const auto& c : cells) positive = positive && c.distance > 0.0;
  if (!positive) {
    fits["note"] = "some distances are zero; no log-log fit";
    return fits;
  }
  fits["log"] = fit_json(fit_rate(cells, Regressor::log));
  if (axis == SweepAxis::p && cells.front().axis_value > 1.0) fits["log_log"] = fit_json(fit_rate(cells, Regressor::log_log));
  return fits;
}

inline void run_sweep_command(const RunConfig& cfg, std::ostream& log) {
  ExperimentGrid grid = *cfg.grid;
  grid.seed = master_seed(cfg);
  const bool wl = cfg.command == Command::wl_sweep;
  const std::vector<CellResult> cells = wl ? run_wl_sweep(grid) : run_max_sweep(grid);
  log_cells(cells, grid.sweep_axis, log);
  const std::filesystem::path dir = cfg.output_dir;
  const std::vector<ResultRow> rows = make_rows(cells, cfg, cfg.record_timing);
  Json extra = {{"fits", sweep_fits(cells, grid.sweep_axis)}, {"metric", wl ? "sinkhorn_wl_debiased" : "ks_max"}};
  write_results(rows, dir / "results.csv", cfg, extra);
  if (extra["fits"].contains("log")) {
    const RateFit fit = fit_rate(cells, Regressor::log);
    log << "fit: slope " << fit.slope << "  R^2 " << fit.r2 << "\n";
    if (cfg.emit_plots) emit_plot(rows, fit, dir / "plot.svg");
    if (extra["fits"].contains("log_log"))
      log << "fit (ln ln " << to_string(grid.sweep_axis) << "): slope " << extra["fits"]["log_log"]["slope"].get<double>() << "\n";
  }
}

inline void run_calibrate_command(const RunConfig& cfg, std::ostream& log) {
  ExperimentGrid grid = *cfg.grid;
  grid.seed = master_seed(cfg);
  const SweepAxis axis = grid.sweep_axis;
  const CellResult pilot = run_wl_pilot(grid);
  const double C = calibrate_constant(pilot, wl_bound_inputs(grid, 0, 0.0));
  log << "pilot " << to_string(axis) << "=" << pilot.axis_value << "  distance " << pilot.distance
      << "  calibrated C " << C << "\n";
  const Json out = {{"config", cfg.effective},
                    {"config_hash", config_hash(cfg)},
                    {"pilot_axis_value", pilot.axis_value},
                    {"pilot_distance", pilot.distance},
                    {"pilot_distance_stderr", pilot.distance_stderr},
                    {"abs_const_C", C}};
  atomic_write(std::filesystem::path(cfg.output_dir) / "calibration.json", out.dump(2) + "\n");
}

inline void run_bounds_command(const RunConfig& cfg, std::ostream& log) {
  const BoundsEvalInputs& b = *cfg.bound_inputs;
  Json out = {{"config", cfg.effective}, {"config_hash", config_hash(cfg)}};
  Json v = Json::object();
  auto put = [&](const char* key, auto&& f) {
    try {
      v[key] = f();
    } catch (const DomainError& e) {
      v[key] = nullptr;
      out["skipped"][key] = e.what();
    }
  };
  put("main_bound_cnp", [&] { return main_bound_cnp(b.base); });
  put("main_tail_threshold", [&] { return main_tail_threshold(b.base, b.t); });
  put("wlt_subgaussian_bound", [&] { return wlt_subgaussian_bound(b.base); });
  put("subgaussian_quantile", [&] { return subgaussian_quantile({b.base.nu0, b.g}, b.base.p, b.t); });
  put("subgaussian_tail", [&] { return subgaussian_tail({b.base.nu0, b.g}, b.base.p, b.t); });
  put("subgaussian_admissible", [&] { return SubGaussianProfile{b.base.nu0, b.g}.admissible(b.base.p); });
  put("anti_concentration_const", [&] { return anti_concentration_const(b.base.p, b.sigma_lower); });
  put("final_dist_bound", [&] {
    const FinalDistBound f = final_dist_bound(b.base.n, b.base.p, b.base.nu0, b.sigma_upper, b.sigma_lower,
                                              b.lambda_min, b.base.abs_const_C);
    return Json{{"bound", f.bound}, {"shift", f.shift}};
  });
  out["values"] = v;
  log << v.dump(2) << "\n";
  atomic_write(std::filesystem::path(cfg.output_dir) / "bounds.json", out.dump(2) + "\n");
}

inline void run_ou_command(const RunConfig& cfg, std::ostream& log) {
  const OuConfig& o = *cfg.ou;
  const SeedSpec seed = master_seed(cfg);
  const auto profile = run_ou_profile(o.model, o.m, o.times, o.trials, o.sinkhorn, seed.derive(0), cfg.threads);
  std::string csv = "t,distance,distance_stderr,converged\n";
  for (const auto& p : profile) {
    csv += format_double(p.t) + "," + format_double(p.distance) + "," + format_double(p.distance_stderr) + "," +
           (p.converged ? "true" : "false") + "\n";
    log << "t=" << p.t << "  W=" << p.distance << " +- " << p.distance_stderr << "\n";
  }
  // velocity field at each requested time; compared against the regression target
  const PointCloud xi = sample_sum_replicates(o.model, o.velocity_m, seed.derive(1).derive(0));
  const PointCloud gamma = sample_gaussian(sum_covariance(o.model), o.velocity_m, seed.derive(1).derive(1));
  std::string vcsv = "t,field_norm,target_norm,mean_field_1\n";
  for (double t : o.velocity_times) {
    const VelocityEstimate v = estimate_velocity_field(xi, gamma, t);
    const Matrix target = ou_velocity_target(xi, gamma, t);
    vcsv += format_double(t) + "," + format_double(field_norm(v.values, 2.0)) + "," +
            format_double(field_norm(target, 2.0)) + "," + format_double(v.values.col(0).mean()) + "\n";
    log << "velocity t=" << t << "  |field|_2=" << field_norm(v.values, 2.0) << "  |target|_2=" << field_norm(target, 2.0)
        << "\n";
  }
  const std::filesystem::path dir = cfg.output_dir;
  atomic_write(dir / "ou_profile.csv", csv);
  atomic_write(dir / "velocity.csv", vcsv);
  const Json side = {{"config", cfg.effective}, {"config_hash", config_hash(cfg)}, {"timestamp", utc_timestamp()}};
  atomic_write(dir / "ou_diagnostics.json", side.dump(2) + "\n");
}

inline void run_hermite_command(const RunConfig& cfg, std::ostream& log) {
  const HermiteConfig& h = *cfg.hermite;
  double worst = 0.0;
  std::size_t pairs = 0;
  // all multi-indices in dimension p with components <= max_order
  std::vector<MultiIndex> all;
  std::vector<unsigned> a(h.p, 0u);
  for (;;) {
    all.emplace_back(a);
    std::size_t k = 0;
    while (k < h.p && a[k] == h.max_order) a[k++] = 0;
    if (k == h.p) break;
    ++a[k];
  }
  const unsigned nodes = 2 * h.max_order + 1;
  for (const auto& x : all)
    for (const auto& y : all) {
      const double v = hermite_orthogonality_check(x, y, nodes);
      const double expect = x == y ? x.factorial() : 0.0;
      worst = std::max(worst, std::abs(v - expect) / x.factorial());
      ++pairs;
    }
  log << "orthogonality: " << pairs << " pairs, worst error / alpha! = " << worst << "\n";
  Json boni = Json::array();
  Rng rng(master_seed(cfg).derive(0), 0);
  bool all_hold = true;
  for (unsigned s = 0; s < h.boni_sets; ++s) {
    const auto coeffs = random_coefficients(h.boni_p, h.boni_max_order, 4, 2, rng);
    for (double q : h.q) {
      const BoniCheck c = boni_inequality_check(coeffs, q, h.m, master_seed(cfg).derive(1 + s));
      all_hold = all_hold && c.holds();
      boni.push_back({{"set", s}, {"q", q}, {"lhs", c.lhs}, {"rhs", c.rhs}, {"rel_stderr", c.rel_stderr},
                      {"holds", c.holds()}});
    }
  }
  log << "moment inequality: " << boni.size() << " checks, all hold: " << (all_hold ? "yes" : "no") << "\n";
  const Json out = {{"config", cfg.effective},
                    {"config_hash", config_hash(cfg)},
                    {"orthogonality", {{"pairs", pairs}, {"worst_relative_error", worst}}},
                    {"moment_inequality", boni},
                    {"all_hold", all_hold}};
  atomic_write(std::filesystem::path(cfg.output_dir) / "hermite.json", out.dump(2) + "\n");
}

}  // namespace detail

inline void run_command(const RunConfig& cfg, std::ostream& log = std::cerr) {
  switch (cfg.command) {
    case Command::wl_sweep:
    case Command::max_sweep: detail::run_sweep_command(cfg, log); break;
    case Command::calibrate: detail::run_calibrate_command(cfg, log); break;
    case Command::bounds_eval: detail::run_bounds_command(cfg, log); break;
    case Command::ou_diagnostics: detail::run_ou_command(cfg, log); break;
    case Command::hermite_check: detail::run_hermite_command(cfg, log); break;
  }
}

}  // namespace gal
