#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "gal/experiments.hpp"

using namespace gal;
using Catch::Approx;

namespace {

double brute_ks(const std::vector<double>& a, const std::vector<double>& b) {
  auto cdf = [](const std::vector<double>& v, double t) {
    double c = 0.0;
    for (double x : v) c += x <= t ? 1.0 : 0.0;
    return c / static_cast<double>(v.size());
  };
  double best = 0.0;
  for (const auto* v : {&a, &b})
    for (double t : *v) best = std::max(best, std::abs(cdf(a, t) - cdf(b, t)));
  return best;
}

std::vector<CellResult> synthetic(const std::vector<double>& axis, auto&& f) {
  std::vector<CellResult> cells;
  for (double v : axis) {
    CellResult c;
    c.axis_value = v;
    c.distance = f(v);
    cells.push_back(c);
  }
  return cells;
}

ExperimentGrid small_max_grid(std::size_t m, SeedSpec seed) {
  ExperimentGrid g;
  g.sweep_axis = SweepAxis::n;
  g.axis_values = {25, 49, 100};
  g.fixed.p = 5;
  g.m = m;
  g.trials = 5;
  g.seed = seed;
  g.threads = 1;
  return g;
}

}  // namespace

TEST_CASE("KS statistic examples") {
  const std::vector<double> a = {0.3, -1.2, 2.5, 0.0, 0.7};
  CHECK(ks_statistic(a, a) == 0.0);
  std::vector<double> shifted = a;
  for (double& v : shifted) v += 1e3;
  CHECK(ks_statistic(a, shifted) == 1.0);
  CHECK_THROWS_AS(ks_statistic({}, a), InputError);
}

TEST_CASE("KS statistic equals the brute-force supremum") {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<int> small(0, 4);
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t na = 1 + gen() % 100, nb = 1 + gen() % 100;
    const bool ties = rep % 2 == 0;
    std::vector<double> a(na), b(nb);
    for (double& v : a) v = ties ? small(gen) : nd(gen);
    for (double& v : b) v = ties ? small(gen) : nd(gen) + 0.3;
    REQUIRE(ks_statistic(a, b) == Approx(brute_ks(a, b)).margin(1e-15));
  }
}

TEST_CASE("rate fit recovers exact power laws") {
  const std::vector<double> ns = {25, 49, 100, 225, 400};
  const RateFit f = fit_rate(synthetic(ns, [](double n) { return 7.0 / std::sqrt(n); }), Regressor::log);
  CHECK(std::abs(f.slope + 0.5) <= 1e-12);
  CHECK(std::abs(f.intercept - std::log(7.0)) <= 1e-12);
  CHECK(f.r2 == Approx(1.0).margin(1e-12));

  const RateFit g = fit_rate(synthetic({2, 4, 8, 16, 32}, [](double p) { return 2.0 * std::pow(p, 1.5); }), Regressor::log);
  CHECK(std::abs(g.slope - 1.5) <= 1e-12);
  CHECK(g.r2 == Approx(1.0).margin(1e-12));

  const RateFit h = fit_rate(synthetic({25, 50, 100, 200}, [](double p) { return 0.1 * std::log(p); }), Regressor::log_log);
  CHECK(std::abs(h.slope - 1.0) <= 1e-12);
}

TEST_CASE("rate fit under 5% multiplicative noise") {
  const std::vector<double> ns = {25, 49, 100, 225, 400};
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for (int rep = 0; rep < 100; ++rep) {
    const RateFit f = fit_rate(synthetic(ns, [&](double n) { return 3.0 / std::sqrt(n) * (1.0 + u(gen)); }), Regressor::log);
    REQUIRE(f.slope >= -0.56);
    REQUIRE(f.slope <= -0.44);
    REQUIRE(f.r2 >= 0.95);
  }
}

TEST_CASE("rate fit errors") {
  CHECK_THROWS_AS(fit_rate(synthetic({1, 2, 3}, [](double) { return 0.0; }), Regressor::log), DataError);
  CHECK_THROWS_AS(fit_rate(synthetic({1, 2}, [](double) { return 1.0; }), Regressor::log), InputError);
  CHECK_THROWS_AS(fit_rate(synthetic({1, 2, 3}, [](double) { return 1.0; }), Regressor::log_log), DataError);
}

TEST_CASE("calibration of the absolute constant") {
  CHECK(calibrate_linear(2.0, 1.0, 0.0) == 2.0);
  CHECK(calibrate_linear(0.5, 1.0, 0.7) == 0.0);
  CHECK_THROWS_AS(calibrate_linear(0.0, 1.0, 0.0), DataError);

  BoundInputs in;
  in.n = 100;
  in.p = 5;
  const SubGaussianWlTerms t = wlt_subgaussian_terms(in);
  CellResult cell;
  cell.distance = 0.5 * t.free_term;
  CHECK(calibrate_constant(cell, in) == 0.0);
  cell.distance = 2.0 * t.c_term + t.free_term;
  CHECK(calibrate_constant(cell, in) == Approx(2.0).epsilon(1e-12));
  in.abs_const_C = calibrate_constant(cell, in);
  CHECK(wlt_subgaussian_bound(in) >= cell.distance * (1.0 - 1e-12));
}

TEST_CASE("grid validation") {
  ExperimentGrid g = small_max_grid(100, {});
  g.axis_values = {25};
  CHECK_THROWS_AS(run_max_sweep(g), ConfigError);
  CHECK_THROWS_AS(run_wl_sweep(g), ConfigError);
  g.axis_values = {25, 25, 100};
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g.axis_values = {25, 49.5, 100};
  CHECK_THROWS_AS(g.validate(), ConfigError);
  g.sweep_axis = SweepAxis::L;
  g.axis_values = {2, 2.5, 3};
  CHECK_NOTHROW(g.validate());
  g.trials = 0;
  CHECK_THROWS_AS(g.validate(), ConfigError);
}

TEST_CASE("W_L sweep with exactly Gaussian summands is flat in n") {
  ExperimentGrid g;
  g.sweep_axis = SweepAxis::n;
  g.axis_values = {25, 100, 400};
  g.fixed.p = 2;
  g.m = 300;
  g.trials = 5;
  g.model.kind = SummandKind::gaussian;
  g.sinkhorn.blur = 0.05;
  g.sinkhorn.max_sweeps = 20;
  g.seed = {606, 0};
  g.threads = 1;
  const auto cells = run_wl_sweep(g);
  REQUIRE(cells.size() == 3);
  for (const auto& c : cells) {
    CHECK(c.distance > 0.0);
    CHECK(std::isfinite(c.distance_raw));
    CHECK(c.distance_raw >= c.distance);
    CHECK(c.sweeps_used > 0);
    CHECK(c.trial_distances.size() == 5);
    CHECK(c.theory_bound >= c.distance);
  }
  const RateFit f = fit_rate(cells, Regressor::log);
  INFO("slope " << f.slope);
  CHECK(std::abs(f.slope) <= 0.1);
}

TEST_CASE("max-norm sweep: determinism, thread independence, dominance") {
  const ExperimentGrid g = small_max_grid(2000, {707, 0});
  const auto a = run_max_sweep(g);
  const auto b = run_max_sweep(g);
  ExperimentGrid threaded = g;
  threaded.threads = 3;
  const auto c = run_max_sweep(threaded);
  REQUIRE(a.size() == 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].distance == b[i].distance);
    CHECK(a[i].trial_distances == c[i].trial_distances);
    CHECK(a[i].distance_stderr == c[i].distance_stderr);
    CHECK(std::isnan(a[i].distance_raw));
    CHECK(a[i].distance > 0.0);
    CHECK(a[i].distance <= 1.0);
  }
  // calibrated on the first cell, which it then matches exactly
  CHECK(a[0].theory_bound == Approx(a[0].distance).epsilon(1e-12));
  for (const auto& cell : a) CHECK(cell.theory_bound > 0.0);
}

TEST_CASE("more replicates do not increase the trial standard error") {
  double small = 0.0, large = 0.0;
  for (std::uint64_t rep = 0; rep < 5; ++rep) {
    small += run_max_sweep(small_max_grid(1000, {808, rep})).front().distance_stderr;
    large += run_max_sweep(small_max_grid(4000, {808, rep})).front().distance_stderr;
  }
  INFO("mean stderr at m=1000: " << small / 5 << "  at m=4000: " << large / 5);
  CHECK(large <= small);
}

TEST_CASE("OU profile ends at zero and decreases") {
  SummandModel mod;
  mod.n = 4;
  mod.p = 2;
  SinkhornConfig cfg;
  cfg.blur = 0.05;
  cfg.max_sweeps = 50;
  const std::vector<double> times = {0.0, 0.5, 2.0, std::numeric_limits<double>::infinity()};
  const auto prof = run_ou_profile(mod, 300, times, 3, cfg, {909, 0}, 1);
  REQUIRE(prof.size() == 4);
  CHECK(prof.back().distance == 0.0);
  for (std::size_t k = 1; k < prof.size(); ++k)
    CHECK(prof[k].distance <= prof[k - 1].distance + 3.0 * std::max(prof[k].distance_stderr, prof[k - 1].distance_stderr));
  CHECK(prof.front().distance > prof[2].distance);
}
