#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "gal/app.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-approximation experiments and bound evaluators"};
  app.set_help_all_flag("--help-all");
  std::string command, config_path, output_dir;
  std::optional<std::uint64_t> seed;
  bool no_plots = false;
  app.add_option("command", command, "wl-sweep | max-sweep | bounds-eval | ou-diagnostics | hermite-check | calibrate")
      ->required()
      ->check(CLI::IsMember({"wl-sweep", "max-sweep", "bounds-eval", "ou-diagnostics", "hermite-check", "calibrate"}));
  app.add_option("--config", config_path, "JSON configuration file")->required();
  app.add_option("--output-dir", output_dir, "directory for results (overrides the config)");
  app.add_option("--seed", seed, "master seed (overrides the config)");
  app.add_flag("--no-plots", no_plots, "skip SVG output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    gal::RunConfig cfg = gal::load_config(config_path);
    if (std::string(gal::to_string(cfg.command)) != command)
      throw gal::ConfigError("command: config says '" + std::string(gal::to_string(cfg.command)) +
                             "' but the command line says '" + command + "'");
    if (seed) gal::override_seed(cfg, *seed);
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    if (no_plots) cfg.emit_plots = false;
    gal::run_command(cfg, std::cerr);
    std::cerr << "results in " << cfg.output_dir << " (config " << gal::config_hash(cfg) << ")\n";
  } catch (const gal::Error& e) {
    std::cerr << "gal: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "gal: internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
