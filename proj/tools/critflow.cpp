#include <CLI11.hpp>

#include "critflow/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Vanishing-viscosity gradient-flow laboratory"};
  app.set_version_flag("--version", critflow::version);

  critflow::RunOptions opts;
  std::string config, output;
  std::uint64_t seed = 0;
  app.add_option("--config", config, "scenario file (TOML, or JSON by extension)")->required()->check(CLI::ExistingFile);
  auto* out_opt = app.add_option("--output", output, "output directory, overrides the config");
  auto* seed_opt = app.add_option("--seed", seed, "random seed, overrides the config");
  app.add_flag("--quiet", opts.quiet, "no progress output");
  app.add_flag("--no-plots", opts.no_plots, "skip SVG figures");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : critflow::exit_config;
  }

  opts.config_path = config;
  if (*out_opt) opts.output_dir = output;
  if (*seed_opt) opts.seed = seed;
  return critflow::run(opts);
}
