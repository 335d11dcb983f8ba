#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lorvar/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"lorvar: statistical-limit experiments for Lorenz-like flows"};
  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> format;
  std::vector<std::string> sets;
  bool print_config = false;

  app.add_option("command", command, "ulam | map-variance | flow-variance | ode-returns | sweep | modulus | "
                                     "relation-check | report")
      ->required()
      ->check(CLI::IsMember(lorvar::cli::commands()));
  app.add_option("--config", config_path, "configuration file of 'section.key = value' lines")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "root seed, overrides run.seed");
  app.add_option("--out", out, "output directory, overrides run.out");
  app.add_option("--format", format, "table format, overrides run.format")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--set", sets, "key=value override, applied after the file");
  app.add_flag("--print-config", print_config, "print the effective configuration and exit");
  CLI11_PARSE(app, argc, argv);

  lorvar::cli::RunConfig cfg;
  try {
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      std::stringstream ss;
      ss << in.rdbuf();
      cfg = lorvar::cli::parse_config(ss.str());
    }
    for (const auto& s : sets) lorvar::cli::apply_override(cfg, s);
    cfg.command = command;
    if (seed) cfg.seed = *seed;
    if (out) cfg.out = *out;
    if (format) cfg.format = *format;
    lorvar::cli::validate(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  if (print_config) {
    std::cout << lorvar::cli::echo(cfg);
    return 0;
  }
  return lorvar::cli::run(cfg, std::cerr);
}
