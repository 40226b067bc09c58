#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "torusred/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"High-order phase reduction of weakly coupled oscillators"};
  app.require_subcommand(1);
  std::string config, preset, out = "out";
  for (const char* name : {"bundle", "reduce", "simulate", "sweep", "verify"}) {
    auto* sub = app.add_subcommand(name);
    auto* c = sub->add_option("--config", config, "JSON run configuration");
    auto* p = sub->add_option("--preset", preset, "built-in parameter set")->check(CLI::IsMember({"set1", "set2"}));
    c->excludes(p);
    sub->add_option("--out", out, "output directory");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : torusred::exit_config;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  try {
    torusred::RunConfig cfg = !config.empty()   ? torusred::load_config(config)
                              : !preset.empty() ? torusred::parse_config(torusred::preset_json(preset))
                                                : torusred::parse_config(torusred::preset_json("set1"));
    cfg.command = command;
    if (app.get_subcommands().front()->count("--out") || config.empty()) cfg.out_dir = out;
    return torusred::run(cfg);
  } catch (const torusred::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return torusred::exit_config;
  }
}
