#include "muskat/driver.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  using namespace muskat;
  CLI::App app{"Two-phase free-boundary solver and verification harness"};
  app.set_version_flag("--version", std::string(driver::version));
  std::string config_path, mode, out;
  app.add_option("--config", config_path, "run configuration file")->required();
  app.add_option("--mode", mode, "override run.mode");
  app.add_option("--out", out, "override run.out (output directory)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : driver::exit_config;
  }
  driver::RunConfig rc;
  try {
    auto cfg = config::Config::load(config_path);
    if (!mode.empty()) cfg.set("run.mode", mode);
    if (!out.empty()) cfg.set("run.out", out);
    rc = driver::read_run_config(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return driver::exit_config;
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return driver::exit_config;
  }
  return driver::run(rc, std::cout);
}
