#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "artuda/errors.hpp"
#include "artuda/experiment.hpp"
#include "artuda/report.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Adversarially robust training lab for unsupervised domain "
               "adaptation"};
  app.require_subcommand(1);

  std::string config_path;
  std::string report_dir;

  CLI::App* run = app.add_subcommand(
      "run", "Train and evaluate every seed/lambda in a config");
  run->add_option("config", config_path, "experiment config (JSON)")
      ->required();

  CLI::App* sweep = app.add_subcommand(
      "sweep", "Robust accuracy over the eps x j_max grid of a config");
  sweep->add_option("config", config_path, "experiment config (JSON)")
      ->required();

  CLI::App* sanity = app.add_subcommand(
      "sanity", "Evaluation sanity checks on the configured task");
  sanity->add_option("config", config_path, "experiment config (JSON)")
      ->required();

  CLI::App* report = app.add_subcommand(
      "report", "Aggregate metrics.jsonl in a directory into tables/plots");
  report->add_option("dir", report_dir, "output directory of a run")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      return artuda::evalkit::run_experiment(
          artuda::evalkit::load_config(config_path));
    }
    if (sweep->parsed()) {
      return artuda::evalkit::run_sweep(
          artuda::evalkit::load_config(config_path));
    }
    if (sanity->parsed()) {
      return artuda::evalkit::run_sanity(
          artuda::evalkit::load_config(config_path));
    }
    if (report->parsed()) {
      artuda::evalkit::emit_report(report_dir);
      std::cout << "report written to " << report_dir << "/report.md\n";
      return 0;
    }
  } catch (const artuda::ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return 1;
  } catch (const artuda::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
