// Command-line front end: runs the canned experiments or a user-assembled
// detector comparison, writing CSV results, a metadata sidecar, and a plot
// script into the output directory.

#include <chrono>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "qcd/artifacts.hpp"
#include "qcd/config.hpp"
#include "qcd/csv.hpp"
#include "qcd/experiments.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string scale = "desk";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> replications;
  std::optional<std::string> output;
  std::optional<int> threads;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool config_required) {
  auto* config = cmd->add_option("--config", opts.config_path,
                                 "JSON experiment configuration");
  if (config_required) config->required();
  cmd->add_option("--scale", opts.scale, "Parameter preset the config overrides")
      ->check(CLI::IsMember({"desk", "paper"}))
      ->capture_default_str();
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&opts](const std::uint64_t& v) { opts.seed = v; },
      "Base random seed");
  cmd->add_option_function<std::size_t>(
      "--reps", [&opts](const std::size_t& v) { opts.replications = v; },
      "Monte Carlo replications");
  cmd->add_option_function<std::string>(
      "--out", [&opts](const std::string& v) { opts.output = v; },
      "Output directory");
  cmd->add_option_function<int>(
      "--threads", [&opts](const int& v) { opts.threads = v; },
      "Worker threads for replications");
}

qcd::Scale parse_scale(const std::string& name) {
  return name == "paper" ? qcd::Scale::Paper : qcd::Scale::Desk;
}

qcd::ExperimentPlan build_plan(const CommonOpts& opts,
                               const std::string& experiment_hint) {
  qcd::ExperimentPlan plan =
      opts.config_path.empty()
          ? qcd::make_plan(experiment_hint, parse_scale(opts.scale))
          : qcd::load_plan(opts.config_path, parse_scale(opts.scale));
  if (!experiment_hint.empty() && plan.experiment != experiment_hint) {
    throw qcd::ConfigError("config: file describes experiment '" + plan.experiment +
                           "' but the command asked for '" + experiment_hint + "'");
  }
  qcd::apply_overrides(plan, opts.seed, opts.replications, opts.output, opts.threads);
  return plan;
}

int run_experiment(const CommonOpts& opts, const std::string& experiment_hint) {
  const auto plan = build_plan(opts, experiment_hint);
  const auto start = std::chrono::steady_clock::now();
  const auto table = qcd::run_plan(plan);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const auto csv_path = qcd::write_results_csv(table, plan.output_dir, plan.experiment);
  const auto meta_path = qcd::write_metadata(plan, table, wall, plan.output_dir);
  const auto plot_path = qcd::write_plot_script(plan.experiment,
                                                csv_path.filename().string(),
                                                plan.output_dir);
  std::cout << "experiment: " << plan.experiment << "\n"
            << "config hash: " << plan.hash << "\n"
            << "rows: " << table.rows.size() << "\n"
            << "wall time: " << wall << " s\n"
            << "wrote " << csv_path.string() << "\n"
            << "wrote " << meta_path.string() << "\n"
            << "wrote " << plot_path.string() << "\n";
  return 0;
}

int run_calibrate(const CommonOpts& opts) {
  auto plan = build_plan(opts, "");
  const auto* custom = std::get_if<qcd::CustomConfig>(&plan.config);
  if (custom == nullptr) {
    throw qcd::ConfigError(
        "config: calibrate expects a 'custom' experiment config with a detector list");
  }
  const auto table = [&] {
    auto t = qcd::calibrate_custom(*custom);
    t.config_hash = plan.hash;
    return t;
  }();
  std::cout << "detector threshold arl_estimate arl_std_error replications\n";
  for (const auto& row : table.rows) {
    std::cout << row.detector << ' ' << qcd::format_double(row.threshold) << ' '
              << qcd::format_double(row.estimate) << ' '
              << qcd::format_double(row.std_error) << ' ' << row.replications << "\n";
  }
  const auto csv_path = qcd::write_results_csv(table, plan.output_dir, "calibrate");
  std::cout << "wrote " << csv_path.string() << "\n";
  return 0;
}

int run_validate(const CommonOpts& opts) {
  const auto plan = qcd::load_plan(opts.config_path, parse_scale(opts.scale));
  std::cout << "ok: experiment " << plan.experiment << ", config hash " << plan.hash
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quickest change detection experiment toolkit"};
  app.require_subcommand(1);

  CommonOpts run_opts;
  std::string experiment;
  auto* run_cmd = app.add_subcommand("run", "Run an experiment and write its artifacts");
  run_cmd->add_option("experiment", experiment, "fig1a | fig1b | fig2 | fdr | custom")
      ->required()
      ->check(CLI::IsMember({"fig1a", "fig1b", "fig2", "fdr", "custom"}));
  add_common(run_cmd, run_opts, false);

  CommonOpts fdr_opts;
  auto* fdr_cmd =
      app.add_subcommand("fdr", "Run the streamwise error-rate experiment");
  add_common(fdr_cmd, fdr_opts, false);

  CommonOpts cal_opts;
  auto* cal_cmd = app.add_subcommand(
      "calibrate", "Calibrate the detectors of a custom config and print thresholds");
  add_common(cal_cmd, cal_opts, true);

  CommonOpts val_opts;
  auto* val_cmd =
      app.add_subcommand("validate-config", "Parse and validate a config file");
  add_common(val_cmd, val_opts, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (run_cmd->parsed()) return run_experiment(run_opts, experiment);
    if (fdr_cmd->parsed()) return run_experiment(fdr_opts, "fdr");
    if (cal_cmd->parsed()) return run_calibrate(cal_opts);
    if (val_cmd->parsed()) return run_validate(val_opts);
  } catch (const qcd::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const qcd::CalibrationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
