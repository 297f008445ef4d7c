#pragma once

#include <climits>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "qcd/csv.hpp"
#include "qcd/error.hpp"
#include "qcd/experiments.hpp"

namespace qcd {

using Json = nlohmann::json;

enum class Scale { Desk, Paper };

using AnyExperiment =
    std::variant<Fig1aConfig, Fig1bConfig, Fig2Config, FdrConfig, CustomConfig>;

struct ExperimentPlan {
  std::string experiment;
  AnyExperiment config;
  std::string output_dir = "out";
  Json echo;         // canonical effective configuration
  std::string hash;  // hex digest of echo

  MCConfig& mc() {
    return std::visit([](auto& c) -> MCConfig& { return c.mc; }, config);
  }
  const MCConfig& mc() const {
    return std::visit([](const auto& c) -> const MCConfig& { return c.mc; }, config);
  }
};

namespace cfgdetail {

[[noreturn]] inline void fail(const std::string& path, const std::string& what) {
  throw ConfigError("config: " + path + ": " + what);
}

inline void check_object(const Json& j, const std::string& path,
                         std::initializer_list<const char*> allowed) {
  if (!j.is_object()) fail(path, "must be an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed) {
      if (item.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) fail(path + "." + item.key(), "unknown key");
  }
}

inline double as_double(const Json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "must be a number");
  return j.get<double>();
}

inline std::int64_t as_int(const Json& j, const std::string& path) {
  if (!j.is_number_integer() && !j.is_number_unsigned()) fail(path, "must be an integer");
  return j.get<std::int64_t>();
}

inline std::uint64_t as_uint(const Json& j, const std::string& path) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<std::int64_t>() >= 0)
    return static_cast<std::uint64_t>(j.get<std::int64_t>());
  fail(path, "must be a nonnegative integer");
}

inline std::string as_string(const Json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "must be a string");
  return j.get<std::string>();
}

template <typename T, typename Reader>
std::vector<T> as_array(const Json& j, const std::string& path, Reader&& read) {
  if (!j.is_array()) fail(path, "must be an array");
  if (j.empty()) fail(path, "must not be empty");
  std::vector<T> out;
  out.reserve(j.size());
  std::size_t i = 0;
  for (const auto& el : j) {
    out.push_back(read(el, path + "[" + std::to_string(i) + "]"));
    ++i;
  }
  return out;
}

inline std::vector<std::int64_t> as_int_array(const Json& j, const std::string& path) {
  return as_array<std::int64_t>(j, path, [](const Json& el, const std::string& p) {
    return as_int(el, p);
  });
}

inline std::vector<int> as_small_int_array(const Json& j, const std::string& path) {
  return as_array<int>(j, path, [](const Json& el, const std::string& p) {
    const auto v = as_int(el, p);
    if (v < INT_MIN || v > INT_MAX) fail(p, "out of range");
    return static_cast<int>(v);
  });
}

inline std::vector<double> as_double_array(const Json& j, const std::string& path) {
  return as_array<double>(j, path, [](const Json& el, const std::string& p) {
    return as_double(el, p);
  });
}

}  // namespace cfgdetail

// Base configurations per experiment and scale; file and CLI values
// override these.
inline AnyExperiment preset(const std::string& experiment, Scale scale) {
  const bool desk = scale == Scale::Desk;
  if (experiment == "fig1a") {
    Fig1aConfig c;
    c.mc.replications = desk ? 500 : 5000;
    return c;
  }
  if (experiment == "fig1b") {
    Fig1bConfig c;
    if (desk) c.gamma_grid = {100.0, 300.0};
    c.mc.replications = desk ? 500 : 2000;
    return c;
  }
  if (experiment == "fig2") {
    return desk ? Fig2Config::desk() : Fig2Config::paper();
  }
  if (experiment == "fdr") {
    FdrConfig c;
    c.mc.replications = desk ? 500 : 2000;
    return c;
  }
  if (experiment == "custom") {
    CustomConfig c;
    c.mc.replications = desk ? 500 : 2000;
    return c;
  }
  throw ConfigError("config: experiment must be one of fig1a, fig1b, fig2, fdr, custom");
}

namespace cfgdetail {

inline void apply_fig1a(Fig1aConfig& c, const Json& p) {
  check_object(p, "parameters",
               {"mu", "gamma", "rho_slow", "rho_fast", "nu_grid"});
  if (p.contains("mu")) c.mu = as_double(p["mu"], "parameters.mu");
  if (p.contains("gamma")) c.gamma = as_double(p["gamma"], "parameters.gamma");
  if (p.contains("rho_slow")) c.rho_slow = as_double(p["rho_slow"], "parameters.rho_slow");
  if (p.contains("rho_fast")) c.rho_fast = as_double(p["rho_fast"], "parameters.rho_fast");
  if (p.contains("nu_grid")) c.nu_grid = as_int_array(p["nu_grid"], "parameters.nu_grid");
}

inline void apply_fig1b(Fig1bConfig& c, const Json& p) {
  check_object(p, "parameters", {"mu", "gamma_grid"});
  if (p.contains("mu")) c.mu = as_double(p["mu"], "parameters.mu");
  if (p.contains("gamma_grid"))
    c.gamma_grid = as_double_array(p["gamma_grid"], "parameters.gamma_grid");
}

inline void apply_fig2(Fig2Config& c, const Json& p) {
  check_object(p, "parameters",
               {"stream_count", "gamma", "nu", "target_kl", "sparsity_grid", "xs_p",
                "xs_window", "wl_windows", "calibration_replications",
                "calibration_horizon"});
  if (p.contains("stream_count"))
    c.stream_count = static_cast<int>(as_int(p["stream_count"], "parameters.stream_count"));
  if (p.contains("gamma")) c.gamma = as_double(p["gamma"], "parameters.gamma");
  if (p.contains("nu")) c.nu = as_int(p["nu"], "parameters.nu");
  if (p.contains("target_kl")) c.target_kl = as_double(p["target_kl"], "parameters.target_kl");
  if (p.contains("sparsity_grid"))
    c.sparsity_grid = as_small_int_array(p["sparsity_grid"], "parameters.sparsity_grid");
  if (p.contains("xs_p")) c.xs_p = as_double(p["xs_p"], "parameters.xs_p");
  if (p.contains("xs_window"))
    c.xs_window = static_cast<int>(as_int(p["xs_window"], "parameters.xs_window"));
  if (p.contains("wl_windows"))
    c.wl_windows = as_small_int_array(p["wl_windows"], "parameters.wl_windows");
  if (p.contains("calibration_replications"))
    c.calibration_replications = static_cast<std::size_t>(
        as_uint(p["calibration_replications"], "parameters.calibration_replications"));
  if (p.contains("calibration_horizon"))
    c.calibration_horizon = as_int(p["calibration_horizon"], "parameters.calibration_horizon");
}

inline void apply_fdr(FdrConfig& c, const Json& p) {
  check_object(p, "parameters",
               {"stream_count", "rho", "theta", "horizon", "alpha_grid", "n_grid",
                "time_sweep_alpha"});
  if (p.contains("stream_count"))
    c.stream_count = static_cast<int>(as_int(p["stream_count"], "parameters.stream_count"));
  if (p.contains("rho")) c.rho = as_double(p["rho"], "parameters.rho");
  if (p.contains("theta")) c.theta = as_double(p["theta"], "parameters.theta");
  if (p.contains("horizon")) c.horizon = as_int(p["horizon"], "parameters.horizon");
  if (p.contains("alpha_grid"))
    c.alpha_grid = as_double_array(p["alpha_grid"], "parameters.alpha_grid");
  if (p.contains("n_grid")) c.n_grid = as_int_array(p["n_grid"], "parameters.n_grid");
  if (p.contains("time_sweep_alpha"))
    c.time_sweep_alpha = as_double(p["time_sweep_alpha"], "parameters.time_sweep_alpha");
}

inline CustomDetectorSpec parse_detector(const Json& j, const std::string& path) {
  check_object(j, path, {"type", "rho", "beta", "p", "window", "windows"});
  if (!j.contains("type")) fail(path + ".type", "required");
  CustomDetectorSpec d;
  d.type = as_string(j["type"], path + ".type");
  if (j.contains("rho")) d.rho = as_double(j["rho"], path + ".rho");
  if (j.contains("beta")) d.beta = as_double(j["beta"], path + ".beta");
  if (j.contains("p")) d.p = as_double(j["p"], path + ".p");
  if (j.contains("window"))
    d.window = static_cast<int>(as_int(j["window"], path + ".window"));
  if (j.contains("windows")) d.windows = as_small_int_array(j["windows"], path + ".windows");
  return d;
}

inline void apply_custom(CustomConfig& c, const Json& p) {
  check_object(p, "parameters",
               {"stream_count", "mu", "sparsity", "target_kl", "nu", "gamma",
                "detectors"});
  if (p.contains("stream_count"))
    c.stream_count = static_cast<int>(as_int(p["stream_count"], "parameters.stream_count"));
  if (p.contains("mu")) c.mu = as_double(p["mu"], "parameters.mu");
  if (p.contains("sparsity"))
    c.sparsity = static_cast<int>(as_int(p["sparsity"], "parameters.sparsity"));
  if (p.contains("target_kl")) c.target_kl = as_double(p["target_kl"], "parameters.target_kl");
  if (p.contains("nu")) c.nu = as_int(p["nu"], "parameters.nu");
  if (p.contains("gamma")) c.gamma = as_double(p["gamma"], "parameters.gamma");
  if (p.contains("detectors")) {
    c.detectors = as_array<CustomDetectorSpec>(
        p["detectors"], "parameters.detectors",
        [](const Json& el, const std::string& path) { return parse_detector(el, path); });
  }
}

inline Json echo_mc(const MCConfig& mc) {
  return Json{{"replications", mc.replications},
              {"horizon", mc.horizon},
              {"seed", mc.seed},
              {"threads", mc.threads},
              {"tolerance", mc.tolerance}};
}

inline Json echo_experiment(const AnyExperiment& config) {
  Json out;
  if (const auto* c = std::get_if<Fig1aConfig>(&config)) {
    out = Json{{"mu", c->mu},
               {"gamma", c->gamma},
               {"rho_slow", c->rho_slow},
               {"rho_fast", c->rho_fast},
               {"nu_grid", c->nu_grid}};
  } else if (const auto* c = std::get_if<Fig1bConfig>(&config)) {
    out = Json{{"mu", c->mu}, {"gamma_grid", c->gamma_grid}};
  } else if (const auto* c = std::get_if<Fig2Config>(&config)) {
    out = Json{{"stream_count", c->stream_count},
               {"gamma", c->gamma},
               {"nu", c->nu},
               {"target_kl", c->target_kl},
               {"sparsity_grid", c->sparsity_grid},
               {"xs_p", c->xs_p},
               {"xs_window", c->xs_window},
               {"wl_windows", c->wl_windows},
               {"calibration_replications", c->calibration_replications},
               {"calibration_horizon", c->calibration_horizon}};
  } else if (const auto* c = std::get_if<FdrConfig>(&config)) {
    out = Json{{"stream_count", c->stream_count},
               {"rho", c->rho},
               {"theta", c->theta},
               {"horizon", c->horizon},
               {"alpha_grid", c->alpha_grid},
               {"n_grid", c->n_grid},
               {"time_sweep_alpha", c->time_sweep_alpha}};
  } else {
    const auto& custom = std::get<CustomConfig>(config);
    Json dets = Json::array();
    for (const auto& d : custom.detectors) {
      dets.push_back(Json{{"type", d.type},
                          {"rho", d.rho},
                          {"beta", d.beta},
                          {"p", d.p},
                          {"window", d.window},
                          {"windows", d.windows}});
    }
    out = Json{{"stream_count", custom.stream_count},
               {"mu", custom.mu},
               {"sparsity", custom.sparsity},
               {"target_kl", custom.target_kl},
               {"nu", custom.nu},
               {"gamma", custom.gamma},
               {"detectors", dets}};
  }
  return out;
}

}  // namespace cfgdetail

// Recomputes the canonical echo and hash from the effective configuration.
// Two plans with the same effective parameters always share a hash.
inline void seal_plan(ExperimentPlan& plan) {
  plan.echo = Json{{"experiment", plan.experiment},
                   {"output", plan.output_dir},
                   {"mc", cfgdetail::echo_mc(plan.mc())},
                   {"parameters", cfgdetail::echo_experiment(plan.config)}};
  plan.hash = hash_hex(fnv1a(plan.echo.dump()));
}

// Parses and validates a configuration document. Unknown keys anywhere are
// rejected. Scale chooses the preset the document's values override.
inline ExperimentPlan plan_from_json(const Json& raw, Scale scale) {
  cfgdetail::check_object(raw, "config",
                          {"experiment", "seed", "replications", "threads", "horizon",
                           "tolerance", "output", "parameters"});
  if (!raw.contains("experiment"))
    throw ConfigError("config: experiment: required key is missing");
  ExperimentPlan plan;
  plan.experiment = cfgdetail::as_string(raw["experiment"], "experiment");
  plan.config = preset(plan.experiment, scale);

  MCConfig& mc = plan.mc();
  if (raw.contains("seed")) mc.seed = cfgdetail::as_uint(raw["seed"], "seed");
  if (raw.contains("replications"))
    mc.replications =
        static_cast<std::size_t>(cfgdetail::as_uint(raw["replications"], "replications"));
  if (raw.contains("threads"))
    mc.threads = static_cast<int>(cfgdetail::as_int(raw["threads"], "threads"));
  if (raw.contains("horizon")) mc.horizon = cfgdetail::as_int(raw["horizon"], "horizon");
  if (raw.contains("tolerance"))
    mc.tolerance = cfgdetail::as_double(raw["tolerance"], "tolerance");
  if (raw.contains("output"))
    plan.output_dir = cfgdetail::as_string(raw["output"], "output");

  if (raw.contains("parameters")) {
    const Json& p = raw["parameters"];
    std::visit(
        [&](auto& c) {
          using T = std::decay_t<decltype(c)>;
          if constexpr (std::is_same_v<T, Fig1aConfig>) cfgdetail::apply_fig1a(c, p);
          else if constexpr (std::is_same_v<T, Fig1bConfig>) cfgdetail::apply_fig1b(c, p);
          else if constexpr (std::is_same_v<T, Fig2Config>) cfgdetail::apply_fig2(c, p);
          else if constexpr (std::is_same_v<T, FdrConfig>) cfgdetail::apply_fdr(c, p);
          else cfgdetail::apply_custom(c, p);
        },
        plan.config);
  }

  // Reject bad values now, before any computation runs.
  try {
    std::visit([](const auto& c) { c.validate(); }, plan.config);
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  seal_plan(plan);
  return plan;
}

inline ExperimentPlan make_plan(const std::string& experiment, Scale scale) {
  ExperimentPlan plan;
  plan.experiment = experiment;
  plan.config = preset(experiment, scale);
  seal_plan(plan);
  return plan;
}

inline ExperimentPlan load_plan(const std::filesystem::path& file, Scale scale) {
  std::ifstream in(file);
  if (!in) throw ConfigError("config: cannot open " + file.string());
  Json raw;
  try {
    raw = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config: " + file.string() + ": " + e.what());
  }
  return plan_from_json(raw, scale);
}

// CLI-level overrides, applied after file values; the plan is re-sealed so
// the hash reflects what actually runs.
inline void apply_overrides(ExperimentPlan& plan, std::optional<std::uint64_t> seed,
                            std::optional<std::size_t> replications,
                            std::optional<std::string> output,
                            std::optional<int> threads) {
  if (seed) plan.mc().seed = *seed;
  if (replications) plan.mc().replications = *replications;
  if (output) plan.output_dir = *output;
  if (threads) plan.mc().threads = *threads;
  try {
    std::visit([](const auto& c) { c.validate(); }, plan.config);
  } catch (const ContractViolation& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  seal_plan(plan);
}

inline ResultTable run_plan(const ExperimentPlan& plan) {
  ResultTable table = std::visit(
      [](const auto& c) {
        using T = std::decay_t<decltype(c)>;
        if constexpr (std::is_same_v<T, Fig1aConfig>) return run_fig1a(c);
        else if constexpr (std::is_same_v<T, Fig1bConfig>) return run_fig1b(c);
        else if constexpr (std::is_same_v<T, Fig2Config>) return run_fig2(c);
        else if constexpr (std::is_same_v<T, FdrConfig>) return run_fdr(c);
        else return run_custom(c);
      },
      plan.config);
  table.config_hash = plan.hash;
  return table;
}

}  // namespace qcd
