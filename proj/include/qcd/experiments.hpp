#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qcd/calibration.hpp"
#include "qcd/csv.hpp"
#include "qcd/detectors_multi.hpp"
#include "qcd/detectors_single.hpp"
#include "qcd/estimators.hpp"
#include "qcd/model.hpp"
#include "qcd/multistream_fdr.hpp"

namespace qcd {

// Distinct phases of one experiment (calibration, delay sweeps, ...) get
// decorrelated seeds derived from the user's base seed.
inline std::uint64_t phase_seed(std::uint64_t base, std::uint64_t phase) {
  return splitmix64(base ^ splitmix64(0x5eedf00d + phase));
}

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
};

// Weighted-by-nothing OLS line, with the slope's standard error propagated
// from the per-point standard errors of y.
inline SlopeFit fit_line(std::span<const double> x, std::span<const double> y,
                         std::span<const double> y_se) {
  require(x.size() == y.size() && x.size() == y_se.size(),
          "fit_line: mismatched lengths");
  require(x.size() >= 2, "fit_line: needs at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  require(sxx > 0.0, "fit_line: x values are all equal");
  SlopeFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double var = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double w = (x[i] - mx) / sxx;
    var += w * w * y_se[i] * y_se[i];
  }
  fit.slope_se = std::sqrt(var);
  return fit;
}

// ---------------------------------------------------------------------------
// Single-stream delay-vs-change-point comparison.

struct Fig1aConfig {
  double mu = 0.5;
  double gamma = 1000.0;
  double rho_slow = 1.0 / 1000.0;
  double rho_fast = 1.0 / 50.0;
  std::vector<std::int64_t> nu_grid{1, 50, 100, 200, 400, 800};
  MCConfig mc;

  void validate() const {
    mc.validate();
    require(mu != 0.0, "fig1a: mu must be nonzero");
    require(gamma > 1.0, "fig1a: gamma must be > 1");
    require(rho_slow > 0.0 && rho_slow < 1.0, "fig1a: rho_slow in (0, 1)");
    require(rho_fast > 0.0 && rho_fast < 1.0, "fig1a: rho_fast in (0, 1)");
    require(!nu_grid.empty(), "fig1a: empty nu grid");
    for (auto nu : nu_grid) require(nu >= 1, "fig1a: nu must be >= 1");
  }
};

namespace detail {

inline std::string rho_label(double rho) {
  return "shiryaev_rho=" + format_double(rho);
}

}  // namespace detail

inline ResultTable run_fig1a(const Fig1aConfig& cfg) {
  cfg.validate();
  const GaussianStreamModel model{1};
  const ThetaVector theta = ThetaVector::constant(1, cfg.mu);
  MCConfig cal = cfg.mc;
  cal.seed = phase_seed(cfg.mc.seed, 1);
  MCConfig del = cfg.mc;
  del.seed = phase_seed(cfg.mc.seed, 2);

  ResultTable table;
  table.seed = cfg.mc.seed;

  auto sweep = [&](const std::string& name, auto&& factory, ThresholdSearch search) {
    const auto calibrated = calibrate_threshold(model, factory, cfg.gamma, search, cal);
    table.rows.push_back({"fig1a_arl", name, cfg.gamma, calibrated.report.estimate,
                          calibrated.report.std_error, calibrated.report.replications,
                          calibrated.threshold});
    for (const auto nu : cfg.nu_grid) {
      const auto scenario = ChangeScenario::all_streams_at(1, ChangePoint::at(nu),
                                                           FixedTheta{theta});
      const auto report =
          estimate_delay(model, scenario, factory, calibrated.threshold, del);
      table.rows.push_back({"fig1a", name, static_cast<double>(nu), report.estimate,
                            report.std_error, report.replications,
                            calibrated.threshold});
    }
  };

  ThresholdSearch cusum_search;
  cusum_search.initial_guess = std::log(cfg.gamma);
  sweep("cusum", [&](double b) { return CusumDetector(model, theta, b); },
        cusum_search);

  ThresholdSearch sr_search;
  sr_search.initial_guess = cfg.gamma;
  sr_search.space = SearchSpace::Log;
  sweep("sr", [&](double b) { return SrDetector(model, theta, b); }, sr_search);

  for (const double rho : {cfg.rho_slow, cfg.rho_fast}) {
    ThresholdSearch search;
    const double odds = rho * cfg.gamma;
    search.initial_guess = odds / (1.0 + odds);
    search.space = SearchSpace::LogOdds;
    sweep(detail::rho_label(rho),
          [&, rho](double b) { return ShiryaevDetector(model, theta, rho, b); },
          search);
  }
  return table;
}

// ---------------------------------------------------------------------------
// Delay growth against the log of the target run length.

struct Fig1bConfig {
  double mu = 0.5;
  std::vector<double> gamma_grid{100.0, 300.0, 1000.0};
  MCConfig mc;

  void validate() const {
    mc.validate();
    require(mu != 0.0, "fig1b: mu must be nonzero");
    require(gamma_grid.size() >= 2, "fig1b: needs at least two gamma values");
    for (double g : gamma_grid) require(g > 1.0, "fig1b: gamma must be > 1");
  }
};

inline ResultTable run_fig1b(const Fig1bConfig& cfg) {
  cfg.validate();
  const GaussianStreamModel model{1};
  const ThetaVector theta = ThetaVector::constant(1, cfg.mu);
  MCConfig cal = cfg.mc;
  cal.seed = phase_seed(cfg.mc.seed, 1);
  MCConfig del = cfg.mc;
  del.seed = phase_seed(cfg.mc.seed, 2);
  const auto scenario =
      ChangeScenario::all_streams_at(1, ChangePoint::at(1), FixedTheta{theta});

  ResultTable table;
  table.seed = cfg.mc.seed;

  auto sweep = [&](const std::string& name, auto&& factory, SearchSpace space,
                   auto&& guess_of_gamma) {
    std::vector<double> xs, ys, ses;
    for (const double gamma : cfg.gamma_grid) {
      ThresholdSearch search;
      search.space = space;
      search.initial_guess = guess_of_gamma(gamma);
      MCConfig cal_g = cal;
      cal_g.horizon = cal.horizon > 0 ? cal.horizon : default_arl_horizon(gamma);
      const auto calibrated =
          calibrate_threshold(model, factory, gamma, search, cal_g);
      const auto report =
          estimate_delay(model, scenario, factory, calibrated.threshold, del);
      table.rows.push_back({"fig1b", name, gamma, report.estimate, report.std_error,
                            report.replications, calibrated.threshold});
      xs.push_back(std::log(gamma));
      ys.push_back(report.estimate);
      ses.push_back(report.std_error);
    }
    const auto fit = fit_line(xs, ys, ses);
    table.rows.push_back({"fig1b_slope", name, 0.0, fit.slope, fit.slope_se,
                          cfg.mc.replications, 0.0});
    table.rows.push_back({"fig1b_intercept", name, 0.0, fit.intercept, 0.0,
                          cfg.mc.replications, 0.0});
  };

  sweep("cusum", [&](double b) { return CusumDetector(model, theta, b); },
        SearchSpace::Linear, [](double g) { return std::log(g); });
  sweep("sr", [&](double b) { return SrDetector(model, theta, b); },
        SearchSpace::Log, [](double g) { return g; });
  return table;
}

// ---------------------------------------------------------------------------
// Multi-stream sparse-change comparison: mixture-window statistic against
// window-limited banks and a generalized likelihood ratio baseline, with
// the post-change support size swept.

struct Fig2Config {
  int stream_count = 50;
  double gamma = 1000.0;
  std::int64_t nu = 100;
  double target_kl = 0.5;
  std::vector<int> sparsity_grid{1, 25, 50};
  double xs_p = 0.0;  // 0 picks 1/sqrt(stream_count)
  int xs_window = 200;
  std::vector<int> wl_windows{30, 40, 50, 60, 70, 80};
  MCConfig mc;
  std::size_t calibration_replications = 320;
  std::int64_t calibration_horizon = 0;  // 0 picks 8 * gamma

  static Fig2Config desk() {
    Fig2Config c;
    c.mc.replications = 500;
    return c;
  }

  static Fig2Config paper() {
    Fig2Config c;
    c.stream_count = 100;
    c.sparsity_grid = {1, 25, 50, 100};
    c.mc.replications = 1000;
    c.calibration_replications = 1000;
    c.calibration_horizon = 20000;
    return c;
  }

  double mixture_p() const {
    return xs_p > 0.0 ? xs_p : 1.0 / std::sqrt(static_cast<double>(stream_count));
  }

  void validate() const {
    mc.validate();
    require(stream_count >= 1, "fig2: stream_count must be >= 1");
    require(gamma > 1.0, "fig2: gamma must be > 1");
    require(nu >= 1, "fig2: nu must be >= 1");
    require(target_kl > 0.0, "fig2: target_kl must be positive");
    require(!sparsity_grid.empty(), "fig2: empty sparsity grid");
    for (int l : sparsity_grid)
      require(l >= 1 && l <= stream_count, "fig2: sparsity outside [1, streams]");
    require(xs_p >= 0.0 && xs_p <= 1.0, "fig2: xs_p must be in [0, 1]");
    require(xs_window >= 1, "fig2: xs_window must be >= 1");
    require(!wl_windows.empty(), "fig2: empty window list");
    for (int w : wl_windows) require(w >= 1, "fig2: window must be >= 1");
    require(calibration_replications >= 2, "fig2: calibration needs >= 2 replications");
    require(calibration_horizon >= 0, "fig2: calibration horizon must be >= 0");
  }
};

inline ResultTable run_fig2(const Fig2Config& cfg) {
  cfg.validate();
  const GaussianStreamModel model{cfg.stream_count};
  MCConfig cal = cfg.mc;
  cal.seed = phase_seed(cfg.mc.seed, 1);
  cal.replications = cfg.calibration_replications;
  cal.horizon = cfg.calibration_horizon > 0
                    ? cfg.calibration_horizon
                    : static_cast<std::int64_t>(std::ceil(8.0 * cfg.gamma));
  MCConfig del = cfg.mc;
  del.seed = phase_seed(cfg.mc.seed, 2);

  ResultTable table;
  table.seed = cfg.mc.seed;

  auto sweep = [&](const std::string& name, auto&& factory) {
    ThresholdSearch search;
    search.initial_guess = std::log(cfg.gamma);
    const auto calibrated =
        calibrate_threshold(model, factory, cfg.gamma, search, cal);
    table.rows.push_back({"fig2_arl", name, cfg.gamma, calibrated.report.estimate,
                          calibrated.report.std_error, calibrated.report.replications,
                          calibrated.threshold});
    for (const int sparsity : cfg.sparsity_grid) {
      const auto scenario = ChangeScenario::all_streams_at(
          cfg.stream_count, ChangePoint::at(cfg.nu),
          SparseRandomTheta{sparsity, cfg.target_kl});
      const auto report =
          estimate_delay(model, scenario, factory, calibrated.threshold, del);
      table.rows.push_back({"fig2", name, static_cast<double>(sparsity),
                            report.estimate, report.std_error, report.replications,
                            calibrated.threshold});
    }
  };

  sweep("xs", [&](double b) {
    return XsDetector(model, cfg.mixture_p(), cfg.xs_window, b);
  });
  sweep("wl_ml", [&](double b) {
    return WindowBankDetector(model, MlEstimator{}, cfg.wl_windows, b);
  });
  sweep("wl_js", [&](double b) {
    return WindowBankDetector(model, JsPlusEstimator{}, cfg.wl_windows, b);
  });
  sweep("glr", [&](double b) { return XsDetector(model, 1.0, cfg.xs_window, b); });
  return table;
}

// ---------------------------------------------------------------------------
// Error rates of the common-threshold streamwise posterior procedure.

struct FdrConfig {
  int stream_count = 20;
  double rho = 0.01;
  double theta = 0.5;
  std::int64_t horizon = 2000;
  std::vector<double> alpha_grid{0.05, 0.1, 0.2, 0.5};
  std::vector<std::int64_t> n_grid{250, 500, 1000, 1500, 2000};
  double time_sweep_alpha = 0.2;
  MCConfig mc;

  void validate() const {
    mc.validate();
    require(stream_count >= 1, "fdr: stream_count must be >= 1");
    require(rho > 0.0 && rho < 1.0, "fdr: rho in (0, 1)");
    require(horizon >= 1, "fdr: horizon must be >= 1");
    require(!alpha_grid.empty(), "fdr: empty alpha grid");
    for (double a : alpha_grid) require(a > 0.0 && a < 1.0, "fdr: alpha in (0, 1)");
    require(time_sweep_alpha > 0.0 && time_sweep_alpha < 1.0,
            "fdr: time_sweep_alpha in (0, 1)");
    for (auto n : n_grid)
      require(n >= 1 && n <= horizon, "fdr: n grid outside [1, horizon]");
  }
};

inline ResultTable run_fdr(const FdrConfig& cfg) {
  cfg.validate();
  const GaussianStreamModel model{cfg.stream_count};
  const ThetaVector theta = ThetaVector::constant(cfg.stream_count, cfg.theta);
  const std::uint64_t run_seed = phase_seed(cfg.mc.seed, 3);

  ResultTable table;
  table.seed = cfg.mc.seed;

  auto ensemble = [&](double alpha) {
    std::vector<StreamwiseDecisions> decisions(cfg.mc.replications);
    for_each_replication(cfg.mc.replications, cfg.mc.threads, [&](std::size_t rep) {
      RngStream rng(run_seed, rep);
      decisions[rep] =
          bayes_common_threshold_run(model, theta, cfg.rho, alpha, cfg.horizon, rng);
    });
    return decisions;
  };

  auto emit = [&](const char* experiment, const char* metric, double parameter,
                  const RatioEstimate& est, double alpha) {
    table.rows.push_back({experiment, metric, parameter, est.estimate, est.std_error,
                          est.replications, 1.0 - alpha});
  };

  auto time_sweep = [&](const std::vector<StreamwiseDecisions>& decisions,
                        double alpha) {
    for (const auto n : cfg.n_grid) {
      emit("fdr_time", "fdr", static_cast<double>(n), fdr_estimate(decisions, n),
           alpha);
      emit("fdr_time", "fnr", static_cast<double>(n), fnr_estimate(decisions, n),
           alpha);
    }
  };

  bool swept_time = false;
  for (const double alpha : cfg.alpha_grid) {
    const auto decisions = ensemble(alpha);
    emit("fdr_alpha", "fdr", alpha, fdr_estimate(decisions, cfg.horizon), alpha);
    emit("fdr_alpha", "fnr", alpha, fnr_estimate(decisions, cfg.horizon), alpha);
    if (alpha == cfg.time_sweep_alpha) {
      time_sweep(decisions, alpha);
      swept_time = true;
    }
  }
  if (!swept_time && !cfg.n_grid.empty()) {
    time_sweep(ensemble(cfg.time_sweep_alpha), cfg.time_sweep_alpha);
  }
  return table;
}

// ---------------------------------------------------------------------------
// User-assembled experiment: an arbitrary detector list calibrated to a
// shared run-length target, then a delay estimate at one change point.

struct CustomDetectorSpec {
  std::string type;  // cusum | sr | shiryaev | exp_cusum | sum_cusum | xs | wl_ml | wl_js
  double rho = 0.01;                                 // shiryaev
  double beta = 1.0;                                 // exp_cusum
  double p = 0.0;                                    // xs; 0 picks 1/sqrt(streams)
  int window = 200;                                  // xs
  std::vector<int> windows{30, 40, 50, 60, 70, 80};  // wl banks
};

struct CustomConfig {
  int stream_count = 1;
  double mu = 0.5;     // per-stream shift when sparsity == 0
  int sparsity = 0;    // > 0 redraws a sparse random shift per replication
  double target_kl = 0.5;
  std::int64_t nu = 100;
  double gamma = 1000.0;
  std::vector<CustomDetectorSpec> detectors{{"cusum"}};
  MCConfig mc;

  void validate() const {
    mc.validate();
    require(stream_count >= 1, "custom: stream_count must be >= 1");
    require(gamma > 1.0, "custom: gamma must be > 1");
    require(nu >= 1, "custom: nu must be >= 1");
    require(sparsity >= 0 && sparsity <= stream_count,
            "custom: sparsity outside [0, streams]");
    if (sparsity == 0) require(mu != 0.0, "custom: mu must be nonzero");
    if (sparsity > 0) require(target_kl > 0.0, "custom: target_kl must be positive");
    require(!detectors.empty(), "custom: needs at least one detector");
    for (const auto& d : detectors) {
      if (d.type == "shiryaev")
        require(d.rho > 0.0 && d.rho < 1.0, "custom: shiryaev rho in (0, 1)");
      else if (d.type == "exp_cusum")
        require(d.beta > 0.0 && d.beta <= 1.0, "custom: exp_cusum beta in (0, 1]");
      else if (d.type == "xs") {
        require(d.p >= 0.0 && d.p <= 1.0, "custom: xs p in [0, 1]");
        require(d.window >= 1, "custom: xs window must be >= 1");
      } else if (d.type == "wl_ml" || d.type == "wl_js") {
        require(!d.windows.empty(), "custom: wl bank needs windows");
        for (int w : d.windows) require(w >= 1, "custom: window must be >= 1");
        if (d.type == "wl_js")
          require(stream_count >= 3, "custom: wl_js needs at least 3 streams");
      } else if (d.type != "cusum" && d.type != "sr" && d.type != "sum_cusum") {
        throw ContractViolation("custom: unknown detector type '" + d.type + "'");
      }
    }
  }
};

namespace detail {

// Builds the factory and threshold search for one detector spec and hands
// both to fn. Centralizing the dispatch keeps the full run and the
// calibrate-only path identical.
template <typename Fn>
void dispatch_custom(const GaussianStreamModel& model, const ThetaVector& theta,
                     const CustomDetectorSpec& d, double gamma, Fn&& fn) {
  ThresholdSearch search;
  search.initial_guess = std::log(gamma);
  if (d.type == "cusum") {
    fn([&](double b) { return CusumDetector(model, theta, b); }, search);
  } else if (d.type == "sr") {
    search.space = SearchSpace::Log;
    search.initial_guess = gamma;
    fn([&](double b) { return SrDetector(model, theta, b); }, search);
  } else if (d.type == "shiryaev") {
    search.space = SearchSpace::LogOdds;
    const double odds = d.rho * gamma;
    search.initial_guess = odds / (1.0 + odds);
    fn([&](double b) { return ShiryaevDetector(model, theta, d.rho, b); }, search);
  } else if (d.type == "exp_cusum") {
    fn([&](double b) { return ExpCusumDetector(model, theta, d.beta, b); }, search);
  } else if (d.type == "sum_cusum") {
    fn([&](double b) { return SumCusumDetector(model, theta, b); }, search);
  } else if (d.type == "xs") {
    const double p =
        d.p > 0.0 ? d.p : 1.0 / std::sqrt(static_cast<double>(model.stream_count));
    fn([&](double b) { return XsDetector(model, p, d.window, b); }, search);
  } else if (d.type == "wl_ml") {
    fn([&](double b) { return WindowBankDetector(model, MlEstimator{}, d.windows, b); },
       search);
  } else {
    fn([&](double b) { return WindowBankDetector(model, JsPlusEstimator{}, d.windows, b); },
       search);
  }
}

inline std::string custom_name(const CustomConfig& cfg, std::size_t i) {
  const auto& d = cfg.detectors[i];
  for (std::size_t j = 0; j < cfg.detectors.size(); ++j) {
    if (j != i && cfg.detectors[j].type == d.type)
      return d.type + "_" + std::to_string(i);
  }
  return d.type;
}

}  // namespace detail

inline ResultTable run_custom(const CustomConfig& cfg) {
  cfg.validate();
  const GaussianStreamModel model{cfg.stream_count};
  const ThetaVector theta = ThetaVector::constant(cfg.stream_count, cfg.mu);
  const ChangeScenario scenario =
      cfg.sparsity == 0
          ? ChangeScenario::all_streams_at(cfg.stream_count, ChangePoint::at(cfg.nu),
                                           FixedTheta{theta})
          : ChangeScenario::all_streams_at(cfg.stream_count, ChangePoint::at(cfg.nu),
                                           SparseRandomTheta{cfg.sparsity, cfg.target_kl});
  MCConfig cal = cfg.mc;
  cal.seed = phase_seed(cfg.mc.seed, 1);
  MCConfig del = cfg.mc;
  del.seed = phase_seed(cfg.mc.seed, 2);

  ResultTable table;
  table.seed = cfg.mc.seed;

  for (std::size_t i = 0; i < cfg.detectors.size(); ++i) {
    const std::string name = detail::custom_name(cfg, i);
    detail::dispatch_custom(
        model, theta, cfg.detectors[i], cfg.gamma,
        [&](auto&& factory, const ThresholdSearch& search) {
          const auto calibrated =
              calibrate_threshold(model, factory, cfg.gamma, search, cal);
          table.rows.push_back({"custom_arl", name, cfg.gamma,
                                calibrated.report.estimate,
                                calibrated.report.std_error,
                                calibrated.report.replications, calibrated.threshold});
          const auto report =
              estimate_delay(model, scenario, factory, calibrated.threshold, del);
          table.rows.push_back({"custom", name, static_cast<double>(cfg.nu),
                                report.estimate, report.std_error, report.replications,
                                calibrated.threshold});
        });
  }
  return table;
}

// Calibration phase only: one threshold row per detector spec.
inline ResultTable calibrate_custom(const CustomConfig& cfg) {
  cfg.validate();
  const GaussianStreamModel model{cfg.stream_count};
  const ThetaVector theta = ThetaVector::constant(cfg.stream_count, cfg.mu);
  MCConfig cal = cfg.mc;
  cal.seed = phase_seed(cfg.mc.seed, 1);

  ResultTable table;
  table.seed = cfg.mc.seed;
  for (std::size_t i = 0; i < cfg.detectors.size(); ++i) {
    const std::string name = detail::custom_name(cfg, i);
    detail::dispatch_custom(
        model, theta, cfg.detectors[i], cfg.gamma,
        [&](auto&& factory, const ThresholdSearch& search) {
          const auto calibrated =
              calibrate_threshold(model, factory, cfg.gamma, search, cal);
          table.rows.push_back({"calibrate", name, cfg.gamma,
                                calibrated.report.estimate,
                                calibrated.report.std_error,
                                calibrated.report.replications, calibrated.threshold});
        });
  }
  return table;
}

}  // namespace qcd
