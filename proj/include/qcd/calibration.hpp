#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "qcd/detectors_single.hpp"
#include "qcd/error.hpp"
#include "qcd/model.hpp"
#include "qcd/rng.hpp"

namespace qcd {

// Anything the Monte Carlo driver can run: a stepwise statistic with a
// threshold crossing rule.
template <typename D>
concept Detector = requires(D d, const D cd, const ObservationVector& x, RngStream& r) {
  d.step(x, r);
  { cd.statistic() } -> std::convertible_to<double>;
  { cd.stopped() } -> std::convertible_to<bool>;
  d.reset();
  { D::stop_rule } -> std::convertible_to<StopRule>;
};

struct MCConfig {
  std::size_t replications = 2000;
  std::int64_t horizon = 0;  // 0 lets the caller-facing API derive a default
  std::uint64_t seed = 0;
  int threads = 1;
  double tolerance = 0.05;  // relative tolerance for threshold calibration

  void validate() const {
    require(replications >= 2, "MCConfig: needs at least two replications");
    require(threads >= 1, "MCConfig: threads must be >= 1");
    require(tolerance > 0.0, "MCConfig: tolerance must be positive");
    require(horizon >= 0, "MCConfig: horizon must be >= 0");
  }
};

struct MonteCarloReport {
  double estimate = std::numeric_limits<double>::quiet_NaN();
  double std_error = std::numeric_limits<double>::quiet_NaN();
  std::size_t replications = 0;     // replications entering the estimate
  std::size_t censored_count = 0;   // hit the horizon before resolving
  std::size_t excluded_count = 0;   // discarded (e.g. false alarms in delay runs)
  double threshold = std::numeric_limits<double>::quiet_NaN();
  std::int64_t horizon = 0;
  bool lower_bound = false;  // censoring makes the estimate a lower bound
  std::string warning;
};

inline std::int64_t default_arl_horizon(double gamma) {
  require(gamma > 1.0, "default_arl_horizon: gamma must be > 1");
  return static_cast<std::int64_t>(std::ceil(20.0 * gamma));
}

inline std::int64_t default_delay_horizon(std::int64_t nu, double kl) {
  require(nu >= 1, "default_delay_horizon: nu must be >= 1");
  require(kl > 0.0, "default_delay_horizon: kl must be positive");
  return 50 * nu + static_cast<std::int64_t>(std::ceil(10.0 / kl));
}

// Runs fn(replication) for every index, optionally across threads. Results
// must be written into per-replication slots; the caller reduces afterwards
// so the outcome cannot depend on scheduling.
template <typename Fn>
void for_each_replication(std::size_t replications, int threads, Fn&& fn) {
  require(threads >= 1, "for_each_replication: threads must be >= 1");
  if (threads == 1 || replications <= 1) {
    for (std::size_t i = 0; i < replications; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= replications) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(threads), replications);
  pool.reserve(n_threads);
  for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

// Advances the detector until it alarms or the horizon runs out. The
// generator and the detector share the replication's random stream, in
// that order on every tick.
template <Detector D>
StopOutcome run_to_stop(D& det, SequenceGenerator& gen, std::int64_t horizon,
                        RngStream& rng) {
  require(horizon >= 1, "run_to_stop: horizon must be >= 1");
  for (std::int64_t n = 1; n <= horizon; ++n) {
    const ObservationVector& x = gen.next();
    det.step(x, rng);
    if (det.stopped()) return {n, det.statistic()};
  }
  return {std::nullopt, det.statistic()};
}

namespace detail {

inline MonteCarloReport reduce_run_lengths(const std::vector<double>& values,
                                           std::size_t censored, double threshold,
                                           std::int64_t horizon) {
  MonteCarloReport report;
  report.replications = values.size();
  report.censored_count = censored;
  report.threshold = threshold;
  report.horizon = horizon;
  report.lower_bound = censored > 0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  report.estimate = mean;
  report.std_error = values.size() > 1
                         ? std::sqrt(ss / (static_cast<double>(values.size()) - 1.0) /
                                     static_cast<double>(values.size()))
                         : 0.0;
  if (censored > 0) {
    report.warning =
        "censored replications contribute the horizon; the estimate is a lower bound";
  }
  return report;
}

}  // namespace detail

// Pre-change average run length of factory(b), over cfg.replications
// sequences. cfg.horizon must be set; replications that never alarm enter
// at the horizon and flag the estimate as a lower bound.
template <typename Factory>
MonteCarloReport estimate_arl(const GaussianStreamModel& model, Factory&& factory,
                              double b, const MCConfig& cfg) {
  cfg.validate();
  require(cfg.horizon >= 1, "estimate_arl: cfg.horizon must be set");
  const auto scenario = ChangeScenario::pre_change_only(model.stream_count);
  std::vector<double> values(cfg.replications, 0.0);
  std::vector<std::uint8_t> censored(cfg.replications, 0);
  for_each_replication(cfg.replications, cfg.threads, [&](std::size_t rep) {
    RngStream rng(cfg.seed, rep);
    SequenceGenerator gen(model, scenario, rng);
    auto det = factory(b);
    const auto outcome = run_to_stop(det, gen, cfg.horizon, rng);
    values[rep] = static_cast<double>(outcome.stop_time.value_or(cfg.horizon));
    censored[rep] = outcome.stop_time.has_value() ? 0 : 1;
  });
  std::size_t censored_count = 0;
  for (auto c : censored) censored_count += c;
  return detail::reduce_run_lengths(values, censored_count, b, cfg.horizon);
}

// Mean detection delay T - nu over replications where the alarm came at or
// after the common change point nu; earlier alarms are excluded as false
// alarms. Censored replications enter at horizon - nu and flag the
// estimate as a lower bound.
template <typename Factory>
MonteCarloReport estimate_delay(const GaussianStreamModel& model,
                                const ChangeScenario& scenario, Factory&& factory,
                                double b, const MCConfig& cfg) {
  cfg.validate();
  const ChangePoint nu_point = scenario.common_change_point();
  require(!nu_point.is_never(), "estimate_delay: scenario never changes");
  const std::int64_t nu = nu_point.tick();
  std::int64_t horizon = cfg.horizon;
  if (horizon == 0) {
    double kl = 0.0;
    if (const auto* fixed = std::get_if<FixedTheta>(&scenario.theta_rule)) {
      kl = kl_divergence(fixed->theta);
    } else {
      kl = std::get<SparseRandomTheta>(scenario.theta_rule).target_kl;
    }
    horizon = default_delay_horizon(nu, kl);
  }
  require(horizon > nu, "estimate_delay: horizon must exceed nu");

  // Slot values: delay sample, or -1 for excluded, with a parallel censor mark.
  std::vector<double> slots(cfg.replications, 0.0);
  std::vector<std::uint8_t> censored(cfg.replications, 0);
  std::vector<std::uint8_t> excluded(cfg.replications, 0);
  for_each_replication(cfg.replications, cfg.threads, [&](std::size_t rep) {
    RngStream rng(cfg.seed, rep);
    SequenceGenerator gen(model, scenario, rng);
    auto det = factory(b);
    const auto outcome = run_to_stop(det, gen, horizon, rng);
    if (!outcome.stop_time.has_value()) {
      slots[rep] = static_cast<double>(horizon - nu);
      censored[rep] = 1;
    } else if (*outcome.stop_time < nu) {
      excluded[rep] = 1;
    } else {
      slots[rep] = static_cast<double>(*outcome.stop_time - nu);
    }
  });

  std::vector<double> values;
  values.reserve(cfg.replications);
  std::size_t censored_count = 0, excluded_count = 0;
  for (std::size_t rep = 0; rep < cfg.replications; ++rep) {
    if (excluded[rep]) {
      ++excluded_count;
      continue;
    }
    censored_count += censored[rep];
    values.push_back(slots[rep]);
  }
  if (values.size() < 2) {
    throw CalibrationError(
        "estimate_delay: fewer than two replications survived the false-alarm filter");
  }
  auto report = detail::reduce_run_lengths(values, censored_count, b, horizon);
  report.excluded_count = excluded_count;
  if (excluded_count > 0 && report.warning.empty()) {
    report.warning = "false alarms before nu were excluded from the delay estimate";
  }
  return report;
}

// Probability that factory(b) alarms while all its data are still
// pre-change, under a geometric change prior with parameter rho.
// Replications whose change point lies beyond the horizon while the
// detector is still quiet are censored and excluded.
template <typename Factory>
MonteCarloReport estimate_pfa(const GaussianStreamModel& model, Factory&& factory,
                              double b, double rho, const MCConfig& cfg) {
  cfg.validate();
  require(rho > 0.0 && rho < 1.0, "estimate_pfa: rho must be in (0, 1)");
  const std::int64_t horizon =
      cfg.horizon > 0 ? cfg.horizon : static_cast<std::int64_t>(std::ceil(20.0 / rho));
  const auto scenario = ChangeScenario::pre_change_only(model.stream_count);

  std::vector<std::uint8_t> alarmed(cfg.replications, 0);
  std::vector<std::uint8_t> censored(cfg.replications, 0);
  for_each_replication(cfg.replications, cfg.threads, [&](std::size_t rep) {
    RngStream rng(cfg.seed, rep);
    const std::int64_t nu = std::max<std::int64_t>(1, rng.geometric(rho));
    // A false alarm happens strictly before nu, i.e. within the first
    // nu - 1 pre-change ticks.
    const std::int64_t quiet_ticks = std::min<std::int64_t>(nu - 1, horizon);
    if (quiet_ticks == 0) return;
    SequenceGenerator gen(model, scenario, rng);
    auto det = factory(b);
    const auto outcome = run_to_stop(det, gen, quiet_ticks, rng);
    if (outcome.stop_time.has_value()) {
      alarmed[rep] = 1;
    } else if (nu - 1 > horizon) {
      censored[rep] = 1;  // undecided: the change lies beyond the horizon
    }
  });

  std::size_t alarms = 0, censored_count = 0;
  for (std::size_t rep = 0; rep < cfg.replications; ++rep) {
    alarms += alarmed[rep];
    censored_count += censored[rep];
  }
  const std::size_t used = cfg.replications - censored_count;
  MonteCarloReport report;
  report.replications = used;
  report.censored_count = censored_count;
  report.threshold = b;
  report.horizon = horizon;
  const double p = static_cast<double>(alarms) / static_cast<double>(used);
  report.estimate = p;
  report.std_error = std::sqrt(p * (1.0 - p) / static_cast<double>(used));
  if (censored_count > 0) {
    report.warning = "some change points lay beyond the horizon and were excluded";
  }
  return report;
}

// Running maxima of one replication's statistic trajectory. For any
// threshold, the alarm tick is the first recorded value that crosses it,
// which makes repeated threshold probes free after one simulation pass.
struct TrajectoryRecords {
  std::vector<double> values;       // strictly increasing
  std::vector<std::int64_t> ticks;  // tick where each value first appeared

  std::optional<std::int64_t> first_crossing(double b, StopRule rule) const {
    const auto it = (rule == StopRule::StrictlyAbove)
                        ? std::upper_bound(values.begin(), values.end(), b)
                        : std::lower_bound(values.begin(), values.end(), b);
    if (it == values.end()) return std::nullopt;
    return ticks[static_cast<std::size_t>(it - values.begin())];
  }
};

// One full-horizon pre-change pass per replication, recording each new
// running maximum. Replications use the same streams as estimate_arl, so
// threshold probes read off exactly what a direct run would produce.
template <typename Factory>
std::vector<TrajectoryRecords> build_arl_records(const GaussianStreamModel& model,
                                                 Factory&& factory, const MCConfig& cfg,
                                                 std::int64_t horizon) {
  cfg.validate();
  require(horizon >= 1, "build_arl_records: horizon must be >= 1");
  const auto scenario = ChangeScenario::pre_change_only(model.stream_count);
  std::vector<TrajectoryRecords> records(cfg.replications);
  for_each_replication(cfg.replications, cfg.threads, [&](std::size_t rep) {
    RngStream rng(cfg.seed, rep);
    SequenceGenerator gen(model, scenario, rng);
    auto det = factory(std::numeric_limits<double>::infinity());
    TrajectoryRecords r;
    double best = -std::numeric_limits<double>::infinity();
    for (std::int64_t n = 1; n <= horizon; ++n) {
      const ObservationVector& x = gen.next();
      det.step(x, rng);
      const double s = det.statistic();
      if (s > best) {
        best = s;
        r.values.push_back(s);
        r.ticks.push_back(n);
      }
    }
    records[rep] = std::move(r);
  });
  return records;
}

inline MonteCarloReport arl_report_from_records(
    const std::vector<TrajectoryRecords>& records, double b, StopRule rule,
    std::int64_t horizon) {
  require(records.size() >= 2, "arl_report_from_records: needs two replications");
  std::vector<double> values(records.size(), 0.0);
  std::size_t censored = 0;
  for (std::size_t rep = 0; rep < records.size(); ++rep) {
    const auto t = records[rep].first_crossing(b, rule);
    values[rep] = static_cast<double>(t.value_or(horizon));
    if (!t.has_value()) ++censored;
  }
  return detail::reduce_run_lengths(values, censored, b, horizon);
}

enum class SearchSpace { Linear, Log, LogOdds };

// Where and how to search for a threshold: the initial guess comes from an
// analytic bound, and bisection runs in a transformed coordinate so
// multiplicative quantities bracket cleanly.
struct ThresholdSearch {
  double initial_guess = 1.0;
  SearchSpace space = SearchSpace::Linear;
  double initial_radius = 2.0;
  int max_expansions = 60;
  int max_bisections = 200;
};

namespace detail {

inline double to_coord(double b, SearchSpace space) {
  switch (space) {
    case SearchSpace::Linear:
      return b;
    case SearchSpace::Log:
      require(b > 0.0, "threshold search: log space needs b > 0");
      return std::log(b);
    case SearchSpace::LogOdds:
      require(b > 0.0 && b < 1.0, "threshold search: log-odds space needs b in (0, 1)");
      return std::log(b / (1.0 - b));
  }
  return b;
}

inline double from_coord(double u, SearchSpace space) {
  switch (space) {
    case SearchSpace::Linear:
      return u;
    case SearchSpace::Log:
      return std::exp(u);
    case SearchSpace::LogOdds:
      return 1.0 / (1.0 + std::exp(-u));
  }
  return u;
}

}  // namespace detail

struct CalibrationResult {
  double threshold = std::numeric_limits<double>::quiet_NaN();
  MonteCarloReport report;
  int probes = 0;
};

// Finds a threshold whose pre-change ARL matches gamma within
// cfg.tolerance, by bisection over one set of recorded trajectories
// (common random numbers across probes). If bisection hits floating-point
// resolution first, the conservative endpoint (ARL >= gamma) is returned
// with a warning.
template <typename Factory>
CalibrationResult calibrate_threshold(const GaussianStreamModel& model,
                                      Factory&& factory, double gamma,
                                      const ThresholdSearch& search,
                                      const MCConfig& cfg) {
  cfg.validate();
  require(gamma > 1.0, "calibrate_threshold: gamma must be > 1");
  using D = std::invoke_result_t<Factory&, double>;
  static_assert(Detector<D>);
  constexpr StopRule rule = D::stop_rule;

  const std::int64_t horizon =
      cfg.horizon > 0 ? cfg.horizon : default_arl_horizon(gamma);
  const auto records = build_arl_records(model, factory, cfg, horizon);

  int probes = 0;
  auto probe = [&](double u) {
    ++probes;
    return arl_report_from_records(records, detail::from_coord(u, search.space), rule,
                                   horizon);
  };

  const double u0 = detail::to_coord(search.initial_guess, search.space);
  const double radius = search.initial_radius;

  double hi = u0;
  MonteCarloReport hi_report = probe(hi);
  int expansions = 0;
  while (hi_report.estimate < gamma) {
    if (++expansions > search.max_expansions) {
      throw CalibrationError(
          "calibrate_threshold: target ARL unreachable; raise the horizon or check the "
          "detector");
    }
    hi += radius;
    hi_report = probe(hi);
  }
  double lo = hi - radius;
  MonteCarloReport lo_report = probe(lo);
  expansions = 0;
  while (lo_report.estimate >= gamma) {
    if (++expansions > search.max_expansions) {
      // Even the smallest probed threshold meets the target; accept it.
      CalibrationResult out;
      out.threshold = detail::from_coord(lo, search.space);
      out.report = lo_report;
      out.report.warning = "threshold search saturated below; returning the lowest probe";
      out.probes = probes;
      return out;
    }
    lo -= radius;
    lo_report = probe(lo);
  }

  // Invariant: estimate(lo) < gamma <= estimate(hi).
  MonteCarloReport best = hi_report;
  double best_u = hi;
  for (int iter = 0; iter < search.max_bisections; ++iter) {
    if (std::abs(best.estimate - gamma) <= cfg.tolerance * gamma) break;
    const double mid = 0.5 * (lo + hi);
    if (!(mid > lo && mid < hi)) {
      best_u = hi;
      best = probe(hi);
      best.warning =
          "bisection exhausted resolution; returning the conservative endpoint";
      break;
    }
    const auto mid_report = probe(mid);
    if (mid_report.estimate >= gamma) {
      hi = mid;
      best = mid_report;
      best_u = mid;
    } else {
      lo = mid;
      if (std::abs(mid_report.estimate - gamma) <
          std::abs(best.estimate - gamma)) {
        best = mid_report;
        best_u = mid;
      }
    }
  }
  if (std::abs(best.estimate - gamma) > cfg.tolerance * gamma && best.warning.empty()) {
    best_u = hi;
    best = probe(hi);
    best.warning = "tolerance not reached; returning the conservative endpoint";
  }

  CalibrationResult out;
  out.threshold = detail::from_coord(best_u, search.space);
  out.report = best;
  out.probes = probes;
  return out;
}

// Append-only text cache for calibration results, keyed by a caller-chosen
// identity string plus the exact Monte Carlo setup.
class CalibrationCache {
public:
  explicit CalibrationCache(std::filesystem::path file) : file_(std::move(file)) {
    std::ifstream in(file_);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream row(line);
      std::string tag;
      Row r;
      if (!(row >> tag >> r.key >> r.gamma >> r.seed >> r.replications >> r.horizon >>
            r.threshold >> r.estimate >> r.std_error >> r.censored)) {
        continue;  // skip unreadable lines rather than failing the run
      }
      if (tag != "v1") continue;
      rows_.push_back(std::move(r));
    }
  }

  std::optional<CalibrationResult> lookup(const std::string& key, double gamma,
                                          std::uint64_t seed, std::size_t replications,
                                          std::int64_t horizon) const {
    for (const auto& r : rows_) {
      if (r.key == key && r.gamma == gamma && r.seed == seed &&
          r.replications == replications && r.horizon == horizon) {
        CalibrationResult out;
        out.threshold = r.threshold;
        out.report.estimate = r.estimate;
        out.report.std_error = r.std_error;
        out.report.replications = r.replications;
        out.report.censored_count = r.censored;
        out.report.threshold = r.threshold;
        out.report.horizon = r.horizon;
        out.report.lower_bound = r.censored > 0;
        return out;
      }
    }
    return std::nullopt;
  }

  void store(const std::string& key, double gamma, std::uint64_t seed,
             std::size_t replications, std::int64_t horizon,
             const CalibrationResult& result) {
    require(key.find(' ') == std::string::npos, "CalibrationCache: key has spaces");
    Row r{key,
          gamma,
          seed,
          replications,
          horizon,
          result.threshold,
          result.report.estimate,
          result.report.std_error,
          result.report.censored_count};
    rows_.push_back(r);
    std::ofstream out(file_, std::ios::app);
    char line[512];
    std::snprintf(line, sizeof(line), "v1 %s %.17g %llu %zu %lld %.17g %.17g %.17g %zu\n",
                  key.c_str(), gamma, static_cast<unsigned long long>(seed), replications,
                  static_cast<long long>(horizon), result.threshold,
                  result.report.estimate, result.report.std_error,
                  result.report.censored_count);
    out << line;
  }

  std::size_t size() const { return rows_.size(); }

private:
  struct Row {
    std::string key;
    double gamma = 0.0;
    std::uint64_t seed = 0;
    std::size_t replications = 0;
    std::int64_t horizon = 0;
    double threshold = 0.0;
    double estimate = 0.0;
    double std_error = 0.0;
    std::size_t censored = 0;
  };

  std::filesystem::path file_;
  std::vector<Row> rows_;
};

}  // namespace qcd
