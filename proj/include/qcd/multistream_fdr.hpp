#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "qcd/detectors_single.hpp"
#include "qcd/error.hpp"
#include "qcd/model.hpp"
#include "qcd/rng.hpp"

namespace qcd {

// Per-stream alarm times from one replication, next to the truth that
// produced them. Streams without an alarm by the horizon stay empty.
struct StreamwiseDecisions {
  std::vector<std::optional<std::int64_t>> stop_times;
  std::vector<ChangePoint> change_points;
  std::int64_t horizon = 0;

  int stream_count() const { return static_cast<int>(stop_times.size()); }
};

struct VrCount {
  std::int64_t false_detections = 0;  // alarms at or before n on still-quiet streams
  std::int64_t detections = 0;        // all alarms at or before n
};

inline VrCount count_vr(const StreamwiseDecisions& d, std::int64_t n) {
  require(d.stop_times.size() == d.change_points.size(),
          "count_vr: decision vectors disagree");
  VrCount out;
  for (std::size_t k = 0; k < d.stop_times.size(); ++k) {
    const auto& t = d.stop_times[k];
    if (!t.has_value() || *t > n) continue;
    ++out.detections;
    const auto& nu = d.change_points[k];
    if (nu.is_never() || *t < nu.tick()) ++out.false_detections;
  }
  return out;
}

struct RatioEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t replications = 0;
};

namespace detail {

inline RatioEstimate mean_with_se(const std::vector<double>& values) {
  require(values.size() >= 2, "estimate: needs at least two replications");
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  return {mean, sd / std::sqrt(n), values.size()};
}

}  // namespace detail

// Fraction of alarms up to n that were false, averaged over replications.
inline RatioEstimate fdr_estimate(std::span<const StreamwiseDecisions> reps,
                                  std::int64_t n) {
  std::vector<double> values;
  values.reserve(reps.size());
  for (const auto& d : reps) {
    const auto vr = count_vr(d, n);
    values.push_back(static_cast<double>(vr.false_detections) /
                     static_cast<double>(std::max<std::int64_t>(1, vr.detections)));
  }
  return detail::mean_with_se(values);
}

// Fraction of changed-but-silent streams among the undetected ones at n.
inline RatioEstimate fnr_estimate(std::span<const StreamwiseDecisions> reps,
                                  std::int64_t n) {
  std::vector<double> values;
  values.reserve(reps.size());
  for (const auto& d : reps) {
    const auto vr = count_vr(d, n);
    std::int64_t missed = 0;
    for (std::size_t k = 0; k < d.stop_times.size(); ++k) {
      const auto& nu = d.change_points[k];
      if (nu.is_never() || nu.tick() > n) continue;
      const auto& t = d.stop_times[k];
      if (!t.has_value() || *t > n) ++missed;
    }
    const std::int64_t undetected =
        std::max<std::int64_t>(1, d.stream_count() - vr.detections);
    values.push_back(static_cast<double>(missed) / static_cast<double>(undetected));
  }
  return detail::mean_with_se(values);
}

// Time of the m-th alarm, or the horizon when fewer than m streams alarmed.
inline std::int64_t nth_detection_time(const StreamwiseDecisions& d, int m) {
  require(m >= 1 && m <= d.stream_count(), "nth_detection_time: m out of range");
  std::vector<std::int64_t> stops;
  for (const auto& t : d.stop_times) {
    if (t.has_value()) stops.push_back(*t);
  }
  if (static_cast<int>(stops.size()) < m) return d.horizon;
  std::nth_element(stops.begin(), stops.begin() + (m - 1), stops.end());
  return stops[static_cast<std::size_t>(m - 1)];
}

// Expected false-detection fraction at a replication-specific stopping time,
// per unit of expected stopping time. The standard error comes from the
// delta method for a ratio of means.
template <typename TauFn>
RatioEstimate eop_estimate(std::span<const StreamwiseDecisions> reps, TauFn&& tau) {
  require(reps.size() >= 2, "eop_estimate: needs at least two replications");
  std::vector<double> fdr_values, tau_values;
  fdr_values.reserve(reps.size());
  tau_values.reserve(reps.size());
  for (const auto& d : reps) {
    const std::int64_t t = tau(d);
    require(t >= 1, "eop_estimate: stopping times must be >= 1");
    const auto vr = count_vr(d, t);
    fdr_values.push_back(static_cast<double>(vr.false_detections) /
                         static_cast<double>(std::max<std::int64_t>(1, vr.detections)));
    tau_values.push_back(static_cast<double>(t));
  }
  const double n = static_cast<double>(reps.size());
  double fbar = 0.0, tbar = 0.0;
  for (std::size_t i = 0; i < reps.size(); ++i) {
    fbar += fdr_values[i];
    tbar += tau_values[i];
  }
  fbar /= n;
  tbar /= n;
  double sff = 0.0, stt = 0.0, sft = 0.0;
  for (std::size_t i = 0; i < reps.size(); ++i) {
    const double df = fdr_values[i] - fbar;
    const double dt = tau_values[i] - tbar;
    sff += df * df;
    stt += dt * dt;
    sft += df * dt;
  }
  sff /= (n - 1.0);
  stt /= (n - 1.0);
  sft /= (n - 1.0);
  const double ratio = fbar / tbar;
  const double var =
      (sff - 2.0 * ratio * sft + ratio * ratio * stt) / (n * tbar * tbar);
  return {ratio, std::sqrt(std::max(0.0, var)), reps.size()};
}

// One replication of the common-threshold Bayesian procedure: every stream
// runs its own Shiryaev test with prior rho and stops at posterior
// >= 1 - alpha. Change points are drawn per stream from the geometric
// prior; tick max(1, g) is the first post-change tick.
inline StreamwiseDecisions bayes_common_threshold_run(const GaussianStreamModel& model,
                                                      const ThetaVector& theta,
                                                      double rho, double alpha,
                                                      std::int64_t horizon,
                                                      RngStream& rng) {
  require(theta.dim() == model.stream_count, "bayes run: theta dimension");
  require(horizon >= 1, "bayes run: horizon must be >= 1");
  const double b = shiryaev_threshold_for_pfa(alpha);
  StreamwiseDecisions out;
  out.horizon = horizon;
  out.stop_times.resize(static_cast<std::size_t>(model.stream_count));
  out.change_points.resize(static_cast<std::size_t>(model.stream_count));
  for (int k = 0; k < model.stream_count; ++k) {
    const std::int64_t nu = std::max<std::int64_t>(1, rng.geometric(rho));
    out.change_points[static_cast<std::size_t>(k)] = ChangePoint::at(nu);
    auto s = make_shiryaev_state(rho);
    const double theta_k = theta.values[static_cast<std::size_t>(k)];
    for (std::int64_t n = 1; n <= horizon; ++n) {
      const double x = (n >= nu ? theta_k : 0.0) + rng.gauss();
      s = shiryaev_step(s, scalar_llr(x, theta_k));
      if (s.p >= b) {
        out.stop_times[static_cast<std::size_t>(k)] = n;
        break;
      }
    }
  }
  return out;
}

}  // namespace qcd
