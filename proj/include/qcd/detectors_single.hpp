#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>

#include "qcd/error.hpp"
#include "qcd/model.hpp"

namespace qcd {

// Whether a detector raises an alarm on statistic > b or statistic >= b.
enum class StopRule { StrictlyAbove, AtOrAbove };

inline bool crossed(double statistic, double threshold, StopRule rule) {
  return rule == StopRule::StrictlyAbove ? statistic > threshold
                                         : statistic >= threshold;
}

struct StopOutcome {
  std::optional<std::int64_t> stop_time;  // 1-based tick, empty if never stopped
  double final_statistic = 0.0;
};

// ---------------------------------------------------------------------------
// CuSum: W_n = max(0, W_{n-1} + llr_n), alarm on W_n > b.

struct CusumState {
  double w = 0.0;
};

inline CusumState cusum_step(CusumState s, double llr_value) {
  require(std::isfinite(llr_value), "cusum_step: non-finite llr");
  s.w = std::max(0.0, s.w + llr_value);
  return s;
}

// A CuSum alarm at level b has pre-change ARL at least e^b, so log(gamma)
// guarantees ARL >= gamma.
inline double cusum_threshold_for_arl(double gamma) {
  require(gamma > 1.0, "cusum_threshold_for_arl: gamma must be > 1");
  return std::log(gamma);
}

inline StopOutcome run_cusum(std::span<const double> llrs, double b) {
  CusumState s;
  std::int64_t n = 0;
  for (double v : llrs) {
    ++n;
    s = cusum_step(s, v);
    if (s.w > b) return {n, s.w};
  }
  return {std::nullopt, s.w};
}

// ---------------------------------------------------------------------------
// Shiryaev-Roberts: R_n = (1 + R_{n-1}) * exp(llr_n), alarm on R_n > b.
// R_n - n is a pre-change martingale, so an alarm at level b has
// pre-change ARL at least b.

struct SrState {
  double r = 0.0;
};

inline SrState sr_step(SrState s, double llr_value) {
  require(std::isfinite(llr_value), "sr_step: non-finite llr");
  s.r = (1.0 + s.r) * std::exp(llr_value);
  return s;
}

inline double sr_threshold_for_arl(double gamma) {
  require(gamma > 1.0, "sr_threshold_for_arl: gamma must be > 1");
  return gamma;
}

inline StopOutcome run_sr(std::span<const double> llrs, double b) {
  SrState s;
  std::int64_t n = 0;
  for (double v : llrs) {
    ++n;
    s = sr_step(s, v);
    if (s.r > b) return {n, s.r};
  }
  return {std::nullopt, s.r};
}

// ---------------------------------------------------------------------------
// Shiryaev posterior for a geometric prior P(nu = n) = rho (1 - rho)^n,
// n >= 0, where tick n carries post-change data iff nu <= n:
//   p_0 = rho,
//   ptilde = p + (1 - p) rho,
//   p' = ptilde L / (ptilde L + (1 - ptilde)),
// alarm on p >= b. Stopping at b = 1 - alpha keeps P(false alarm) <= alpha.

struct ShiryaevState {
  double p = 0.0;
  double rho = 0.0;
};

inline ShiryaevState make_shiryaev_state(double rho) {
  require(rho > 0.0 && rho < 1.0, "shiryaev: rho must be in (0, 1)");
  return ShiryaevState{rho, rho};
}

inline ShiryaevState shiryaev_step(ShiryaevState s, double llr_value) {
  require(std::isfinite(llr_value), "shiryaev_step: non-finite llr");
  require(s.p >= 0.0 && s.p <= 1.0, "shiryaev_step: posterior out of [0, 1]");
  const double ptilde = s.p + (1.0 - s.p) * s.rho;
  const double lr = std::exp(llr_value);
  const double numerator = ptilde * lr;
  // The denominator can underflow when the posterior is extreme and the
  // likelihood ratio vanishes; clamp instead of dividing by zero.
  const double denominator = std::max(numerator + (1.0 - ptilde), 1e-300);
  s.p = std::min(numerator / denominator, 1.0);
  return s;
}

inline double shiryaev_threshold_for_pfa(double alpha) {
  require(alpha > 0.0 && alpha < 1.0, "shiryaev_threshold_for_pfa: alpha in (0, 1)");
  return 1.0 - alpha;
}

inline StopOutcome run_shiryaev(std::span<const double> llrs, double rho, double b) {
  ShiryaevState s = make_shiryaev_state(rho);
  std::int64_t n = 0;
  if (s.p >= b) return {0, s.p};
  for (double v : llrs) {
    ++n;
    s = shiryaev_step(s, v);
    if (s.p >= b) return {n, s.p};
  }
  return {std::nullopt, s.p};
}

// ---------------------------------------------------------------------------
// CuSum with a per-tick exponential penalty beta:
//   W_n = max(0, W_{n-1}) + llr_n + log(beta),
// alarm on W_n > b. At beta = 1 the alarm times coincide with plain
// CuSum for any b > 0.

struct ExpCusumState {
  double w = 0.0;
};

inline ExpCusumState exp_cusum_step(ExpCusumState s, double llr_value, double beta) {
  require(std::isfinite(llr_value), "exp_cusum_step: non-finite llr");
  require(beta > 0.0 && beta <= 1.0, "exp_cusum_step: beta must be in (0, 1]");
  s.w = std::max(0.0, s.w) + llr_value + std::log(beta);
  return s;
}

inline StopOutcome run_exp_cusum(std::span<const double> llrs, double beta, double b) {
  ExpCusumState s;
  std::int64_t n = 0;
  for (double v : llrs) {
    ++n;
    s = exp_cusum_step(s, v, beta);
    if (s.w > b) return {n, s.w};
  }
  return {std::nullopt, s.w};
}

// ---------------------------------------------------------------------------
// Detector wrappers over vector observations. These share one interface:
// step(x, rng), statistic(), stopped(), reset(), plus a static stop_rule,
// which is all the Monte Carlo machinery needs.

class CusumDetector {
public:
  static constexpr StopRule stop_rule = StopRule::StrictlyAbove;

  CusumDetector(GaussianStreamModel model, ThetaVector theta, double threshold)
      : model_(model), theta_(std::move(theta)), b_(threshold) {
    require(theta_.dim() == model_.stream_count, "CusumDetector: theta dimension");
  }

  void step(const ObservationVector& x, RngStream&) {
    state_ = cusum_step(state_, llr(model_, x, theta_));
  }

  double statistic() const { return state_.w; }
  double threshold() const { return b_; }
  bool stopped() const { return crossed(state_.w, b_, stop_rule); }
  void reset() { state_ = CusumState{}; }

private:
  GaussianStreamModel model_;
  ThetaVector theta_;
  double b_;
  CusumState state_;
};

class SrDetector {
public:
  static constexpr StopRule stop_rule = StopRule::StrictlyAbove;

  SrDetector(GaussianStreamModel model, ThetaVector theta, double threshold)
      : model_(model), theta_(std::move(theta)), b_(threshold) {
    require(theta_.dim() == model_.stream_count, "SrDetector: theta dimension");
  }

  void step(const ObservationVector& x, RngStream&) {
    state_ = sr_step(state_, llr(model_, x, theta_));
  }

  double statistic() const { return state_.r; }
  double threshold() const { return b_; }
  bool stopped() const { return crossed(state_.r, b_, stop_rule); }
  void reset() { state_ = SrState{}; }

private:
  GaussianStreamModel model_;
  ThetaVector theta_;
  double b_;
  SrState state_;
};

class ShiryaevDetector {
public:
  static constexpr StopRule stop_rule = StopRule::AtOrAbove;

  ShiryaevDetector(GaussianStreamModel model, ThetaVector theta, double rho,
                   double threshold)
      : model_(model), theta_(std::move(theta)), b_(threshold),
        state_(make_shiryaev_state(rho)) {
    require(theta_.dim() == model_.stream_count, "ShiryaevDetector: theta dimension");
  }

  void step(const ObservationVector& x, RngStream&) {
    state_ = shiryaev_step(state_, llr(model_, x, theta_));
  }

  double statistic() const { return state_.p; }
  double threshold() const { return b_; }
  bool stopped() const { return crossed(state_.p, b_, stop_rule); }
  void reset() { state_ = make_shiryaev_state(state_.rho); }

private:
  GaussianStreamModel model_;
  ThetaVector theta_;
  double b_;
  ShiryaevState state_;
};

class ExpCusumDetector {
public:
  static constexpr StopRule stop_rule = StopRule::StrictlyAbove;

  ExpCusumDetector(GaussianStreamModel model, ThetaVector theta, double beta,
                   double threshold)
      : model_(model), theta_(std::move(theta)), beta_(beta), b_(threshold) {
    require(theta_.dim() == model_.stream_count, "ExpCusumDetector: theta dimension");
    require(beta > 0.0 && beta <= 1.0, "ExpCusumDetector: beta must be in (0, 1]");
  }

  void step(const ObservationVector& x, RngStream&) {
    state_ = exp_cusum_step(state_, llr(model_, x, theta_), beta_);
  }

  double statistic() const { return state_.w; }
  double threshold() const { return b_; }
  bool stopped() const { return crossed(state_.w, b_, stop_rule); }
  void reset() { state_ = ExpCusumState{}; }

private:
  GaussianStreamModel model_;
  ThetaVector theta_;
  double beta_;
  double b_;
  ExpCusumState state_;
};

}  // namespace qcd
