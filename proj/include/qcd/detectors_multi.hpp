#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "qcd/detectors_single.hpp"
#include "qcd/error.hpp"
#include "qcd/estimators.hpp"
#include "qcd/model.hpp"

namespace qcd {

namespace detail {

// log(1 + e^z) with the usual overflow/underflow branches.
inline double softplus(double z) {
  if (z > 36.75) return z;
  if (z < -36.75) return std::exp(z);
  return std::log1p(std::exp(z));
}

}  // namespace detail

// Finite set of candidate post-change means with prior weights.
class ThetaBank {
public:
  struct Entry {
    ThetaVector theta;
    double weight = 0.0;
  };

  ThetaBank(const GaussianStreamModel& model, std::vector<Entry> entries)
      : entries_(std::move(entries)) {
    require(!entries_.empty(), "ThetaBank: needs at least one entry");
    double total = 0.0;
    for (const auto& e : entries_) {
      require(e.theta.dim() == model.stream_count, "ThetaBank: theta dimension");
      require(e.weight > 0.0, "ThetaBank: weights must be positive");
      total += e.weight;
    }
    require(std::abs(total - 1.0) <= 1e-12, "ThetaBank: weights must sum to 1");
    log_weights_.reserve(entries_.size());
    for (const auto& e : entries_) log_weights_.push_back(std::log(e.weight));
  }

  std::size_t size() const { return entries_.size(); }
  const Entry& entry(std::size_t i) const { return entries_[i]; }
  double log_weight(std::size_t i) const { return log_weights_[i]; }

  static ThetaBank uniform(const GaussianStreamModel& model,
                           std::vector<ThetaVector> thetas) {
    std::vector<Entry> entries;
    entries.reserve(thetas.size());
    const double w = 1.0 / static_cast<double>(thetas.size());
    for (auto& t : thetas) entries.push_back({std::move(t), w});
    return ThetaBank(model, std::move(entries));
  }

private:
  std::vector<Entry> entries_;
  std::vector<double> log_weights_;
};

// One CuSum per bank entry; alarms when the best weighted member crosses b:
//   max_i (W_i + log w_i) >= b.
class GlrBankDetector {
public:
  static constexpr StopRule stop_rule = StopRule::AtOrAbove;

  GlrBankDetector(GaussianStreamModel model, ThetaBank bank, double threshold)
      : model_(model), bank_(std::move(bank)), b_(threshold),
        w_(bank_.size(), 0.0) {}

  void step(const ObservationVector& x, RngStream&) {
    for (std::size_t i = 0; i < w_.size(); ++i) {
      w_[i] = std::max(0.0, w_[i] + llr(model_, x, bank_.entry(i).theta));
    }
  }

  double statistic() const {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < w_.size(); ++i) {
      best = std::max(best, w_[i] + bank_.log_weight(i));
    }
    return best;
  }

  const std::vector<double>& member_statistics() const { return w_; }
  const ThetaBank& bank() const { return bank_; }
  double threshold() const { return b_; }
  bool stopped() const { return crossed(statistic(), b_, stop_rule); }
  void reset() { std::fill(w_.begin(), w_.end(), 0.0); }

private:
  GaussianStreamModel model_;
  ThetaBank bank_;
  double b_;
  std::vector<double> w_;
};

// Same member recursions, combined as a weighted mixture:
//   log sum_i w_i exp(W_i) >= b.
class MixtureBankDetector {
public:
  static constexpr StopRule stop_rule = StopRule::AtOrAbove;

  MixtureBankDetector(GaussianStreamModel model, ThetaBank bank, double threshold)
      : model_(model), bank_(std::move(bank)), b_(threshold),
        w_(bank_.size(), 0.0) {}

  void step(const ObservationVector& x, RngStream&) {
    for (std::size_t i = 0; i < w_.size(); ++i) {
      w_[i] = std::max(0.0, w_[i] + llr(model_, x, bank_.entry(i).theta));
    }
  }

  double statistic() const {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < w_.size(); ++i) {
      peak = std::max(peak, w_[i] + bank_.log_weight(i));
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < w_.size(); ++i) {
      sum += std::exp(w_[i] + bank_.log_weight(i) - peak);
    }
    return peak + std::log(sum);
  }

  const std::vector<double>& member_statistics() const { return w_; }
  const ThetaBank& bank() const { return bank_; }
  double threshold() const { return b_; }
  bool stopped() const { return crossed(statistic(), b_, stop_rule); }
  void reset() { std::fill(w_.begin(), w_.end(), 0.0); }

private:
  GaussianStreamModel model_;
  ThetaBank bank_;
  double b_;
  std::vector<double> w_;
};

// One scalar CuSum per stream against a fixed design mean; alarms when the
// sum of the local statistics crosses b. Unobserved streams hold their state.
class SumCusumDetector {
public:
  static constexpr StopRule stop_rule = StopRule::AtOrAbove;

  SumCusumDetector(GaussianStreamModel model, ThetaVector stream_thetas,
                   double threshold)
      : model_(model), thetas_(std::move(stream_thetas)), b_(threshold),
        w_(static_cast<std::size_t>(model.stream_count), 0.0) {
    require(thetas_.dim() == model_.stream_count, "SumCusumDetector: theta dimension");
  }

  void step(const ObservationVector& x, RngStream&) {
    require(x.dim() == model_.stream_count, "SumCusumDetector: dimension mismatch");
    for (std::size_t k = 0; k < w_.size(); ++k) {
      if (!x.observed(k)) continue;
      w_[k] = std::max(0.0, w_[k] + scalar_llr(x.values[k], thetas_.values[k]));
    }
  }

  double statistic() const {
    double s = 0.0;
    for (double v : w_) s += v;
    return s;
  }

  const std::vector<double>& member_statistics() const { return w_; }
  double threshold() const { return b_; }
  bool stopped() const { return crossed(statistic(), b_, stop_rule); }
  void reset() { std::fill(w_.begin(), w_.end(), 0.0); }

private:
  GaussianStreamModel model_;
  ThetaVector thetas_;
  double b_;
  std::vector<double> w_;
};

// Window-limited mixture statistic over an unknown affected subset. For
// every candidate change tick m in the last `window` ticks, each stream
// contributes log(1 - p + p exp(G_k)) with G_k = S_k^2 / (2 len), where
// S_k sums stream k over ticks m..n; the statistic maximizes the total
// over m. At p = 1 the per-stream terms reduce to G_k itself.
class XsDetector {
public:
  static constexpr StopRule stop_rule = StopRule::AtOrAbove;

  XsDetector(GaussianStreamModel model, double p, int window, double threshold)
      : k_(model.stream_count), p_(p), window_(window), b_(threshold) {
    require(p > 0.0 && p <= 1.0, "XsDetector: p must be in (0, 1]");
    require(window >= 1, "XsDetector: window must be >= 1");
    slots_ = window_ + 2;
    cums_.assign(static_cast<std::size_t>(slots_) * static_cast<std::size_t>(k_), 0.0);
    if (p_ < 1.0) {
      base_term_ = static_cast<double>(k_) * std::log1p(-p_);
      log_odds_ = std::log(p_ / (1.0 - p_));
    }
  }

  void step(const ObservationVector& x, RngStream&) {
    require(x.dim() == k_, "XsDetector: dimension mismatch");
    require(x.fully_observed(), "XsDetector: partial observations not supported");
    ++n_;
    const double* prev = row((n_ - 1) % slots_);
    double* cur = row(n_ % slots_);
    for (int k = 0; k < k_; ++k) {
      const double v = x.values[static_cast<std::size_t>(k)];
      require(std::isfinite(v), "XsDetector: non-finite observation");
      cur[k] = prev[k] + v;
    }

    const std::int64_t lo = std::max<std::int64_t>(1, n_ - window_);
    double best = -std::numeric_limits<double>::infinity();
    for (std::int64_t m = lo; m <= n_; ++m) {
      const double* base = row((m - 1) % slots_);
      const double inv2len = 0.5 / static_cast<double>(n_ - m + 1);
      double f;
      if (p_ == 1.0) {
        f = 0.0;
        for (int k = 0; k < k_; ++k) {
          const double d = cur[k] - base[k];
          f += d * d * inv2len;
        }
      } else {
        f = base_term_;
        for (int k = 0; k < k_; ++k) {
          const double d = cur[k] - base[k];
          f += detail::softplus(d * d * inv2len + log_odds_);
        }
      }
      best = std::max(best, f);
    }
    stat_ = best;
  }

  double statistic() const { return stat_; }
  double threshold() const { return b_; }
  bool stopped() const { return crossed(stat_, b_, stop_rule); }

  void reset() {
    n_ = 0;
    stat_ = 0.0;
    std::fill(cums_.begin(), cums_.end(), 0.0);
  }

private:
  double* row(std::int64_t slot) {
    return cums_.data() + static_cast<std::size_t>(slot) * static_cast<std::size_t>(k_);
  }
  const double* row(std::int64_t slot) const {
    return cums_.data() + static_cast<std::size_t>(slot) * static_cast<std::size_t>(k_);
  }

  int k_;
  double p_;
  int window_;
  double b_;
  int slots_ = 0;
  double base_term_ = 0.0;
  double log_odds_ = 0.0;
  std::int64_t n_ = 0;
  double stat_ = 0.0;
  std::vector<double> cums_;  // ring of cumulative sums, row per tick
};

// Adaptive CuSum: W_n = max(0, W_{n-1}) + llr(x_n, theta_hat), where
// theta_hat comes from a window of strictly earlier ticks. Before any
// tick enters the window the estimate is zero and the increment vanishes.
class WlCusumDetector {
public:
  static constexpr StopRule stop_rule = StopRule::StrictlyAbove;

  WlCusumDetector(GaussianStreamModel model, Estimator estimator, int window,
                  double threshold, bool flush_on_reset = false)
      : model_(model), estimator_(std::move(estimator)), b_(threshold),
        flush_on_reset_(flush_on_reset),
        buffer_(model.stream_count, window),
        theta_hat_(ThetaVector::zero(model.stream_count)) {}

  void step(const ObservationVector& x, RngStream&) {
    require(x.dim() == model_.stream_count, "WlCusumDetector: dimension mismatch");
    require(x.fully_observed(), "WlCusumDetector: partial observations not supported");
    has_estimate_ = estimate_into(buffer_, estimator_, theta_hat_.values);
    double increment = 0.0;
    if (has_estimate_) {
      increment = llr(model_, x, theta_hat_);
    } else {
      std::fill(theta_hat_.values.begin(), theta_hat_.values.end(), 0.0);
    }
    w_ = std::max(0.0, w_) + increment;
    buffer_.push(x);
    // A strictly negative statistic marks a restart; warm-up ticks leave
    // it at zero and must not starve the window.
    if (flush_on_reset_ && w_ < 0.0) buffer_.clear();
  }

  double statistic() const { return w_; }
  double threshold() const { return b_; }
  bool stopped() const { return crossed(w_, b_, stop_rule); }

  // Estimate used by the most recent step (zero during warm-up).
  const ThetaVector& theta_hat() const { return theta_hat_; }
  bool has_estimate() const { return has_estimate_; }
  int window() const { return buffer_.capacity(); }

  void reset() {
    w_ = 0.0;
    has_estimate_ = false;
    buffer_.clear();
    std::fill(theta_hat_.values.begin(), theta_hat_.values.end(), 0.0);
  }

private:
  GaussianStreamModel model_;
  Estimator estimator_;
  double b_;
  bool flush_on_reset_;
  WindowBuffer buffer_;
  ThetaVector theta_hat_;
  double w_ = 0.0;
  bool has_estimate_ = false;
};

// Several adaptive CuSums with different windows sharing one threshold;
// alarms as soon as any member does.
class WindowBankDetector {
public:
  static constexpr StopRule stop_rule = StopRule::StrictlyAbove;

  WindowBankDetector(GaussianStreamModel model, Estimator estimator,
                     std::vector<int> windows, double threshold,
                     bool flush_on_reset = false)
      : b_(threshold) {
    require(!windows.empty(), "WindowBankDetector: needs at least one window");
    members_.reserve(windows.size());
    for (int w : windows) {
      members_.emplace_back(model, estimator, w, threshold, flush_on_reset);
    }
  }

  void step(const ObservationVector& x, RngStream& rng) {
    for (auto& m : members_) m.step(x, rng);
  }

  double statistic() const {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& m : members_) best = std::max(best, m.statistic());
    return best;
  }

  const std::vector<WlCusumDetector>& members() const { return members_; }
  double threshold() const { return b_; }
  bool stopped() const { return crossed(statistic(), b_, stop_rule); }

  void reset() {
    for (auto& m : members_) m.reset();
  }

private:
  double b_;
  std::vector<WlCusumDetector> members_;
};

}  // namespace qcd
