#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "qcd/detectors_single.hpp"
#include "qcd/error.hpp"
#include "qcd/model.hpp"

namespace qcd {

// Streams chosen for one tick, sorted and duplicate-free.
struct SamplingAction {
  std::vector<std::int32_t> streams;

  int size() const { return static_cast<int>(streams.size()); }

  bool operator==(const SamplingAction&) const = default;
};

// Finite action set for policies that optimize over explicit subsets.
struct ActionModel {
  int stream_count = 0;
  std::vector<SamplingAction> actions;

  ActionModel(int k, std::vector<SamplingAction> acts)
      : stream_count(k), actions(std::move(acts)) {
    require(k >= 1, "ActionModel: stream count must be >= 1");
    require(!actions.empty(), "ActionModel: needs at least one action");
    for (const auto& a : actions) {
      require(!a.streams.empty(), "ActionModel: empty action");
      for (std::size_t i = 0; i < a.streams.size(); ++i) {
        require(a.streams[i] >= 0 && a.streams[i] < k, "ActionModel: stream out of range");
        require(i == 0 || a.streams[i] > a.streams[i - 1],
                "ActionModel: streams must be sorted and distinct");
      }
    }
  }

  static ActionModel singletons(int k) {
    std::vector<SamplingAction> acts;
    acts.reserve(static_cast<std::size_t>(k));
    for (std::int32_t i = 0; i < k; ++i) acts.push_back({{i}});
    return ActionModel(k, std::move(acts));
  }

  // All subsets of the given size in lexicographic order. Guarded against
  // combinatorial blow-up.
  static ActionModel subsets_of_size(int k, int size, std::size_t max_actions = 100000) {
    require(size >= 1 && size <= k, "ActionModel: subset size out of range");
    std::vector<SamplingAction> acts;
    std::vector<std::int32_t> pick(static_cast<std::size_t>(size));
    std::iota(pick.begin(), pick.end(), 0);
    while (true) {
      acts.push_back({pick});
      require(acts.size() <= max_actions, "ActionModel: too many subset actions");
      int i = size - 1;
      while (i >= 0 && pick[static_cast<std::size_t>(i)] == k - size + i) --i;
      if (i < 0) break;
      ++pick[static_cast<std::size_t>(i)];
      for (int j = i + 1; j < size; ++j) {
        pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j - 1)] + 1;
      }
    }
    return ActionModel(k, std::move(acts));
  }
};

// Information rate of an action under a post-change mean: the KL divergence
// collected per tick when sampling exactly those streams.
inline double action_kl(const SamplingAction& action, const ThetaVector& theta) {
  double s = 0.0;
  for (std::int32_t k : action.streams) {
    require(k >= 0 && k < theta.dim(), "action_kl: stream out of range");
    const double t = theta.values[static_cast<std::size_t>(k)];
    s += 0.5 * t * t;
  }
  return s;
}

// Draws `count` distinct indices with probability proportional to the
// weights, sequentially and without replacement.
inline std::vector<std::int32_t> weighted_sample_without_replacement(
    std::span<const double> weights, int count, RngStream& rng) {
  const int k = static_cast<int>(weights.size());
  require(count >= 1 && count <= k, "weighted sample: count out of range");
  double total = 0.0;
  for (double w : weights) {
    require(std::isfinite(w) && w > 0.0, "weighted sample: weights must be positive");
    total += w;
  }
  std::vector<std::int32_t> remaining(static_cast<std::size_t>(k));
  std::iota(remaining.begin(), remaining.end(), 0);
  std::vector<double> live(weights.begin(), weights.end());
  std::vector<std::int32_t> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int draw = 0; draw < count; ++draw) {
    double u = rng.uniform01() * total;
    std::size_t pick = remaining.size() - 1;
    for (std::size_t i = 0; i < remaining.size(); ++i) {
      u -= live[i];
      if (u < 0.0) {
        pick = i;
        break;
      }
    }
    out.push_back(remaining[pick]);
    total -= live[pick];
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
    live.erase(live.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return out;
}

namespace detail {

// Per-stream sliding window of the most recently observed values.
class ScalarWindow {
public:
  explicit ScalarWindow(int capacity) : capacity_(capacity) {
    require(capacity >= 1, "ScalarWindow: capacity must be >= 1");
    ring_.assign(static_cast<std::size_t>(capacity), 0.0);
  }

  void push(double v) {
    require(std::isfinite(v), "ScalarWindow: non-finite value");
    if (fill_ == capacity_) {
      sum_ -= ring_[static_cast<std::size_t>(next_)];
    } else {
      ++fill_;
    }
    ring_[static_cast<std::size_t>(next_)] = v;
    sum_ += v;
    next_ = (next_ + 1) % capacity_;
    if (++pushes_ % capacity_ == 0) {
      sum_ = 0.0;
      for (int i = 0; i < fill_; ++i) sum_ += ring_[static_cast<std::size_t>(i)];
    }
  }

  bool empty() const { return fill_ == 0; }
  double mean() const { return fill_ == 0 ? 0.0 : sum_ / fill_; }

  void clear() {
    fill_ = 0;
    next_ = 0;
    pushes_ = 0;
    sum_ = 0.0;
  }

private:
  int capacity_;
  int fill_ = 0;
  int next_ = 0;
  std::int64_t pushes_ = 0;
  double sum_ = 0.0;
  std::vector<double> ring_;
};

}  // namespace detail

// Cyclic scan with one observed stream: a local CuSum runs on the current
// stream; when it drains to zero the scan advances to the next stream, and
// the alarm fires when the local statistic crosses b.
class CyclicScanPolicy {
public:
  static constexpr StopRule stop_rule = StopRule::StrictlyAbove;

  CyclicScanPolicy(GaussianStreamModel model, ThetaVector stream_thetas,
                   double threshold)
      : k_(model.stream_count), thetas_(std::move(stream_thetas)), b_(threshold) {
    require(thetas_.dim() == k_, "CyclicScanPolicy: theta dimension");
  }

  int max_streams_per_tick() const { return 1; }

  const SamplingAction& next_action(RngStream&) {
    action_.streams = {current_};
    return action_;
  }

  void observe(const ObservationVector& x) {
    require(x.dim() == k_, "CyclicScanPolicy: dimension mismatch");
    require(x.observed(static_cast<std::size_t>(current_)),
            "CyclicScanPolicy: current stream not observed");
    const double v = scalar_llr(x.values[static_cast<std::size_t>(current_)],
                                thetas_.values[static_cast<std::size_t>(current_)]);
    w_ = std::max(0.0, w_ + v);
    if (w_ == 0.0) current_ = static_cast<std::int32_t>((current_ + 1) % k_);
  }

  const SamplingAction& last_action() const { return action_; }
  std::int32_t current_stream() const { return current_; }
  double statistic() const { return w_; }
  double threshold() const { return b_; }
  bool stopped() const { return crossed(w_, b_, stop_rule); }

  void reset() {
    w_ = 0.0;
    current_ = 0;
    action_.streams.clear();
  }

private:
  int k_;
  ThetaVector thetas_;
  double b_;
  double w_ = 0.0;
  std::int32_t current_ = 0;
  SamplingAction action_;
};

// Observes the L streams with the highest local CuSums, awards every idle
// stream a fixed exploration bonus, and alarms when any local statistic
// crosses b.
class TopLDeltaPolicy {
public:
  static constexpr StopRule stop_rule = StopRule::StrictlyAbove;

  TopLDeltaPolicy(GaussianStreamModel model, ThetaVector stream_thetas, int budget,
                  double delta, double threshold)
      : k_(model.stream_count), thetas_(std::move(stream_thetas)), budget_(budget),
        delta_(delta), b_(threshold), w_(static_cast<std::size_t>(k_), 0.0) {
    require(thetas_.dim() == k_, "TopLDeltaPolicy: theta dimension");
    require(budget >= 1 && budget <= k_, "TopLDeltaPolicy: budget out of range");
    require(delta >= 0.0, "TopLDeltaPolicy: delta must be >= 0");
  }

  int max_streams_per_tick() const { return budget_; }

  const SamplingAction& next_action(RngStream&) {
    std::vector<std::int32_t> order(static_cast<std::size_t>(k_));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
      const double wa = w_[static_cast<std::size_t>(a)];
      const double wb = w_[static_cast<std::size_t>(b)];
      return wa != wb ? wa > wb : a < b;
    });
    order.resize(static_cast<std::size_t>(budget_));
    std::sort(order.begin(), order.end());
    action_.streams = std::move(order);
    return action_;
  }

  void observe(const ObservationVector& x) {
    require(x.dim() == k_, "TopLDeltaPolicy: dimension mismatch");
    std::size_t next_selected = 0;
    for (std::int32_t k = 0; k < k_; ++k) {
      const bool selected = next_selected < action_.streams.size() &&
                            action_.streams[next_selected] == k;
      if (selected) {
        ++next_selected;
        require(x.observed(static_cast<std::size_t>(k)),
                "TopLDeltaPolicy: selected stream not observed");
        const double v = scalar_llr(x.values[static_cast<std::size_t>(k)],
                                    thetas_.values[static_cast<std::size_t>(k)]);
        w_[static_cast<std::size_t>(k)] = std::max(0.0, w_[static_cast<std::size_t>(k)] + v);
      } else {
        w_[static_cast<std::size_t>(k)] += delta_;
      }
    }
  }

  const SamplingAction& last_action() const { return action_; }
  const std::vector<double>& member_statistics() const { return w_; }

  double statistic() const {
    double best = -std::numeric_limits<double>::infinity();
    for (double v : w_) best = std::max(best, v);
    return best;
  }

  double threshold() const { return b_; }
  bool stopped() const { return crossed(statistic(), b_, stop_rule); }

  void reset() {
    std::fill(w_.begin(), w_.end(), 0.0);
    action_.streams.clear();
  }

private:
  int k_;
  ThetaVector thetas_;
  int budget_;
  double delta_;
  double b_;
  std::vector<double> w_;
  SamplingAction action_;
};

// Draws L streams per tick with probability proportional to 1 + R_k, where
// R_k is the stream's Shiryaev-Roberts statistic; alarms when any R_k
// crosses b.
class SrRandomizedPolicy {
public:
  static constexpr StopRule stop_rule = StopRule::StrictlyAbove;

  SrRandomizedPolicy(GaussianStreamModel model, ThetaVector stream_thetas, int budget,
                     double threshold)
      : k_(model.stream_count), thetas_(std::move(stream_thetas)), budget_(budget),
        b_(threshold), r_(static_cast<std::size_t>(k_), 0.0) {
    require(thetas_.dim() == k_, "SrRandomizedPolicy: theta dimension");
    require(budget >= 1 && budget <= k_, "SrRandomizedPolicy: budget out of range");
  }

  int max_streams_per_tick() const { return budget_; }

  const SamplingAction& next_action(RngStream& rng) {
    std::vector<double> weights(static_cast<std::size_t>(k_));
    for (int k = 0; k < k_; ++k) weights[static_cast<std::size_t>(k)] = 1.0 + r_[static_cast<std::size_t>(k)];
    auto picked = weighted_sample_without_replacement(weights, budget_, rng);
    std::sort(picked.begin(), picked.end());
    action_.streams = std::move(picked);
    return action_;
  }

  void observe(const ObservationVector& x) {
    require(x.dim() == k_, "SrRandomizedPolicy: dimension mismatch");
    for (std::int32_t k : action_.streams) {
      require(x.observed(static_cast<std::size_t>(k)),
              "SrRandomizedPolicy: selected stream not observed");
      const double v = scalar_llr(x.values[static_cast<std::size_t>(k)],
                                  thetas_.values[static_cast<std::size_t>(k)]);
      r_[static_cast<std::size_t>(k)] = (1.0 + r_[static_cast<std::size_t>(k)]) * std::exp(v);
    }
  }

  const SamplingAction& last_action() const { return action_; }
  const std::vector<double>& member_statistics() const { return r_; }

  double statistic() const {
    double best = -std::numeric_limits<double>::infinity();
    for (double v : r_) best = std::max(best, v);
    return best;
  }

  double threshold() const { return b_; }
  bool stopped() const { return crossed(statistic(), b_, stop_rule); }

  void reset() {
    std::fill(r_.begin(), r_.end(), 0.0);
    action_.streams.clear();
  }

private:
  int k_;
  ThetaVector thetas_;
  int budget_;
  double b_;
  std::vector<double> r_;
  SamplingAction action_;
};

// Greedy information maximizer: picks the action with the largest estimated
// KL rate, falling back to a uniformly random action every explore_every-th
// tick. Stream means are estimated from a per-stream window of observed
// values; detection runs one adaptive CuSum per stream against those
// estimates, alarming when any of them crosses b.
class ChernoffGreedyPolicy {
public:
  static constexpr StopRule stop_rule = StopRule::StrictlyAbove;

  ChernoffGreedyPolicy(GaussianStreamModel model, ActionModel actions, int window,
                       int explore_every, double threshold)
      : k_(model.stream_count), actions_(std::move(actions)), explore_every_(explore_every),
        b_(threshold), w_(static_cast<std::size_t>(k_), 0.0) {
    require(actions_.stream_count == k_, "ChernoffGreedyPolicy: action model dimension");
    require(window >= 1, "ChernoffGreedyPolicy: window must be >= 1");
    require(explore_every >= 1, "ChernoffGreedyPolicy: explore_every must be >= 1");
    windows_.reserve(static_cast<std::size_t>(k_));
    for (int k = 0; k < k_; ++k) windows_.emplace_back(window);
  }

  int max_streams_per_tick() const {
    int best = 0;
    for (const auto& a : actions_.actions) best = std::max(best, a.size());
    return best;
  }

  const SamplingAction& next_action(RngStream& rng) {
    ++tick_;
    std::size_t choice = 0;
    if (tick_ % explore_every_ == 0) {
      choice = rng.uniform_below(actions_.actions.size());
    } else {
      ThetaVector est = ThetaVector::zero(k_);
      for (int k = 0; k < k_; ++k) est.values[static_cast<std::size_t>(k)] = windows_[static_cast<std::size_t>(k)].mean();
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < actions_.actions.size(); ++i) {
        const double rate = action_kl(actions_.actions[i], est);
        if (rate > best) {
          best = rate;
          choice = i;
        }
      }
    }
    action_ = actions_.actions[choice];
    return action_;
  }

  void observe(const ObservationVector& x) {
    require(x.dim() == k_, "ChernoffGreedyPolicy: dimension mismatch");
    for (std::int32_t k : action_.streams) {
      require(x.observed(static_cast<std::size_t>(k)),
              "ChernoffGreedyPolicy: selected stream not observed");
      const std::size_t i = static_cast<std::size_t>(k);
      const double theta_hat = windows_[i].mean();
      const double v = scalar_llr(x.values[i], theta_hat);
      w_[i] = std::max(0.0, w_[i] + v);
      windows_[i].push(x.values[i]);
    }
  }

  const SamplingAction& last_action() const { return action_; }
  const std::vector<double>& member_statistics() const { return w_; }

  double stream_estimate(int k) const {
    require(k >= 0 && k < k_, "ChernoffGreedyPolicy: stream out of range");
    return windows_[static_cast<std::size_t>(k)].mean();
  }

  double statistic() const {
    double best = -std::numeric_limits<double>::infinity();
    for (double v : w_) best = std::max(best, v);
    return best;
  }

  double threshold() const { return b_; }
  bool stopped() const { return crossed(statistic(), b_, stop_rule); }

  void reset() {
    tick_ = 0;
    std::fill(w_.begin(), w_.end(), 0.0);
    for (auto& win : windows_) win.clear();
    action_.streams.clear();
  }

private:
  int k_;
  ActionModel actions_;
  std::int64_t explore_every_;
  double b_;
  std::int64_t tick_ = 0;
  std::vector<double> w_;
  std::vector<detail::ScalarWindow> windows_;
  SamplingAction action_;
};

// Runs a sampling policy as a detector: each tick the policy commits to an
// action before the data are touched, then sees exactly the selected
// entries of the full observation.
template <typename Policy>
class SampledDetector {
public:
  static constexpr StopRule stop_rule = Policy::stop_rule;

  explicit SampledDetector(Policy policy) : policy_(std::move(policy)) {}

  void step(const ObservationVector& x, RngStream& rng) {
    const SamplingAction& action = policy_.next_action(rng);
    masked_.values.assign(x.values.size(), 0.0);
    masked_.mask.assign(x.values.size(), 0);
    for (std::int32_t k : action.streams) {
      require(k >= 0 && k < x.dim(), "SampledDetector: action out of range");
      require(x.observed(static_cast<std::size_t>(k)),
              "SampledDetector: source observation is masked");
      masked_.values[static_cast<std::size_t>(k)] = x.values[static_cast<std::size_t>(k)];
      masked_.mask[static_cast<std::size_t>(k)] = 1;
    }
    policy_.observe(masked_);
  }

  double statistic() const { return policy_.statistic(); }
  double threshold() const { return policy_.threshold(); }
  bool stopped() const { return policy_.stopped(); }
  void reset() { policy_.reset(); }

  const Policy& policy() const { return policy_; }

private:
  Policy policy_;
  ObservationVector masked_;
};

}  // namespace qcd
