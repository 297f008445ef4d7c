#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "qcd/error.hpp"
#include "qcd/rng.hpp"

namespace qcd {

// Post-change mean vector for unit-variance Gaussian streams.
struct ThetaVector {
  std::vector<double> values;

  ThetaVector() = default;
  explicit ThetaVector(std::vector<double> v) : values(std::move(v)) {}

  static ThetaVector zero(int k) {
    require(k >= 1, "ThetaVector: dimension must be >= 1");
    return ThetaVector(std::vector<double>(static_cast<std::size_t>(k), 0.0));
  }

  static ThetaVector constant(int k, double value) {
    require(k >= 1, "ThetaVector: dimension must be >= 1");
    return ThetaVector(std::vector<double>(static_cast<std::size_t>(k), value));
  }

  int dim() const { return static_cast<int>(values.size()); }
  double operator[](std::size_t k) const { return values[k]; }
  double& operator[](std::size_t k) { return values[k]; }

  double norm_sq() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return s;
  }
};

// KL divergence of the post-change law from the pre-change law for one
// observation vector: ||theta||^2 / 2 under unit-variance Gaussians.
inline double kl_divergence(const ThetaVector& theta) {
  require(theta.dim() >= 1, "kl_divergence: empty theta");
  return 0.5 * theta.norm_sq();
}

// One tick of (possibly partially observed) data. An empty mask means
// every stream was observed.
struct ObservationVector {
  std::vector<double> values;
  std::vector<std::uint8_t> mask;

  static ObservationVector full(std::vector<double> v) {
    ObservationVector x;
    x.values = std::move(v);
    return x;
  }

  int dim() const { return static_cast<int>(values.size()); }

  bool fully_observed() const { return mask.empty(); }

  bool observed(std::size_t k) const { return mask.empty() || mask[k] != 0; }

  int observed_count() const {
    if (mask.empty()) return dim();
    int n = 0;
    for (std::uint8_t m : mask) n += (m != 0);
    return n;
  }
};

// K independent unit-variance Gaussian streams, mean 0 before the change
// and mean theta_k in stream k after it.
struct GaussianStreamModel {
  int stream_count = 1;

  explicit GaussianStreamModel(int k) : stream_count(k) {
    require(k >= 1, "GaussianStreamModel: stream count must be >= 1");
  }
};

// Log-likelihood ratio of one scalar observation, post vs. pre change.
inline double scalar_llr(double x, double theta) {
  return theta * x - 0.5 * theta * theta;
}

// Log-likelihood ratio of one observation vector. Unobserved streams
// contribute nothing.
inline double llr(const GaussianStreamModel& model, const ObservationVector& x,
                  const ThetaVector& theta) {
  require(x.dim() == model.stream_count, "llr: observation dimension mismatch");
  require(theta.dim() == model.stream_count, "llr: theta dimension mismatch");
  const std::size_t k = x.values.size();
  double s = 0.0;
  if (x.mask.empty()) {
    for (std::size_t i = 0; i < k; ++i) s += scalar_llr(x.values[i], theta.values[i]);
  } else {
    for (std::size_t i = 0; i < k; ++i) {
      if (x.mask[i]) s += scalar_llr(x.values[i], theta.values[i]);
    }
  }
  require(std::isfinite(s), "llr: non-finite result");
  return s;
}

// Tick of the first post-change observation, or "never".
class ChangePoint {
public:
  static ChangePoint never() { return ChangePoint(); }

  static ChangePoint at(std::int64_t tick) {
    require(tick >= 1, "ChangePoint: tick must be >= 1");
    ChangePoint c;
    c.tick_ = tick;
    return c;
  }

  bool is_never() const { return !tick_.has_value(); }

  std::int64_t tick() const {
    require(tick_.has_value(), "ChangePoint: no tick for a never-changing stream");
    return *tick_;
  }

  // True when tick n carries post-change data.
  bool post_change(std::int64_t n) const { return tick_.has_value() && n >= *tick_; }

  bool operator==(const ChangePoint&) const = default;

private:
  std::optional<std::int64_t> tick_;
};

// Fixed post-change mean, shared by every replication.
struct FixedTheta {
  ThetaVector theta;
};

// Redrawn per replication: the first nonzero_count streams get
// N(0.5, 1) draws, the rest stay at zero, and the vector is rescaled so
// the per-tick KL divergence equals target_kl exactly.
struct SparseRandomTheta {
  int nonzero_count = 1;
  double target_kl = 0.5;
};

using ThetaRule = std::variant<FixedTheta, SparseRandomTheta>;

// Where the change happens and what it looks like.
struct ChangeScenario {
  std::vector<ChangePoint> change_points;
  ThetaRule theta_rule;

  static ChangeScenario all_streams_at(int stream_count, ChangePoint nu,
                                       ThetaRule rule) {
    require(stream_count >= 1, "ChangeScenario: stream count must be >= 1");
    ChangeScenario s;
    s.change_points.assign(static_cast<std::size_t>(stream_count), nu);
    s.theta_rule = std::move(rule);
    return s;
  }

  static ChangeScenario pre_change_only(int stream_count) {
    return all_streams_at(stream_count, ChangePoint::never(),
                          FixedTheta{ThetaVector::zero(stream_count)});
  }

  int stream_count() const { return static_cast<int>(change_points.size()); }

  // The shared change point when every stream changes together.
  ChangePoint common_change_point() const {
    require(!change_points.empty(), "ChangeScenario: no streams");
    for (const auto& c : change_points)
      require(c == change_points.front(),
              "ChangeScenario: streams change at different ticks");
    return change_points.front();
  }

  ThetaVector draw_theta(RngStream& rng) const {
    const int k = stream_count();
    if (const auto* fixed = std::get_if<FixedTheta>(&theta_rule)) {
      require(fixed->theta.dim() == k, "ChangeScenario: theta dimension mismatch");
      return fixed->theta;
    }
    const auto& sparse = std::get<SparseRandomTheta>(theta_rule);
    require(sparse.nonzero_count >= 1 && sparse.nonzero_count <= k,
            "ChangeScenario: nonzero_count out of range");
    require(sparse.target_kl > 0.0, "ChangeScenario: target_kl must be positive");
    ThetaVector theta = ThetaVector::zero(k);
    double norm_sq = 0.0;
    while (norm_sq == 0.0) {
      for (int i = 0; i < sparse.nonzero_count; ++i) {
        theta.values[static_cast<std::size_t>(i)] = 0.5 + rng.gauss();
      }
      norm_sq = theta.norm_sq();
    }
    const double scale = std::sqrt(2.0 * sparse.target_kl / norm_sq);
    for (double& v : theta.values) v *= scale;
    return theta;
  }
};

// Streams observations one tick at a time; tick numbering starts at 1.
// The post-change mean is drawn once, at construction. The scenario is
// copied so that passing a temporary is safe.
class SequenceGenerator {
public:
  SequenceGenerator(const GaussianStreamModel& model, const ChangeScenario& scenario,
                    RngStream& rng)
      : scenario_(scenario), rng_(&rng), theta_(scenario.draw_theta(rng)) {
    require(scenario.stream_count() == model.stream_count,
            "SequenceGenerator: scenario dimension mismatch");
    obs_.values.assign(static_cast<std::size_t>(model.stream_count), 0.0);
  }

  const ThetaVector& theta() const { return theta_; }
  std::int64_t last_tick() const { return tick_; }

  const ObservationVector& next() {
    ++tick_;
    const std::size_t k = obs_.values.size();
    for (std::size_t i = 0; i < k; ++i) {
      const double mean =
          scenario_.change_points[i].post_change(tick_) ? theta_.values[i] : 0.0;
      obs_.values[i] = mean + rng_->gauss();
    }
    return obs_;
  }

private:
  ChangeScenario scenario_;
  RngStream* rng_;
  ThetaVector theta_;
  ObservationVector obs_;
  std::int64_t tick_ = 0;
};

inline std::vector<ObservationVector> generate_sequence(
    const GaussianStreamModel& model, const ChangeScenario& scenario, RngStream& rng,
    std::int64_t horizon) {
  require(horizon >= 0, "generate_sequence: horizon must be >= 0");
  SequenceGenerator gen(model, scenario, rng);
  std::vector<ObservationVector> out;
  out.reserve(static_cast<std::size_t>(horizon));
  for (std::int64_t n = 0; n < horizon; ++n) out.push_back(gen.next());
  return out;
}

}  // namespace qcd
