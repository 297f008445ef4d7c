#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "qcd/error.hpp"
#include "qcd/model.hpp"

namespace qcd {

// Sliding window over the most recent fully observed ticks. Keeps a
// running column sum, refreshed once per wrap so rounding drift cannot
// accumulate over long runs.
class WindowBuffer {
public:
  WindowBuffer(int dim, int capacity) : dim_(dim), capacity_(capacity) {
    require(dim >= 1, "WindowBuffer: dim must be >= 1");
    require(capacity >= 1, "WindowBuffer: capacity must be >= 1");
    ring_.assign(static_cast<std::size_t>(dim) * static_cast<std::size_t>(capacity), 0.0);
    sum_.assign(static_cast<std::size_t>(dim), 0.0);
  }

  int dim() const { return dim_; }
  int capacity() const { return capacity_; }
  int fill() const { return fill_; }
  bool empty() const { return fill_ == 0; }

  void clear() {
    fill_ = 0;
    next_ = 0;
    pushes_ = 0;
    std::fill(sum_.begin(), sum_.end(), 0.0);
  }

  void push(const ObservationVector& x) {
    require(x.dim() == dim_, "WindowBuffer: dimension mismatch");
    require(x.fully_observed(), "WindowBuffer: partial observations not supported");
    double* row = ring_.data() + static_cast<std::size_t>(next_) * dim_;
    if (fill_ == capacity_) {
      for (int k = 0; k < dim_; ++k) sum_[static_cast<std::size_t>(k)] -= row[k];
    } else {
      ++fill_;
    }
    for (int k = 0; k < dim_; ++k) {
      const double v = x.values[static_cast<std::size_t>(k)];
      require(std::isfinite(v), "WindowBuffer: non-finite observation");
      row[k] = v;
      sum_[static_cast<std::size_t>(k)] += v;
    }
    next_ = (next_ + 1) % capacity_;
    if (++pushes_ % capacity_ == 0) refresh_sum();
  }

  // Columnwise mean of the buffered ticks. Requires a nonempty buffer.
  void mean_into(std::span<double> out) const {
    require(fill_ > 0, "WindowBuffer: mean of an empty buffer");
    require(out.size() == static_cast<std::size_t>(dim_), "WindowBuffer: bad output span");
    const double inv = 1.0 / fill_;
    for (int k = 0; k < dim_; ++k) out[static_cast<std::size_t>(k)] = sum_[static_cast<std::size_t>(k)] * inv;
  }

  std::vector<double> mean() const {
    std::vector<double> out(static_cast<std::size_t>(dim_));
    mean_into(out);
    return out;
  }

private:
  void refresh_sum() {
    std::fill(sum_.begin(), sum_.end(), 0.0);
    for (int i = 0; i < fill_; ++i) {
      const double* row = ring_.data() + static_cast<std::size_t>(i) * dim_;
      for (int k = 0; k < dim_; ++k) sum_[static_cast<std::size_t>(k)] += row[k];
    }
  }

  int dim_;
  int capacity_;
  int fill_ = 0;
  int next_ = 0;
  std::int64_t pushes_ = 0;
  std::vector<double> ring_;
  std::vector<double> sum_;
};

// Estimator kinds for the post-change mean, all computed from the window mean.
struct MlEstimator {};

struct JsPlusEstimator {};

struct HardThresholdEstimator {
  double level = 0.0;
};

struct LinearShrinkageEstimator {
  double scale = 1.0;
  ThetaVector offset;
};

using Estimator = std::variant<MlEstimator, JsPlusEstimator, HardThresholdEstimator,
                               LinearShrinkageEstimator>;

// Fills `out` with the estimate; returns false (out untouched) when the
// buffer is empty and the caller should fall back to theta = 0.
inline bool estimate_into(const WindowBuffer& buf, const Estimator& kind,
                          std::span<double> out) {
  if (buf.empty()) return false;
  require(out.size() == static_cast<std::size_t>(buf.dim()),
          "estimate_into: bad output span");
  buf.mean_into(out);

  if (std::holds_alternative<MlEstimator>(kind)) return true;

  if (std::holds_alternative<JsPlusEstimator>(kind)) {
    const int k = buf.dim();
    require(k >= 3, "JsPlusEstimator: needs at least 3 streams");
    double norm_sq = 0.0;
    for (double v : out) norm_sq += v * v;
    if (norm_sq == 0.0) return true;
    // The window mean has variance 1/m per column, so the shrinkage is
    // (1 - (k - 2) / (m ||mean||^2)) clipped at zero.
    const double factor =
        std::max(0.0, 1.0 - (k - 2) / (static_cast<double>(buf.fill()) * norm_sq));
    for (double& v : out) v *= factor;
    return true;
  }

  if (const auto* hard = std::get_if<HardThresholdEstimator>(&kind)) {
    require(hard->level >= 0.0, "HardThresholdEstimator: level must be >= 0");
    for (double& v : out) {
      if (std::abs(v) < hard->level) v = 0.0;
    }
    return true;
  }

  const auto& lin = std::get<LinearShrinkageEstimator>(kind);
  require(lin.offset.dim() == buf.dim(), "LinearShrinkageEstimator: offset dimension");
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = lin.scale * out[i] + lin.offset.values[i];
  }
  return true;
}

inline std::optional<ThetaVector> estimate(const WindowBuffer& buf,
                                           const Estimator& kind) {
  ThetaVector theta = ThetaVector::zero(buf.dim());
  if (!estimate_into(buf, kind, theta.values)) return std::nullopt;
  return theta;
}

inline std::optional<ThetaVector> ml_estimate(const WindowBuffer& buf) {
  return estimate(buf, MlEstimator{});
}

inline std::optional<ThetaVector> js_plus_estimate(const WindowBuffer& buf) {
  return estimate(buf, JsPlusEstimator{});
}

inline std::optional<ThetaVector> hard_threshold_estimate(const WindowBuffer& buf,
                                                          double level) {
  return estimate(buf, HardThresholdEstimator{level});
}

inline std::optional<ThetaVector> linear_shrinkage_estimate(const WindowBuffer& buf,
                                                            double scale,
                                                            ThetaVector offset) {
  return estimate(buf, LinearShrinkageEstimator{scale, std::move(offset)});
}

}  // namespace qcd
