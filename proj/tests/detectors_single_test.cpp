#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "qcd/detectors_single.hpp"
#include "qcd/model.hpp"
#include "qcd/rng.hpp"

using Catch::Matchers::WithinAbs;

namespace {

std::vector<double> random_llrs(qcd::RngStream& rng, int n, double theta = 0.5) {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (double& v : out) v = qcd::scalar_llr(rng.gauss(), theta);
  return out;
}

// Max-form CuSum: W_n = max(0, max_j sum_{i=j..n} llr_i), computed by brute force.
double brute_cusum(const std::vector<double>& llrs, std::size_t n) {
  double best = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = j; i < n; ++i) s += llrs[i];
    best = std::max(best, s);
  }
  return best;
}

// Sum-of-products Shiryaev-Roberts statistic in extended precision.
double brute_sr(const std::vector<double>& llrs, std::size_t n) {
  long double total = 0.0L;
  for (std::size_t j = 0; j < n; ++j) {
    long double prod = 1.0L;
    for (std::size_t i = j; i < n; ++i) prod *= std::exp(static_cast<long double>(llrs[i]));
    total += prod;
  }
  return static_cast<double>(total);
}

}  // namespace

TEST_CASE("cusum recursion equals the brute-force max form") {
  double worst = 0.0;
  for (int seq = 0; seq < 200; ++seq) {
    qcd::RngStream rng(1001, static_cast<std::uint64_t>(seq));
    const auto llrs = random_llrs(rng, 150);
    qcd::CusumState s;
    for (std::size_t n = 1; n <= llrs.size(); ++n) {
      s = qcd::cusum_step(s, llrs[n - 1]);
      worst = std::max(worst, std::abs(s.w - brute_cusum(llrs, n)));
    }
  }
  REQUIRE(worst < 1e-9);
}

TEST_CASE("sr recursion equals the sum-of-products form") {
  double worst = 0.0;
  for (int seq = 0; seq < 200; ++seq) {
    qcd::RngStream rng(1002, static_cast<std::uint64_t>(seq));
    const auto llrs = random_llrs(rng, 150);
    qcd::SrState s;
    for (std::size_t n = 1; n <= llrs.size(); ++n) {
      s = qcd::sr_step(s, llrs[n - 1]);
      const double reference = brute_sr(llrs, n);
      worst = std::max(worst, std::abs(s.r - reference) / std::max(1.0, reference));
    }
  }
  REQUIRE(worst < 1e-12);
}

TEST_CASE("cusum statistic never goes negative") {
  qcd::RngStream rng(1003, 0);
  qcd::CusumState s;
  for (int n = 0; n < 5000; ++n) {
    s = qcd::cusum_step(s, qcd::scalar_llr(rng.gauss(), 0.5));
    REQUIRE(s.w >= 0.0);
  }
  REQUIRE_THROWS_AS(qcd::cusum_step(s, std::nan("")), qcd::ContractViolation);
}

TEST_CASE("shiryaev recursion reproduces a hand-computed trace") {
  // rho = 0.1, likelihood ratios 2, 1/2, 1. Worked out by hand as exact
  // fractions: p1 = 38/119, p2 = 461/1919, p3 = 3034/9595.
  auto s = qcd::make_shiryaev_state(0.1);
  REQUIRE_THAT(s.p, WithinAbs(0.1, 1e-15));
  s = qcd::shiryaev_step(s, std::log(2.0));
  REQUIRE_THAT(s.p, WithinAbs(38.0 / 119.0, 1e-14));
  s = qcd::shiryaev_step(s, std::log(0.5));
  REQUIRE_THAT(s.p, WithinAbs(461.0 / 1919.0, 1e-14));
  s = qcd::shiryaev_step(s, 0.0);
  REQUIRE_THAT(s.p, WithinAbs(3034.0 / 9595.0, 1e-14));
}

TEST_CASE("shiryaev posterior stays a probability") {
  for (int seq = 0; seq < 100; ++seq) {
    qcd::RngStream rng(1004, static_cast<std::uint64_t>(seq));
    auto s = qcd::make_shiryaev_state(0.01);
    for (int n = 0; n < 300; ++n) {
      s = qcd::shiryaev_step(s, qcd::scalar_llr(rng.gauss(), 0.5));
      REQUIRE(s.p >= 0.0);
      REQUIRE(s.p <= 1.0);
    }
  }
}

TEST_CASE("shiryaev survives vanishing likelihood ratios") {
  auto s = qcd::make_shiryaev_state(0.5);
  s.p = 1.0 - 1e-16;
  s = qcd::shiryaev_step(s, -745.0);
  REQUIRE(std::isfinite(s.p));
  REQUIRE(s.p >= 0.0);
  REQUIRE(s.p <= 1.0);
}

TEST_CASE("shiryaev posterior is increasing in the likelihood ratio") {
  auto base = qcd::make_shiryaev_state(0.05);
  base.p = 0.3;
  double prev = -1.0;
  for (double l : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
    const double p = qcd::shiryaev_step(base, l).p;
    REQUIRE(p > prev);
    prev = p;
  }
}

TEST_CASE("shiryaev odds ratio approaches the SR statistic as rho shrinks") {
  // With q_n = odds_n / rho, the recursions give q_n = L (q_{n-1} + 1) / (1 - rho)
  // against R_n = L (R_{n-1} + 1), so q_n >= R_n with a gap that shrinks
  // monotonically as rho decreases.
  for (int seq = 0; seq < 50; ++seq) {
    qcd::RngStream rng(1005, static_cast<std::uint64_t>(seq));
    const auto llrs = random_llrs(rng, 100);
    double previous_gap = std::numeric_limits<double>::infinity();
    for (double rho : {0.1, 0.01, 0.001, 0.0001}) {
      auto s = qcd::make_shiryaev_state(rho);
      qcd::SrState r;
      double gap = 0.0;
      for (double v : llrs) {
        s = qcd::shiryaev_step(s, v);
        r = qcd::sr_step(r, v);
        const double q = s.p / (1.0 - s.p) / rho;
        gap = std::max(gap, std::abs(q - r.r));
      }
      REQUIRE(gap <= previous_gap);
      previous_gap = gap;
    }
  }
}

TEST_CASE("exponential penalty at beta = 1 leaves cusum alarms unchanged") {
  for (int seq = 0; seq < 300; ++seq) {
    qcd::RngStream rng(1006, static_cast<std::uint64_t>(seq));
    const auto llrs = random_llrs(rng, 200);
    for (double b : {1.0, 3.0}) {
      const auto plain = qcd::run_cusum(llrs, b);
      const auto penalized = qcd::run_exp_cusum(llrs, 1.0, b);
      REQUIRE(plain.stop_time == penalized.stop_time);
    }
  }
}

TEST_CASE("a beta below one never alarms earlier") {
  for (int seq = 0; seq < 100; ++seq) {
    qcd::RngStream rng(1007, static_cast<std::uint64_t>(seq));
    const auto llrs = random_llrs(rng, 200);
    const auto fast = qcd::run_exp_cusum(llrs, 1.0, 2.0);
    const auto slow = qcd::run_exp_cusum(llrs, 0.9, 2.0);
    if (slow.stop_time.has_value()) {
      REQUIRE(fast.stop_time.has_value());
      REQUIRE(*fast.stop_time <= *slow.stop_time);
    }
  }
}

TEST_CASE("alarm times are nondecreasing in the threshold") {
  qcd::RngStream rng(1008, 0);
  const auto llrs = random_llrs(rng, 400);
  std::int64_t horizon = 401;
  auto tick_or_horizon = [&](const qcd::StopOutcome& o) {
    return o.stop_time.value_or(horizon);
  };
  std::int64_t prev_cusum = 0, prev_sr = 0, prev_shiryaev = 0;
  for (double scale : {0.5, 1.0, 2.0, 4.0}) {
    const auto c = tick_or_horizon(qcd::run_cusum(llrs, 1.0 * scale));
    const auto r = tick_or_horizon(qcd::run_sr(llrs, 10.0 * scale));
    const auto s = tick_or_horizon(qcd::run_shiryaev(llrs, 0.01, std::min(0.2 * scale, 0.99)));
    REQUIRE(c >= prev_cusum);
    REQUIRE(r >= prev_sr);
    REQUIRE(s >= prev_shiryaev);
    prev_cusum = c;
    prev_sr = r;
    prev_shiryaev = s;
  }
}

TEST_CASE("threshold helpers implement the analytic bounds") {
  REQUIRE_THAT(qcd::cusum_threshold_for_arl(1000.0), WithinAbs(std::log(1000.0), 1e-15));
  REQUIRE_THAT(qcd::sr_threshold_for_arl(500.0), WithinAbs(500.0, 1e-15));
  REQUIRE_THAT(qcd::shiryaev_threshold_for_pfa(0.1), WithinAbs(0.9, 1e-15));
  REQUIRE_THROWS_AS(qcd::cusum_threshold_for_arl(1.0), qcd::ContractViolation);
  REQUIRE_THROWS_AS(qcd::sr_threshold_for_arl(0.5), qcd::ContractViolation);
  REQUIRE_THROWS_AS(qcd::shiryaev_threshold_for_pfa(0.0), qcd::ContractViolation);
}

TEST_CASE("detector wrappers match the scalar recursions") {
  qcd::GaussianStreamModel model(1);
  qcd::ThetaVector theta(std::vector<double>{0.5});
  qcd::RngStream rng(1009, 0);
  qcd::RngStream unused(0, 0);

  qcd::CusumDetector cusum(model, theta, 3.0);
  qcd::SrDetector sr(model, theta, 50.0);
  qcd::ShiryaevDetector shiryaev(model, theta, 0.02, 0.9);
  qcd::ExpCusumDetector penalized(model, theta, 0.95, 3.0);

  qcd::CusumState cs;
  qcd::SrState rs;
  auto ss = qcd::make_shiryaev_state(0.02);
  qcd::ExpCusumState es;

  for (int n = 0; n < 300; ++n) {
    const double x = rng.gauss();
    const auto obs = qcd::ObservationVector::full({x});
    const double v = qcd::scalar_llr(x, 0.5);
    cusum.step(obs, unused);
    sr.step(obs, unused);
    shiryaev.step(obs, unused);
    penalized.step(obs, unused);
    cs = qcd::cusum_step(cs, v);
    rs = qcd::sr_step(rs, v);
    ss = qcd::shiryaev_step(ss, v);
    es = qcd::exp_cusum_step(es, v, 0.95);
    REQUIRE_THAT(cusum.statistic(), WithinAbs(cs.w, 1e-12));
    REQUIRE_THAT(sr.statistic(), WithinAbs(rs.r, 1e-9));
    REQUIRE_THAT(shiryaev.statistic(), WithinAbs(ss.p, 1e-12));
    REQUIRE_THAT(penalized.statistic(), WithinAbs(es.w, 1e-12));
  }

  cusum.reset();
  sr.reset();
  shiryaev.reset();
  penalized.reset();
  REQUIRE(cusum.statistic() == 0.0);
  REQUIRE(sr.statistic() == 0.0);
  REQUIRE_THAT(shiryaev.statistic(), WithinAbs(0.02, 1e-15));
  REQUIRE(penalized.statistic() == 0.0);
}

TEST_CASE("stop rules differ between cusum-type and shiryaev detectors") {
  qcd::GaussianStreamModel model(1);
  qcd::ThetaVector theta(std::vector<double>{0.5});
  REQUIRE(qcd::CusumDetector::stop_rule == qcd::StopRule::StrictlyAbove);
  REQUIRE(qcd::SrDetector::stop_rule == qcd::StopRule::StrictlyAbove);
  REQUIRE(qcd::ShiryaevDetector::stop_rule == qcd::StopRule::AtOrAbove);
  REQUIRE(qcd::ExpCusumDetector::stop_rule == qcd::StopRule::StrictlyAbove);

  // At the boundary the strict rule keeps running, the weak rule stops.
  REQUIRE(!qcd::crossed(1.0, 1.0, qcd::StopRule::StrictlyAbove));
  REQUIRE(qcd::crossed(1.0, 1.0, qcd::StopRule::AtOrAbove));

  qcd::CusumDetector at_zero(model, theta, 0.0);
  REQUIRE(!at_zero.stopped());
}
