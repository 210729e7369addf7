#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "platoon/distance_estimator.hpp"

using namespace platoon;

TEST_CASE("GPS method subtracts the vehicle lengths in between") {
  const LeaderDistanceEstimate e = estimate_s_gps(21.0, 1, 4.5);
  CHECK(e.s_hat_m == doctest::Approx(16.5));
  CHECK(e.method == EstimateMethod::Gps);
  CHECK_FALSE(e.clamped);
  CHECK(e.variance_m2 == doctest::Approx(9.0));  // default 3 m noise

  SUBCASE("bumper contact") {
    const LeaderDistanceEstimate zero = estimate_s_gps(2 * 4.5, 2, 4.5);
    CHECK(zero.s_hat_m == 0.0);
    CHECK_FALSE(zero.clamped);
  }

  SUBCASE("negative raw estimate clamps and flags") {
    const LeaderDistanceEstimate c = estimate_s_gps(3.0, 1, 4.5);
    CHECK(c.s_hat_m == 0.0);
    CHECK(c.clamped);
  }

  CHECK_THROWS_AS(estimate_s_gps(10.0, 0, 4.5), std::domain_error);
  CHECK_THROWS_AS(estimate_s_gps(10.0, 1, 0.0), std::domain_error);
}

TEST_CASE("radar chain sums headways and variances") {
  CHECK(estimate_s_radar_chain({6.0}).s_hat_m == doctest::Approx(6.0));
  CHECK(estimate_s_radar_chain({6.0, 6.1}).s_hat_m == doctest::Approx(12.1));
  CHECK(estimate_s_radar_chain({0.0, 0.0, 0.0}).s_hat_m == 0.0);
  CHECK(estimate_s_radar_chain({6.0, 6.0}, 0.1).variance_m2 == doctest::Approx(0.02));
  CHECK_THROWS_AS(estimate_s_radar_chain({}), std::domain_error);
}

TEST_CASE("fusion filter") {
  SUBCASE("degenerate zero-noise case keeps the consistent value") {
    LeaderDistanceEstimate prev;
    prev.s_hat_m = 10.0;
    prev.variance_m2 = 0.0;
    LeaderDistanceEstimate meas = prev;
    const LeaderDistanceEstimate out = fuse_s_estimate(prev, 5.0, 5.0, meas, 0.1, 0.0);
    CHECK(out.s_hat_m == doctest::Approx(10.0));
    CHECK(out.variance_m2 == doctest::Approx(0.0));
  }

  SUBCASE("stationary platoon: posterior std under 1 m within 20 updates") {
    // Independent scalar Kalman recursion as the oracle.
    const double r = 9.0;
    const double q = 0.1 * 0.1 * 0.1;  // process variance accumulated over dt
    double p_oracle = r;
    LeaderDistanceEstimate state;
    state.s_hat_m = 10.0;
    state.variance_m2 = r;
    LeaderDistanceEstimate meas;
    meas.s_hat_m = 10.0;
    meas.variance_m2 = r;
    int below = -1;
    for (int k = 1; k <= 20; ++k) {
      state = fuse_s_estimate(state, 0.0, 0.0, meas, 0.1);
      const double pred = p_oracle + q;
      p_oracle = pred * r / (pred + r);
      CHECK(state.variance_m2 == doctest::Approx(p_oracle).epsilon(1e-12));
      if (below < 0 && std::sqrt(state.variance_m2) < 1.0) below = k;
    }
    CHECK(below > 0);
    CHECK(below <= 20);
  }

  SUBCASE("constant closing speed integrates the relative velocity") {
    LeaderDistanceEstimate state;
    state.s_hat_m = 20.0;
    state.variance_m2 = 0.01;
    LeaderDistanceEstimate vague;
    vague.s_hat_m = 0.0;
    vague.variance_m2 = 1e12;  // measurement carries no information
    for (int k = 1; k <= 10; ++k) {
      state = fuse_s_estimate(state, 0.0, 1.0, vague, 0.1, 0.0);
      CHECK(state.s_hat_m == doctest::Approx(20.0 - 0.1 * k).epsilon(1e-6));
    }
  }

  SUBCASE("posterior variance never exceeds the measurement variance") {
    LeaderDistanceEstimate state;
    state.s_hat_m = 5.0;
    state.variance_m2 = 100.0;
    LeaderDistanceEstimate meas;
    meas.s_hat_m = 6.0;
    meas.variance_m2 = 4.0;
    double last = 1e300;
    for (int k = 0; k < 30; ++k) {
      state = fuse_s_estimate(state, 0.0, 0.0, meas, 0.1);
      CHECK(state.variance_m2 <= meas.variance_m2 + 1e-12);
      CHECK(state.variance_m2 <= last + 1e-12);  // monotone under identical updates
      last = state.variance_m2;
    }
  }

  SUBCASE("clamped below zero") {
    LeaderDistanceEstimate state;
    state.s_hat_m = 0.05;
    state.variance_m2 = 0.01;
    LeaderDistanceEstimate meas;
    meas.s_hat_m = -3.0;
    meas.variance_m2 = 0.0001;
    const LeaderDistanceEstimate out = fuse_s_estimate(state, 0.0, 0.0, meas, 0.1);
    CHECK(out.s_hat_m == 0.0);
    CHECK(out.clamped);
  }

  CHECK_THROWS_AS(fuse_s_estimate({}, 0, 0, {}, 0.0), std::domain_error);
}

TEST_CASE("both methods agree with exact geometry when noise free") {
  // Three followers with known headways; truth from the geometry identity.
  const std::vector<double> headways{6.0, 6.25, 5.75};
  const double vehicle_length = 4.5;
  double truth = 0.0;
  std::vector<double> chain;
  for (size_t i = 0; i < headways.size(); ++i) {
    truth += headways[i];
    chain.push_back(headways[i]);
    const int index = static_cast<int>(i) + 1;
    const double center_distance = truth + index * vehicle_length;
    CHECK(estimate_s_gps(center_distance, index, vehicle_length).s_hat_m ==
          doctest::Approx(truth).epsilon(1e-12));
    CHECK(estimate_s_radar_chain(chain).s_hat_m == doctest::Approx(truth).epsilon(1e-12));
  }
}
