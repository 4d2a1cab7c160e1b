#include <doctest.h>

#include <cmath>
#include <vector>

#include "mbbsim/devices.hpp"
#include "mbbsim/errors.hpp"

using namespace mbbsim;

TEST_CASE("droop frequency is exact at the nominal operating point") {
  GridFormingState s;
  s.droop_hz_per_kw = 2.597e-4;
  s.p_nominal_kw = 500.0;
  CHECK(droop_frequency_hz(s, 500.0) == doctest::Approx(60.0).epsilon(1e-12));

  s.p_nominal_kw = 0.0;
  CHECK(droop_frequency_hz(s, 0.0) == doctest::Approx(60.0).epsilon(1e-12));
}

TEST_CASE("case-C droop calibration: 3465 kW above baseline lands at 59.1 Hz") {
  GridFormingState s;
  s.droop_hz_per_kw = 2.597e-4;
  s.p_nominal_kw = 0.0;
  const double f = droop_frequency_hz(s, 3465.0);
  CHECK(f == doctest::Approx(60.0 - 2.597e-4 * 3465.0).epsilon(1e-12));
  CHECK(std::abs(f - 59.1) < 1e-3);
}

TEST_CASE("filtered frequency settles onto the droop equation") {
  GridFormingState s;
  s.droop_hz_per_kw = 2.597e-4;
  s.p_nominal_kw = 0.0;
  s.freq_filter_tau_s = 0.2;
  s.rating_kva = 5000.0;
  const double p = 1200.0;
  for (int i = 0; i < 20000; ++i) s = grid_forming_step(s, p, 0.001);
  CHECK(std::abs(s.frequency_hz - droop_frequency_hz(s, p)) < 1e-6);
}

TEST_CASE("droop trajectory is invariant under power/gain rescaling") {
  const double k = 7.5;
  GridFormingState a;
  a.droop_hz_per_kw = 4e-4;
  a.rating_kva = 1e9;
  GridFormingState b = a;
  b.droop_hz_per_kw = a.droop_hz_per_kw / k;

  const std::vector<double> powers = {100.0, 400.0, -250.0, 900.0, 0.0, 1500.0};
  for (double p : powers) {
    for (int i = 0; i < 100; ++i) {
      a = grid_forming_step(a, p, 0.002);
      b = grid_forming_step(b, p * k, 0.002);
      CHECK(std::abs(a.frequency_hz - b.frequency_hz) < 1e-9);
    }
  }
}

TEST_CASE("grid-forming step flags and clamps beyond-rating power") {
  GridFormingState s;
  s.droop_hz_per_kw = 1e-3;
  s.rating_kva = 1000.0;
  s.freq_filter_tau_s = 1e-9;  // effectively unfiltered
  s = grid_forming_step(s, 2500.0, 0.001);
  CHECK(s.rating_exceeded);
  // droop sees the clamped power
  CHECK(s.frequency_hz == doctest::Approx(60.0 - 1e-3 * 1000.0).epsilon(1e-9));
}

TEST_CASE("grid-forming energy counter integrates the measured power") {
  GridFormingState s;
  s.rating_kva = 5000.0;
  s.energy_kwh = 1500.0;
  for (int i = 0; i < 3600; ++i) s = grid_forming_step(s, 1000.0, 1.0);
  CHECK(s.energy_kwh == doctest::Approx(1500.0 - 1000.0).epsilon(1e-9));
}

TEST_CASE("dt must be positive") {
  GridFormingState g;
  CHECK_THROWS_AS(grid_forming_step(g, 0.0, 0.0), ValidationError);
  GridFollowingState f;
  CHECK_THROWS_AS(grid_following_step(f, -0.1), ValidationError);
}

TEST_CASE("grid-following analytic first-order response") {
  GridFollowingState s;
  s.p_setpoint_kw = 500.0;
  s.response_tau_s = 0.1;
  s.rating_kva = 10000.0;
  s = grid_following_step(s, 0.1);  // one step of dt = tau
  CHECK(s.p_kw == doctest::Approx(500.0 * (1.0 - std::exp(-1.0))).epsilon(1e-12));
  CHECK(std::abs(s.p_kw - 316.06) < 0.01);
}

TEST_CASE("grid-following matches a fine-step reference to 1e-4 relative") {
  GridFollowingState coarse;
  coarse.p_setpoint_kw = 800.0;
  coarse.q_setpoint_kvar = -200.0;
  coarse.response_tau_s = 0.05;
  coarse.rating_kva = 10000.0;
  GridFollowingState fine = coarse;

  for (int i = 0; i < 100; ++i) {
    coarse = grid_following_step(coarse, 0.01);
    for (int j = 0; j < 100; ++j) fine = grid_following_step(fine, 0.0001);
  }
  CHECK(std::abs(coarse.p_kw - fine.p_kw) / 800.0 < 1e-4);
  CHECK(std::abs(coarse.q_kvar - fine.q_kvar) / 200.0 < 1e-4);
}

TEST_CASE("setpoint equal to actual is a fixed point") {
  GridFollowingState s;
  s.p_setpoint_kw = 250.0;
  s.p_kw = 250.0;
  s.q_setpoint_kvar = 50.0;
  s.q_kvar = 50.0;
  s.rating_kva = 1000.0;
  const GridFollowingState next = grid_following_step(s, 0.01);
  CHECK(next.p_kw == doctest::Approx(250.0).epsilon(1e-12));
  CHECK(next.q_kvar == doctest::Approx(50.0).epsilon(1e-12));
  CHECK(!next.saturated);
}

TEST_CASE("output saturates onto the rating circle") {
  GridFollowingState s;
  s.p_setpoint_kw = 3000.0;
  s.q_setpoint_kvar = 2000.0;
  s.response_tau_s = 0.01;
  s.rating_kva = 3500.0;
  for (int i = 0; i < 1000; ++i) s = grid_following_step(s, 0.01);
  CHECK(s.saturated);
  CHECK(std::hypot(s.p_kw, s.q_kvar) == doctest::Approx(3500.0).epsilon(1e-9));
  // direction preserved
  CHECK(s.p_kw / s.q_kvar == doctest::Approx(1.5).epsilon(1e-9));
}

TEST_CASE("v2g dispatch validates the rating") {
  GridFollowingState s;
  s.rating_kva = 500.0;
  s = v2g_dispatch(50.0, s);
  CHECK(s.p_setpoint_kw == 50.0);
  s = v2g_dispatch(0.0, s);
  CHECK(s.p_setpoint_kw == 0.0);
  CHECK_THROWS_AS(v2g_dispatch(600.0, s), RatingExceededError);
}

TEST_CASE("balanced terminal powers hold the DC link at nominal") {
  BtbState s;
  for (int i = 0; i < 5000; ++i) s = btb_step(s, 200.0, 200.0, 60.0, 0.001);
  CHECK(s.vdc_v == doctest::Approx(8000.0).epsilon(1e-12));
  CHECK(!s.dc_fault);
}

TEST_CASE("capacitor energy balance gives 125 V/s at 100 kW imbalance") {
  BtbState s;  // 0.1 F at 8000 V
  const double dt = 1e-6;
  s = btb_step(s, 100.0, 0.0, 60.0, dt);
  const double dv_dt = (s.vdc_v - 8000.0) / dt;
  CHECK(dv_dt == doctest::Approx(100000.0 / (0.1 * 8000.0)).epsilon(1e-4));
}

TEST_CASE("fixed-transfer steps track and the DC link recovers") {
  BtbState s;
  const double dt = 0.001;
  double energy_check_v0 = s.vdc_v;
  double gross_transfer_j = 0.0;

  auto run_until = [&](double t0, double t1) {
    for (double t = t0; t < t1 - dt / 2; t += dt) {
      gross_transfer_j += std::abs(s.converter2.p_kw) * 1000.0 * dt;
      s = btb_step(s, -s.converter1.p_kw, s.converter2.p_kw, 60.0, dt);
    }
  };

  struct Phase {
    double t0, t1, setpoint;
  };
  const Phase phases[] = {{0.0, 4.0, 0.0}, {4.0, 6.0, 50.0}, {6.0, 8.0, 100.0},
                          {8.0, 10.0, 200.0}};
  for (const Phase& ph : phases) {
    s.p_transfer_setpoint_kw = ph.setpoint;
    run_until(ph.t0, ph.t0 + 0.5);
    // settled within half a second
    CHECK(std::abs(s.converter2.p_kw - ph.setpoint) <= 0.01 * std::max(ph.setpoint, 1.0));
    run_until(ph.t0 + 0.5, ph.t1);
    CHECK(std::abs(s.vdc_pu() - 1.0) < 0.01);
    CHECK(std::abs(-s.converter1.p_kw - ph.setpoint) <= 0.01 * std::max(ph.setpoint, 1.0) + 0.5);
  }

  // Capacitor energy bookkeeping: stored-energy change equals the
  // accumulated terminal input to within 1e-6 of the gross transfer.
  const double w_cap = 0.5 * s.capacitance_f * (s.vdc_v * s.vdc_v - energy_check_v0 * energy_check_v0);
  CHECK(std::abs(w_cap - s.energy_in_j) < 1e-6 * gross_transfer_j);
}

TEST_CASE("frequency support engages below the threshold only") {
  BtbState s;
  s.mode = BtbMode::frequency_support;
  s.k_f_kw_per_hz = 1000.0;
  s.support_threshold_hz = 59.2;

  for (int i = 0; i < 2000; ++i) {
    s = btb_step(s, -s.converter1.p_kw, s.converter2.p_kw, 59.5, 0.001);
  }
  CHECK(s.converter1.p_kw == doctest::Approx(0.0).epsilon(1e-9));

  for (int i = 0; i < 4000; ++i) {
    s = btb_step(s, -s.converter1.p_kw, s.converter2.p_kw, 59.0, 0.001);
  }
  CHECK(s.converter1.p_kw == doctest::Approx(1000.0 * 0.2).epsilon(0.01));
  CHECK(std::abs(s.vdc_pu() - 1.0) < 0.01);
}

TEST_CASE("DC-link voltage outside the band raises a fault") {
  BtbState s;
  s.dc_kp_kw_per_v = 0.0;
  s.dc_ki_kw_per_vs = 0.0;
  // Sustained one-sided discharge with the regulator disabled.
  for (int i = 0; i < 20000 && !s.dc_fault; ++i) {
    s = btb_step(s, 0.0, 500.0, 60.0, 0.001);
  }
  CHECK(s.dc_fault);
  CHECK(s.fault_kind == "undervoltage");
}

TEST_CASE("pv output respects availability and rating") {
  PvState s;
  s.rating_kw = 1600.0;
  s.available_kw = 1000.0;
  s.inverter.response_tau_s = 0.01;
  s.inverter.rating_kva = 1600.0;
  for (int i = 0; i < 2000; ++i) s = pv_step(s, 0.001);
  CHECK(s.inverter.p_kw == doctest::Approx(1000.0).epsilon(1e-6));

  s.available_kw = 2500.0;
  for (int i = 0; i < 2000; ++i) s = pv_step(s, 0.001);
  CHECK(s.inverter.p_kw == doctest::Approx(1600.0).epsilon(1e-6));
}

TEST_CASE("diesel governor tracks its dispatch within the rating") {
  DieselState s;
  s.rating_kva = 3000.0;
  s.governor_tau_s = 0.5;
  s.p_setpoint_kw = 1800.0;
  s = diesel_step(s, 0.5);
  CHECK(s.p_out_kw == doctest::Approx(1800.0 * (1.0 - std::exp(-1.0))).epsilon(1e-12));
  for (int i = 0; i < 10000; ++i) s = diesel_step(s, 0.01);
  CHECK(s.p_out_kw == doctest::Approx(1800.0).epsilon(1e-9));

  s.p_setpoint_kw = 5000.0;  // beyond rating
  for (int i = 0; i < 10000; ++i) s = diesel_step(s, 0.01);
  CHECK(s.p_out_kw == doctest::Approx(3000.0).epsilon(1e-9));
}
