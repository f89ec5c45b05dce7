#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "setctl/reach.hpp"
#include "setctl/verify/oracles.hpp"

using namespace setctl;

namespace {

IntervalMatrix scalar(double lo, double hi) { return IntervalMatrix{{Interval(lo, hi)}}; }

}  // namespace

TEST_CASE("metzler_check") {
  CHECK(metzler_check(IntervalMatrix{{-1, 0.5}, {0.2, -2}}));
  CHECK_FALSE(metzler_check(IntervalMatrix{{-1, Interval(-0.1, 0.2)}, {0.2, -2}}));
  CHECK(metzler_check(scalar(5, 6)));
  CHECK_THROWS_AS(metzler_check(IntervalMatrix(2, 3)), DimensionError);
}

TEST_CASE("mueller_step") {
  LinearIntervalSystem sys{scalar(-2, -1), std::nullopt, 0.01};
  const IntervalVector r = mueller_step(sys, IntervalVector{Interval(1, 2)});
  // inf([a]·1) = -2, sup([a]·2) = -2
  CHECK(r[0].lo() == doctest::Approx(0.98).epsilon(1e-15));
  CHECK(r[0].hi() == doctest::Approx(1.98).epsilon(1e-15));
  CHECK(r[0].lo() <= 0.98);
  CHECK(r[0].hi() >= 1.98);

  LinearIntervalSystem zero{scalar(0, 0), std::nullopt, 0.01};
  CHECK(mueller_step(zero, IntervalVector{Interval(1, 2)}) == IntervalVector{Interval(1, 2)});

  LinearIntervalSystem bad{IntervalMatrix{{-1, Interval(-0.1, 0.2)}, {0.2, -2}}, std::nullopt, 0.01};
  CHECK_THROWS_AS(mueller_step(bad, IntervalVector{Interval(1), Interval(1)}), MetzlerViolation);
  CHECK_THROWS(mueller_step(sys, IntervalVector{Interval::empty()}));
}

TEST_CASE("property: point Metzler system reproduces explicit Euler within 2 ulp") {
  std::mt19937_64 g(3);
  std::uniform_real_distribution<double> d(-2, 2), off(0, 1);
  for (int k = 0; k < 1000; ++k) {
    const double a00 = d(g), a01 = off(g), a10 = off(g), a11 = d(g);
    const double x0 = d(g), x1 = d(g), dt = 0.01;
    LinearIntervalSystem sys{IntervalMatrix{{a00, a01}, {a10, a11}}, std::nullopt, dt};
    const IntervalVector r = mueller_step(sys, IntervalVector{Interval(x0), Interval(x1)});
    const double e0 = x0 + dt * (a00 * x0 + a01 * x1);
    const double e1 = x1 + dt * (a10 * x0 + a11 * x1);
    // ULPs measured at the scale of the state (the sum's dominant operand).
    const auto ulps = [](double a, double b, double scale) {
      return std::abs(a - b) / (std::nextafter(scale, INFINITY) - scale);
    };
    const double s0 = std::max(std::abs(x0), std::abs(e0)), s1 = std::max(std::abs(x1), std::abs(e1));
    CHECK(ulps(r[0].lo(), e0, s0) <= 2);
    CHECK(ulps(r[0].hi(), e0, s0) <= 2);
    CHECK(ulps(r[1].lo(), e1, s1) <= 2);
    CHECK(ulps(r[1].hi(), e1, s1) <= 2);
  }
}

TEST_CASE("integrate_bracketing: scalar closed form") {
  LinearIntervalSystem sys{scalar(-2, -1), std::nullopt, 1e-3};
  const BracketTube tube = integrate_bracketing(sys, IntervalVector{Interval(1, 2)}, 1.0);
  REQUIRE(tube.times.size() == 1001);
  CHECK(tube.times.back() == 1.0);
  for (std::size_t k = 0; k < tube.times.size(); ++k) {
    const double t = tube.times[k];
    CHECK(tube.v[k][0] <= std::exp(-2 * t));
    CHECK(tube.w[k][0] >= 2 * std::exp(-t));
  }
  const double width_exact = 2 * std::exp(-1.0) - std::exp(-2.0);
  CHECK((std::exp(-2.0) - tube.v.back()[0]) / width_exact <= 0.05);
  CHECK((tube.w.back()[0] - 2 * std::exp(-1.0)) / width_exact <= 0.05);

  const BracketTube zero = integrate_bracketing(sys, IntervalVector{Interval(1, 2)}, 0.0);
  CHECK(zero.times.size() == 1);
  CHECK(zero.box(0) == IntervalVector{Interval(1, 2)});

  std::ostringstream os;
  zero.write_csv(os);
  CHECK(os.str() == "t,v_1,w_1\n0,1,2\n");
}

TEST_CASE("integrate_bracketing: inclusion monotone in the initial box") {
  LinearIntervalSystem sys{IntervalMatrix{{Interval(-1.2, -0.8), Interval(0.1, 0.3)}, {Interval(0.2, 0.4), Interval(-2.3, -1.7)}},
                           std::nullopt, 1e-2};
  const BracketTube small = integrate_bracketing(sys, IntervalVector{Interval(0.5, 1), Interval(-1, 0)}, 2.0);
  const BracketTube big = integrate_bracketing(sys, IntervalVector{Interval(0.4, 1.1), Interval(-1.2, 0)}, 2.0);
  for (std::size_t k = 0; k < small.times.size(); ++k) CHECK(small.box(k).subset_of(big.box(k)));
}

TEST_CASE("integrate_bracketing: 2-state containment of vertex trajectories") {
  const Interval a00(-1.2, -0.8), a01(0.1, 0.3), a10(0.2, 0.4), a11(-2.3, -1.7);
  LinearIntervalSystem sys{IntervalMatrix{{a00, a01}, {a10, a11}}, IntervalVector{Interval(0.5), Interval(0.0)}, 1e-2};
  const IntervalVector x0{Interval(0.5, 1), Interval(-1, 0)};
  const Interval u(-0.2, 0.3);
  const BracketTube tube = integrate_bracketing(sys, x0, 3.0, u);
  std::mt19937_64 g(11);
  int outside = 0;
  for (int s = 0; s < 200; ++s) {
    const auto pick = [&](const Interval& i) { return (g() & 1) ? i.lo() : i.hi(); };
    const double A00 = pick(a00), A01 = pick(a01), A10 = pick(a10), A11 = pick(a11), U = pick(u);
    const auto x = oracle::sample_box(g, x0.lo(), x0.hi(), 0.3);
    const oracle::Field f = [&](double, const oracle::Vec& z) {
      return oracle::Vec{A00 * z[0] + A01 * z[1] + 0.5 * U, A10 * z[0] + A11 * z[1]};
    };
    const auto traj = oracle::rk4_trajectory(f, x, tube.times, 4);
    for (std::size_t k = 0; k < traj.size(); ++k) outside += !tube.box(k).contains(traj[k]);
  }
  CHECK(outside == 0);
}

TEST_CASE("validated_euler_step") {
  const Expr x = Expr::var(0);
  NonlinearSystemModel zero({Expr(0.0)}, 0, 0);
  const IntervalVector box{Interval(1, 2)};
  CHECK(validated_euler_step(zero, box, {}, {}, 0.1) == box);

  NonlinearSystemModel decay({-x}, 0, 0);
  const IntervalVector r = validated_euler_step(decay, IntervalVector{Interval(1)}, {}, {}, 0.001);
  CHECK(r[0].contains(std::exp(-0.001)));
  CHECK(r[0].width() < 1e-6);

  NonlinearSystemModel growth({x}, 0, 0);
  CHECK_THROWS_AS(validated_euler_step(growth, IntervalVector{Interval(1)}, {}, {}, 2.0), StepRejected);
}

TEST_CASE("property: validated step contains sampled flows and the Euler image") {
  // Damped pendulum with uncertain damping and input
  const Expr x1 = Expr::var(0), x2 = Expr::var(1), u = Expr::var(2), p = Expr::var(3);
  NonlinearSystemModel pend({x2, -Expr(4.0) * (x1 - pow(x1, 3) / Expr(6.0)) - p * x2 + u}, 1, 1);
  const IntervalVector U{Interval(-0.1, 0.1)}, P{Interval(0.2, 0.4)};
  IntervalVector X{Interval(0.9, 1.0), Interval(-0.1, 0.0)};
  const double dt = 0.01;
  std::vector<double> times{0};
  std::vector<IntervalVector> boxes{X};
  for (int k = 0; k < 100; ++k) {
    const ValidatedStep s = validated_step(pend, X, U, P, dt);
    // sanity lower bound: Euler images of corner points
    for (double a : {X[0].lo(), X[0].hi()})
      for (double b : {X[1].lo(), X[1].hi()}) {
        const auto fx = pend.eval(std::vector<double>{a, b}, {0.0}, {0.3});
        CHECK(s.end.contains({a + dt * fx[0], b + dt * fx[1]}));
      }
    X = s.end;
    times.push_back(dt * (k + 1));
    boxes.push_back(X);
  }
  std::mt19937_64 g(8);
  int outside = 0;
  for (int s = 0; s < 200; ++s) {
    const auto x0 = oracle::sample_box(g, boxes[0].lo(), boxes[0].hi(), 0.3);
    const auto pu = oracle::sample_box(g, {U[0].lo(), P[0].lo()}, {U[0].hi(), P[0].hi()}, 0.5);
    const oracle::Field f = [&](double, const oracle::Vec& z) {
      return oracle::Vec{z[1], -4.0 * (z[0] - z[0] * z[0] * z[0] / 6) - pu[1] * z[1] + pu[0]};
    };
    const auto traj = oracle::rk4_trajectory(f, x0, times, 4);
    for (std::size_t k = 0; k < traj.size(); ++k) outside += !boxes[k].contains(traj[k]);
  }
  CHECK(outside == 0);
}

TEST_CASE("propagate lands on the end time and halves rejected steps") {
  const Expr x = Expr::var(0);
  NonlinearSystemModel growth({x}, 0, 0);
  IntervalVector sweep;
  const IntervalVector r = propagate(growth, IntervalVector{Interval(1)}, {}, {}, 0.0, 1.0, 2.0, &sweep);
  CHECK(r[0].contains(std::exp(1.0)));
  CHECK(sweep[0].contains(1.0));
  CHECK(sweep[0].contains(std::exp(1.0)));
}

TEST_CASE("wrapping effect") {
  for (int k = 0; k <= 10; k += 2) {
    const IntervalVector x = wrapping_naive(k);
    const double expect = std::pow(2.0, k / 2.0);
    CHECK(x[0].hi() == doctest::Approx(expect).epsilon(1e-12));
    CHECK(x[1].lo() == doctest::Approx(-expect).epsilon(1e-12));
  }
  CHECK(wrapping_naive(0) == IntervalVector{Interval(-1, 1), Interval(-1, 1)});
  CHECK(wrapping_power(0) == IntervalVector{Interval(-1, 1), Interval(-1, 1)});
  const IntervalVector p8 = wrapping_power(8);
  CHECK(p8[0].width() == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(p8[1].width() == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(wrapping_naive(8)[0].width() == doctest::Approx(32.0).epsilon(1e-9));
  CHECK_THROWS(wrapping_naive(-1));
}
