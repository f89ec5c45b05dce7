#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "setctl/smc.hpp"

using namespace setctl;
using namespace setctl::smc;

namespace {

CanonicalPlant double_integrator(Interval b = Interval(0.8, 1.2)) {
  return {2, Expr(0.0), Expr::var(2), IntervalVector{b}};
}

// pendulum-like: a = -sin-free polynomial drift, b depends on state and parameter
CanonicalPlant nonlinear_plant() {
  const Expr x1 = Expr::var(0), x2 = Expr::var(1), p = Expr::var(2);
  return {2, -p * x1 + Expr(0.1) * pow(x1, 3) - x2, Expr(1.0) + Expr(0.2) * sqr(x1) * p,
          IntervalVector{Interval(0.8, 1.2)}};
}

ControllerConfig config(Variant v) {
  ControllerConfig c;
  c.variant = v;
  c.surface.alpha = {1, 1};
  c.barrier.rho_v = 0.05;
  return c;
}

}  // namespace

TEST_CASE("sliding_values") {
  SurfaceConfig sc;
  sc.alpha = {1, 1};
  auto v = sliding_values({0, 0, 0}, sc);
  CHECK(v.s == 0);
  CHECK(v.s_dot == 0);
  v = sliding_values({0, 1, 0}, sc);
  CHECK(v.s == 1);
  // γ0 = γ1 = 1, α_{-1} = 0, s supplied by the lag state
  v = sliding_values({0.7, 0.3, -0.2}, sc, 0.25);
  CHECK(v.s == 0.25);
  CHECK(v.s_dot == doctest::Approx(0.3 - 0.2 - 0.25));
  sc.alpha_m1 = 2;
  CHECK(sliding_values({0.7, 0.3, -0.2}, sc, 0.25).s_dot == doctest::Approx(2 * 0.7 + 0.3 - 0.2 - 0.25));
  CHECK_THROWS(sliding_values({0, 1}, sc));
}

TEST_CASE("first- and second-order point laws") {
  SurfaceConfig sc;
  sc.alpha = {1, 1};
  GainConfig g;
  CHECK(u_first_order({0, 0, 0}, 0.7, sc, g) == 0.7);
  CHECK(u_first_order({0, 1, 0}, 0.0, sc, g) == -0.5);
  // flipping s flips only the switching term
  const double up = u_first_order({0, 0.4, 0.2}, 0.1, sc, g), dn = u_first_order({0, -0.8, 0.2}, 0.1, sc, g);
  CHECK(up - dn == doctest::Approx(-2 * g.eta_t));

  CHECK(u_second_order({0, 0, 0}, 0, 0, 0.3, sc, g) == 0.3);
  // hand evaluation: s = 1, ṡ = 0, Σ α_{r-1} ξ^(r) = α_0 ξ^(1) = 1
  CHECK(u_second_order({0, 0, 1}, 1, 0, 0.3, sc, g) == doctest::Approx(0.3 + (0 - 1 - 1 - 0)));
  GainConfig g2 = g;
  g2.eta1_t *= 2;
  const double a = u_second_order({0, 0.1, 0.2}, 0.5, 0.4, 0, sc, g);
  const double b = u_second_order({0, 0.1, 0.2}, 0.5, 0.4, 0, sc, g2);
  CHECK(b - a == doctest::Approx(-g.eta1_t));
}

TEST_CASE("barrier rates and barrier laws") {
  BarrierConfig bc;
  bc.rho_v = 1;
  bc.dx1max = 0.5;
  const std::vector<double> ref{0, 0, 0};
  CHECK(barrier_A_rate(0.2, 0, ref, bc) == 0);
  const double near = barrier_A_rate(0.5 - 1e-9, 1.0, ref, bc);
  CHECK(near >= 1.0 * 1.0 * 0.5 / (0.5 * 1e-9) * 0.99);
  CHECK_THROWS_AS(barrier_A_rate(0.5, 1.0, ref, bc), BarrierViolation);
  CHECK_THROWS_AS(barrier_A_rate(0.7, 1.0, ref, bc), BarrierViolation);

  bc.chi_bar = 1;
  bc.l = 1;
  CHECK(barrier_B_rate(0.0, 3.0, ref, bc) == 0);
  CHECK(barrier_B_rate(0.5, 1.0, ref, bc) == doctest::Approx(4.0 / 3.0));
  CHECK(barrier_B_rate(0.999999, 1.0, ref, bc) > 1e5);
  CHECK_THROWS_AS(barrier_B_rate(-1.0, 1.0, ref, bc), BarrierViolation);

  SurfaceConfig sc;
  sc.alpha = {1, 1};
  GainConfig g;
  // s = 0: barrier term vanishes
  CHECK(u_first_order_A({0, 0.1, -0.1}, ref, sc, g, bc) == u_first_order({0, 0.1, -0.1}, 0, sc, g));
  // x1 = 0, ẋ1 = 1 → s = 1, V̇_A = 2
  REQUIRE(barrier_A_rate(0, 1, ref, bc) == doctest::Approx(2.0));
  CHECK(u_first_order_A({0, 0, 1}, ref, sc, g, bc) ==
        doctest::Approx(u_first_order({0, 0, 1}, 0, sc, g) - 2 / (1 + 1e-6)));
  // V̇_B = 0 at the symmetry centre
  CHECK(u_first_order_B({0, 0, 0.3}, ref, sc, g, bc) == u_first_order({0, 0, 0.3}, 0, sc, g));
  CHECK(u_second_order_B({0, 0, 0.3}, 0.2, 0.1, ref, sc, g, bc) == u_second_order({0, 0, 0.3}, 0.2, 0.1, 0, sc, g));
  CHECK(u_second_order_A({0, 0.2, 0}, 0.2, 0, ref, sc, g, bc) == u_second_order({0, 0.2, 0}, 0.2, 0, 0, sc, g));
}

TEST_CASE("Hurwitz check") {
  CHECK_FALSE(is_hurwitz({-1, 1}));
  CHECK(is_hurwitz({1, 1}));
  CHECK(is_hurwitz({1}));
  CHECK(is_hurwitz({2, 3, 1}));
  CHECK_FALSE(is_hurwitz({2, 0, 1}));
  CHECK(is_hurwitz({1, 2, 3, 1}));
  CHECK_FALSE(is_hurwitz({5, 1, 1, 1}));
  SurfaceConfig sc;
  sc.alpha = {-1, 1};
  CHECK_THROWS(sc.validate(2));
  sc.alpha = {1, 1};
  CHECK_NOTHROW(sc.validate(2));
}

TEST_CASE("select_point_control") {
  auto all = [](double) { return Interval(-2, -1); };
  CHECK(select_point_control(Interval(1, 2), all, 0.01) == doctest::Approx(0.99));
  auto only = [](double v) { return std::abs(v - 1.99) < 1e-12 ? Interval(-1, -0.5) : Interval(-1, 1); };
  CHECK(select_point_control(Interval(1, 2), only, 0.01) == doctest::Approx(1.99));
  auto none = [](double) { return Interval(-1, 0); };
  CHECK_THROWS_AS(select_point_control(Interval(1, 2), none, 0.01), StabilizationFailure);
  // equal magnitudes → smaller value
  CHECK(select_point_control(Interval(-1, 1), all, 0.0) == -1);
}

TEST_CASE("interval_control_box: degeneracy, enclosure and controllability") {
  const auto plant = nonlinear_plant();
  std::mt19937_64 g(5);
  std::uniform_real_distribution<double> u(0, 1);
  for (Variant v : {Variant::I, Variant::IA, Variant::IB, Variant::II, Variant::IIA, Variant::IIB}) {
    const auto cfg = config(v);
    const ControllerState st{0.05, 0.02};
    const std::vector<double> ref{0.1, 0.2, -0.1};
    // degenerate boxes
    CanonicalPlant pt = plant;
    pt.p_box = IntervalVector{Interval(1.0)};
    const IntervalVector xp{Interval(0.15), Interval(0.25)};
    const Interval vp = interval_control_box(xp, pt, ref, cfg, st);
    const double law = point_control({0.15, 0.25}, {1.0}, pt, ref, cfg, st);
    CHECK(vp.contains(law));
    CHECK(vp.width() <= 1e-12 * std::max(1.0, std::abs(law)));

    // Monte-Carlo enclosure
    const IntervalVector xb{Interval(0.13, 0.17), Interval(0.22, 0.29)};
    const Interval vb = interval_control_box(xb, plant, ref, cfg, st);
    CHECK(vb.contains(point_control(xb.mid(), plant.p_box.mid(), plant, ref, cfg, st)));
    int outside = 0;
    for (int k = 0; k < 1000; ++k) {
      const std::vector<double> x{xb[0].lo() + u(g) * xb[0].width(), xb[1].lo() + u(g) * xb[1].width()};
      const std::vector<double> p{0.8 + 0.4 * u(g)};
      outside += !vb.contains(point_control(x, p, plant, ref, cfg, st));
    }
    CHECK(outside == 0);
  }
  const auto bad = double_integrator(Interval(-0.1, 0.1));
  CHECK_THROWS_AS(interval_control_box(IntervalVector{Interval(0), Interval(0)}, bad, {0, 0, 0}, config(Variant::I), {}),
                  ControllabilityError);
  CHECK_THROWS_AS(interval_control_box(IntervalVector{Interval(0.25), Interval(0)}, double_integrator(), {0, 0, 0},
                                       config(Variant::IA), {}),
                  BarrierViolation);
}

TEST_CASE("closed loop: certification and barriers on the double integrator") {
  const auto plant = double_integrator();
  ClosedLoopConfig cl;
  cl.p_true = {1.1};
  cl.meas_halfwidth = 1e-9;
  for (Variant v : {Variant::I, Variant::II}) {
    cl.x0 = {0.5, 0.0};
    const auto log = simulate_closed_loop(plant, config(v), Reference::sine(2, 0, 1, 1), cl);
    REQUIRE(log.decisions.size() == 10000);
    int bad = 0;
    for (const auto& d : log.decisions) {
      const double sw = second_order(v) ? d.s_dot : d.s;
      if (std::abs(sw) > 1e-6) bad += !(d.certified && d.vdot_sup < 0);
    }
    CHECK(bad == 0);
    CHECK(std::abs(log.x.back()[0] - std::sin(log.t.back())) < 0.05);
  }

  const Reference refA = Reference::sine(2, 1.0, 0.5, 1.0);
  auto cfgA = config(Variant::IA);
  cl.x0 = {1.1, 1.0};
  const auto la = simulate_closed_loop(plant, cfgA, refA, cl);
  int viol = 0;
  for (std::size_t k = 0; k < la.t.size(); ++k) viol += !(la.x[k][0] < refA.at(la.t[k])[0] + cfgA.barrier.dx1max);
  CHECK(viol == 0);

  const Reference refB = Reference::sine(2, 0, 1, 1);
  auto cfgB = config(Variant::IB);
  cl.x0 = {0.2, 1.5};
  const auto lb = simulate_closed_loop(plant, cfgB, refB, cl);
  viol = 0;
  for (std::size_t k = 0; k < lb.t.size(); ++k) viol += !(std::abs(lb.x[k][0] - refB.at(lb.t[k])[0]) < cfgB.barrier.chi_bar);
  CHECK(viol == 0);

  std::ostringstream os;
  ClosedLoopConfig shortcl = cl;
  shortcl.steps = 2;
  simulate_closed_loop(plant, cfgB, refB, shortcl).write_csv(os);
  CHECK(os.str().rfind("t,x_1,x_2,s,s_dot,u_applied,u_lo,u_hi,certified\n", 0) == 0);
}
