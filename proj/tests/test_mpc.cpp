#include <cmath>
#include <random>

#include "doctest.h"
#include "setctl/mpc.hpp"
#include "setctl/verify/oracles.hpp"

using namespace setctl;
using namespace setctl::mpc;

namespace {

// ẋ = -p x + u
NonlinearSystemModel scalar_model() { return NonlinearSystemModel({-Expr::var(2) * Expr::var(0) + Expr::var(1)}, 1, 1); }

MPCConfig scalar_config() {
  MPCConfig c;
  c.Q = {{1}};
  c.R = {{0.1}};
  c.x_min = {{-1}};
  c.x_max = {{3}};
  c.x_ref = IntervalVector{Interval(-0.1, 0.1)};
  c.u_domain = IntervalVector{Interval(-2, 2)};
  return c;
}

const IntervalVector P{Interval(0.8, 1.2)};

}  // namespace

TEST_CASE("predict_slices") {
  MPCConfig c = scalar_config();
  NonlinearSystemModel zero({Expr(0.0)}, 1, 1);
  const IntervalVector xb{Interval(0.5, 0.7)};
  const auto z = predict_slices(zero, xb, {IntervalVector{Interval(-1, 1)}, IntervalVector{Interval(0, 1)}}, P, c);
  for (const auto& s : z.slices) CHECK(s == xb);

  NonlinearSystemModel lin({-Expr::var(0) + Expr::var(1)}, 1, 0);
  const InputBoxSequence u0(3, IntervalVector{Interval(0.0)});
  const auto pr = predict_slices(lin, IntervalVector{Interval(1.0)}, u0, {}, c);
  REQUIRE(pr.slices.size() == 3);
  for (int j = 0; j < 3; ++j)
    for (int q = 0; q <= 30; ++q) {
      const double t = c.Tc * (j + q / 30.0);
      CHECK(pr.slices[j][0].contains(std::exp(-t)));
    }
  CHECK(pr.ends[2][0].contains(std::exp(-0.9)));

  const InputBoxSequence uw(3, IntervalVector{Interval(-0.1, 0.1)});
  const auto wide = predict_slices(lin, IntervalVector{Interval(1.0)}, uw, {}, c);
  for (int j = 0; j < 3; ++j) {
    CHECK(pr.slices[j].subset_of(wide.slices[j]));
    CHECK(wide.slices[j][0].width() > pr.slices[j][0].width());
  }
}

TEST_CASE("is_safe and the terminal surrogate") {
  MPCConfig c = scalar_config();
  c.x_min = {{-1e6}};
  c.x_max = {{1e6}};
  const IntervalVector x0{Interval(1.0)};
  Prediction p;
  p.slices = {IntervalVector{Interval(0.0, 1.0)}};
  p.ends = {IntervalVector{Interval(-0.05, 0.05)}};
  CHECK(is_safe(p, x0, c));
  c.x_max = {{0.5}};
  c.x_min = {{-0.5}};
  CHECK_FALSE(is_safe(p, IntervalVector{Interval(0.4)}, c));
  c.x_min = {{-1e6}};
  c.x_max = {{1e6}};
  // terminal further from x_r than the start
  p.ends = {IntervalVector{Interval(1.5, 1.7)}};
  CHECK_FALSE(is_safe(p, x0, c));
  // closer but not reaching x_r: only accepted without the hit requirement
  p.ends = {IntervalVector{Interval(0.5, 0.6)}};
  CHECK_FALSE(is_safe(p, x0, c));
  c.require_terminal_hit = false;
  CHECK(is_safe(p, x0, c));
}

TEST_CASE("cost_enclosure") {
  MPCConfig c = scalar_config();
  c.Np = 1;
  c.Tc = 0.1;
  c.Q = {{1}};
  c.R = {{0}};
  c.x_ref = IntervalVector{Interval(0.0)};
  const Interval J = cost_enclosure({IntervalVector{Interval(1, 2)}}, {IntervalVector{Interval(0.5)}}, c);
  CHECK(J.lo() == doctest::Approx(0.1));
  CHECK(J.hi() == doctest::Approx(0.4));
  CHECK(J.lo() <= 0.1);
  CHECK(J.hi() >= 0.4);
  c.Q = {{0}};
  CHECK(cost_enclosure({IntervalVector{Interval(1, 2)}}, {IntervalVector{Interval(-3, 3)}}, c) == Interval(0.0));
  // off-diagonal quadratic form stays sound
  MPCConfig c2 = c;
  c2.Q = {{2, 0.5}, {0.5, 1}};
  c2.R = {{0}};
  c2.x_ref = IntervalVector{Interval(0.0), Interval(0.0)};
  const Interval J2 = cost_enclosure({IntervalVector{Interval(-1, 1), Interval(0, 2)}}, {IntervalVector{Interval(0.0)}}, c2);
  for (double a = -1; a <= 1; a += 0.1)
    for (double b = 0; b <= 2; b += 0.1) CHECK(J2.contains(0.1 * (2 * a * a + a * b + b * b)));
}

TEST_CASE("filter_and_branch: soundness of cost and safety by sampling") {
  const auto model = scalar_model();
  const auto c = scalar_config();
  const IntervalVector x0{Interval(1.999, 2.001)};
  const SearchResult sr = filter_and_branch(model, x0, P, c);
  REQUIRE(!sr.candidates.empty());
  std::mt19937_64 g(21);
  std::uniform_real_distribution<double> U(0, 1);
  int cost_out = 0, unsafe = 0;
  for (const auto& cand : sr.candidates) {
    for (int s = 0; s < 1000; ++s) {
      const double p = 0.8 + 0.4 * U(g);
      double x = x0[0].lo() + U(g) * x0[0].width(), J = 0;
      for (int j = 0; j < c.Np; ++j) {
        const double u = cand.useq[j][0].lo() + U(g) * cand.useq[j][0].width();
        const oracle::Field f = [&](double, const oracle::Vec& z) { return oracle::Vec{-p * z[0] + u}; };
        // composite Simpson on 60 sub-intervals with RK4 states
        const int N = 60;
        const double h = c.Tc / N;
        std::vector<double> xs{x};
        for (int q = 0; q < N; ++q) xs.push_back(oracle::rk4(f, {xs.back()}, 0, h, 2)[0]);
        double acc = 0;
        for (int q = 0; q <= N; ++q) {
          const double w = (q == 0 || q == N) ? 1 : (q % 2 ? 4 : 2);
          acc += w * xs[q] * xs[q];
          unsafe += xs[q] < c.x_min[0][0] || xs[q] > c.x_max[0][0];
        }
        J += acc * h / 3 + c.Tc * 0.1 * u * u;
        x = xs.back();
      }
      cost_out += !cand.J.contains(J);
    }
  }
  CHECK(cost_out == 0);
  CHECK(unsafe == 0);
}

TEST_CASE("filter_and_branch: infeasible horizon, no branching, monotone pruning") {
  const auto model = scalar_model();
  auto c = scalar_config();
  c.x_min = {{1.9}};
  c.x_max = {{2.1}};
  c.x_ref = IntervalVector{Interval(1.95, 2.05)};
  CHECK_THROWS_AS(filter_and_branch(model, IntervalVector{Interval(2.0)}, P, c), InfeasibleHorizon);

  c = scalar_config();
  c.branch_factor = 1;
  const auto one = filter_and_branch(model, IntervalVector{Interval(0.05)}, IntervalVector{Interval(1.0)}, [&] {
    auto cc = c;
    cc.u_domain = IntervalVector{Interval(-0.1, 0.1)};
    return cc;
  }());
  CHECK(one.nodes == c.Np);
  CHECK(one.candidates.size() == 1);

  c = scalar_config();
  c.x_max = {{2.3}};
  const IntervalVector x0{Interval(2.0)};
  const auto sr = filter_and_branch(model, x0, P, c);
  REQUIRE(!sr.pruned.empty());
  for (const auto& pre : sr.pruned) {
    InputBoxSequence full = pre;
    while (static_cast<int>(full.size()) < c.Np) full.push_back(c.u_domain);
    CHECK_FALSE(is_safe(predict_slices(model, x0, full, P, c), x0, c));
  }
}

TEST_CASE("optimize_and_extract") {
  const Candidate a{{IntervalVector{Interval(0, 1)}}, Interval(1, 3)};
  const Candidate b{{IntervalVector{Interval(1, 2)}}, Interval(1.5, 2)};
  const Candidate c{{IntervalVector{Interval(-1, 0)}}, Interval(1.8, 2)};
  auto s = optimize_and_extract({a});
  CHECK(s.u_apply[0] == 0.5);
  s = optimize_and_extract({a, b});
  CHECK(s.u_apply[0] == 1.5);
  s = optimize_and_extract({a, b, c});  // tie on sup: narrower J wins
  CHECK(s.u_apply[0] == -0.5);
  CHECK_THROWS(optimize_and_extract({}));
}

TEST_CASE("mpc_step and the closed loop") {
  const auto model = scalar_model();
  const auto c = scalar_config();
  const IntervalVector x0{Interval(-0.001, 0.001)};
  const auto plain = mpc_step(model, x0, P, c);
  const auto pre = mpc_step(model, x0, P, c, Matrix{{0.7}});
  CHECK(plain.u == pre.u);
  const auto shifted = mpc_step(model, IntervalVector{Interval(1.0)}, P, c, Matrix{{0.5}});
  const auto base = mpc_step(model, IntervalVector{Interval(1.0)}, P, c);
  CHECK(shifted.u[0] == doctest::Approx(base.u[0] - 0.5));

  LoopConfig l;
  l.x0 = {2.0};
  l.p_true = {1.1};
  l.steps = 15;
  l.meas_halfwidth = 1e-3;
  const auto log = run_closed_loop(model, P, c, l);
  CHECK_FALSE(log.any_infeasible);
  CHECK(c.x_ref[0].contains(log.x_final[0]));
  const auto again = run_closed_loop(model, P, c, l);
  REQUIRE(again.rows.size() == log.rows.size());
  for (std::size_t k = 0; k < log.rows.size(); ++k) CHECK(again.rows[k].u == log.rows[k].u);
}

TEST_CASE("MPCConfig validation") {
  auto c = scalar_config();
  c.Q = {{-1}};
  CHECK_THROWS(c.validate(1, 1));
  c = scalar_config();
  c.x_ref = IntervalVector{Interval(2.5, 3.5)};
  CHECK_THROWS(c.validate(1, 1));
  c = scalar_config();
  c.Np = 0;
  CHECK_THROWS(c.validate(1, 1));
}
