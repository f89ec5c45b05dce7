#include <cmath>
#include <random>

#include "doctest.h"
#include "setctl/expr.hpp"

using namespace setctl;

namespace {
const Expr x = Expr::var(0);
const Expr y = Expr::var(1);
}  // namespace

TEST_CASE("natural interval extension") {
  CHECK((x - x).eval(IntervalVector{Interval(0, 1)}) == Interval(-1, 1));
  CHECK(sqr(x).eval(IntervalVector{Interval(-1, 2)}) == Interval(0, 4));
  const Interval e0 = exp(x).eval(IntervalVector{Interval(0)});
  CHECK(e0.contains(1.0));
  CHECK(e0.width() <= std::nextafter(1.0, 2.0) - 1.0);
  CHECK_THROWS_AS(log(x).eval(IntervalVector{Interval(-1, 1)}), DomainError);
  CHECK_THROWS_AS((Expr(1.0) / x).eval(IntervalVector{Interval(-1, 1)}), DomainError);
  CHECK_THROWS_AS(y.eval(IntervalVector{Interval(0)}), DimensionError);
}

TEST_CASE("point evaluation and sign convention") {
  CHECK(sign(x).eval(std::vector<double>{0.0}) == 0.0);
  CHECK(sign(x).eval(std::vector<double>{-2.0}) == -1.0);
  CHECK((x * y + exp(x)).eval(std::vector<double>{0.0, 3.0}) == 1.0);
}

TEST_CASE("symbolic derivatives against central differences") {
  const Expr f = x * exp(-y * x) + sqr(x) / (Expr(1.0) + sqr(y)) + pow(x, 3) - log(Expr(2.0) + sqr(x));
  std::mt19937_64 g(5);
  std::uniform_real_distribution<double> d(-1.5, 1.5);
  for (int k = 0; k < 200; ++k) {
    const std::vector<double> p{d(g), d(g)};
    for (int i = 0; i < 2; ++i) {
      const double h = 1e-6;
      auto q = p, r = p;
      q[i] += h;
      r[i] -= h;
      const double fd = (f.eval(q) - f.eval(r)) / (2 * h);
      CHECK(f.diff(i).eval(p) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
  CHECK(sign(y).diff(0).is_zero());
  CHECK_THROWS(sign(x).diff(0));
  CHECK(abs(x).diff(0).eval(std::vector<double>{-3.0}) == -1.0);
}

TEST_CASE("substitution and parsing") {
  const Expr e = parse_expr("-p*x + [0.5, 1.5]*u^2 - exp(-x)/2", {"x", "u", "p"});
  const std::vector<double> env{1.0, 2.0, 0.4};
  CHECK(e.eval(env) == doctest::Approx(-0.4 + 4.0 - std::exp(-1.0) / 2));
  const Interval iv = e.eval(IntervalVector{Interval(1), Interval(2), Interval(0.4)});
  CHECK(iv.contains(-0.4 + 2.0 - std::exp(-1.0) / 2));
  CHECK(iv.contains(-0.4 + 6.0 - std::exp(-1.0) / 2));
  const Expr s = e.substitute({Expr::var(0), Expr(2.0), Expr::var(0)});
  CHECK(s.max_var() == 0);
  CHECK(parse_expr("-x^2", {"x"}).eval(std::vector<double>{3.0}) == -9.0);
  CHECK(parse_expr("x^-1", {"x"}).eval(std::vector<double>{4.0}) == 0.25);
  CHECK(parse_expr("pow(x, 3) + ln(x) + sign(x) + abs(x) + sqr(x)", {"x"}).eval(std::vector<double>{1.0}) == 4.0);
  CHECK_THROWS_AS(parse_expr("x + z", {"x"}), ParseError);
  CHECK_THROWS_AS(parse_expr("x ^ 0.5", {"x"}), ParseError);
  CHECK_THROWS_AS(parse_expr("(x", {"x"}), ParseError);
  CHECK_THROWS_AS(parse_expr("foo(x)", {"x"}), ParseError);
  CHECK_THROWS_AS(parse_expr("x x", {"x"}), ParseError);
}

TEST_CASE("hc4 examples") {
  IntervalVector b = hc4_contract(x + y, Interval(3), IntervalVector{Interval(0, 2), Interval(0, 2)});
  CHECK(b[0] == Interval(1, 2));
  CHECK(b[1] == Interval(1, 2));

  b = hc4_contract(x - x, Interval(0), IntervalVector{Interval(0, 1)});
  CHECK(b[0] == Interval(0, 1));

  b = hc4_contract(sqr(x), Interval(4), IntervalVector{Interval(0, 10)});
  CHECK(b[0].contains(2.0));
  CHECK(b[0].width() <= 2 * (std::nextafter(2.0, 3.0) - 2.0));

  b = hc4_contract(sqr(x), Interval(4), IntervalVector{Interval(-10, 10)});
  CHECK(b[0] == Interval(-2, 2));

  b = hc4_contract(exp(x), Interval(-2, -1), IntervalVector{Interval(-5, 5)});
  CHECK(b.is_empty());

  b = hc4_contract(log(x), Interval(0, 1), IntervalVector{Interval(-5, 5)});
  CHECK(b[0].lo() == 1.0);
  CHECK(b[0].contains(M_E));
  CHECK(b[0].hi() < 2.7183);

  b = hc4_contract(x * y, Interval(2), IntervalVector{Interval(1, 4), Interval(1, 1)});
  CHECK(b[0] == Interval(2));

  b = hc4_contract(pow(x, 3), Interval(8), IntervalVector{Interval(-10, 10)});
  CHECK(b[0].contains(2.0));
  CHECK(b[0].width() < 1e-14);

  b = hc4_contract(x / y, Interval(2), IntervalVector{Interval(0, 10), Interval(1, 2)});
  CHECK(b[0] == Interval(2, 4));

  b = hc4_contract(sign(x), Interval(1), IntervalVector{Interval(-5, 5)});
  CHECK(b[0] == Interval(0, 5));
}

TEST_CASE("property: hc4 never removes a solution") {
  // constraint: x*exp(y) - sqr(x) + y/(x^2+1) in [t-0.1, t+0.1] at a sampled point
  const Expr c = x * exp(y) - sqr(x) + y / (sqr(x) + Expr(1.0)) - abs(y) * pow(x, 3);
  std::mt19937_64 g(2024);
  std::uniform_real_distribution<double> d(-2, 2);
  int lost = 0;
  for (int k = 0; k < 2000; ++k) {
    double a = d(g), b2 = d(g), c1 = d(g), c2 = d(g);
    if (a > b2) std::swap(a, b2);
    if (c1 > c2) std::swap(c1, c2);
    const IntervalVector box{Interval(a, b2), Interval(c1, c2)};
    std::uniform_real_distribution<double> px(a, b2), py(c1, c2);
    const double t = c.eval(std::vector<double>{px(g), py(g)});
    const Interval target(t - 0.1, t + 0.1);
    const IntervalVector out = hc4_contract(c, target, box);
    REQUIRE(out.subset_of(box));
    for (int s = 0; s < 50; ++s) {
      const std::vector<double> p{px(g), py(g)};
      if (target.contains(c.eval(p)) && !out.contains(p)) ++lost;
    }
  }
  CHECK(lost == 0);
}
