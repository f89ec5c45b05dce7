#include <cmath>
#include <random>

#include "doctest.h"
#include "setctl/interval_vector.hpp"

using namespace setctl;

namespace {

double ulp_above(double x) { return std::nextafter(x, INFINITY) - x; }

Interval random_interval(std::mt19937_64& g, double scale) {
  std::uniform_real_distribution<double> d(-scale, scale);
  double a = d(g), b = d(g);
  if (a > b) std::swap(a, b);
  return Interval(a, b);
}

double sample(std::mt19937_64& g, const Interval& x) {
  std::uniform_real_distribution<double> d(x.lo(), x.hi());
  // Endpoints are the most likely places for rounding errors to show.
  switch (g() % 8) {
    case 0: return x.lo();
    case 1: return x.hi();
    default: return x.is_degenerate() ? x.lo() : d(g);
  }
}

}  // namespace

TEST_CASE("interval arithmetic examples") {
  CHECK(Interval(0, 1) - Interval(0, 1) == Interval(-1, 1));
  CHECK(Interval(1, 2) + Interval(3, 4) == Interval(4, 6));
  CHECK_THROWS_AS(Interval(1, 2) / Interval(-1, 1), DomainError);
  CHECK_THROWS_AS(Interval(2, 1), std::invalid_argument);
  CHECK_THROWS_AS(Interval(NAN, 1), std::invalid_argument);
}

TEST_CASE("inexact results are widened by at most one ulp") {
  const Interval third = Interval(1.0) / Interval(3.0);
  CHECK(third.lo() <= 1.0L / 3.0L);
  CHECK(third.hi() >= 1.0L / 3.0L);
  CHECK(third.hi() > third.lo());
  CHECK(third.hi() == std::nextafter(third.lo(), INFINITY));
  const Interval s = Interval(0.1) + Interval(0.2);
  CHECK(s.lo() <= 0.30000000000000004);
  CHECK(s.hi() - s.lo() <= ulp_above(s.lo()));
}

TEST_CASE("intersection, hull, width, mid, bisect") {
  CHECK(intersect(Interval(0, 2), Interval(1, 3)) == Interval(1, 2));
  CHECK(intersect(Interval(0, 1), Interval(0, 1)) == Interval(0, 1));
  CHECK(intersect(Interval(0, 1), Interval(2, 3)).is_empty());
  CHECK(hull(Interval(0, 1), Interval(2, 3)) == Interval(0, 3));
  CHECK(hull(Interval::empty(), Interval(2, 3)) == Interval(2, 3));
  CHECK(width(Interval(-1, 1)) == 2.0);
  CHECK(mid(Interval(1, 3)) == 2.0);
  auto [l, r] = bisect(Interval(0, 4), 0.5);
  CHECK(l == Interval(0, 2));
  CHECK(r == Interval(2, 4));
  CHECK_THROWS(bisect(Interval(1, 1)));
  CHECK_THROWS(bisect(Interval(0, 1), 1.0));
  CHECK(Interval::empty() + Interval(1) == Interval::empty());
}

TEST_CASE("sign of intervals") {
  CHECK(sign(Interval(2, 3)) == Interval(1));
  CHECK(sign(Interval(-3, -2)) == Interval(-1));
  CHECK(sign(Interval(-1, 1)) == Interval(-1, 1));
  CHECK(sign(Interval(0, 0)) == Interval(0));
  CHECK(sign(Interval(0, 2)) == Interval(0, 1));
  CHECK(sign(Interval(-2, 0)) == Interval(-1, 0));
}

TEST_CASE("elementary functions") {
  CHECK(sqr(Interval(-1, 2)) == Interval(0, 4));
  CHECK(sqr(Interval(-3, -2)) == Interval(4, 9));
  CHECK(exp(Interval(0)) == Interval(1));
  CHECK(log(Interval(1)) == Interval(0));
  CHECK(exp(Interval(1)).contains(M_E));
  CHECK(exp(Interval(1)).width() <= 2 * ulp_above(M_E));
  CHECK_THROWS_AS(log(Interval(0, 1)), DomainError);
  CHECK(pow(Interval(-2, 1), 3) == Interval(-8, 1));
  CHECK(pow(Interval(-2, 1), 2) == Interval(0, 4));
  CHECK(pow(Interval(2), -1) == Interval(0.5));
  CHECK(abs(Interval(-3, 1)) == Interval(0, 3));
  CHECK(sqrt(Interval(4, 9)) == Interval(2, 3));
}

TEST_CASE("matrix-vector products") {
  const double s = 1 / std::sqrt(2.0);
  IntervalMatrix A{{s, s}, {-s, s}};
  IntervalVector x{Interval(-1, 1), Interval(-1, 1)};
  const IntervalVector y = A * x;
  for (const auto& yi : y) {
    CHECK(yi.lo() == doctest::Approx(-std::sqrt(2.0)).epsilon(1e-15));
    CHECK(yi.hi() == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  }
  CHECK(IntervalMatrix::identity(2) * x == x);
  IntervalMatrix P{{0, 1}, {-1, 0}};
  CHECK(P * x == x);
  CHECK_THROWS_AS(mat_vec(IntervalMatrix(2, 3), x), DimensionError);
  CHECK_THROWS_AS(mat_mul(IntervalMatrix(2, 3), IntervalMatrix(2, 3)), DimensionError);
  const IntervalMatrix PP = P * P;
  CHECK(PP(0, 0) == Interval(-1));
  CHECK(PP(0, 1) == Interval(0));
}

TEST_CASE("property: enclosure of point results over random samples") {
  std::mt19937_64 g(12345);
  long violations = 0;
  const int N = 100000;
  for (int k = 0; k < N; ++k) {
    const Interval a = random_interval(g, 10), b = random_interval(g, 10);
    const double x = sample(g, a), y = sample(g, b);
    violations += !(a + b).contains(x + y);
    violations += !(a - b).contains(x - y);
    violations += !(a * b).contains(x * y);
    if (!b.contains_zero()) violations += !(a / b).contains(x / y);
    violations += !sqr(a).contains(x * x);
    violations += !abs(a).contains(std::abs(x));
    violations += !exp(a).contains(std::exp(x));
    violations += !pow(a, 3).contains(x * x * x);
    const Interval pa = abs(a) + Interval(1e-3);
    const double px = sample(g, pa);
    violations += !log(pa).contains(std::log(px));
    violations += !sqrt(pa).contains(std::sqrt(px));
  }
  CHECK(violations == 0);
}

TEST_CASE("property: inclusion monotonicity") {
  std::mt19937_64 g(777);
  int bad = 0;
  for (int k = 0; k < 20000; ++k) {
    const Interval A = random_interval(g, 5), B = random_interval(g, 5);
    double a1 = sample(g, A), a2 = sample(g, A), b1 = sample(g, B), b2 = sample(g, B);
    if (a1 > a2) std::swap(a1, a2);
    if (b1 > b2) std::swap(b1, b2);
    const Interval as(a1, a2), bs(b1, b2);
    bad += !(as + bs).subset_of(A + B);
    bad += !(as - bs).subset_of(A - B);
    bad += !(as * bs).subset_of(A * B);
    if (!B.contains_zero()) bad += !(as / bs).subset_of(A / B);
    bad += !sqr(as).subset_of(sqr(A));
    bad += !exp(as).subset_of(exp(A));
    bad += !sign(as).subset_of(sign(A));
  }
  CHECK(bad == 0);
}

TEST_CASE("property: intersection is idempotent and commutative; sqr is tighter than mul") {
  std::mt19937_64 g(99);
  for (int k = 0; k < 10000; ++k) {
    const Interval a = random_interval(g, 3), b = random_interval(g, 3);
    REQUIRE(intersect(a, a) == a);
    REQUIRE(intersect(a, b) == intersect(b, a));
    REQUIRE(sqr(a).subset_of(a * a));
  }
}
