#pragma once

#include <algorithm>
#include <cmath>
#include <iosfwd>
#include <limits>

#include "setctl/errors.hpp"

namespace setctl {

// Directed rounding without touching the FPU mode: every operation computes
// the round-to-nearest result, recovers the rounding error with an
// error-free transformation, and steps one ULP outward only when the
// result was inexact.
namespace rnd {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kMax = std::numeric_limits<double>::max();
// Below this magnitude FMA residuals may themselves be rounded, so we
// stop trusting them and widen unconditionally.
inline constexpr double kTiny = 0x1p-960;

inline double down(double x) { return std::nextafter(x, -kInf); }
inline double up(double x) { return std::nextafter(x, kInf); }

inline double overflow_down(double r) { return r == kInf ? kMax : r; }
inline double overflow_up(double r) { return r == -kInf ? -kMax : r; }

inline double add_down(double a, double b) {
  const double s = a + b;
  if (!std::isfinite(s)) {
    return (std::isfinite(a) && std::isfinite(b)) ? overflow_down(s) : s;
  }
  const double bb = s - a;
  const double err = (a - (s - bb)) + (b - bb);
  return err < 0 ? down(s) : s;
}

inline double add_up(double a, double b) {
  const double s = a + b;
  if (!std::isfinite(s)) {
    return (std::isfinite(a) && std::isfinite(b)) ? overflow_up(s) : s;
  }
  const double bb = s - a;
  const double err = (a - (s - bb)) + (b - bb);
  return err > 0 ? up(s) : s;
}

inline double sub_down(double a, double b) { return add_down(a, -b); }
inline double sub_up(double a, double b) { return add_up(a, -b); }

// 0 * inf is taken as 0: interval bounds at infinity stand for unbounded
// sets, and the product with an exact zero factor is zero.
inline double mul_down(double a, double b) {
  if (a == 0 || b == 0) return 0.0;
  const double p = a * b;
  if (!std::isfinite(p)) {
    return (std::isfinite(a) && std::isfinite(b)) ? overflow_down(p) : p;
  }
  if (std::abs(p) < kTiny) return down(p);
  return std::fma(a, b, -p) < 0 ? down(p) : p;
}

inline double mul_up(double a, double b) {
  if (a == 0 || b == 0) return 0.0;
  const double p = a * b;
  if (!std::isfinite(p)) {
    return (std::isfinite(a) && std::isfinite(b)) ? overflow_up(p) : p;
  }
  if (std::abs(p) < kTiny) return up(p);
  return std::fma(a, b, -p) > 0 ? up(p) : p;
}

// Sign of (a/b - fl(a/b)); b != 0 and the quotient finite and not tiny.
inline int div_err_sign(double a, double b, double q) {
  const double r = std::fma(-q, b, a);
  if (r == 0) return 0;
  return ((r > 0) == (b > 0)) ? 1 : -1;
}

inline double div_down(double a, double b) {
  if (a == 0) return 0.0;
  const double q = a / b;
  if (!std::isfinite(q)) {
    return (std::isfinite(a) && std::isfinite(b)) ? overflow_down(q) : q;
  }
  if (std::isinf(a) || std::isinf(b)) return q;
  if (std::abs(q) < kTiny) return down(q);
  return div_err_sign(a, b, q) < 0 ? down(q) : q;
}

inline double div_up(double a, double b) {
  if (a == 0) return 0.0;
  const double q = a / b;
  if (!std::isfinite(q)) {
    return (std::isfinite(a) && std::isfinite(b)) ? overflow_up(q) : q;
  }
  if (std::isinf(a) || std::isinf(b)) return q;
  if (std::abs(q) < kTiny) return up(q);
  return div_err_sign(a, b, q) > 0 ? up(q) : q;
}

// x >= 0
inline double sqrt_down(double x) {
  if (x == 0 || std::isinf(x)) return std::sqrt(x);
  const double s = std::sqrt(x);
  if (x < kTiny) return down(s);
  return std::fma(-s, s, x) < 0 ? down(s) : s;
}

inline double sqrt_up(double x) {
  if (x == 0 || std::isinf(x)) return std::sqrt(x);
  const double s = std::sqrt(x);
  if (x < kTiny) return up(s);
  return std::fma(-s, s, x) > 0 ? up(s) : s;
}

// libm exp/log are faithful (< 1 ULP), so one step outward suffices.
inline double exp_down(double x) {
  if (x == 0) return 1.0;
  if (x == -kInf) return 0.0;
  return std::max(0.0, down(std::exp(x)));
}

inline double exp_up(double x) {
  if (x == 0) return 1.0;
  if (x == kInf) return kInf;
  return up(std::exp(x));
}

// x > 0
inline double log_down(double x) {
  if (x == 1) return 0.0;
  if (x == kInf) return kInf;
  return down(std::log(x));
}

inline double log_up(double x) {
  if (x == 1) return 0.0;
  if (x == kInf) return kInf;
  return up(std::log(x));
}

// x >= 0, n >= 0: x^n rounded down/up by repeated multiplication (all
// partial products are nonnegative, so monotone in each factor).
inline double pow_down(double x, int n) {
  double r = 1.0;
  for (int i = 0; i < n; ++i) r = mul_down(r, x);
  return r;
}

inline double pow_up(double x, int n) {
  double r = 1.0;
  for (int i = 0; i < n; ++i) r = mul_up(r, x);
  return r;
}

}  // namespace rnd

// Closed real interval [lo, hi] with outward-rounded arithmetic. The empty
// set is a distinct value (lo = +inf, hi = -inf internally).
class Interval {
 public:
  constexpr Interval() noexcept : lo_(0.0), hi_(0.0) {}
  // NOLINTNEXTLINE(google-explicit-constructor): points mix freely.
  Interval(double x) : Interval(x, x) {}
  Interval(double lo, double hi) : lo_(lo), hi_(hi) {
    if (std::isnan(lo) || std::isnan(hi)) {
      throw std::invalid_argument("Interval: NaN bound");
    }
    if (lo > hi) {
      throw std::invalid_argument("Interval: lower bound exceeds upper bound");
    }
  }

  static Interval empty() noexcept { return Interval(Raw{}, rnd::kInf, -rnd::kInf); }
  static Interval entire() noexcept { return Interval(Raw{}, -rnd::kInf, rnd::kInf); }

  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  bool is_empty() const noexcept { return lo_ > hi_; }
  bool is_degenerate() const noexcept { return lo_ == hi_; }
  bool is_finite() const noexcept { return std::isfinite(lo_) && std::isfinite(hi_); }

  bool contains(double x) const noexcept { return lo_ <= x && x <= hi_; }
  bool contains_zero() const noexcept { return lo_ <= 0.0 && 0.0 <= hi_; }
  // this ⊆ other (the empty set is a subset of everything)
  bool subset_of(const Interval& o) const noexcept {
    return is_empty() || (o.lo_ <= lo_ && hi_ <= o.hi_);
  }
  bool interior_subset_of(const Interval& o) const noexcept {
    return is_empty() || (o.lo_ < lo_ && hi_ < o.hi_);
  }

  // Upper bound on hi - lo.
  double width() const noexcept { return is_empty() ? 0.0 : rnd::sub_up(hi_, lo_); }
  double rad() const;
  double mid() const;
  double mag() const noexcept { return std::max(std::abs(lo_), std::abs(hi_)); }
  double mig() const noexcept {
    if (contains_zero()) return 0.0;
    return std::min(std::abs(lo_), std::abs(hi_));
  }

  friend bool operator==(const Interval& a, const Interval& b) noexcept {
    if (a.is_empty() || b.is_empty()) return a.is_empty() && b.is_empty();
    return a.lo_ == b.lo_ && a.hi_ == b.hi_;
  }

 private:
  struct Raw {};
  constexpr Interval(Raw, double lo, double hi) noexcept : lo_(lo), hi_(hi) {}
  friend Interval make_unchecked(double lo, double hi) noexcept;

  double lo_, hi_;
};

// Bounds already known to satisfy lo <= hi (or to encode empty).
inline Interval make_unchecked(double lo, double hi) noexcept {
  return Interval(Interval::Raw{}, lo, hi);
}

inline Interval operator+(const Interval& a, const Interval& b) {
  if (a.is_empty() || b.is_empty()) return Interval::empty();
  return make_unchecked(rnd::add_down(a.lo(), b.lo()), rnd::add_up(a.hi(), b.hi()));
}

inline Interval operator-(const Interval& a, const Interval& b) {
  if (a.is_empty() || b.is_empty()) return Interval::empty();
  return make_unchecked(rnd::sub_down(a.lo(), b.hi()), rnd::sub_up(a.hi(), b.lo()));
}

inline Interval operator-(const Interval& a) {
  if (a.is_empty()) return a;
  return make_unchecked(-a.hi(), -a.lo());
}

Interval operator*(const Interval& a, const Interval& b);
// Throws DomainError when 0 ∈ b.
Interval operator/(const Interval& a, const Interval& b);

inline Interval& operator+=(Interval& a, const Interval& b) { return a = a + b; }
inline Interval& operator-=(Interval& a, const Interval& b) { return a = a - b; }
inline Interval& operator*=(Interval& a, const Interval& b) { return a = a * b; }
inline Interval& operator/=(Interval& a, const Interval& b) { return a = a / b; }

Interval sqr(const Interval& a);       // dependency-aware x²
Interval pow(const Interval& a, int n);  // integer exponent; n < 0 divides
Interval abs(const Interval& a);
Interval sqrt(const Interval& a);      // throws if a.lo < 0
Interval exp(const Interval& a);
Interval log(const Interval& a);       // throws if a.lo <= 0
Interval sign(const Interval& a);

Interval intersect(const Interval& a, const Interval& b) noexcept;
Interval hull(const Interval& a, const Interval& b) noexcept;
inline double width(const Interval& a) noexcept { return a.width(); }
inline double mid(const Interval& a) { return a.mid(); }
std::pair<Interval, Interval> bisect(const Interval& a, double rel_pos = 0.5);

// Symmetric widening by an absolute amount (outward rounded).
Interval inflate(const Interval& a, double factor, double eps);

std::ostream& operator<<(std::ostream& os, const Interval& a);

}  // namespace setctl
