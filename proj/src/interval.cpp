#include "setctl/interval.hpp"

#include <ostream>
#include <utility>

namespace setctl {

double Interval::mid() const {
  if (is_empty()) throw std::invalid_argument("mid of empty interval");
  if (lo_ == -rnd::kInf && hi_ == rnd::kInf) return 0.0;
  if (lo_ == -rnd::kInf) return -rnd::kMax;
  if (hi_ == rnd::kInf) return rnd::kMax;
  const double m = 0.5 * lo_ + 0.5 * hi_;  // no overflow
  return std::clamp(m, lo_, hi_);
}

double Interval::rad() const {
  if (is_empty()) return 0.0;
  const double m = mid();
  return std::max(rnd::sub_up(m, lo_), rnd::sub_up(hi_, m));
}

Interval operator*(const Interval& a, const Interval& b) {
  if (a.is_empty() || b.is_empty()) return Interval::empty();
  const double al = a.lo(), ah = a.hi(), bl = b.lo(), bh = b.hi();
  // Sign-case dispatch keeps the common cases at two products.
  if (al >= 0) {
    if (bl >= 0) return make_unchecked(rnd::mul_down(al, bl), rnd::mul_up(ah, bh));
    if (bh <= 0) return make_unchecked(rnd::mul_down(ah, bl), rnd::mul_up(al, bh));
    return make_unchecked(rnd::mul_down(ah, bl), rnd::mul_up(ah, bh));
  }
  if (ah <= 0) {
    if (bl >= 0) return make_unchecked(rnd::mul_down(al, bh), rnd::mul_up(ah, bl));
    if (bh <= 0) return make_unchecked(rnd::mul_down(ah, bh), rnd::mul_up(al, bl));
    return make_unchecked(rnd::mul_down(al, bh), rnd::mul_up(al, bl));
  }
  if (bl >= 0) return make_unchecked(rnd::mul_down(al, bh), rnd::mul_up(ah, bh));
  if (bh <= 0) return make_unchecked(rnd::mul_down(ah, bl), rnd::mul_up(al, bl));
  return make_unchecked(std::min(rnd::mul_down(al, bh), rnd::mul_down(ah, bl)),
                        std::max(rnd::mul_up(al, bl), rnd::mul_up(ah, bh)));
}

Interval operator/(const Interval& a, const Interval& b) {
  if (a.is_empty() || b.is_empty()) return Interval::empty();
  if (b.contains_zero()) throw DomainError("interval division: 0 in denominator");
  const double al = a.lo(), ah = a.hi(), bl = b.lo(), bh = b.hi();
  if (bl > 0) {
    if (al >= 0) return make_unchecked(rnd::div_down(al, bh), rnd::div_up(ah, bl));
    if (ah <= 0) return make_unchecked(rnd::div_down(al, bl), rnd::div_up(ah, bh));
    return make_unchecked(rnd::div_down(al, bl), rnd::div_up(ah, bl));
  }
  // bh < 0
  if (al >= 0) return make_unchecked(rnd::div_down(ah, bh), rnd::div_up(al, bl));
  if (ah <= 0) return make_unchecked(rnd::div_down(ah, bl), rnd::div_up(al, bh));
  return make_unchecked(rnd::div_down(ah, bh), rnd::div_up(al, bh));
}

Interval sqr(const Interval& a) {
  if (a.is_empty()) return a;
  if (a.contains_zero()) {
    return make_unchecked(0.0, std::max(rnd::mul_up(a.lo(), a.lo()), rnd::mul_up(a.hi(), a.hi())));
  }
  const double m = a.mig(), M = a.mag();
  return make_unchecked(rnd::mul_down(m, m), rnd::mul_up(M, M));
}

Interval pow(const Interval& a, int n) {
  if (a.is_empty()) return a;
  if (n == 0) return Interval(1.0);
  if (n < 0) return Interval(1.0) / pow(a, -n);
  if (n % 2 == 0) {
    const double m = a.mig(), M = a.mag();
    return make_unchecked(rnd::pow_down(m, n), rnd::pow_up(M, n));
  }
  const double lo = a.lo() >= 0 ? rnd::pow_down(a.lo(), n) : -rnd::pow_up(-a.lo(), n);
  const double hi = a.hi() >= 0 ? rnd::pow_up(a.hi(), n) : -rnd::pow_down(-a.hi(), n);
  return make_unchecked(lo, hi);
}

Interval abs(const Interval& a) {
  if (a.is_empty()) return a;
  if (a.lo() >= 0) return a;
  if (a.hi() <= 0) return -a;
  return make_unchecked(0.0, std::max(-a.lo(), a.hi()));
}

Interval sqrt(const Interval& a) {
  if (a.is_empty()) return a;
  if (a.lo() < 0) throw DomainError("sqrt of interval with negative part");
  return make_unchecked(rnd::sqrt_down(a.lo()), rnd::sqrt_up(a.hi()));
}

Interval exp(const Interval& a) {
  if (a.is_empty()) return a;
  return make_unchecked(rnd::exp_down(a.lo()), rnd::exp_up(a.hi()));
}

Interval log(const Interval& a) {
  if (a.is_empty()) return a;
  if (a.lo() <= 0) throw DomainError("ln of interval touching <= 0");
  return make_unchecked(rnd::log_down(a.lo()), rnd::log_up(a.hi()));
}

Interval sign(const Interval& a) {
  if (a.is_empty()) return a;
  if (a.lo() > 0) return Interval(1.0);
  if (a.hi() < 0) return Interval(-1.0);
  if (a.lo() == 0 && a.hi() == 0) return Interval(0.0);
  if (a.lo() == 0) return Interval(0.0, 1.0);
  if (a.hi() == 0) return Interval(-1.0, 0.0);
  return Interval(-1.0, 1.0);
}

Interval intersect(const Interval& a, const Interval& b) noexcept {
  const double lo = std::max(a.lo(), b.lo());
  const double hi = std::min(a.hi(), b.hi());
  if (lo > hi) return Interval::empty();
  return make_unchecked(lo, hi);
}

Interval hull(const Interval& a, const Interval& b) noexcept {
  if (a.is_empty()) return b;
  if (b.is_empty()) return a;
  return make_unchecked(std::min(a.lo(), b.lo()), std::max(a.hi(), b.hi()));
}

std::pair<Interval, Interval> bisect(const Interval& a, double rel_pos) {
  if (a.is_empty() || a.is_degenerate()) {
    throw std::invalid_argument("bisect: empty or degenerate interval");
  }
  if (!(rel_pos > 0 && rel_pos < 1)) throw std::invalid_argument("bisect: rel_pos must be in (0,1)");
  if (!a.is_finite()) throw std::invalid_argument("bisect: unbounded interval");
  double m = a.lo() + rel_pos * (a.hi() - a.lo());
  if (!std::isfinite(m)) m = a.lo() * (1 - rel_pos) + a.hi() * rel_pos;
  m = std::clamp(m, a.lo(), a.hi());
  return {make_unchecked(a.lo(), m), make_unchecked(m, a.hi())};
}

Interval inflate(const Interval& a, double factor, double eps) {
  if (a.is_empty()) return a;
  const double m = a.mid();
  const double r = rnd::add_up(rnd::mul_up(a.rad(), factor), eps);
  return make_unchecked(rnd::sub_down(m, r), rnd::add_up(m, r));
}

std::ostream& operator<<(std::ostream& os, const Interval& a) {
  if (a.is_empty()) return os << "[empty]";
  return os << '[' << a.lo() << ", " << a.hi() << ']';
}

}  // namespace setctl
