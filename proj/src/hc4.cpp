#include <cmath>

#include "setctl/expr.hpp"

namespace setctl {

namespace {

using Op = Expr::Op;

struct Flat {
  Op op;
  Interval value;
  int index;
  int a = -1, b = -1;
};

int flatten(const Expr& e, std::vector<Flat>& out) {
  const auto& n = e.node();
  Flat f{n.op, n.value, n.index};
  if (n.a) f.a = flatten(e.lhs(), out);
  if (n.b) f.b = flatten(e.rhs(), out);
  out.push_back(f);
  return static_cast<int>(out.size()) - 1;
}

const Interval kNonneg = make_unchecked(0.0, rnd::kInf);

// ln restricted to its domain: the part of x at or below 0 is dropped.
Interval log_relaxed(const Interval& x) {
  if (x.is_empty() || x.hi() <= 0) return Interval::empty();
  const double lo = x.lo() <= 0 ? -rnd::kInf : rnd::log_down(x.lo());
  return make_unchecked(lo, rnd::log_up(x.hi()));
}

Interval div_relaxed(const Interval& a, const Interval& b) {
  if (a.is_empty() || b.is_empty()) return Interval::empty();
  if (b.lo() == 0 && b.hi() == 0) return Interval::empty();
  if (b.contains_zero()) return Interval::entire();
  return a / b;
}

// Outward-rounded n-th root of x >= 0 (n >= 1), verified with directed powers.
double root_down(double x, int n) {
  if (x == 0 || std::isinf(x)) return x;
  if (n == 2) return rnd::sqrt_down(x);
  double r = std::pow(x, 1.0 / n);
  while (r > 0 && rnd::pow_up(r, n) > x) r = rnd::down(r);
  while (rnd::pow_up(rnd::up(r), n) <= x) r = rnd::up(r);
  return std::max(r, 0.0);
}

double root_up(double x, int n) {
  if (x == 0 || std::isinf(x)) return x;
  if (n == 2) return rnd::sqrt_up(x);
  double r = std::pow(x, 1.0 / n);
  while (rnd::pow_down(r, n) < x) r = rnd::up(r);
  while (r > 0 && rnd::pow_down(rnd::down(r), n) >= x) r = rnd::down(r);
  return r;
}

// Preimage of r under t -> t^n (n >= 1) intersected with a.
Interval pow_preimage(const Interval& r, const Interval& a, int n) {
  if (n % 2 == 1) {
    const double lo = r.lo() >= 0 ? root_down(r.lo(), n) : -root_up(-r.lo(), n);
    const double hi = r.hi() >= 0 ? root_up(r.hi(), n) : -root_down(-r.hi(), n);
    return intersect(a, make_unchecked(lo, hi));
  }
  const Interval rr = intersect(r, kNonneg);
  if (rr.is_empty()) return rr;
  const Interval root = make_unchecked(root_down(rr.lo(), n), root_up(rr.hi(), n));
  return hull(intersect(a, root), intersect(a, -root));
}

Interval sign_preimage(const Interval& r) {
  Interval out = Interval::empty();
  if (r.contains(1.0)) out = hull(out, kNonneg);
  if (r.contains(0.0)) out = hull(out, Interval(0.0));
  if (r.contains(-1.0)) out = hull(out, make_unchecked(-rnd::kInf, 0.0));
  return out;
}

Interval forward(const Flat& f, const std::vector<Interval>& R, const IntervalVector& env) {
  auto A = [&] { return R[f.a]; };
  auto B = [&] { return R[f.b]; };
  switch (f.op) {
    case Op::Const: return f.value;
    case Op::Var:
      if (static_cast<std::size_t>(f.index) >= env.size()) {
        throw DimensionError("hc4: variable index beyond environment");
      }
      return env[f.index];
    case Op::Neg: return -A();
    case Op::Exp: return exp(A());
    case Op::Log: return log_relaxed(A());
    case Op::Abs: return abs(A());
    case Op::Sqr: return sqr(A());
    case Op::Sign: return sign(A());
    case Op::Pow:
      if (f.index < 0 && A().contains_zero()) return Interval::entire();
      return pow(A(), f.index);
    case Op::Add: return A() + B();
    case Op::Sub: return A() - B();
    case Op::Mul: return A() * B();
    case Op::Div: return div_relaxed(A(), B());
  }
  throw std::logic_error("hc4: bad node");
}

}  // namespace

IntervalVector hc4_contract(const Expr& constraint, const Interval& target, const IntervalVector& env) {
  std::vector<Flat> nodes;
  const int root = flatten(constraint, nodes);
  std::vector<Interval> R(nodes.size());
  IntervalVector box = env;
  auto empty_box = [&] {
    IntervalVector e = box;
    if (e.size() == 0) return e;
    e[0] = Interval::empty();
    return e;
  };
  if (box.is_empty()) return box;

  for (std::size_t i = 0; i < nodes.size(); ++i) {
    R[i] = forward(nodes[i], R, box);
    if (R[i].is_empty()) return empty_box();
  }
  R[root] = intersect(R[root], target);
  if (R[root].is_empty()) return empty_box();

  auto narrow = [&](int child, const Interval& proj) {
    R[child] = intersect(R[child], proj);
    return !R[child].is_empty();
  };

  for (int i = root; i >= 0; --i) {
    const Flat& f = nodes[i];
    const Interval r = R[i];
    bool ok = true;
    switch (f.op) {
      case Op::Const:
        ok = !intersect(r, f.value).is_empty();
        break;
      case Op::Var:
        box[f.index] = intersect(box[f.index], r);
        ok = !box[f.index].is_empty();
        break;
      case Op::Neg: ok = narrow(f.a, -r); break;
      case Op::Exp: ok = narrow(f.a, log_relaxed(r)); break;
      case Op::Log: ok = narrow(f.a, exp(r)); break;
      case Op::Abs: {
        const Interval rr = intersect(r, kNonneg);
        if (rr.is_empty()) {
          ok = false;
          break;
        }
        const Interval a = R[f.a];
        R[f.a] = hull(intersect(a, rr), intersect(a, -rr));
        ok = !R[f.a].is_empty();
        break;
      }
      case Op::Sqr:
        R[f.a] = pow_preimage(r, R[f.a], 2);
        ok = !R[f.a].is_empty();
        break;
      case Op::Pow: {
        int n = f.index;
        Interval t = r;
        if (n < 0) {
          if (t.contains_zero()) break;  // no information
          t = Interval(1.0) / t;
          n = -n;
        }
        R[f.a] = pow_preimage(t, R[f.a], n);
        ok = !R[f.a].is_empty();
        break;
      }
      case Op::Sign: ok = narrow(f.a, sign_preimage(r)); break;
      case Op::Add:
        ok = narrow(f.a, r - R[f.b]) && narrow(f.b, r - R[f.a]);
        break;
      case Op::Sub:
        ok = narrow(f.a, r + R[f.b]) && narrow(f.b, R[f.a] - r);
        break;
      case Op::Mul:
        if (!R[f.b].contains_zero()) ok = narrow(f.a, r / R[f.b]);
        if (ok && !R[f.a].contains_zero()) ok = narrow(f.b, r / R[f.a]);
        break;
      case Op::Div:
        // r = a / b  =>  a = r * b,  b = a / r
        ok = narrow(f.a, r * R[f.b]);
        if (ok && !r.contains_zero() && r.is_finite()) ok = narrow(f.b, R[f.a] / r);
        break;
    }
    if (!ok) return empty_box();
  }
  return box;
}

}  // namespace setctl
