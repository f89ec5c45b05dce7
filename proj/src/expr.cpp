#include "setctl/expr.hpp"

#include <cmath>
#include <sstream>

namespace setctl {

using Op = Expr::Op;

Expr::Expr(double c) : Expr(Interval(c)) {}

Expr::Expr(const Interval& c) {
  if (c.is_empty()) throw std::invalid_argument("Expr: empty constant");
  auto n = std::make_shared<Node>();
  n->op = Op::Const;
  n->value = c;
  n_ = std::move(n);
}

Expr Expr::var(int index) {
  if (index < 0) throw std::invalid_argument("Expr::var: negative index");
  auto n = std::make_shared<Node>();
  n->op = Op::Var;
  n->index = index;
  return Expr(std::shared_ptr<const Node>(std::move(n)));
}

Expr Expr::make(Op op, Expr a, Expr b, int index) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->index = index;
  n->a = std::move(a.n_);
  if (op >= Op::Add) n->b = std::move(b.n_);
  return Expr(std::shared_ptr<const Node>(std::move(n)));
}

namespace {

// Constant folding is only done when the folded value is exact, so folding
// never changes the set an expression denotes.
bool exact_point(const Expr& e) { return e.is_const() && e.node().value.is_degenerate(); }

template <class F>
bool try_fold(const Expr& a, const Expr& b, F f, Expr& out) {
  if (!exact_point(a) || !exact_point(b)) return false;
  Interval r;
  try {
    r = f(a.node().value, b.node().value);
  } catch (const DomainError&) {
    return false;
  }
  if (!r.is_degenerate()) return false;
  out = Expr(r);
  return true;
}

}  // namespace

Expr operator+(const Expr& a, const Expr& b) {
  if (a.is_zero()) return b;
  if (b.is_zero()) return a;
  Expr r;
  if (try_fold(a, b, [](const Interval& x, const Interval& y) { return x + y; }, r)) return r;
  return Expr::make(Op::Add, a, b);
}

Expr operator-(const Expr& a, const Expr& b) {
  if (b.is_zero()) return a;
  if (a.is_zero()) return -b;
  Expr r;
  if (try_fold(a, b, [](const Interval& x, const Interval& y) { return x - y; }, r)) return r;
  return Expr::make(Op::Sub, a, b);
}

Expr operator*(const Expr& a, const Expr& b) {
  if (a.is_zero() || b.is_zero()) return Expr(0.0);
  if (a.is_one()) return b;
  if (b.is_one()) return a;
  Expr r;
  if (try_fold(a, b, [](const Interval& x, const Interval& y) { return x * y; }, r)) return r;
  return Expr::make(Op::Mul, a, b);
}

Expr operator/(const Expr& a, const Expr& b) {
  if (b.is_one()) return a;
  if (a.is_zero() && !(b.is_const() && b.node().value.contains_zero())) return Expr(0.0);
  Expr r;
  if (try_fold(a, b, [](const Interval& x, const Interval& y) { return x / y; }, r)) return r;
  return Expr::make(Op::Div, a, b);
}

Expr operator-(const Expr& a) {
  if (a.is_const()) return Expr(-a.node().value);
  if (a.op() == Op::Neg) return a.lhs();
  return Expr::make(Op::Neg, a);
}

Expr exp(const Expr& a) {
  if (a.is_zero()) return Expr(1.0);
  return Expr::make(Op::Exp, a);
}
Expr log(const Expr& a) {
  if (a.is_one()) return Expr(0.0);
  return Expr::make(Op::Log, a);
}
Expr abs(const Expr& a) { return Expr::make(Op::Abs, a); }
Expr sqr(const Expr& a) {
  if (a.is_zero()) return a;
  return Expr::make(Op::Sqr, a);
}
Expr sign(const Expr& a) { return Expr::make(Op::Sign, a); }
Expr pow(const Expr& a, int n) {
  if (n == 0) return Expr(1.0);
  if (n == 1) return a;
  if (n == 2) return sqr(a);
  return Expr::make(Op::Pow, a, Expr(), n);
}

bool Expr::depends_on(int index) const {
  switch (op()) {
    case Op::Const: return false;
    case Op::Var: return n_->index == index;
    default:
      if (lhs().depends_on(index)) return true;
      return n_->b && rhs().depends_on(index);
  }
}

int Expr::max_var() const {
  switch (op()) {
    case Op::Const: return -1;
    case Op::Var: return n_->index;
    default: {
      int m = lhs().max_var();
      if (n_->b) m = std::max(m, rhs().max_var());
      return m;
    }
  }
}

Interval Expr::eval(const IntervalVector& env) const {
  const Node& n = *n_;
  switch (n.op) {
    case Op::Const: return n.value;
    case Op::Var:
      if (static_cast<std::size_t>(n.index) >= env.size()) {
        throw DimensionError("expression references variable " + std::to_string(n.index) +
                             " beyond environment of size " + std::to_string(env.size()));
      }
      return env[n.index];
    case Op::Neg: return -lhs().eval(env);
    case Op::Exp: return setctl::exp(lhs().eval(env));
    case Op::Log: return setctl::log(lhs().eval(env));
    case Op::Abs: return setctl::abs(lhs().eval(env));
    case Op::Sqr: return setctl::sqr(lhs().eval(env));
    case Op::Sign: return setctl::sign(lhs().eval(env));
    case Op::Pow: return setctl::pow(lhs().eval(env), n.index);
    case Op::Add: return lhs().eval(env) + rhs().eval(env);
    case Op::Sub: return lhs().eval(env) - rhs().eval(env);
    case Op::Mul: return lhs().eval(env) * rhs().eval(env);
    case Op::Div: return lhs().eval(env) / rhs().eval(env);
  }
  throw std::logic_error("Expr::eval: bad node");
}

double Expr::eval(const std::vector<double>& env) const {
  const Node& n = *n_;
  switch (n.op) {
    case Op::Const: return n.value.mid();
    case Op::Var:
      if (static_cast<std::size_t>(n.index) >= env.size()) {
        throw DimensionError("expression references variable " + std::to_string(n.index) +
                             " beyond environment of size " + std::to_string(env.size()));
      }
      return env[n.index];
    case Op::Neg: return -lhs().eval(env);
    case Op::Exp: return std::exp(lhs().eval(env));
    case Op::Log: return std::log(lhs().eval(env));
    case Op::Abs: return std::abs(lhs().eval(env));
    case Op::Sqr: {
      const double x = lhs().eval(env);
      return x * x;
    }
    case Op::Sign: {
      const double x = lhs().eval(env);
      return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0);
    }
    case Op::Pow: return std::pow(lhs().eval(env), n.index);
    case Op::Add: return lhs().eval(env) + rhs().eval(env);
    case Op::Sub: return lhs().eval(env) - rhs().eval(env);
    case Op::Mul: return lhs().eval(env) * rhs().eval(env);
    case Op::Div: return lhs().eval(env) / rhs().eval(env);
  }
  throw std::logic_error("Expr::eval: bad node");
}

Expr Expr::diff(int index) const {
  if (!depends_on(index)) return Expr(0.0);
  const Node& n = *n_;
  const Expr a = n.op == Op::Var || n.op == Op::Const ? Expr() : lhs();
  switch (n.op) {
    case Op::Const: return Expr(0.0);
    case Op::Var: return Expr(1.0);
    case Op::Neg: return -a.diff(index);
    case Op::Exp: return *this * a.diff(index);
    case Op::Log: return a.diff(index) / a;
    case Op::Abs: return sign(a) * a.diff(index);
    case Op::Sqr: return Expr(2.0) * a * a.diff(index);
    case Op::Sign: throw std::invalid_argument("sign() is not differentiable");
    case Op::Pow: return Expr(static_cast<double>(n.index)) * pow(a, n.index - 1) * a.diff(index);
    case Op::Add: return a.diff(index) + rhs().diff(index);
    case Op::Sub: return a.diff(index) - rhs().diff(index);
    case Op::Mul: {
      const Expr b = rhs();
      return a.diff(index) * b + a * b.diff(index);
    }
    case Op::Div: {
      const Expr b = rhs();
      if (!b.depends_on(index)) return a.diff(index) / b;
      return (a.diff(index) * b - a * b.diff(index)) / sqr(b);
    }
  }
  throw std::logic_error("Expr::diff: bad node");
}

Expr Expr::substitute(const std::vector<Expr>& repl) const {
  const Node& n = *n_;
  switch (n.op) {
    case Op::Const: return *this;
    case Op::Var:
      if (static_cast<std::size_t>(n.index) >= repl.size()) {
        throw DimensionError("substitute: no replacement for variable " + std::to_string(n.index));
      }
      return repl[n.index];
    case Op::Neg: return -lhs().substitute(repl);
    case Op::Exp: return exp(lhs().substitute(repl));
    case Op::Log: return log(lhs().substitute(repl));
    case Op::Abs: return abs(lhs().substitute(repl));
    case Op::Sqr: return sqr(lhs().substitute(repl));
    case Op::Sign: return sign(lhs().substitute(repl));
    case Op::Pow: return pow(lhs().substitute(repl), n.index);
    case Op::Add: return lhs().substitute(repl) + rhs().substitute(repl);
    case Op::Sub: return lhs().substitute(repl) - rhs().substitute(repl);
    case Op::Mul: return lhs().substitute(repl) * rhs().substitute(repl);
    case Op::Div: return lhs().substitute(repl) / rhs().substitute(repl);
  }
  throw std::logic_error("Expr::substitute: bad node");
}

std::string Expr::str(const std::vector<std::string>& names) const {
  const Node& n = *n_;
  std::ostringstream os;
  os.precision(17);
  auto un = [&](const char* f) { os << f << '(' << lhs().str(names) << ')'; };
  auto bin = [&](const char* o) { os << '(' << lhs().str(names) << ' ' << o << ' ' << rhs().str(names) << ')'; };
  switch (n.op) {
    case Op::Const:
      if (n.value.is_degenerate()) {
        os << n.value.lo();
      } else {
        os << '[' << n.value.lo() << ", " << n.value.hi() << ']';
      }
      break;
    case Op::Var:
      if (static_cast<std::size_t>(n.index) < names.size()) {
        os << names[n.index];
      } else {
        os << "v" << n.index;
      }
      break;
    case Op::Neg: os << "-(" << lhs().str(names) << ')'; break;
    case Op::Exp: un("exp"); break;
    case Op::Log: un("ln"); break;
    case Op::Abs: un("abs"); break;
    case Op::Sqr: un("sqr"); break;
    case Op::Sign: un("sign"); break;
    case Op::Pow: os << '(' << lhs().str(names) << ")^" << n.index; break;
    case Op::Add: bin("+"); break;
    case Op::Sub: bin("-"); break;
    case Op::Mul: bin("*"); break;
    case Op::Div: bin("/"); break;
  }
  return os.str();
}

}  // namespace setctl
