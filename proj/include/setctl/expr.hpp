#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "setctl/interval_vector.hpp"

namespace setctl {

// Immutable expression tree over an indexed variable environment. Used for
// natural interval extensions, point evaluation, symbolic derivatives, and
// forward-backward contraction.
class Expr {
 public:
  enum class Op : std::uint8_t { Const, Var, Neg, Exp, Log, Abs, Sqr, Sign, Pow, Add, Sub, Mul, Div };

  struct Node {
    Op op;
    Interval value;  // Const
    int index = 0;   // Var index, or Pow exponent
    std::shared_ptr<const Node> a, b;
  };

  Expr() : Expr(0.0) {}
  // NOLINTNEXTLINE(google-explicit-constructor)
  Expr(double c);
  // NOLINTNEXTLINE(google-explicit-constructor)
  Expr(const Interval& c);
  static Expr var(int index);

  Op op() const noexcept { return n_->op; }
  const Node& node() const noexcept { return *n_; }
  Expr lhs() const { return Expr(n_->a); }
  Expr rhs() const { return Expr(n_->b); }

  bool is_const() const noexcept { return n_->op == Op::Const; }
  bool is_zero() const noexcept { return is_const() && n_->value == Interval(0.0); }
  bool is_one() const noexcept { return is_const() && n_->value == Interval(1.0); }
  bool depends_on(int index) const;
  // Largest variable index referenced, -1 for constants.
  int max_var() const;

  // Natural interval extension. Throws DomainError on ln(x <= 0) or on
  // division by a zero-containing interval, DimensionError if the
  // environment is too short.
  Interval eval(const IntervalVector& env) const;
  // Point evaluation; interval constants contribute their midpoint.
  double eval(const std::vector<double>& env) const;

  Expr diff(int index) const;
  // Replaces variable i by repl[i].
  Expr substitute(const std::vector<Expr>& repl) const;

  std::string str(const std::vector<std::string>& names = {}) const;

  friend Expr operator+(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a, const Expr& b);
  friend Expr operator*(const Expr& a, const Expr& b);
  friend Expr operator/(const Expr& a, const Expr& b);
  friend Expr operator-(const Expr& a);
  friend Expr exp(const Expr& a);
  friend Expr log(const Expr& a);
  friend Expr abs(const Expr& a);
  friend Expr sqr(const Expr& a);
  friend Expr sign(const Expr& a);
  friend Expr pow(const Expr& a, int n);

 private:
  explicit Expr(std::shared_ptr<const Node> n) : n_(std::move(n)) {}
  static Expr make(Op op, Expr a, Expr b = Expr(), int index = 0);

  std::shared_ptr<const Node> n_;
};

class ParseError : public std::invalid_argument {
 public:
  ParseError(const std::string& msg, std::size_t pos)
      : std::invalid_argument(msg + " at offset " + std::to_string(pos)), pos_(pos) {}
  std::size_t position() const noexcept { return pos_; }

 private:
  std::size_t pos_;
};

// Infix grammar: + - * / ^int, unary minus, parentheses, functions
// exp ln log abs sqr sign, numbers, interval literals "[lo, hi]" and the
// identifiers listed in `names` (variable i = names[i]).
Expr parse_expr(std::string_view text, const std::vector<std::string>& names);

// One forward-backward (HC4-revise) pass for constraint(env) ∈ target.
// Returns a sub-box of env that keeps every solution; an empty box
// (IntervalVector::is_empty) proves infeasibility.
IntervalVector hc4_contract(const Expr& constraint, const Interval& target, const IntervalVector& env);

}  // namespace setctl
