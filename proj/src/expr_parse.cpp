#include <cctype>
#include <charconv>

#include "setctl/expr.hpp"

namespace setctl {

namespace {

class Parser {
 public:
  Parser(std::string_view s, const std::vector<std::string>& names) : s_(s), names_(names) {}

  Expr parse_all() {
    Expr e = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected trailing input");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, pos_); }

  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  void expect(char c) {
    if (!eat(c)) fail(std::string("expected '") + c + "'");
  }

  Expr expr() {
    Expr e = term();
    for (;;) {
      if (eat('+')) {
        e = e + term();
      } else if (eat('-')) {
        e = e - term();
      } else {
        return e;
      }
    }
  }

  Expr term() {
    Expr e = unary();
    for (;;) {
      if (eat('*')) {
        e = e * unary();
      } else if (eat('/')) {
        e = e / unary();
      } else {
        return e;
      }
    }
  }

  Expr unary() {
    if (eat('-')) return -unary();
    if (eat('+')) return unary();
    return power();
  }

  Expr power() {
    Expr base = primary();
    if (!eat('^')) return base;
    skip();
    bool neg = false;
    const bool paren = eat('(');
    if (eat('-')) neg = true;
    skip();
    const double v = number();
    if (paren) expect(')');
    if (v != std::floor(v) || std::abs(v) > 1e6) fail("only integer exponents are supported");
    const int n = static_cast<int>(v);
    return pow(base, neg ? -n : n);
  }

  double number() {
    skip();
    double v = 0;
    const char* b = s_.data() + pos_;
    const char* e = s_.data() + s_.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p == b) fail("expected a number");
    pos_ += static_cast<std::size_t>(p - b);
    return v;
  }

  double signed_number() {
    skip();
    const bool neg = eat('-');
    if (!neg) eat('+');
    const double v = number();
    return neg ? -v : v;
  }

  Expr primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end of expression");
    const char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = expr();
      expect(')');
      return e;
    }
    if (c == '[') {
      ++pos_;
      const double lo = signed_number();
      expect(',');
      const double hi = signed_number();
      expect(']');
      if (lo > hi) fail("interval literal with lo > hi");
      return Expr(Interval(lo, hi));
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return Expr(number());
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) {
        ++pos_;
      }
      const std::string id(s_.substr(start, pos_ - start));
      skip();
      if (pos_ < s_.size() && s_[pos_] == '(') return call(id, start);
      for (std::size_t i = 0; i < names_.size(); ++i) {
        if (names_[i] == id) return Expr::var(static_cast<int>(i));
      }
      pos_ = start;
      fail("unknown identifier '" + id + "'");
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  Expr call(const std::string& f, std::size_t start) {
    expect('(');
    Expr a = expr();
    if (f == "pow") {
      expect(',');
      skip();
      const double v = signed_number();
      expect(')');
      if (v != std::floor(v)) fail("pow exponent must be an integer");
      return pow(a, static_cast<int>(v));
    }
    expect(')');
    if (f == "exp") return exp(a);
    if (f == "ln" || f == "log") return log(a);
    if (f == "abs") return abs(a);
    if (f == "sqr") return sqr(a);
    if (f == "sign") return sign(a);
    pos_ = start;
    fail("unknown function '" + f + "'");
  }

  std::string_view s_;
  const std::vector<std::string>& names_;
  std::size_t pos_ = 0;
};

}  // namespace

Expr parse_expr(std::string_view text, const std::vector<std::string>& names) {
  return Parser(text, names).parse_all();
}

}  // namespace setctl
