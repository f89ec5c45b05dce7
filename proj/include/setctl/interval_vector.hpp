#pragma once

#include <initializer_list>
#include <iosfwd>
#include <vector>

#include "setctl/interval.hpp"

namespace setctl {

// Box in R^n. Empty if any component is empty.
class IntervalVector {
 public:
  IntervalVector() = default;
  explicit IntervalVector(std::size_t n, const Interval& fill = Interval(0.0)) : v_(n, fill) {}
  IntervalVector(std::initializer_list<Interval> xs) : v_(xs) {}
  explicit IntervalVector(std::vector<Interval> xs) : v_(std::move(xs)) {}
  static IntervalVector from_points(const std::vector<double>& x);
  static IntervalVector from_bounds(const std::vector<double>& lo, const std::vector<double>& hi);

  std::size_t size() const noexcept { return v_.size(); }
  Interval& operator[](std::size_t i) { return v_[i]; }
  const Interval& operator[](std::size_t i) const { return v_[i]; }
  auto begin() noexcept { return v_.begin(); }
  auto end() noexcept { return v_.end(); }
  auto begin() const noexcept { return v_.begin(); }
  auto end() const noexcept { return v_.end(); }
  const std::vector<Interval>& elems() const noexcept { return v_; }

  bool is_empty() const noexcept;
  bool subset_of(const IntervalVector& o) const;
  std::vector<double> mid() const;
  std::vector<double> lo() const;
  std::vector<double> hi() const;
  double max_width() const noexcept;
  double volume() const noexcept;
  bool contains(const std::vector<double>& x) const;

  friend bool operator==(const IntervalVector& a, const IntervalVector& b) {
    return a.v_ == b.v_;
  }

 private:
  std::vector<Interval> v_;
};

IntervalVector operator+(const IntervalVector& a, const IntervalVector& b);
IntervalVector operator-(const IntervalVector& a, const IntervalVector& b);
IntervalVector operator*(const Interval& s, const IntervalVector& a);
IntervalVector intersect(const IntervalVector& a, const IntervalVector& b);
IntervalVector hull(const IntervalVector& a, const IntervalVector& b);
IntervalVector concat(const IntervalVector& a, const IntervalVector& b);
IntervalVector inflate(const IntervalVector& a, double factor, double eps);

// Dense rows×cols interval matrix, row-major.
class IntervalMatrix {
 public:
  IntervalMatrix() = default;
  IntervalMatrix(std::size_t rows, std::size_t cols, const Interval& fill = Interval(0.0))
      : rows_(rows), cols_(cols), a_(rows * cols, fill) {}
  IntervalMatrix(std::initializer_list<std::initializer_list<Interval>> rows);
  static IntervalMatrix identity(std::size_t n);
  static IntervalMatrix from_points(const std::vector<std::vector<double>>& a);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool is_square() const noexcept { return rows_ == cols_; }
  Interval& operator()(std::size_t i, std::size_t j) { return a_[i * cols_ + j]; }
  const Interval& operator()(std::size_t i, std::size_t j) const { return a_[i * cols_ + j]; }

  IntervalMatrix transpose() const;
  friend bool operator==(const IntervalMatrix& a, const IntervalMatrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.a_ == b.a_;
  }

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<Interval> a_;
};

IntervalVector mat_vec(const IntervalMatrix& A, const IntervalVector& x);
IntervalMatrix mat_mul(const IntervalMatrix& A, const IntervalMatrix& B);
inline IntervalVector operator*(const IntervalMatrix& A, const IntervalVector& x) { return mat_vec(A, x); }
inline IntervalMatrix operator*(const IntervalMatrix& A, const IntervalMatrix& B) { return mat_mul(A, B); }
IntervalMatrix operator+(const IntervalMatrix& A, const IntervalMatrix& B);
IntervalMatrix operator-(const IntervalMatrix& A, const IntervalMatrix& B);
IntervalMatrix operator*(const Interval& s, const IntervalMatrix& A);

std::ostream& operator<<(std::ostream& os, const IntervalVector& x);
std::ostream& operator<<(std::ostream& os, const IntervalMatrix& A);

}  // namespace setctl
