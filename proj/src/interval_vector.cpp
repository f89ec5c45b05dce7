#include "setctl/interval_vector.hpp"

#include <ostream>
#include <string>

namespace setctl {

namespace {

void require_same_size(const IntervalVector& a, const IntervalVector& b, const char* what) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(what) + ": size " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
  }
}

}  // namespace

IntervalVector IntervalVector::from_points(const std::vector<double>& x) {
  IntervalVector r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) r[i] = Interval(x[i]);
  return r;
}

IntervalVector IntervalVector::from_bounds(const std::vector<double>& lo, const std::vector<double>& hi) {
  if (lo.size() != hi.size()) throw DimensionError("from_bounds: size mismatch");
  IntervalVector r(lo.size());
  for (std::size_t i = 0; i < lo.size(); ++i) r[i] = Interval(lo[i], hi[i]);
  return r;
}

bool IntervalVector::is_empty() const noexcept {
  for (const auto& x : v_) {
    if (x.is_empty()) return true;
  }
  return false;
}

bool IntervalVector::subset_of(const IntervalVector& o) const {
  require_same_size(*this, o, "subset_of");
  if (is_empty()) return true;
  for (std::size_t i = 0; i < v_.size(); ++i) {
    if (!v_[i].subset_of(o[i])) return false;
  }
  return true;
}

std::vector<double> IntervalVector::mid() const {
  std::vector<double> m(v_.size());
  for (std::size_t i = 0; i < v_.size(); ++i) m[i] = v_[i].mid();
  return m;
}

std::vector<double> IntervalVector::lo() const {
  std::vector<double> m(v_.size());
  for (std::size_t i = 0; i < v_.size(); ++i) m[i] = v_[i].lo();
  return m;
}

std::vector<double> IntervalVector::hi() const {
  std::vector<double> m(v_.size());
  for (std::size_t i = 0; i < v_.size(); ++i) m[i] = v_[i].hi();
  return m;
}

double IntervalVector::max_width() const noexcept {
  double w = 0;
  for (const auto& x : v_) w = std::max(w, x.width());
  return w;
}

double IntervalVector::volume() const noexcept {
  if (is_empty()) return 0.0;
  double v = 1;
  for (const auto& x : v_) v *= x.hi() - x.lo();
  return v;
}

bool IntervalVector::contains(const std::vector<double>& x) const {
  if (x.size() != v_.size()) throw DimensionError("contains: size mismatch");
  for (std::size_t i = 0; i < v_.size(); ++i) {
    if (!v_[i].contains(x[i])) return false;
  }
  return true;
}

IntervalVector operator+(const IntervalVector& a, const IntervalVector& b) {
  require_same_size(a, b, "vector add");
  IntervalVector r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
  return r;
}

IntervalVector operator-(const IntervalVector& a, const IntervalVector& b) {
  require_same_size(a, b, "vector sub");
  IntervalVector r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}

IntervalVector operator*(const Interval& s, const IntervalVector& a) {
  IntervalVector r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = s * a[i];
  return r;
}

IntervalVector intersect(const IntervalVector& a, const IntervalVector& b) {
  require_same_size(a, b, "intersect");
  IntervalVector r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = intersect(a[i], b[i]);
  return r;
}

IntervalVector hull(const IntervalVector& a, const IntervalVector& b) {
  require_same_size(a, b, "hull");
  if (a.is_empty()) return b;
  if (b.is_empty()) return a;
  IntervalVector r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = hull(a[i], b[i]);
  return r;
}

IntervalVector concat(const IntervalVector& a, const IntervalVector& b) {
  std::vector<Interval> v(a.elems());
  v.insert(v.end(), b.begin(), b.end());
  return IntervalVector(std::move(v));
}

IntervalVector inflate(const IntervalVector& a, double factor, double eps) {
  IntervalVector r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = inflate(a[i], factor, eps);
  return r;
}

IntervalMatrix::IntervalMatrix(std::initializer_list<std::initializer_list<Interval>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  a_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("IntervalMatrix: ragged initializer");
    a_.insert(a_.end(), r.begin(), r.end());
  }
}

IntervalMatrix IntervalMatrix::identity(std::size_t n) {
  IntervalMatrix I(n, n);
  for (std::size_t i = 0; i < n; ++i) I(i, i) = Interval(1.0);
  return I;
}

IntervalMatrix IntervalMatrix::from_points(const std::vector<std::vector<double>>& a) {
  const std::size_t r = a.size(), c = r ? a[0].size() : 0;
  IntervalMatrix M(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    if (a[i].size() != c) throw DimensionError("IntervalMatrix: ragged rows");
    for (std::size_t j = 0; j < c; ++j) M(i, j) = Interval(a[i][j]);
  }
  return M;
}

IntervalMatrix IntervalMatrix::transpose() const {
  IntervalMatrix T(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) T(j, i) = (*this)(i, j);
  return T;
}

IntervalVector mat_vec(const IntervalMatrix& A, const IntervalVector& x) {
  if (A.cols() != x.size()) {
    throw DimensionError("mat_vec: " + std::to_string(A.cols()) + " columns vs vector of " +
                         std::to_string(x.size()));
  }
  IntervalVector r(A.rows());
  for (std::size_t i = 0; i < A.rows(); ++i) {
    Interval s(0.0);
    for (std::size_t j = 0; j < A.cols(); ++j) s += A(i, j) * x[j];
    r[i] = s;
  }
  return r;
}

IntervalMatrix mat_mul(const IntervalMatrix& A, const IntervalMatrix& B) {
  if (A.cols() != B.rows()) throw DimensionError("mat_mul: inner dimensions differ");
  IntervalMatrix C(A.rows(), B.cols());
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < B.cols(); ++j) {
      Interval s(0.0);
      for (std::size_t k = 0; k < A.cols(); ++k) s += A(i, k) * B(k, j);
      C(i, j) = s;
    }
  return C;
}

IntervalMatrix operator+(const IntervalMatrix& A, const IntervalMatrix& B) {
  if (A.rows() != B.rows() || A.cols() != B.cols()) throw DimensionError("matrix add");
  IntervalMatrix C(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < A.cols(); ++j) C(i, j) = A(i, j) + B(i, j);
  return C;
}

IntervalMatrix operator-(const IntervalMatrix& A, const IntervalMatrix& B) {
  if (A.rows() != B.rows() || A.cols() != B.cols()) throw DimensionError("matrix sub");
  IntervalMatrix C(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < A.cols(); ++j) C(i, j) = A(i, j) - B(i, j);
  return C;
}

IntervalMatrix operator*(const Interval& s, const IntervalMatrix& A) {
  IntervalMatrix C(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < A.cols(); ++j) C(i, j) = s * A(i, j);
  return C;
}

std::ostream& operator<<(std::ostream& os, const IntervalVector& x) {
  os << '(';
  for (std::size_t i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
  return os << ')';
}

std::ostream& operator<<(std::ostream& os, const IntervalMatrix& A) {
  for (std::size_t i = 0; i < A.rows(); ++i) {
    os << (i ? "\n " : "[");
    for (std::size_t j = 0; j < A.cols(); ++j) os << ' ' << A(i, j);
  }
  return os << " ]";
}

}  // namespace setctl
