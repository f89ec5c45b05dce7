#include "setctl/reach.hpp"

#include <cmath>
#include <ostream>

#include "setctl/csv.hpp"

namespace setctl {

NonlinearSystemModel::NonlinearSystemModel(std::vector<Expr> f, int n_inputs, int n_params)
    : f_(std::move(f)), n_inputs_(n_inputs), n_params_(n_params) {
  if (n_inputs < 0 || n_params < 0) throw std::invalid_argument("NonlinearSystemModel: negative arity");
  const int nx = n();
  const int arity = nx + n_inputs + n_params;
  for (const auto& e : f_) {
    if (e.max_var() >= arity) {
      throw DimensionError("NonlinearSystemModel: expression uses variable " + std::to_string(e.max_var()) +
                           " but the environment has " + std::to_string(arity));
    }
  }
  jac_.reserve(static_cast<std::size_t>(nx) * nx);
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < nx; ++j) jac_.push_back(f_[i].diff(j));
  for (int i = 0; i < nx; ++i) {
    Expr s(0.0);
    for (int j = 0; j < nx; ++j) s = s + jac(i, j) * f_[j];
    ff_.push_back(s);
  }
}

IntervalVector NonlinearSystemModel::env(const IntervalVector& x, const IntervalVector& u,
                                         const IntervalVector& p) const {
  if (static_cast<int>(x.size()) != n() || static_cast<int>(u.size()) != m() ||
      static_cast<int>(p.size()) != np()) {
    throw DimensionError("NonlinearSystemModel: argument sizes do not match (n, m, p) = (" +
                         std::to_string(n()) + ", " + std::to_string(m()) + ", " + std::to_string(np()) + ")");
  }
  std::vector<Interval> e;
  e.reserve(x.size() + u.size() + p.size());
  e.insert(e.end(), x.begin(), x.end());
  e.insert(e.end(), u.begin(), u.end());
  e.insert(e.end(), p.begin(), p.end());
  return IntervalVector(std::move(e));
}

IntervalVector NonlinearSystemModel::eval(const IntervalVector& x, const IntervalVector& u,
                                          const IntervalVector& p) const {
  const IntervalVector e = env(x, u, p);
  IntervalVector r(f_.size());
  for (std::size_t i = 0; i < f_.size(); ++i) r[i] = f_[i].eval(e);
  return r;
}

IntervalMatrix NonlinearSystemModel::eval_jacobian(const IntervalVector& x, const IntervalVector& u,
                                                   const IntervalVector& p) const {
  const IntervalVector e = env(x, u, p);
  IntervalMatrix J(f_.size(), f_.size());
  for (int i = 0; i < n(); ++i)
    for (int j = 0; j < n(); ++j) J(i, j) = jac(i, j).eval(e);
  return J;
}

std::vector<double> NonlinearSystemModel::eval(const std::vector<double>& x, const std::vector<double>& u,
                                               const std::vector<double>& p) const {
  std::vector<double> e;
  e.reserve(x.size() + u.size() + p.size());
  e.insert(e.end(), x.begin(), x.end());
  e.insert(e.end(), u.begin(), u.end());
  e.insert(e.end(), p.begin(), p.end());
  std::vector<double> r(f_.size());
  for (std::size_t i = 0; i < f_.size(); ++i) r[i] = f_[i].eval(e);
  return r;
}

void BracketTube::write_csv(std::ostream& os) const {
  const std::size_t n = v.empty() ? 0 : v[0].size();
  std::vector<std::string> h{"t"};
  for (std::size_t i = 0; i < n; ++i) h.push_back("v_" + std::to_string(i + 1));
  for (std::size_t i = 0; i < n; ++i) h.push_back("w_" + std::to_string(i + 1));
  csv::write_header(os, h);
  for (std::size_t k = 0; k < times.size(); ++k) {
    std::vector<double> row{times[k]};
    row.insert(row.end(), v[k].begin(), v[k].end());
    row.insert(row.end(), w[k].begin(), w[k].end());
    csv::write_row(os, row);
  }
}

bool metzler_check(const IntervalMatrix& A) {
  if (!A.is_square()) throw DimensionError("metzler_check: matrix is not square");
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < A.cols(); ++j)
      if (i != j && !(A(i, j).lo() >= 0)) return false;
  return true;
}

namespace {

bool bounded(const IntervalVector& x) {
  for (const auto& c : x) {
    if (!c.is_finite()) return false;
  }
  return true;
}


void check_bracketing_args(const IntervalMatrix& A, const IntervalVector& c, const IntervalVector& box, double dt) {
  if (!A.is_square() || A.rows() != box.size() || c.size() != box.size()) {
    throw DimensionError("bracketing: A, offset and box dimensions disagree");
  }
  if (!metzler_check(A)) throw MetzlerViolation("bracketing: system matrix is not Metzler");
  if (box.is_empty()) throw std::invalid_argument("bracketing: empty box");
  if (!(dt > 0)) throw std::invalid_argument("bracketing: dt must be positive");
}

// Lower / upper bounding vector fields, rounded outward:
//   F_v,i = Σ_j min(a_ij·v_j) + inf c_i,   F_w,i = Σ_j max(a_ij·w_j) + sup c_i
// (valid for Metzler A: off-diagonal terms are minimized at v_j).
double field_lo(const IntervalMatrix& A, const IntervalVector& c, const std::vector<double>& v, std::size_t i) {
  double s = c[i].lo();
  for (std::size_t j = 0; j < v.size(); ++j) {
    const Interval& a = A(i, j);
    s = rnd::add_down(s, std::min(rnd::mul_down(a.lo(), v[j]), rnd::mul_down(a.hi(), v[j])));
  }
  return s;
}

double field_hi(const IntervalMatrix& A, const IntervalVector& c, const std::vector<double>& w, std::size_t i) {
  double s = c[i].hi();
  for (std::size_t j = 0; j < w.size(); ++j) {
    const Interval& a = A(i, j);
    s = rnd::add_up(s, std::max(rnd::mul_up(a.lo(), w[j]), rnd::mul_up(a.hi(), w[j])));
  }
  return s;
}

}  // namespace

IntervalVector bracketing_euler(const IntervalMatrix& A, const IntervalVector& c, const IntervalVector& box,
                                double dt) {
  check_bracketing_args(A, c, box, dt);
  const auto v = box.lo(), w = box.hi();
  IntervalVector r(box.size());
  for (std::size_t i = 0; i < box.size(); ++i) {
    const double lo = rnd::add_down(v[i], rnd::mul_down(dt, field_lo(A, c, v, i)));
    const double hi = rnd::add_up(w[i], rnd::mul_up(dt, field_hi(A, c, w, i)));
    r[i] = Interval(std::min(lo, hi), std::max(lo, hi));
  }
  return r;
}

IntervalVector mueller_step(const LinearIntervalSystem& sys, const IntervalVector& box, const Interval& u) {
  const IntervalVector c = sys.b ? u * *sys.b : IntervalVector(box.size());
  return bracketing_euler(sys.A, c, box, sys.dt);
}

IntervalVector bracketing_step(const IntervalMatrix& A, const IntervalVector& c, const IntervalVector& box,
                               double dt) {
  check_bracketing_args(A, c, box, dt);
  const std::size_t n = box.size();
  const auto v = box.lo(), w = box.hi();
  IntervalVector clo(n), chi(n);
  for (std::size_t i = 0; i < n; ++i) {
    clo[i] = Interval(c[i].lo());
    chi[i] = Interval(c[i].hi());
  }
  const Interval H(0.0, dt);
  const IntervalVector V0 = IntervalVector::from_points(v), W0 = IntervalVector::from_points(w);

  // A-priori enclosures of the bound trajectories over [0, dt]; the bound
  // fields satisfy F_v(v) ∈ [A]·Ṽ + inf c for v ∈ Ṽ (and likewise for w).
  IntervalVector Vt = V0 + H * (A * V0 + clo);
  IntervalVector Wt = W0 + H * (A * W0 + chi);
  bool ok = false;
  for (int attempt = 0; attempt < 20 && !ok; ++attempt) {
    const IntervalVector Cv = inflate(Vt, 1.1, 1e-12), Cw = inflate(Wt, 1.1, 1e-12);
    const IntervalVector Yv = V0 + H * (A * Cv + clo);
    const IntervalVector Yw = W0 + H * (A * Cw + chi);
    ok = Yv.subset_of(Cv) && Yw.subset_of(Cw) && bounded(Cv) && bounded(Cw);
    Vt = Yv;
    Wt = Yw;
  }
  if (!ok) throw StepRejected("bracketing_step: no a-priori enclosure for dt = " + std::to_string(dt));

  // Second-order remainder: d²v/dt² ∈ [A]·([A]·Ṽ + inf c).
  const Interval half_h2(0.0, rnd::mul_up(rnd::mul_up(dt, dt), 0.5));
  const IntervalVector Rv = half_h2 * (A * (A * Vt + clo));
  const IntervalVector Rw = half_h2 * (A * (A * Wt + chi));
  IntervalVector r(n);
  for (std::size_t i = 0; i < n; ++i) {
    double lo = rnd::add_down(rnd::add_down(v[i], rnd::mul_down(dt, field_lo(A, c, v, i))), Rv[i].lo());
    double hi = rnd::add_up(rnd::add_up(w[i], rnd::mul_up(dt, field_hi(A, c, w, i))), Rw[i].hi());
    lo = std::max(lo, Vt[i].lo());
    hi = std::min(hi, Wt[i].hi());
    r[i] = Interval(std::min(lo, hi), std::max(lo, hi));
  }
  return r;
}

namespace {

IntervalVector bracketing_advance(const IntervalMatrix& A, const IntervalVector& c, const IntervalVector& box,
                                  double h, int depth) {
  try {
    return bracketing_step(A, c, box, h);
  } catch (const StepRejected&) {
    if (depth >= 20) throw;
    const IntervalVector mid = bracketing_advance(A, c, box, h / 2, depth + 1);
    return bracketing_advance(A, c, mid, h - h / 2, depth + 1);
  }
}

}  // namespace

BracketTube integrate_bracketing(const LinearIntervalSystem& sys, const IntervalVector& box0, double t_end,
                                 const Interval& u) {
  if (!(t_end >= 0)) throw std::invalid_argument("integrate_bracketing: t_end must be >= 0");
  if (!(sys.dt > 0)) throw std::invalid_argument("integrate_bracketing: dt must be positive");
  const IntervalVector c = sys.b ? u * *sys.b : IntervalVector(box0.size());
  check_bracketing_args(sys.A, c, box0, sys.dt);
  BracketTube tube;
  tube.times.push_back(0.0);
  tube.v.push_back(box0.lo());
  tube.w.push_back(box0.hi());
  const auto steps = static_cast<long>(std::ceil(t_end / sys.dt - 1e-9));
  IntervalVector x = box0;
  double t = 0;
  for (long k = 1; k <= steps; ++k) {
    const double tk = k == steps ? t_end : static_cast<double>(k) * sys.dt;
    x = bracketing_advance(sys.A, c, x, tk - t, 0);
    t = tk;
    tube.times.push_back(t);
    tube.v.push_back(x.lo());
    tube.w.push_back(x.hi());
  }
  return tube;
}

ValidatedStep validated_step(const NonlinearSystemModel& model, const IntervalVector& box, const IntervalVector& u,
                             const IntervalVector& p, double dt) {
  if (!(dt > 0)) throw std::invalid_argument("validated_step: dt must be positive");
  if (box.is_empty()) throw std::invalid_argument("validated_step: empty box");
  const Interval H(0.0, dt);
  auto F = [&](const IntervalVector& z) {
    try {
      return model.eval(z, u, p);
    } catch (const DomainError& e) {
      throw StepRejected(std::string("validated_step: model not evaluable on enclosure: ") + e.what());
    }
  };

  IntervalVector guess = box + H * F(box);
  IntervalVector apriori;
  bool ok = false;
  for (int attempt = 0; attempt < 20 && !ok; ++attempt) {
    const IntervalVector C = inflate(guess, 1.1, 1e-12);
    IntervalVector Y = box + H * F(C);
    ok = Y.subset_of(C) && bounded(C);
    if (ok) apriori = std::move(Y);
    else guess = hull(guess, Y);
  }
  if (!ok) throw StepRejected("validated_step: Picard test failed for dt = " + std::to_string(dt));

  // Euler image of the box: mean-value form intersected with the natural
  // extension; both enclose {x + dt·f(x) : x ∈ box}.
  const Interval h(dt);
  const IntervalVector M = IntervalVector::from_points(box.mid());
  IntervalMatrix G;
  try {
    G = IntervalMatrix::identity(box.size()) + h * model.eval_jacobian(box, u, p);
  } catch (const DomainError& e) {
    throw StepRejected(std::string("validated_step: Jacobian not evaluable: ") + e.what());
  }
  const IntervalVector mv = M + h * F(M) + G * (box - M);
  const IntervalVector natural = box + h * F(box);
  IntervalVector euler = intersect(mv, natural);
  if (euler.is_empty()) euler = natural;

  // Integral remainder ∫(dt - s)·(J f)(x(s)) ds ∈ [0, dt²/2]·(J f)(Ã).
  IntervalVector ff(box.size());
  try {
    const IntervalVector e = model.env(apriori, u, p);
    for (std::size_t i = 0; i < ff.size(); ++i) ff[i] = model.flow_derivative()[i].eval(e);
  } catch (const DomainError& e) {
    throw StepRejected(std::string("validated_step: remainder not evaluable: ") + e.what());
  }
  const Interval half_h2(0.0, rnd::mul_up(rnd::mul_up(dt, dt), 0.5));
  IntervalVector end = intersect(euler + half_h2 * ff, apriori);
  if (end.is_empty()) end = euler + half_h2 * ff;  // cannot happen in exact arithmetic
  return {std::move(end), std::move(apriori)};
}

IntervalVector validated_euler_step(const NonlinearSystemModel& model, const IntervalVector& box,
                                    const IntervalVector& u, const IntervalVector& p, double dt) {
  return validated_step(model, box, u, p, dt).end;
}

namespace {

IntervalVector advance(const NonlinearSystemModel& model, const IntervalVector& x, const IntervalVector& u,
                       const IntervalVector& p, double h, int depth, int max_depth, IntervalVector* sweep) {
  try {
    ValidatedStep s = validated_step(model, x, u, p, h);
    if (sweep) *sweep = hull(*sweep, s.apriori);
    return std::move(s.end);
  } catch (const StepRejected&) {
    if (depth >= max_depth) throw;
    const IntervalVector m = advance(model, x, u, p, h / 2, depth + 1, max_depth, sweep);
    return advance(model, m, u, p, h - h / 2, depth + 1, max_depth, sweep);
  }
}

}  // namespace

IntervalVector propagate(const NonlinearSystemModel& model, const IntervalVector& box, const IntervalVector& u,
                         const IntervalVector& p, double t0, double t1, double dt, IntervalVector* sweep,
                         int max_halvings) {
  if (!(t1 >= t0)) throw std::invalid_argument("propagate: t1 < t0");
  if (!(dt > 0)) throw std::invalid_argument("propagate: dt must be positive");
  if (sweep) *sweep = box;
  if (t1 == t0) return box;
  const auto steps = std::max(1L, static_cast<long>(std::ceil((t1 - t0) / dt - 1e-9)));
  const double h = (t1 - t0) / static_cast<double>(steps);
  IntervalVector x = box;
  for (long k = 0; k < steps; ++k) {
    const double hk = k + 1 == steps ? (t1 - (t0 + static_cast<double>(k) * h)) : h;
    x = advance(model, x, u, p, hk, 0, max_halvings, sweep);
  }
  return x;
}

namespace {

IntervalMatrix rotation_scaling() {
  const Interval s = Interval(1.0) / sqrt(Interval(2.0));
  return IntervalMatrix{{s, s}, {-s, s}};
}

IntervalVector unit_box() { return IntervalVector{Interval(-1, 1), Interval(-1, 1)}; }

}  // namespace

IntervalVector wrapping_naive(int k) {
  if (k < 0) throw std::invalid_argument("wrapping_naive: k must be >= 0");
  const IntervalMatrix A = rotation_scaling();
  IntervalVector x = unit_box();
  for (int i = 0; i < k; ++i) x = A * x;
  return x;
}

IntervalVector wrapping_power(int k) {
  if (k < 0) throw std::invalid_argument("wrapping_power: k must be >= 0");
  const IntervalMatrix A = rotation_scaling();
  IntervalMatrix P = IntervalMatrix::identity(2);
  for (int i = 0; i < k; ++i) P = P * A;
  return P * unit_box();
}

}  // namespace setctl
