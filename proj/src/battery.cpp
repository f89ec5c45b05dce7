#include "setctl/battery.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>

#include "setctl/csv.hpp"
#include "setctl/expr.hpp"
#include "setctl/reach.hpp"

namespace setctl::battery {

Interval Poly::eval(const Interval& s) const {
  if (c.empty()) return Interval(0.0);
  Interval r = c.back();
  for (std::size_t i = c.size() - 1; i-- > 0;) r = r * s + c[i];
  return r;
}

void BatteryParams::validate() const {
  if (!(c_bat > 0) || !std::isfinite(c_bat)) throw std::invalid_argument("battery: c_bat must be positive");
  for (const Poly* q : {&r_ts, &r_tl, &c_ts, &c_tl}) {
    if (q->c.empty()) throw std::invalid_argument("battery: empty RC fit");
    for (const auto& k : q->c)
      if (k.is_empty() || !k.is_finite()) throw std::invalid_argument("battery: RC coefficient must be finite");
  }
  for (const auto& k : v)
    if (k.is_empty()) throw std::invalid_argument("battery: empty OCV coefficient");
}

namespace {

const Interval kUnit(0.0, 1.0);

// φ at a point, rounded down (dir < 0) or up.
double phi_point(double z, int dir) {
  if (z == 0) return 1.0;
  if (std::abs(z) < 0.01) {
    // 1 + z/2 + z²/6 + z³/24 + z⁴/120 + R, |R| <= |z|⁵/700 for |z| < 0.01
    const Interval Z(z);
    const double r5 = rnd::div_up(rnd::pow_up(std::abs(z), 5), 700.0);
    const Interval s = Interval(1.0) + Z / Interval(2.0) + sqr(Z) / Interval(6.0) + pow(Z, 3) / Interval(24.0) +
                       pow(Z, 4) / Interval(120.0) + Interval(-r5, r5);
    return dir < 0 ? s.lo() : s.hi();
  }
  if (z > 0) {
    if (dir < 0) return rnd::div_down(rnd::sub_down(rnd::exp_down(z), 1.0), z);
    return rnd::div_up(rnd::sub_up(rnd::exp_up(z), 1.0), z);
  }
  // (1 - e^z)/(-z), both parts positive
  if (dir < 0) return rnd::div_down(rnd::sub_down(1.0, rnd::exp_up(z)), -z);
  return rnd::div_up(rnd::sub_up(1.0, rnd::exp_down(z)), -z);
}

Interval clip_unit(const Interval& sigma, const char* who) {
  if (sigma.is_empty()) throw std::invalid_argument(std::string(who) + ": empty σ interval");
  if (!sigma.subset_of(kUnit)) throw std::invalid_argument(std::string(who) + ": σ must lie in [0, 1]");
  return sigma;
}

IntervalMatrix rc_matrix(const BatteryParams& p, const Interval& S, IntervalVector& b) {
  const Interval rts = p.r_ts.eval(S), rtl = p.r_tl.eval(S), cts = p.c_ts.eval(S), ctl = p.c_tl.eval(S);
  if (!(rts.lo() > 0 && rtl.lo() > 0 && cts.lo() > 0 && ctl.lo() > 0))
    throw std::invalid_argument("battery: RC enclosure not strictly positive");
  IntervalMatrix A(3, 3);
  A(1, 1) = -(Interval(1.0) / (rts * cts));
  A(2, 2) = -(Interval(1.0) / (rtl * ctl));
  b = IntervalVector{-(Interval(1.0) / Interval(p.c_bat)), Interval(1.0) / cts, Interval(1.0) / ctl};
  return A;
}

}  // namespace

Interval phi(const Interval& z) {
  if (z.is_empty()) return Interval::empty();
  const double lo = z.lo() == -rnd::kInf ? 0.0 : phi_point(z.lo(), -1);
  const double hi = z.hi() == rnd::kInf ? rnd::kInf : phi_point(z.hi(), 1);
  return Interval(std::max(0.0, lo), hi);
}

Interval eta_oc(const BatteryParams& p, const Interval& sigma) {
  return p.v[0] * p.v[1] * phi(p.v[1] * sigma) + p.v[3] + p.v[4] * sigma + p.v[5] * sqr(sigma);
}

Interval ocv_tilde(const BatteryParams& p, const Interval& sigma) {
  return p.v[0] * (exp(p.v[1] * sigma) - Interval(1.0)) + p.v[3] * sigma + p.v[4] * sqr(sigma) +
         p.v[5] * pow(sigma, 3);
}

Interval ocv_slope(const BatteryParams& p, const Interval& sigma) {
  return p.v[0] * p.v[1] * exp(p.v[1] * sigma) + p.v[3] + Interval(2.0) * p.v[4] * sigma +
         Interval(3.0) * p.v[5] * sqr(sigma);
}

System build_system(const BatteryParams& p, const Interval& sigma) {
  const Interval S = clip_unit(sigma, "build_system");
  System s;
  s.A = rc_matrix(p, S, s.b);
  s.c_eta = eta_oc(p, S);
  return s;
}

Interval measurement_star(const Interval& y_m, const BatteryParams& p) { return y_m - p.offset(); }

bool h1_stable(double h1, const BatteryParams& p) {
  const Interval e = eta_oc(p, kUnit);
  return rnd::mul_down(h1, e.lo()) >= 1e-6;
}

IntervalVector observer_step(const IntervalVector& x, double u, const Interval& y_star, double h1,
                             const BatteryParams& p, double dt) {
  if (x.size() != 3) throw DimensionError("observer_step: state box must have 3 components");
  if (x.is_empty() || y_star.is_empty()) throw std::invalid_argument("observer_step: empty state or measurement");
  if (!(h1 >= 0) || !std::isfinite(h1)) throw std::invalid_argument("observer_step: h1 must be >= 0");
  if (!(dt > 0)) throw std::invalid_argument("observer_step: dt must be > 0");
  const Interval H(0.0, dt);

  // A-priori enclosure of the true trajectory over the step, with the
  // σ-range used for the coefficients checked against it.
  Interval S = intersect(x[0], kUnit);
  if (S.is_empty()) throw std::runtime_error("observer_step: σ enclosure left [0, 1]");
  IntervalMatrix A;
  IntervalVector b;
  IntervalVector Xa;
  bool ok = false;
  for (int attempt = 0; attempt < 30 && !ok; ++attempt) {
    A = rc_matrix(p, S, b);
    const IntervalVector f0 = Interval(u) * b;
    IntervalVector Y = x + H * (A * x + f0);
    bool inner = false;
    for (int it = 0; it < 20 && !inner; ++it) {
      const IntervalVector C = inflate(Y, 1.1, 1e-12);
      Y = x + H * (A * C + f0);
      inner = Y.subset_of(C);
    }
    if (!inner) throw StepRejected("observer_step: no a-priori enclosure");
    Xa = Y;
    const Interval sa = intersect(Xa[0], kUnit);
    if (sa.is_empty()) throw std::runtime_error("observer_step: σ enclosure left [0, 1]");
    if (sa.subset_of(S)) {
      ok = true;
    } else {
      S = intersect(inflate(hull(S, sa), 1.1, 1e-12), kUnit);
    }
  }
  if (!ok) throw StepRejected("observer_step: σ range did not settle");

  // Output over the step: y*(t) ∈ y*_k + [0, dt]·ẏ.
  const Interval slope = ocv_slope(p, S);
  const IntervalVector fx = A * Xa + Interval(u) * b;
  const Interval ydot = slope * fx[0] - fx[1] - fx[2];
  const Interval y_step = y_star + H * ydot;

  const Interval eta = eta_oc(p, S);
  IntervalMatrix Ao = A;
  Ao(0, 0) = Ao(0, 0) - Interval(h1) * eta;
  Ao(0, 1) = Ao(0, 1) + Interval(h1);
  Ao(0, 2) = Ao(0, 2) + Interval(h1);
  if (!metzler_check(Ao)) throw MetzlerViolation("observer_step: observer matrix is not Metzler");
  IntervalVector c = Interval(u) * b;
  c[0] = c[0] + Interval(h1) * y_step;

  IntervalVector r = bracketing_step(Ao, c, x, dt);
  r = intersect(r, Xa);
  r[0] = intersect(r[0], kUnit);
  if (r.is_empty()) throw std::runtime_error("observer_step: empty enclosure");
  return r;
}

GammaBox voc_estimate(const IntervalVector& x, const Interval& y_star) {
  if (x.size() != 3) throw DimensionError("voc_estimate: state box must have 3 components");
  return {x[0], y_star + x[1] + x[2]};
}

GammaBox graph_box(const GammaBox& g, const BatteryParams& priors) {
  const Interval S = intersect(g.sigma, kUnit);
  if (S.is_empty() || g.voc.is_empty()) throw std::invalid_argument("graph_box: empty box");
  const Interval d = S - S;
  return {S, g.voc + ocv_slope(priors, S) * d};
}

// ---- tube -----------------------------------------------------------------

Interval OCVTube::at(double s) const {
  Interval r = Interval::empty();
  for (const auto& q : seg)
    if (q.sigma.contains(s)) r = hull(r, q.voc);
  return r;
}

void OCVTube::write_csv(std::ostream& os) const {
  os << "sigma_lo,sigma_hi,voc_lo,voc_hi,flag\n";
  os.precision(17);
  for (const auto& q : seg)
    os << q.sigma.lo() << ',' << q.sigma.hi() << ',' << q.voc.lo() << ',' << q.voc.hi() << ',' << (q.flag ? 1 : 0)
       << '\n';
}

namespace {

bool ulp_close(double a, double b) { return a == b || std::nextafter(a, b) == b; }

bool mergeable(const Segment& a, const Segment& b) {
  return a.sigma.hi() == b.sigma.lo() && a.flag == b.flag && ulp_close(a.voc.lo(), b.voc.lo()) &&
         ulp_close(a.voc.hi(), b.voc.hi());
}

}  // namespace

OCVTube tube_update(OCVTube tube, GammaBox g) {
  if (g.sigma.is_empty() || g.voc.is_empty()) throw std::invalid_argument("tube_update: empty box");
  if (g.sigma.is_degenerate()) g.sigma = Interval(rnd::down(g.sigma.lo()), rnd::up(g.sigma.hi()));
  auto& s = tube.seg;
  // segments overlapping g with positive length
  const auto first = std::find_if(s.begin(), s.end(), [&](const Segment& q) { return q.sigma.hi() > g.sigma.lo(); });
  auto last = first;
  while (last != s.end() && last->sigma.lo() < g.sigma.hi()) ++last;

  std::vector<double> cuts{g.sigma.lo(), g.sigma.hi()};
  for (auto it = first; it != last; ++it) {
    cuts.push_back(it->sigma.lo());
    cuts.push_back(it->sigma.hi());
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  std::vector<Segment> out;
  auto cur = first;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    const double a = cuts[k], b = cuts[k + 1];
    while (cur != last && cur->sigma.hi() <= a) ++cur;
    const bool in_old = cur != last && cur->sigma.lo() <= a && b <= cur->sigma.hi();
    const bool in_new = g.sigma.lo() <= a && b <= g.sigma.hi();
    if (!in_old && !in_new) continue;
    Segment q{Interval(a, b), Interval::empty(), false};
    if (in_old && in_new) {
      q.voc = intersect(cur->voc, g.voc);
      q.flag = cur->flag;
      if (q.voc.is_empty()) {
        q.voc = cur->voc.width() <= g.voc.width() ? cur->voc : g.voc;
        q.flag = true;
        ++tube.conflicts;
      }
    } else if (in_old) {
      q.voc = cur->voc;
      q.flag = cur->flag;
    } else {
      q.voc = g.voc;
    }
    if (!out.empty() && mergeable(out.back(), q)) {
      out.back().sigma = Interval(out.back().sigma.lo(), b);
      out.back().voc = hull(out.back().voc, q.voc);
    } else {
      out.push_back(q);
    }
  }

  const auto pos = s.erase(first, last);
  const std::size_t at = static_cast<std::size_t>(pos - s.begin());
  s.insert(s.begin() + static_cast<std::ptrdiff_t>(at), out.begin(), out.end());
  // merge across the seams with neighbours
  const std::size_t lo = at == 0 ? 0 : at - 1;
  std::size_t hi = std::min(s.size(), at + out.size() + 1);
  for (std::size_t i = lo; i + 1 < hi;) {
    if (mergeable(s[i], s[i + 1])) {
      s[i].sigma = Interval(s[i].sigma.lo(), s[i + 1].sigma.hi());
      s[i].voc = hull(s[i].voc, s[i + 1].voc);
      s.erase(s.begin() + static_cast<std::ptrdiff_t>(i) + 1);
      --hi;
    } else {
      ++i;
    }
  }
  return tube;
}

OCVTube voc_contract(OCVTube tube, const BatteryParams& priors) {
  // ṽ = v0 (e^{v1 σ} - 1) + v3 σ + v4 σ² + v5 σ³ over (σ, ṽ, v0, v1, v3, v4, v5)
  const Expr sg = Expr::var(0), vt = Expr::var(1);
  const Expr rel = Expr::var(2) * (exp(Expr::var(3) * sg) - Expr(1.0)) + Expr::var(4) * sg +
                   Expr::var(5) * sqr(sg) + Expr::var(6) * pow(sg, 3) - vt;
  for (auto& q : tube.seg) {
    const IntervalVector env{q.sigma, q.voc, priors.v[0], priors.v[1], priors.v[3], priors.v[4], priors.v[5]};
    const IntervalVector r = hc4_contract(rel, Interval(0.0), env);
    if (r.is_empty()) {
      if (!q.flag) ++tube.conflicts;
      q.flag = true;
      continue;
    }
    // only ṽ is narrowed: the σ range is where the bound is asserted
    q.voc = intersect(q.voc, r[1]);
  }
  return tube;
}

// ---- demo -----------------------------------------------------------------

BatteryParams midpoint(const BatteryParams& p) {
  BatteryParams m = p;
  for (Poly* q : {&m.r_ts, &m.r_tl, &m.c_ts, &m.c_tl})
    for (auto& k : q->c) k = Interval(k.mid());
  for (auto& k : m.v) k = Interval(k.mid());
  return m;
}

BatteryParams demo_params(double rel_radius) {
  auto rad = [](double x, double r) {
    const double d = std::abs(x) * r;
    return Interval(x - d, x + d);
  };
  const double r = rel_radius, rv = rel_radius / 10;
  BatteryParams p;
  p.c_bat = 1800;
  p.r_ts.c = {rad(0.010, r), rad(-0.004, r)};
  p.c_ts.c = {rad(1000, r), rad(200, r)};
  p.r_tl.c = {rad(0.020, r), rad(-0.005, r)};
  p.c_tl.c = {rad(20000, r), rad(2000, r)};
  const double v[6] = {-1, -12, 4, 0.6, -0.8, 0.4};
  for (int i = 0; i < 6; ++i) p.v[static_cast<std::size_t>(i)] = rad(v[i], rv);
  return p;
}

double demo_current(double t) {
  const double ph = std::fmod(t, 1000.0);
  if (ph < 400) return 1.0;
  if (ph < 500) return 0.0;
  if (ph < 900) return -1.0;
  return 0.0;
}

namespace {

double pt(const Poly& q, double s) {
  double r = 0;
  for (std::size_t i = q.c.size(); i-- > 0;) r = r * s + q.c[i].mid();
  return r;
}

std::vector<double> truth_field(const BatteryParams& p, const std::vector<double>& x, double u) {
  const double s = x[0];
  const double cts = pt(p.c_ts, s), ctl = pt(p.c_tl, s);
  return {-u / p.c_bat, -x[1] / (pt(p.r_ts, s) * cts) + u / cts, -x[2] / (pt(p.r_tl, s) * ctl) + u / ctl};
}

double truth_output(const BatteryParams& p, const std::vector<double>& x) {
  const double s = x[0];
  const double v0 = p.v[0].mid(), v1 = p.v[1].mid();
  return v0 + p.v[2].mid() + v0 * std::expm1(v1 * s) + p.v[3].mid() * s + p.v[4].mid() * s * s +
         p.v[5].mid() * s * s * s - x[1] - x[2];
}

}  // namespace

ObserverRun run_observer(const BatteryParams& truth, const BatteryParams& est,
                         const std::function<double(double)>& current, const ObserverConfig& cfg) {
  truth.validate();
  est.validate();
  if (!(cfg.dt > 0) || cfg.steps < 0 || !(cfg.dv >= 0)) throw std::invalid_argument("run_observer: bad config");
  if (cfg.x_true0.size() != 3) throw DimensionError("run_observer: x_true0 must have 3 components");
  IntervalVector box = cfg.x_box0;
  if (box.size() == 0) {
    const double r[3] = {0.05, 0.01, 0.01};
    box = IntervalVector(3);
    for (std::size_t i = 0; i < 3; ++i) box[i] = Interval(cfg.x_true0[i] - r[i], cfg.x_true0[i] + r[i]);
    box[0] = intersect(box[0], kUnit);
  }
  if (box.size() != 3) throw DimensionError("run_observer: x_box0 must have 3 components");

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> noise(-0.9 * cfg.dv, 0.9 * cfg.dv);
  ObserverRun run;
  std::vector<double> x = cfg.x_true0;
  for (int k = 0;; ++k) {
    const double t = k * cfg.dt;
    run.t.push_back(t);
    run.x_true.push_back(x);
    run.x_box.push_back(box);
    run.outside += !box.contains(x);
    const double y = truth_output(truth, x) + noise(rng);
    run.y_m.push_back(y);
    const Interval ys = measurement_star(Interval(y - cfg.dv, y + cfg.dv), est);
    run.tube = tube_update(std::move(run.tube), graph_box(voc_estimate(box, ys), est));
    if (k == cfg.steps) break;

    const double u = current(t);
    box = observer_step(box, u, ys, cfg.h1, est, cfg.dt);
    // truth: RK4 with 10 sub-steps, input held
    const int sub = 10;
    const double h = cfg.dt / sub;
    for (int q = 0; q < sub; ++q) {
      auto add = [](const std::vector<double>& a, const std::vector<double>& b, double s) {
        return std::vector<double>{a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]};
      };
      const auto k1 = truth_field(truth, x, u);
      const auto k2 = truth_field(truth, add(x, k1, h / 2), u);
      const auto k3 = truth_field(truth, add(x, k2, h / 2), u);
      const auto k4 = truth_field(truth, add(x, k3, h), u);
      for (int i = 0; i < 3; ++i) x[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    }
  }
  if (cfg.contract) run.tube = voc_contract(std::move(run.tube), est);
  return run;
}

std::vector<CellRecord> read_cell_csv(std::istream& is) {
  const csv::Table t = csv::read(is);
  std::vector<CellRecord> out;
  for (const auto& r : t.rows) {
    if (r.size() != 4) throw std::invalid_argument("read_cell_csv: expected columns t, i_T, v_T, dv_T");
    if (!(r[3] >= 0)) throw std::invalid_argument("read_cell_csv: dv_T must be nonnegative");
    if (!out.empty() && !(r[0] > out.back().t)) throw std::invalid_argument("read_cell_csv: times must increase");
    out.push_back({r[0], r[1], r[2], r[3]});
  }
  return out;
}

void write_cell_csv(std::ostream& os, const std::vector<CellRecord>& recs) {
  csv::write_header(os, {"t", "i_T", "v_T", "dv_T"});
  for (const auto& r : recs) csv::write_row(os, {r.t, r.i, r.v, r.dv});
}

std::vector<CellRecord> cell_records(const ObserverRun& run, const std::function<double(double)>& current, double dv) {
  std::vector<CellRecord> out;
  for (std::size_t k = 0; k < run.t.size(); ++k) out.push_back({run.t[k], current(run.t[k]), run.y_m[k], dv});
  return out;
}

ObserverRun run_on_data(const BatteryParams& est, const std::vector<CellRecord>& recs, double h1,
                        const IntervalVector& x_box0, bool contract) {
  est.validate();
  if (recs.empty()) throw std::invalid_argument("run_on_data: no records");
  if (x_box0.size() != 3) throw DimensionError("run_on_data: x_box0 must have 3 components");
  IntervalVector box = x_box0;
  box[0] = intersect(box[0], kUnit);
  if (box[0].is_empty()) throw std::invalid_argument("run_on_data: initial σ outside [0, 1]");
  ObserverRun run;
  for (std::size_t k = 0; k < recs.size(); ++k) {
    const CellRecord& r = recs[k];
    run.t.push_back(r.t);
    run.x_box.push_back(box);
    run.y_m.push_back(r.v);
    const Interval ys = measurement_star(Interval(r.v - r.dv, r.v + r.dv), est);
    run.tube = tube_update(std::move(run.tube), graph_box(voc_estimate(box, ys), est));
    if (k + 1 == recs.size()) break;
    box = observer_step(box, r.i, ys, h1, est, recs[k + 1].t - r.t);
  }
  if (contract) run.tube = voc_contract(std::move(run.tube), est);
  return run;
}

}  // namespace setctl::battery
