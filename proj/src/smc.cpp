#include "setctl/smc.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "setctl/csv.hpp"

namespace setctl::smc {

Variant parse_variant(const std::string& s) {
  static const std::pair<const char*, Variant> names[] = {{"I", Variant::I},   {"IA", Variant::IA},
                                                          {"IB", Variant::IB}, {"II", Variant::II},
                                                          {"IIA", Variant::IIA}, {"IIB", Variant::IIB}};
  for (const auto& [k, v] : names) {
    if (s == k) return v;
  }
  throw std::invalid_argument("unknown controller variant '" + s + "'");
}

const char* to_string(Variant v) {
  switch (v) {
    case Variant::I: return "I";
    case Variant::IA: return "IA";
    case Variant::IB: return "IB";
    case Variant::II: return "II";
    case Variant::IIA: return "IIA";
    case Variant::IIB: return "IIB";
  }
  return "?";
}

void CanonicalPlant::validate() const {
  if (n < 1) throw std::invalid_argument("CanonicalPlant: order must be >= 1");
  const int arity = n + static_cast<int>(p_box.size());
  if (a.max_var() >= arity || b.max_var() >= arity) throw DimensionError("CanonicalPlant: a/b reference unknown variables");
  if (p_box.is_empty()) throw std::invalid_argument("CanonicalPlant: empty parameter box");
}

bool is_hurwitz(const std::vector<double>& c) {
  std::vector<double> d(c.rbegin(), c.rend());  // descending powers
  while (!d.empty() && d.front() == 0) d.erase(d.begin());
  if (d.empty()) return false;
  if (d.size() == 1) return true;
  if (d[0] < 0)
    for (double& x : d) x = -x;
  for (double x : d) {
    if (!(x > 0)) return false;
  }
  // Routh array: first column must stay positive
  std::vector<double> r0, r1;
  for (std::size_t i = 0; i < d.size(); i += 2) r0.push_back(d[i]);
  for (std::size_t i = 1; i < d.size(); i += 2) r1.push_back(d[i]);
  for (std::size_t row = 2; row < d.size(); ++row) {
    if (!(r1[0] > 0)) return false;
    std::vector<double> r2;
    for (std::size_t i = 0; i + 1 < r0.size(); ++i) {
      const double b = i + 1 < r1.size() ? r1[i + 1] : 0.0;
      r2.push_back((r1[0] * r0[i + 1] - r0[0] * b) / r1[0]);
    }
    if (r2.empty()) r2.push_back(0.0);
    r0 = std::move(r1);
    r1 = std::move(r2);
  }
  return r1[0] > 0;
}

void SurfaceConfig::validate(int n) const {
  if (static_cast<int>(alpha.size()) != n) throw DimensionError("SurfaceConfig: alpha must have n entries");
  if (alpha.back() != 1.0) throw std::invalid_argument("SurfaceConfig: alpha_{n-1} must be 1");
  if (!is_hurwitz(alpha)) throw std::invalid_argument("SurfaceConfig: alpha is not a Hurwitz polynomial");
  if (!(gamma0 > 0) || !(gamma1 > 0)) throw std::invalid_argument("SurfaceConfig: gamma0, gamma1 must be > 0");
}

void GainConfig::validate() const {
  if (!(eta_t > 0 && eta1_t > 0 && eta2_t > 0 && eps_t > 0 && eps_sel > 0)) {
    throw std::invalid_argument("GainConfig: all gains must be > 0");
  }
}

void BarrierConfig::validate() const {
  if (!(rho_v > 0 && sigma_v > 0 && dx1max > 0 && chi_bar > 0)) {
    throw std::invalid_argument("BarrierConfig: rho_v, sigma_v, dx1max, chi_bar must be > 0");
  }
  if (l < 1) throw std::invalid_argument("BarrierConfig: l must be >= 1");
}

void ControllerConfig::validate(int n) const {
  surface.validate(n);
  gains.validate();
  if (barrier_a(variant) || barrier_b(variant)) {
    barrier.validate();
    if (n < 2) throw std::invalid_argument("barrier variants need order >= 2 (ẋ_1 must be a state)");
  }
}

std::vector<double> Reference::at(double t) const {
  std::vector<double> d = derivs(t);
  if (static_cast<int>(d.size()) != n + 1) throw DimensionError("Reference: expected n+1 derivatives");
  return d;
}

Reference Reference::sine(int n, double offset, double amp, double omega) {
  Reference r;
  r.n = n;
  r.derivs = [=](double t) {
    std::vector<double> d(static_cast<std::size_t>(n) + 1);
    double scale = amp;
    for (int k = 0; k <= n; ++k) {
      // k-th derivative of amp·sin(ωt) is amp·ω^k·sin(ωt + kπ/2)
      const double ph = omega * t;
      double v = 0;
      switch (k % 4) {
        case 0: v = std::sin(ph); break;
        case 1: v = std::cos(ph); break;
        case 2: v = -std::sin(ph); break;
        case 3: v = -std::cos(ph); break;
      }
      d[static_cast<std::size_t>(k)] = scale * v + (k == 0 ? offset : 0.0);
      scale *= omega;
    }
    return d;
  };
  return r;
}

// ---- point laws ------------------------------------------------------------

namespace {

double sgn(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

int order_of(const std::vector<double>& xi, const SurfaceConfig& cfg) {
  if (xi.size() < 2) throw DimensionError("xi must hold ξ^(-1) and at least ξ^(0)");
  const int n = static_cast<int>(xi.size()) - 1;
  if (static_cast<int>(cfg.alpha.size()) != n) throw DimensionError("alpha size differs from the order");
  return n;
}

}  // namespace

SlidingValues sliding_values(const std::vector<double>& xi, const SurfaceConfig& cfg, std::optional<double> s_state) {
  const int n = order_of(xi, cfg);
  double s = 0, lag = cfg.alpha_m1 * xi[0];
  for (int r = 0; r < n; ++r) {
    s += cfg.alpha[r] * xi[r + 1];
    lag += cfg.alpha[r] * xi[r + 1];
  }
  if (s_state) s = *s_state;
  return {s, (lag - cfg.gamma0 * s) / cfg.gamma1};
}

double u_first_order(const std::vector<double>& xi, double xd_n, const SurfaceConfig& cfg, const GainConfig& g) {
  const int n = order_of(xi, cfg);
  const double s = sliding_values(xi, cfg).s;
  double sum = 0;
  for (int r = 0; r + 1 < n; ++r) sum += cfg.alpha[r] * xi[r + 2];
  return xd_n - sum - g.eta_t * sgn(s);
}

double u_second_order(const std::vector<double>& xi, double s, double s_dot, double xd_n, const SurfaceConfig& cfg,
                      const GainConfig& g) {
  const int n = order_of(xi, cfg);
  const double an = cfg.alpha[n - 1];
  if (an == 0) throw std::invalid_argument("u_second_order: alpha_{n-1} must be nonzero");
  // Σ_{r=0}^{n-1} α_{r-1} ξ^(r)
  double sum = cfg.alpha_m1 * xi[1];
  for (int r = 1; r < n; ++r) sum += cfg.alpha[r - 1] * xi[r + 1];
  return xd_n + (cfg.gamma0 * s_dot - s - sum - sgn(s_dot) * (g.eta1_t + g.eta2_t * std::abs(s))) / an;
}

double barrier_A_rate(double x1, double x1_dot, const std::vector<double>& ref, const BarrierConfig& b) {
  const double xmax = ref.at(0) + b.dx1max, xmax_dot = ref.at(1);
  if (!(x1 < xmax)) throw BarrierViolation("one-sided constraint x1 < x1max violated");
  if (!(xmax > 0)) throw BarrierViolation("one-sided barrier needs a positive bound x1max");
  return b.rho_v / xmax * ((-x1 * xmax_dot + x1_dot * xmax) / (xmax - x1));
}

double barrier_B_rate(double x1, double x1_dot, const std::vector<double>& ref, const BarrierConfig& b) {
  const double e = x1 - ref.at(0), e_dot = x1_dot - ref.at(1);
  if (!(std::abs(e) < b.chi_bar)) throw BarrierViolation("two-sided constraint |x1 - x1d| < chi violated");
  const double c = std::pow(b.chi_bar, 2 * b.l);
  return b.rho_v * 2 * b.l * std::pow(e, 2 * b.l - 1) * e_dot / (c - std::pow(e, 2 * b.l));
}

namespace {

std::pair<double, double> x1_from(const std::vector<double>& xi, const std::vector<double>& ref) {
  if (xi.size() < 3) throw std::invalid_argument("barrier laws need order >= 2");
  return {xi[1] + ref.at(0), xi[2] + ref.at(1)};
}

}  // namespace

double u_first_order_A(const std::vector<double>& xi, const std::vector<double>& ref, const SurfaceConfig& cfg,
                       const GainConfig& g, const BarrierConfig& b) {
  const auto [x1, x1d] = x1_from(xi, ref);
  const double s = sliding_values(xi, cfg).s;
  return u_first_order(xi, ref.back(), cfg, g) - s / (s * s + g.eps_t) * barrier_A_rate(x1, x1d, ref, b);
}

double u_first_order_B(const std::vector<double>& xi, const std::vector<double>& ref, const SurfaceConfig& cfg,
                       const GainConfig& g, const BarrierConfig& b) {
  const auto [x1, x1d] = x1_from(xi, ref);
  const double s = sliding_values(xi, cfg).s;
  return u_first_order(xi, ref.back(), cfg, g) - s / (s * s + g.eps_t) * barrier_B_rate(x1, x1d, ref, b);
}

double u_second_order_A(const std::vector<double>& xi, double s, double s_dot, const std::vector<double>& ref,
                        const SurfaceConfig& cfg, const GainConfig& g, const BarrierConfig& b) {
  const auto [x1, x1d] = x1_from(xi, ref);
  return u_second_order(xi, s, s_dot, ref.back(), cfg, g) -
         s_dot / (s_dot * s_dot + g.eps_t) * barrier_A_rate(x1, x1d, ref, b) / cfg.alpha.back();
}

double u_second_order_B(const std::vector<double>& xi, double s, double s_dot, const std::vector<double>& ref,
                        const SurfaceConfig& cfg, const GainConfig& g, const BarrierConfig& b) {
  const auto [x1, x1d] = x1_from(xi, ref);
  return u_second_order(xi, s, s_dot, ref.back(), cfg, g) -
         s_dot / (s_dot * s_dot + g.eps_t) * barrier_B_rate(x1, x1d, ref, b) / cfg.alpha.back();
}

namespace {

std::vector<double> xi_point(const std::vector<double>& x, const std::vector<double>& ref, const ControllerState& st) {
  std::vector<double> xi{st.xi_int};
  for (std::size_t r = 0; r < x.size(); ++r) xi.push_back(x[r] - ref.at(r));
  return xi;
}

std::vector<double> env_point(const std::vector<double>& x, const std::vector<double>& p) {
  std::vector<double> e = x;
  e.insert(e.end(), p.begin(), p.end());
  return e;
}

}  // namespace

double point_u(const std::vector<double>& x, const std::vector<double>& ref, const ControllerConfig& cfg,
               const ControllerState& st) {
  const auto xi = xi_point(x, ref, st);
  const auto& sc = cfg.surface;
  const auto& g = cfg.gains;
  if (!second_order(cfg.variant)) {
    if (barrier_a(cfg.variant)) return u_first_order_A(xi, ref, sc, g, cfg.barrier);
    if (barrier_b(cfg.variant)) return u_first_order_B(xi, ref, sc, g, cfg.barrier);
    return u_first_order(xi, ref.back(), sc, g);
  }
  const SlidingValues sv = sliding_values(xi, sc, st.s);
  if (barrier_a(cfg.variant)) return u_second_order_A(xi, sv.s, sv.s_dot, ref, sc, g, cfg.barrier);
  if (barrier_b(cfg.variant)) return u_second_order_B(xi, sv.s, sv.s_dot, ref, sc, g, cfg.barrier);
  return u_second_order(xi, sv.s, sv.s_dot, ref.back(), sc, g);
}

double point_control(const std::vector<double>& x, const std::vector<double>& p, const CanonicalPlant& plant,
                     const std::vector<double>& ref, const ControllerConfig& cfg, const ControllerState& st) {
  const auto e = env_point(x, p);
  const double b = plant.b.eval(e);
  if (b == 0) throw ControllabilityError("b(x, p) = 0");
  return (point_u(x, ref, cfg, st) - plant.a.eval(e)) / b;
}

// ---- interval laws ---------------------------------------------------------

namespace {

struct Boxes {
  std::vector<Interval> xi;  // ξ^(0)..ξ^(n-1)
  Interval s, s_dot, a, b;
};

Boxes boxes_for(const IntervalVector& x_box, const CanonicalPlant& plant, const std::vector<double>& ref,
                const ControllerConfig& cfg, const ControllerState& st) {
  const int n = plant.n;
  if (static_cast<int>(x_box.size()) != n) throw DimensionError("state box size differs from plant order");
  if (static_cast<int>(ref.size()) != n + 1) throw DimensionError("reference must hold n+1 derivatives");
  if (x_box.is_empty()) throw std::invalid_argument("empty state box");
  Boxes bx;
  const auto& sc = cfg.surface;
  Interval s(0.0), lag = Interval(sc.alpha_m1) * Interval(st.xi_int);
  for (int r = 0; r < n; ++r) {
    bx.xi.push_back(x_box[r] - Interval(ref[r]));
    s += Interval(sc.alpha[r]) * bx.xi.back();
    lag += Interval(sc.alpha[r]) * bx.xi.back();
  }
  bx.s = second_order(cfg.variant) ? Interval(st.s) : s;
  bx.s_dot = (lag - Interval(sc.gamma0) * bx.s) / Interval(sc.gamma1);

  IntervalVector env(std::vector<Interval>(x_box.begin(), x_box.end()));
  for (const auto& p : plant.p_box) env = concat(env, IntervalVector{p});
  bx.a = plant.a.eval(env);
  bx.b = plant.b.eval(env);
  if (bx.b.contains_zero()) throw ControllabilityError("0 ∈ [b]([x], [p]): controllability requirement violated");
  return bx;
}

Interval barrier_rate_box(const Boxes& bx, const std::vector<double>& ref, const ControllerConfig& cfg) {
  const BarrierConfig& b = cfg.barrier;
  const Interval x1 = bx.xi[0] + Interval(ref[0]), x1_dot = bx.xi[1] + Interval(ref[1]);
  if (barrier_a(cfg.variant)) {
    const Interval xmax = Interval(ref[0]) + Interval(b.dx1max);
    if (!(x1.hi() < xmax.lo())) throw BarrierViolation("one-sided constraint touched by the state box");
    if (!(xmax.lo() > 0)) throw BarrierViolation("one-sided barrier needs a positive bound x1max");
    return Interval(b.rho_v) / xmax * ((-x1 * Interval(ref[1]) + x1_dot * xmax) / (xmax - x1));
  }
  const Interval e = bx.xi[0], e_dot = bx.xi[1];
  if (!(e.mag() < b.chi_bar)) throw BarrierViolation("two-sided constraint touched by the state box");
  const Interval c = pow(Interval(b.chi_bar), 2 * b.l);
  return Interval(b.rho_v) * Interval(2.0 * b.l) * pow(e, 2 * b.l - 1) * e_dot / (c - pow(e, 2 * b.l));
}

// Σ_{r=0}^{n-1} α_{r-1} [ξ^(r)]
Interval shifted_sum(const Boxes& bx, const SurfaceConfig& sc) {
  Interval sum = Interval(sc.alpha_m1) * bx.xi[0];
  for (std::size_t r = 1; r < bx.xi.size(); ++r) sum += Interval(sc.alpha[r - 1]) * bx.xi[r];
  return sum;
}

}  // namespace

Interval interval_control_box(const IntervalVector& x_box, const CanonicalPlant& plant, const std::vector<double>& ref,
                              const ControllerConfig& cfg, const ControllerState& st) {
  const Boxes bx = boxes_for(x_box, plant, ref, cfg, st);
  const auto& sc = cfg.surface;
  const auto& g = cfg.gains;
  const int n = plant.n;
  const Interval xdn(ref[n]);
  Interval u;
  if (!second_order(cfg.variant)) {
    Interval sum(0.0);
    for (int r = 0; r + 1 < n; ++r) sum += Interval(sc.alpha[r]) * bx.xi[r + 1];
    u = xdn - sum - Interval(g.eta_t) * sign(bx.s);
    if (barrier_a(cfg.variant) || barrier_b(cfg.variant)) {
      u -= bx.s / (sqr(bx.s) + Interval(g.eps_t)) * barrier_rate_box(bx, ref, cfg);
    }
  } else {
    const Interval an(sc.alpha[n - 1]);
    u = xdn + (Interval(sc.gamma0) * bx.s_dot - bx.s - shifted_sum(bx, sc) -
               sign(bx.s_dot) * (Interval(g.eta1_t) + Interval(g.eta2_t) * abs(bx.s))) / an;
    if (barrier_a(cfg.variant) || barrier_b(cfg.variant)) {
      u -= bx.s_dot / (sqr(bx.s_dot) + Interval(g.eps_t)) * barrier_rate_box(bx, ref, cfg) / an;
    }
  }
  return (u - bx.a) / bx.b;
}

Interval lyapunov_rate(double v, const IntervalVector& x_box, const CanonicalPlant& plant,
                       const std::vector<double>& ref, const ControllerConfig& cfg, const ControllerState& st) {
  const Boxes bx = boxes_for(x_box, plant, ref, cfg, st);
  const auto& sc = cfg.surface;
  const int n = plant.n;
  // ξ^(n) with v applied
  const Interval xin = bx.a + bx.b * Interval(v) - Interval(ref[n]);
  const Interval an(sc.alpha[n - 1]);
  Interval vdot;
  if (!second_order(cfg.variant)) {
    Interval sdot = an * xin;
    for (int r = 0; r + 1 < n; ++r) sdot += Interval(sc.alpha[r]) * bx.xi[r + 1];
    vdot = bx.s * sdot;
  } else {
    const Interval lam(sc.lam()), g0(sc.gamma0), g1(sc.gamma1);
    vdot = bx.s_dot * (bx.s - lam * g0 / g1 * bx.s_dot + lam / g1 * (shifted_sum(bx, sc) + an * xin));
  }
  if (barrier_a(cfg.variant) || barrier_b(cfg.variant)) vdot += barrier_rate_box(bx, ref, cfg);
  return vdot;
}

double select_point_control(const Interval& v_box, const std::function<Interval(double)>& lyap, double eps) {
  if (v_box.is_empty()) throw std::invalid_argument("select_point_control: empty control interval");
  if (!v_box.is_finite()) throw StabilizationFailure("select_point_control: unbounded control interval");
  const double cands[] = {v_box.lo() - eps, v_box.lo() + eps, v_box.hi() - eps, v_box.hi() + eps};
  std::optional<double> best;
  for (double c : cands) {
    if (!(lyap(c).hi() < 0)) continue;
    if (!best || std::abs(c) < std::abs(*best) || (std::abs(c) == std::abs(*best) && c < *best)) best = c;
  }
  if (!best) throw StabilizationFailure("no candidate control certifies a negative Lyapunov derivative");
  return *best;
}

// ---- controller / closed loop ----------------------------------------------

Controller::Controller(CanonicalPlant plant, ControllerConfig cfg, Reference ref, ControllerState init)
    : plant_(std::move(plant)), cfg_(std::move(cfg)), ref_(std::move(ref)), st_(init) {
  plant_.validate();
  cfg_.validate(plant_.n);
  if (ref_.n != plant_.n) throw DimensionError("Controller: reference order differs from plant order");
}

Controller::Decision Controller::step(double t, const IntervalVector& x_box, double dt) {
  const std::vector<double> ref = ref_.at(t);
  Decision d;
  d.v_box = interval_control_box(x_box, plant_, ref, cfg_, st_);
  auto lyap = [&](double v) { return lyapunov_rate(v, x_box, plant_, ref, cfg_, st_); };
  try {
    d.v = select_point_control(d.v_box, lyap, cfg_.gains.eps_sel);
    d.certified = true;
  } catch (const StabilizationFailure&) {
    d.v = v_prev_;  // hold the previous input
    d.certified = false;
  }
  d.vdot_sup = lyap(d.v).hi();
  const auto xm = x_box.mid();
  const SlidingValues sv =
      sliding_values(xi_point(xm, ref, st_), cfg_.surface,
                     second_order(cfg_.variant) ? std::optional<double>(st_.s) : std::nullopt);
  d.s = sv.s;
  d.s_dot = sv.s_dot;
  st_.xi_int += dt * (xm[0] - ref[0]);
  if (second_order(cfg_.variant)) st_.s += dt * sv.s_dot;
  v_prev_ = d.v;
  return d;
}

void ClosedLoopLog::write_csv(std::ostream& os) const {
  std::vector<std::string> h{"t"};
  for (int i = 0; i < n; ++i) h.push_back("x_" + std::to_string(i + 1));
  for (const char* c : {"s", "s_dot", "u_applied", "u_lo", "u_hi", "certified"}) h.push_back(c);
  csv::write_header(os, h);
  for (std::size_t k = 0; k < decisions.size(); ++k) {
    std::vector<double> row{t[k]};
    row.insert(row.end(), x[k].begin(), x[k].end());
    const auto& d = decisions[k];
    row.insert(row.end(), {d.s, d.s_dot, d.v, d.v_box.lo(), d.v_box.hi(), d.certified ? 1.0 : 0.0});
    csv::write_row(os, row);
  }
}

ClosedLoopLog simulate_closed_loop(const CanonicalPlant& plant, const ControllerConfig& cfg, const Reference& ref,
                                   const ClosedLoopConfig& cl) {
  if (static_cast<int>(cl.x0.size()) != plant.n) throw DimensionError("closed loop: x0 size");
  if (cl.p_true.size() != plant.p_box.size()) throw DimensionError("closed loop: p_true size");
  if (!(cl.dt > 0) || cl.steps < 0) throw std::invalid_argument("closed loop: dt > 0 and steps >= 0 required");
  if (!(cl.meas_halfwidth >= 0)) throw std::invalid_argument("closed loop: negative measurement half-width");
  Controller ctrl(plant, cfg, ref, cl.init);
  const int n = plant.n;
  auto field = [&](const std::vector<double>& x, double v) {
    std::vector<double> dx(x.begin() + 1, x.end());
    const auto e = env_point(x, cl.p_true);
    dx.push_back(plant.a.eval(e) + plant.b.eval(e) * v);
    return dx;
  };
  ClosedLoopLog log;
  log.n = n;
  std::vector<double> x = cl.x0;
  for (int k = 0; k < cl.steps; ++k) {
    const double t = k * cl.dt;
    IntervalVector xb(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) xb[i] = Interval(x[i] - cl.meas_halfwidth, x[i] + cl.meas_halfwidth);
    const auto d = ctrl.step(t, xb, cl.dt);
    log.t.push_back(t);
    log.x.push_back(x);
    log.decisions.push_back(d);
    log.uncertified += !d.certified;
    // RK4 with the control held over the step
    const double h = cl.dt;
    auto add = [](const std::vector<double>& a, double s, const std::vector<double>& b) {
      std::vector<double> r(a.size());
      for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + s * b[i];
      return r;
    };
    const auto k1 = field(x, d.v);
    const auto k2 = field(add(x, h / 2, k1), d.v);
    const auto k3 = field(add(x, h / 2, k2), d.v);
    const auto k4 = field(add(x, h, k3), d.v);
    for (int i = 0; i < n; ++i) x[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  }
  return log;
}

}  // namespace setctl::smc
