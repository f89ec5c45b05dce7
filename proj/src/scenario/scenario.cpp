#include "setctl/scenario.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>

#include "setctl/battery.hpp"
#include "setctl/csv.hpp"
#include "setctl/ellipsoid.hpp"
#include "setctl/ident.hpp"
#include "setctl/mpc.hpp"
#include "setctl/reach.hpp"
#include "setctl/smc.hpp"

namespace setctl::scenario {

namespace fs = std::filesystem;

namespace {

// Cursor into the config that knows its own path for error messages.
class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

  const json& raw() const { return j_; }
  const std::string& path() const { return path_; }
  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(path_, msg); }

  bool has(const std::string& key) const { return j_.is_object() && j_.contains(key) && !j_.at(key).is_null(); }
  Node at(const std::string& key) const {
    if (!j_.is_object()) fail("expected an object");
    if (!has(key)) throw ConfigError(path_ + "." + key, "required field missing");
    return Node(j_.at(key), path_ + "." + key);
  }
  Node operator[](std::size_t i) const { return Node(j_.at(i), path_ + "[" + std::to_string(i) + "]"); }
  std::size_t size() const { return j_.size(); }

  void allow(std::initializer_list<const char*> keys) const {
    if (!j_.is_object()) fail("expected an object");
    const std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& [k, v] : j_.items())
      if (!ok.count(k)) throw ConfigError(path_ + "." + k, "unknown field");
  }

  double num() const {
    if (!j_.is_number()) fail("expected a number");
    return j_.get<double>();
  }
  double num(const std::string& key, double def) const { return has(key) ? at(key).num() : def; }
  double positive(const std::string& key, double def) const {
    const double v = num(key, def);
    if (!(v > 0)) throw ConfigError(path_ + "." + key, "must be > 0");
    return v;
  }
  int integer() const {
    if (!j_.is_number_integer()) fail("expected an integer");
    return j_.get<int>();
  }
  int integer(const std::string& key, int def) const { return has(key) ? at(key).integer() : def; }
  bool boolean(const std::string& key, bool def) const {
    if (!has(key)) return def;
    const Node n = at(key);
    if (!n.j_.is_boolean()) n.fail("expected true or false");
    return n.j_.get<bool>();
  }
  std::string str() const {
    if (!j_.is_string()) fail("expected a string");
    return j_.get<std::string>();
  }
  std::string str(const std::string& key, const std::string& def) const { return has(key) ? at(key).str() : def; }

  // number → degenerate interval, [lo, hi] → interval
  Interval interval() const {
    if (j_.is_number()) return Interval(j_.get<double>());
    if (j_.is_array() && j_.size() == 2 && j_[0].is_number() && j_[1].is_number()) {
      const double lo = j_[0].get<double>(), hi = j_[1].get<double>();
      if (!(lo <= hi)) fail("interval needs lo <= hi");
      return Interval(lo, hi);
    }
    fail("expected a number or a [lo, hi] pair");
  }
  Node array() const {
    if (!j_.is_array()) fail("expected an array");
    return *this;
  }
  std::vector<double> vec() const {
    array();
    std::vector<double> v;
    for (std::size_t i = 0; i < size(); ++i) v.push_back((*this)[i].num());
    return v;
  }
  IntervalVector ivec() const {
    array();
    IntervalVector v(size());
    for (std::size_t i = 0; i < size(); ++i) v[i] = (*this)[i].interval();
    return v;
  }
  std::vector<std::vector<double>> mat() const {
    array();
    std::vector<std::vector<double>> m;
    for (std::size_t i = 0; i < size(); ++i) m.push_back((*this)[i].vec());
    return m;
  }
  std::vector<std::string> strings() const {
    array();
    std::vector<std::string> v;
    for (std::size_t i = 0; i < size(); ++i) v.push_back((*this)[i].str());
    return v;
  }
  // numbers, [lo, hi] pairs or expression strings
  Expr expr(const std::vector<std::string>& names) const {
    if (j_.is_string()) {
      try {
        return parse_expr(j_.get<std::string>(), names);
      } catch (const ParseError& e) {
        fail(e.what());
      }
    }
    return Expr(interval());
  }
  std::vector<Expr> exprs(const std::vector<std::string>& names) const {
    array();
    std::vector<Expr> v;
    for (std::size_t i = 0; i < size(); ++i) v.push_back((*this)[i].expr(names));
    return v;
  }
  std::vector<std::vector<Expr>> expr_matrix(const std::vector<std::string>& names) const {
    array();
    std::vector<std::vector<Expr>> m;
    for (std::size_t i = 0; i < size(); ++i) m.push_back((*this)[i].exprs(names));
    return m;
  }

 private:
  const json& j_;
  std::string path_;
};

void need_size(const Node& n, std::size_t got, std::size_t want) {
  if (got != want) n.fail("expected " + std::to_string(want) + " entries, got " + std::to_string(got));
}

// Runs a module call and re-labels its argument errors with the config path.
template <class F>
auto guarded(const Node& n, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    n.fail(e.what());
  }
}

struct Ctx {
  fs::path base, out;
  unsigned long long seed = 1;
  json summary;

  void write(const std::string& name, const std::function<void(std::ostream&)>& f) {
    fs::create_directories(out);
    std::ofstream os(out / name, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + (out / name).string());
    f(os);
    summary["files"].push_back(name);
  }
  fs::path resolve(const std::string& p) const { return fs::path(p).is_absolute() ? fs::path(p) : base / p; }
};

std::vector<std::string> var_names(const std::string& prefix, int n) {
  std::vector<std::string> v;
  for (int i = 1; i <= n; ++i) v.push_back(prefix + std::to_string(i));
  return v;
}

std::vector<std::string> concat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// ---- wrapping-demo ---------------------------------------------------------

int run_wrapping(const Node& c, Ctx& ctx) {
  c.allow({"kind", "seed", "output_dir", "k"});
  const int k = c.integer("k", 8);
  if (k < 0) c.at("k").fail("must be >= 0");
  ctx.write("wrapping.csv", [&](std::ostream& os) {
    csv::write_header(os, {"k", "naive_lo_1", "naive_hi_1", "naive_lo_2", "naive_hi_2", "power_lo_1", "power_hi_1",
                           "power_lo_2", "power_hi_2"});
    for (int j = 0; j <= k; ++j) {
      const IntervalVector a = wrapping_naive(j), b = wrapping_power(j);
      csv::write_row(os, {static_cast<double>(j), a[0].lo(), a[0].hi(), a[1].lo(), a[1].hi(), b[0].lo(), b[0].hi(),
                          b[1].lo(), b[1].hi()});
    }
  });
  const IntervalVector a = wrapping_naive(k), b = wrapping_power(k);
  ctx.summary["k"] = k;
  ctx.summary["naive_width"] = std::max(a[0].width(), a[1].width());
  ctx.summary["power_width"] = std::max(b[0].width(), b[1].width());
  return 0;
}

// ---- bracketing -----------------------------------------------------------

int run_bracketing(const Node& c, Ctx& ctx) {
  c.allow({"kind", "seed", "output_dir", "A", "b", "u", "x0", "dt", "t_end"});
  const Node An = c.at("A").array();
  const std::size_t n = An.size();
  if (n == 0) An.fail("empty matrix");
  IntervalMatrix A(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const IntervalVector row = An[i].ivec();
    need_size(An[i], row.size(), n);
    for (std::size_t j = 0; j < n; ++j) A(i, j) = row[j];
  }
  LinearIntervalSystem sys{A, std::nullopt, c.positive("dt", 1e-2)};
  if (c.has("b")) {
    sys.b = c.at("b").ivec();
    need_size(c.at("b"), sys.b->size(), n);
  }
  const Interval u = c.has("u") ? c.at("u").interval() : Interval(0.0);
  const IntervalVector x0 = c.at("x0").ivec();
  need_size(c.at("x0"), x0.size(), n);
  const double t_end = c.num("t_end", 1.0);
  if (!(t_end >= 0)) c.at("t_end").fail("must be >= 0");
  if (!metzler_check(A)) c.at("A").fail("not Metzler: some off-diagonal lower bound is negative");
  const BracketTube tube = integrate_bracketing(sys, x0, t_end, u);
  ctx.write("tube.csv", [&](std::ostream& os) { tube.write_csv(os); });
  ctx.summary["samples"] = tube.times.size();
  std::vector<double> w;
  for (std::size_t i = 0; i < n; ++i) w.push_back(tube.w.back()[i] - tube.v.back()[i]);
  ctx.summary["final_lower"] = tube.v.back();
  ctx.summary["final_upper"] = tube.w.back();
  ctx.summary["final_width"] = w;
  return 0;
}

// ---- identify -------------------------------------------------------------

std::vector<MeasurementRecord> synthetic_measurements(const Node& s, const IdentConfig& cfg, int np) {
  s.allow({"p", "times", "dy", "substeps"});
  const std::vector<double> p = s.at("p").vec();
  need_size(s.at("p"), p.size(), static_cast<std::size_t>(np));
  const std::vector<double> times = s.at("times").vec();
  const std::vector<double> dy = s.at("dy").vec();
  need_size(s.at("dy"), dy.size(), cfg.outputs.size());
  const int sub = s.integer("substeps", 100);
  if (sub < 1) s.at("substeps").fail("must be >= 1");
  std::vector<double> x = cfg.x0.mid();
  double t = cfg.t0;
  std::vector<MeasurementRecord> out;
  auto field = [&](double tt, const std::vector<double>& z) {
    const std::vector<double> u = cfg.input.empty() ? std::vector<double>(static_cast<std::size_t>(cfg.model.m()), 0.0)
                                                    : cfg.input.at(tt);
    return cfg.model.eval(z, u, p);
  };
  for (double tk : times) {
    if (!(tk > t) && !(tk == cfg.t0 && out.empty())) s.at("times").fail("times must be increasing and after t0");
    const double h = (tk - t) / sub;
    for (int q = 0; q < sub && h > 0; ++q) {
      auto add = [](std::vector<double> a, const std::vector<double>& b, double f) {
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += f * b[i];
        return a;
      };
      const auto k1 = field(t, x), k2 = field(t + h / 2, add(x, k1, h / 2)), k3 = field(t + h / 2, add(x, k2, h / 2)),
                 k4 = field(t + h, add(x, k3, h));
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
      t += h;
    }
    t = tk;
    std::vector<double> env = x;
    const std::vector<double> u = cfg.input.empty() ? std::vector<double>(static_cast<std::size_t>(cfg.model.m()), 0.0)
                                                    : cfg.input.at(tk);
    env.insert(env.end(), u.begin(), u.end());
    env.insert(env.end(), p.begin(), p.end());
    MeasurementRecord r{tk, {}, dy};
    for (const auto& e : cfg.outputs) r.y.push_back(e.eval(env));
    out.push_back(r);
  }
  return out;
}

int run_identify(const Node& c, Ctx& ctx) {
  c.allow({"kind", "seed", "output_dir", "model", "x0", "p0", "measurements", "synthetic", "method", "min_box_width",
           "max_boxes", "bisect", "workers", "dt", "t0", "early_abort", "shave_slices", "input", "p_star"});
  const Node m = c.at("model");
  m.allow({"states", "inputs", "params", "f", "outputs"});
  const auto states = m.at("states").strings();
  const auto inputs = m.has("inputs") ? m.at("inputs").strings() : std::vector<std::string>{};
  const auto params = m.at("params").strings();
  const auto names = concat(concat(states, inputs), params);
  IdentConfig cfg;
  const auto f = m.at("f").exprs(names);
  need_size(m.at("f"), f.size(), states.size());
  cfg.model = NonlinearSystemModel(f, static_cast<int>(inputs.size()), static_cast<int>(params.size()));
  cfg.outputs = m.at("outputs").exprs(names);
  cfg.x0 = c.at("x0").ivec();
  need_size(c.at("x0"), cfg.x0.size(), states.size());
  const IntervalVector p0 = c.at("p0").ivec();
  need_size(c.at("p0"), p0.size(), params.size());
  cfg.min_box_width = c.positive("min_box_width", 1e-3);
  cfg.max_boxes = c.integer("max_boxes", 100000);
  cfg.dt = c.positive("dt", 1e-2);
  cfg.t0 = c.num("t0", 0.0);
  cfg.workers = c.integer("workers", 1);
  cfg.early_abort = c.boolean("early_abort", true);
  cfg.shave_slices = c.integer("shave_slices", 8);
  const std::string rule = c.str("bisect", "widest");
  if (rule == "widest") cfg.bisect_rule = BisectRule::WidestRelative;
  else if (rule == "sensitivity") cfg.bisect_rule = BisectRule::Sensitivity;
  else c.at("bisect").fail("expected \"widest\" or \"sensitivity\"");
  if (c.has("input")) {
    const Node in = c.at("input");
    in.allow({"times", "values"});
    cfg.input.times = in.at("times").vec();
    cfg.input.values = in.at("values").mat();
    need_size(in.at("values"), cfg.input.values.size(), cfg.input.times.size());
  }
  guarded(c, [&] { validate(cfg); });

  std::vector<MeasurementRecord> data;
  if (c.has("measurements") == c.has("synthetic")) c.fail("give exactly one of \"measurements\" and \"synthetic\"");
  if (c.has("measurements")) {
    const fs::path p = ctx.resolve(c.at("measurements").str());
    std::ifstream is(p);
    if (!is) c.at("measurements").fail("cannot open " + p.string());
    data = guarded(c.at("measurements"), [&] { return read_measurements(is); });
  } else {
    data = synthetic_measurements(c.at("synthetic"), cfg, static_cast<int>(params.size()));
  }
  guarded(c, [&] { validate_measurements(data); });
  ctx.write("measurements.csv", [&](std::ostream& os) { write_measurements(os, data); });

  const std::string method = c.str("method", "sivia");
  if (method == "sivia") {
    const SiviaResult r = sivia_identify(p0, cfg, data);
    ctx.write("boxes.csv", [&](std::ostream& os) { r.write_csv(os); });
    ctx.summary["feasible"] = r.feasible.size();
    ctx.summary["undecided"] = r.undecided.size();
    ctx.summary["infeasible"] = r.infeasible.size();
    ctx.summary["classifications"] = r.classifications;
    ctx.summary["incomplete"] = r.incomplete;
    if (c.has("p_star")) {
      const std::vector<double> ps = c.at("p_star").vec();
      need_size(c.at("p_star"), ps.size(), params.size());
      bool covered = false;
      for (const auto* l : {&r.feasible, &r.undecided})
        for (const auto& b : *l) covered = covered || b.box.contains(ps);
      ctx.summary["p_star_covered"] = covered;
    }
    return r.feasible.empty() && r.undecided.empty() ? 2 : 0;
  }
  if (method == "predictor-corrector") {
    try {
      const PredictorCorrectorResult r = predictor_corrector_run(p0, cfg, data);
      ctx.write("states.csv", [&](std::ostream& os) {
        std::vector<std::string> h{"t"};
        for (std::size_t i = 1; i <= states.size(); ++i) {
          h.push_back("x" + std::to_string(i) + "_lo");
          h.push_back("x" + std::to_string(i) + "_hi");
        }
        for (std::size_t i = 1; i <= params.size(); ++i) {
          h.push_back("p" + std::to_string(i) + "_lo");
          h.push_back("p" + std::to_string(i) + "_hi");
        }
        csv::write_header(os, h);
        for (std::size_t k = 0; k < r.times.size(); ++k) {
          std::vector<double> row{r.times[k]};
          for (const auto& x : r.states[k]) row.insert(row.end(), {x.lo(), x.hi()});
          for (const auto& x : r.params[k]) row.insert(row.end(), {x.lo(), x.hi()});
          csv::write_row(os, row);
        }
      });
      ctx.summary["param_lo"] = r.param_box.lo();
      ctx.summary["param_hi"] = r.param_box.hi();
      return 0;
    } catch (const ModelInconsistency& e) {
      ctx.summary["inconsistent_at"] = e.index();
      ctx.summary["message"] = e.what();
      return 2;
    }
  }
  c.at("method").fail("expected \"sivia\" or \"predictor-corrector\"");
}

// ---- smc ------------------------------------------------------------------

int run_smc(const Node& c, Ctx& ctx) {
  using namespace smc;
  c.allow({"kind", "seed", "output_dir", "plant", "controller", "reference", "x0", "p_true", "dt", "steps",
           "meas_halfwidth"});
  const Node pn = c.at("plant");
  pn.allow({"n", "params", "a", "b", "p_box"});
  CanonicalPlant plant;
  plant.n = pn.at("n").integer();
  if (plant.n < 1) pn.at("n").fail("must be >= 1");
  const auto params = pn.has("params") ? pn.at("params").strings() : std::vector<std::string>{};
  const auto names = concat(var_names("x", plant.n), params);
  plant.a = pn.at("a").expr(names);
  plant.b = pn.at("b").expr(names);
  plant.p_box = pn.has("p_box") ? pn.at("p_box").ivec() : IntervalVector();
  need_size(pn, plant.p_box.size(), params.size());
  guarded(pn, [&] { plant.validate(); });

  const Node cn = c.at("controller");
  cn.allow({"variant", "alpha", "alpha_m1", "gamma0", "gamma1", "lambda", "eta_t", "eta1_t", "eta2_t", "eps_t",
            "eps_sel", "rho_v", "sigma_v", "dx1max", "chi_bar", "l"});
  ControllerConfig cfg;
  cfg.variant = guarded(cn.at("variant"), [&] { return parse_variant(cn.at("variant").str()); });
  cfg.surface.alpha = cn.at("alpha").vec();
  cfg.surface.alpha_m1 = cn.num("alpha_m1", 0);
  cfg.surface.gamma0 = cn.num("gamma0", 1);
  cfg.surface.gamma1 = cn.num("gamma1", 1);
  cfg.surface.lambda = cn.num("lambda", 0);
  cfg.gains.eta_t = cn.num("eta_t", cfg.gains.eta_t);
  cfg.gains.eta1_t = cn.num("eta1_t", cfg.gains.eta1_t);
  cfg.gains.eta2_t = cn.num("eta2_t", cfg.gains.eta2_t);
  cfg.gains.eps_t = cn.num("eps_t", cfg.gains.eps_t);
  cfg.gains.eps_sel = cn.num("eps_sel", cfg.gains.eps_sel);
  cfg.barrier.rho_v = cn.num("rho_v", cfg.barrier.rho_v);
  cfg.barrier.sigma_v = cn.num("sigma_v", cfg.barrier.sigma_v);
  cfg.barrier.dx1max = cn.num("dx1max", cfg.barrier.dx1max);
  cfg.barrier.chi_bar = cn.num("chi_bar", cfg.barrier.chi_bar);
  cfg.barrier.l = cn.integer("l", cfg.barrier.l);
  guarded(cn, [&] { cfg.validate(plant.n); });

  const Node rn = c.at("reference");
  rn.allow({"offset", "amp", "omega"});
  const Reference ref = Reference::sine(plant.n, rn.num("offset", 0), rn.num("amp", 1), rn.num("omega", 1));

  ClosedLoopConfig cl;
  cl.x0 = c.at("x0").vec();
  need_size(c.at("x0"), cl.x0.size(), static_cast<std::size_t>(plant.n));
  cl.p_true = c.has("p_true") ? c.at("p_true").vec() : plant.p_box.mid();
  need_size(c, cl.p_true.size(), params.size());
  if (!plant.p_box.contains(cl.p_true)) c.at("p_true").fail("must lie in plant.p_box");
  cl.dt = c.positive("dt", 1e-3);
  cl.steps = c.integer("steps", 10000);
  cl.meas_halfwidth = c.num("meas_halfwidth", 0);
  const ClosedLoopLog log = simulate_closed_loop(plant, cfg, ref, cl);
  ctx.write("closed_loop.csv", [&](std::ostream& os) { log.write_csv(os); });
  double max_err = 0;
  int uncert = 0, switching = 0;
  for (std::size_t k = 0; k < log.t.size(); ++k) max_err = std::max(max_err, std::abs(log.x[k][0] - ref.at(log.t[k])[0]));
  for (const auto& d : log.decisions) {
    const double sw = second_order(cfg.variant) ? d.s_dot : d.s;
    if (std::abs(sw) <= 1e-6) continue;
    ++switching;
    uncert += !(d.certified && d.vdot_sup < 0);
  }
  ctx.summary["steps"] = log.decisions.size();
  ctx.summary["uncertified"] = log.uncertified;
  ctx.summary["uncertified_off_surface"] = uncert;
  ctx.summary["off_surface_steps"] = switching;
  ctx.summary["max_tracking_error"] = max_err;
  ctx.summary["final_tracking_error"] = std::abs(log.x.back()[0] - ref.at(log.t.back())[0]);
  return 0;
}

// ---- mpc ------------------------------------------------------------------

int run_mpc(const Node& c, Ctx& ctx) {
  using namespace mpc;
  c.allow({"kind", "seed", "output_dir", "model", "p_box", "Np", "Tc", "Q", "R", "x_min", "x_max", "x_ref",
           "u_domain", "branch_factor", "max_nodes", "dt", "require_terminal_hit", "loop"});
  const Node m = c.at("model");
  m.allow({"states", "inputs", "params", "f"});
  const auto states = m.at("states").strings(), inputs = m.at("inputs").strings();
  const auto params = m.has("params") ? m.at("params").strings() : std::vector<std::string>{};
  const auto f = m.at("f").exprs(concat(concat(states, inputs), params));
  need_size(m.at("f"), f.size(), states.size());
  const NonlinearSystemModel model(f, static_cast<int>(inputs.size()), static_cast<int>(params.size()));
  const IntervalVector p_box = c.has("p_box") ? c.at("p_box").ivec() : IntervalVector();
  need_size(c, p_box.size(), params.size());

  MPCConfig cfg;
  cfg.Np = c.integer("Np", cfg.Np);
  cfg.Tc = c.positive("Tc", cfg.Tc);
  cfg.Q = c.at("Q").mat();
  cfg.R = c.at("R").mat();
  cfg.x_min = c.at("x_min").mat();
  cfg.x_max = c.at("x_max").mat();
  cfg.x_ref = c.at("x_ref").ivec();
  cfg.u_domain = c.at("u_domain").ivec();
  cfg.branch_factor = c.integer("branch_factor", cfg.branch_factor);
  cfg.max_nodes = c.integer("max_nodes", cfg.max_nodes);
  cfg.dt = c.positive("dt", cfg.dt);
  cfg.require_terminal_hit = c.boolean("require_terminal_hit", true);
  guarded(c, [&] { cfg.validate(static_cast<int>(states.size()), static_cast<int>(inputs.size())); });

  const Node l = c.at("loop");
  l.allow({"x0", "p_true", "steps", "meas_halfwidth", "prestab"});
  LoopConfig loop;
  loop.x0 = l.at("x0").vec();
  need_size(l.at("x0"), loop.x0.size(), states.size());
  loop.p_true = l.has("p_true") ? l.at("p_true").vec() : p_box.mid();
  need_size(l, loop.p_true.size(), params.size());
  loop.steps = l.integer("steps", loop.steps);
  loop.meas_halfwidth = l.num("meas_halfwidth", 0);
  if (l.has("prestab")) loop.prestab = l.at("prestab").mat();
  const LoopLog log = guarded(l, [&] { return run_closed_loop(model, p_box, cfg, loop); });
  ctx.write("mpc.csv", [&](std::ostream& os) { log.write_csv(os); });
  int infeasible = 0;
  for (const auto& r : log.rows) infeasible += r.infeasible;
  ctx.summary["steps"] = log.rows.size();
  ctx.summary["infeasible_steps"] = infeasible;
  ctx.summary["x_final"] = log.x_final;
  ctx.summary["x_final_in_ref"] = cfg.x_ref.contains(log.x_final);
  return log.any_infeasible ? 2 : 0;
}

// ---- battery --------------------------------------------------------------

battery::Poly poly(const Node& n) {
  battery::Poly p;
  for (const auto& x : n.ivec()) p.c.push_back(x);
  return p;
}

int run_battery(const Node& c, Ctx& ctx) {
  using namespace battery;
  c.allow({"kind", "seed", "output_dir", "params", "rel_radius", "observer", "data", "contract"});
  BatteryParams est;
  const std::string which = c.has("params") && c.at("params").raw().is_string() ? c.at("params").str() : "";
  if (!c.has("params") || which == "demo") {
    est = demo_params(c.num("rel_radius", 0.02));
  } else if (!which.empty()) {
    c.at("params").fail("expected \"demo\" or a parameter object");
  } else {
    const Node p = c.at("params");
    p.allow({"c_bat", "r_ts", "r_tl", "c_ts", "c_tl", "v"});
    est.c_bat = p.positive("c_bat", est.c_bat);
    est.r_ts = poly(p.at("r_ts"));
    est.r_tl = poly(p.at("r_tl"));
    est.c_ts = poly(p.at("c_ts"));
    est.c_tl = poly(p.at("c_tl"));
    const IntervalVector v = p.at("v").ivec();
    need_size(p.at("v"), v.size(), 6);
    for (std::size_t i = 0; i < 6; ++i) est.v[i] = v[i];
  }
  guarded(c.has("params") ? c.at("params") : c, [&] { est.validate(); });

  ObserverConfig cfg;
  cfg.seed = ctx.seed;
  if (c.has("observer")) {
    const Node o = c.at("observer");
    o.allow({"dt", "steps", "h1", "dv", "x_true0", "x_box0"});
    cfg.dt = o.positive("dt", cfg.dt);
    cfg.steps = o.integer("steps", cfg.steps);
    cfg.h1 = o.num("h1", cfg.h1);
    cfg.dv = o.num("dv", cfg.dv);
    if (o.has("x_true0")) cfg.x_true0 = o.at("x_true0").vec();
    if (o.has("x_box0")) cfg.x_box0 = o.at("x_box0").ivec();
  }
  cfg.contract = c.boolean("contract", true);
  if (!(cfg.h1 >= 0)) c.at("observer").at("h1").fail("must be >= 0");
  ctx.summary["h1_stable"] = h1_stable(cfg.h1, est);

  ObserverRun run;
  if (c.has("data")) {
    const fs::path p = ctx.resolve(c.at("data").str());
    std::ifstream is(p);
    if (!is) c.at("data").fail("cannot open " + p.string());
    const auto recs = guarded(c.at("data"), [&] { return read_cell_csv(is); });
    if (cfg.x_box0.size() == 0) c.fail("observer.x_box0 is required with measured data");
    run = guarded(c, [&] { return run_on_data(est, recs, cfg.h1, cfg.x_box0, cfg.contract); });
  } else {
    run = guarded(c, [&] { return run_observer(midpoint(est), est, demo_current, cfg); });
    ctx.write("cell.csv", [&](std::ostream& os) { write_cell_csv(os, cell_records(run, demo_current, cfg.dv)); });
    ctx.summary["outside"] = run.outside;
  }
  ctx.write("states.csv", [&](std::ostream& os) {
    const bool truth = !run.x_true.empty();
    std::vector<std::string> h{"t", "sigma_lo", "sigma_hi", "v_ts_lo", "v_ts_hi", "v_tl_lo", "v_tl_hi"};
    if (truth) h.insert(h.end(), {"sigma", "v_ts", "v_tl"});
    csv::write_header(os, h);
    for (std::size_t k = 0; k < run.t.size(); ++k) {
      std::vector<double> row{run.t[k]};
      for (const auto& x : run.x_box[k]) row.insert(row.end(), {x.lo(), x.hi()});
      if (truth) row.insert(row.end(), run.x_true[k].begin(), run.x_true[k].end());
      csv::write_row(os, row);
    }
  });
  ctx.write("tube.csv", [&](std::ostream& os) { run.tube.write_csv(os); });
  ctx.summary["steps"] = run.t.size() - 1;
  ctx.summary["segments"] = run.tube.seg.size();
  ctx.summary["conflicts"] = run.tube.conflicts;
  ctx.summary["final_sigma_width"] = run.x_box.back()[0].width();
  if (!run.tube.seg.empty()) {
    ctx.summary["sigma_covered"] = {run.tube.seg.front().sigma.lo(), run.tube.seg.back().sigma.hi()};
  }
  return 0;
}

// ---- ilo ------------------------------------------------------------------

Eigen::MatrixXd eigen_mat(const Node& n, int rows, int cols) {
  const auto m = n.mat();
  need_size(n, m.size(), static_cast<std::size_t>(rows));
  Eigen::MatrixXd M(rows, cols);
  for (int i = 0; i < rows; ++i) {
    need_size(n[static_cast<std::size_t>(i)], m[static_cast<std::size_t>(i)].size(), static_cast<std::size_t>(cols));
    for (int j = 0; j < cols; ++j) M(i, j) = m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return M;
}

Eigen::VectorXd eigen_vec(const Node& n, int size) {
  const auto v = n.vec();
  need_size(n, v.size(), static_cast<std::size_t>(size));
  return Eigen::Map<const Eigen::VectorXd>(v.data(), size);
}

void check_shape(const Node& n, const ellipsoid::ExprMatrix& M, int rows, int cols) {
  need_size(n, M.size(), static_cast<std::size_t>(rows));
  for (std::size_t i = 0; i < M.size(); ++i) need_size(n[i], M[i].size(), static_cast<std::size_t>(cols));
}

// Point matrix of an expression matrix at (x ∥ p).
Eigen::MatrixXd point(const ellipsoid::ExprMatrix& M, const std::vector<double>& env) {
  const int r = static_cast<int>(M.size()), c = r ? static_cast<int>(M[0].size()) : 0;
  Eigen::MatrixXd out(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out(i, j) = M[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].eval(env);
  return out;
}

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& C) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (C + C.transpose()));
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

int run_ilo(const Node& c, Ctx& ctx) {
  using namespace ellipsoid;
  c.allow({"kind", "seed", "output_dir", "states", "outputs", "noise_inputs", "params", "p_box", "A", "E", "C", "Cw",
           "Cv", "r", "mu0", "C0", "init_correlation", "delta_rule", "ema", "learn_delta", "trials", "synthetic"});
  QLSystem sys;
  const auto states = c.at("states").strings();
  const auto params = c.has("params") ? c.at("params").strings() : std::vector<std::string>{};
  const auto names = concat(states, params);
  sys.n = static_cast<int>(states.size());
  sys.m = c.at("outputs").integer();
  sys.nw = c.integer("noise_inputs", sys.n);
  sys.A = c.at("A").expr_matrix(names);
  sys.E = c.at("E").expr_matrix(names);
  sys.C = c.at("C").expr_matrix(names);
  check_shape(c.at("A"), sys.A, sys.n, sys.n);
  check_shape(c.at("E"), sys.E, sys.n, sys.nw);
  check_shape(c.at("C"), sys.C, sys.m, sys.n);
  sys.p_box = c.has("p_box") ? c.at("p_box").ivec() : IntervalVector();
  need_size(c, sys.p_box.size(), params.size());
  sys.Cw = eigen_mat(c.at("Cw"), sys.nw, sys.nw);
  sys.Cv = eigen_mat(c.at("Cv"), sys.m, sys.m);
  guarded(c, [&] { sys.validate(); });

  ILOConfig cfg;
  cfg.r = c.positive("r", 1.0);
  cfg.mu0 = eigen_vec(c.at("mu0"), sys.n);
  cfg.C0 = eigen_mat(c.at("C0"), sys.n, sys.n);
  cfg.init_correlation = c.num("init_correlation", 0);
  const std::string rule = c.str("delta_rule", "running-mean");
  if (rule == "running-mean") cfg.delta_rule = DeltaRule::RunningMean;
  else if (rule == "ema") cfg.delta_rule = DeltaRule::Ema;
  else c.at("delta_rule").fail("expected \"running-mean\" or \"ema\"");
  cfg.ema = c.num("ema", cfg.ema);
  cfg.learn_delta = c.boolean("learn_delta", true);

  std::vector<std::vector<Eigen::VectorXd>> trials;
  if (c.has("trials") == c.has("synthetic")) c.fail("give exactly one of \"trials\" and \"synthetic\"");
  if (c.has("trials")) {
    const Node t = c.at("trials").array();
    for (std::size_t i = 0; i < t.size(); ++i) {
      const fs::path p = ctx.resolve(t[i].str());
      const csv::Table tab = guarded(t[i], [&] { return csv::read_file(p.string()); });
      std::vector<Eigen::VectorXd> ys;
      for (const auto& row : tab.rows) {
        need_size(t[i], row.size(), static_cast<std::size_t>(sys.m));
        ys.push_back(Eigen::Map<const Eigen::VectorXd>(row.data(), sys.m));
      }
      trials.push_back(std::move(ys));
    }
  } else {
    // x⁺ = A x + E w + bias, y = C x + v on the point model
    const Node s = c.at("synthetic");
    s.allow({"count", "steps", "x0", "bias", "noise", "p_true"});
    const int count = s.integer("count", 3), steps = s.integer("steps", 50);
    if (count < 1 || steps < 1) s.fail("count and steps must be >= 1");
    const Eigen::VectorXd x0 = eigen_vec(s.at("x0"), sys.n);
    const Eigen::VectorXd bias = s.has("bias") ? eigen_vec(s.at("bias"), sys.n) : Eigen::VectorXd::Zero(sys.n);
    const bool noise = s.boolean("noise", false);
    const std::vector<double> p = s.has("p_true") ? s.at("p_true").vec() : sys.p_box.mid();
    need_size(s, p.size(), params.size());
    std::mt19937_64 g(ctx.seed);
    std::normal_distribution<double> N(0, 1);
    const Eigen::MatrixXd Lw = sqrt_psd(sys.Cw), Lv = sqrt_psd(sys.Cv);
    auto gauss = [&](int n) {
      Eigen::VectorXd z(n);
      for (int i = 0; i < n; ++i) z(i) = N(g);
      return z;
    };
    for (int tr = 0; tr < count; ++tr) {
      Eigen::VectorXd x = x0;
      std::vector<Eigen::VectorXd> ys;
      for (int k = 0; k < steps; ++k) {
        std::vector<double> env(x.data(), x.data() + x.size());
        env.insert(env.end(), p.begin(), p.end());
        Eigen::VectorXd y = point(sys.C, env) * x;
        if (noise) y += Lv * gauss(sys.m);
        ys.push_back(y);
        Eigen::VectorXd xn = point(sys.A, env) * x + bias;
        if (noise) xn += point(sys.E, env) * (Lw * gauss(sys.nw));
        x = xn;
      }
      trials.push_back(std::move(ys));
    }
  }
  const ILOResult res = guarded(c, [&] { return ilo_run(sys, trials, cfg); });
  json norms = json::array();
  for (std::size_t i = 0; i < res.trials.size(); ++i) {
    ctx.write("trial_" + std::to_string(i + 1) + ".csv", [&](std::ostream& os) { res.trials[i].write_csv(os); });
    norms.push_back(res.trials[i].residual_norm);
  }
  ctx.write("delta.csv", [&](std::ostream& os) {
    csv::write_header(os, concat({"k"}, var_names("delta_", sys.n)));
    const auto& d = res.delta.back();
    for (std::size_t k = 0; k < d.size(); ++k) {
      std::vector<double> row{static_cast<double>(k)};
      row.insert(row.end(), d[k].data(), d[k].data() + d[k].size());
      csv::write_row(os, row);
    }
  });
  ctx.summary["trials"] = res.trials.size();
  ctx.summary["residual_norm"] = norms;
  ctx.summary["regularized_solves"] = res.diag.regularized;
  ctx.summary["max_asymmetry"] = res.diag.max_asymmetry;
  json tr = json::array();
  for (const auto& t : res.trials) tr.push_back(t.trace_e.back());
  ctx.summary["final_trace_Ce"] = tr;
  return 0;
}

}  // namespace

Outcome run(const json& config, const fs::path& base_dir, const std::string& out_override) {
  const Node c(config, "config");
  if (!config.is_object()) c.fail("expected a JSON object");
  const std::string kind = c.at("kind").str();
  using Runner = int (*)(const Node&, Ctx&);
  static const std::pair<const char*, Runner> kinds[] = {
      {"wrapping-demo", run_wrapping}, {"bracketing", run_bracketing}, {"identify", run_identify}, {"smc", run_smc},
      {"mpc", run_mpc},                {"battery", run_battery},       {"ilo", run_ilo},
  };
  Runner fn = nullptr;
  for (const auto& [k, f] : kinds)
    if (kind == k) fn = f;
  if (!fn) c.at("kind").fail("unknown kind '" + kind + "'");

  Ctx ctx;
  ctx.base = base_dir;
  if (c.has("seed")) {
    const Node s = c.at("seed");
    if (!s.raw().is_number_integer() || s.raw().get<long long>() < 0) s.fail("expected a nonnegative integer");
    ctx.seed = s.raw().get<unsigned long long>();
  }
  ctx.out = !out_override.empty() ? fs::path(out_override) : fs::path(c.str("output_dir", "out/" + kind));
  ctx.summary["kind"] = kind;
  ctx.summary["seed"] = ctx.seed;
  ctx.summary["files"] = json::array();
  Outcome o;
  o.exit_code = fn(c, ctx);
  ctx.summary["status"] = o.exit_code == 0 ? "ok" : "infeasible";
  {
    fs::create_directories(ctx.out);
    std::ofstream os(ctx.out / "summary.json", std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + (ctx.out / "summary.json").string());
    os << ctx.summary.dump(2) << '\n';
  }
  o.summary = std::move(ctx.summary);
  o.output_dir = ctx.out;
  return o;
}

Outcome run_file(const fs::path& config_path, const std::string& out_override) {
  std::ifstream is(config_path);
  if (!is) throw std::runtime_error("cannot open config " + config_path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError(config_path.string(), std::string("malformed JSON: ") + e.what());
  }
  return run(j, config_path.parent_path(), out_override);
}

json demo_config(const std::string& name) {
  // kept in sync with configs/*.json (checked by the tests)
  static const std::pair<const char*, const char*> demos[] = {
      {"wrapping-demo", R"json({"kind": "wrapping-demo", "k": 8})json"},
      {"bracketing", R"json({"kind": "bracketing", "A": [[[-1.2, -0.8], [0.1, 0.3]], [[0.2, 0.4], [-2.3, -1.7]]], "b": [0.5, 0.0], "u": [-0.2, 0.3], "x0": [[0.5, 1.0], [-1.0, 0.0]], "dt": 0.01, "t_end": 3.0})json"},
      {"identify", R"json({"kind": "identify", "model": {"states": ["x"], "params": ["p"], "f": ["-p*x"], "outputs": ["x"]}, "x0": [1.0], "p0": [[0.1, 1.0]], "synthetic": {"p": [0.4], "times": [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0, 6.5, 7.0, 7.5, 8.0, 8.5, 9.0, 9.5, 10.0], "dy": [0.05]}, "min_box_width": 0.001, "p_star": [0.4]})json"},
      {"smc", R"json({"kind": "smc", "plant": {"n": 2, "params": ["b"], "a": "0", "b": "b", "p_box": [[0.8, 1.2]]}, "controller": {"variant": "I", "alpha": [1, 1], "rho_v": 0.05}, "reference": {"offset": 0, "amp": 1, "omega": 1}, "x0": [0.5, 0.0], "p_true": [1.1], "dt": 0.001, "steps": 10000, "meas_halfwidth": 1e-09})json"},
      {"mpc", R"json({"kind": "mpc", "model": {"states": ["x"], "inputs": ["u"], "params": ["p"], "f": ["-p*x + u"]}, "p_box": [[0.8, 1.2]], "Np": 3, "Tc": 0.3, "Q": [[1]], "R": [[0.1]], "x_min": [[-1]], "x_max": [[3]], "x_ref": [[-0.1, 0.1]], "u_domain": [[-2, 2]], "loop": {"x0": [2.0], "p_true": [1.1], "steps": 15, "meas_halfwidth": 0.001}})json"},
      {"battery", R"json({"kind": "battery", "params": "demo", "rel_radius": 0.02, "observer": {"dt": 0.1, "steps": 10000, "h1": 0.001, "dv": 0.01, "x_true0": [0.8, 0.0, 0.0]}})json"},
      {"ilo", R"json({"kind": "ilo", "states": ["x1", "x2"], "outputs": 2, "A": [[1, 0.1], [-0.1, 0.95]], "E": [[1, 0], [0, 1]], "C": [[1, 0], [0, 1]], "Cw": [[0.0001, 0], [0, 0.0001]], "Cv": [[0.0001, 0], [0, 0.0001]], "mu0": [0.5, 0.0], "C0": [[0.0001, 0], [0, 0.0001]], "synthetic": {"count": 3, "steps": 60, "x0": [0.5, 0.0], "bias": [0.02, -0.01]}})json"},
  };
  for (const auto& [k, text] : demos)
    if (name == k) return json::parse(text);
  throw std::invalid_argument("unknown demo '" + name +
                              "' (expected wrapping-demo, bracketing, identify, smc, mpc, battery or ilo)");
}

}  // namespace setctl::scenario
