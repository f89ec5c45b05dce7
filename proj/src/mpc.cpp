#include "setctl/mpc.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <ostream>

#include "setctl/csv.hpp"

namespace setctl::mpc {

namespace {

void check_psd(const Matrix& M, std::size_t n, const char* name) {
  if (M.size() != n) throw DimensionError(std::string("MPCConfig: ") + name + " has wrong size");
  Eigen::MatrixXd E(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (M[i].size() != n) throw DimensionError(std::string("MPCConfig: ") + name + " is not square");
    for (std::size_t j = 0; j < n; ++j) E(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = M[i][j];
  }
  if (!E.isApprox(E.transpose(), 1e-12) && (E - E.transpose()).norm() > 0) {
    throw std::invalid_argument(std::string("MPCConfig: ") + name + " must be symmetric");
  }
  if (n == 0) return;
  const double lmin = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(E, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
  if (lmin < -1e-12 * std::max(1.0, E.norm())) {
    throw std::invalid_argument(std::string("MPCConfig: ") + name + " must be positive semi-definite");
  }
}

Interval quad_form(const Matrix& M, const std::vector<Interval>& d) {
  Interval q(0.0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    q += Interval(M[i][i]) * sqr(d[i]);
    for (std::size_t j = i + 1; j < d.size(); ++j) {
      const double c = M[i][j] + M[j][i];
      if (c != 0) q += Interval(c) * d[i] * d[j];
    }
  }
  return q;
}

// Cartesian product of per-dimension equal splits, lexicographic order.
std::vector<IntervalVector> split_domain(const IntervalVector& dom, int parts) {
  std::vector<IntervalVector> out{IntervalVector(std::vector<Interval>{})};
  for (const auto& d : dom) {
    std::vector<Interval> pieces;
    for (int k = 0; k < parts; ++k) {
      const double a = k == 0 ? d.lo() : d.lo() + (d.hi() - d.lo()) * k / parts;
      const double b = k == parts - 1 ? d.hi() : d.lo() + (d.hi() - d.lo()) * (k + 1) / parts;
      pieces.emplace_back(a, b);
    }
    std::vector<IntervalVector> next;
    for (const auto& prefix : out)
      for (const auto& p : pieces) next.push_back(concat(prefix, IntervalVector{p}));
    out = std::move(next);
  }
  return out;
}

std::vector<double> flat_mid(const InputBoxSequence& s) {
  std::vector<double> m;
  for (const auto& b : s)
    for (const auto& i : b) m.push_back(i.mid());
  return m;
}

}  // namespace

void MPCConfig::validate(int n, int m) const {
  if (Np < 1) throw std::invalid_argument("MPCConfig: Np must be >= 1");
  if (!(Tc > 0)) throw std::invalid_argument("MPCConfig: Tc must be > 0");
  if (!(dt > 0)) throw std::invalid_argument("MPCConfig: dt must be > 0");
  if (branch_factor < 1) throw std::invalid_argument("MPCConfig: branch_factor must be >= 1");
  if (max_nodes < 1) throw std::invalid_argument("MPCConfig: max_nodes must be >= 1");
  check_psd(Q, static_cast<std::size_t>(n), "Q");
  check_psd(R, static_cast<std::size_t>(m), "R");
  if (static_cast<int>(u_domain.size()) != m || u_domain.is_empty()) throw DimensionError("MPCConfig: u_domain size");
  if (static_cast<int>(x_ref.size()) != n || x_ref.is_empty()) throw DimensionError("MPCConfig: x_ref size");
  if (x_min.size() != x_max.size() || (x_min.size() != 1 && static_cast<int>(x_min.size()) != Np)) {
    throw DimensionError("MPCConfig: corridor must have 1 or Np rows");
  }
  for (std::size_t j = 0; j < x_min.size(); ++j) {
    if (static_cast<int>(x_min[j].size()) != n || static_cast<int>(x_max[j].size()) != n) {
      throw DimensionError("MPCConfig: corridor row size");
    }
    for (int i = 0; i < n; ++i) {
      if (!(x_min[j][i] < x_max[j][i])) throw std::invalid_argument("MPCConfig: empty corridor");
      if (x_ref[i].lo() < x_min[j][i] || x_ref[i].hi() > x_max[j][i]) {
        throw std::invalid_argument("MPCConfig: x_ref must lie inside the corridor");
      }
    }
  }
}

Prediction predict_slices(const NonlinearSystemModel& model, const IntervalVector& x_box, const InputBoxSequence& useq,
                          const IntervalVector& p_box, const MPCConfig& cfg) {
  if (x_box.is_empty()) throw std::invalid_argument("predict_slices: empty state box");
  Prediction pr;
  IntervalVector x = x_box;
  for (std::size_t j = 0; j < useq.size(); ++j) {
    IntervalVector sweep;
    try {
      const double t0 = static_cast<double>(j) * cfg.Tc;
      x = propagate(model, x, useq[j], p_box, t0, t0 + cfg.Tc, cfg.dt, &sweep);
    } catch (const StepRejected&) {
      pr.failed = true;
      return pr;
    }
    pr.slices.push_back(hull(sweep, x));
    pr.ends.push_back(x);
  }
  return pr;
}

bool slice_in_corridor(const IntervalVector& slice, int j, const MPCConfig& cfg) {
  const auto lo = cfg.lo(j), hi = cfg.hi(j);
  for (std::size_t i = 0; i < slice.size(); ++i) {
    if (slice[i].lo() < lo[i] || slice[i].hi() > hi[i]) return false;
  }
  return true;
}

bool terminal_ok(const IntervalVector& x_box, const IntervalVector& terminal, const MPCConfig& cfg) {
  const auto r = cfg.x_ref.mid(), a = x_box.mid(), b = terminal.mid();
  double d0 = 0, d1 = 0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    d0 += (a[i] - r[i]) * (a[i] - r[i]);
    d1 += (b[i] - r[i]) * (b[i] - r[i]);
  }
  if (d1 > d0) return false;
  return !cfg.require_terminal_hit || !intersect(terminal, cfg.x_ref).is_empty();
}

bool is_safe(const Prediction& pred, const IntervalVector& x_box, const MPCConfig& cfg) {
  if (pred.failed || pred.slices.empty()) return false;
  for (std::size_t j = 0; j < pred.slices.size(); ++j) {
    if (!slice_in_corridor(pred.slices[j], static_cast<int>(j), cfg)) return false;
  }
  return terminal_ok(x_box, pred.ends.back(), cfg);
}

Interval stage_cost(const IntervalVector& slice, const IntervalVector& u, const MPCConfig& cfg) {
  const auto r = cfg.x_ref.mid();
  std::vector<Interval> d;
  for (std::size_t i = 0; i < slice.size(); ++i) d.push_back(slice[i] - Interval(r[i]));
  const std::vector<Interval> uu(u.begin(), u.end());
  return Interval(cfg.Tc) * (quad_form(cfg.Q, d) + quad_form(cfg.R, uu));
}

Interval cost_enclosure(const std::vector<IntervalVector>& slices, const InputBoxSequence& useq, const MPCConfig& cfg) {
  if (slices.size() != useq.size()) throw DimensionError("cost_enclosure: slice/input count mismatch");
  Interval J(0.0);
  for (std::size_t j = 0; j < slices.size(); ++j) J += stage_cost(slices[j], useq[j], cfg);
  return J;
}

SearchResult filter_and_branch(const NonlinearSystemModel& model, const IntervalVector& x_box,
                               const IntervalVector& p_box, const MPCConfig& cfg) {
  cfg.validate(model.n(), model.m());
  if (x_box.is_empty()) throw std::invalid_argument("filter_and_branch: empty state box");
  struct Node {
    InputBoxSequence prefix;
    IntervalVector state;
    Interval J;
  };
  const auto children = split_domain(cfg.u_domain, cfg.branch_factor);
  SearchResult res;
  std::vector<Node> stack{{{}, x_box, Interval(0.0)}};
  bool exhausted = false;
  while (!stack.empty() && !exhausted) {
    Node node = std::move(stack.back());
    stack.pop_back();
    const int depth = static_cast<int>(node.prefix.size());
    if (depth == cfg.Np) {
      if (terminal_ok(x_box, node.state, cfg)) res.candidates.push_back({std::move(node.prefix), node.J});
      else res.pruned.push_back(std::move(node.prefix));
      continue;
    }
    std::vector<Node> kids;
    for (const auto& u : children) {
      if (res.nodes >= cfg.max_nodes) {
        exhausted = true;
        break;
      }
      ++res.nodes;
      InputBoxSequence seq = node.prefix;
      seq.push_back(u);
      IntervalVector sweep, end;
      try {
        const double t0 = depth * cfg.Tc;
        end = propagate(model, node.state, u, p_box, t0, t0 + cfg.Tc, cfg.dt, &sweep);
      } catch (const StepRejected&) {
        res.pruned.push_back(std::move(seq));
        continue;
      }
      const IntervalVector slice = hull(sweep, end);
      if (!slice_in_corridor(slice, depth, cfg)) {
        res.pruned.push_back(std::move(seq));
        continue;
      }
      kids.push_back({std::move(seq), end, node.J + stage_cost(slice, u, cfg)});
    }
    // cheapest-first: push in reverse so the smallest inf J is popped next
    std::stable_sort(kids.begin(), kids.end(), [](const Node& a, const Node& b) { return a.J.lo() < b.J.lo(); });
    for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(std::move(*it));
  }
  if (res.candidates.empty()) {
    throw InfeasibleHorizon(exhausted ? "no safe input sequence found within max_nodes"
                                      : "every input sequence violates the corridor or the terminal condition");
  }
  return res;
}

Selection optimize_and_extract(const std::vector<Candidate>& candidates) {
  if (candidates.empty()) throw std::invalid_argument("optimize_and_extract: no candidates");
  const Candidate* best = &candidates[0];
  for (const auto& c : candidates) {
    const double a = c.J.hi(), b = best->J.hi();
    if (a < b || (a == b && (c.J.width() < best->J.width() ||
                             (c.J.width() == best->J.width() && flat_mid(c.useq) < flat_mid(best->useq))))) {
      best = &c;
    }
  }
  Selection s{*best, best->useq.at(0).mid()};
  return s;
}

StepResult mpc_step(const NonlinearSystemModel& model, const IntervalVector& x_meas_box, const IntervalVector& p_box,
                    const MPCConfig& cfg, const std::optional<Matrix>& prestab) {
  const SearchResult sr = filter_and_branch(model, x_meas_box, p_box, cfg);
  StepResult r;
  r.sel = optimize_and_extract(sr.candidates);
  r.n_candidates = static_cast<int>(sr.candidates.size());
  r.u = r.sel.u_apply;
  if (prestab) {
    const auto xh = x_meas_box.mid();
    if (prestab->size() != r.u.size()) throw DimensionError("mpc_step: K must be m x n");
    for (std::size_t i = 0; i < r.u.size(); ++i) {
      if ((*prestab)[i].size() != xh.size()) throw DimensionError("mpc_step: K must be m x n");
      for (std::size_t j = 0; j < xh.size(); ++j) r.u[i] -= (*prestab)[i][j] * xh[j];
    }
  }
  return r;
}

void LoopLog::write_csv(std::ostream& os) const {
  const std::size_t m = rows.empty() ? 0 : rows[0].u.size();
  std::vector<std::string> h{"k"};
  if (m == 1) h.push_back("u_apply");
  else
    for (std::size_t i = 0; i < m; ++i) h.push_back("u_apply_" + std::to_string(i + 1));
  for (const char* c : {"J_lo", "J_hi", "n_candidates", "infeasible"}) h.push_back(c);
  csv::write_header(os, h);
  for (const auto& r : rows) {
    std::vector<double> row{static_cast<double>(r.k)};
    row.insert(row.end(), r.u.begin(), r.u.end());
    row.insert(row.end(), {r.J.lo(), r.J.hi(), static_cast<double>(r.n_candidates), r.infeasible ? 1.0 : 0.0});
    csv::write_row(os, row);
  }
}

LoopLog run_closed_loop(const NonlinearSystemModel& model, const IntervalVector& p_box, const MPCConfig& cfg,
                        const LoopConfig& loop) {
  cfg.validate(model.n(), model.m());
  if (static_cast<int>(loop.x0.size()) != model.n()) throw DimensionError("run_closed_loop: x0 size");
  if (static_cast<int>(loop.p_true.size()) != model.np()) throw DimensionError("run_closed_loop: p_true size");
  LoopLog log;
  std::vector<double> x = loop.x0, u = cfg.u_domain.mid();
  const int sub = std::max(1, static_cast<int>(std::ceil(cfg.Tc / cfg.dt)));
  for (int k = 0; k < loop.steps; ++k) {
    LoopRow row;
    row.k = k;
    row.t = k * cfg.Tc;
    row.x = x;
    IntervalVector xb(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) xb[i] = Interval(x[i] - loop.meas_halfwidth, x[i] + loop.meas_halfwidth);
    try {
      const StepResult st = mpc_step(model, xb, p_box, cfg, loop.prestab);
      u = st.u;
      row.J = st.sel.best.J;
      row.n_candidates = st.n_candidates;
    } catch (const InfeasibleHorizon&) {
      row.infeasible = true;  // hold the previous input
      row.J = Interval::entire();
      log.any_infeasible = true;
    }
    row.u = u;
    log.rows.push_back(row);
    // truth plant: RK4 with the input held over Tc
    const double h = cfg.Tc / sub;
    auto f = [&](const std::vector<double>& z) { return model.eval(z, u, loop.p_true); };
    for (int s = 0; s < sub; ++s) {
      const auto k1 = f(x);
      std::vector<double> tmp(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) tmp[i] = x[i] + h / 2 * k1[i];
      const auto k2 = f(tmp);
      for (std::size_t i = 0; i < x.size(); ++i) tmp[i] = x[i] + h / 2 * k2[i];
      const auto k3 = f(tmp);
      for (std::size_t i = 0; i < x.size(); ++i) tmp[i] = x[i] + h * k3[i];
      const auto k4 = f(tmp);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    }
  }
  log.x_final = x;
  return log;
}

}  // namespace setctl::mpc
