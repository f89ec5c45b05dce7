#include "setctl/ident.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <deque>
#include <exception>
#include <istream>
#include <ostream>
#include <thread>

#include "setctl/csv.hpp"

namespace setctl {

void validate_measurements(const std::vector<MeasurementRecord>& data) {
  for (std::size_t k = 0; k < data.size(); ++k) {
    const auto& r = data[k];
    if (r.y.size() != r.dy.size()) throw std::invalid_argument("measurement " + std::to_string(k) + ": y/dy size mismatch");
    if (k > 0 && r.y.size() != data[0].y.size()) throw std::invalid_argument("measurement " + std::to_string(k) + ": sensor count changes");
    for (double d : r.dy) {
      if (!(d >= 0)) throw std::invalid_argument("measurement " + std::to_string(k) + ": negative tolerance");
    }
    if (k > 0 && !(r.t > data[k - 1].t)) {
      throw std::invalid_argument("measurement " + std::to_string(k) + ": times must be strictly increasing");
    }
  }
}

std::vector<MeasurementRecord> read_measurements(std::istream& is) {
  const csv::Table t = csv::read(is);
  std::vector<MeasurementRecord> out;
  for (const auto& row : t.rows) {
    if (row.size() < 3 || row.size() % 2 == 0) {
      throw std::invalid_argument("measurement CSV: expected columns t, y_1..y_m, dy_1..dy_m");
    }
    const std::size_t m = (row.size() - 1) / 2;
    MeasurementRecord r;
    r.t = row[0];
    r.y.assign(row.begin() + 1, row.begin() + 1 + static_cast<long>(m));
    r.dy.assign(row.begin() + 1 + static_cast<long>(m), row.end());
    out.push_back(std::move(r));
  }
  validate_measurements(out);
  return out;
}

void write_measurements(std::ostream& os, const std::vector<MeasurementRecord>& data) {
  const std::size_t m = data.empty() ? 0 : data[0].y.size();
  std::vector<std::string> h{"t"};
  for (std::size_t i = 0; i < m; ++i) h.push_back("y_" + std::to_string(i + 1));
  for (std::size_t i = 0; i < m; ++i) h.push_back("dy_" + std::to_string(i + 1));
  csv::write_header(os, h);
  for (const auto& r : data) {
    std::vector<double> row{r.t};
    row.insert(row.end(), r.y.begin(), r.y.end());
    row.insert(row.end(), r.dy.begin(), r.dy.end());
    csv::write_row(os, row);
  }
}

const char* to_string(BoxStatus s) {
  switch (s) {
    case BoxStatus::Feasible: return "feasible";
    case BoxStatus::Infeasible: return "infeasible";
    case BoxStatus::Undecided: return "undecided";
  }
  return "?";
}

std::vector<double> InputSignal::at(double t) const {
  if (times.empty()) return {};
  auto it = std::upper_bound(times.begin(), times.end(), t);
  const std::size_t k = it == times.begin() ? 0 : static_cast<std::size_t>(it - times.begin()) - 1;
  return values.at(k);
}

void validate(const IdentConfig& cfg) {
  if (!(cfg.min_box_width > 0)) throw std::invalid_argument("IdentConfig: min_box_width must be > 0");
  if (cfg.max_boxes < 1) throw std::invalid_argument("IdentConfig: max_boxes must be >= 1");
  if (!(cfg.dt > 0)) throw std::invalid_argument("IdentConfig: dt must be > 0");
  if (static_cast<int>(cfg.x0.size()) != cfg.model.n()) throw DimensionError("IdentConfig: x0 size differs from model order");
  if (cfg.x0.is_empty()) throw std::invalid_argument("IdentConfig: empty x0");
  if (cfg.outputs.empty()) throw std::invalid_argument("IdentConfig: no output map");
  const int arity = cfg.model.n() + cfg.model.m() + cfg.model.np();
  for (const auto& h : cfg.outputs) {
    if (h.max_var() >= arity) throw DimensionError("IdentConfig: output expression exceeds environment");
  }
  if (cfg.model.m() > 0) {
    if (cfg.input.empty()) throw std::invalid_argument("IdentConfig: model has inputs but no input signal");
    if (cfg.input.values.size() != cfg.input.times.size()) throw std::invalid_argument("IdentConfig: input times/values mismatch");
    for (const auto& v : cfg.input.values) {
      if (static_cast<int>(v.size()) != cfg.model.m()) throw DimensionError("IdentConfig: input vector size");
    }
  }
  if (cfg.workers < 1) throw std::invalid_argument("IdentConfig: workers must be >= 1");
}

namespace {

void check_data(const IdentConfig& cfg, const std::vector<MeasurementRecord>& data) {
  if (data.empty()) throw std::invalid_argument("identification: no measurements");
  validate_measurements(data);
  if (data[0].y.size() != cfg.outputs.size()) throw DimensionError("identification: sensor count differs from output map");
  if (data[0].t < cfg.t0) throw std::invalid_argument("identification: measurement before the initial time");
}

IntervalVector input_box(const IdentConfig& cfg, double t) {
  return IntervalVector::from_points(cfg.input.at(t));
}

// Validated propagation from t0 to t1, split at input switching times.
IntervalVector advance_to(const IdentConfig& cfg, IntervalVector x, double t0, double t1, const IntervalVector& p) {
  double t = t0;
  for (double s : cfg.input.times) {
    if (s <= t) continue;
    if (s >= t1) break;
    x = propagate(cfg.model, x, input_box(cfg, t), p, t, s, cfg.dt);
    t = s;
  }
  return propagate(cfg.model, x, input_box(cfg, t), p, t, t1, cfg.dt);
}

Interval tube(const MeasurementRecord& r, std::size_t i) {
  return Interval(rnd::sub_down(r.y[i], r.dy[i]), rnd::add_up(r.y[i], r.dy[i]));
}

}  // namespace

Classification classify_box(const IntervalVector& p, const IdentConfig& cfg, const std::vector<MeasurementRecord>& data) {
  if (p.is_empty()) throw std::invalid_argument("classify_box: empty parameter box");
  if (static_cast<int>(p.size()) != cfg.model.np()) throw DimensionError("classify_box: parameter box size");
  check_data(cfg, data);
  IntervalVector x = cfg.x0;
  double t = cfg.t0;
  bool inside = true, infeasible = false;
  for (const auto& rec : data) {
    try {
      x = advance_to(cfg, x, t, rec.t, p);
    } catch (const StepRejected&) {
      if (infeasible) return {BoxStatus::Infeasible, false};
      return {BoxStatus::Undecided, true};
    }
    t = rec.t;
    const IntervalVector env = cfg.model.env(x, input_box(cfg, t), p);
    for (std::size_t i = 0; i < cfg.outputs.size(); ++i) {
      Interval y;
      try {
        y = cfg.outputs[i].eval(env);
      } catch (const DomainError&) {
        if (infeasible) return {BoxStatus::Infeasible, false};
        return {BoxStatus::Undecided, true};
      }
      const Interval ym = tube(rec, i);
      if (intersect(y, ym).is_empty()) {
        if (cfg.early_abort) return {BoxStatus::Infeasible, false};
        infeasible = true;
      } else if (!y.subset_of(ym)) {
        inside = false;
      }
    }
  }
  if (infeasible) return {BoxStatus::Infeasible, false};
  return {inside ? BoxStatus::Feasible : BoxStatus::Undecided, false};
}

double output_mismatch(const std::vector<double>& p, const IdentConfig& cfg, const std::vector<MeasurementRecord>& data) {
  std::vector<double> x = cfg.x0.mid();
  const std::size_t n = x.size();
  double t = cfg.t0, worst = 0;
  auto f = [&](const std::vector<double>& z, double tt) { return cfg.model.eval(z, cfg.input.at(tt), p); };
  for (const auto& rec : data) {
    const auto steps = std::max(1L, static_cast<long>(std::ceil((rec.t - t) / cfg.dt - 1e-9)));
    const double h = (rec.t - t) / static_cast<double>(steps);
    for (long s = 0; s < steps; ++s) {
      const double ts = t + static_cast<double>(s) * h;
      std::vector<double> tmp(n);
      const auto k1 = f(x, ts);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + h / 2 * k1[i];
      const auto k2 = f(tmp, ts + h / 2);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + h / 2 * k2[i];
      const auto k3 = f(tmp, ts + h / 2);
      for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + h * k3[i];
      const auto k4 = f(tmp, ts + h);
      for (std::size_t i = 0; i < n; ++i) x[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
    }
    t = rec.t;
    std::vector<double> env = x;
    const auto u = cfg.input.at(t);
    env.insert(env.end(), u.begin(), u.end());
    env.insert(env.end(), p.begin(), p.end());
    for (std::size_t i = 0; i < cfg.outputs.size(); ++i) {
      worst = std::max(worst, std::abs(cfg.outputs[i].eval(env) - rec.y[i]));
    }
  }
  return worst;
}

namespace {

// Among dimensions with eligible[i], the one maximizing width·|∂M/∂p_i|;
// near-equal scores go to the lowest index.
int sensitivity_dim(const IntervalVector& p, const std::vector<bool>& eligible, const IdentConfig& cfg,
                    const std::vector<MeasurementRecord>& data) {
  const std::vector<double> m = p.mid();
  int best = -1;
  double best_score = -1;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!eligible[i]) continue;
    const double w = p[i].hi() - p[i].lo();
    const double d = 1e-3 * w;
    auto a = m, b = m;
    a[i] = std::min(m[i] + d, p[i].hi());
    b[i] = std::max(m[i] - d, p[i].lo());
    const double sens = (output_mismatch(a, cfg, data) - output_mismatch(b, cfg, data)) / (a[i] - b[i]);
    const double score = w * std::abs(sens);
    if (best < 0 || score > best_score * (1 + 1e-9) + 1e-300) {
      best = static_cast<int>(i);
      best_score = score;
    }
  }
  return best;
}

int widest_relative_dim(const IntervalVector& p, const std::vector<bool>& eligible, const std::vector<double>& w0) {
  int best = -1;
  double best_rel = -1;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!eligible[i]) continue;
    const double rel = (p[i].hi() - p[i].lo()) / (w0[i] > 0 ? w0[i] : 1.0);
    if (rel > best_rel) {
      best = static_cast<int>(i);
      best_rel = rel;
    }
  }
  return best;
}

std::vector<Classification> classify_batch(const std::vector<IntervalVector>& boxes, const IdentConfig& cfg,
                                           const std::vector<MeasurementRecord>& data) {
  std::vector<Classification> out(boxes.size());
  const int workers = std::min<int>(cfg.workers, static_cast<int>(boxes.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < boxes.size(); ++i) out[i] = classify_box(boxes[i], cfg, data);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = next++; i < boxes.size(); i = next++) out[i] = classify_box(boxes[i], cfg, data);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace

int sensitivity_bisect_dim(const IntervalVector& p, const IdentConfig& cfg, const std::vector<MeasurementRecord>& data) {
  check_data(cfg, data);
  std::vector<bool> eligible(p.size());
  bool any = false;
  for (std::size_t i = 0; i < p.size(); ++i) {
    eligible[i] = p[i].hi() > p[i].lo();
    any = any || eligible[i];
  }
  if (!any) throw std::invalid_argument("sensitivity_bisect_dim: box is degenerate in every dimension");
  return sensitivity_dim(p, eligible, cfg, data);
}

void SiviaResult::write_csv(std::ostream& os) const {
  const std::size_t n = !feasible.empty() ? feasible[0].box.size()
                        : !undecided.empty() ? undecided[0].box.size()
                        : !infeasible.empty() ? infeasible[0].box.size() : 0;
  std::vector<std::string> h{"status"};
  for (std::size_t i = 0; i < n; ++i) {
    h.push_back("p" + std::to_string(i + 1) + "_lo");
    h.push_back("p" + std::to_string(i + 1) + "_hi");
  }
  csv::write_header(os, h);
  auto emit = [&](const std::vector<ParamBox>& v) {
    for (const auto& b : v) {
      os << to_string(b.status);
      for (const auto& iv : b.box) os << ',' << csv::fmt(iv.lo()) << ',' << csv::fmt(iv.hi());
      os << '\n';
    }
  };
  emit(feasible);
  emit(undecided);
  emit(infeasible);
}

SiviaResult sivia_identify(const IntervalVector& p0, const IdentConfig& cfg, const std::vector<MeasurementRecord>& data) {
  validate(cfg);
  check_data(cfg, data);
  if (p0.is_empty()) throw std::invalid_argument("sivia_identify: empty parameter box");
  if (static_cast<int>(p0.size()) != cfg.model.np()) throw DimensionError("sivia_identify: parameter box size");
  std::vector<double> w0(p0.size());
  for (std::size_t i = 0; i < p0.size(); ++i) w0[i] = p0[i].hi() - p0[i].lo();

  SiviaResult res;
  std::deque<IntervalVector> queue{p0};
  const std::size_t batch_cap = cfg.workers > 1 ? static_cast<std::size_t>(cfg.workers) * 4 : 1;
  while (!queue.empty()) {
    if (res.classifications >= cfg.max_boxes) {
      res.incomplete = true;
      for (auto& b : queue) res.undecided.push_back({std::move(b), BoxStatus::Undecided, false});
      queue.clear();
      break;
    }
    const std::size_t take = std::min({queue.size(), batch_cap,
                                       static_cast<std::size_t>(cfg.max_boxes - res.classifications)});
    std::vector<IntervalVector> batch(queue.begin(), queue.begin() + static_cast<long>(take));
    queue.erase(queue.begin(), queue.begin() + static_cast<long>(take));
    const auto cls = classify_batch(batch, cfg, data);
    res.classifications += static_cast<int>(take);
    for (std::size_t i = 0; i < take; ++i) {
      ParamBox pb{std::move(batch[i]), cls[i].status, cls[i].warning};
      if (pb.status == BoxStatus::Feasible) {
        res.feasible.push_back(std::move(pb));
        continue;
      }
      if (pb.status == BoxStatus::Infeasible) {
        res.infeasible.push_back(std::move(pb));
        continue;
      }
      std::vector<bool> eligible(pb.box.size());
      bool any = false;
      for (std::size_t d = 0; d < pb.box.size(); ++d) {
        eligible[d] = pb.box[d].hi() - pb.box[d].lo() > cfg.min_box_width;
        any = any || eligible[d];
      }
      if (!any) {
        res.undecided.push_back(std::move(pb));
        continue;
      }
      const int dim = cfg.bisect_rule == BisectRule::Sensitivity ? sensitivity_dim(pb.box, eligible, cfg, data)
                                                                 : widest_relative_dim(pb.box, eligible, w0);
      auto [l, r] = bisect(pb.box[dim]);
      IntervalVector a = pb.box, b = pb.box;
      a[dim] = l;
      b[dim] = r;
      queue.push_back(std::move(a));
      queue.push_back(std::move(b));
    }
  }
  return res;
}

PredictorCorrectorResult predictor_corrector_run(const IntervalVector& p0, const IdentConfig& cfg,
                                                 const std::vector<MeasurementRecord>& data) {
  validate(cfg);
  check_data(cfg, data);
  if (p0.is_empty()) throw std::invalid_argument("predictor_corrector_run: empty parameter box");
  if (static_cast<int>(p0.size()) != cfg.model.np()) throw DimensionError("predictor_corrector_run: parameter box size");
  const std::size_t n = cfg.x0.size(), m = static_cast<std::size_t>(cfg.model.m());

  PredictorCorrectorResult res;
  IntervalVector x = cfg.x0, p = p0;
  double t = cfg.t0;
  res.times.push_back(t);
  res.states.push_back(x);
  res.params.push_back(p);

  // HC4 through every output constraint at record k; empty result = inconsistent.
  auto correct = [&](const IntervalVector& xs, const IntervalVector& ps, const MeasurementRecord& rec) {
    IntervalVector env = cfg.model.env(xs, input_box(cfg, rec.t), ps);
    for (std::size_t i = 0; i < cfg.outputs.size() && !env.is_empty(); ++i) {
      env = hc4_contract(cfg.outputs[i], tube(rec, i), env);
    }
    return env;
  };
  auto split = [&](const IntervalVector& env, IntervalVector& xs, IntervalVector& ps) {
    xs = IntervalVector(std::vector<Interval>(env.begin(), env.begin() + static_cast<long>(n)));
    ps = IntervalVector(std::vector<Interval>(env.begin() + static_cast<long>(n + m), env.end()));
  };

  for (std::size_t k = 0; k < data.size(); ++k) {
    const auto& rec = data[k];
    const IntervalVector x_prev = x;
    IntervalVector pred;
    try {
      pred = advance_to(cfg, x_prev, t, rec.t, p);
    } catch (const StepRejected& e) {
      throw std::runtime_error(std::string("predictor_corrector_run: prediction failed: ") + e.what());
    }
    // Predicted outputs first (plain intersection test), then contraction.
    const IntervalVector env0 = cfg.model.env(pred, input_box(cfg, rec.t), p);
    for (std::size_t i = 0; i < cfg.outputs.size(); ++i) {
      if (intersect(cfg.outputs[i].eval(env0), tube(rec, i)).is_empty()) {
        throw ModelInconsistency(k, "predicted output does not meet the measurement tube");
      }
    }
    IntervalVector env = correct(pred, p, rec);
    if (env.is_empty()) throw ModelInconsistency(k, "contraction emptied the state/parameter box");
    split(env, x, p);

    // Parameter shaving: drop boundary slices of p whose prediction from the
    // previous corrected state cannot meet this record.
    if (cfg.shave_slices > 0) {
      bool changed = false;
      auto inconsistent = [&](const IntervalVector& ps) {
        try {
          const IntervalVector xs = advance_to(cfg, x_prev, t, rec.t, ps);
          return correct(xs, ps, rec).is_empty();
        } catch (const StepRejected&) {
          return false;
        }
      };
      for (std::size_t j = 0; j < p.size(); ++j) {
        const double step = (p[j].hi() - p[j].lo()) / cfg.shave_slices;
        if (!(step > 0)) continue;
        for (int s = 0; s < cfg.shave_slices - 1; ++s) {
          const double cut = p[j].lo() + step;
          if (!(cut < p[j].hi())) break;
          IntervalVector ps = p;
          ps[j] = Interval(p[j].lo(), cut);
          if (!inconsistent(ps)) break;
          p[j] = Interval(cut, p[j].hi());
          changed = true;
        }
        for (int s = 0; s < cfg.shave_slices - 1; ++s) {
          const double cut = p[j].hi() - step;
          if (!(cut > p[j].lo())) break;
          IntervalVector ps = p;
          ps[j] = Interval(cut, p[j].hi());
          if (!inconsistent(ps)) break;
          p[j] = Interval(p[j].lo(), cut);
          changed = true;
        }
      }
      if (changed) {
        IntervalVector re;
        try {
          re = intersect(advance_to(cfg, x_prev, t, rec.t, p), x);
        } catch (const StepRejected&) {
          re = x;
        }
        if (re.is_empty()) throw ModelInconsistency(k, "re-prediction after shaving is empty");
        env = correct(re, p, rec);
        if (env.is_empty()) throw ModelInconsistency(k, "contraction after shaving emptied the box");
        split(env, x, p);
      }
    }
    t = rec.t;
    res.times.push_back(t);
    res.states.push_back(x);
    res.params.push_back(p);
  }
  res.param_box = p;
  return res;
}

}  // namespace setctl
