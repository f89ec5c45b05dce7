#pragma once

// Interval observer for a two-RC equivalent circuit battery model
//   σ̇ = -i/C_bat,  v̇_TS = -v_TS/(R_TS C_TS) + i/C_TS,  v̇_TL likewise,
//   v_T = v_OC(σ) - v_TS - v_TL,
// and set-based reconstruction of the open-circuit-voltage curve.

#include <array>
#include <functional>
#include <iosfwd>
#include <vector>

#include "setctl/interval_vector.hpp"

namespace setctl::battery {

// Polynomial in σ with interval coefficients (ascending powers).
struct Poly {
  std::vector<Interval> c;
  Interval eval(const Interval& s) const;
};

struct BatteryParams {
  double c_bat = 1800;  // charge capacity (A·s)
  Poly r_ts, r_tl, c_ts, c_tl;
  // v_OC(σ) = v0 + v2 + v0·(e^{v1 σ} - 1) + v3 σ + v4 σ² + v5 σ³
  std::array<Interval, 6> v;

  Interval offset() const { return v[0] + v[2]; }
  void validate() const;
};

// (e^z - 1)/z with φ(0) = 1; monotone, enclosed endpoint-wise.
Interval phi(const Interval& z);
// η_OC(σ) with ṽ_OC = η_OC(σ)·σ = v_OC - v0 - v2
Interval eta_oc(const BatteryParams& p, const Interval& sigma);
Interval ocv_tilde(const BatteryParams& p, const Interval& sigma);
Interval ocv_slope(const BatteryParams& p, const Interval& sigma);  // dṽ_OC/dσ

struct System {
  IntervalMatrix A;
  IntervalVector b;
  Interval c_eta;
};
System build_system(const BatteryParams& p, const Interval& sigma);

// Offset-corrected measurement y* = y_m - v0 - v2.
Interval measurement_star(const Interval& y_m, const BatteryParams& p);

// One rigorous step of the bounding systems with H = (h1, 0, 0); x = (σ, v_TS, v_TL).
IntervalVector observer_step(const IntervalVector& x, double u, const Interval& y_star, double h1,
                             const BatteryParams& p, double dt);
// h1·inf η_OC over [0, 1] must be at least 1e-6 for a strictly stable σ-error.
bool h1_stable(double h1, const BatteryParams& p);

struct GammaBox {
  Interval sigma, voc;
};
GammaBox voc_estimate(const IntervalVector& x, const Interval& y_star);
// Widen voc so that it bounds the curve over all of sigma (slope bound).
GammaBox graph_box(const GammaBox& g, const BatteryParams& priors);

struct Segment {
  Interval sigma, voc;
  bool flag = false;  // an intersection came out empty here
};

struct OCVTube {
  std::vector<Segment> seg;  // sorted, σ-disjoint (touching allowed)
  int conflicts = 0;
  // hull of the voc bounds of segments whose σ contains s; empty if uncovered
  Interval at(double s) const;
  void write_csv(std::ostream& os) const;  // sigma_lo, sigma_hi, voc_lo, voc_hi, flag
};

OCVTube tube_update(OCVTube tube, GammaBox g);
OCVTube voc_contract(OCVTube tube, const BatteryParams& priors);

// ---- demo / truth simulation ----------------------------------------------

// Point parameters at the coefficient midpoints.
BatteryParams midpoint(const BatteryParams& p);
// Synthetic cell used by the demo and the tests.
BatteryParams demo_params(double rel_radius = 0.02);
// Discharge/rest/charge/rest square profile of period 1000 s.
double demo_current(double t);

struct ObserverConfig {
  double dt = 0.1;
  int steps = 10000;
  double h1 = 0.001;
  double dv = 0.01;             // measurement half-width (V)
  std::vector<double> x_true0 = {0.8, 0.0, 0.0};
  IntervalVector x_box0;        // default: x_true0 ± (0.05, 0.01, 0.01)
  unsigned long long seed = 1;
  bool contract = true;         // apply voc_contract at the end
};

struct ObserverRun {
  std::vector<double> t;
  std::vector<std::vector<double>> x_true;
  std::vector<IntervalVector> x_box;
  std::vector<double> y_m;
  OCVTube tube;
  int outside = 0;  // steps at which the truth left the box
};

// truth: point parameters; est: enclosures used by the observer.
ObserverRun run_observer(const BatteryParams& truth, const BatteryParams& est, const std::function<double(double)>& current,
                         const ObserverConfig& cfg);

// Measured cycle: terminal current i_T (applied until the next record),
// terminal voltage v_T and its half-width dv_T.
struct CellRecord {
  double t = 0, i = 0, v = 0, dv = 0;
};
std::vector<CellRecord> read_cell_csv(std::istream& is);  // t, i_T, v_T, dv_T
void write_cell_csv(std::ostream& os, const std::vector<CellRecord>& recs);
// Cell records of a run (current sampled at each step).
std::vector<CellRecord> cell_records(const ObserverRun& run, const std::function<double(double)>& current, double dv);

// Observer driven by recorded data; x_true stays empty.
ObserverRun run_on_data(const BatteryParams& est, const std::vector<CellRecord>& recs, double h1,
                        const IntervalVector& x_box0, bool contract = true);

}  // namespace setctl::battery
