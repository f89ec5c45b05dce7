#pragma once

// Interval model predictive control: branching over piecewise-constant input
// boxes, guaranteed slice enclosures and cost bounds, best-box selection.

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <vector>

#include "setctl/reach.hpp"

namespace setctl::mpc {

using Matrix = std::vector<std::vector<double>>;
using InputBoxSequence = std::vector<IntervalVector>;

class InfeasibleHorizon : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MPCConfig {
  int Np = 3;
  double Tc = 0.3;
  Matrix Q, R;
  // Corridor per prediction step (Np rows, or a single row used for all).
  std::vector<std::vector<double>> x_min, x_max;
  IntervalVector x_ref;
  IntervalVector u_domain;
  int branch_factor = 3;
  int max_nodes = 10000;
  double dt = 0.01;                // validated sub-step inside a slice
  bool require_terminal_hit = true;  // terminal box must meet x_ref

  void validate(int n, int m) const;
  std::vector<double> lo(int j) const { return x_min.size() == 1 ? x_min[0] : x_min.at(static_cast<std::size_t>(j)); }
  std::vector<double> hi(int j) const { return x_max.size() == 1 ? x_max[0] : x_max.at(static_cast<std::size_t>(j)); }
};

struct Prediction {
  std::vector<IntervalVector> slices;  // enclosure over [t_j, t_j + Tc]
  std::vector<IntervalVector> ends;    // enclosure at t_j + Tc
  bool failed = false;                 // validated integration gave up
};

// Slices for a (possibly partial) input sequence.
Prediction predict_slices(const NonlinearSystemModel& model, const IntervalVector& x_box, const InputBoxSequence& useq,
                          const IntervalVector& p_box, const MPCConfig& cfg);

bool slice_in_corridor(const IntervalVector& slice, int j, const MPCConfig& cfg);
bool terminal_ok(const IntervalVector& x_box, const IntervalVector& terminal, const MPCConfig& cfg);
bool is_safe(const Prediction& pred, const IntervalVector& x_box, const MPCConfig& cfg);

// Tc·Σ ((x_j - x_r)ᵀQ(x_j - x_r) + u_jᵀ R u_j), x_r = mid(x_ref).
Interval stage_cost(const IntervalVector& slice, const IntervalVector& u, const MPCConfig& cfg);
Interval cost_enclosure(const std::vector<IntervalVector>& slices, const InputBoxSequence& useq, const MPCConfig& cfg);

struct Candidate {
  InputBoxSequence useq;
  Interval J;
};

struct SearchResult {
  std::vector<Candidate> candidates;
  std::vector<InputBoxSequence> pruned;  // prefixes rejected as unsafe
  int nodes = 0;
};

// Depth-first search over per-step subdivisions of u_domain; throws
// InfeasibleHorizon if no safe complete sequence is found.
SearchResult filter_and_branch(const NonlinearSystemModel& model, const IntervalVector& x_box,
                               const IntervalVector& p_box, const MPCConfig& cfg);

struct Selection {
  Candidate best;
  std::vector<double> u_apply;
};
Selection optimize_and_extract(const std::vector<Candidate>& candidates);

// `model` is the (possibly pre-stabilized) prediction model; with K the
// returned actuator value is u_ff - K·mid(x_meas_box).
struct StepResult {
  std::vector<double> u;
  Selection sel;
  int n_candidates = 0;
};
StepResult mpc_step(const NonlinearSystemModel& model, const IntervalVector& x_meas_box, const IntervalVector& p_box,
                    const MPCConfig& cfg, const std::optional<Matrix>& prestab = std::nullopt);

struct LoopConfig {
  std::vector<double> x0, p_true;
  int steps = 20;
  double meas_halfwidth = 0;
  std::optional<Matrix> prestab;
};

struct LoopRow {
  int k = 0;
  double t = 0;
  std::vector<double> x, u;
  Interval J;
  int n_candidates = 0;
  bool infeasible = false;
};

struct LoopLog {
  std::vector<LoopRow> rows;
  std::vector<double> x_final;
  bool any_infeasible = false;
  void write_csv(std::ostream& os) const;  // k, u_apply, J_lo, J_hi, n_candidates, infeasible
};

// Receding-horizon loop on the point plant (p_true), RK4 over each Tc.
LoopLog run_closed_loop(const NonlinearSystemModel& model, const IntervalVector& p_box, const MPCConfig& cfg,
                        const LoopConfig& loop);

}  // namespace setctl::mpc
