#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "setctl/expr.hpp"

namespace setctl {

// ẋ = A x (+ b u), A ∈ [A].
struct LinearIntervalSystem {
  IntervalMatrix A;
  std::optional<IntervalVector> b;
  double dt = 1e-3;
};

// ẋ = f(x, u, p); expressions are over the concatenated environment
// states ∥ inputs ∥ parameters.
class NonlinearSystemModel {
 public:
  NonlinearSystemModel() = default;
  NonlinearSystemModel(std::vector<Expr> f, int n_inputs, int n_params);

  int n() const noexcept { return static_cast<int>(f_.size()); }
  int m() const noexcept { return n_inputs_; }
  int np() const noexcept { return n_params_; }
  const std::vector<Expr>& f() const noexcept { return f_; }
  // ∂f_i/∂x_j
  const Expr& jac(int i, int j) const { return jac_[i * n() + j]; }
  // d/dt f along the flow for constant u, p: Σ_j ∂f_i/∂x_j · f_j
  const std::vector<Expr>& flow_derivative() const noexcept { return ff_; }

  IntervalVector eval(const IntervalVector& x, const IntervalVector& u, const IntervalVector& p) const;
  IntervalMatrix eval_jacobian(const IntervalVector& x, const IntervalVector& u, const IntervalVector& p) const;
  std::vector<double> eval(const std::vector<double>& x, const std::vector<double>& u,
                           const std::vector<double>& p) const;

  IntervalVector env(const IntervalVector& x, const IntervalVector& u, const IntervalVector& p) const;

 private:
  std::vector<Expr> f_, jac_, ff_;
  int n_inputs_ = 0, n_params_ = 0;
};

struct BracketTube {
  std::vector<double> times;
  std::vector<std::vector<double>> v, w;

  IntervalVector box(std::size_t k) const { return IntervalVector::from_bounds(v[k], w[k]); }
  void write_csv(std::ostream& os) const;
};

// true iff inf(A_ij) >= 0 for all i != j.
bool metzler_check(const IntervalMatrix& A);

// One explicit Euler step of the lower/upper bounding system for
// ẋ ∈ [A] x + [c]. Plain Euler: not an enclosure of the continuous flow.
IntervalVector bracketing_euler(const IntervalMatrix& A, const IntervalVector& c, const IntervalVector& box,
                                double dt);
IntervalVector mueller_step(const LinearIntervalSystem& sys, const IntervalVector& box,
                            const Interval& u = Interval(0.0));

// Rigorous step of length dt for ẋ ∈ [A] x + [c] ([A] Metzler): Euler on the
// bounding system plus a second-order remainder, with an a-priori
// enclosure from a Picard test. Throws StepRejected if that test fails.
IntervalVector bracketing_step(const IntervalMatrix& A, const IntervalVector& c, const IntervalVector& box,
                               double dt);

// Tube at multiples of sys.dt (last step shortened to land on t_end);
// rejected steps are retried with halved sub-steps.
BracketTube integrate_bracketing(const LinearIntervalSystem& sys, const IntervalVector& box0, double t_end,
                                 const Interval& u = Interval(0.0));

struct ValidatedStep {
  IntervalVector end;      // enclosure at t + dt
  IntervalVector apriori;  // enclosure over [t, t + dt]
};

ValidatedStep validated_step(const NonlinearSystemModel& model, const IntervalVector& box,
                             const IntervalVector& u, const IntervalVector& p, double dt);
IntervalVector validated_euler_step(const NonlinearSystemModel& model, const IntervalVector& box,
                                    const IntervalVector& u, const IntervalVector& p, double dt);

// Enclosure at t1 from t0, halving the step on rejection (at most
// `max_halvings` times per step). Optionally accumulates the hull over the
// whole interval into `sweep`.
IntervalVector propagate(const NonlinearSystemModel& model, const IntervalVector& box, const IntervalVector& u,
                         const IntervalVector& p, double t0, double t1, double dt,
                         IntervalVector* sweep = nullptr, int max_halvings = 12);

// Rotation-scaling map A = (1/√2)[[1,1],[-1,1]] applied k times to [-1,1]²:
// step by step (wrapping) or as a single product with the enclosed A^k.
IntervalVector wrapping_naive(int k);
IntervalVector wrapping_power(int k);

}  // namespace setctl
