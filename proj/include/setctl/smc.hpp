#pragma once

// Sliding-mode tracking control for plants in controller canonical form
//   ẋ_i = x_{i+1} (i < n),  ẋ_n = a(x, p) + b(x, p)·v,
// with one-/two-sided barrier extensions and the interval versions used to
// pick a certified point control at run time.

#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "setctl/expr.hpp"
#include "setctl/interval_vector.hpp"

namespace setctl::smc {

class BarrierViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class ControllabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class StabilizationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Variant { I, IA, IB, II, IIA, IIB };
Variant parse_variant(const std::string& s);  // "I", "IA", ..., "IIB"
const char* to_string(Variant v);
inline bool second_order(Variant v) { return v == Variant::II || v == Variant::IIA || v == Variant::IIB; }
inline bool barrier_a(Variant v) { return v == Variant::IA || v == Variant::IIA; }
inline bool barrier_b(Variant v) { return v == Variant::IB || v == Variant::IIB; }

struct CanonicalPlant {
  int n = 0;
  Expr a, b;  // over x_1..x_n ∥ p
  IntervalVector p_box;
  void validate() const;
};

// c_0 + c_1 z + ... + c_k z^k has all roots in the open left half plane.
bool is_hurwitz(const std::vector<double>& c);

struct SurfaceConfig {
  std::vector<double> alpha;  // α_0..α_{n-1}, α_{n-1} = 1
  double alpha_m1 = 0;        // integral weight
  double gamma0 = 1, gamma1 = 1;
  double lambda = 0;          // <= 0 means λ = γ1
  double lam() const { return lambda > 0 ? lambda : gamma1; }
  void validate(int n) const;
};

struct GainConfig {
  double eta_t = 0.5;
  double eta1_t = 0.1, eta2_t = 0.1;
  double eps_t = 1e-6;    // regularizer of 1/s
  double eps_sel = 1e-3;  // candidate inflation
  void validate() const;
};

struct BarrierConfig {
  double rho_v = 0.1, sigma_v = 1;
  double dx1max = 0.2;  // one-sided: x_1 < x_1d + dx1max
  double chi_bar = 0.3; // two-sided: |x_1 - x_1d| < chi_bar
  int l = 1;
  void validate() const;
};

// Desired trajectory and its derivatives up to order n.
struct Reference {
  int n = 0;
  std::function<std::vector<double>(double)> derivs;
  std::vector<double> at(double t) const;
  static Reference sine(int n, double offset, double amp, double omega);
};

struct SlidingValues {
  double s = 0, s_dot = 0;
};

// xi = (ξ^(-1), ξ^(0), ..., ξ^(n-1)). Without s_state, s is the algebraic
// surface Σ α_r ξ^(r); ṡ always follows from the lag relation
// γ1 ṡ + γ0 s = Σ_{r=-1}^{n-1} α_r ξ^(r).
SlidingValues sliding_values(const std::vector<double>& xi, const SurfaceConfig& cfg,
                             std::optional<double> s_state = std::nullopt);

// Point laws; `ref` holds x_1d and its derivatives (size n+1).
double u_first_order(const std::vector<double>& xi, double xd_n, const SurfaceConfig& cfg, const GainConfig& g);
double u_second_order(const std::vector<double>& xi, double s, double s_dot, double xd_n, const SurfaceConfig& cfg,
                      const GainConfig& g);
double barrier_A_rate(double x1, double x1_dot, const std::vector<double>& ref, const BarrierConfig& b);
double barrier_B_rate(double x1, double x1_dot, const std::vector<double>& ref, const BarrierConfig& b);
double u_first_order_A(const std::vector<double>& xi, const std::vector<double>& ref, const SurfaceConfig& cfg,
                       const GainConfig& g, const BarrierConfig& b);
double u_first_order_B(const std::vector<double>& xi, const std::vector<double>& ref, const SurfaceConfig& cfg,
                       const GainConfig& g, const BarrierConfig& b);
double u_second_order_A(const std::vector<double>& xi, double s, double s_dot, const std::vector<double>& ref,
                        const SurfaceConfig& cfg, const GainConfig& g, const BarrierConfig& b);
double u_second_order_B(const std::vector<double>& xi, double s, double s_dot, const std::vector<double>& ref,
                        const SurfaceConfig& cfg, const GainConfig& g, const BarrierConfig& b);

struct ControllerConfig {
  Variant variant = Variant::I;
  SurfaceConfig surface;
  GainConfig gains;
  BarrierConfig barrier;
  void validate(int n) const;
};

// Controller memory: integral of ξ^(0) and the lag state s (second order).
struct ControllerState {
  double xi_int = 0;
  double s = 0;
};

// Point law of the virtual input u and the physical control v = (u - a)/b.
double point_u(const std::vector<double>& x, const std::vector<double>& ref, const ControllerConfig& cfg,
               const ControllerState& st);
double point_control(const std::vector<double>& x, const std::vector<double>& p, const CanonicalPlant& plant,
                     const std::vector<double>& ref, const ControllerConfig& cfg, const ControllerState& st);

// Interval enclosure of the selected law over x_box × plant.p_box.
Interval interval_control_box(const IntervalVector& x_box, const CanonicalPlant& plant, const std::vector<double>& ref,
                              const ControllerConfig& cfg, const ControllerState& st);

// Enclosure of the Lyapunov derivative (with barrier term) when v is applied.
Interval lyapunov_rate(double v, const IntervalVector& x_box, const CanonicalPlant& plant,
                       const std::vector<double>& ref, const ControllerConfig& cfg, const ControllerState& st);

// Candidates v_lo ± eps, v_hi ± eps; minimum |v| among those with sup(V̇) < 0.
double select_point_control(const Interval& v_box, const std::function<Interval(double)>& lyap, double eps);

class Controller {
 public:
  struct Decision {
    Interval v_box;
    double v = 0;
    bool certified = false;
    double vdot_sup = 0;  // sup of the Lyapunov-derivative enclosure for the applied v
    double s = 0, s_dot = 0;
  };

  Controller(CanonicalPlant plant, ControllerConfig cfg, Reference ref, ControllerState init = {});

  // Control for x_box at time t; afterwards advances the internal states by dt.
  Decision step(double t, const IntervalVector& x_box, double dt);
  const ControllerState& state() const noexcept { return st_; }

 private:
  CanonicalPlant plant_;
  ControllerConfig cfg_;
  Reference ref_;
  ControllerState st_;
  double v_prev_ = 0;
};

struct ClosedLoopConfig {
  std::vector<double> x0, p_true;
  double dt = 1e-3;
  int steps = 10000;
  double meas_halfwidth = 0;  // state measurements are x ± this
  ControllerState init;
};

struct ClosedLoopLog {
  int n = 0;
  std::vector<double> t;
  std::vector<std::vector<double>> x;
  std::vector<Controller::Decision> decisions;
  int uncertified = 0;
  void write_csv(std::ostream& os) const;  // t, x_1..x_n, s, s_dot, u_applied, u_lo, u_hi, certified
};

ClosedLoopLog simulate_closed_loop(const CanonicalPlant& plant, const ControllerConfig& cfg, const Reference& ref,
                                   const ClosedLoopConfig& cl);

}  // namespace setctl::smc
