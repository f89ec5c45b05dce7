#pragma once

// Guaranteed prediction of confidence ellipsoids through quasi-linear maps
// z⁺ = Φ(z, p)·z, and an iterative-learning observer that couples two
// consecutive trials of a repeated task.

#include <Eigen/Dense>
#include <iosfwd>
#include <stdexcept>
#include <vector>

#include "setctl/expr.hpp"

namespace setctl::ellipsoid {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using ExprMatrix = std::vector<std::vector<Expr>>;

class EnclosureFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// {z : (z - mu)ᵀ (Γ Γᵀ)⁻¹ (z - mu) <= r²}, Γ = gamma.
struct Ellipsoid {
  Vec mu;
  Mat gamma;
  double r = 1;

  int dim() const { return static_cast<int>(mu.size()); }
  void validate() const;
  double condition() const;
  Mat shape() const { return gamma * gamma.transpose(); }
  // axis-aligned hull: half-width_i = r·|row i of Γ|
  IntervalVector box() const;
  // normalized squared distance (z - mu)ᵀ(ΓΓᵀ)⁻¹(z - mu)/r²
  double level(const Vec& z) const;
};

// Φ over (z ∥ p).
struct QLModel {
  ExprMatrix Phi;
  IntervalVector p_box;
  bool tilde_from_box = false;  // Φ̃ = mid Φ(□E, [p]) instead of Φ(μ, mid p)

  int dim() const { return static_cast<int>(Phi.size()); }
  void validate() const;
  IntervalMatrix eval(const IntervalVector& z_box) const;
  Mat eval_point(const Vec& z, const std::vector<double>& p) const;
};

// Sound test of M ⪯ 0 for every realization of the symmetric interval matrix:
// λ_max(mid M) + max row sum of rad M (plus a rounding margin) <= 0.
bool psd_upper_check(const IntervalMatrix& M);

// Smallest certified α with Λ [[-Q⁻¹, Tᵀ], [T, -α² R]] Λ ⪯ 0 for all T ∈ [T],
// Λ = blkdiag(βI, β⁻¹I), β² = λ_min(Q).
double alpha_min(const IntervalMatrix& T, const Mat& Q, const Mat& R);
// With T = Φ̃⁻¹ Φ(□E, [p]) and Q = R = r² Γ Γᵀ.
double alpha_min(const QLModel& model, const Ellipsoid& E);

struct PredictInfo {
  double alpha = 0, rho = 0;
};

// Every Φ(z, p)·z with z ∈ E, p ∈ [p] lies in the result.
Ellipsoid predict(const QLModel& model, const Ellipsoid& E, PredictInfo* info = nullptr);

// ---- iterative-learning observer ------------------------------------------

// x⁺ = A(x, p) x + E(x, p) w + δ,  y = C(x, p) x + v; expressions over (x ∥ p).
struct QLSystem {
  int n = 0, m = 0, nw = 0;
  ExprMatrix A, E, C;
  IntervalVector p_box;
  Mat Cw, Cv;

  void validate() const;
  Mat A_point(const Vec& x) const;
  Mat C_point(const Vec& x) const;
};

// Joint (or single-trial) estimate: stacked means and their covariance.
struct Estimate {
  Vec mu;
  Mat cov;
};

struct Diagnostics {
  double max_asymmetry = 0;  // largest |C - Cᵀ| entry removed by symmetrization
  int regularized = 0;       // gain solves that needed the ridge
};

// Prediction of nb = mu.size()/n stacked trials through the noise-augmented
// quasi-linear map; δ is added to each trial's midpoint.
Estimate predict_joint(const QLSystem& sys, const Estimate& e, const Vec& delta, double r,
                       PredictInfo* info = nullptr, Diagnostics* diag = nullptr);

struct Innovation {
  Estimate est;
  Mat H1, H2;        // H2 empty for a single trial
  Mat S;             // residual covariance
  bool regularized = false;
};

// One trial: standard gain P Cᵀ S⁻¹. Two trials: the causal structure
// H̃ = [[H1, 0], [H2, H1 - H2]] with trace-optimal H1, H2.
Innovation innovate(const QLSystem& sys, const Estimate& pred, const std::vector<Vec>& y, double r,
                    Diagnostics* diag = nullptr);

enum class DeltaRule { RunningMean, Ema };

struct ILOConfig {
  double r = 1;
  Vec mu0;
  Mat C0;
  double init_correlation = 0;  // initial error correlation between trials
  DeltaRule delta_rule = DeltaRule::RunningMean;
  double ema = 0.5;
  bool learn_delta = true;
};

struct TrialLog {
  std::vector<Vec> mu;                 // μᵉ_k
  std::vector<double> trace_p, trace_e, alpha, rho;
  std::vector<Mat> H1;
  std::vector<Vec> residual;           // μᵉ_{k+1} - A(μᵉ_k) μᵉ_k
  double residual_norm = 0;            // RMS of residual - δ
  void write_csv(std::ostream& os) const;  // k, mu_1..mu_n, trace_Cp, trace_Ce, alpha, rho_O
};

struct ILOResult {
  std::vector<TrialLog> trials;
  std::vector<std::vector<Vec>> delta;  // learned δ_k after each trial
  Diagnostics diag;
};

// trials[i][k] = measured y at step k of trial i (all of equal length).
ILOResult ilo_run(const QLSystem& sys, const std::vector<std::vector<Vec>>& trials, const ILOConfig& cfg);

}  // namespace setctl::ellipsoid
