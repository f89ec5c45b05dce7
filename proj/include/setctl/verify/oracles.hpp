#pragma once

// Independent reference computations used by the tests and the acceptance
// runner. Everything here is plain double arithmetic and deliberately does
// not call into the set-based code it is used to check.

#include <Eigen/Dense>
#include <functional>
#include <random>
#include <vector>

namespace setctl::oracle {

using Vec = std::vector<double>;
using Field = std::function<Vec(double t, const Vec& x)>;

// Classical RK4 with a fixed number of steps over [t0, t1].
Vec rk4(const Field& f, Vec x, double t0, double t1, int steps);

// States at each of `times` (ascending, times[0] is the initial time),
// `substeps` RK4 steps between consecutive times.
std::vector<Vec> rk4_trajectory(const Field& f, const Vec& x0, const std::vector<double>& times, int substeps);

// Uniform sample in [lo, hi] per component; with probability `corner_p`
// a component snaps to one of its endpoints.
Vec sample_box(std::mt19937_64& g, const Vec& lo, const Vec& hi, double corner_p = 0.0);

// Textbook Kalman filter for x⁺ = A x + E w, y = C x + v (covariances only).
struct KalmanStep {
  Eigen::MatrixXd P_pred, K, P_post;
};
std::vector<KalmanStep> kalman(const Eigen::MatrixXd& A, const Eigen::MatrixXd& E, const Eigen::MatrixXd& C,
                               const Eigen::MatrixXd& Cw, const Eigen::MatrixXd& Cv, const Eigen::MatrixXd& P0,
                               int steps);

// Uniform point of {mu + r·Γ·u : |u| <= 1}; `boundary` puts it on the surface.
Eigen::VectorXd sample_ellipsoid(std::mt19937_64& g, const Eigen::VectorXd& mu, const Eigen::MatrixXd& gamma, double r,
                                 bool boundary);

}  // namespace setctl::oracle
