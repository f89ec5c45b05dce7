#include "setctl/verify/oracles.hpp"

#include <cmath>
#include <stdexcept>

namespace setctl::oracle {

namespace {

Vec axpy(const Vec& x, double a, const Vec& y) {
  Vec r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) r[i] = x[i] + a * y[i];
  return r;
}

}  // namespace

Vec rk4(const Field& f, Vec x, double t0, double t1, int steps) {
  if (steps < 1) throw std::invalid_argument("rk4: steps must be >= 1");
  const double h = (t1 - t0) / steps;
  for (int k = 0; k < steps; ++k) {
    const double t = t0 + k * h;
    const Vec k1 = f(t, x);
    const Vec k2 = f(t + h / 2, axpy(x, h / 2, k1));
    const Vec k3 = f(t + h / 2, axpy(x, h / 2, k2));
    const Vec k4 = f(t + h, axpy(x, h, k3));
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += h / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
  }
  return x;
}

std::vector<Vec> rk4_trajectory(const Field& f, const Vec& x0, const std::vector<double>& times, int substeps) {
  std::vector<Vec> out{x0};
  for (std::size_t k = 1; k < times.size(); ++k) out.push_back(rk4(f, out.back(), times[k - 1], times[k], substeps));
  return out;
}

Vec sample_box(std::mt19937_64& g, const Vec& lo, const Vec& hi, double corner_p) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vec x(lo.size());
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (u(g) < corner_p) {
      x[i] = u(g) < 0.5 ? lo[i] : hi[i];
    } else {
      x[i] = lo[i] + u(g) * (hi[i] - lo[i]);
    }
  }
  return x;
}

std::vector<KalmanStep> kalman(const Eigen::MatrixXd& A, const Eigen::MatrixXd& E, const Eigen::MatrixXd& C,
                               const Eigen::MatrixXd& Cw, const Eigen::MatrixXd& Cv, const Eigen::MatrixXd& P0,
                               int steps) {
  std::vector<KalmanStep> out;
  Eigen::MatrixXd P = P0;
  const long n = P0.rows();
  for (int k = 0; k < steps; ++k) {
    KalmanStep s;
    s.P_pred = P;
    const Eigen::MatrixXd S = C * P * C.transpose() + Cv;
    s.K = P * C.transpose() * S.inverse();
    s.P_post = (Eigen::MatrixXd::Identity(n, n) - s.K * C) * P;
    out.push_back(s);
    if (k + 1 < steps) P = A * s.P_post * A.transpose() + E * Cw * E.transpose();
  }
  return out;
}

Eigen::VectorXd sample_ellipsoid(std::mt19937_64& g, const Eigen::VectorXd& mu, const Eigen::MatrixXd& gamma, double r,
                                 bool boundary) {
  std::normal_distribution<double> N(0, 1);
  std::uniform_real_distribution<double> U(0, 1);
  const long n = mu.size();
  Eigen::VectorXd u(n);
  for (long i = 0; i < n; ++i) u(i) = N(g);
  u /= u.norm();
  if (!boundary) u *= std::pow(U(g), 1.0 / static_cast<double>(n));
  return mu + r * gamma * u;
}

}  // namespace setctl::oracle
