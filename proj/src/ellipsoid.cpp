#include "setctl/ellipsoid.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

namespace setctl::ellipsoid {

namespace {

void symmetrize(Mat& C, Diagnostics* diag) {
  const double asym = (C - C.transpose()).cwiseAbs().maxCoeff();
  if (diag) diag->max_asymmetry = std::max(diag->max_asymmetry, asym);
  C = 0.5 * (C + C.transpose());
}

Mat chol_factor(const Mat& C) {
  Eigen::LLT<Mat> llt(C);
  if (llt.info() != Eigen::Success) throw EnclosureFailure("covariance is not positive definite");
  return llt.matrixL();
}

double lambda_max(const Mat& S) {
  Eigen::SelfAdjointEigenSolver<Mat> es(S, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw EnclosureFailure("eigenvalue computation failed");
  return es.eigenvalues().maxCoeff();
}

// Certificate on midpoint/radius form.
bool nsd_certified(const Mat& mid, const Mat& rad) {
  const double lam = lambda_max(mid);
  double rs = 0;
  for (int i = 0; i < rad.rows(); ++i) {
    double s = 0;
    for (int j = 0; j < rad.cols(); ++j) s = rnd::add_up(s, rad(i, j));
    rs = std::max(rs, s);
  }
  // eigen-solver error allowance
  const double margin = 64 * std::numeric_limits<double>::epsilon() * std::max(1.0, mid.cwiseAbs().maxCoeff()) *
                        static_cast<double>(mid.rows());
  return rnd::add_up(rnd::add_up(lam, rs), margin) <= 0;
}

void mid_rad(const IntervalMatrix& M, Mat& mid, Mat& rad) {
  mid.resize(static_cast<int>(M.rows()), static_cast<int>(M.cols()));
  rad.resize(mid.rows(), mid.cols());
  for (std::size_t i = 0; i < M.rows(); ++i)
    for (std::size_t j = 0; j < M.cols(); ++j) {
      const Interval& a = M(i, j);
      if (a.is_empty() || !a.is_finite()) throw EnclosureFailure("unbounded matrix entry");
      const double m = a.mid();
      mid(static_cast<int>(i), static_cast<int>(j)) = m;
      rad(static_cast<int>(i), static_cast<int>(j)) = std::max(rnd::sub_up(a.hi(), m), rnd::sub_up(m, a.lo()));
    }
}

IntervalMatrix to_interval(const Mat& A) {
  IntervalMatrix R(static_cast<std::size_t>(A.rows()), static_cast<std::size_t>(A.cols()));
  for (int i = 0; i < A.rows(); ++i)
    for (int j = 0; j < A.cols(); ++j) R(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = Interval(A(i, j));
  return R;
}

IntervalVector to_interval(const Vec& v) {
  IntervalVector r(static_cast<std::size_t>(v.size()));
  for (int i = 0; i < v.size(); ++i) r[static_cast<std::size_t>(i)] = Interval(v(i));
  return r;
}

double mag(const Interval& a) { return std::max(std::abs(a.lo()), std::abs(a.hi())); }

}  // namespace

// ---- Ellipsoid / model ----------------------------------------------------

void Ellipsoid::validate() const {
  const int n = dim();
  if (n == 0 || gamma.rows() != n || gamma.cols() != n) throw DimensionError("Ellipsoid: shape must be n×n");
  if (!(r >= 1) || !std::isfinite(r)) throw std::invalid_argument("Ellipsoid: r must be >= 1");
  if (!mu.allFinite() || !gamma.allFinite()) throw std::invalid_argument("Ellipsoid: non-finite entries");
  if (!(condition() <= 1e12)) throw EnclosureFailure("Ellipsoid: shape matrix condition number above 1e12");
}

double Ellipsoid::condition() const {
  Eigen::JacobiSVD<Mat> svd(gamma);
  const auto& s = svd.singularValues();
  const double lo = s(s.size() - 1);
  return lo > 0 ? s(0) / lo : std::numeric_limits<double>::infinity();
}

IntervalVector Ellipsoid::box() const {
  IntervalVector b(static_cast<std::size_t>(dim()));
  for (int i = 0; i < dim(); ++i) {
    double ss = 0;
    for (int j = 0; j < dim(); ++j) ss = rnd::add_up(ss, rnd::mul_up(gamma(i, j), gamma(i, j)));
    const double h = rnd::mul_up(r, rnd::sqrt_up(ss));
    b[static_cast<std::size_t>(i)] = Interval(rnd::sub_down(mu(i), h), rnd::add_up(mu(i), h));
  }
  return b;
}

double Ellipsoid::level(const Vec& z) const {
  const Vec d = gamma.fullPivLu().solve(z - mu);
  return d.squaredNorm() / (r * r);
}

void QLModel::validate() const {
  const std::size_t n = Phi.size();
  if (n == 0) throw DimensionError("QLModel: empty Φ");
  for (const auto& row : Phi)
    if (row.size() != n) throw DimensionError("QLModel: Φ must be square");
  for (const auto& row : Phi)
    for (const auto& e : row)
      if (e.max_var() >= static_cast<int>(n + p_box.size())) throw DimensionError("QLModel: expression uses unknown variable");
}

IntervalMatrix QLModel::eval(const IntervalVector& z_box) const {
  const IntervalVector env = concat(z_box, p_box);
  const std::size_t n = Phi.size();
  IntervalMatrix M(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) M(i, j) = Phi[i][j].eval(env);
  return M;
}

Mat QLModel::eval_point(const Vec& z, const std::vector<double>& p) const {
  std::vector<double> env(z.data(), z.data() + z.size());
  env.insert(env.end(), p.begin(), p.end());
  const int n = dim();
  Mat M(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) M(i, j) = Phi[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].eval(env);
  return M;
}

// ---- certification --------------------------------------------------------

bool psd_upper_check(const IntervalMatrix& M) {
  if (!M.is_square()) throw DimensionError("psd_upper_check: matrix must be square");
  for (std::size_t i = 0; i < M.rows(); ++i)
    for (std::size_t j = i + 1; j < M.cols(); ++j)
      if (!(M(i, j) == M(j, i))) throw std::invalid_argument("psd_upper_check: matrix is not symmetric");
  Mat mid, rad;
  mid_rad(M, mid, rad);
  return nsd_certified(mid, rad);
}

namespace {

// Congruence with blkdiag(L_Q, L_R⁻ᵀ), Q = L_Q L_Qᵀ, turns the LMI into [[-I, Kᵀ], [K, -α² I]],
// K = L_R⁻¹ T L_Q; both diagonal blocks are then well scaled.
double alpha_factored(const IntervalMatrix& T, const Mat& LQ, const Mat& LRinv) {
  const int n = static_cast<int>(T.rows());
  const IntervalMatrix K = to_interval(LRinv) * T * to_interval(LQ);
  Mat Km, Kr;
  mid_rad(K, Km, Kr);
  Mat mid = Mat::Zero(2 * n, 2 * n), rad = Mat::Zero(2 * n, 2 * n);
  mid.topLeftCorner(n, n) = -Mat::Identity(n, n);
  mid.bottomLeftCorner(n, n) = Km;
  mid.topRightCorner(n, n) = Km.transpose();
  rad.bottomLeftCorner(n, n) = Kr;
  rad.topRightCorner(n, n) = Kr.transpose();
  auto ok = [&](double a) {
    mid.bottomRightCorner(n, n) = -a * a * Mat::Identity(n, n);
    return nsd_certified(mid, rad);
  };

  double hi = 1;
  while (!ok(hi)) {
    hi *= 2;
    if (hi > 1e6) throw EnclosureFailure("alpha_min: no certified α below 1e6");
  }
  double lo = hi > 1 ? hi / 2 : 0;
  while (hi - lo > 1e-12 * hi) {
    const double m = 0.5 * (lo + hi);
    if (m <= lo || m >= hi) break;
    (ok(m) ? hi : lo) = m;
  }
  return hi;
}

Mat chol(const Mat& Q, const char* what) {
  Eigen::LLT<Mat> llt(0.5 * (Q + Q.transpose()));
  if (llt.info() != Eigen::Success) throw EnclosureFailure(std::string("alpha_min: ") + what + " is not positive definite");
  return llt.matrixL();
}

}  // namespace

double alpha_min(const IntervalMatrix& T, const Mat& Q, const Mat& R) {
  const int n = static_cast<int>(T.rows());
  if (!T.is_square() || Q.rows() != n || Q.cols() != n || R.rows() != n || R.cols() != n)
    throw DimensionError("alpha_min: dimension mismatch");
  const Mat LQ = chol(Q, "Q");
  const Mat LR = chol(R, "R");
  return alpha_factored(T, LQ, LR.triangularView<Eigen::Lower>().solve(Mat::Identity(n, n)));
}

namespace {

struct Setup {
  IntervalMatrix Phi;
  Mat tilde, tilde_inv, Gam;
};

Setup setup(const QLModel& model, const Ellipsoid& E) {
  model.validate();
  E.validate();
  if (E.dim() != model.dim()) throw DimensionError("predict: ellipsoid and model dimensions differ");
  Setup s;
  s.Phi = model.eval(E.box());
  if (model.tilde_from_box) {
    Mat m, r;
    mid_rad(s.Phi, m, r);
    s.tilde = m;
  } else {
    s.tilde = model.eval_point(E.mu, model.p_box.mid());
  }
  Eigen::FullPivLU<Mat> lu(s.tilde);
  if (!lu.isInvertible()) throw EnclosureFailure("predict: Φ̃ is singular");
  s.tilde_inv = lu.inverse();
  s.Gam = E.r * E.gamma;
  return s;
}

}  // namespace

double alpha_min(const QLModel& model, const Ellipsoid& E) {
  const Setup s = setup(model, E);
  return alpha_factored(to_interval(s.tilde_inv) * s.Phi, s.Gam, s.Gam.fullPivLu().inverse());
}

Ellipsoid predict(const QLModel& model, const Ellipsoid& E, PredictInfo* info) {
  const Setup s = setup(model, E);
  const double alpha = alpha_factored(to_interval(s.tilde_inv) * s.Phi, s.Gam, s.Gam.fullPivLu().inverse());

  // offset from the non-centred midpoint, measured in the Φ̃⁻¹-mapped metric
  const IntervalVector b = (s.Phi - to_interval(s.tilde)) * to_interval(E.mu);
  const Mat K = s.Gam.fullPivLu().solve(s.tilde_inv);
  const IntervalVector c = to_interval(K) * b;
  double ss = 0;
  for (const auto& ci : c) ss = rnd::add_up(ss, rnd::mul_up(mag(ci), mag(ci)));
  const double rho = rnd::div_up(rnd::sqrt_up(ss), alpha);

  Ellipsoid out;
  out.mu = s.tilde * E.mu;
  out.gamma = alpha * (1 + rho) * (s.tilde * E.gamma);
  out.r = E.r;
  if (!(out.condition() <= 1e12)) throw EnclosureFailure("predict: shape matrix condition number above 1e12");
  if (info) *info = {alpha, rho};
  return out;
}

// ---- observer -------------------------------------------------------------

void QLSystem::validate() const {
  if (n <= 0 || m <= 0 || m > n || nw < 0) throw DimensionError("QLSystem: bad dimensions");
  auto shape = [](const ExprMatrix& M, int r, int c, const char* what) {
    if (static_cast<int>(M.size()) != r) throw DimensionError(std::string("QLSystem: ") + what + " has wrong row count");
    for (const auto& row : M)
      if (static_cast<int>(row.size()) != c) throw DimensionError(std::string("QLSystem: ") + what + " has wrong column count");
  };
  shape(A, n, n, "A");
  shape(E, n, nw, "E");
  shape(C, m, n, "C");
  if (Cw.rows() != nw || Cw.cols() != nw) throw DimensionError("QLSystem: Cw must be nw×nw");
  if (Cv.rows() != m || Cv.cols() != m) throw DimensionError("QLSystem: Cv must be m×m");
  auto psd = [](const Mat& M, const char* what) {
    if (M.size() == 0) return;
    if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, M.cwiseAbs().maxCoeff()))
      throw std::invalid_argument(std::string("QLSystem: ") + what + " must be symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> es(M);
    if (es.eigenvalues().minCoeff() < -1e-12 * std::max(1.0, M.cwiseAbs().maxCoeff()))
      throw std::invalid_argument(std::string("QLSystem: ") + what + " must be PSD");
  };
  psd(Cw, "Cw");
  psd(Cv, "Cv");
}

namespace {

Mat point_matrix(const ExprMatrix& M, const Vec& x, const IntervalVector& p_box) {
  std::vector<double> env(x.data(), x.data() + x.size());
  const auto pm = p_box.mid();
  env.insert(env.end(), pm.begin(), pm.end());
  const int r = static_cast<int>(M.size()), c = r ? static_cast<int>(M[0].size()) : 0;
  Mat R(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) R(i, j) = M[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].eval(env);
  return R;
}

// Variables (x ∥ p) of the system mapped to x → var(xoff + j), p → var(poff + q).
std::vector<Expr> remap(int n, std::size_t np, int xoff, int poff) {
  std::vector<Expr> r;
  for (int j = 0; j < n; ++j) r.push_back(Expr::var(xoff + j));
  for (std::size_t q = 0; q < np; ++q) r.push_back(Expr::var(poff + static_cast<int>(q)));
  return r;
}

// Full-column-rank square-root factor of Cw.
Mat noise_factor(const Mat& Cw) {
  if (Cw.size() == 0) return Mat(0, 0);
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (Cw + Cw.transpose()));
  const double top = std::max(0.0, es.eigenvalues().maxCoeff());
  std::vector<int> keep;
  for (int i = 0; i < es.eigenvalues().size(); ++i)
    if (es.eigenvalues()(i) > 1e-14 * top && es.eigenvalues()(i) > 0) keep.push_back(i);
  Mat L(Cw.rows(), static_cast<int>(keep.size()));
  for (std::size_t q = 0; q < keep.size(); ++q)
    L.col(static_cast<int>(q)) = es.eigenvectors().col(keep[q]) * std::sqrt(es.eigenvalues()(keep[q]));
  return L;
}

int trial_count(const QLSystem& sys, const Estimate& e) {
  if (e.mu.size() == 0 || e.mu.size() % sys.n != 0) throw DimensionError("estimate size is not a multiple of n");
  const int nb = static_cast<int>(e.mu.size() / sys.n);
  if (nb > 2) throw DimensionError("at most two trials can be coupled");
  if (e.cov.rows() != e.mu.size() || e.cov.cols() != e.mu.size()) throw DimensionError("covariance size mismatch");
  return nb;
}

}  // namespace

Mat QLSystem::A_point(const Vec& x) const { return point_matrix(A, x, p_box); }
Mat QLSystem::C_point(const Vec& x) const { return point_matrix(C, x, p_box); }

Estimate predict_joint(const QLSystem& sys, const Estimate& e, const Vec& delta, double r, PredictInfo* info,
                       Diagnostics* diag) {
  sys.validate();
  const int nb = trial_count(sys, e), n = sys.n;
  if (delta.size() != n) throw DimensionError("predict_joint: δ must have n components");
  const Mat L = noise_factor(sys.Cw);
  const int rw = static_cast<int>(L.cols());
  const int N = nb * n + nb * rw;
  const std::size_t np = sys.p_box.size();

  QLModel model;
  model.p_box = sys.p_box;
  model.Phi.assign(static_cast<std::size_t>(N), std::vector<Expr>(static_cast<std::size_t>(N), Expr(0.0)));
  for (int b = 0; b < nb; ++b) {
    const auto rep = remap(n, np, b * n, N);
    for (int i = 0; i < n; ++i) {
      auto& row = model.Phi[static_cast<std::size_t>(b * n + i)];
      for (int j = 0; j < n; ++j)
        row[static_cast<std::size_t>(b * n + j)] = sys.A[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].substitute(rep);
      for (int q = 0; q < rw; ++q) {
        Expr s(0.0);
        for (int l = 0; l < sys.nw; ++l)
          if (L(l, q) != 0) s = s + sys.E[static_cast<std::size_t>(i)][static_cast<std::size_t>(l)].substitute(rep) * Expr(L(l, q));
        row[static_cast<std::size_t>(nb * n + b * rw + q)] = s;
      }
    }
  }
  for (int q = nb * n; q < N; ++q) model.Phi[static_cast<std::size_t>(q)][static_cast<std::size_t>(q)] = Expr(1.0);

  Ellipsoid Ez;
  Ez.mu = Vec::Zero(N);
  Ez.mu.head(nb * n) = e.mu;
  Ez.gamma = Mat::Identity(N, N);
  Ez.gamma.topLeftCorner(nb * n, nb * n) = chol_factor(e.cov);
  Ez.r = r;
  const Ellipsoid P = predict(model, Ez, info);

  Estimate out;
  out.mu = P.mu.head(nb * n);
  for (int b = 0; b < nb; ++b) out.mu.segment(b * n, n) += delta;
  out.cov = P.shape().topLeftCorner(nb * n, nb * n);
  symmetrize(out.cov, diag);
  return out;
}

Innovation innovate(const QLSystem& sys, const Estimate& pred, const std::vector<Vec>& y, double r, Diagnostics* diag) {
  sys.validate();
  const int nb = trial_count(sys, pred), n = sys.n, m = sys.m;
  if (static_cast<int>(y.size()) != nb) throw DimensionError("innovate: one measurement per trial expected");
  for (const auto& yi : y)
    if (yi.size() != m) throw DimensionError("innovate: measurement size must be m");
  const std::size_t np = sys.p_box.size();
  const int N = nb * n;

  // output ellipsoid through [C(x^1); C(x^2); unmeasured selectors]
  QLModel out;
  out.p_box = sys.p_box;
  out.Phi.assign(static_cast<std::size_t>(N), std::vector<Expr>(static_cast<std::size_t>(N), Expr(0.0)));
  for (int b = 0; b < nb; ++b) {
    const auto rep = remap(n, np, b * n, N);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        out.Phi[static_cast<std::size_t>(b * m + i)][static_cast<std::size_t>(b * n + j)] =
            sys.C[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].substitute(rep);
    for (int j = 0; j < n - m; ++j)
      out.Phi[static_cast<std::size_t>(nb * m + b * (n - m) + j)][static_cast<std::size_t>(b * n + m + j)] = Expr(1.0);
  }
  const Ellipsoid Ey = predict(out, Ellipsoid{pred.mu, chol_factor(pred.cov), r});
  Mat S = Ey.shape().topLeftCorner(nb * m, nb * m);
  for (int b = 0; b < nb; ++b) S.block(b * m, b * m, m, m) += sys.Cv;
  symmetrize(S, diag);

  Mat Ct = Mat::Zero(nb * m, N);
  for (int b = 0; b < nb; ++b) Ct.block(b * m, b * n, m, n) = sys.C_point(pred.mu.segment(b * n, n));
  const Mat& P = pred.cov;

  Innovation inn;
  auto solve_right = [&](const Mat& rhs, Mat G) {
    // X G = rhs
    Eigen::FullPivLU<Mat> lu(G.transpose());
    if (!lu.isInvertible() || lu.rcond() < 1e-14) {
      G += 1e-12 * Mat::Identity(G.rows(), G.cols());
      lu.compute(G.transpose());
      inn.regularized = true;
      if (diag) ++diag->regularized;
    }
    return Mat(lu.solve(rhs.transpose()).transpose());
  };

  Mat Ht;
  if (nb == 1) {
    inn.H1 = solve_right(P * Ct.transpose(), S);
    Ht = inn.H1;
  } else {
    const Mat C1 = Ct.block(0, 0, m, n), C2 = Ct.block(m, n, m, n);
    const Mat PA = P.topLeftCorner(n, n), PB = P.topRightCorner(n, n), PC = P.bottomRightCorner(n, n);
    const Mat SA = S.topLeftCorner(m, m), SB = S.topRightCorner(m, m), SC = S.bottomRightCorner(m, m);
    Mat G(2 * m, 2 * m), rhs(n, 2 * m);
    G << SA + SC, SB.transpose() - SC, SB - SC, SA - SB - SB.transpose() + SC;
    rhs << PA * C1.transpose() + PC * C2.transpose(), PB.transpose() * C1.transpose() - PC * C2.transpose();
    const Mat X = solve_right(rhs, G);
    inn.H1 = X.leftCols(m);
    inn.H2 = X.rightCols(m);
    Ht = Mat::Zero(N, 2 * m);
    Ht.topLeftCorner(n, m) = inn.H1;
    Ht.bottomLeftCorner(n, m) = inn.H2;
    Ht.bottomRightCorner(n, m) = inn.H1 - inn.H2;
  }

  Vec ym(nb * m);
  for (int b = 0; b < nb; ++b) ym.segment(b * m, m) = y[static_cast<std::size_t>(b)];
  inn.est.mu = pred.mu + Ht * (ym - Ct * pred.mu);
  const Mat M = Mat::Identity(N, N) - Ht * Ct;
  Mat Cv2 = Mat::Zero(nb * m, nb * m);
  for (int b = 0; b < nb; ++b) Cv2.block(b * m, b * m, m, m) = sys.Cv;
  inn.est.cov = M * P * M.transpose() + Ht * Cv2 * Ht.transpose();
  symmetrize(inn.est.cov, diag);
  inn.S = S;
  return inn;
}

void TrialLog::write_csv(std::ostream& os) const {
  const int n = mu.empty() ? 0 : static_cast<int>(mu[0].size());
  os << "k";
  for (int i = 1; i <= n; ++i) os << ",mu_" << i;
  os << ",trace_Cp,trace_Ce,alpha,rho_O\n";
  os.precision(17);
  for (std::size_t k = 0; k < mu.size(); ++k) {
    os << k;
    for (int i = 0; i < n; ++i) os << ',' << mu[k](i);
    os << ',' << trace_p[k] << ',' << trace_e[k] << ',' << alpha[k] << ',' << rho[k] << '\n';
  }
}

ILOResult ilo_run(const QLSystem& sys, const std::vector<std::vector<Vec>>& trials, const ILOConfig& cfg) {
  sys.validate();
  const int n = sys.n;
  if (trials.empty()) throw std::invalid_argument("ilo_run: no trials");
  const std::size_t K = trials[0].size();
  if (K == 0) throw std::invalid_argument("ilo_run: empty trial");
  for (const auto& t : trials)
    if (t.size() != K) throw std::invalid_argument("ilo_run: trials must share the horizon length");
  if (cfg.mu0.size() != n || cfg.C0.rows() != n || cfg.C0.cols() != n) throw DimensionError("ilo_run: bad initial estimate");
  if (!(std::abs(cfg.init_correlation) < 1)) throw std::invalid_argument("ilo_run: |init_correlation| must be < 1");
  if (cfg.delta_rule == DeltaRule::Ema && !(cfg.ema > 0 && cfg.ema <= 1)) throw std::invalid_argument("ilo_run: ema in (0, 1]");

  ILOResult res;
  std::vector<Vec> delta(K, Vec::Zero(n));
  for (std::size_t tr = 0; tr < trials.size(); ++tr) {
    const int nb = tr == 0 ? 1 : 2;
    Estimate e;
    e.mu = Vec(nb * n);
    e.cov = Mat(nb * n, nb * n);
    for (int b = 0; b < nb; ++b) {
      e.mu.segment(b * n, n) = cfg.mu0;
      for (int c = 0; c < nb; ++c) e.cov.block(b * n, c * n, n, n) = (b == c ? 1.0 : cfg.init_correlation) * cfg.C0;
    }
    TrialLog log;
    PredictInfo info{1, 0};
    for (std::size_t k = 0; k < K; ++k) {
      std::vector<Vec> ys;
      if (nb == 2) ys.push_back(trials[tr - 1][k]);
      ys.push_back(trials[tr][k]);
      const Innovation inn = innovate(sys, e, ys, cfg.r, &res.diag);
      const int off = (nb - 1) * n;
      log.mu.push_back(inn.est.mu.segment(off, n));
      log.trace_p.push_back(e.cov.block(off, off, n, n).trace());
      log.trace_e.push_back(inn.est.cov.block(off, off, n, n).trace());
      log.alpha.push_back(info.alpha);
      log.rho.push_back(info.rho);
      log.H1.push_back(inn.H1);
      if (k + 1 < K) e = predict_joint(sys, inn.est, delta[k], cfg.r, &info, &res.diag);
    }
    double acc = 0;
    for (std::size_t k = 0; k + 1 < K; ++k) {
      const Vec rk = log.mu[k + 1] - sys.A_point(log.mu[k]) * log.mu[k];
      log.residual.push_back(rk);
      acc += (rk - delta[k]).squaredNorm();
    }
    log.residual_norm = K > 1 ? std::sqrt(acc / static_cast<double>(K - 1)) : 0.0;
    if (cfg.learn_delta) {
      const double w = cfg.delta_rule == DeltaRule::Ema ? cfg.ema : 1.0 / static_cast<double>(tr + 1);
      for (std::size_t k = 0; k + 1 < K; ++k) delta[k] += w * (log.residual[k] - delta[k]);
    }
    res.delta.push_back(delta);
    res.trials.push_back(std::move(log));
  }
  return res;
}

}  // namespace setctl::ellipsoid
