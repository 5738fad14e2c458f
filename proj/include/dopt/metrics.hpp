#pragma once

#include <cmath>
#include <vector>

#include "dopt/costs.hpp"
#include "dopt/oracle.hpp"
#include "dopt/types.hpp"

namespace dopt {

// Sum over columns of v_c^T G v_c (Frobenius-style G-seminorm squared).
inline double g_norm_sq(const Matrix& v, const Matrix& G) {
  require(G.rows() == G.cols() && G.rows() == v.rows(),
          "g_norm_sq: dimension mismatch");
  return (v.transpose() * (G * v)).trace();
}

inline Matrix consensus_residual(const Matrix& x) {
  return x.rowwise() - x.colwise().mean();
}

// u = ||x_tilde_next||^2_{I-W} + ||x_next - x_prev||^2_W with
// x_tilde = (I - (1/m) 1 1^T) x.
inline double fixed_point_residual(const Matrix& x_prev, const Matrix& x_next,
                                   const Matrix& w) {
  require(x_prev.rows() == x_next.rows() && x_prev.cols() == x_next.cols(),
          "fixed_point_residual: shape mismatch");
  const Matrix I = Matrix::Identity(w.rows(), w.cols());
  const Matrix xt = consensus_residual(x_next);
  return g_norm_sq(xt, I - w) + g_norm_sq(x_next - x_prev, w);
}

struct KktResiduals {
  double primal = 0.0;      // ||(I - W) x||_F
  double dual = 0.0;        // ||column sums of y||
  double lagrangian = 0.0;  // ||grad f(x) - y||_F, or prox surrogate
};

// For non-smooth models the Lagrangian-optimality residual is the prox
// surrogate ||x - prox_f(x + y)||_F (zero exactly when y in subdiff f(x)).
inline KktResiduals kkt_residuals(const Matrix& x, const Matrix& y,
                                  const CostModel& costs, const Matrix& w) {
  KktResiduals r;
  const Matrix I = Matrix::Identity(w.rows(), w.cols());
  r.primal = ((I - w) * x).norm();
  r.dual = y.colwise().sum().norm();
  if (costs.all_smooth())
    r.lagrangian = (costs.gradients(x) - y).norm();
  else
    r.lagrangian = (x - costs.prox_rows(x + y, 1.0)).norm();
  return r;
}

// Augmented Lagrangian  f(x) - <y, x> + (1/2 gamma) ||x||^2_{I-W}.
inline double lagrangian_value(const Matrix& x, const Matrix& y,
                               const CostModel& costs, const Matrix& w,
                               double gamma) {
  require(gamma > 0.0, "lagrangian_value: gamma must be positive");
  const Matrix I = Matrix::Identity(w.rows(), w.cols());
  return costs.total_value(x) - (y.array() * x.array()).sum() +
         g_norm_sq(x, I - w) / (2.0 * gamma);
}

// V_0 = gamma^2 ||y0 - y*||^2_{B^{-1}} + ||x0 - x*||^2_W with
// B = I - (W - (1/m) 1 1^T), evaluated by solving B u = v column-wise.
inline double lyapunov_v0(const Matrix& x0, const Matrix& y0,
                          const SaddlePoint& truth, const Matrix& w,
                          double gamma) {
  const int m = static_cast<int>(w.rows());
  const Matrix B = Matrix::Identity(m, m) - w + Matrix::Constant(m, m, 1.0 / m);
  Eigen::LDLT<Matrix> solver(B);
  if (solver.info() != Eigen::Success || !solver.isPositive())
    throw NumericalError("lyapunov_v0: I - (W - avg) is not positive definite");
  const Matrix dy = y0 - truth.y_star;
  const Matrix u = solver.solve(dy);
  if (!u.allFinite()) throw NumericalError("lyapunov_v0: singular system");
  const double dual_term = (dy.transpose() * u).trace();
  return gamma * gamma * dual_term + g_norm_sq(x0 - truth.x_star, w);
}

// Running averages x_hat_k = (1/k) sum_{t<k} x_t for k = 1..n, computed
// incrementally. Output index k-1 holds x_hat_k.
inline std::vector<Matrix> running_average(const std::vector<Matrix>& xs) {
  require(!xs.empty(), "running_average: empty sequence");
  std::vector<Matrix> out;
  out.reserve(xs.size());
  Matrix acc = Matrix::Zero(xs.front().rows(), xs.front().cols());
  for (std::size_t k = 0; k < xs.size(); ++k) {
    acc += xs[k];
    out.push_back(acc / static_cast<double>(k + 1));
  }
  return out;
}

struct RateEstimate {
  double slope = 0.0;
  double intercept = 0.0;
  int k_lo = 0;
  int k_hi = 0;
};

// Least-squares slope of log(residual[k]) against log(k) over k in
// [k_lo, k_hi]; only strictly positive residuals participate.
inline RateEstimate rate_fit(const std::vector<double>& residuals, int k_lo,
                             int k_hi) {
  require(k_lo >= 1 && k_hi >= k_lo, "rate_fit: bad window");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  const int hi = std::min<int>(k_hi, static_cast<int>(residuals.size()) - 1);
  for (int k = k_lo; k <= hi; ++k) {
    if (!(residuals[k] > 0.0)) continue;
    const double lx = std::log(static_cast<double>(k));
    const double ly = std::log(residuals[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++n;
  }
  if (n < 2) throw NumericalError("rate_fit: window empty after filtering");
  RateEstimate est;
  est.k_lo = k_lo;
  est.k_hi = hi;
  const double denom = n * sxx - sx * sx;
  est.slope = (n * sxy - sx * sy) / denom;
  est.intercept = (sy - est.slope * sx) / n;
  return est;
}

// Per-iteration convergence diagnostics. rel_fpr and obj_err require ground
// truth and are NaN when no saddle point was supplied.
struct IterationRecord {
  int k = 0;
  double u = 0.0;
  double rel_fpr = 0.0;
  double obj_err = 0.0;
  double consensus_err = 0.0;
  double dual_sum = 0.0;
  double kkt_primal = 0.0;
  double kkt_dual = 0.0;
  double kkt_lagr = 0.0;
};

inline IterationRecord make_record(int k, const Matrix& x_prev, const Matrix& x,
                                   const Matrix& y, const CostModel& costs,
                                   const Matrix& w, const SaddlePoint* truth,
                                   double fpr_denom) {
  IterationRecord rec;
  rec.k = k;
  rec.u = fixed_point_residual(x_prev, x, w);
  rec.consensus_err = consensus_residual(x).squaredNorm();
  rec.dual_sum = y.colwise().sum().cwiseAbs().maxCoeff();
  const KktResiduals kkt = kkt_residuals(x, y, costs, w);
  rec.kkt_primal = kkt.primal;
  rec.kkt_dual = kkt.dual;
  rec.kkt_lagr = kkt.lagrangian;
  if (truth != nullptr && fpr_denom > 0.0) {
    rec.rel_fpr = (x - truth->x_star).squaredNorm() / fpr_denom;
    rec.obj_err = costs.total_value(x) - truth->primal_value;
  } else {
    rec.rel_fpr = std::numeric_limits<double>::quiet_NaN();
    rec.obj_err = std::numeric_limits<double>::quiet_NaN();
  }
  return rec;
}

// Weighted ergodic residual of the running averages:
//   (gamma alpha / 2 - lambda_max - eta) ||xhat_{k+1} - xhat_k||^2
//   + (1 - mu) / (1 - nu) ||xhat_k - xhatbar_k||^2_{I - Wbar},
// with eta = (1 - mu)(1 - lambda_min) / mu. Entry j corresponds to k = j+1.
// A negative first weight is reported as-is (the caller should flag it).
struct ErgodicResidual {
  std::vector<double> series;
  double diff_weight = 0.0;  // gamma*alpha/2 - lambda_max - eta
};

inline ErgodicResidual ergodic_residual_series(const std::vector<Matrix>& xs,
                                               const Matrix& w_bar,
                                               double gamma, double alpha,
                                               double lambda_min,
                                               double lambda_max, double mu,
                                               double nu) {
  require(mu > 0.0 && mu < 1.0 && nu > 0.0 && nu < 1.0,
          "ergodic_residual_series: mu, nu in (0,1)");
  const auto xhat = running_average(xs);
  const double eta = (1.0 - mu) * (1.0 - lambda_min) / mu;
  ErgodicResidual out;
  out.diff_weight = gamma * alpha / 2.0 - lambda_max - eta;
  const Matrix I = Matrix::Identity(w_bar.rows(), w_bar.cols());
  const Matrix G = I - w_bar;
  const double cons_weight = (1.0 - mu) / (1.0 - nu);
  for (std::size_t k = 1; k + 1 < xhat.size(); ++k) {
    const double diff = (xhat[k + 1] - xhat[k]).squaredNorm();
    const double cons = g_norm_sq(consensus_residual(xhat[k]), G);
    out.series.push_back(out.diff_weight * diff + cons_weight * cons);
  }
  return out;
}

}  // namespace dopt
