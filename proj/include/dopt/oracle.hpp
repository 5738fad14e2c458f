#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "dopt/costs.hpp"
#include "dopt/rng.hpp"
#include "dopt/types.hpp"

namespace dopt {

// Centralized ground truth: consensual primal optimum and a dual selection
// satisfying the stacked optimality system. Every error metric in the
// library is measured against this.
struct SaddlePoint {
  Vector theta_star;       // d
  Matrix x_star;           // m x d, every row = theta_star
  Matrix y_star;           // m x d, zero column sums, row i in subdiff f_i
  double primal_value = 0.0;
  bool unique_minimizer = true;  // false when the normal equations are singular
};

namespace detail {

// Exact prox of t -> sum_i w_i |t - a_i| + (t - v)^2 / (2 gamma).
// Piecewise-linear subgradient in t; scan the sorted breakpoints.
inline double prox_weighted_abs_sum(const std::vector<double>& anchors,
                                    const std::vector<double>& weights,
                                    double v, double gamma) {
  const std::size_t n = anchors.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return anchors[a] < anchors[b];
  });
  double total = 0.0;
  for (double w : weights) total += w;
  // On the open interval left of the smallest anchor the slope sum is -total.
  double slope = -total;
  double prev = -std::numeric_limits<double>::infinity();
  for (std::size_t r = 0; r <= n; ++r) {
    const double next =
        (r < n) ? anchors[order[r]] : std::numeric_limits<double>::infinity();
    // Candidate stationary point on (prev, next): t = v - gamma * slope.
    const double t = v - gamma * slope;
    if (t > prev && t < next) return t;
    if (r < n) {
      // At the breakpoint a the one-sided derivatives of the objective are
      // slope_left + (a-v)/gamma and slope_right + (a-v)/gamma; a is optimal
      // when the first is <= 0 and the second is >= 0.
      const double slope_left = slope;
      const double slope_right = slope + 2.0 * weights[order[r]];
      const double g = (anchors[order[r]] - v) / gamma;
      if (g >= -slope_right && g <= -slope_left) return anchors[order[r]];
      slope = slope_right;
      prev = anchors[order[r]];
    }
  }
  return v - gamma * slope;  // unreachable for well-formed input
}

// Minimal-norm q with q_i in [lo_i, hi_i] and sum_i q_i = target: the
// water-filling solution q_i = clamp(level) found by bisection.
inline std::vector<double> clamp_to_sum(const std::vector<double>& lo,
                                        const std::vector<double>& hi,
                                        double target) {
  auto sum_at = [&](double level) {
    double s = 0.0;
    for (std::size_t i = 0; i < lo.size(); ++i)
      s += std::min(hi[i], std::max(lo[i], level));
    return s;
  };
  double a = -1.0, b = 1.0;
  for (double v : lo) a = std::min(a, v);
  for (double v : hi) b = std::max(b, v);
  a -= 1.0;
  b += 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (a + b);
    if (sum_at(mid) < target)
      a = mid;
    else
      b = mid;
  }
  const double level = 0.5 * (a + b);
  std::vector<double> q(lo.size());
  for (std::size_t i = 0; i < lo.size(); ++i)
    q[i] = std::min(hi[i], std::max(lo[i], level));
  return q;
}

}  // namespace detail

// Solve min_theta sum_i f_i(theta).
//
// All-quadratic models use the normal equations (minimum-norm solve when
// singular, flagged so metrics can fall back to objective error). Models
// with absolute-value members run an accelerated proximal-gradient loop:
// the smooth quadratic part is handled by gradients, the sum of weighted
// l1 translates by an exact componentwise prox.
inline SaddlePoint centralized_solve(const CostModel& costs) {
  const int m = costs.agent_count();
  const int d = costs.dim();
  SaddlePoint sp;

  std::vector<const QuadraticCost*> quads;
  std::vector<const AbsoluteCost*> absolutes;
  for (int i = 0; i < m; ++i) {
    if (const auto* q = dynamic_cast<const QuadraticCost*>(&costs.agent(i)))
      quads.push_back(q);
    else if (const auto* a = dynamic_cast<const AbsoluteCost*>(&costs.agent(i)))
      absolutes.push_back(a);
    else
      throw NumericalError("centralized_solve: unsupported cost family");
  }

  Vector theta = Vector::Zero(d);
  if (absolutes.empty()) {
    Matrix A = Matrix::Zero(d, d);
    Vector b = Vector::Zero(d);
    for (const auto* q : quads) {
      A += 2.0 * (q->measurement().transpose() * q->measurement());
      A.diagonal().array() += 2.0 * q->ridge();
      b += 2.0 * q->measurement().transpose() * q->observation();
    }
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(A);
    sp.unique_minimizer = (cod.rank() == d);
    theta = cod.solve(b);
  } else {
    // FISTA on g(theta) = sum of quadratics, h(theta) = sum of absolutes.
    double L = 0.0;
    for (const auto* q : quads) L += q->gradient_lipschitz();
    if (L <= 0.0) L = 1.0;
    auto grad_g = [&](const Vector& t) {
      Vector g = Vector::Zero(d);
      for (const auto* q : quads) g += q->subgradient(t);
      return g;
    };
    auto prox_h = [&](const Vector& v, double gamma) {
      Vector out(d);
      std::vector<double> anchors(absolutes.size()), weights(absolutes.size());
      for (int c = 0; c < d; ++c) {
        for (std::size_t i = 0; i < absolutes.size(); ++i) {
          anchors[i] = absolutes[i]->anchor()[c];
          weights[i] = absolutes[i]->weight();
        }
        out[c] = detail::prox_weighted_abs_sum(anchors, weights, v[c], gamma);
      }
      return out;
    };
    const double step = 1.0 / L;
    Vector x = Vector::Zero(d), z = x;
    double t_acc = 1.0;
    for (int it = 0; it < 200000; ++it) {
      const Vector x_next = prox_h(z - step * grad_g(z), step);
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_acc * t_acc));
      z = x_next + ((t_acc - 1.0) / t_next) * (x_next - x);
      const double delta = (x_next - x).lpNorm<Eigen::Infinity>();
      x = x_next;
      t_acc = t_next;
      if (delta <= 1e-15 * std::max(1.0, x.lpNorm<Eigen::Infinity>()) &&
          it > 10)
        break;
    }
    // Polish with plain proximal-gradient steps (monotone) to tighten the
    // fixed point below 1e-12.
    for (int it = 0; it < 5000; ++it) {
      const Vector x_next = prox_h(x - step * grad_g(x), step);
      const double delta = (x_next - x).lpNorm<Eigen::Infinity>();
      x = x_next;
      if (delta <= 1e-15 * std::max(1.0, x.lpNorm<Eigen::Infinity>())) break;
    }
    theta = x;
    sp.unique_minimizer = true;
  }

  if (!theta.allFinite())
    throw NumericalError("centralized_solve: objective appears unbounded");

  sp.theta_star = theta;
  sp.x_star = theta.transpose().replicate(m, 1);

  // Dual: smooth rows are forced to the gradient; kinked components of the
  // absolute costs are chosen as the minimal-norm selection that makes each
  // column sum exactly zero.
  sp.y_star = Matrix::Zero(m, d);
  for (int i = 0; i < m; ++i)
    if (costs.agent(i).smooth())
      sp.y_star.row(i) = costs.agent(i).gradient(theta).transpose();
  for (int c = 0; c < d; ++c) {
    std::vector<int> rows;          // agents with interval freedom at theta*
    std::vector<double> lo, hi;
    double fixed_sum = 0.0;
    for (int i = 0; i < m; ++i) {
      const auto* a = dynamic_cast<const AbsoluteCost*>(&costs.agent(i));
      if (a == nullptr) {
        fixed_sum += sp.y_star(i, c);
        continue;
      }
      const double t = theta[c] - a->anchor()[c];
      if (t > 0.0) {
        sp.y_star(i, c) = a->weight();
        fixed_sum += a->weight();
      } else if (t < 0.0) {
        sp.y_star(i, c) = -a->weight();
        fixed_sum -= a->weight();
      } else {
        rows.push_back(i);
        lo.push_back(-a->weight());
        hi.push_back(a->weight());
      }
    }
    if (!rows.empty()) {
      const auto q = detail::clamp_to_sum(lo, hi, -fixed_sum);
      for (std::size_t k = 0; k < rows.size(); ++k) sp.y_star(rows[k], c) = q[k];
    }
  }

  sp.primal_value = costs.total_value(sp.x_star);
  return sp;
}

// Max relative error between central finite differences and the gradient
// oracle over `samples` random points.
inline double finite_diff_check(const CostModel& costs, int samples, double h,
                                std::uint64_t seed) {
  require(costs.all_smooth(), "finite_diff_check: smooth costs required");
  RngStream rng = RngStream::labeled(seed, "finite-diff");
  const int d = costs.dim();
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    const int i = static_cast<int>(rng.next_u64() % costs.agent_count());
    const AgentCost& f = costs.agent(i);
    Vector x(d);
    for (int c = 0; c < d; ++c) x[c] = rng.uniform(-2.0, 2.0);
    const Vector g = f.gradient(x);
    Vector fd(d);
    for (int c = 0; c < d; ++c) {
      Vector xp = x, xm = x;
      xp[c] += h;
      xm[c] -= h;
      fd[c] = (f.value(xp) - f.value(xm)) / (2.0 * h);
    }
    const double denom = std::max(1.0, g.norm());
    worst = std::max(worst, (fd - g).norm() / denom);
  }
  return worst;
}

// Grid argmin of f(x) + (x - v)^2 / (2 gamma) over [lo, hi] with the given
// step (d = 1 only). Errors out if the argmin lands on the boundary, which
// means the bracket was too small.
inline double brute_force_prox(const AgentCost& f, double v, double gamma,
                               double lo, double hi, double step) {
  require(f.dim() == 1, "brute_force_prox: 1-D costs only");
  require(gamma > 0.0 && step > 0.0 && hi > lo, "brute_force_prox: bad grid");
  double best_x = lo, best_val = std::numeric_limits<double>::infinity();
  long best_k = 0;
  const long n = static_cast<long>(std::floor((hi - lo) / step));
  Vector xv(1);
  for (long k = 0; k <= n; ++k) {
    const double x = lo + step * static_cast<double>(k);
    xv[0] = x;
    const double val = f.value(xv) + (x - v) * (x - v) / (2.0 * gamma);
    if (val < best_val) {
      best_val = val;
      best_x = x;
      best_k = k;
    }
  }
  if (best_k == 0 || best_k == n)
    throw NumericalError("brute_force_prox: minimizer at grid boundary");
  return best_x;
}

}  // namespace dopt
