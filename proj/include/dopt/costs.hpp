#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dopt/rng.hpp"
#include "dopt/types.hpp"

namespace dopt {

// Per-agent cost oracle: value, (sub)gradient, prox, curvature constants.
// Implementations are immutable after construction and safe to evaluate
// concurrently.
class AgentCost {
 public:
  virtual ~AgentCost() = default;

  virtual int dim() const = 0;
  virtual bool smooth() const = 0;

  virtual double value(const Vector& x) const = 0;

  // Always defined; for smooth costs it equals the gradient, at kinks it
  // returns the minimal-norm selection (0 for the flat component).
  virtual Vector subgradient(const Vector& x) const = 0;

  virtual Vector gradient(const Vector& x) const {
    require(smooth(), "gradient: cost is not differentiable");
    return subgradient(x);
  }

  // argmin_u f(u) + ||u - v||^2 / (2 gamma)
  virtual Vector prox(const Vector& v, double gamma) const = 0;

  // Strong-convexity modulus (0 if merely convex).
  virtual double strong_convexity() const = 0;

  // Gradient Lipschitz constant; +inf for non-smooth costs.
  virtual double gradient_lipschitz() const = 0;

  // A minimizer of the bare cost (used by the local-anchor start policy).
  virtual Vector local_minimizer() const = 0;
};

// f(theta) = ||z - M theta||^2 + ridge * ||theta||^2   (no 1/2 factors;
// gradients carry a factor 2).
class QuadraticCost final : public AgentCost {
 public:
  QuadraticCost(Matrix M, Vector z, double ridge = 0.0)
      : M_(std::move(M)), z_(std::move(z)), ridge_(ridge) {
    require(M_.rows() == z_.size(), "QuadraticCost: M/z shape mismatch");
    require(ridge_ >= 0.0, "QuadraticCost: ridge must be >= 0");
    MtM_ = M_.transpose() * M_;
    Mtz_ = M_.transpose() * z_;
    Eigen::SelfAdjointEigenSolver<Matrix> es(MtM_);
    alpha_ = 2.0 * (std::max(0.0, es.eigenvalues().minCoeff()) + ridge_);
    lip_ = 2.0 * (es.eigenvalues().maxCoeff() + ridge_);
  }

  int dim() const override { return static_cast<int>(M_.cols()); }
  bool smooth() const override { return true; }

  double value(const Vector& x) const override {
    return (z_ - M_ * x).squaredNorm() + ridge_ * x.squaredNorm();
  }

  Vector subgradient(const Vector& x) const override {
    return 2.0 * (MtM_ * x - Mtz_) + 2.0 * ridge_ * x;
  }

  // Exact prox: solve (I + 2 gamma (M^T M + ridge I)) u = v + 2 gamma M^T z.
  Vector prox(const Vector& v, double gamma) const override {
    require(gamma > 0.0, "prox: gamma must be positive");
    const int d = dim();
    Matrix A = Matrix::Identity(d, d) + 2.0 * gamma * MtM_;
    A.diagonal().array() += 2.0 * gamma * ridge_;
    return A.ldlt().solve(v + 2.0 * gamma * Mtz_);
  }

  double strong_convexity() const override { return alpha_; }
  double gradient_lipschitz() const override { return lip_; }

  // Minimum-norm least-squares solution of (M^T M + ridge I) u = M^T z.
  Vector local_minimizer() const override {
    Matrix A = MtM_;
    A.diagonal().array() += ridge_;
    return A.completeOrthogonalDecomposition().solve(Mtz_);
  }

  const Matrix& measurement() const { return M_; }
  const Vector& observation() const { return z_; }
  double ridge() const { return ridge_; }

 private:
  Matrix M_;
  Vector z_;
  double ridge_;
  Matrix MtM_;
  Vector Mtz_;
  double alpha_ = 0.0;
  double lip_ = 0.0;
};

// f(x) = weight * ||x - anchor||_1. Non-smooth; prox is componentwise
// soft-thresholding toward the anchor.
class AbsoluteCost final : public AgentCost {
 public:
  AbsoluteCost(Vector anchor, double weight)
      : anchor_(std::move(anchor)), weight_(weight) {
    require(weight_ > 0.0, "AbsoluteCost: weight must be positive");
  }

  int dim() const override { return static_cast<int>(anchor_.size()); }
  bool smooth() const override { return false; }

  double value(const Vector& x) const override {
    return weight_ * (x - anchor_).cwiseAbs().sum();
  }

  Vector subgradient(const Vector& x) const override {
    Vector s(x.size());
    for (int c = 0; c < x.size(); ++c) {
      const double t = x[c] - anchor_[c];
      s[c] = t > 0.0 ? weight_ : (t < 0.0 ? -weight_ : 0.0);
    }
    return s;
  }

  Vector prox(const Vector& v, double gamma) const override {
    require(gamma > 0.0, "prox: gamma must be positive");
    const double tau = gamma * weight_;
    Vector out(v.size());
    for (int c = 0; c < v.size(); ++c) {
      const double t = v[c] - anchor_[c];
      out[c] = anchor_[c] + (t > tau ? t - tau : (t < -tau ? t + tau : 0.0));
    }
    return out;
  }

  double strong_convexity() const override { return 0.0; }
  double gradient_lipschitz() const override {
    return std::numeric_limits<double>::infinity();
  }

  Vector local_minimizer() const override { return anchor_; }

  const Vector& anchor() const { return anchor_; }
  double weight() const { return weight_; }

 private:
  Vector anchor_;
  double weight_;
};

// Collection of per-agent oracles plus row-wise stacked evaluations.
class CostModel {
 public:
  CostModel() = default;
  explicit CostModel(std::vector<std::shared_ptr<const AgentCost>> agents)
      : agents_(std::move(agents)) {
    require(!agents_.empty(), "CostModel: need at least one agent");
    d_ = agents_.front()->dim();
    for (const auto& a : agents_)
      require(a->dim() == d_, "CostModel: inconsistent dimensions");
  }

  int agent_count() const { return static_cast<int>(agents_.size()); }
  int dim() const { return d_; }
  const AgentCost& agent(int i) const { return *agents_[i]; }

  bool all_smooth() const {
    for (const auto& a : agents_)
      if (!a->smooth()) return false;
    return true;
  }

  double total_value(const Matrix& x) const {
    check_shape(x);
    double s = 0.0;
    for (int i = 0; i < agent_count(); ++i)
      s += agents_[i]->value(x.row(i).transpose());
    return s;
  }

  Matrix gradients(const Matrix& x) const {
    check_shape(x);
    Matrix g(x.rows(), x.cols());
    for (int i = 0; i < agent_count(); ++i)
      g.row(i) = agents_[i]->gradient(x.row(i).transpose()).transpose();
    return g;
  }

  Matrix subgradients(const Matrix& x) const {
    check_shape(x);
    Matrix g(x.rows(), x.cols());
    for (int i = 0; i < agent_count(); ++i)
      g.row(i) = agents_[i]->subgradient(x.row(i).transpose()).transpose();
    return g;
  }

  // Row i of the result is prox_{gamma f_i}(v_i).
  Matrix prox_rows(const Matrix& v, double gamma) const {
    check_shape(v);
    Matrix out(v.rows(), v.cols());
    for (int i = 0; i < agent_count(); ++i)
      out.row(i) = agents_[i]->prox(v.row(i).transpose(), gamma).transpose();
    return out;
  }

  Matrix local_minimizers() const {
    Matrix out(agent_count(), d_);
    for (int i = 0; i < agent_count(); ++i)
      out.row(i) = agents_[i]->local_minimizer().transpose();
    return out;
  }

 private:
  void check_shape(const Matrix& x) const {
    require(x.rows() == agent_count() && x.cols() == d_,
            "CostModel: stacked variable must be m x d");
  }

  std::vector<std::shared_ptr<const AgentCost>> agents_;
  int d_ = 0;
};

// Generalized Bregman distance D_f^q(x, x') = f(x) - f(x') - <q, x - x'>
// for a caller-supplied subgradient q at x'.
inline double bregman_distance(const AgentCost& f, const Vector& x,
                               const Vector& xp, const Vector& q) {
  return f.value(x) - f.value(xp) - q.dot(x - xp);
}

// alpha = min_i alpha_i, lip = max_i lip_i (inf propagates).
inline std::pair<double, double> aggregate_constants(const CostModel& c) {
  double alpha = std::numeric_limits<double>::infinity();
  double lip = 0.0;
  for (int i = 0; i < c.agent_count(); ++i) {
    alpha = std::min(alpha, c.agent(i).strong_convexity());
    lip = std::max(lip, c.agent(i).gradient_lipschitz());
  }
  return {alpha, lip};
}

// ---------------------------------------------------------------------------
// Sensor fusion: agent i measures z_i = M_i theta_true + noise, with M_i
// i.i.d. uniform on [0,1]^{s x d} and a global ridge split evenly so that
// sum_i f_i reproduces  sum_i ||z_i - M_i theta||^2 + lam_reg ||theta||^2.

struct SensorFusionProblem {
  CostModel costs;
  Vector theta_true;
  double lam_reg = 0.0;
  double noise_sigma = 0.0;
  int s = 1;
  std::uint64_t seed = 0;
};

inline SensorFusionProblem generate_sensor_fusion(int m, int d, int s,
                                                  double lam_reg, double sigma,
                                                  std::uint64_t seed) {
  require(m >= 1 && d >= 1 && s >= 1, "generate_sensor_fusion: m,d,s >= 1");
  require(lam_reg >= 0.0 && sigma >= 0.0,
          "generate_sensor_fusion: lam_reg, sigma >= 0");
  RngStream rng = RngStream::labeled(seed, "sensor-fusion");
  Vector theta(d);
  for (int c = 0; c < d; ++c) theta[c] = rng.uniform();
  const double ridge = lam_reg / m;
  std::vector<std::shared_ptr<const AgentCost>> agents;
  agents.reserve(m);
  for (int i = 0; i < m; ++i) {
    Matrix M(s, d);
    for (int r = 0; r < s; ++r)
      for (int c = 0; c < d; ++c) M(r, c) = rng.uniform();
    Vector z = M * theta;
    for (int r = 0; r < s; ++r) z[r] += sigma * rng.normal();
    agents.push_back(std::make_shared<QuadraticCost>(std::move(M), std::move(z),
                                                     ridge));
  }
  SensorFusionProblem prob;
  prob.costs = CostModel(std::move(agents));
  prob.theta_true = std::move(theta);
  prob.lam_reg = lam_reg;
  prob.noise_sigma = sigma;
  prob.s = s;
  prob.seed = seed;
  return prob;
}

// ---------------------------------------------------------------------------
// Bit-exact problem serialization (doubles printed with 17 significant
// digits, which round-trips IEEE-754 binary64).

namespace detail {
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace detail

inline void save_sensor_fusion(const SensorFusionProblem& p,
                               const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "save_sensor_fusion: cannot open " + path);
  const int m = p.costs.agent_count();
  const int d = p.costs.dim();
  out << "sensor_fusion m=" << m << " d=" << d << " s=" << p.s << "\n";
  out << "lam_reg " << detail::fmt17(p.lam_reg) << "\n";
  out << "sigma " << detail::fmt17(p.noise_sigma) << "\n";
  out << "seed " << p.seed << "\n";
  out << "theta_true";
  for (int c = 0; c < d; ++c) out << " " << detail::fmt17(p.theta_true[c]);
  out << "\n";
  for (int i = 0; i < m; ++i) {
    const auto* q = dynamic_cast<const QuadraticCost*>(&p.costs.agent(i));
    require(q != nullptr, "save_sensor_fusion: non-quadratic agent");
    out << "agent " << i << "\n";
    for (int r = 0; r < p.s; ++r) {
      out << "M";
      for (int c = 0; c < d; ++c) out << " " << detail::fmt17(q->measurement()(r, c));
      out << "\n";
    }
    out << "z";
    for (int r = 0; r < p.s; ++r) out << " " << detail::fmt17(q->observation()[r]);
    out << "\n";
  }
}

inline SensorFusionProblem load_sensor_fusion(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "load_sensor_fusion: cannot open " + path);
  std::string tag;
  int m = 0, d = 0, s = 0;
  {
    std::string header;
    require(static_cast<bool>(std::getline(in, header)),
            "load_sensor_fusion: empty file");
    std::istringstream hs(header);
    hs >> tag;
    require(tag == "sensor_fusion", "load_sensor_fusion: bad header");
    std::string kv;
    while (hs >> kv) {
      if (kv.rfind("m=", 0) == 0) m = std::stoi(kv.substr(2));
      if (kv.rfind("d=", 0) == 0) d = std::stoi(kv.substr(2));
      if (kv.rfind("s=", 0) == 0) s = std::stoi(kv.substr(2));
    }
  }
  require(m >= 1 && d >= 1 && s >= 1, "load_sensor_fusion: bad dimensions");
  SensorFusionProblem p;
  p.s = s;
  in >> tag >> p.lam_reg;
  require(tag == "lam_reg", "load_sensor_fusion: expected lam_reg");
  in >> tag >> p.noise_sigma;
  require(tag == "sigma", "load_sensor_fusion: expected sigma");
  in >> tag >> p.seed;
  require(tag == "seed", "load_sensor_fusion: expected seed");
  in >> tag;
  require(tag == "theta_true", "load_sensor_fusion: expected theta_true");
  p.theta_true.resize(d);
  for (int c = 0; c < d; ++c) in >> p.theta_true[c];
  std::vector<std::shared_ptr<const AgentCost>> agents;
  const double ridge = p.lam_reg / m;
  for (int i = 0; i < m; ++i) {
    int idx = -1;
    in >> tag >> idx;
    require(tag == "agent" && idx == i, "load_sensor_fusion: bad agent block");
    Matrix M(s, d);
    for (int r = 0; r < s; ++r) {
      in >> tag;
      require(tag == "M", "load_sensor_fusion: expected M row");
      for (int c = 0; c < d; ++c) in >> M(r, c);
    }
    in >> tag;
    require(tag == "z", "load_sensor_fusion: expected z row");
    Vector z(s);
    for (int r = 0; r < s; ++r) in >> z[r];
    agents.push_back(
        std::make_shared<QuadraticCost>(std::move(M), std::move(z), ridge));
  }
  require(!in.fail(), "load_sensor_fusion: truncated file");
  p.costs = CostModel(std::move(agents));
  return p;
}

}  // namespace dopt
