#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dopt/costs.hpp"
#include "dopt/metrics.hpp"
#include "dopt/oracle.hpp"
#include "dopt/topology.hpp"
#include "dopt/types.hpp"

namespace dopt {

enum class Algorithm {
  DFBBS,          // proximal primal update + dual descent on (I-W)x
  IDFBBS,         // gradient (inexact) primal update, same dual
  DSM,            // mixing + (sub)gradient step, no dual
  EXTRA,          // corrected-DSM running-sum form, equals IDFBBS x-trace
  PEXTRA,         // proximal running-sum form, equals DFBBS x-trace
  ChambollePock,  // primal-dual proximal point with extrapolated dual
  DADMM,          // decentralized ADMM on the unweighted graph
  DLM,            // linearized (inexact) decentralized ADMM
};

inline const char* algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::DFBBS: return "dfbbs";
    case Algorithm::IDFBBS: return "idfbbs";
    case Algorithm::DSM: return "dsm";
    case Algorithm::EXTRA: return "extra";
    case Algorithm::PEXTRA: return "pextra";
    case Algorithm::ChambollePock: return "chambolle-pock";
    case Algorithm::DADMM: return "dadmm";
    case Algorithm::DLM: return "dlm";
  }
  return "?";
}

inline std::optional<Algorithm> parse_algorithm(const std::string& s) {
  for (Algorithm a :
       {Algorithm::DFBBS, Algorithm::IDFBBS, Algorithm::DSM, Algorithm::EXTRA,
        Algorithm::PEXTRA, Algorithm::ChambollePock, Algorithm::DADMM,
        Algorithm::DLM})
    if (s == algorithm_name(a)) return a;
  return std::nullopt;
}

// Stepsize schedule for DSM: gamma_k for 1-based iteration number k+1.
enum class StepSchedule { Constant, InvSqrtK, InvK };

inline double schedule_value(StepSchedule s, double coeff, int k) {
  switch (s) {
    case StepSchedule::Constant: return coeff;
    case StepSchedule::InvSqrtK: return coeff / std::sqrt(static_cast<double>(k + 1));
    case StepSchedule::InvK: return coeff / static_cast<double>(k + 1);
  }
  return coeff;
}

struct SolverConfig {
  double gamma = 1.0;                 // stepsize (schedule coefficient for DSM)
  StepSchedule schedule = StepSchedule::Constant;  // DSM only
  int max_iter = 1000;
  double tol = 0.0;                   // stop when u_k <= tol; 0 disables
  enum class Start { Zeros, LocalAnchor, Explicit };
  Start x0_policy = Start::Zeros;
  Matrix x0;                          // used when x0_policy == Explicit
  double admm_penalty = 0.05;         // c for DADMM / DLM
  double dlm_rho = 1.0;               // rho for DLM
  bool record_iterates = true;        // keep the x history in the trace
};

// Stacked primal/dual iterates plus algorithm-private storage:
//   EXTRA / P-EXTRA : aux = running sum S_k of (I-W) x_j
//   Chambolle-Pock  : aux = previous dual y'_{k-1}
struct MultiAgentState {
  Matrix x;
  Matrix y;
  Matrix aux;
  long k = 0;
};

struct Trace {
  std::vector<IterationRecord> records;
  std::vector<Matrix> x_history;  // filled iff config.record_iterates
  MultiAgentState final_state;
  double wall_seconds = 0.0;
};

// ---------------------------------------------------------------------------
// One-step update rules. All of them are pure: they read the previous state
// and produce the next one, so per-agent evaluations inside can run in any
// order without races.

// x+ = prox_{gamma f}(W x + gamma y);  y+ = y - (1/gamma)(I - W) x+.
// Started from zero duals the column sums of y stay zero for every k.
inline MultiAgentState dfbbs_step(const MultiAgentState& st, const Matrix& w,
                                  const CostModel& costs, double gamma) {
  require(gamma > 0.0, "dfbbs_step: gamma must be positive");
  MultiAgentState out;
  out.x = costs.prox_rows(w * st.x + gamma * st.y, gamma);
  out.y = st.y - (out.x - w * out.x) / gamma;
  out.aux = st.aux;
  out.k = st.k + 1;
  return out;
}

// x+ = W x - gamma (grad f(x) - y);  y+ = y - (1/gamma)(I - W) x+.
inline MultiAgentState idfbbs_step(const MultiAgentState& st, const Matrix& w,
                                   const CostModel& costs, double gamma) {
  require(gamma > 0.0, "idfbbs_step: gamma must be positive");
  require(costs.all_smooth(),
          "idfbbs_step: all costs must have Lipschitz gradients");
  MultiAgentState out;
  out.x = w * st.x - gamma * (costs.gradients(st.x) - st.y);
  out.y = st.y - (out.x - w * out.x) / gamma;
  out.aux = st.aux;
  out.k = st.k + 1;
  return out;
}

// x+ = W x - gamma_k s, s row i in subdiff f_i(x_i). The dual is unused.
inline MultiAgentState dsm_step(const MultiAgentState& st, const Matrix& w,
                                const CostModel& costs, double gamma_k) {
  MultiAgentState out;
  out.x = w * st.x - gamma_k * costs.subgradients(st.x);
  out.y = st.y;
  out.aux = st.aux;
  out.k = st.k + 1;
  return out;
}

// Primal-dual proximal point with extrapolation parameter 1 and
// tau = 1/delta = gamma; st.aux holds the previous dual y'_{k-1}.
// Along a trajectory gamma (y'_k - y'_{k-1}) = -(I - W) x_k, so the primal
// argument equals W x_k + gamma y'_k and the x-trace matches dfbbs_step.
inline MultiAgentState cp_step(const MultiAgentState& st, const Matrix& w,
                               const CostModel& costs, double gamma) {
  require(gamma > 0.0, "cp_step: gamma must be positive");
  MultiAgentState out;
  out.x = costs.prox_rows(st.x + gamma * (2.0 * st.y - st.aux), gamma);
  out.y = st.y - (out.x - w * out.x) / gamma;
  out.aux = st.y;
  out.k = st.k + 1;
  return out;
}

namespace detail {
inline void check_admm_graph(const Graph& g) {
  const auto deg = g.degrees();
  for (int i = 0; i < g.m; ++i)
    require(deg[i] >= 1, "ADMM-family step: agent " + std::to_string(i) +
                             " has degree 0; the algorithm cannot work on a "
                             "disconnected agent");
}

inline Matrix adjacency(const Graph& g) {
  Matrix a = Matrix::Zero(g.m, g.m);
  for (auto [i, j] : g.edges) {
    a(i, j) = 1.0;
    a(j, i) = 1.0;
  }
  return a;
}
}  // namespace detail

// x+ = (2cD + subdiff f)^{-1} (c (D + A) x - y);  y+ = y + c (D - A) x+.
// The resolvent is evaluated per agent as a scaled prox with
// gamma_i = 1 / (2 c d_i), which is exact for prox-friendly costs.
inline MultiAgentState dadmm_step(const MultiAgentState& st, const Graph& g,
                                  const CostModel& costs, double penalty) {
  require(penalty > 0.0, "dadmm_step: penalty c must be positive");
  detail::check_admm_graph(g);
  const Matrix A = detail::adjacency(g);
  const auto deg = g.degrees();
  Matrix rhs = st.x;  // c (D + A) x - y, assembled row-wise
  for (int i = 0; i < g.m; ++i)
    rhs.row(i) = penalty * (deg[i] * st.x.row(i) + (A.row(i) * st.x)) -
                 st.y.row(i);
  MultiAgentState out;
  out.x.resize(st.x.rows(), st.x.cols());
  for (int i = 0; i < g.m; ++i) {
    const double gi = 1.0 / (2.0 * penalty * deg[i]);
    out.x.row(i) =
        costs.agent(i)
            .prox(gi * rhs.row(i).transpose(), gi)
            .transpose();
  }
  Matrix lap_x = out.x;  // (D - A) x+
  for (int i = 0; i < g.m; ++i)
    lap_x.row(i) = deg[i] * out.x.row(i) - (A.row(i) * out.x);
  out.y = st.y + penalty * lap_x;
  out.aux = st.aux;
  out.k = st.k + 1;
  return out;
}

// x+ = x - Dt^{-1} (grad f(x) + c (D - A) x + y), Dt = 2cD + rho I;
// y+ = y + c (D - A) x+.
inline MultiAgentState dlm_step(const MultiAgentState& st, const Graph& g,
                                const CostModel& costs, double penalty,
                                double rho) {
  require(penalty > 0.0 && rho > 0.0, "dlm_step: need c > 0 and rho > 0");
  require(costs.all_smooth(), "dlm_step: all costs must be smooth");
  detail::check_admm_graph(g);
  const Matrix A = detail::adjacency(g);
  const auto deg = g.degrees();
  Matrix lap_x = st.x;
  for (int i = 0; i < g.m; ++i)
    lap_x.row(i) = deg[i] * st.x.row(i) - (A.row(i) * st.x);
  const Matrix resid = costs.gradients(st.x) + penalty * lap_x + st.y;
  MultiAgentState out;
  out.x = st.x;
  for (int i = 0; i < g.m; ++i)
    out.x.row(i) -= resid.row(i) / (2.0 * penalty * deg[i] + rho);
  Matrix lap_x1 = out.x;
  for (int i = 0; i < g.m; ++i)
    lap_x1.row(i) = deg[i] * out.x.row(i) - (A.row(i) * out.x);
  out.y = st.y + penalty * lap_x1;
  out.aux = st.aux;
  out.k = st.k + 1;
  return out;
}

// ---------------------------------------------------------------------------
// Network description for the synchronous runner.

struct Network {
  Graph graph;
  Matrix weights;                 // base mixing matrix (passes Assumption 1)
  bool stochastic = false;        // sample W_k per iteration when true
  double link_up_probability = 1.0;
  std::uint64_t seed = 0;         // Bernoulli stream seed
};

inline Network fixed_network(Graph g, Matrix w) {
  Network n;
  n.graph = std::move(g);
  n.weights = std::move(w);
  return n;
}

inline Network stochastic_network(Graph g, Matrix w, double p,
                                  std::uint64_t seed) {
  Network n;
  n.graph = std::move(g);
  n.weights = std::move(w);
  n.stochastic = true;
  n.link_up_probability = p;
  n.seed = seed;
  return n;
}

// Admissible stepsize range. `lower` applies to stochastic D-FBBS
// (strong convexity required), `upper` to the gradient-based updates.
struct StepsizeRange {
  double lower = 0.0;
  double upper = std::numeric_limits<double>::infinity();
};

inline StepsizeRange stepsize_bound(Algorithm alg, bool stochastic,
                                    const SpectralReport& report, double alpha,
                                    double lip, double mu = 0.5) {
  StepsizeRange r;
  if (stochastic) {
    require(alg == Algorithm::DFBBS,
            "stepsize_bound: stochastic bound applies to dfbbs only");
    require(mu > 0.0 && mu < 1.0, "stepsize_bound: mu in (0,1)");
    if (!(alpha > 0.0))
      throw ConfigError(
          "stepsize_bound: strong convexity alpha > 0 required for the "
          "stochastic bound");
    // Worst case over sampled matrices: dropping links only adds diagonal
    // mass, so lambda_min(W_k) >= lambda_min(base) and lambda_max(W_k) = 1.
    const double lam_min = report.lambda_min;
    const double lam_max = 1.0;
    r.lower = 2.0 * (1.0 - mu) * (1.0 - lam_min) / (alpha * mu) +
              2.0 * lam_max / alpha;
    return r;
  }
  if (alg == Algorithm::IDFBBS || alg == Algorithm::EXTRA) {
    require(std::isfinite(lip) && lip > 0.0,
            "stepsize_bound: finite Lipschitz constant required");
    r.upper = report.lambda_min / lip;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Synchronous iteration engine.
//
// Each round: (optionally) sample W_k, apply one step, record metrics
// against the base matrix, stop on max_iter or u_k <= tol. Deterministic
// under fixed seeds; the Bernoulli stream consumes exactly |E| draws per
// round in canonical edge order.

inline Matrix initial_state(const SolverConfig& cfg, const CostModel& costs) {
  const int m = costs.agent_count();
  const int d = costs.dim();
  switch (cfg.x0_policy) {
    case SolverConfig::Start::Zeros: return Matrix::Zero(m, d);
    case SolverConfig::Start::LocalAnchor: return costs.local_minimizers();
    case SolverConfig::Start::Explicit:
      require(cfg.x0.rows() == m && cfg.x0.cols() == d,
              "run: explicit x0 must be m x d");
      return cfg.x0;
  }
  return Matrix::Zero(m, d);
}

inline void validate_run_config(Algorithm alg, const CostModel& costs,
                                const Network& net, const SolverConfig& cfg) {
  require(cfg.max_iter >= 0, "run: max_iter must be >= 0");
  require(net.weights.rows() == costs.agent_count(),
          "run: network size does not match agent count");
  if (alg == Algorithm::DADMM || alg == Algorithm::DLM) {
    require(cfg.admm_penalty > 0.0, "run: penalty c must be positive");
    if (alg == Algorithm::DLM)
      require(cfg.dlm_rho > 0.0, "run: rho must be positive");
    detail::check_admm_graph(net.graph);
  } else {
    require(cfg.gamma > 0.0, "run: gamma must be positive");
  }
  if (alg == Algorithm::IDFBBS || alg == Algorithm::EXTRA ||
      alg == Algorithm::DLM)
    require(costs.all_smooth(),
            std::string(algorithm_name(alg)) + " requires smooth costs");
  if (net.stochastic)
    require(alg == Algorithm::DFBBS || alg == Algorithm::DSM,
            "run: stochastic networks are supported for dfbbs and dsm only");
  if (net.stochastic)
    require(net.link_up_probability >= 0.0 && net.link_up_probability <= 1.0,
            "run: link probability in [0,1]");
}

inline Trace run(Algorithm alg, const CostModel& costs, const Network& net,
                 const SolverConfig& cfg, const SaddlePoint* truth = nullptr) {
  validate_run_config(alg, costs, net, cfg);
  const auto t0 = std::chrono::steady_clock::now();
  const Matrix& w = net.weights;
  const Matrix I = Matrix::Identity(w.rows(), w.cols());

  MultiAgentState st;
  st.x = initial_state(cfg, costs);
  st.y = Matrix::Zero(st.x.rows(), st.x.cols());
  st.k = 0;
  if (alg == Algorithm::EXTRA || alg == Algorithm::PEXTRA)
    st.aux = st.x - w * st.x;  // S_0 = (I - W) x_0
  else if (alg == Algorithm::ChambollePock)
    st.aux = st.y;             // y'_{-1} = y'_0
  else
    st.aux = Matrix::Zero(0, 0);

  double denom = 1.0;
  if (truth != nullptr) {
    const double d0 = (st.x - truth->x_star).squaredNorm();
    denom = d0 > 0.0 ? d0 : 1.0;
  }

  Trace trace;
  trace.records.reserve(cfg.max_iter + 1);
  auto metric_y = [&](const MultiAgentState& s) -> Matrix {
    if (alg == Algorithm::EXTRA || alg == Algorithm::PEXTRA)
      return -s.aux / cfg.gamma;  // implicit dual of the running-sum forms
    return s.y;
  };
  trace.records.push_back(
      make_record(0, st.x, st.x, metric_y(st), costs, w, truth, denom));
  if (cfg.record_iterates) trace.x_history.push_back(st.x);

  RngStream link_rng = RngStream::labeled(net.seed, "link-failures");
  const LinkFailureModel fm{net.link_up_probability};

  for (int k = 0; k < cfg.max_iter; ++k) {
    const Matrix wk = net.stochastic ? sample_network(w, fm, link_rng) : w;
    const Matrix x_prev = st.x;
    switch (alg) {
      case Algorithm::DFBBS:
        st = dfbbs_step(st, wk, costs, cfg.gamma);
        break;
      case Algorithm::IDFBBS:
        st = idfbbs_step(st, wk, costs, cfg.gamma);
        break;
      case Algorithm::DSM:
        st = dsm_step(st, wk, costs,
                      schedule_value(cfg.schedule, cfg.gamma, k));
        break;
      case Algorithm::EXTRA: {
        MultiAgentState nx;
        nx.x = wk * st.x - cfg.gamma * costs.gradients(st.x) - st.aux;
        nx.aux = st.aux + (nx.x - wk * nx.x);
        nx.y = st.y;
        nx.k = st.k + 1;
        st = std::move(nx);
        break;
      }
      case Algorithm::PEXTRA: {
        MultiAgentState nx;
        nx.x = costs.prox_rows(wk * st.x - st.aux, cfg.gamma);
        nx.aux = st.aux + (nx.x - wk * nx.x);
        nx.y = st.y;
        nx.k = st.k + 1;
        st = std::move(nx);
        break;
      }
      case Algorithm::ChambollePock:
        st = cp_step(st, wk, costs, cfg.gamma);
        break;
      case Algorithm::DADMM:
        st = dadmm_step(st, net.graph, costs, cfg.admm_penalty);
        break;
      case Algorithm::DLM:
        st = dlm_step(st, net.graph, costs, cfg.admm_penalty, cfg.dlm_rho);
        break;
    }
    trace.records.push_back(make_record(k + 1, x_prev, st.x, metric_y(st),
                                        costs, w, truth, denom));
    if (cfg.record_iterates) trace.x_history.push_back(st.x);
    if (cfg.tol > 0.0 && trace.records.back().u <= cfg.tol) break;
  }

  trace.final_state = std::move(st);
  trace.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return trace;
}

// Convenience wrappers for the running-sum and primal-dual forms.
inline Trace extra_run(const CostModel& costs, const Network& net,
                       const SolverConfig& cfg,
                       const SaddlePoint* truth = nullptr) {
  return run(Algorithm::EXTRA, costs, net, cfg, truth);
}

inline Trace pextra_run(const CostModel& costs, const Network& net,
                        const SolverConfig& cfg,
                        const SaddlePoint* truth = nullptr) {
  return run(Algorithm::PEXTRA, costs, net, cfg, truth);
}

inline Trace chambolle_pock_run(const CostModel& costs, const Network& net,
                                const SolverConfig& cfg,
                                const SaddlePoint* truth = nullptr) {
  return run(Algorithm::ChambollePock, costs, net, cfg, truth);
}

}  // namespace dopt
