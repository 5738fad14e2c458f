#pragma once

// Distributed consensus optimization over fixed and stochastic networks:
// Bregman forward-backward splitting solvers, the algorithms they connect
// to (running-sum, primal-dual and decentralized-ADMM forms), a synchronous
// network simulator with Bernoulli link failures, and the metrics/oracle
// layer that certifies convergence behavior.

#include "dopt/types.hpp"
#include "dopt/rng.hpp"
#include "dopt/topology.hpp"
#include "dopt/costs.hpp"
#include "dopt/oracle.hpp"
#include "dopt/metrics.hpp"
#include "dopt/solvers.hpp"
#include "dopt/experiment.hpp"
