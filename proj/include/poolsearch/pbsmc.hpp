#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "poolsearch/pool.hpp"

namespace poolsearch {

// Hyperparameters of the power and mixture schedules.
struct ScheduleParams {
  double gamma = 9.0;
  double g_min = 0.4;
  double g_max = 1.0;
  double beta0 = 1.0;
};

// sigma = sum of squared normalized scores over the pool multiset; lies in
// [1/C, 1] with C = |scores|.
double concentration_statistic(std::span<const double> scores);

// Power increment gamma * (1 - (sigma - 1/C)); clamped into [gamma/C, gamma]
// so the bound holds exactly under rounding.
double power_step_delta(double sigma, std::size_t pool_size, double gamma);

// New power after one schedule step; strictly increasing in the round.
double beta_step(double beta, double sigma, std::size_t pool_size, double gamma);

// Mixture probability alpha_t = 1 / (1 + g_t) with g_t linearly decreasing
// from g_max to g_min across the horizon; a single-round horizon uses g_min.
double alpha_at(const ScheduleParams& params, int t, int horizon);

struct MixtureWeightInputs {
  double prm = 1.0;         // r(z), clamped
  double parent_prm = 1.0;  // r(pa(z)); 1 for depth-1 prefixes
  int len = 1;              // prefix length
  int round = 1;            // t
  double alpha = 0.5;       // alpha_t
  double beta_prev = 1.0;   // beta_{t-1}
  double beta = 1.0;        // beta_t
};

// log of the target-to-mixture-proposal density ratio; throws InvalidLength
// when len falls outside [1, round + 1].
double correction_factor_log(const MixtureWeightInputs& in);
double correction_factor(const MixtureWeightInputs& in);

struct PbsmcRoundContext {
  int round = 1;         // t >= 1
  int child_budget = 0;  // N
  double alpha = 0.5;
  double beta_prev = 1.0;
  double beta = 1.0;
  bool retained_enabled = true;
};

// Retained multiset: N*t draws with replacement from the previous pool.
std::vector<PrefixId> sample_retained(const Pool& pool, int round, int child_budget,
                                      RandomStream& rng);

// Pool of size N*(t+1) ordered retained-then-children, weighted
// alpha*F for children and (1-alpha)*F/t for retained copies. Weights are
// computed in log space and stored shifted by their maximum, which leaves
// every selection and self-normalized estimate unchanged. Throws
// BudgetMismatch when the multiset sizes disagree with the budgets.
Pool assign_pbsmc_weights(std::span<const PrefixId> retained,
                          std::span<const PrefixId> children, const PrefixArena& arena,
                          const PbsmcRoundContext& ctx);

}  // namespace poolsearch
