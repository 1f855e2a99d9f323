#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "poolsearch/engine.hpp"
#include "poolsearch/synthetic_env.hpp"

namespace poolsearch::oracle {

// Exact per-prefix quantities of a synthetic environment plus the round-t
// target and proposal densities, all evaluated in log space. Node 0 is the
// root prompt; prefixes are nodes with len >= 1.
struct OracleTable {
  int branching = 0;
  int depth = 0;
  std::uint64_t n_nodes = 0;
  std::vector<double> log_p;   // log p(z); 0 at the root
  std::vector<double> prm;     // clamped score; 1 at the root
  std::vector<double> sigma;   // mass of correct completions below z
  std::vector<int> len;        // prefix length; 0 at the root
  std::vector<std::uint64_t> parent;

  // Unnormalized log densities (negative infinity outside the support).
  double log_target(std::uint64_t z, int t, double beta) const;
  double log_q_new(std::uint64_t z, int t, double beta_prev) const;
  double log_q_hist(std::uint64_t z, int t, double beta_prev) const;
  double log_q_mix(std::uint64_t z, int t, double alpha, double beta_prev) const;

  // log of Z_{t-1}: the shared normalizer sum over prefixes of length <= t.
  double log_normalizer(int t, double beta_prev) const;

  // E_pi[f] under the normalized powered target, optionally restricted to a
  // length band.
  double target_expectation(std::span<const double> f, int t, double beta,
                            int len_min = 1, int len_max = -1) const;

  // Enumerated target-to-mixture ratio, the reference for the weight factor.
  double correction_factor(std::uint64_t z, int t, double alpha, double beta_prev,
                           double beta) const;
};

OracleTable enumerate(const SyntheticTreeEnv& env);  // EnvTooLarge over the cap

// Residual of the mixture-proposal identity with exact expectations
// substituted, on the environment's own proposal pair; max over the
// normalized and the self-normalized route.
double mis_identity_check(const OracleTable& table, std::span<const double> f,
                          double alpha, double beta_prev, double beta, int t);

// Same identity on arbitrary finite targets/proposals.
double mis_identity_residual(std::span<const double> target_unnorm,
                             const std::vector<std::vector<double>>& proposals_unnorm,
                             std::span<const double> alphas, std::span<const double> f);

// True iff, among prefixes eligible by the given round (len <= round), the
// global top-M by score all have zero correct-completion mass while some
// prefix outside the top-M has positive mass.
bool blocker_predicate(const OracleTable& table, int round, std::size_t top_m);

struct ConvergencePoint {
  int n = 0;
  double mean_abs_error = 0.0;
  double estimator_std = 0.0;  // std of the estimates over trials
  double mean_beta = 0.0;
};

// Error of the self-normalized pool estimate of E[f] against the enumerated
// target, per child-budget value. Powered methods compare against the full
// powered target at each trial's realized beta_t; frontier SMC compares
// against the unit-power target restricted to the frontier length.
std::vector<ConvergencePoint> convergence_probe(const SyntheticTreeEnv& env, Method method,
                                                std::span<const int> n_values, int t,
                                                std::span<const double> f, int trials,
                                                std::uint64_t seed,
                                                const ScheduleParams& schedule = {});

// Fixture export; schema documented in docs/oracle_table.md.
nlohmann::json export_table(const OracleTable& table);

// Runs the oracle property suite on randomized environments, printing one
// status line per property. Returns the number of failures.
int run_property_suite(std::ostream& out, std::uint64_t seed);

}  // namespace poolsearch::oracle
