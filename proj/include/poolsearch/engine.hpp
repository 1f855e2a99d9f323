#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "poolsearch/backend.hpp"
#include "poolsearch/pbsmc.hpp"
#include "poolsearch/pool.hpp"
#include "poolsearch/selectors.hpp"

namespace poolsearch {

struct SearchConfig {
  Method method = Method::PowerBacktrackSMC;
  int child_budget = 8;   // N: children generated per round
  int parent_budget = 8;  // M: parents per round; must divide N
  int horizon = 30;       // T
  std::uint64_t rng_seed = 0;
  double temperature = 0.7;
  ScheduleParams schedule;

  // SPS: constant subpool ratio instead of the adaptive pool-mean.
  std::optional<double> fixed_subpool_ratio;
  // Rank Beam by the running mean of scores along the path instead of the
  // last-step score.
  bool beam_cumulative_mean = false;
  // Pick the final answer from terminal entries of the last pool only,
  // instead of every terminal prefix observed during the run.
  bool finalize_from_final_pool = false;

  // Diagnostic switches for reduction checks.
  bool disable_persistence = false;   // GreedySelection/SPS become frontier-only
  bool disable_retained = false;      // powered family: drop the retained multiset
  std::optional<double> force_alpha;  // powered family: pin alpha_t
  std::optional<double> force_beta;   // powered family: pin every beta_t
};

// Throws ConfigError on invalid budgets. Returns the canonical config the
// engine actually runs (the powered family pins M = N; PowerSMC pins
// alpha = 1 with no retained multiset; BacktrackSMC pins beta = 1).
SearchConfig canonicalize(const SearchConfig& cfg);

struct ComputeLedger {
  long long new_generation_units = 0;      // freshly generated steps
  long long backtrack_recompute_units = 0; // context re-materialized for non-frontier parents
  long long scorer_calls = 0;
  long long generated_tokens = 0;  // stays 0 when the backend reports no token counts
};

struct RoundTrace {
  int t = 0;
  std::vector<PrefixId> parents;
  std::vector<PrefixId> children;  // exactly N entries, frozen pass-throughs included
  Pool pool;                       // P_t
  double alpha = 1.0;
  double beta_prev = 1.0;
  double beta = 1.0;
  double sigma_stat = 0.0;
  double rho = 0.0;  // SPS subpool ratio used this round
  ComputeLedger ledger;  // cumulative snapshot after the round
};

struct SearchRun {
  SearchConfig config;
  PrefixArena arena;
  Pool pool;  // current P_t
  std::vector<RoundTrace> rounds;  // rounds[0] is the initialization
  ComputeLedger ledger;
  std::vector<double> betas;  // betas[t]; meaningful for the powered family
  int rounds_run = 0;
  bool stopped_early = false;
  std::vector<PrefixId> prev_children;  // B_{t-1}
  RandomStream select_rng, expand_rng, retain_rng;

  explicit SearchRun(const SearchConfig& cfg)
      : config(cfg),
        select_rng(derive_seed(cfg.rng_seed, "select")),
        expand_rng(derive_seed(cfg.rng_seed, "expand")),
        retain_rng(derive_seed(cfg.rng_seed, "retain")) {}
};

struct FinalAnswer {
  std::string answer;
  bool valid = false;  // false when no trace completed
  double score = 0.0;
  std::optional<PrefixId> source;
};

// P_0: N one-step samples with W_0 = r^(beta0).
SearchRun initialize(const SearchConfig& cfg, Backend& backend);

// One select -> expand -> score -> update round; t in [1, horizon].
void run_round(SearchRun& run, Backend& backend, int t);

// Full loop with early stop once every positively weighted entry is terminal.
SearchRun run_search(const SearchConfig& cfg, Backend& backend);

// Answer selection: best score among terminal prefixes (majority vote for
// SelfConsistency); falls back to the deepest prefix flagged invalid when
// nothing completed.
FinalAnswer finalize(const SearchRun& run);

// N independent full rollouts ranked by final score.
FinalAnswer run_best_of_n(const SearchConfig& cfg, Backend& backend,
                          ComputeLedger* ledger_out = nullptr);

}  // namespace poolsearch
