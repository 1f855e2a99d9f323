#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "poolsearch/engine.hpp"
#include "poolsearch/errors.hpp"
#include "poolsearch/synthetic_env.hpp"

using namespace poolsearch;

namespace {

SyntheticEnvConfig small_env_config(std::uint64_t seed, int b = 3, int depth = 4) {
  SyntheticEnvConfig cfg;
  cfg.branching = b;
  cfg.depth = depth;
  cfg.seed = seed;
  cfg.correct_fraction = 0.3;
  cfg.force_correct_leaf = true;
  cfg.noise.weight = 0.8;
  cfg.noise.seed = seed + 101;
  return cfg;
}

SearchConfig base_config(Method m, int n, int parent_budget, int horizon,
                         std::uint64_t seed) {
  SearchConfig cfg;
  cfg.method = m;
  cfg.child_budget = n;
  cfg.parent_budget = parent_budget;
  cfg.horizon = horizon;
  cfg.rng_seed = seed;
  return cfg;
}

bool traces_equal(const SearchRun& a, const SearchRun& b, bool compare_weights_normalized) {
  if (a.rounds.size() != b.rounds.size()) return false;
  for (std::size_t r = 0; r < a.rounds.size(); ++r) {
    const auto& x = a.rounds[r];
    const auto& y = b.rounds[r];
    if (x.parents.size() != y.parents.size()) return false;
    for (std::size_t i = 0; i < x.parents.size(); ++i)
      if (x.parents[i] != y.parents[i]) return false;
    if (x.children.size() != y.children.size()) return false;
    for (std::size_t i = 0; i < x.children.size(); ++i)
      if (x.children[i] != y.children[i]) return false;
    if (x.pool.size() != y.pool.size()) return false;
    double xs = 0.0, ys = 0.0;
    for (const auto& e : x.pool.entries) xs += e.weight;
    for (const auto& e : y.pool.entries) ys += e.weight;
    for (std::size_t i = 0; i < x.pool.size(); ++i) {
      if (x.pool.entries[i].id != y.pool.entries[i].id) return false;
      if (compare_weights_normalized) {
        const double wx = x.pool.entries[i].weight / xs;
        const double wy = y.pool.entries[i].weight / ys;
        if (std::abs(wx - wy) > 1e-12 * std::max(1.0, std::abs(wx))) return false;
      } else if (x.pool.entries[i].weight != y.pool.entries[i].weight) {
        return false;
      }
    }
  }
  return true;
}

}  // namespace

TEST_CASE("initialization draws N one-step samples weighted by score") {
  SyntheticTreeEnv env(small_env_config(3));
  SearchRun run = initialize(base_config(Method::GreedySelection, 8, 4, 5, 1), env);
  CHECK(run.pool.size() == 8);
  CHECK(run.arena.size() == 8);
  for (const auto& e : run.pool.entries) {
    const Prefix& z = run.arena.at(e.id);
    CHECK(z.depth == 1);
    CHECK(e.weight == z.prm_score);
    CHECK(z.prm_score >= kRMin);
  }
  CHECK(run.ledger.new_generation_units == 8);
  CHECK(run.ledger.scorer_calls == 8);
}

TEST_CASE("deterministic root yields identical steps with distinct ids") {
  SyntheticEnvConfig cfg = small_env_config(0, 2, 3);
  cfg.step_prob_override[0] = {1.0, 0.0};
  SyntheticTreeEnv env(cfg);
  SearchRun run = initialize(base_config(Method::Beam, 8, 4, 3, 9), env);
  std::set<std::uint32_t> ids;
  for (const auto& e : run.pool.entries) {
    CHECK(run.arena.at(e.id).step == "0");
    ids.insert(e.id.value);
  }
  CHECK(ids.size() == 8);
}

TEST_CASE("round budget arithmetic") {
  SUBCASE("beam expands M parents into N/M children each") {
    SyntheticTreeEnv env(small_env_config(5, 3, 6));
    SearchConfig cfg = base_config(Method::Beam, 32, 8, 3, 2);
    SearchRun run = run_search(cfg, env);
    for (std::size_t r = 1; r < run.rounds.size(); ++r) {
      CHECK(run.rounds[r].parents.size() == 8);
      CHECK(run.rounds[r].children.size() == 32);
      CHECK(run.rounds[r].pool.size() == 32);
    }
  }
  SUBCASE("powered backtracking pool grows as N(t+1)") {
    SyntheticTreeEnv env(small_env_config(6, 3, 6));
    SearchConfig cfg = base_config(Method::PowerBacktrackSMC, 8, 8, 3, 3);
    SearchRun run = run_search(cfg, env);
    REQUIRE(run.rounds_run == 3);
    CHECK(run.rounds[3].pool.size() == 8 * 4);
  }
  SUBCASE("persistent union grows by N per round") {
    SyntheticTreeEnv env(small_env_config(7, 3, 6));
    SearchConfig cfg = base_config(Method::GreedySelection, 8, 4, 4, 4);
    SearchRun run = run_search(cfg, env);
    for (int t = 1; t <= run.rounds_run; ++t)
      CHECK(run.rounds[static_cast<std::size_t>(t)].pool.size() ==
            static_cast<std::size_t>(8 * (t + 1)));
  }
  SUBCASE("fewer selectable parents than M recomputes the per-parent budget") {
    SyntheticTreeEnv env(small_env_config(8, 3, 6));
    SearchConfig cfg = base_config(Method::Beam, 8, 4, 3, 5);
    SearchRun run = initialize(cfg, env);
    run.pool.entries.resize(3);  // simulate a degenerate pool
    run_round(run, env, 1);
    CHECK(run.rounds[1].parents.size() == 3);
    CHECK(run.rounds[1].children.size() == 8);  // ceil(8/3) each, truncated to N
  }
}

TEST_CASE("terminal freezing keeps the child count at N for zero cost") {
  SyntheticTreeEnv env(small_env_config(11, 2, 2));  // terminal at depth 2
  SearchConfig cfg = base_config(Method::GreedySelection, 8, 4, 6, 6);
  SearchRun run = run_search(cfg, env);
  for (std::size_t r = 1; r < run.rounds.size(); ++r)
    CHECK(run.rounds[r].children.size() == 8);
  // Generation units never exceed fresh expansions.
  CHECK(run.ledger.new_generation_units <= 8 * (run.rounds_run + 1));
  // Frozen pass-through children re-use the parent id.
  bool saw_frozen = false;
  for (std::size_t r = 2; r < run.rounds.size(); ++r) {
    const auto& parents = run.rounds[r].parents;
    for (PrefixId id : run.rounds[r].children) {
      if (run.arena.at(id).terminal &&
          std::find(parents.begin(), parents.end(), id) != parents.end())
        saw_frozen = true;
    }
  }
  CHECK(saw_frozen);
}

TEST_CASE("budget invariant: N fresh units per executed round") {
  SyntheticTreeEnv env(small_env_config(13, 3, 8));  // deeper than the horizon
  for (Method m : {Method::Beam, Method::StandardSMC, Method::GreedySelection, Method::SPS,
                   Method::PowerSMC, Method::BacktrackSMC, Method::PowerBacktrackSMC,
                   Method::BestOfN, Method::SelfConsistency}) {
    SearchConfig cfg = base_config(m, 8, 4, 5, 7);
    SearchRun run = run_search(cfg, env);
    CHECK(run.rounds_run == 5);
    CHECK(run.ledger.new_generation_units == 8 * (5 + 1));
    for (int t = 1; t <= 5; ++t)
      CHECK(run.rounds[static_cast<std::size_t>(t)].children.size() == 8);
  }
}

TEST_CASE("frontier-only methods keep |P_t| = N and never backtrack") {
  SyntheticTreeEnv env(small_env_config(17, 3, 6));
  for (Method m : {Method::Beam, Method::StandardSMC, Method::PowerSMC, Method::BestOfN,
                   Method::SelfConsistency}) {
    SearchConfig cfg = base_config(m, 8, 4, 4, 8);
    SearchRun run = run_search(cfg, env);
    for (int t = 1; t <= run.rounds_run; ++t)
      CHECK(run.rounds[static_cast<std::size_t>(t)].pool.size() == 8);
    CHECK(run.ledger.backtrack_recompute_units == 0);
  }
}

TEST_CASE("persistent methods account for context recomputation") {
  SyntheticTreeEnv env(small_env_config(19, 3, 6));
  SearchConfig cfg = base_config(Method::PowerBacktrackSMC, 8, 8, 5, 9);
  SearchRun run = run_search(cfg, env);
  CHECK(run.ledger.backtrack_recompute_units > 0);
  // A cumulative ledger never decreases.
  long long prev_units = 0, prev_back = 0;
  for (const auto& tr : run.rounds) {
    CHECK(tr.ledger.new_generation_units >= prev_units);
    CHECK(tr.ledger.backtrack_recompute_units >= prev_back);
    prev_units = tr.ledger.new_generation_units;
    prev_back = tr.ledger.backtrack_recompute_units;
  }
}

TEST_CASE("identical seeds reproduce identical runs") {
  SyntheticTreeEnv env(small_env_config(23, 3, 5));
  for (Method m : {Method::Beam, Method::SPS, Method::PowerBacktrackSMC}) {
    SearchConfig cfg = base_config(m, 8, 4, 4, 10);
    SearchRun a = run_search(cfg, env);
    SearchRun b = run_search(cfg, env);
    CHECK(traces_equal(a, b, false));
    CHECK(a.ledger.new_generation_units == b.ledger.new_generation_units);
    CHECK(a.ledger.backtrack_recompute_units == b.ledger.backtrack_recompute_units);
    CHECK(finalize(a).answer == finalize(b).answer);
  }
}

TEST_CASE("greedy selection with persistence disabled reduces to beam") {
  SyntheticTreeEnv env(small_env_config(29, 3, 6));
  SearchConfig beam = base_config(Method::Beam, 8, 4, 4, 11);
  SearchConfig greedy = base_config(Method::GreedySelection, 8, 4, 4, 11);
  greedy.disable_persistence = true;
  SearchRun a = run_search(beam, env);
  SearchRun b = run_search(greedy, env);
  CHECK(traces_equal(a, b, false));
}

TEST_CASE("powered reductions reproduce their ablation counterparts") {
  SyntheticTreeEnv env(small_env_config(31, 3, 6));

  SUBCASE("alpha pinned to 1 with no retained multiset equals the frontier variant") {
    SearchConfig pb = base_config(Method::PowerBacktrackSMC, 8, 8, 4, 12);
    pb.force_alpha = 1.0;
    pb.disable_retained = true;
    SearchConfig power = base_config(Method::PowerSMC, 8, 8, 4, 12);
    SearchRun a = run_search(pb, env);
    SearchRun b = run_search(power, env);
    CHECK(traces_equal(a, b, true));
  }
  SUBCASE("additionally pinning beta to 1 equals standard resampling") {
    SearchConfig pb = base_config(Method::PowerBacktrackSMC, 8, 8, 4, 13);
    pb.force_alpha = 1.0;
    pb.disable_retained = true;
    pb.force_beta = 1.0;
    SearchConfig smc = base_config(Method::StandardSMC, 8, 8, 4, 13);
    SearchRun a = run_search(pb, env);
    SearchRun b = run_search(smc, env);
    CHECK(traces_equal(a, b, true));
  }
}

TEST_CASE("weight scale invariance of downstream selection") {
  SyntheticTreeEnv env(small_env_config(37, 3, 5));
  SearchConfig cfg = base_config(Method::PowerBacktrackSMC, 8, 8, 3, 14);
  SearchRun run = run_search(cfg, env);

  Pool scaled = run.pool;
  for (auto& e : scaled.entries) e.weight *= 4096.0;  // exact rescale
  RandomStream r1(42), r2(42);
  auto a = multinomial_sample(run.pool, 64, r1);
  auto b = multinomial_sample(scaled, 64, r2);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

  auto top_a = top_m_select(run.pool, 4);
  auto top_b = top_m_select(scaled, 4);
  for (std::size_t i = 0; i < top_a.size(); ++i) CHECK(top_a[i] == top_b[i]);

  // Self-normalized estimates are untouched by the rescale.
  auto estimate = [&](const Pool& p) {
    double num = 0.0, den = 0.0;
    for (const auto& e : p.entries) {
      num += e.weight * run.arena.at(e.id).prm_score;
      den += e.weight;
    }
    return num / den;
  };
  CHECK(estimate(run.pool) == doctest::Approx(estimate(scaled)).epsilon(1e-12));
}

TEST_CASE("finalize") {
  SearchConfig cfg = base_config(Method::Beam, 8, 4, 3, 15);

  SUBCASE("single terminal trace wins outright") {
    SearchRun run{canonicalize(cfg)};
    Prefix z;
    z.parent = PrefixId::root();
    z.prm_score = 0.4;
    z.terminal = true;
    z.answer = "x";
    run.arena.add(std::move(z));
    FinalAnswer ans = finalize(run);
    CHECK(ans.valid);
    CHECK(ans.answer == "x");
  }
  SUBCASE("best score among terminal traces") {
    SearchRun run{canonicalize(cfg)};
    const char* names[] = {"a", "b", "c"};
    const double scores[] = {0.3, 0.9, 0.7};
    for (int i = 0; i < 3; ++i) {
      Prefix z;
      z.parent = PrefixId::root();
      z.prm_score = scores[i];
      z.terminal = true;
      z.answer = names[i];
      run.arena.add(std::move(z));
    }
    FinalAnswer ans = finalize(run);
    CHECK(ans.answer == "b");
    CHECK(ans.score == doctest::Approx(0.9));
  }
  SUBCASE("majority vote for self-consistency") {
    SearchConfig sc = cfg;
    sc.method = Method::SelfConsistency;
    SearchRun run{canonicalize(sc)};
    const char* names[] = {"A", "A", "B"};
    for (int i = 0; i < 3; ++i) {
      Prefix z;
      z.parent = PrefixId::root();
      z.prm_score = 0.5;
      z.terminal = true;
      z.answer = names[i];
      run.arena.add(std::move(z));
    }
    CHECK(finalize(run).answer == "A");
  }
  SUBCASE("no terminal trace is flagged invalid") {
    SearchRun run{canonicalize(cfg)};
    Prefix z;
    z.parent = PrefixId::root();
    z.prm_score = 0.4;
    run.arena.add(std::move(z));
    FinalAnswer ans = finalize(run);
    CHECK(!ans.valid);
  }
  SUBCASE("final-pool restriction ignores dropped terminals") {
    SearchConfig restricted = cfg;
    restricted.finalize_from_final_pool = true;
    SearchRun run{canonicalize(restricted)};
    Prefix hi;
    hi.parent = PrefixId::root();
    hi.prm_score = 0.9;
    hi.terminal = true;
    hi.answer = "dropped";
    PrefixId hi_id = run.arena.add(std::move(hi));
    Prefix lo;
    lo.parent = PrefixId::root();
    lo.prm_score = 0.4;
    lo.terminal = true;
    lo.answer = "kept";
    PrefixId lo_id = run.arena.add(std::move(lo));
    run.pool.entries.push_back({lo_id, 1.0});  // only the low scorer survived
    CHECK(finalize(run).answer == "kept");

    run.pool.entries.push_back({hi_id, 0.5});
    CHECK(finalize(run).answer == "dropped");  // back in range, higher score wins
  }
}

TEST_CASE("best-of-n rollouts rank by final score") {
  SyntheticTreeEnv env(small_env_config(41, 2, 4));
  SearchConfig cfg = base_config(Method::BestOfN, 1, 1, 3, 16);
  ComputeLedger ledger;
  FinalAnswer one = run_best_of_n(cfg, env, &ledger);
  CHECK(ledger.new_generation_units == 1 * (3 + 1));

  // Deterministic env: every rollout lands on the same trace.
  SyntheticEnvConfig det = small_env_config(43, 2, 2);
  det.step_prob_override[0] = {1.0, 0.0};
  det.step_prob_override[1] = {0.0, 1.0};
  SyntheticTreeEnv denv(det);
  SearchConfig bo = base_config(Method::BestOfN, 4, 4, 2, 17);
  SearchRun run = run_search(bo, denv);
  FinalAnswer ans = finalize(run);
  std::set<std::string> answers;
  for (const auto& z : run.arena.all())
    if (z.terminal) answers.insert(*z.answer);
  CHECK(answers.size() == 1);
  CHECK(ans.answer == *answers.begin());
}

TEST_CASE("config validation") {
  SearchConfig cfg;
  cfg.child_budget = 8;
  cfg.parent_budget = 3;  // does not divide N
  cfg.method = Method::Beam;
  CHECK_THROWS_AS(canonicalize(cfg), ConfigError);
  cfg.parent_budget = 0;
  CHECK_THROWS_AS(canonicalize(cfg), ConfigError);
  cfg.parent_budget = 4;
  cfg.horizon = 0;
  CHECK_THROWS_AS(canonicalize(cfg), ConfigError);
  cfg.horizon = 3;
  CHECK(canonicalize(cfg).parent_budget == 4);

  SearchConfig pb;
  pb.method = Method::PowerBacktrackSMC;
  pb.child_budget = 8;
  pb.parent_budget = 2;  // pinned to N for the powered family
  CHECK(canonicalize(pb).parent_budget == 8);
}
