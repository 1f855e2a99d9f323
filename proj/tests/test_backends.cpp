#include <cmath>

#include "doctest.h"
#include "poolsearch/errors.hpp"
#include "poolsearch/oracle.hpp"
#include "poolsearch/synthetic_env.hpp"

using namespace poolsearch;

TEST_CASE("kernel rows sum to one on random environments") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    SyntheticEnvConfig cfg;
    cfg.branching = 2 + static_cast<int>(seed % 3);
    cfg.depth = 3;
    cfg.seed = seed;
    SyntheticTreeEnv env(cfg);
    for (std::uint64_t n = 0; n < env.first_node_at_depth(env.max_depth()); ++n) {
      double s = 0.0;
      for (int j = 0; j < env.branching(); ++j) s += env.step_prob(n, j);
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("env_expand on a degenerate distribution") {
  SyntheticEnvConfig cfg;
  cfg.branching = 2;
  cfg.depth = 3;
  cfg.step_prob_override[0] = {1.0, 0.0};
  SyntheticTreeEnv env(cfg);

  PrefixArena arena;
  RandomStream rng(5);
  auto kids = env.expand(arena, std::nullopt, 3, 0.7, rng);
  REQUIRE(kids.size() == 3);
  for (const auto& k : kids) {
    CHECK(k.step == "0");
    CHECK(*k.logprob == doctest::Approx(0.0));
    CHECK(k.node == 1);
  }
}

TEST_CASE("env_expand draw frequencies match the kernel") {
  SyntheticEnvConfig cfg;
  cfg.branching = 2;
  cfg.depth = 2;
  cfg.kernel = KernelKind::Uniform;
  SyntheticTreeEnv env(cfg);

  PrefixArena arena;
  RandomStream rng(21);
  int c0 = 0;
  const int k = 20000;
  auto kids = env.expand(arena, std::nullopt, k, 0.7, rng);
  for (const auto& s : kids)
    if (s.step == "0") ++c0;
  CHECK(std::abs(c0 / double(k) - 0.5) < 0.01);
}

TEST_CASE("terminal prefixes freeze instead of expanding") {
  SyntheticEnvConfig cfg;
  cfg.branching = 2;
  cfg.depth = 1;  // depth-1 children are terminal
  cfg.correct_fraction = 1.0;
  SyntheticTreeEnv env(cfg);

  PrefixArena arena;
  RandomStream rng(9);
  auto first = env.expand(arena, std::nullopt, 1, 0.7, rng);
  REQUIRE(first.size() == 1);
  REQUIRE(first[0].terminal);
  Prefix z;
  z.parent = PrefixId::root();
  z.step = first[0].step;
  z.terminal = true;
  z.answer = first[0].answer;
  z.backend_node = first[0].node;
  z.prm_score = clamp_prm(env.score_candidate(arena, std::nullopt, first[0]));
  PrefixId id = arena.add(std::move(z));

  auto frozen = env.expand(arena, id, 4, 0.7, rng);
  REQUIRE(frozen.size() == 4);
  for (const auto& s : frozen) {
    CHECK(s.frozen);
    CHECK(s.node == arena.at(id).backend_node);
    CHECK(s.terminal);
  }
}

TEST_CASE("env scores derive from true conditional correctness") {
  // Carrier subtree holds every correct leaf; its sibling has none.
  SyntheticEnvConfig cfg;
  cfg.branching = 2;
  cfg.depth = 2;
  cfg.kernel = KernelKind::Uniform;
  cfg.correct_subtree = 1;
  cfg.correct_fraction = 1.0;
  cfg.noise.weight = 1.0;
  SyntheticTreeEnv env(cfg);

  CHECK(env.score_of_node(2) == doctest::Approx(kRMin));  // no correct continuation
  CHECK(env.score_of_node(1) == doctest::Approx(1.0));    // every continuation correct
  CHECK(env.score_of_node(0) == 1.0);                     // root convention

  // A planted positive bias shifts the derived score and clamps at 1.
  SyntheticEnvConfig biased = cfg;
  biased.correct_fraction = 0.0;
  biased.force_correct_leaf = false;
  biased.noise.node_bias[2] = 0.3;
  SyntheticTreeEnv benv(biased);
  CHECK(benv.score_of_node(2) == doctest::Approx(0.3));
  biased.noise.node_bias[2] = 1.7;
  SyntheticTreeEnv cenv(biased);
  CHECK(cenv.score_of_node(2) == doctest::Approx(1.0));  // clamped at the ceiling
}

TEST_CASE("scores stay clamped on random environments") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    SyntheticEnvConfig cfg;
    cfg.branching = 3;
    cfg.depth = 3;
    cfg.seed = seed;
    cfg.noise.weight = 0.6;
    cfg.noise.seed = seed * 7 + 1;
    cfg.noise.node_bias[1] = -2.0;
    cfg.noise.node_bias[2] = 2.0;
    SyntheticTreeEnv env(cfg);
    for (std::uint64_t n = 1; n < env.node_count(); ++n) {
      CHECK(env.score_of_node(n) >= kRMin);
      CHECK(env.score_of_node(n) <= 1.0);
    }
  }
}

TEST_CASE("environment over the node cap is rejected") {
  SyntheticEnvConfig cfg;
  cfg.branching = 4;
  cfg.depth = 12;
  cfg.node_cap = 100000;
  CHECK_THROWS_AS(SyntheticTreeEnv{cfg}, EnvTooLarge);
}

TEST_CASE("blocker environment construction") {
  SUBCASE("degenerate parameters pass without a blocker") {
    BlockerEnvParams p;
    p.over_fraction = 0.0;
    p.noise_weight = 1.0;
    p.seed = 3;
    BlockerEnv be = make_blocker_env(p);
    CHECK(be.blocker_nodes.empty());
    CHECK(be.env->sigma(be.flagged_node) > 0.0);
  }

  SUBCASE("depth-2 blocker verified by enumeration") {
    // One over-scored wrong branch at depth 2; predicate holds at round 2.
    BlockerEnvParams p;
    p.branching = 3;
    p.depth = 6;
    p.blocker_depth = 2;
    p.over_fraction = 0.05;  // a single node
    p.over_bias = 0.6;
    p.under_bias = -0.3;
    p.check_round = 2;
    p.top_m = 1;
    bool made = false;
    for (std::uint64_t seed = 0; seed < 60 && !made; ++seed) {
      p.seed = seed;
      try {
        BlockerEnv be = make_blocker_env(p);
        made = true;
        REQUIRE(be.blocker_nodes.size() == 1);
        auto table = oracle::enumerate(*be.env);
        CHECK(oracle::blocker_predicate(table, 2, 1));
        // The top-1 eligible prefix carries no correct mass.
        std::uint64_t best = 0;
        double best_score = -1.0;
        for (std::uint64_t z = 1; z < table.n_nodes; ++z)
          if (table.len[z] <= 2 && table.prm[z] > best_score) {
            best_score = table.prm[z];
            best = z;
          }
        CHECK(table.sigma[best] == 0.0);
      } catch (const ConstructionFailed&) {
      }
    }
    CHECK(made);
  }

  SUBCASE("under-scored correct branch ranks last at round 1") {
    BlockerEnvParams p;
    p.branching = 2;
    p.depth = 4;
    p.under_bias = -0.4;
    p.over_fraction = 0.0;
    p.noise_weight = 0.95;
    p.correct_fraction = 0.35;
    bool found = false;
    for (std::uint64_t seed = 0; seed < 80 && !found; ++seed) {
      p.seed = seed;
      try {
        BlockerEnv be = make_blocker_env(p);
        auto table = oracle::enumerate(*be.env);
        REQUIRE(table.sigma[be.flagged_node] > 0.0);
        const std::uint64_t sibling = be.flagged_node == 1 ? 2 : 1;
        // The under-scored correct branch ranks below its incorrect sibling.
        CHECK(table.prm[be.flagged_node] < table.prm[sibling]);
        found = true;
      } catch (const ConstructionFailed&) {
      }
    }
    CHECK(found);
  }

  SUBCASE("hidden corridor plants a rare but recognizable chain") {
    BlockerEnvParams p;
    p.depth = 5;
    p.hidden_corridor = true;
    p.traps_at_all_depths = true;
    p.over_fraction = 0.67;
    p.over_bias = 0.5;
    p.corridor_bias = 0.6;
    p.carrier_bias = 0.3;
    p.corridor_entry_prob = 0.6;
    p.corridor_step_prob = 0.2;
    p.noise_weight = 0.85;
    p.correct_fraction = 0.85;
    bool made = false;
    for (std::uint64_t seed = 0; seed < 30 && !made; ++seed) {
      p.seed = seed;
      try {
        BlockerEnv be = make_blocker_env(p);
        made = true;
        REQUIRE(be.corridor.size() == 4);  // depths 1 .. D-1
        CHECK(be.corridor.front() == be.flagged_node);
        const auto& env = *be.env;
        for (std::size_t k = 0; k + 1 < be.corridor.size(); ++k) {
          const std::uint64_t parent = be.corridor[k];
          const std::uint64_t child = be.corridor[k + 1];
          CHECK(env.parent_node(child) == parent);
          const int j = static_cast<int>(child - (parent * 4 + 1));
          const double expect = k == 0 ? 0.6 : 0.2;
          CHECK(env.step_prob(parent, j) == doctest::Approx(expect));
          CHECK(env.sigma(child) > 0.0);
        }
        // Corridor interiors outscore every trap; the entrance does not.
        double trap_max = 0.0;
        for (std::uint64_t z : be.blocker_nodes)
          trap_max = std::max(trap_max, env.score_of_node(z));
        for (std::size_t k = 1; k < be.corridor.size(); ++k)
          CHECK(env.score_of_node(be.corridor[k]) > trap_max - 0.2);
        CHECK(env.score_of_node(be.flagged_node) < trap_max);
        auto table = oracle::enumerate(env);
        CHECK(oracle::blocker_predicate(table, 1, 2));
      } catch (const ConstructionFailed&) {
      }
    }
    CHECK(made);
  }

  SUBCASE("default parameters produce verified blockers") {
    int made = 0;
    BlockerEnvParams p;
    for (std::uint64_t seed = 0; seed < 30 && made < 5; ++seed) {
      p.seed = seed;
      try {
        BlockerEnv be = make_blocker_env(p);
        ++made;
        auto table = oracle::enumerate(*be.env);
        CHECK(oracle::blocker_predicate(table, p.check_round, p.top_m));
        CHECK(table.sigma[be.flagged_node] > 0.0);
      } catch (const ConstructionFailed&) {
      }
    }
    CHECK(made == 5);
  }
}
