#pragma once

#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "poolsearch/pool.hpp"

namespace poolsearch {

enum class Method {
  Beam,
  StandardSMC,
  GreedySelection,
  SPS,
  PowerSMC,
  BacktrackSMC,
  PowerBacktrackSMC,
  BestOfN,
  SelfConsistency,
};

const char* method_name(Method m);
std::optional<Method> method_from_name(std::string_view name);

// Methods whose round-t pool contains only the newly generated children.
bool frontier_only(Method m);

// Methods weighted through the mixture-corrected factor machinery.
bool powered_family(Method m);

// Deterministic top ranking of the pool by weight.
std::vector<PrefixId> select_beam(const Pool& pool, std::size_t m);

// N draws with replacement proportional to weight.
std::vector<PrefixId> select_smc_parents(const Pool& pool, std::size_t n, RandomStream& rng);

// r(z) / r(pa(z)) with the root convention r = 1; evaluated through logs
// when either score drops below 1e-6.
double smc_incremental_weight(const Prefix& child, const PrefixArena& arena);

// Mean clamped score over the pool multiset; the adaptive subpool ratio.
double adaptive_rho(const Pool& pool, const PrefixArena& arena);

// Top ranking restricted to a uniform subpool of size
// max(M, floor(rho * |pool|)), clamped to the pool size.
std::vector<PrefixId> select_sps(const Pool& pool, std::size_t m, double rho, RandomStream& rng);

// Memory update G_t for every method except the powered family: frontier
// methods replace the pool with the children, persistent methods append
// them, and weights follow the per-method rule.
Pool memory_update(Method m, const Pool& old_pool, const std::vector<PrefixId>& children,
                   const PrefixArena& arena, int round, bool beam_cumulative_mean = false,
                   bool disable_persistence = false);

}  // namespace poolsearch
