#pragma once

#include <cstddef>
#include <vector>

#include "poolsearch/arena.hpp"
#include "poolsearch/rng.hpp"

namespace poolsearch {

// Weighted multiset of prefix references; the same id may appear multiple
// times (retained copies). Entry order is meaningful: ties in selection
// break by insertion position.
struct PoolEntry {
  PrefixId id;
  double weight = 0.0;
};

struct Pool {
  std::vector<PoolEntry> entries;
  int round = 0;

  std::size_t size() const noexcept { return entries.size(); }
  bool empty() const noexcept { return entries.empty(); }
  double total_weight() const noexcept {
    double s = 0.0;
    for (const auto& e : entries) s += e.weight;
    return s;
  }
};

// Appends b's entries after a's; order preserved on both sides.
Pool pool_union(const Pool& a, const Pool& b);

// Rescales weights to sum to one. Throws AllWeightsZero when the total is 0.
Pool normalize_weights(const Pool& p);

// The m highest-weight entries. Ties break by descending weight, then
// ascending insertion position, then ascending id. Returns all entries when
// m >= |p|. Invariant under positive rescaling of all weights.
std::vector<PrefixId> top_m_select(const Pool& p, std::size_t m);

// k independent draws with replacement, probability proportional to weight.
std::vector<PrefixId> multinomial_sample(const Pool& p, std::size_t k, RandomStream& rng);

// Exactly k distinct positions chosen uniformly (every size-k subset equally
// likely), returned in original pool order with weights carried over.
Pool uniform_subsample(const Pool& p, std::size_t k, RandomStream& rng);

}  // namespace poolsearch
