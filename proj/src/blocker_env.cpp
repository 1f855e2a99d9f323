#include <algorithm>
#include <cmath>

#include "poolsearch/errors.hpp"
#include "poolsearch/oracle.hpp"
#include "poolsearch/synthetic_env.hpp"

namespace poolsearch {

BlockerEnv make_blocker_env(const BlockerEnvParams& params) {
  if (params.blocker_depth < 1 || params.blocker_depth >= params.depth)
    throw ConfigError("blocker depth must lie strictly inside the tree");

  SyntheticEnvConfig cfg;
  cfg.branching = params.branching;
  cfg.depth = params.depth;
  cfg.seed = derive_seed(params.seed, "blocker-env");
  cfg.kernel = KernelKind::Seeded;
  cfg.kernel_min = params.kernel_min;
  cfg.correct_fraction = params.correct_fraction;
  cfg.force_correct_leaf = true;
  cfg.noise.weight = params.noise_weight;
  cfg.noise.seed = derive_seed(params.seed, "blocker-noise");

  // All correct leaves live below one depth-1 carrier branch.
  RandomStream rs(derive_seed(params.seed, "blocker-pick"));
  const std::uint64_t b = static_cast<std::uint64_t>(params.branching);
  const std::uint64_t carrier = 1 + rs.next_below(b);
  cfg.correct_subtree = carrier;

  std::vector<std::uint64_t> corridor;
  if (params.hidden_corridor) {
    // A single recognizable chain carries the correct mass; the kernel makes
    // its later steps rare so frontier mass starves crossing it.
    corridor.push_back(carrier);
    std::uint64_t node = carrier;
    for (int d = 2; d <= params.depth - 1; ++d) {
      const std::uint64_t pick = rs.next_below(b);
      const double p_next = d == 2 ? params.corridor_entry_prob : params.corridor_step_prob;
      std::vector<double> row(b, (1.0 - p_next) / static_cast<double>(b - 1));
      row[pick] = p_next;
      cfg.step_prob_override[node] = row;
      node = node * b + 1 + pick;
      corridor.push_back(node);
    }
    cfg.correct_subtree = node;  // correct leaves are the chain end's children
  }

  // First pass without biases to learn which nodes carry no correct mass.
  SyntheticTreeEnv base(cfg);
  std::vector<std::uint64_t> blockers;
  const int lo_depth = params.traps_at_all_depths ? 1 : params.blocker_depth;
  const int hi_depth = params.traps_at_all_depths ? params.depth - 1 : params.blocker_depth;
  for (int d = lo_depth; d <= hi_depth; ++d) {
    std::vector<std::uint64_t> candidates;
    const std::uint64_t lo = base.first_node_at_depth(d);
    const std::uint64_t hi = base.first_node_at_depth(d + 1);
    for (std::uint64_t z = lo; z < hi; ++z)
      if (base.sigma(z) == 0.0) candidates.push_back(z);
    if (params.over_fraction <= 0.0 || candidates.empty()) continue;
    std::size_t n_over = static_cast<std::size_t>(
        std::floor(params.over_fraction * static_cast<double>(candidates.size()) + 0.5));
    n_over = std::max<std::size_t>(1, std::min(n_over, candidates.size()));
    for (std::size_t i = 0; i < n_over; ++i) {
      const std::size_t j =
          i + static_cast<std::size_t>(rs.next_below(candidates.size() - i));
      std::swap(candidates[i], candidates[j]);
    }
    blockers.insert(blockers.end(), candidates.begin(),
                    candidates.begin() + static_cast<long>(n_over));
  }
  std::sort(blockers.begin(), blockers.end());

  cfg.noise.node_bias[carrier] +=
      params.hidden_corridor ? params.carrier_bias : params.under_bias;
  for (std::size_t i = 1; i < corridor.size(); ++i)
    cfg.noise.node_bias[corridor[i]] += params.corridor_bias;
  for (std::uint64_t z : blockers) cfg.noise.node_bias[z] += params.over_bias;

  BlockerEnv out;
  out.env = std::make_shared<SyntheticTreeEnv>(cfg);
  out.flagged_node = carrier;
  out.blocker_nodes = blockers;
  out.corridor = corridor;
  out.params = params;

  // No over-scoring and no score noise leaves an ordinary environment with
  // nothing to verify.
  const bool degenerate = params.over_fraction == 0.0 && params.noise_weight == 1.0;
  if (!degenerate) {
    const oracle::OracleTable table = oracle::enumerate(*out.env);
    if (table.sigma[carrier] <= 0.0)
      throw ConstructionFailed("flagged branch carries no correct mass");
    if (params.over_fraction > 0.0) {
      if (!oracle::blocker_predicate(table, params.check_round,
                                     static_cast<std::size_t>(params.top_m)))
        throw ConstructionFailed("drawn seed does not realize a blocker");
    } else {
      // Under-scoring only: the flagged prefix must be out-ranked by some
      // prefix without correct mass among those eligible by the check round.
      bool outranked = false;
      for (std::uint64_t z = 1; z < table.n_nodes; ++z)
        if (table.len[z] <= params.check_round && table.sigma[z] == 0.0 &&
            table.prm[z] > table.prm[carrier])
          outranked = true;
      if (!outranked)
        throw ConstructionFailed("under-scored branch still ranks on top");
    }
  }
  return out;
}

}  // namespace poolsearch
