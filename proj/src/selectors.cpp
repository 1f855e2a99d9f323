#include "poolsearch/selectors.hpp"

#include <cmath>
#include <stdexcept>

#include "poolsearch/errors.hpp"

namespace poolsearch {

const char* method_name(Method m) {
  switch (m) {
    case Method::Beam: return "Beam";
    case Method::StandardSMC: return "StandardSMC";
    case Method::GreedySelection: return "GreedySelection";
    case Method::SPS: return "SPS";
    case Method::PowerSMC: return "PowerSMC";
    case Method::BacktrackSMC: return "BacktrackSMC";
    case Method::PowerBacktrackSMC: return "PowerBacktrackSMC";
    case Method::BestOfN: return "BestOfN";
    case Method::SelfConsistency: return "SelfConsistency";
  }
  return "?";
}

std::optional<Method> method_from_name(std::string_view name) {
  static const std::pair<std::string_view, Method> table[] = {
      {"Beam", Method::Beam},
      {"beam", Method::Beam},
      {"StandardSMC", Method::StandardSMC},
      {"smc", Method::StandardSMC},
      {"GreedySelection", Method::GreedySelection},
      {"greedy", Method::GreedySelection},
      {"SPS", Method::SPS},
      {"sps", Method::SPS},
      {"PowerSMC", Method::PowerSMC},
      {"power-smc", Method::PowerSMC},
      {"BacktrackSMC", Method::BacktrackSMC},
      {"backtrack-smc", Method::BacktrackSMC},
      {"PowerBacktrackSMC", Method::PowerBacktrackSMC},
      {"pb-smc", Method::PowerBacktrackSMC},
      {"BestOfN", Method::BestOfN},
      {"best-of-n", Method::BestOfN},
      {"SelfConsistency", Method::SelfConsistency},
      {"self-consistency", Method::SelfConsistency},
  };
  for (const auto& [k, v] : table)
    if (k == name) return v;
  return std::nullopt;
}

bool frontier_only(Method m) {
  switch (m) {
    case Method::Beam:
    case Method::StandardSMC:
    case Method::PowerSMC:
    case Method::BestOfN:
    case Method::SelfConsistency:
      return true;
    default:
      return false;
  }
}

bool powered_family(Method m) {
  return m == Method::PowerSMC || m == Method::BacktrackSMC ||
         m == Method::PowerBacktrackSMC;
}

std::vector<PrefixId> select_beam(const Pool& pool, std::size_t m) {
  return top_m_select(pool, m);
}

std::vector<PrefixId> select_smc_parents(const Pool& pool, std::size_t n, RandomStream& rng) {
  return multinomial_sample(pool, n, rng);
}

double smc_incremental_weight(const Prefix& child, const PrefixArena& arena) {
  const double r = child.prm_score;
  const double rpa = arena.parent_score(child);
  if (r < 1e-6 || rpa < 1e-6) return std::exp(std::log(r) - std::log(rpa));
  return r / rpa;
}

double adaptive_rho(const Pool& pool, const PrefixArena& arena) {
  if (pool.empty()) throw std::invalid_argument("adaptive_rho on empty pool");
  double s = 0.0;
  for (const auto& e : pool.entries) s += arena.at(e.id).prm_score;
  return s / static_cast<double>(pool.size());
}

std::vector<PrefixId> select_sps(const Pool& pool, std::size_t m, double rho,
                                 RandomStream& rng) {
  const std::size_t floor_k =
      static_cast<std::size_t>(std::floor(rho * static_cast<double>(pool.size())));
  std::size_t k = std::max(m, floor_k);
  k = std::min(k, pool.size());
  const Pool subpool = uniform_subsample(pool, k, rng);
  return top_m_select(subpool, m);
}

Pool memory_update(Method m, const Pool& old_pool, const std::vector<PrefixId>& children,
                   const PrefixArena& arena, int round, bool beam_cumulative_mean,
                   bool disable_persistence) {
  if (powered_family(m))
    throw std::invalid_argument("powered methods assign weights through their own update");

  Pool fresh;
  fresh.round = round;
  fresh.entries.reserve(children.size());
  for (PrefixId id : children) {
    const Prefix& z = arena.at(id);
    double w = z.prm_score;
    if (m == Method::StandardSMC) w = smc_incremental_weight(z, arena);
    if (m == Method::Beam && beam_cumulative_mean) w = z.path_score_mean;
    fresh.entries.push_back({id, w});
  }

  if (frontier_only(m) || disable_persistence) return fresh;

  // Persistent union keeps every historical entry selectable at weight r(z).
  Pool out = pool_union(old_pool, fresh);
  out.round = round;
  return out;
}

}  // namespace poolsearch
