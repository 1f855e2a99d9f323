#include "poolsearch/pool.hpp"

#include <algorithm>
#include <numeric>

#include "poolsearch/errors.hpp"

namespace poolsearch {

Pool pool_union(const Pool& a, const Pool& b) {
  Pool out;
  out.round = std::max(a.round, b.round);
  out.entries.reserve(a.entries.size() + b.entries.size());
  out.entries.insert(out.entries.end(), a.entries.begin(), a.entries.end());
  out.entries.insert(out.entries.end(), b.entries.begin(), b.entries.end());
  return out;
}

Pool normalize_weights(const Pool& p) {
  const double total = p.total_weight();
  if (!(total > 0.0)) throw AllWeightsZero{};
  Pool out = p;
  for (auto& e : out.entries) e.weight /= total;
  return out;
}

std::vector<PrefixId> top_m_select(const Pool& p, std::size_t m) {
  std::vector<std::size_t> order(p.entries.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    const auto& a = p.entries[i];
    const auto& b = p.entries[j];
    if (a.weight != b.weight) return a.weight > b.weight;
    if (i != j) return i < j;
    return a.id < b.id;
  });
  const std::size_t take = std::min(m, order.size());
  std::vector<PrefixId> out;
  out.reserve(take);
  for (std::size_t k = 0; k < take; ++k) out.push_back(p.entries[order[k]].id);
  return out;
}

std::vector<PrefixId> multinomial_sample(const Pool& p, std::size_t k, RandomStream& rng) {
  std::vector<double> cdf(p.entries.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < p.entries.size(); ++i) {
    acc += p.entries[i].weight;
    cdf[i] = acc;
  }
  if (!(acc > 0.0)) throw AllWeightsZero{};
  std::vector<PrefixId> out;
  out.reserve(k);
  for (std::size_t d = 0; d < k; ++d) {
    const double u = rng.next_double() * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    std::size_t idx = static_cast<std::size_t>(it - cdf.begin());
    if (idx >= cdf.size()) idx = cdf.size() - 1;
    // upper_bound can land on a zero-weight entry only via fp ties; skip them.
    while (p.entries[idx].weight == 0.0 && idx + 1 < cdf.size()) ++idx;
    out.push_back(p.entries[idx].id);
  }
  return out;
}

Pool uniform_subsample(const Pool& p, std::size_t k, RandomStream& rng) {
  if (k > p.entries.size())
    throw SubsampleTooLarge("subsample size exceeds pool size");
  std::vector<std::size_t> idx(p.entries.size());
  std::iota(idx.begin(), idx.end(), 0);
  // Partial Fisher-Yates: after i steps the first i slots hold a uniform
  // i-subset. Positions are then re-sorted so the result keeps pool order.
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.next_below(idx.size() - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  Pool out;
  out.round = p.round;
  out.entries.reserve(k);
  for (std::size_t i : idx) out.entries.push_back(p.entries[i]);
  return out;
}

}  // namespace poolsearch
