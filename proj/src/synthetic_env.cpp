#include "poolsearch/synthetic_env.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "poolsearch/errors.hpp"

namespace poolsearch {

SyntheticTreeEnv::SyntheticTreeEnv(SyntheticEnvConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.branching < 1) throw ConfigError("branching must be >= 1");
  if (cfg_.depth < 1) throw ConfigError("depth must be >= 1");

  const std::uint64_t b = static_cast<std::uint64_t>(cfg_.branching);
  level_offset_.assign(static_cast<std::size_t>(cfg_.depth) + 2, 0);
  std::uint64_t level_size = 1;
  std::uint64_t total = 0;
  for (int d = 0; d <= cfg_.depth; ++d) {
    level_offset_[d] = total;
    total += level_size;
    if (total > cfg_.node_cap)
      throw EnvTooLarge("node count exceeds enumeration cap");
    level_size *= b;
  }
  level_offset_[cfg_.depth + 1] = total;
  node_count_ = total;
  first_leaf_ = level_offset_[cfg_.depth];

  // Expansion kernel for every internal node.
  probs_.assign(first_leaf_ * b, 0.0);
  for (std::uint64_t n = 0; n < first_leaf_; ++n) {
    auto it = cfg_.step_prob_override.find(n);
    if (it != cfg_.step_prob_override.end()) {
      if (it->second.size() != b)
        throw ConfigError("step probability override arity mismatch");
      double s = 0.0;
      for (double p : it->second) s += p;
      if (std::abs(s - 1.0) > 1e-12)
        throw ConfigError("step probability override must sum to 1");
      std::copy(it->second.begin(), it->second.end(), probs_.begin() + n * b);
      continue;
    }
    if (cfg_.kernel == KernelKind::Uniform) {
      for (std::uint64_t j = 0; j < b; ++j)
        probs_[n * b + j] = 1.0 / static_cast<double>(b);
    } else {
      std::vector<double> mass(b);
      double s = 0.0;
      for (std::uint64_t j = 0; j < b; ++j) {
        RandomStream rs(derive_seed(cfg_.seed, "kernel", n, j));
        mass[j] = cfg_.kernel_min + (1.0 - cfg_.kernel_min) * rs.next_double();
        s += mass[j];
      }
      for (std::uint64_t j = 0; j < b; ++j) probs_[n * b + j] = mass[j] / s;
    }
  }

  // Prefix log probabilities.
  log_p_.assign(node_count_, 0.0);
  for (std::uint64_t n = 1; n < node_count_; ++n) {
    const std::uint64_t pa = parent_node(n);
    const int j = static_cast<int>(n - (pa * b + 1));
    const double p = probs_[pa * b + j];
    log_p_[n] = log_p_[pa] + (p > 0.0 ? std::log(p) : -INFINITY);
  }

  // Leaf correctness labels.
  const std::uint64_t leaf_count = node_count_ - first_leaf_;
  leaf_phi_.assign(leaf_count, 0);
  bool any_correct = false;
  std::uint64_t first_eligible = node_count_;
  for (std::uint64_t leaf = first_leaf_; leaf < node_count_; ++leaf) {
    bool eligible = true;
    if (cfg_.correct_subtree) {
      std::uint64_t a = leaf;
      while (a > *cfg_.correct_subtree) a = parent_node(a);
      eligible = (a == *cfg_.correct_subtree);
    }
    if (!eligible) continue;
    if (first_eligible == node_count_) first_eligible = leaf;
    RandomStream rs(derive_seed(cfg_.seed, "label", leaf));
    if (rs.next_double() < cfg_.correct_fraction && log_p_[leaf] > -INFINITY) {
      leaf_phi_[leaf - first_leaf_] = 1;
      any_correct = true;
    }
  }
  for (const auto& [leaf, label] : cfg_.leaf_label_override) {
    if (leaf < first_leaf_ || leaf >= node_count_)
      throw ConfigError("leaf label override outside the leaf range");
    leaf_phi_[leaf - first_leaf_] = label ? 1 : 0;
    if (label) any_correct = true;
  }
  if (cfg_.force_correct_leaf && !any_correct && first_eligible < node_count_)
    leaf_phi_[first_eligible - first_leaf_] = 1;

  // sigma(z): mass of correct completions, accumulated bottom-up.
  sigma_.assign(node_count_, 0.0);
  for (std::uint64_t n = node_count_; n-- > 0;) {
    if (n >= first_leaf_) {
      sigma_[n] = leaf_phi_[n - first_leaf_] ? std::exp(log_p_[n]) : 0.0;
    } else {
      double s = 0.0;
      for (std::uint64_t j = 0; j < b; ++j) s += sigma_[child_node(n, j)];
      sigma_[n] = s;
    }
  }

  // Deterministic scores.
  score_.assign(node_count_, 1.0);
  for (std::uint64_t n = 1; n < node_count_; ++n) {
    const double p = std::exp(log_p_[n]);
    const double cond = (p > 0.0) ? std::min(1.0, sigma_[n] / p) : 0.0;
    double s = cfg_.noise.weight * cond;
    if (cfg_.noise.weight < 1.0) {
      RandomStream rs(derive_seed(cfg_.noise.seed, "prm-noise", n));
      s += (1.0 - cfg_.noise.weight) * rs.next_double();
    }
    auto it = cfg_.noise.node_bias.find(n);
    if (it != cfg_.noise.node_bias.end()) s += it->second;
    score_[n] = clamp_prm(s);
  }
}

int SyntheticTreeEnv::node_depth(std::uint64_t node) const {
  auto it = std::upper_bound(level_offset_.begin(), level_offset_.end(), node);
  return static_cast<int>(it - level_offset_.begin()) - 1;
}

double SyntheticTreeEnv::step_prob(std::uint64_t node, int child_index) const {
  return probs_.at(node * static_cast<std::uint64_t>(cfg_.branching) +
                   static_cast<std::uint64_t>(child_index));
}

double SyntheticTreeEnv::score_of_node(std::uint64_t node) const {
  return score_.at(node);
}

bool SyntheticTreeEnv::leaf_correct(std::uint64_t leaf) const {
  return leaf_phi_.at(leaf - first_leaf_) != 0;
}

std::string SyntheticTreeEnv::answer_of_leaf(std::uint64_t leaf) const {
  if (leaf_correct(leaf)) return correct_answer();
  const std::uint64_t k =
      derive_seed(cfg_.seed, "answer", leaf) %
      static_cast<std::uint64_t>(std::max(1, cfg_.wrong_answer_classes));
  return "w" + std::to_string(k);
}

std::vector<StepSample> SyntheticTreeEnv::expand(const PrefixArena& arena,
                                                 std::optional<PrefixId> parent,
                                                 int count, double /*temperature*/,
                                                 RandomStream& rng) {
  const std::uint64_t node = parent ? arena.at(*parent).backend_node : 0;
  std::vector<StepSample> out;
  out.reserve(static_cast<std::size_t>(count));

  if (parent && arena.at(*parent).terminal) {
    const Prefix& p = arena.at(*parent);
    for (int i = 0; i < count; ++i) {
      StepSample s;
      s.step = p.step;
      s.logprob = p.step_logprob;
      s.terminal = true;
      s.answer = p.answer;
      s.frozen = true;
      s.node = p.backend_node;
      out.push_back(s);
    }
    return out;
  }

  const std::uint64_t b = static_cast<std::uint64_t>(cfg_.branching);
  for (int i = 0; i < count; ++i) {
    const double u = rng.next_double();
    double acc = 0.0;
    std::uint64_t j = 0;
    for (; j < b; ++j) {
      acc += probs_[node * b + j];
      if (u < acc) break;
    }
    if (j == b) j = b - 1;
    while (probs_[node * b + j] == 0.0 && j > 0) --j;  // fp edge on the last bin
    const std::uint64_t child = child_node(node, static_cast<int>(j));
    StepSample s;
    s.step = std::to_string(j);
    s.logprob = std::log(probs_[node * b + j]);
    s.node = child;
    if (is_terminal_node(child)) {
      s.terminal = true;
      s.answer = answer_of_leaf(child);
    }
    out.push_back(s);
  }
  return out;
}

double SyntheticTreeEnv::score_candidate(const PrefixArena& /*arena*/,
                                         std::optional<PrefixId> /*parent*/,
                                         const StepSample& sample) {
  return score_of_node(sample.node);
}

}  // namespace poolsearch
