#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "poolsearch/backend.hpp"

namespace poolsearch {

enum class KernelKind { Uniform, Seeded };

// Scoring model: score(z) = clamp(w * c(z) + (1 - w) * u(z) + bias(z)) where
// c(z) is the true conditional correctness mass of the prefix, u(z) a
// node-seeded uniform, and bias(z) a per-node offset used to plant
// over-/under-scored nodes.
struct PrmNoiseModel {
  double weight = 1.0;  // w; 1 disables the uniform noise term
  std::uint64_t seed = 0;
  std::unordered_map<std::uint64_t, double> node_bias;
};

struct SyntheticEnvConfig {
  int branching = 2;
  int depth = 3;  // maximum prefix length; depth-D prefixes are terminal
  std::uint64_t seed = 0;
  KernelKind kernel = KernelKind::Seeded;
  double kernel_min = 0.25;  // lower bound on unnormalized child mass (Seeded)
  double correct_fraction = 0.25;
  std::optional<std::uint64_t> correct_subtree;  // correct leaves only below this node
  bool force_correct_leaf = false;  // guarantee at least one correct leaf
  PrmNoiseModel noise;
  std::uint64_t node_cap = 1'000'000;
  int wrong_answer_classes = 4;
  // explicit per-node child distributions for tests; must sum to 1
  std::unordered_map<std::uint64_t, std::vector<double>> step_prob_override;
  // explicit correctness labels for individual leaves, applied after the
  // seeded draw
  std::unordered_map<std::uint64_t, bool> leaf_label_override;
};

// Finite b-ary step tree with an exact expansion kernel, per-leaf correctness
// labels and a deterministic scoring model. Nodes use heap indexing:
// root = 0, children of n are n*b + 1 + j. Pure and reentrant after
// construction.
class SyntheticTreeEnv final : public Backend {
 public:
  explicit SyntheticTreeEnv(SyntheticEnvConfig cfg);

  // Backend interface. `temperature` is accepted for interface parity and
  // ignored: the kernel itself is the sampling distribution.
  std::vector<StepSample> expand(const PrefixArena& arena,
                                 std::optional<PrefixId> parent, int count,
                                 double temperature, RandomStream& rng) override;
  double score_candidate(const PrefixArena& arena, std::optional<PrefixId> parent,
                         const StepSample& sample) override;
  std::optional<std::string> ground_truth() const override { return correct_answer(); }

  // Structure.
  int branching() const noexcept { return cfg_.branching; }
  int max_depth() const noexcept { return cfg_.depth; }
  std::uint64_t node_count() const noexcept { return node_count_; }
  std::uint64_t child_node(std::uint64_t node, int j) const noexcept {
    return node * cfg_.branching + 1 + j;
  }
  std::uint64_t parent_node(std::uint64_t node) const noexcept {
    return (node - 1) / cfg_.branching;
  }
  int node_depth(std::uint64_t node) const;
  bool is_terminal_node(std::uint64_t node) const { return node_depth(node) == cfg_.depth; }
  std::uint64_t first_node_at_depth(int d) const { return level_offset_.at(d); }

  // Exact quantities.
  double step_prob(std::uint64_t node, int child_index) const;
  double log_prefix_prob(std::uint64_t node) const { return log_p_.at(node); }
  double sigma(std::uint64_t node) const { return sigma_.at(node); }  // sum of p*phi below
  double score_of_node(std::uint64_t node) const;  // clamped; root scores 1
  bool leaf_correct(std::uint64_t leaf) const;
  std::string answer_of_leaf(std::uint64_t leaf) const;
  static std::string correct_answer() { return "A"; }

  const SyntheticEnvConfig& config() const noexcept { return cfg_; }

 private:
  SyntheticEnvConfig cfg_;
  std::uint64_t node_count_ = 0;
  std::uint64_t first_leaf_ = 0;
  std::vector<std::uint64_t> level_offset_;  // first node id per depth
  std::vector<double> probs_;                // internal nodes, b entries each
  std::vector<double> log_p_;
  std::vector<double> sigma_;
  std::vector<std::uint8_t> leaf_phi_;
  std::vector<double> score_;
};

// Environment with planted over-scored incorrect nodes (blockers) and one
// under-scored correct branch whose flagged prefix top ranking hides.
struct BlockerEnvParams {
  int branching = 4;
  int depth = 4;
  std::uint64_t seed = 0;
  double over_fraction = 0.67;  // fraction of zero-mass nodes at blocker_depth to over-score
  double over_bias = 0.45;
  double under_bias = -0.25;  // applied to the flagged correct prefix
  int blocker_depth = 1;
  // Plant over-scored traps at every interior depth instead of one; each
  // trap's children score honestly, so the trap reveals one level later.
  bool traps_at_all_depths = false;
  // Hidden-corridor variant: the correct continuation sits on a single chain
  // that the expansion kernel rarely samples but the scorer rates above the
  // traps once generated. The flagged entrance still ranks below the traps.
  bool hidden_corridor = false;
  double corridor_entry_prob = 0.5;  // carrier -> first corridor node
  double corridor_step_prob = 0.15;  // later corridor steps
  double corridor_bias = 0.6;        // score offset on corridor nodes
  double carrier_bias = 0.3;         // entrance score offset (below the traps)
  int check_round = 1;  // round whose eligible prefixes the predicate ranks
  int top_m = 2;
  double correct_fraction = 0.6;  // leaf correctness rate below the flagged branch
  double noise_weight = 0.7;
  double kernel_min = 0.7;
};

struct BlockerEnv {
  std::shared_ptr<SyntheticTreeEnv> env;
  std::uint64_t flagged_node = 0;  // the under-scored correct prefix
  std::vector<std::uint64_t> blocker_nodes;
  std::vector<std::uint64_t> corridor;  // hidden-corridor chain, entrance first
  BlockerEnvParams params;
};

// Builds the environment and verifies the planted structure by exhaustive
// enumeration; throws ConstructionFailed when the drawn seed does not
// realize a blocker (callers retry with another seed). With over_fraction
// == 0 and noise disabled the check degenerates and construction passes.
BlockerEnv make_blocker_env(const BlockerEnvParams& params);

}  // namespace poolsearch
