#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "poolsearch/arena.hpp"
#include "poolsearch/rng.hpp"

namespace poolsearch {

// One candidate continuation step produced by a generator.
struct StepSample {
  std::string step;
  std::optional<double> logprob;  // log step probability when the backend knows it
  bool terminal = false;
  std::optional<std::string> answer;  // extracted answer, terminal samples only
  bool frozen = false;                // pass-through copy of an already-terminal prefix
  std::uint64_t node = 0;             // backend-private handle
  std::optional<long> tokens;         // generated tokens when the service reports them
};

struct ExpandRequest {
  std::optional<PrefixId> parent;  // nullopt = expand the root prompt
  int count = 1;
};

// Paired generator/scorer. Expansion returns exactly `count` samples unless
// the parent is terminal, in which case it returns `count` frozen copies of
// the parent itself. Scoring happens before arena insertion so prefixes are
// immutable from birth; scores are cached by id and never recomputed.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual std::vector<StepSample> expand(const PrefixArena& arena,
                                         std::optional<PrefixId> parent, int count,
                                         double temperature, RandomStream& rng) = 0;

  // Score of the would-be child (parent path + sample step), in (0,1]
  // before clamping. Must be deterministic for a fixed prefix within a run.
  virtual double score_candidate(const PrefixArena& arena,
                                 std::optional<PrefixId> parent,
                                 const StepSample& sample) = 0;

  // Batched expansion; results come back in request order. The default runs
  // serially, network backends may overlap requests.
  virtual std::vector<std::vector<StepSample>> expand_many(
      const PrefixArena& arena, const std::vector<ExpandRequest>& requests,
      double temperature, RandomStream& rng) {
    std::vector<std::vector<StepSample>> out;
    out.reserve(requests.size());
    for (const auto& r : requests)
      out.push_back(expand(arena, r.parent, r.count, temperature, rng));
    return out;
  }

  // Ground-truth answer when the backend knows it (synthetic environments).
  virtual std::optional<std::string> ground_truth() const { return std::nullopt; }
};

}  // namespace poolsearch
