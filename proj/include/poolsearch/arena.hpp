#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace poolsearch {

// Scores are clamped into [kRMin, 1] so every weight stays bounded away
// from zero and powered weights remain finite.
inline constexpr double kRMin = 1e-4;

inline double clamp_prm(double s) noexcept {
  return std::min(1.0, std::max(kRMin, s));
}

// Index into a per-search arena. Ids are unique within one run and never
// reused; the root prompt is a sentinel, not an arena entry.
struct PrefixId {
  std::uint32_t value = std::numeric_limits<std::uint32_t>::max();

  static constexpr PrefixId root() noexcept { return PrefixId{}; }
  bool is_root() const noexcept {
    return value == std::numeric_limits<std::uint32_t>::max();
  }

  friend bool operator==(PrefixId a, PrefixId b) noexcept { return a.value == b.value; }
  friend bool operator!=(PrefixId a, PrefixId b) noexcept { return a.value != b.value; }
  friend bool operator<(PrefixId a, PrefixId b) noexcept { return a.value < b.value; }
};

struct PrefixIdHash {
  std::size_t operator()(PrefixId id) const noexcept {
    return std::hash<std::uint32_t>{}(id.value);
  }
};

// One node of the reasoning tree. Immutable once appended to the arena.
struct Prefix {
  PrefixId id;
  PrefixId parent;  // root() when depth == 1
  std::string step;
  int depth = 1;
  std::optional<double> step_logprob;  // unknown for backends without logprobs
  double prm_score = 1.0;              // clamped into [kRMin, 1]
  bool terminal = false;
  std::optional<std::string> answer;  // present iff terminal
  std::uint64_t backend_node = 0;     // backend-private handle (synthetic tree id)
  double path_score_mean = 0.0;       // running mean of prm_score along the path
};

// Append-only store of prefixes for one search run.
class PrefixArena {
 public:
  PrefixId add(Prefix p) {
    PrefixId id{static_cast<std::uint32_t>(nodes_.size())};
    p.id = id;
    if (p.parent.is_root()) {
      p.depth = 1;
      p.path_score_mean = p.prm_score;
    } else {
      const Prefix& pa = at(p.parent);
      p.depth = pa.depth + 1;
      p.path_score_mean =
          (pa.path_score_mean * pa.depth + p.prm_score) / (pa.depth + 1);
    }
    nodes_.push_back(std::move(p));
    return id;
  }

  const Prefix& at(PrefixId id) const { return nodes_.at(id.value); }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool empty() const noexcept { return nodes_.empty(); }

  // Score of the parent prefix, with the root-prompt convention of 1.
  double parent_score(const Prefix& p) const {
    return p.parent.is_root() ? 1.0 : at(p.parent).prm_score;
  }

  const std::vector<Prefix>& all() const noexcept { return nodes_; }

 private:
  std::vector<Prefix> nodes_;
};

}  // namespace poolsearch
