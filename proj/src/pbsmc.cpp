#include "poolsearch/pbsmc.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <string>

#include "poolsearch/errors.hpp"

namespace poolsearch {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logsumexp2(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

double concentration_statistic(std::span<const double> scores) {
  assert(!scores.empty());
  double sum = 0.0, sum_sq = 0.0;
  for (double s : scores) {
    sum += s;
    sum_sq += s * s;
  }
  assert(sum > 0.0);
  return sum_sq / (sum * sum);
}

double power_step_delta(double sigma, std::size_t pool_size, double gamma) {
  const double inv_c = 1.0 / static_cast<double>(pool_size);
  const double s = std::min(1.0, std::max(inv_c, sigma));
  double delta = gamma * (1.0 - (s - inv_c));
  delta = std::min(gamma, std::max(gamma * inv_c, delta));
  return delta;
}

double beta_step(double beta, double sigma, std::size_t pool_size, double gamma) {
  return beta + power_step_delta(sigma, pool_size, gamma);
}

double alpha_at(const ScheduleParams& params, int t, int horizon) {
  assert(t >= 1 && t <= horizon);
  double g = params.g_min;
  if (horizon > 1) {
    g = params.g_max - (static_cast<double>(t - 1) / static_cast<double>(horizon - 1)) *
                           (params.g_max - params.g_min);
  }
  return 1.0 / (1.0 + g);
}

double correction_factor_log(const MixtureWeightInputs& in) {
  if (in.len < 1 || in.len > in.round + 1)
    throw InvalidLength("prefix length " + std::to_string(in.len) +
                        " outside [1, " + std::to_string(in.round + 1) + "]");
  const double log_r = std::log(in.prm);
  const double log_rpa = std::log(in.parent_prm);
  const double ratio_log = in.beta_prev * (log_r - log_rpa);
  const double num_log = ratio_log + (in.beta - in.beta_prev) * log_r;

  const double child_term = in.len >= 2 ? std::log(in.alpha) : kNegInf;
  const double hist_term =
      (in.len <= in.round && in.alpha < 1.0) ? std::log1p(-in.alpha) + ratio_log : kNegInf;
  const double den_log = logsumexp2(child_term, hist_term);
  assert(den_log != kNegInf);
  return num_log - den_log;
}

double correction_factor(const MixtureWeightInputs& in) {
  return std::exp(correction_factor_log(in));
}

std::vector<PrefixId> sample_retained(const Pool& pool, int round, int child_budget,
                                      RandomStream& rng) {
  return multinomial_sample(
      pool, static_cast<std::size_t>(round) * static_cast<std::size_t>(child_budget), rng);
}

Pool assign_pbsmc_weights(std::span<const PrefixId> retained,
                          std::span<const PrefixId> children, const PrefixArena& arena,
                          const PbsmcRoundContext& ctx) {
  const std::size_t want_children = static_cast<std::size_t>(ctx.child_budget);
  const std::size_t want_retained =
      ctx.retained_enabled
          ? static_cast<std::size_t>(ctx.round) * static_cast<std::size_t>(ctx.child_budget)
          : 0;
  if (children.size() != want_children)
    throw BudgetMismatch("child multiset size " + std::to_string(children.size()) +
                         " != " + std::to_string(want_children));
  if (retained.size() != want_retained)
    throw BudgetMismatch("retained multiset size " + std::to_string(retained.size()) +
                         " != " + std::to_string(want_retained));

  auto factor_log = [&](PrefixId id) {
    const Prefix& z = arena.at(id);
    MixtureWeightInputs in;
    in.prm = z.prm_score;
    in.parent_prm = arena.parent_score(z);
    in.len = z.depth;
    in.round = ctx.round;
    in.alpha = ctx.alpha;
    in.beta_prev = ctx.beta_prev;
    in.beta = ctx.beta;
    return correction_factor_log(in);
  };

  std::vector<double> log_w;
  log_w.reserve(retained.size() + children.size());
  const double log_t = std::log(static_cast<double>(ctx.round));
  for (PrefixId id : retained)
    log_w.push_back(std::log1p(-ctx.alpha) + factor_log(id) - log_t);
  for (PrefixId id : children) log_w.push_back(std::log(ctx.alpha) + factor_log(id));

  const double shift = *std::max_element(log_w.begin(), log_w.end());

  Pool out;
  out.round = ctx.round;
  out.entries.reserve(log_w.size());
  std::size_t i = 0;
  for (PrefixId id : retained) out.entries.push_back({id, std::exp(log_w[i++] - shift)});
  for (PrefixId id : children) out.entries.push_back({id, std::exp(log_w[i++] - shift)});
  return out;
}

}  // namespace poolsearch
