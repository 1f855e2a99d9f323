#include "poolsearch/engine.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_set>

#include "poolsearch/errors.hpp"

namespace poolsearch {

namespace {

bool schedule_active(const SearchConfig& cfg) {
  // BacktrackSMC keeps beta pinned at 1; the power schedule runs otherwise.
  return powered_family(cfg.method) && cfg.method != Method::BacktrackSMC &&
         !cfg.force_beta.has_value();
}

double initial_beta(const SearchConfig& cfg) {
  if (!powered_family(cfg.method)) return 1.0;
  if (cfg.force_beta) return *cfg.force_beta;
  if (cfg.method == Method::BacktrackSMC) return 1.0;
  return cfg.schedule.beta0;
}

std::vector<double> pool_scores(const Pool& pool, const PrefixArena& arena) {
  std::vector<double> s;
  s.reserve(pool.size());
  for (const auto& e : pool.entries) s.push_back(arena.at(e.id).prm_score);
  return s;
}

void advance_power_schedule(SearchRun& run) {
  const double beta_t = run.betas.back();
  if (!schedule_active(run.config)) {
    run.betas.push_back(beta_t);
    return;
  }
  const auto scores = pool_scores(run.pool, run.arena);
  const double sigma = concentration_statistic(scores);
  run.betas.push_back(beta_step(beta_t, sigma, scores.size(), run.config.schedule.gamma));
  if (!run.rounds.empty()) run.rounds.back().sigma_stat = sigma;
}

bool all_live_entries_terminal(const SearchRun& run) {
  bool any_positive = false;
  for (const auto& e : run.pool.entries) {
    if (e.weight <= 0.0) continue;
    any_positive = true;
    if (!run.arena.at(e.id).terminal) return false;
  }
  return any_positive;
}

}  // namespace

SearchConfig canonicalize(const SearchConfig& cfg) {
  SearchConfig out = cfg;
  if (out.child_budget < 1) throw ConfigError("child budget must be >= 1");
  if (out.horizon < 1) throw ConfigError("horizon must be >= 1");
  if (powered_family(out.method) || out.method == Method::StandardSMC ||
      out.method == Method::BestOfN || out.method == Method::SelfConsistency) {
    out.parent_budget = out.child_budget;  // one child per selected parent
  }
  if (out.parent_budget < 1) throw ConfigError("parent budget must be >= 1");
  if (out.child_budget % out.parent_budget != 0)
    throw ConfigError("parent budget must divide child budget");
  if (out.method == Method::PowerSMC) {
    out.disable_retained = true;
    out.force_alpha = 1.0;
  }
  if (out.method == Method::BacktrackSMC) out.force_beta = 1.0;
  if (out.fixed_subpool_ratio &&
      (*out.fixed_subpool_ratio <= 0.0 || *out.fixed_subpool_ratio > 1.0))
    throw ConfigError("subpool ratio must lie in (0, 1]");
  return out;
}

SearchRun initialize(const SearchConfig& raw, Backend& backend) {
  SearchConfig cfg = canonicalize(raw);
  SearchRun run(cfg);
  const int n = cfg.child_budget;

  auto batches = backend.expand_many(run.arena, {{std::nullopt, n}}, cfg.temperature,
                                     run.expand_rng);
  const auto& samples = batches.at(0);

  const double beta0 = initial_beta(cfg);
  run.betas.push_back(beta0);

  Pool p0;
  p0.round = 0;
  std::vector<PrefixId> ids;
  ids.reserve(samples.size());
  for (const auto& s : samples) {
    Prefix z;
    z.parent = PrefixId::root();
    z.step = s.step;
    z.step_logprob = s.logprob;
    z.terminal = s.terminal;
    z.answer = s.answer;
    z.backend_node = s.node;
    z.prm_score = clamp_prm(backend.score_candidate(run.arena, std::nullopt, s));
    PrefixId id = run.arena.add(std::move(z));
    ids.push_back(id);
    run.ledger.new_generation_units += 1;
    run.ledger.scorer_calls += 1;
    if (s.tokens) run.ledger.generated_tokens += *s.tokens;
    const double r = run.arena.at(id).prm_score;
    const double w = (beta0 == 1.0) ? r : std::exp(beta0 * std::log(r));
    p0.entries.push_back({id, w});
  }
  run.pool = std::move(p0);
  run.prev_children = ids;

  RoundTrace tr;
  tr.t = 0;
  tr.children = ids;
  tr.pool = run.pool;
  tr.beta_prev = beta0;
  tr.beta = beta0;
  run.rounds.push_back(std::move(tr));

  advance_power_schedule(run);  // beta_1 from the just-formed pool
  run.rounds.back().ledger = run.ledger;
  return run;
}

void run_round(SearchRun& run, Backend& backend, int t) {
  const SearchConfig& cfg = run.config;
  const int n = cfg.child_budget;
  const Pool& prev = run.pool;
  if (prev.empty()) throw std::logic_error("round on an empty pool");

  RoundTrace tr;
  tr.t = t;

  // Parent selection f_t.
  std::vector<PrefixId> parents;
  switch (cfg.method) {
    case Method::Beam:
    case Method::GreedySelection:
      parents = select_beam(prev, static_cast<std::size_t>(cfg.parent_budget));
      break;
    case Method::SPS: {
      const double rho = cfg.fixed_subpool_ratio
                             ? *cfg.fixed_subpool_ratio
                             : adaptive_rho(prev, run.arena);
      tr.rho = rho;
      parents = select_sps(prev, static_cast<std::size_t>(cfg.parent_budget), rho,
                           run.select_rng);
      break;
    }
    case Method::StandardSMC:
    case Method::PowerSMC:
    case Method::BacktrackSMC:
    case Method::PowerBacktrackSMC:
      parents = select_smc_parents(prev, static_cast<std::size_t>(n), run.select_rng);
      break;
    case Method::BestOfN:
    case Method::SelfConsistency:
      parents.reserve(prev.size());
      for (const auto& e : prev.entries) parents.push_back(e.id);
      break;
  }
  tr.parents = parents;

  // Per-parent child counts: B = N/M, recomputed as ceil when fewer parents
  // exist, with the grand total truncated back to N.
  const std::size_t m_eff = parents.size();
  const std::size_t per_parent =
      (m_eff == static_cast<std::size_t>(cfg.parent_budget))
          ? static_cast<std::size_t>(n / cfg.parent_budget)
          : (static_cast<std::size_t>(n) + m_eff - 1) / m_eff;

  std::unordered_set<std::uint32_t> prev_child_ids;
  prev_child_ids.reserve(run.prev_children.size());
  for (PrefixId id : run.prev_children) prev_child_ids.insert(id.value);

  struct Slot {
    PrefixId parent;
    int count = 0;
    bool frozen = false;
    int request_index = -1;
  };
  std::vector<Slot> slots;
  std::vector<ExpandRequest> requests;
  std::size_t remaining = static_cast<std::size_t>(n);
  for (PrefixId pid : parents) {
    if (remaining == 0) break;
    const std::size_t take = std::min(per_parent, remaining);
    remaining -= take;
    Slot slot{pid, static_cast<int>(take), run.arena.at(pid).terminal, -1};
    if (!slot.frozen) {
      slot.request_index = static_cast<int>(requests.size());
      requests.push_back({pid, slot.count});
    }
    slots.push_back(slot);
  }

  auto batches = backend.expand_many(run.arena, requests, cfg.temperature, run.expand_rng);

  std::vector<PrefixId> children;
  children.reserve(static_cast<std::size_t>(n));
  for (const Slot& slot : slots) {
    if (slot.frozen) {
      // Completed traces pass through unchanged so the round still carries
      // exactly N children at zero generation cost.
      for (int i = 0; i < slot.count; ++i) children.push_back(slot.parent);
      continue;
    }
    const Prefix& parent = run.arena.at(slot.parent);
    if (!prev_child_ids.count(slot.parent.value)) {
      // Expanding a non-frontier parent re-materializes its context.
      run.ledger.backtrack_recompute_units += parent.depth;
    }
    for (const StepSample& s : batches.at(static_cast<std::size_t>(slot.request_index))) {
      Prefix z;
      z.parent = slot.parent;
      z.step = s.step;
      z.step_logprob = s.logprob;
      z.terminal = s.terminal;
      z.answer = s.answer;
      z.backend_node = s.node;
      z.prm_score = clamp_prm(backend.score_candidate(run.arena, slot.parent, s));
      PrefixId id = run.arena.add(std::move(z));
      children.push_back(id);
      run.ledger.new_generation_units += 1;
      run.ledger.scorer_calls += 1;
      if (s.tokens) run.ledger.generated_tokens += *s.tokens;
    }
  }
  tr.children = children;

  // Memory update G_t.
  if (powered_family(cfg.method)) {
    PbsmcRoundContext ctx;
    ctx.round = t;
    ctx.child_budget = n;
    ctx.retained_enabled = !cfg.disable_retained;
    ctx.alpha = cfg.force_alpha ? *cfg.force_alpha
                                : alpha_at(cfg.schedule, t, cfg.horizon);
    ctx.beta_prev = run.betas.at(static_cast<std::size_t>(t) - 1);
    ctx.beta = run.betas.at(static_cast<std::size_t>(t));
    std::vector<PrefixId> retained;
    if (ctx.retained_enabled)
      retained = sample_retained(prev, t, n, run.retain_rng);
    run.pool = assign_pbsmc_weights(retained, children, run.arena, ctx);
    tr.alpha = ctx.alpha;
    tr.beta_prev = ctx.beta_prev;
    tr.beta = ctx.beta;
  } else {
    run.pool = memory_update(cfg.method, prev, children, run.arena, t,
                             cfg.beam_cumulative_mean, cfg.disable_persistence);
  }

  run.prev_children = children;
  run.rounds_run = t;
  tr.pool = run.pool;
  run.rounds.push_back(std::move(tr));

  advance_power_schedule(run);  // beta_{t+1} from the just-formed pool
  run.rounds.back().ledger = run.ledger;
}

SearchRun run_search(const SearchConfig& cfg, Backend& backend) {
  SearchRun run = initialize(cfg, backend);
  for (int t = 1; t <= run.config.horizon; ++t) {
    if (all_live_entries_terminal(run)) {
      run.stopped_early = true;
      break;
    }
    run_round(run, backend, t);
  }
  if (!run.stopped_early && all_live_entries_terminal(run)) run.stopped_early = true;
  return run;
}

FinalAnswer finalize(const SearchRun& run) {
  std::vector<PrefixId> candidates;
  if (run.config.finalize_from_final_pool) {
    std::unordered_set<std::uint32_t> seen;
    for (const auto& e : run.pool.entries) {
      if (run.arena.at(e.id).terminal && seen.insert(e.id.value).second)
        candidates.push_back(e.id);
    }
  } else {
    for (const Prefix& z : run.arena.all())
      if (z.terminal) candidates.push_back(z.id);
  }

  FinalAnswer out;
  if (candidates.empty()) {
    // Nothing completed: surface the deepest prefix, flagged invalid.
    const Prefix* best = nullptr;
    for (const Prefix& z : run.arena.all()) {
      if (!best || z.depth > best->depth ||
          (z.depth == best->depth && z.prm_score > best->prm_score))
        best = &z;
    }
    if (best) {
      out.answer = best->answer.value_or("");
      out.score = best->prm_score;
      out.source = best->id;
    }
    out.valid = false;
    return out;
  }

  if (run.config.method == Method::SelfConsistency) {
    // Majority answer; ties break by the higher best score, then first seen.
    std::map<std::string, std::pair<int, double>> votes;
    std::vector<std::string> order;
    for (PrefixId id : candidates) {
      const Prefix& z = run.arena.at(id);
      const std::string a = z.answer.value_or("");
      auto [it, inserted] = votes.try_emplace(a, 0, 0.0);
      if (inserted) order.push_back(a);
      it->second.first += 1;
      it->second.second = std::max(it->second.second, z.prm_score);
    }
    const std::string* winner = nullptr;
    for (const std::string& a : order) {
      if (!winner) { winner = &a; continue; }
      const auto& cur = votes[a];
      const auto& best = votes[*winner];
      if (cur.first > best.first ||
          (cur.first == best.first && cur.second > best.second))
        winner = &a;
    }
    out.answer = *winner;
    out.score = votes[*winner].second;
    out.valid = true;
    return out;
  }

  PrefixId best = candidates.front();
  for (PrefixId id : candidates) {
    const Prefix& z = run.arena.at(id);
    const Prefix& b = run.arena.at(best);
    if (z.prm_score > b.prm_score || (z.prm_score == b.prm_score && z.id < b.id))
      best = id;
  }
  const Prefix& z = run.arena.at(best);
  out.answer = z.answer.value_or("");
  out.score = z.prm_score;
  out.source = best;
  out.valid = true;
  return out;
}

FinalAnswer run_best_of_n(const SearchConfig& cfg, Backend& backend,
                          ComputeLedger* ledger_out) {
  SearchConfig c = cfg;
  c.method = Method::BestOfN;
  SearchRun run = run_search(c, backend);
  if (ledger_out) *ledger_out = run.ledger;
  return finalize(run);
}

}  // namespace poolsearch
