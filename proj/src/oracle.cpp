#include "poolsearch/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "poolsearch/errors.hpp"
#include "poolsearch/pbsmc.hpp"

namespace poolsearch::oracle {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Shift by the maximum, then accumulate the exponentials smallest-first so
// deep trees of tiny probabilities sum stably.
double logsumexp(std::vector<double> terms) {
  double m = kNegInf;
  for (double t : terms) m = std::max(m, t);
  if (m == kNegInf) return kNegInf;
  std::sort(terms.begin(), terms.end());
  double s = 0.0, c = 0.0;
  for (double t : terms) {
    const double x = std::exp(t - m);
    const double y = x - c;
    const double u = s + y;
    c = (u - s) - y;
    s = u;
  }
  return m + std::log(s);
}

double kahan_sum(const std::vector<double>& xs) {
  double s = 0.0, c = 0.0;
  for (double x : xs) {
    const double y = x - c;
    const double u = s + y;
    c = (u - s) - y;
    s = u;
  }
  return s;
}

}  // namespace

double OracleTable::log_target(std::uint64_t z, int t, double beta) const {
  if (len[z] < 1 || len[z] > t + 1) return kNegInf;
  return log_p[z] + beta * std::log(prm[z]);
}

double OracleTable::log_q_new(std::uint64_t z, int t, double beta_prev) const {
  if (len[z] < 2 || len[z] > t + 1) return kNegInf;
  return log_p[z] + beta_prev * std::log(prm[parent[z]]);
}

double OracleTable::log_q_hist(std::uint64_t z, int t, double beta_prev) const {
  if (len[z] < 1 || len[z] > t) return kNegInf;
  return log_p[z] + beta_prev * std::log(prm[z]);
}

double OracleTable::log_q_mix(std::uint64_t z, int t, double alpha,
                              double beta_prev) const {
  const double a = log_q_new(z, t, beta_prev);
  const double b = log_q_hist(z, t, beta_prev);
  std::vector<double> terms;
  if (a != kNegInf) terms.push_back(std::log(alpha) + a);
  if (b != kNegInf) terms.push_back(std::log1p(-alpha) + b);
  return logsumexp(std::move(terms));
}

double OracleTable::log_normalizer(int t, double beta_prev) const {
  std::vector<double> terms;
  terms.reserve(n_nodes);
  for (std::uint64_t z = 1; z < n_nodes; ++z)
    if (len[z] >= 1 && len[z] <= t)
      terms.push_back(log_p[z] + beta_prev * std::log(prm[z]));
  return logsumexp(std::move(terms));
}

double OracleTable::target_expectation(std::span<const double> f, int t, double beta,
                                       int len_min, int len_max) const {
  const int hi = len_max < 0 ? t + 1 : len_max;
  std::vector<double> terms;
  std::vector<std::uint64_t> nodes;
  for (std::uint64_t z = 1; z < n_nodes; ++z) {
    const double l = log_target(z, t, beta);
    if (l == kNegInf || len[z] < len_min || len[z] > hi) continue;
    terms.push_back(l);
    nodes.push_back(z);
  }
  const double log_z = logsumexp(terms);
  std::vector<double> contrib;
  contrib.reserve(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i)
    contrib.push_back(f[nodes[i]] * std::exp(terms[i] - log_z));
  return kahan_sum(contrib);
}

double OracleTable::correction_factor(std::uint64_t z, int t, double alpha,
                                      double beta_prev, double beta) const {
  return std::exp(log_target(z, t, beta) - log_q_mix(z, t, alpha, beta_prev));
}

OracleTable enumerate(const SyntheticTreeEnv& env) {
  if (env.node_count() > env.config().node_cap)
    throw EnvTooLarge("environment exceeds enumeration cap");
  OracleTable tb;
  tb.branching = env.branching();
  tb.depth = env.max_depth();
  tb.n_nodes = env.node_count();
  tb.log_p.resize(tb.n_nodes);
  tb.prm.resize(tb.n_nodes);
  tb.sigma.assign(tb.n_nodes, 0.0);
  tb.len.resize(tb.n_nodes);
  tb.parent.resize(tb.n_nodes);

  tb.log_p[0] = 0.0;
  tb.prm[0] = 1.0;
  tb.len[0] = 0;
  tb.parent[0] = 0;
  for (std::uint64_t z = 1; z < tb.n_nodes; ++z) {
    tb.parent[z] = env.parent_node(z);
    tb.len[z] = env.node_depth(z);
    const int j = static_cast<int>(z - (tb.parent[z] * env.branching() + 1));
    const double p = env.step_prob(tb.parent[z], j);
    tb.log_p[z] = tb.log_p[tb.parent[z]] + (p > 0.0 ? std::log(p) : kNegInf);
    tb.prm[z] = env.score_of_node(z);
  }
  // sigma re-derived bottom-up from the leaf labels.
  for (std::uint64_t z = tb.n_nodes; z-- > 1;) {
    if (tb.len[z] == tb.depth) {
      tb.sigma[z] = env.leaf_correct(z) ? std::exp(tb.log_p[z]) : 0.0;
    }
    if (z > 0) tb.sigma[tb.parent[z]] += tb.sigma[z];
  }
  return tb;
}

double mis_identity_check(const OracleTable& table, std::span<const double> f,
                          double alpha, double beta_prev, double beta, int t) {
  // Normalize the target and both proposals independently.
  std::vector<double> lp(table.n_nodes, kNegInf), l1(table.n_nodes, kNegInf),
      l2(table.n_nodes, kNegInf);
  std::vector<double> terms_p, terms_1, terms_2;
  for (std::uint64_t z = 1; z < table.n_nodes; ++z) {
    lp[z] = table.log_target(z, t, beta);
    l1[z] = table.log_q_new(z, t, beta_prev);
    l2[z] = table.log_q_hist(z, t, beta_prev);
    if (lp[z] != kNegInf) terms_p.push_back(lp[z]);
    if (l1[z] != kNegInf) terms_1.push_back(l1[z]);
    if (l2[z] != kNegInf) terms_2.push_back(l2[z]);
  }
  const double zp = logsumexp(terms_p), z1 = logsumexp(terms_1), z2 = logsumexp(terms_2);

  double direct = 0.0, route_norm = 0.0, num = 0.0, den = 0.0;
  for (std::uint64_t z = 1; z < table.n_nodes; ++z) {
    const double p = lp[z] == kNegInf ? 0.0 : std::exp(lp[z] - zp);
    const double q1 = l1[z] == kNegInf ? 0.0 : std::exp(l1[z] - z1);
    const double q2 = l2[z] == kNegInf ? 0.0 : std::exp(l2[z] - z2);
    direct += p * f[z];

    const double qmix = alpha * q1 + (1.0 - alpha) * q2;
    if (qmix > 0.0) {
      route_norm += (alpha * q1 + (1.0 - alpha) * q2) * f[z] * p / qmix;
      // Self-normalized route with unnormalized target and mixture.
      const double lmix = table.log_q_mix(z, t, alpha, beta_prev);
      const double ratio = std::exp(table.log_target(z, t, beta) - lmix);
      const double mass = alpha * q1 + (1.0 - alpha) * q2;
      num += mass * f[z] * ratio;
      den += mass * ratio;
    }
  }
  const double route_self = num / den;
  return std::max(std::abs(direct - route_norm), std::abs(direct - route_self));
}

double mis_identity_residual(std::span<const double> target_unnorm,
                             const std::vector<std::vector<double>>& proposals_unnorm,
                             std::span<const double> alphas, std::span<const double> f) {
  const std::size_t s = target_unnorm.size();
  const std::size_t m = proposals_unnorm.size();
  double zt = 0.0;
  for (double v : target_unnorm) zt += v;
  std::vector<double> zq(m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (double v : proposals_unnorm[i]) zq[i] += v;

  double direct = 0.0;
  for (std::size_t x = 0; x < s; ++x) direct += (target_unnorm[x] / zt) * f[x];

  // Normalized identity: sum_i E_{q_i}[f * alpha_i * P / q_mix].
  double route_norm = 0.0;
  for (std::size_t x = 0; x < s; ++x) {
    double qmix = 0.0;
    for (std::size_t i = 0; i < m; ++i) qmix += alphas[i] * proposals_unnorm[i][x] / zq[i];
    if (qmix <= 0.0) continue;
    const double p = target_unnorm[x] / zt;
    for (std::size_t i = 0; i < m; ++i)
      route_norm += (proposals_unnorm[i][x] / zq[i]) * f[x] * alphas[i] * p / qmix;
  }

  // Self-normalized identity on unnormalized quantities. The unnormalized
  // mixture requires the proposals to share one normalizer, so rescale each
  // proposal to sum to 1 and use the raw target.
  double num = 0.0, den = 0.0;
  for (std::size_t x = 0; x < s; ++x) {
    double qmix_u = 0.0;
    for (std::size_t i = 0; i < m; ++i) qmix_u += alphas[i] * proposals_unnorm[i][x] / zq[i];
    if (qmix_u <= 0.0) continue;
    const double ratio = target_unnorm[x] / qmix_u;
    for (std::size_t i = 0; i < m; ++i) {
      const double qi = proposals_unnorm[i][x] / zq[i];
      num += qi * f[x] * alphas[i] * ratio;
      den += qi * alphas[i] * ratio;
    }
  }
  const double route_self = num / den;
  return std::max(std::abs(direct - route_norm), std::abs(direct - route_self));
}

bool blocker_predicate(const OracleTable& table, int round, std::size_t top_m) {
  std::vector<std::uint64_t> eligible;
  for (std::uint64_t z = 1; z < table.n_nodes; ++z)
    if (table.len[z] >= 1 && table.len[z] <= round) eligible.push_back(z);
  if (eligible.size() <= top_m) return false;
  std::sort(eligible.begin(), eligible.end(), [&](std::uint64_t a, std::uint64_t b) {
    if (table.prm[a] != table.prm[b]) return table.prm[a] > table.prm[b];
    return a < b;
  });
  for (std::size_t i = 0; i < top_m; ++i)
    if (table.sigma[eligible[i]] > 0.0) return false;
  for (std::size_t i = top_m; i < eligible.size(); ++i)
    if (table.sigma[eligible[i]] > 0.0) return true;
  return false;
}

std::vector<ConvergencePoint> convergence_probe(const SyntheticTreeEnv& env, Method method,
                                                std::span<const int> n_values, int t,
                                                std::span<const double> f, int trials,
                                                std::uint64_t seed,
                                                const ScheduleParams& schedule) {
  const OracleTable table = enumerate(env);
  SyntheticTreeEnv env_copy = env;  // expansion is pure; one shared copy suffices
  std::vector<ConvergencePoint> out;
  for (int n : n_values) {
    ConvergencePoint pt;
    pt.n = n;
    std::vector<double> estimates, errors;
    estimates.reserve(static_cast<std::size_t>(trials));
    double beta_acc = 0.0;
    for (int trial = 0; trial < trials; ++trial) {
      SearchConfig cfg;
      cfg.method = method;
      cfg.child_budget = n;
      cfg.parent_budget = n;
      cfg.horizon = t;
      cfg.schedule = schedule;
      cfg.rng_seed = derive_seed(seed, "probe", static_cast<std::uint64_t>(n),
                                 static_cast<std::uint64_t>(trial));
      SearchRun run = run_search(cfg, env_copy);

      double wsum = 0.0, fsum = 0.0;
      for (const auto& e : run.pool.entries) {
        wsum += e.weight;
        fsum += e.weight * f[run.arena.at(e.id).backend_node];
      }
      const double estimate = fsum / wsum;
      const double beta_t = powered_family(method) ? run.betas.at(static_cast<std::size_t>(t))
                                                   : 1.0;
      beta_acc += beta_t;
      const double reference =
          frontier_only(method)
              ? table.target_expectation(f, t, beta_t, t + 1, t + 1)
              : table.target_expectation(f, t, beta_t);
      estimates.push_back(estimate);
      errors.push_back(std::abs(estimate - reference));
    }
    double mean_err = 0.0;
    for (double e : errors) mean_err += e;
    mean_err /= static_cast<double>(errors.size());
    double mean_est = 0.0;
    for (double e : estimates) mean_est += e;
    mean_est /= static_cast<double>(estimates.size());
    double var = 0.0;
    for (double e : estimates) var += (e - mean_est) * (e - mean_est);
    if (estimates.size() > 1) var /= static_cast<double>(estimates.size() - 1);
    pt.mean_abs_error = mean_err;
    pt.estimator_std = std::sqrt(var);
    pt.mean_beta = beta_acc / static_cast<double>(trials);
    out.push_back(pt);
  }
  return out;
}

nlohmann::json export_table(const OracleTable& table) {
  nlohmann::json prefixes = nlohmann::json::array();
  for (std::uint64_t z = 1; z < table.n_nodes; ++z) {
    prefixes.push_back({{"node", z},
                        {"parent", table.parent[z]},
                        {"len", table.len[z]},
                        {"log_p", table.log_p[z]},
                        {"prm", table.prm[z]},
                        {"sigma", table.sigma[z]}});
  }
  return nlohmann::json{{"branching", table.branching},
                        {"depth", table.depth},
                        {"n_nodes", table.n_nodes},
                        {"prefixes", std::move(prefixes)}};
}

namespace {

SyntheticEnvConfig random_env_config(std::uint64_t seed, int max_b = 4, int max_d = 6) {
  RandomStream rs(derive_seed(seed, "env-config"));
  SyntheticEnvConfig cfg;
  cfg.branching = 2 + static_cast<int>(rs.next_below(static_cast<std::uint64_t>(max_b - 1)));
  cfg.depth = 2 + static_cast<int>(rs.next_below(static_cast<std::uint64_t>(max_d - 1)));
  cfg.seed = derive_seed(seed, "env-seed");
  cfg.kernel = KernelKind::Seeded;
  cfg.kernel_min = 0.15 + 0.5 * rs.next_double();
  cfg.correct_fraction = 0.1 + 0.8 * rs.next_double();
  cfg.noise.weight = 0.5 + 0.5 * rs.next_double();
  cfg.noise.seed = derive_seed(seed, "noise-seed");
  return cfg;
}

bool report(std::ostream& out, const char* name, bool ok) {
  out << (ok ? "[ ok ] " : "[FAIL] ") << name << "\n";
  return ok;
}

}  // namespace

int run_property_suite(std::ostream& out, std::uint64_t seed) {
  int failures = 0;
  RandomStream rs(derive_seed(seed, "suite"));

  // Kernel rows normalize exactly.
  {
    bool ok = true;
    for (int i = 0; i < 5 && ok; ++i) {
      SyntheticTreeEnv env(random_env_config(derive_seed(seed, "norm", i)));
      for (std::uint64_t n = 0; n < env.first_node_at_depth(env.max_depth()); ++n) {
        double s = 0.0;
        for (int j = 0; j < env.branching(); ++j) s += env.step_prob(n, j);
        if (std::abs(s - 1.0) > 1e-12) ok = false;
      }
    }
    if (!report(out, "expansion kernel rows sum to 1", ok)) ++failures;
  }

  // Normalized target sums to 1 and sigma is additive.
  {
    bool ok = true;
    for (int i = 0; i < 5 && ok; ++i) {
      SyntheticTreeEnv env(random_env_config(derive_seed(seed, "target", i)));
      OracleTable tb = enumerate(env);
      const int t = std::min(2, env.max_depth() - 1);
      const double beta = 0.5 + 4.0 * rs.next_double();
      std::vector<double> terms;
      for (std::uint64_t z = 1; z < tb.n_nodes; ++z) {
        const double l = tb.log_target(z, t, beta);
        if (l != kNegInf) terms.push_back(l);
      }
      const double lz = logsumexp(terms);
      double total = 0.0;
      for (double l : terms) total += std::exp(l - lz);
      if (std::abs(total - 1.0) > 1e-12) ok = false;
      for (std::uint64_t z = 1; z < tb.n_nodes; ++z) {
        if (tb.len[z] >= env.max_depth()) continue;
        double s = 0.0;
        for (int j = 0; j < env.branching(); ++j)
          s += tb.sigma[z * static_cast<std::uint64_t>(env.branching()) + 1 +
                        static_cast<std::uint64_t>(j)];
        if (std::abs(s - tb.sigma[z]) > 1e-14 * std::max(1.0, std::abs(tb.sigma[z])))
          ok = false;
        if (std::abs(tb.sigma[z] - env.sigma(z)) >
            1e-12 * std::max(1.0, std::abs(env.sigma(z))))
          ok = false;
      }
    }
    if (!report(out, "powered target normalizes; sigma additive", ok)) ++failures;
  }

  // Generated-child and retained-history proposals share one normalizer.
  {
    bool ok = true;
    for (int i = 0; i < 5 && ok; ++i) {
      SyntheticTreeEnv env(random_env_config(derive_seed(seed, "shared", i)));
      OracleTable tb = enumerate(env);
      for (int t = 1; t < env.max_depth() && ok; ++t) {
        const double beta_prev = 8.0 * rs.next_double();
        std::vector<double> tn, th;
        for (std::uint64_t z = 1; z < tb.n_nodes; ++z) {
          const double a = tb.log_q_new(z, t, beta_prev);
          const double b = tb.log_q_hist(z, t, beta_prev);
          if (a != kNegInf) tn.push_back(a);
          if (b != kNegInf) th.push_back(b);
        }
        const double zn = logsumexp(tn), zh = logsumexp(th);
        const double zz = tb.log_normalizer(t, beta_prev);
        if (std::abs(zn - zz) > 1e-10 || std::abs(zh - zz) > 1e-10) ok = false;
      }
    }
    if (!report(out, "proposal pair shares the normalizer", ok)) ++failures;
  }

  // Weight factor equals the enumerated target-to-mixture ratio.
  {
    bool ok = true;
    for (int i = 0; i < 5 && ok; ++i) {
      SyntheticTreeEnv env(random_env_config(derive_seed(seed, "factor", i)));
      OracleTable tb = enumerate(env);
      for (int t = 1; t <= std::min(3, env.max_depth() - 1) && ok; ++t) {
        const double alpha = 0.1 + 0.8 * rs.next_double();
        const double beta_prev = 6.0 * rs.next_double();
        const double beta = beta_prev + 5.0 * rs.next_double();
        for (std::uint64_t z = 1; z < tb.n_nodes; ++z) {
          if (tb.len[z] < 1 || tb.len[z] > t + 1) continue;
          MixtureWeightInputs in;
          in.prm = tb.prm[z];
          in.parent_prm = tb.prm[tb.parent[z]];
          in.len = tb.len[z];
          in.round = t;
          in.alpha = alpha;
          in.beta_prev = beta_prev;
          in.beta = beta;
          const double lhs = correction_factor_log(in);
          const double rhs = tb.log_target(z, t, beta) - tb.log_q_mix(z, t, alpha, beta_prev);
          if (std::abs(lhs - rhs) > 1e-10) ok = false;
        }
      }
    }
    if (!report(out, "weight factor matches enumerated ratio", ok)) ++failures;
  }

  // Exact-expectation mixture identity on environment proposals.
  {
    bool ok = true;
    for (int i = 0; i < 5 && ok; ++i) {
      SyntheticTreeEnv env(random_env_config(derive_seed(seed, "mis", i)));
      OracleTable tb = enumerate(env);
      const int t = std::min(2, env.max_depth() - 1);
      std::vector<double> f(tb.n_nodes);
      for (auto& v : f) v = 2.0 * rs.next_double() - 1.0;
      const double alpha = 0.1 + 0.8 * rs.next_double();
      const double beta_prev = 4.0 * rs.next_double();
      const double beta = beta_prev + 3.0 * rs.next_double();
      if (mis_identity_check(tb, f, alpha, beta_prev, beta, t) > 1e-12) ok = false;
    }
    if (!report(out, "mixture-proposal identity (environment)", ok)) ++failures;
  }

  // Blocker predicate degenerate cases.
  {
    SyntheticEnvConfig cfg = random_env_config(derive_seed(seed, "blocker"));
    cfg.noise.weight = 1.0;  // faithful scoring cannot block
    cfg.correct_fraction = 0.5;
    cfg.force_correct_leaf = true;
    SyntheticTreeEnv env(cfg);
    OracleTable tb = enumerate(env);
    bool ok = !blocker_predicate(tb, 1, 2);
    ok = ok && !blocker_predicate(tb, 1, tb.n_nodes);  // top set swallows the pool
    if (!report(out, "blocker predicate degenerate cases", ok)) ++failures;
  }

  return failures;
}

}  // namespace poolsearch::oracle
