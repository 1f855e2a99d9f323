#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <memory>
#include <string>

#include "poolsearch/engine.hpp"
#include "poolsearch/oracle.hpp"
#include "poolsearch/pbsmc.hpp"
#include "poolsearch/synthetic_env.hpp"

namespace py = pybind11;
using namespace poolsearch;

namespace {

py::dict run_and_summarize(const SearchConfig& cfg, SyntheticTreeEnv& env) {
  SearchRun run = run_search(cfg, env);
  FinalAnswer ans = finalize(run);

  py::list pool_sizes;
  for (const auto& tr : run.rounds) pool_sizes.append(tr.pool.size());
  py::list betas;
  for (double b : run.betas) betas.append(b);

  py::dict out;
  out["answer"] = ans.answer;
  out["valid"] = ans.valid;
  auto truth = env.ground_truth();
  out["correct"] = ans.valid && truth && ans.answer == *truth;
  out["generation_units"] = run.ledger.new_generation_units;
  out["backtrack_units"] = run.ledger.backtrack_recompute_units;
  out["scorer_calls"] = run.ledger.scorer_calls;
  out["rounds_run"] = run.rounds_run;
  out["pool_sizes"] = pool_sizes;
  out["betas"] = betas;
  out["final_pool_size"] = run.pool.size();
  return out;
}

}  // namespace

PYBIND11_MODULE(poolsearch, m) {
  m.doc() = "persistent-pool stochastic search over scored reasoning prefixes";

  py::enum_<Method>(m, "Method")
      .value("Beam", Method::Beam)
      .value("StandardSMC", Method::StandardSMC)
      .value("GreedySelection", Method::GreedySelection)
      .value("SPS", Method::SPS)
      .value("PowerSMC", Method::PowerSMC)
      .value("BacktrackSMC", Method::BacktrackSMC)
      .value("PowerBacktrackSMC", Method::PowerBacktrackSMC)
      .value("BestOfN", Method::BestOfN)
      .value("SelfConsistency", Method::SelfConsistency);

  py::class_<ScheduleParams>(m, "ScheduleParams")
      .def(py::init<>())
      .def_readwrite("gamma", &ScheduleParams::gamma)
      .def_readwrite("g_min", &ScheduleParams::g_min)
      .def_readwrite("g_max", &ScheduleParams::g_max)
      .def_readwrite("beta0", &ScheduleParams::beta0);

  py::class_<SearchConfig>(m, "SearchConfig")
      .def(py::init<>())
      .def_readwrite("method", &SearchConfig::method)
      .def_readwrite("child_budget", &SearchConfig::child_budget)
      .def_readwrite("parent_budget", &SearchConfig::parent_budget)
      .def_readwrite("horizon", &SearchConfig::horizon)
      .def_readwrite("rng_seed", &SearchConfig::rng_seed)
      .def_readwrite("temperature", &SearchConfig::temperature)
      .def_readwrite("schedule", &SearchConfig::schedule)
      .def_readwrite("fixed_subpool_ratio", &SearchConfig::fixed_subpool_ratio)
      .def_readwrite("beam_cumulative_mean", &SearchConfig::beam_cumulative_mean)
      .def_readwrite("finalize_from_final_pool", &SearchConfig::finalize_from_final_pool);

  py::class_<SyntheticEnvConfig>(m, "SyntheticEnvConfig")
      .def(py::init<>())
      .def_readwrite("branching", &SyntheticEnvConfig::branching)
      .def_readwrite("depth", &SyntheticEnvConfig::depth)
      .def_readwrite("seed", &SyntheticEnvConfig::seed)
      .def_readwrite("kernel_min", &SyntheticEnvConfig::kernel_min)
      .def_readwrite("correct_fraction", &SyntheticEnvConfig::correct_fraction)
      .def_readwrite("force_correct_leaf", &SyntheticEnvConfig::force_correct_leaf)
      .def_property(
          "noise_weight", [](const SyntheticEnvConfig& c) { return c.noise.weight; },
          [](SyntheticEnvConfig& c, double w) { c.noise.weight = w; })
      .def_property(
          "noise_seed", [](const SyntheticEnvConfig& c) { return c.noise.seed; },
          [](SyntheticEnvConfig& c, std::uint64_t s) { c.noise.seed = s; });

  py::class_<SyntheticTreeEnv, std::shared_ptr<SyntheticTreeEnv>>(m, "SyntheticTreeEnv")
      .def(py::init<SyntheticEnvConfig>())
      .def_property_readonly("node_count", &SyntheticTreeEnv::node_count)
      .def_property_readonly("branching", &SyntheticTreeEnv::branching)
      .def_property_readonly("depth", &SyntheticTreeEnv::max_depth)
      .def("sigma", &SyntheticTreeEnv::sigma)
      .def("score", &SyntheticTreeEnv::score_of_node)
      .def("log_prefix_prob", &SyntheticTreeEnv::log_prefix_prob)
      .def("ground_truth", [](const SyntheticTreeEnv& e) { return *e.ground_truth(); });

  py::class_<BlockerEnvParams>(m, "BlockerEnvParams")
      .def(py::init<>())
      .def_readwrite("branching", &BlockerEnvParams::branching)
      .def_readwrite("depth", &BlockerEnvParams::depth)
      .def_readwrite("seed", &BlockerEnvParams::seed)
      .def_readwrite("over_fraction", &BlockerEnvParams::over_fraction)
      .def_readwrite("over_bias", &BlockerEnvParams::over_bias)
      .def_readwrite("under_bias", &BlockerEnvParams::under_bias)
      .def_readwrite("traps_at_all_depths", &BlockerEnvParams::traps_at_all_depths)
      .def_readwrite("hidden_corridor", &BlockerEnvParams::hidden_corridor)
      .def_readwrite("corridor_entry_prob", &BlockerEnvParams::corridor_entry_prob)
      .def_readwrite("corridor_step_prob", &BlockerEnvParams::corridor_step_prob)
      .def_readwrite("corridor_bias", &BlockerEnvParams::corridor_bias)
      .def_readwrite("carrier_bias", &BlockerEnvParams::carrier_bias)
      .def_readwrite("check_round", &BlockerEnvParams::check_round)
      .def_readwrite("top_m", &BlockerEnvParams::top_m);

  py::class_<BlockerEnv>(m, "BlockerEnv")
      .def_readonly("env", &BlockerEnv::env)
      .def_readonly("flagged_node", &BlockerEnv::flagged_node)
      .def_readonly("blocker_nodes", &BlockerEnv::blocker_nodes)
      .def_readonly("corridor", &BlockerEnv::corridor);

  m.def("make_blocker_env", &make_blocker_env,
        "construct an oracle-verified blocker environment");

  m.def("run_search", &run_and_summarize, py::arg("config"), py::arg("env"),
        "run one search and return a metrics summary");

  m.def("alpha_at",
        [](double gamma, double g_min, double g_max, int t, int horizon) {
          ScheduleParams p;
          p.gamma = gamma;
          p.g_min = g_min;
          p.g_max = g_max;
          return alpha_at(p, t, horizon);
        },
        py::arg("gamma") = 9.0, py::arg("g_min") = 0.4, py::arg("g_max") = 1.0,
        py::arg("t") = 1, py::arg("horizon") = 30);
  m.def("power_step_delta", &power_step_delta, py::arg("sigma"), py::arg("pool_size"),
        py::arg("gamma") = 9.0);
  m.def("concentration_statistic", [](const std::vector<double>& scores) {
    return concentration_statistic(scores);
  });
  m.def("correction_factor",
        [](double prm, double parent_prm, int len, int round, double alpha,
           double beta_prev, double beta) {
          MixtureWeightInputs in;
          in.prm = prm;
          in.parent_prm = parent_prm;
          in.len = len;
          in.round = round;
          in.alpha = alpha;
          in.beta_prev = beta_prev;
          in.beta = beta;
          return correction_factor(in);
        },
        py::arg("prm"), py::arg("parent_prm"), py::arg("len"), py::arg("round"),
        py::arg("alpha"), py::arg("beta_prev"), py::arg("beta"));

  m.def("oracle_sigma", [](const SyntheticTreeEnv& env) {
    auto table = oracle::enumerate(env);
    return table.sigma;
  });
  m.def("blocker_predicate", [](const SyntheticTreeEnv& env, int round, std::size_t top_m) {
    auto table = oracle::enumerate(env);
    return oracle::blocker_predicate(table, round, top_m);
  });
  m.def("mis_identity_residual",
        [](const std::vector<double>& target,
           const std::vector<std::vector<double>>& proposals,
           const std::vector<double>& alphas, const std::vector<double>& f) {
          return oracle::mis_identity_residual(target, proposals, alphas, f);
        });
}
