#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "poolsearch/harness.hpp"
#include "poolsearch/oracle.hpp"

namespace {

int cmd_run(const std::string& config_path, const std::string& output_dir,
            std::uint64_t seed_override, bool has_seed_override,
            const std::vector<std::string>& method_filter,
            const std::vector<int>& n_filter) {
  auto cfg = poolsearch::harness::load_config(config_path);
  if (!output_dir.empty()) cfg.output_dir = output_dir;
  if (has_seed_override) cfg.master_seed = seed_override;
  if (!method_filter.empty()) {
    std::vector<poolsearch::harness::MethodEntry> kept;
    for (auto& m : cfg.methods)
      for (const auto& want : method_filter)
        if (m.label == want) kept.push_back(m);
    if (kept.empty()) {
      std::cerr << "method filter matched nothing\n";
      return 2;
    }
    cfg.methods = std::move(kept);
  }
  if (!n_filter.empty()) cfg.budget_sweep = n_filter;

  const auto result = poolsearch::harness::run_experiment(cfg);
  int failures = 0;
  for (const auto& r : result.records)
    if (!r.error.empty()) ++failures;
  std::cout << "wrote " << result.records.size() << " records ("
            << failures << " failed) to " << cfg.output_dir << "\n";
  for (const auto& a : result.aggregates)
    std::cout << a.method << " N=" << a.n << " acc=" << a.acc_mean << " +/- "
              << a.acc_std << " units=" << a.units_mean << "\n";
  return 0;
}

int cmd_curves(const std::string& records, const std::string& output) {
  poolsearch::harness::emit_curves(records, output);
  std::cout << "wrote " << output << "\n";
  return 0;
}

int cmd_validate(const std::string& config_path) {
  try {
    auto cfg = poolsearch::harness::load_config(config_path);
    std::cout << "ok: " << cfg.methods.size() << " methods, " << cfg.problems.size()
              << " problems, " << cfg.seeds.size() << " seeds\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return 1;
  }
}

int cmd_oracle_check(std::uint64_t seed, const std::string& export_path) {
  if (!export_path.empty()) {
    poolsearch::SyntheticEnvConfig cfg;
    cfg.branching = 3;
    cfg.depth = 4;
    cfg.seed = seed;
    cfg.noise.weight = 0.8;
    cfg.noise.seed = seed + 1;
    poolsearch::SyntheticTreeEnv env(cfg);
    const auto table = poolsearch::oracle::enumerate(env);
    std::ofstream f(export_path);
    f << poolsearch::oracle::export_table(table).dump(2) << "\n";
    std::cout << "exported table to " << export_path << "\n";
  }
  const int failures = poolsearch::oracle::run_property_suite(std::cout, seed);
  std::cout << (failures == 0 ? "all oracle properties hold\n"
                              : "oracle property failures: " + std::to_string(failures) + "\n");
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"persistent-pool search over scored reasoning prefixes"};
  app.require_subcommand(1);

  std::string config_path, output_dir, records_path, curves_path, export_path;
  std::uint64_t seed = 0;
  std::vector<std::string> method_filter;
  std::vector<int> n_filter;

  auto* run = app.add_subcommand("run", "run an experiment sweep");
  run->add_option("--config", config_path, "experiment config JSON")->required();
  run->add_option("--output-dir", output_dir, "override the output directory");
  auto* seed_opt = run->add_option("--seed", seed, "override the master seed");
  run->add_option("--method", method_filter, "restrict to these method labels");
  run->add_option("--n", n_filter, "restrict the budget sweep to these N values");

  auto* curves = app.add_subcommand("curves", "emit accuracy-vs-compute curve CSV");
  curves->add_option("--records", records_path, "records.csv produced by run")->required();
  curves->add_option("--output", curves_path, "output CSV path")->required();

  auto* validate = app.add_subcommand("validate-config", "validate an experiment config");
  validate->add_option("--config", config_path, "experiment config JSON")->required();

  auto* oracle_check = app.add_subcommand("oracle-check", "run the oracle property suite");
  oracle_check->add_option("--seed", seed, "randomization seed");
  oracle_check->add_option("--export", export_path, "also export a sample table JSON");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed())
      return cmd_run(config_path, output_dir, seed, seed_opt->count() > 0, method_filter,
                     n_filter);
    if (curves->parsed()) return cmd_curves(records_path, curves_path);
    if (validate->parsed()) return cmd_validate(config_path);
    if (oracle_check->parsed()) return cmd_oracle_check(seed, export_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
