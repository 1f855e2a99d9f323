#include "poolsearch/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "poolsearch/errors.hpp"
#include "poolsearch/http_backend.hpp"
#include "poolsearch/synthetic_env.hpp"

namespace poolsearch::harness {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t cell_seed(std::uint64_t master, const std::string& method, int n,
                        std::uint64_t seed, const std::string& problem_id) {
  return derive_seed(master, method, static_cast<std::uint64_t>(n), seed,
                     fnv1a(problem_id));
}

MetricsRecord run_cell(const MethodEntry& method, int n, std::uint64_t seed,
                       const Problem& problem, std::uint64_t master_seed) {
  MetricsRecord rec;
  rec.method = method.label;
  rec.n = n;
  rec.seed = seed;
  rec.problem_id = problem.id;

  SearchConfig cfg = method.base;
  if (cfg.child_budget != n) {
    // Budget sweep scales M with N when the base config tied them together.
    if (cfg.parent_budget == cfg.child_budget) cfg.parent_budget = n;
    cfg.child_budget = n;
  }
  cfg.rng_seed = cell_seed(master_seed, method.label, n, seed, problem.id);

  const auto start = std::chrono::steady_clock::now();
  try {
    SearchRun run = run_search(cfg, *problem.backend);
    FinalAnswer ans = finalize(run);
    rec.valid = ans.valid;
    rec.answer = ans.answer;
    const auto truth = problem.answer ? problem.answer : problem.backend->ground_truth();
    rec.correct = ans.valid && truth && ans.answer == *truth;
    rec.generation_units = run.ledger.new_generation_units;
    rec.tokens = run.ledger.generated_tokens;
    rec.backtrack_units = run.ledger.backtrack_recompute_units;
    rec.scorer_calls = run.ledger.scorer_calls;
    rec.rounds_run = run.rounds_run;
    for (const auto& tr : run.rounds) rec.pool_sizes.push_back(static_cast<int>(tr.pool.size()));
  } catch (const std::exception& e) {
    rec.error = e.what();
  }
  rec.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - start)
                    .count();
  return rec;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, bool write_files) {
  if (cfg.problems.empty()) throw ConfigError("no problems configured");
  if (cfg.methods.empty()) throw ConfigError("no methods configured");
  if (cfg.seeds.empty()) throw ConfigError("seed list must be nonempty");

  struct Cell {
    const MethodEntry* method;
    int n;
    std::uint64_t seed;
    const Problem* problem;
  };
  std::vector<Cell> cells;
  for (const auto& m : cfg.methods) {
    std::vector<int> ns = cfg.budget_sweep;
    if (ns.empty()) ns.push_back(m.base.child_budget);
    for (int n : ns)
      for (std::uint64_t seed : cfg.seeds)
        for (const auto& p : cfg.problems) cells.push_back({&m, n, seed, &p});
  }

  std::vector<MetricsRecord> records(cells.size());
  std::mutex next_mutex;
  std::size_t next = 0;
  auto worker = [&] {
    for (;;) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> lock(next_mutex);
        if (next >= cells.size()) return;
        i = next++;
      }
      const Cell& c = cells[i];
      records[i] = run_cell(*c.method, c.n, c.seed, *c.problem, cfg.master_seed);
    }
  };
  const int nworkers = std::max(1, cfg.workers);
  if (nworkers == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int w = 0; w < nworkers; ++w) threads.emplace_back(worker);
    for (auto& th : threads) th.join();
  }

  std::sort(records.begin(), records.end(), [](const MetricsRecord& a, const MetricsRecord& b) {
    if (a.method != b.method) return a.method < b.method;
    if (a.n != b.n) return a.n < b.n;
    if (a.seed != b.seed) return a.seed < b.seed;
    return a.problem_id < b.problem_id;
  });

  ExperimentResult out;
  out.records = std::move(records);
  out.aggregates = aggregate(out.records);

  if (write_files) {
    fs::create_directories(cfg.output_dir);
    write_records_csv((fs::path(cfg.output_dir) / "records.csv").string(), out.records);
    write_records_jsonl((fs::path(cfg.output_dir) / "records.jsonl").string(), out.records);
    write_aggregates_csv((fs::path(cfg.output_dir) / "aggregates.csv").string(),
                         out.aggregates);
  }
  return out;
}

std::vector<AggregateRow> aggregate(const std::vector<MetricsRecord>& records) {
  struct Key {
    std::string method;
    int n;
    bool operator<(const Key& o) const {
      return method != o.method ? method < o.method : n < o.n;
    }
  };
  std::map<Key, std::vector<const MetricsRecord*>> groups;
  for (const auto& r : records) groups[{r.method, r.n}].push_back(&r);

  std::vector<AggregateRow> rows;
  for (const auto& [key, recs] : groups) {
    AggregateRow row;
    row.method = key.method;
    row.n = key.n;
    row.records = static_cast<int>(recs.size());

    // Per-seed accuracy means, then mean +/- sample std over seeds.
    std::map<std::uint64_t, std::pair<double, int>> per_seed;
    for (const auto* r : recs) {
      auto& [acc, cnt] = per_seed[r->seed];
      acc += r->correct ? 1.0 : 0.0;
      cnt += 1;
      row.units_mean += static_cast<double>(r->generation_units);
      row.tokens_mean += static_cast<double>(r->tokens);
      row.backtrack_mean += static_cast<double>(r->backtrack_units);
    }
    row.units_mean /= row.records;
    row.tokens_mean /= row.records;
    row.backtrack_mean /= row.records;

    std::vector<double> seed_means;
    for (const auto& [seed, acc_cnt] : per_seed)
      seed_means.push_back(acc_cnt.first / acc_cnt.second);
    double mean = 0.0;
    for (double v : seed_means) mean += v;
    mean /= static_cast<double>(seed_means.size());
    double var = 0.0;
    for (double v : seed_means) var += (v - mean) * (v - mean);
    if (seed_means.size() > 1) var /= static_cast<double>(seed_means.size() - 1);
    row.acc_mean = mean;
    row.acc_std = seed_means.size() > 1 ? std::sqrt(var) : 0.0;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<CurvePoint> curves_from_records(const std::vector<MetricsRecord>& records) {
  std::vector<CurvePoint> points;
  for (const auto& row : aggregate(records)) {
    CurvePoint p;
    p.method = row.method;
    p.n = row.n;
    p.mean_generation_units = row.units_mean;
    p.mean_tokens = row.tokens_mean;
    p.mean_accuracy = row.acc_mean;
    p.std_accuracy = row.acc_std;
    points.push_back(std::move(p));
  }
  std::sort(points.begin(), points.end(), [](const CurvePoint& a, const CurvePoint& b) {
    return a.method != b.method ? a.method < b.method : a.n < b.n;
  });
  return points;
}

namespace {

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string join_sizes(const std::vector<int>& sizes) {
  std::string out;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (i) out += '|';
    out += std::to_string(sizes[i]);
  }
  return out;
}

void atomic_write(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + tmp);
    f << content;
  }
  fs::rename(tmp, path);
}

}  // namespace

void write_records_csv(const std::string& path, const std::vector<MetricsRecord>& records) {
  std::ostringstream out;
  out << "method,n,seed,problem,correct,valid,answer,generation_units,tokens,"
         "backtrack_units,scorer_calls,rounds,wall_ms,pool_sizes,error\n";
  for (const auto& r : records) {
    out << csv_escape(r.method) << ',' << r.n << ',' << r.seed << ','
        << csv_escape(r.problem_id) << ',' << (r.correct ? 1 : 0) << ','
        << (r.valid ? 1 : 0) << ',' << csv_escape(r.answer) << ','
        << r.generation_units << ',' << r.tokens << ',' << r.backtrack_units << ','
        << r.scorer_calls << ',' << r.rounds_run << ',' << r.wall_ms << ','
        << csv_escape(join_sizes(r.pool_sizes)) << ',' << csv_escape(r.error) << '\n';
  }
  atomic_write(path, out.str());
}

void write_records_jsonl(const std::string& path, const std::vector<MetricsRecord>& records) {
  std::ostringstream out;
  for (const auto& r : records) {
    json j = {{"method", r.method},
              {"n", r.n},
              {"seed", r.seed},
              {"problem", r.problem_id},
              {"correct", r.correct},
              {"valid", r.valid},
              {"answer", r.answer},
              {"generation_units", r.generation_units},
              {"tokens", r.tokens},
              {"backtrack_units", r.backtrack_units},
              {"scorer_calls", r.scorer_calls},
              {"rounds", r.rounds_run},
              {"wall_ms", r.wall_ms},
              {"pool_sizes", r.pool_sizes},
              {"error", r.error}};
    out << j.dump() << '\n';
  }
  atomic_write(path, out.str());
}

void write_aggregates_csv(const std::string& path, const std::vector<AggregateRow>& rows) {
  std::ostringstream out;
  out << "method,n,records,acc_mean,acc_std,units_mean,tokens_mean,backtrack_mean\n";
  for (const auto& r : rows) {
    out << csv_escape(r.method) << ',' << r.n << ',' << r.records << ',' << r.acc_mean
        << ',' << r.acc_std << ',' << r.units_mean << ',' << r.tokens_mean << ','
        << r.backtrack_mean << '\n';
  }
  atomic_write(path, out.str());
}

std::vector<MetricsRecord> read_records_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw MissingMetrics("records file not found: " + path);
  std::vector<MetricsRecord> out;
  std::string line;
  bool header = true;
  while (std::getline(f, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    const auto cols = csv_split(line);
    if (cols.size() < 15) continue;
    MetricsRecord r;
    r.method = cols[0];
    r.n = std::stoi(cols[1]);
    r.seed = std::stoull(cols[2]);
    r.problem_id = cols[3];
    r.correct = cols[4] == "1";
    r.valid = cols[5] == "1";
    r.answer = cols[6];
    r.generation_units = std::stoll(cols[7]);
    r.tokens = std::stoll(cols[8]);
    r.backtrack_units = std::stoll(cols[9]);
    r.scorer_calls = std::stoll(cols[10]);
    r.rounds_run = std::stoi(cols[11]);
    r.wall_ms = std::stod(cols[12]);
    std::stringstream sizes(cols[13]);
    std::string tok;
    while (std::getline(sizes, tok, '|'))
      if (!tok.empty()) r.pool_sizes.push_back(std::stoi(tok));
    r.error = cols[14];
    out.push_back(std::move(r));
  }
  return out;
}

void emit_curves(const std::string& records_csv_path, const std::string& out_csv_path) {
  const auto records = read_records_csv(records_csv_path);
  const auto points = curves_from_records(records);
  std::ostringstream out;
  out << "method,n,mean_generation_units,mean_tokens,mean_accuracy,std_accuracy\n";
  for (const auto& p : points) {
    out << csv_escape(p.method) << ',' << p.n << ',' << p.mean_generation_units << ','
        << p.mean_tokens << ',' << p.mean_accuracy << ',' << p.std_accuracy << '\n';
  }
  atomic_write(out_csv_path, out.str());
}

std::string interpolate_env(const std::string& value) {
  std::string out;
  std::size_t i = 0;
  while (i < value.size()) {
    if (value.compare(i, 6, "${ENV:") == 0) {
      const auto end = value.find('}', i);
      if (end != std::string::npos) {
        const std::string name = value.substr(i + 6, end - i - 6);
        if (const char* v = std::getenv(name.c_str())) out += v;
        i = end + 1;
        continue;
      }
    }
    out += value[i++];
  }
  return out;
}

namespace {

SearchConfig parse_method_config(const json& j) {
  SearchConfig cfg;
  const std::string name = j.at("method").get<std::string>();
  const auto method = method_from_name(name);
  if (!method) throw ConfigError("unknown method: " + name);
  cfg.method = *method;
  cfg.child_budget = j.value("N", 8);
  cfg.parent_budget = j.value("M", cfg.child_budget);
  cfg.horizon = j.value("T", 30);
  cfg.temperature = j.value("temperature", 0.7);
  cfg.schedule.gamma = j.value("gamma", 9.0);
  cfg.schedule.g_min = j.value("g_min", 0.4);
  cfg.schedule.g_max = j.value("g_max", 1.0);
  if (j.contains("fixed_subpool_ratio"))
    cfg.fixed_subpool_ratio = j["fixed_subpool_ratio"].get<double>();
  cfg.beam_cumulative_mean = j.value("beam_cumulative_mean", false);
  cfg.finalize_from_final_pool = j.value("finalize_from_final_pool", false);
  return canonicalize(cfg);
}

SyntheticEnvConfig parse_env_config(const json& j) {
  SyntheticEnvConfig cfg;
  cfg.branching = j.value("branching", 2);
  cfg.depth = j.value("depth", 3);
  cfg.seed = j.value("seed", 0ULL);
  cfg.kernel = j.value("kernel", std::string("seeded")) == "uniform" ? KernelKind::Uniform
                                                                     : KernelKind::Seeded;
  cfg.kernel_min = j.value("kernel_min", 0.25);
  cfg.correct_fraction = j.value("correct_fraction", 0.25);
  cfg.force_correct_leaf = j.value("force_correct_leaf", false);
  cfg.noise.weight = j.value("noise_weight", 1.0);
  cfg.noise.seed = j.value("noise_seed", 0ULL);
  if (j.contains("correct_subtree"))
    cfg.correct_subtree = j["correct_subtree"].get<std::uint64_t>();
  if (j.contains("biases"))
    for (const auto& [node, bias] : j["biases"].items())
      cfg.noise.node_bias[std::stoull(node)] = bias.get<double>();
  return cfg;
}

BlockerEnvParams parse_blocker_params(const json& j) {
  BlockerEnvParams p;
  p.branching = j.value("branching", p.branching);
  p.depth = j.value("depth", p.depth);
  p.seed = j.value("seed", p.seed);
  p.over_fraction = j.value("over_fraction", p.over_fraction);
  p.over_bias = j.value("over_bias", p.over_bias);
  p.under_bias = j.value("under_bias", p.under_bias);
  p.blocker_depth = j.value("blocker_depth", p.blocker_depth);
  p.traps_at_all_depths = j.value("traps_at_all_depths", p.traps_at_all_depths);
  p.hidden_corridor = j.value("hidden_corridor", p.hidden_corridor);
  p.corridor_entry_prob = j.value("corridor_entry_prob", p.corridor_entry_prob);
  p.corridor_step_prob = j.value("corridor_step_prob", p.corridor_step_prob);
  p.corridor_bias = j.value("corridor_bias", p.corridor_bias);
  p.carrier_bias = j.value("carrier_bias", p.carrier_bias);
  p.check_round = j.value("check_round", p.check_round);
  p.top_m = j.value("top_m", p.top_m);
  p.correct_fraction = j.value("correct_fraction", p.correct_fraction);
  p.noise_weight = j.value("noise_weight", p.noise_weight);
  p.kernel_min = j.value("kernel_min", p.kernel_min);
  return p;
}

HttpBackendConfig parse_http_config(const json& j) {
  HttpBackendConfig cfg;
  cfg.generator_url = interpolate_env(j.at("generator_url").get<std::string>());
  cfg.generator_model = j.value("generator_model", "");
  cfg.scorer_url = interpolate_env(j.at("scorer_url").get<std::string>());
  cfg.scorer_model = j.value("scorer_model", "");
  cfg.auth_env = j.value("auth_env", "");
  cfg.system_prompt = j.value("system_prompt", "");
  cfg.step_delimiter = j.value("step_delimiter", cfg.step_delimiter);
  cfg.answer_pattern = j.value("answer_pattern", cfg.answer_pattern);
  cfg.max_tokens = j.value("max_tokens", cfg.max_tokens);
  cfg.timeout_seconds = j.value("timeout_seconds", cfg.timeout_seconds);
  cfg.max_retries = j.value("max_retries", cfg.max_retries);
  cfg.max_concurrent_requests =
      j.value("max_concurrent_requests", cfg.max_concurrent_requests);
  return cfg;
}

json load_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open " + path);
  json j;
  try {
    f >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("invalid JSON in " + path + ": " + e.what());
  }
  return j;
}

}  // namespace

ExperimentConfig parse_config(const json& j, const std::string& base_dir) {
  ExperimentConfig cfg;
  cfg.master_seed = j.value("master_seed", 0ULL);
  cfg.output_dir = j.value("output_dir", std::string("out"));
  cfg.workers = j.value("workers", 1);
  for (const auto& s : j.value("seeds", json::array()))
    cfg.seeds.push_back(s.get<std::uint64_t>());
  for (const auto& n : j.value("budget_sweep", json::array()))
    cfg.budget_sweep.push_back(n.get<int>());

  if (!j.contains("methods") || !j["methods"].is_array() || j["methods"].empty())
    throw ConfigError("config requires a nonempty methods array");
  for (const auto& m : j["methods"]) {
    MethodEntry entry;
    entry.base = parse_method_config(m);
    entry.label = m.value("label", std::string(method_name(entry.base.method)));
    cfg.methods.push_back(std::move(entry));
  }

  if (!j.contains("problems")) throw ConfigError("config requires a problems section");
  const json& pj = j["problems"];
  const std::string type = pj.value("type", "synthetic");
  auto resolve = [&](const std::string& p) {
    fs::path fp(p);
    if (fp.is_relative()) fp = fs::path(base_dir) / fp;
    return fp.string();
  };
  if (type == "synthetic") {
    const json envs = load_json_file(resolve(pj.at("file").get<std::string>()));
    int idx = 0;
    for (const auto& e : envs) {
      Problem prob;
      prob.id = e.value("id", "env" + std::to_string(idx));
      if (e.contains("blocker")) {
        prob.backend = make_blocker_env(parse_blocker_params(e["blocker"])).env;
      } else {
        prob.backend = std::make_shared<SyntheticTreeEnv>(parse_env_config(e));
      }
      cfg.problems.push_back(std::move(prob));
      ++idx;
    }
  } else if (type == "blocker_suite") {
    const int count = pj.value("count", 50);
    const std::uint64_t suite_seed = pj.value("seed", 0ULL);
    BlockerEnvParams base = pj.contains("params") ? parse_blocker_params(pj["params"])
                                                  : BlockerEnvParams{};
    int made = 0;
    std::uint64_t attempt = 0;
    while (made < count) {
      BlockerEnvParams p = base;
      p.seed = derive_seed(suite_seed, "suite", attempt++);
      try {
        BlockerEnv env = make_blocker_env(p);
        Problem prob;
        prob.id = "blocker" + std::to_string(made);
        prob.backend = env.env;
        cfg.problems.push_back(std::move(prob));
        ++made;
      } catch (const ConstructionFailed&) {
        if (attempt > static_cast<std::uint64_t>(count) * 100 + 1000)
          throw ConfigError("blocker suite generation keeps failing; adjust params");
      }
    }
  } else if (type == "http") {
    const json problems = load_json_file(resolve(pj.at("file").get<std::string>()));
    HttpBackendConfig base = parse_http_config(pj.at("backend"));
    for (const auto& e : problems) {
      HttpBackendConfig c = base;
      c.problem = e.at("question").get<std::string>();
      Problem prob;
      prob.id = e.at("id").get<std::string>();
      prob.backend = std::make_shared<HttpBackend>(c);
      if (e.contains("answer")) prob.answer = e["answer"].get<std::string>();
      cfg.problems.push_back(std::move(prob));
    }
  } else {
    throw ConfigError("unknown problem source type: " + type);
  }

  if (cfg.seeds.empty()) throw ConfigError("seed list must be nonempty");
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  const json j = load_json_file(path);
  return parse_config(j, fs::path(path).parent_path().string());
}

}  // namespace poolsearch::harness
