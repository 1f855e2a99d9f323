#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "poolsearch/backend.hpp"
#include "poolsearch/engine.hpp"

namespace poolsearch::harness {

struct Problem {
  std::string id;
  std::shared_ptr<Backend> backend;
  std::optional<std::string> answer;  // ground truth when known
};

struct MethodEntry {
  std::string label;  // method name used in records
  SearchConfig base;
};

struct ExperimentConfig {
  std::vector<Problem> problems;
  std::vector<MethodEntry> methods;
  std::vector<std::uint64_t> seeds;
  std::vector<int> budget_sweep;  // N values; empty = each method's own N
  std::string output_dir = "out";
  std::uint64_t master_seed = 0;
  int workers = 1;
};

// One row per (method, N, seed, problem).
struct MetricsRecord {
  std::string method;
  int n = 0;
  std::uint64_t seed = 0;
  std::string problem_id;
  bool correct = false;
  bool valid = false;
  std::string answer;
  long long generation_units = 0;
  long long tokens = 0;
  long long backtrack_units = 0;
  long long scorer_calls = 0;
  int rounds_run = 0;
  double wall_ms = 0.0;  // excluded from determinism comparisons
  std::vector<int> pool_sizes;
  std::string error;  // nonempty when the problem instance failed
};

struct AggregateRow {
  std::string method;
  int n = 0;
  int records = 0;
  double acc_mean = 0.0;
  double acc_std = 0.0;  // sample std over per-seed means
  double units_mean = 0.0;
  double tokens_mean = 0.0;
  double backtrack_mean = 0.0;
};

struct CurvePoint {
  std::string method;
  int n = 0;
  double mean_generation_units = 0.0;
  double mean_tokens = 0.0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;
};

// Per-cell substream: derive_seed(master, "<method>", N, seed, fnv1a(problem)).
std::uint64_t cell_seed(std::uint64_t master, const std::string& method, int n,
                        std::uint64_t seed, const std::string& problem_id);

// Runs one cell and grades the answer against the problem's ground truth.
MetricsRecord run_cell(const MethodEntry& method, int n, std::uint64_t seed,
                       const Problem& problem, std::uint64_t master_seed);

struct ExperimentResult {
  std::vector<MetricsRecord> records;
  std::vector<AggregateRow> aggregates;
};

// Full sweep; failures are recorded per problem and never abort the sweep.
// Writes records.csv, records.jsonl and aggregates.csv atomically under the
// output directory when write_files is true.
ExperimentResult run_experiment(const ExperimentConfig& cfg, bool write_files = true);

// Aggregates are a pure function of the records (recomputable byte for byte).
std::vector<AggregateRow> aggregate(const std::vector<MetricsRecord>& records);

// Accuracy-versus-compute points per method, ordered by N.
std::vector<CurvePoint> curves_from_records(const std::vector<MetricsRecord>& records);

// Reads records.csv and writes the curve CSV; throws MissingMetrics when the
// records file does not exist.
void emit_curves(const std::string& records_csv_path, const std::string& out_csv_path);

// Config-file front end (schema in docs/config.md). Environment-variable
// interpolation "${ENV:NAME}" applies to secret-bearing string fields.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config(const nlohmann::json& j, const std::string& base_dir);
std::string interpolate_env(const std::string& value);

std::vector<MetricsRecord> read_records_csv(const std::string& path);
void write_records_csv(const std::string& path, const std::vector<MetricsRecord>& records);
void write_records_jsonl(const std::string& path, const std::vector<MetricsRecord>& records);
void write_aggregates_csv(const std::string& path, const std::vector<AggregateRow>& rows);

}  // namespace poolsearch::harness
