#pragma once

#include <atomic>
#include <string>

#include "json.hpp"
#include "poolsearch/backend.hpp"

namespace poolsearch {

// Adapter for a chat-completions generator plus a step-score service.
// Request/response schemas are documented in docs/http_api.md.
struct HttpBackendConfig {
  std::string generator_url;  // scheme://host:port
  std::string generator_model;
  std::string scorer_url;
  std::string scorer_model;
  std::string auth_env;  // name of the env var holding the bearer token; "" = none

  std::string problem;  // user problem statement sent to both services
  std::string system_prompt;

  std::string step_delimiter = "\n\n";
  // Boxed-answer convention; group 1 is the extracted answer.
  std::string answer_pattern = R"(\\boxed\{([^}]*)\})";
  int max_tokens = 512;
  double timeout_seconds = 30.0;
  int max_retries = 3;
  int max_concurrent_requests = 4;
  double retry_base_delay_ms = 100.0;
  double retry_max_delay_ms = 2000.0;
};

class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig cfg);

  std::vector<StepSample> expand(const PrefixArena& arena,
                                 std::optional<PrefixId> parent, int count,
                                 double temperature, RandomStream& rng) override;
  double score_candidate(const PrefixArena& arena, std::optional<PrefixId> parent,
                         const StepSample& sample) override;
  std::vector<std::vector<StepSample>> expand_many(const PrefixArena& arena,
                                                   const std::vector<ExpandRequest>& requests,
                                                   double temperature,
                                                   RandomStream& rng) override;

  long long total_retries() const { return retries_.load(); }
  const HttpBackendConfig& config() const { return cfg_; }

 private:
  std::vector<std::string> path_steps(const PrefixArena& arena,
                                      std::optional<PrefixId> parent) const;
  // POST with retry/backoff; throws BackendError once the budget is spent.
  nlohmann::json post_json(const std::string& base_url, const std::string& path,
                           const nlohmann::json& body);
  StepSample parse_choice(const nlohmann::json& choice) const;

  HttpBackendConfig cfg_;
  std::atomic<long long> retries_{0};
};

}  // namespace poolsearch
