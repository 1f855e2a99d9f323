#include "poolsearch/http_backend.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <future>
#include <regex>
#include <semaphore>
#include <thread>

#include "httplib.h"
#include "poolsearch/errors.hpp"

namespace poolsearch {

using nlohmann::json;

HttpBackend::HttpBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.timeout_seconds <= 0.0) throw ConfigError("timeout must be positive");
  if (cfg_.max_retries < 0) throw ConfigError("retry count must be nonnegative");
  if (cfg_.max_concurrent_requests < 1)
    throw ConfigError("concurrency limit must be positive");
}

std::vector<std::string> HttpBackend::path_steps(const PrefixArena& arena,
                                                 std::optional<PrefixId> parent) const {
  std::vector<std::string> steps;
  std::optional<PrefixId> cur = parent;
  while (cur && !cur->is_root()) {
    const Prefix& z = arena.at(*cur);
    steps.push_back(z.step);
    cur = z.parent.is_root() ? std::nullopt : std::optional<PrefixId>(z.parent);
  }
  std::reverse(steps.begin(), steps.end());
  return steps;
}

json HttpBackend::post_json(const std::string& base_url, const std::string& path,
                            const json& body) {
  httplib::Headers headers;
  if (!cfg_.auth_env.empty()) {
    if (const char* token = std::getenv(cfg_.auth_env.c_str()); token && *token)
      headers.emplace("Authorization", std::string("Bearer ") + token);
  }
  const std::string payload = body.dump();

  BackendError::Kind last_kind = BackendError::Kind::Timeout;
  int last_status = 0;
  std::string last_what = "request never attempted";

  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    if (attempt > 0) {
      retries_.fetch_add(1);
      const double delay = std::min(cfg_.retry_max_delay_ms,
                                    cfg_.retry_base_delay_ms * std::pow(2.0, attempt - 1));
      std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(delay));
    }

    httplib::Client cli(base_url);
    const auto secs = static_cast<time_t>(cfg_.timeout_seconds);
    const auto usecs = static_cast<time_t>((cfg_.timeout_seconds - secs) * 1e6);
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    cli.set_write_timeout(secs, usecs);

    auto res = cli.Post(path, headers, payload, "application/json");
    if (!res) {
      last_kind = BackendError::Kind::Timeout;
      last_status = 0;
      last_what = "no response from " + base_url + path;
      continue;
    }
    if (res->status >= 200 && res->status < 300) {
      try {
        return json::parse(res->body);
      } catch (const json::parse_error& e) {
        last_kind = BackendError::Kind::Malformed;
        last_status = res->status;
        last_what = std::string("malformed response body: ") + e.what();
        continue;
      }
    }
    last_kind = BackendError::Kind::Service;
    last_status = res->status;
    last_what = "service returned status " + std::to_string(res->status);
    if (res->status < 500 && res->status != 429) break;  // not retryable
  }
  throw BackendError(last_kind, last_status, static_cast<int>(retries_.load()), last_what);
}

StepSample HttpBackend::parse_choice(const json& choice) const {
  if (!choice.contains("message") || !choice["message"].contains("content") ||
      !choice["message"]["content"].is_string())
    throw BackendError(BackendError::Kind::Malformed, 0,
                       static_cast<int>(retries_.load()), "choice without content");

  std::string content = choice["message"]["content"].get<std::string>();
  bool hit_delimiter = false;
  if (const auto pos = content.find(cfg_.step_delimiter); pos != std::string::npos) {
    content = content.substr(0, pos);
    hit_delimiter = true;
  }

  StepSample s;
  s.step = content;

  if (choice.contains("logprobs") && choice["logprobs"].is_object() &&
      choice["logprobs"].contains("content") && choice["logprobs"]["content"].is_array()) {
    double sum = 0.0;
    long count = 0;
    for (const auto& tok : choice["logprobs"]["content"]) {
      if (tok.contains("logprob") && tok["logprob"].is_number()) {
        sum += tok["logprob"].get<double>();
        ++count;
      }
    }
    if (count > 0) {
      s.logprob = sum;
      s.tokens = count;
    }
  }

  // Terminal detection: an explicit answer marker wins; otherwise a natural
  // stop that was not caused by the step delimiter ends the trace.
  const std::regex answer_re(cfg_.answer_pattern);
  std::smatch m;
  if (std::regex_search(s.step, m, answer_re)) {
    s.terminal = true;
    s.answer = m.size() > 1 ? m[1].str() : m[0].str();
    return s;
  }
  if (hit_delimiter) return s;

  const std::string finish =
      choice.value("finish_reason", std::string("length"));
  const bool stop_sequence_hit =
      choice.contains("stop_reason") && !choice["stop_reason"].is_null();
  if (finish == "stop" && !stop_sequence_hit) s.terminal = true;
  return s;
}

std::vector<StepSample> HttpBackend::expand(const PrefixArena& arena,
                                            std::optional<PrefixId> parent, int count,
                                            double temperature, RandomStream& /*rng*/) {
  if (parent && arena.at(*parent).terminal) {
    const Prefix& p = arena.at(*parent);
    std::vector<StepSample> out(static_cast<std::size_t>(count));
    for (auto& s : out) {
      s.step = p.step;
      s.logprob = p.step_logprob;
      s.terminal = true;
      s.answer = p.answer;
      s.frozen = true;
      s.node = p.backend_node;
    }
    return out;
  }

  json messages = json::array();
  if (!cfg_.system_prompt.empty())
    messages.push_back({{"role", "system"}, {"content", cfg_.system_prompt}});
  messages.push_back({{"role", "user"}, {"content", cfg_.problem}});
  const auto steps = path_steps(arena, parent);
  if (!steps.empty()) {
    std::string sofar;
    for (std::size_t i = 0; i < steps.size(); ++i) {
      if (i) sofar += cfg_.step_delimiter;
      sofar += steps[i];
    }
    sofar += cfg_.step_delimiter;
    messages.push_back({{"role", "assistant"}, {"content", sofar}});
  }

  json body = {{"model", cfg_.generator_model}, {"messages", messages},
               {"temperature", temperature},   {"max_tokens", cfg_.max_tokens},
               {"n", count},                   {"logprobs", true},
               {"stop", json::array({cfg_.step_delimiter})}};

  json res = post_json(cfg_.generator_url, "/v1/chat/completions", body);
  if (!res.contains("choices") || !res["choices"].is_array() || res["choices"].empty())
    throw BackendError(BackendError::Kind::Malformed, 0,
                       static_cast<int>(retries_.load()), "response without choices");

  std::vector<StepSample> out;
  out.reserve(res["choices"].size());
  for (const auto& choice : res["choices"]) out.push_back(parse_choice(choice));

  // Spread the aggregate completion-token count over choices lacking
  // per-token logprobs.
  if (res.contains("usage") && res["usage"].contains("completion_tokens")) {
    long total = res["usage"]["completion_tokens"].get<long>();
    long counted = 0;
    long uncounted = 0;
    for (const auto& s : out) (s.tokens ? counted += *s.tokens : ++uncounted);
    if (uncounted > 0) {
      const long share = std::max<long>(0, (total - counted) / uncounted);
      for (auto& s : out)
        if (!s.tokens) s.tokens = share;
    }
  }
  while (static_cast<int>(out.size()) > count) out.pop_back();
  while (static_cast<int>(out.size()) < count && !out.empty()) out.push_back(out.back());
  return out;
}

double HttpBackend::score_candidate(const PrefixArena& arena,
                                    std::optional<PrefixId> parent,
                                    const StepSample& sample) {
  auto steps = path_steps(arena, parent);
  steps.push_back(sample.step);

  json body = {{"model", cfg_.scorer_model},
               {"problem", cfg_.problem},
               {"steps", steps}};
  json res = post_json(cfg_.scorer_url, "/v1/prm/score", body);
  if (!res.contains("scores") || !res["scores"].is_array() || res["scores"].empty())
    throw BackendError(BackendError::Kind::Malformed, 0,
                       static_cast<int>(retries_.load()), "response without scores");
  const double last = res["scores"].back().get<double>();
  return clamp_prm(last);
}

std::vector<std::vector<StepSample>> HttpBackend::expand_many(
    const PrefixArena& arena, const std::vector<ExpandRequest>& requests,
    double temperature, RandomStream& rng) {
  if (requests.size() <= 1)
    return Backend::expand_many(arena, requests, temperature, rng);

  std::counting_semaphore<> gate(cfg_.max_concurrent_requests);
  std::vector<std::future<std::vector<StepSample>>> futures;
  futures.reserve(requests.size());
  for (const auto& req : requests) {
    futures.push_back(std::async(std::launch::async, [&, req] {
      gate.acquire();
      struct Release {
        std::counting_semaphore<>* g;
        ~Release() { g->release(); }
      } release{&gate};
      RandomStream unused(0);
      return expand(arena, req.parent, req.count, temperature, unused);
    }));
  }
  std::vector<std::vector<StepSample>> out;
  out.reserve(requests.size());
  for (auto& f : futures) out.push_back(f.get());  // reassembled in request order
  return out;
}

}  // namespace poolsearch
