#pragma once

#include <stdexcept>
#include <string>

namespace poolsearch {

struct AllWeightsZero : std::runtime_error {
  AllWeightsZero() : std::runtime_error("pool has zero total weight") {}
};

struct SubsampleTooLarge : std::invalid_argument {
  explicit SubsampleTooLarge(const std::string& what) : std::invalid_argument(what) {}
};

struct InvalidLength : std::invalid_argument {
  explicit InvalidLength(const std::string& what) : std::invalid_argument(what) {}
};

struct BudgetMismatch : std::invalid_argument {
  explicit BudgetMismatch(const std::string& what) : std::invalid_argument(what) {}
};

struct EnvTooLarge : std::invalid_argument {
  explicit EnvTooLarge(const std::string& what) : std::invalid_argument(what) {}
};

struct ConstructionFailed : std::runtime_error {
  explicit ConstructionFailed(const std::string& what) : std::runtime_error(what) {}
};

struct MissingMetrics : std::runtime_error {
  explicit MissingMetrics(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::invalid_argument {
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// HTTP backend failure after the retry budget is spent.
struct BackendError : std::runtime_error {
  enum class Kind { Timeout, Service, Malformed };

  BackendError(Kind k, int http_status, int retries_used, const std::string& what)
      : std::runtime_error(what), kind(k), status(http_status), retries(retries_used) {}

  Kind kind;
  int status;   // HTTP status for Kind::Service, 0 otherwise
  int retries;  // retries consumed before giving up
};

}  // namespace poolsearch
