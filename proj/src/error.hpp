#pragma once

#include <stdexcept>
#include <string>

namespace persrm {

// Broad error classes; each maps onto one process exit status in the CLI.
enum class ErrorKind { config, data, gateway, verification };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error(ErrorKind::config, m) {}
};

struct DataError : Error {
  explicit DataError(const std::string& m) : Error(ErrorKind::data, m) {}
};

// A document, author or split cannot serve the requested sampling strategy.
struct IneligibleError : DataError {
  explicit IneligibleError(const std::string& m) : DataError(m) {}
};

struct VerificationError : Error {
  explicit VerificationError(const std::string& m) : Error(ErrorKind::verification, m) {}
};

struct GatewayError : Error {
  explicit GatewayError(const std::string& m) : Error(ErrorKind::gateway, m) {}
};

// Transport-level failure. `status` is the HTTP status, or 0 when no response arrived.
struct TransportError : GatewayError {
  TransportError(const std::string& m, int status_, bool retryable_, int attempts_ = 1)
      : GatewayError(m), status(status_), retryable(retryable_), attempts(attempts_) {}
  int status;
  bool retryable;
  int attempts;
};

// The backend answered but declined to produce content.
struct RefusalError : GatewayError {
  RefusalError(const std::string& m, std::string payload_) : GatewayError(m), payload(std::move(payload_)) {}
  std::string payload;
};

}  // namespace persrm
