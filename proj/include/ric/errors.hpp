#pragma once

#include <stdexcept>
#include <string>

namespace ric {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Input bytes are not valid UTF-8.
class EncodingError : public Error {
 public:
  explicit EncodingError(const std::string& msg) : Error(msg) {}
};

// A policy or configuration value violates its contract (zero interval,
// empty sentinel, unknown config key, ...).
class PolicyError : public Error {
 public:
  explicit PolicyError(const std::string& msg) : Error(msg) {}
};

// A domain-type invariant was violated at construction time.
class InvariantError : public Error {
 public:
  explicit InvariantError(const std::string& msg) : Error(msg) {}
};

// User content contains the policy's sentinel byte sequences verbatim.
// Injection refuses rather than producing an ambiguous audit trail.
class SentinelCollisionError : public Error {
 public:
  explicit SentinelCollisionError(const std::string& msg) : Error(msg) {}
};

// Sentinel-delimited blocks in a text are unbalanced or nested.
class MalformedInjectionError : public Error {
 public:
  explicit MalformedInjectionError(const std::string& msg) : Error(msg) {}
};

// A ratio was requested over an empty (zero-token) context.
class UndefinedRatioError : public Error {
 public:
  explicit UndefinedRatioError(const std::string& msg) : Error(msg) {}
};

// Exact arithmetic exceeded its representable range or a configured cap.
// Raised instead of silently saturating or rounding.
class MagnitudeOverflowError : public Error {
 public:
  explicit MagnitudeOverflowError(const std::string& msg) : Error(msg) {}
};

// The upstream generation endpoint failed mid-stream.
class UpstreamError : public Error {
 public:
  explicit UpstreamError(const std::string& msg) : Error(msg) {}
};

}  // namespace ric
