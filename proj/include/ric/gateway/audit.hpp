#pragma once

// Append-only audit log: one NDJSON line per injection, with the
// interruption text replaced by a digest. Field names are part of the wire
// contract: ts, conv, id, off, digest, mode, ratio.
//
// The ratio field is the measured system share of the context prefix at
// the moment of that injection (system prompt + injected mass so far over
// that plus the organic tokens preceding the injection point).

#include <chrono>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <string>
#include <string_view>

#include <json.hpp>

#include "ric/policy.hpp"
#include "ric/rational.hpp"
#include "ric/tokens.hpp"

namespace ric::gateway {

inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string fnv1a64_hex(std::string_view data) {
  static const char* digits = "0123456789abcdef";
  std::uint64_t h = fnv1a64(data);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[std::size_t(i)] = digits[h & 0xF];
    h >>= 4;
  }
  return out;
}

struct AuditEntry {
  std::uint64_t ts_ms = 0;
  std::string conv;
  std::uint64_t id = 0;
  TokenCount off = 0;
  std::string digest;
  RecordMode mode = RecordMode::Inline;
  Rational ratio;
};

inline std::string audit_entry_json(const AuditEntry& e) {
  nlohmann::ordered_json j;
  j["ts"] = e.ts_ms;
  j["conv"] = e.conv;
  j["id"] = e.id;
  j["off"] = e.off;
  j["digest"] = e.digest;
  j["mode"] = record_mode_name(e.mode);
  j["ratio"] = to_decimal_string(e.ratio);
  return j.dump();
}

class AuditLog {
 public:
  AuditLog() = default;

  explicit AuditLog(const std::string& path) : path_(path) {
    if (!path.empty()) stream_.open(path, std::ios::app);
  }

  bool enabled() const { return stream_.is_open(); }
  const std::string& path() const { return path_; }

  // Appends one line; returns false (and counts the failure) on I/O error.
  // Entries are never modified once written.
  bool append(const AuditEntry& entry) {
    std::lock_guard<std::mutex> lock(mutex_);
    ++entries_;
    if (!stream_.is_open()) return true;  // disabled log still counts entries
    stream_ << audit_entry_json(entry) << '\n';
    stream_.flush();
    if (!stream_.good()) {
      ++failures_;
      return false;
    }
    return true;
  }

  std::uint64_t entries() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return entries_;
  }

  std::uint64_t failures() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return failures_;
  }

 private:
  std::string path_;
  std::ofstream stream_;
  mutable std::mutex mutex_;
  std::uint64_t entries_ = 0;
  std::uint64_t failures_ = 0;
};

inline std::uint64_t now_unix_ms() {
  return std::uint64_t(std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::system_clock::now().time_since_epoch())
                           .count());
}

}  // namespace ric::gateway
