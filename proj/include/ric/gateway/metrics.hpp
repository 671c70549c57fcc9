#pragma once

// Monotone counters plus measured-ratio summary statistics, rendered as
// plain-text "name value" lines for GET /metrics.

#include <atomic>
#include <cstdint>
#include <mutex>
#include <string>

#include "ric/rational.hpp"

namespace ric::gateway {

class Metrics {
 public:
  std::atomic<std::uint64_t> requests_total{0};
  std::atomic<std::uint64_t> transform_requests{0};
  std::atomic<std::uint64_t> proxy_requests{0};
  std::atomic<std::uint64_t> injections_inline{0};
  std::atomic<std::uint64_t> injections_turn_level{0};
  std::atomic<std::uint64_t> injections_cot{0};
  std::atomic<std::uint64_t> sentinel_collisions{0};
  std::atomic<std::uint64_t> upstream_failures{0};
  std::atomic<std::uint64_t> rejected_requests{0};
  std::atomic<std::uint64_t> audit_entries{0};

  void observe_ratio(const Rational& r) {
    std::lock_guard<std::mutex> lock(mutex_);
    if (ratio_count_ == 0 || r < ratio_min_) ratio_min_ = r;
    if (ratio_count_ == 0 || r > ratio_max_) ratio_max_ = r;
    ratio_last_ = r;
    // The running sum is presentation-only; long double is plenty here.
    ratio_sum_ += ratio_to_ld(r);
    ++ratio_count_;
  }

  std::string render() const {
    std::string out;
    auto line = [&out](const char* name, std::uint64_t v) {
      out += name;
      out += ' ';
      out += std::to_string(v);
      out += '\n';
    };
    line("requests_total", requests_total.load());
    line("transform_requests", transform_requests.load());
    line("proxy_requests", proxy_requests.load());
    line("injections_inline", injections_inline.load());
    line("injections_turn_level", injections_turn_level.load());
    line("injections_cot", injections_cot.load());
    line("sentinel_collisions", sentinel_collisions.load());
    line("upstream_failures", upstream_failures.load());
    line("rejected_requests", rejected_requests.load());
    line("audit_entries", audit_entries.load());

    std::lock_guard<std::mutex> lock(mutex_);
    line("ratio_count", ratio_count_);
    out += "ratio_last " + (ratio_count_ ? to_decimal_string(ratio_last_) : "0") + '\n';
    out += "ratio_min " + (ratio_count_ ? to_decimal_string(ratio_min_) : "0") + '\n';
    out += "ratio_max " + (ratio_count_ ? to_decimal_string(ratio_max_) : "0") + '\n';
    out += "ratio_mean ";
    if (ratio_count_ == 0) {
      out += '0';
    } else {
      char buf[48];
      std::snprintf(buf, sizeof(buf), "%.9Lg", ratio_sum_ / (long double)(ratio_count_));
      out += buf;
    }
    out += '\n';
    return out;
  }

 private:
  static long double ratio_to_ld(const Rational& r) {
    return (long double)(r.num()) / (long double)(r.den());
  }

  mutable std::mutex mutex_;
  std::uint64_t ratio_count_ = 0;
  Rational ratio_last_;
  Rational ratio_min_;
  Rational ratio_max_;
  long double ratio_sum_ = 0.0L;
};

}  // namespace ric::gateway
