#pragma once

// In-memory per-conversation state: the residual token accumulator and the
// next record id. A lease serializes all handling for one conversation_id,
// so two simultaneous requests for the same conversation are processed in
// arrival order. Entries expire after the configured TTL.

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "ric/tokens.hpp"

namespace ric::gateway {

class CarryStore {
 public:
  explicit CarryStore(std::uint64_t ttl_seconds) : ttl_(ttl_seconds) {}

  struct Entry {
    std::mutex mutex;
    TokenCount carry = 0;
    std::uint64_t next_id = 0;
    std::chrono::steady_clock::time_point last_seen;
  };

  class Lease {
   public:
    explicit Lease(std::shared_ptr<Entry> entry)
        : entry_(std::move(entry)), lock_(entry_->mutex) {}

    TokenCount carry() const { return entry_->carry; }
    std::uint64_t next_id() const { return entry_->next_id; }
    void update(TokenCount carry, std::uint64_t next_id) {
      entry_->carry = carry;
      entry_->next_id = next_id;
    }

   private:
    std::shared_ptr<Entry> entry_;
    std::unique_lock<std::mutex> lock_;
  };

  Lease acquire(const std::string& conversation_id) {
    std::shared_ptr<Entry> entry;
    {
      std::lock_guard<std::mutex> lock(map_mutex_);
      prune_locked();
      auto& slot = entries_[conversation_id];
      if (!slot) slot = std::make_shared<Entry>();
      slot->last_seen = std::chrono::steady_clock::now();
      entry = slot;
    }
    return Lease(std::move(entry));
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> lock(map_mutex_);
    return entries_.size();
  }

 private:
  void prune_locked() {
    auto now = std::chrono::steady_clock::now();
    for (auto it = entries_.begin(); it != entries_.end();) {
      auto idle = std::chrono::duration_cast<std::chrono::seconds>(now - it->second->last_seen);
      if (idle.count() >= std::int64_t(ttl_) && it->second.use_count() == 1)
        it = entries_.erase(it);
      else
        ++it;
    }
  }

  std::uint64_t ttl_;
  mutable std::mutex map_mutex_;
  std::map<std::string, std::shared_ptr<Entry>> entries_;
};

}  // namespace ric::gateway
