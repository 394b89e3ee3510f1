#pragma once

#include <chrono>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "webkv/wire.hpp"

namespace webkv {

using SteadyTime = std::chrono::steady_clock::time_point;

struct WorkerRecord {
  RegistrationMessage descriptor;
  bool up = true;
  SteadyTime last_heartbeat{};
  uint64_t stored_bytes = 0;
  uint64_t pending_requests = 0;
  uint64_t served_requests = 0;
  uint64_t transferred_bytes = 0;
};

// Membership as the master sees it. Registration and heartbeats mark a
// worker Up; silence longer than failure_after marks it Down; a Down
// worker rejoins through either path.
class WorkerRegistry {
 public:
  explicit WorkerRegistry(std::chrono::milliseconds failure_after) : failure_after_(failure_after) {}

  // Idempotent upsert. Returns true when this registration was new or
  // revived a Down worker (the caller then refreshes its key report).
  bool register_worker(const RegistrationMessage& m, SteadyTime now) {
    std::lock_guard lock(mu_);
    for (auto& r : records_) {
      if (r.descriptor.worker_id == m.worker_id) {
        bool revived = !r.up;
        r.descriptor = m;
        r.up = true;
        r.last_heartbeat = now;
        return revived;
      }
    }
    WorkerRecord r;
    r.descriptor = m;
    r.up = true;
    r.last_heartbeat = now;
    records_.push_back(std::move(r));
    return true;
  }

  // Marks Down immediately. Unknown ids are a no-op.
  void deregister_worker(const std::string& worker_id) {
    std::lock_guard lock(mu_);
    for (auto& r : records_) {
      if (r.descriptor.worker_id == worker_id) r.up = false;
    }
  }

  // Returns false for heartbeats from unregistered workers (ignored, the
  // caller counts them and tells the worker it is unknown).
  bool on_heartbeat(const HeartbeatMessage& m, SteadyTime now) {
    std::lock_guard lock(mu_);
    for (auto& r : records_) {
      if (r.descriptor.worker_id == m.worker_id) {
        r.up = true;
        r.last_heartbeat = now;
        r.stored_bytes = m.stored_bytes;
        r.pending_requests = m.pending_requests;
        r.served_requests = m.served_requests;
        r.transferred_bytes = m.transferred_bytes;
        return true;
      }
    }
    return false;
  }

  std::vector<std::string> detect_failures(SteadyTime now) {
    std::lock_guard lock(mu_);
    std::vector<std::string> newly_down;
    for (auto& r : records_) {
      if (r.up && now - r.last_heartbeat > failure_after_) {
        r.up = false;
        newly_down.push_back(r.descriptor.worker_id);
      }
    }
    return newly_down;
  }

  bool is_up(const std::string& worker_id) const {
    std::lock_guard lock(mu_);
    for (const auto& r : records_) {
      if (r.descriptor.worker_id == worker_id) return r.up;
    }
    return false;
  }

  std::optional<std::string> base_url(const std::string& worker_id) const {
    std::lock_guard lock(mu_);
    for (const auto& r : records_) {
      if (r.descriptor.worker_id == worker_id) return r.descriptor.base_url;
    }
    return std::nullopt;
  }

  std::vector<std::string> up_worker_ids() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (const auto& r : records_) {
      if (r.up) out.push_back(r.descriptor.worker_id);
    }
    return out;
  }

  std::vector<WorkerRecord> snapshot() const {
    std::lock_guard lock(mu_);
    return records_;
  }

  std::chrono::milliseconds failure_after() const { return failure_after_; }

 private:
  std::chrono::milliseconds failure_after_;
  mutable std::mutex mu_;
  std::vector<WorkerRecord> records_;
};

}  // namespace webkv
