#pragma once

#include <algorithm>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "webkv/result.hpp"
#include "webkv/wire.hpp"

namespace webkv {

enum class BalancerMethod { by_requests, by_traffic, by_busyness };

inline std::optional<BalancerMethod> balancer_method_from_string(std::string_view s) {
  if (s == "byrequests") return BalancerMethod::by_requests;
  if (s == "bytraffic") return BalancerMethod::by_traffic;
  if (s == "bybusyness") return BalancerMethod::by_busyness;
  return std::nullopt;
}

inline const char* to_string(BalancerMethod m) {
  switch (m) {
    case BalancerMethod::by_requests: return "byrequests";
    case BalancerMethod::by_traffic: return "bytraffic";
    case BalancerMethod::by_busyness: return "bybusyness";
  }
  return "byrequests";
}

struct RouteSlot {
  std::string worker_id;
  std::string url;
  int lbfactor = 1;
  int64_t lbstatus = 0;
  uint64_t transferred_bytes = 0;
  uint64_t pending = 0;
  uint64_t served = 0;
  bool up = true;
};

struct PickedWorker {
  std::string worker_id;
  std::string url;
  size_t slot = 0;  // 1-based
};

// Runtime-mutable backend table. Slots are numbered densely from 1 and
// removal compacts the numbering. All picks and counter updates are
// serialized so concurrent dispatch sequences stay exact.
class RouteTable {
 public:
  // Returns the 1-based slot number. Re-adding an existing worker updates
  // url/lbfactor in place and resets lbstatus.
  size_t add_worker(const RegistrationMessage& m) {
    std::lock_guard lock(mu_);
    for (size_t i = 0; i < slots_.size(); ++i) {
      if (slots_[i].worker_id == m.worker_id) {
        slots_[i].url = m.base_url;
        slots_[i].lbfactor = m.load_factor;
        slots_[i].lbstatus = 0;
        slots_[i].up = true;
        return i + 1;
      }
    }
    RouteSlot s;
    s.worker_id = m.worker_id;
    s.url = m.base_url;
    s.lbfactor = m.load_factor;
    slots_.push_back(std::move(s));
    return slots_.size();
  }

  void remove_worker(const std::string& worker_id) {
    std::lock_guard lock(mu_);
    std::erase_if(slots_, [&](const RouteSlot& s) { return s.worker_id == worker_id; });
  }

  Result<PickedWorker> pick(BalancerMethod method) {
    std::lock_guard lock(mu_);
    std::vector<size_t> up;
    for (size_t i = 0; i < slots_.size(); ++i) {
      if (slots_[i].up) up.push_back(i);
    }
    if (up.empty()) return Result<PickedWorker>::err(Errc::no_backends, "no Up workers");

    size_t chosen = up[0];
    switch (method) {
      case BalancerMethod::by_requests:
        chosen = pick_by_requests(up);
        break;
      case BalancerMethod::by_traffic:
        chosen = *std::min_element(up.begin(), up.end(), [&](size_t a, size_t b) {
          // transferred/lbfactor compared without division
          auto lhs = static_cast<unsigned __int128>(slots_[a].transferred_bytes) *
                     static_cast<unsigned __int128>(slots_[b].lbfactor);
          auto rhs = static_cast<unsigned __int128>(slots_[b].transferred_bytes) *
                     static_cast<unsigned __int128>(slots_[a].lbfactor);
          if (lhs != rhs) return lhs < rhs;
          return slots_[a].worker_id < slots_[b].worker_id;
        });
        break;
      case BalancerMethod::by_busyness: {
        std::vector<size_t> tied;
        for (size_t i : up) {
          if (tied.empty()) {
            tied.push_back(i);
            continue;
          }
          auto lhs = slots_[i].pending * static_cast<uint64_t>(slots_[tied[0]].lbfactor);
          auto rhs = slots_[tied[0]].pending * static_cast<uint64_t>(slots_[i].lbfactor);
          if (lhs < rhs) {
            tied.assign(1, i);
          } else if (lhs == rhs) {
            tied.push_back(i);
          }
        }
        chosen = tied.size() == 1 ? tied[0] : pick_by_requests(tied);
        break;
      }
    }
    return PickedWorker{slots_[chosen].worker_id, slots_[chosen].url, chosen + 1};
  }

  // Failover target: the next Up slot after `slot_1based`, ring order.
  Result<PickedWorker> next_up_after(size_t slot_1based) {
    std::lock_guard lock(mu_);
    if (slots_.empty()) return Result<PickedWorker>::err(Errc::no_backends, "route table empty");
    size_t start = slot_1based % slots_.size();  // index of the next slot
    for (size_t step = 0; step < slots_.size(); ++step) {
      size_t i = (start + step) % slots_.size();
      if (slots_[i].up) return PickedWorker{slots_[i].worker_id, slots_[i].url, i + 1};
    }
    return Result<PickedWorker>::err(Errc::no_backends, "no Up workers");
  }

  void on_dispatch_start(const std::string& worker_id) {
    std::lock_guard lock(mu_);
    if (RouteSlot* s = find(worker_id)) s->pending++;
  }

  void on_dispatch_abort(const std::string& worker_id) {
    std::lock_guard lock(mu_);
    if (RouteSlot* s = find(worker_id)) {
      if (s->pending > 0) s->pending--;
    }
  }

  void on_dispatch_done(const std::string& worker_id, uint64_t response_bytes) {
    std::lock_guard lock(mu_);
    if (RouteSlot* s = find(worker_id)) {
      if (s->pending > 0) s->pending--;
      s->served++;
      s->transferred_bytes += response_bytes;
    }
  }

  // Marks the worker Down and zeroes its lbstatus so a later rejoin starts
  // from a neutral balance.
  void mark_down(const std::string& worker_id) {
    std::lock_guard lock(mu_);
    if (RouteSlot* s = find(worker_id)) {
      s->up = false;
      s->lbstatus = 0;
    }
  }

  bool mark_up(const std::string& worker_id) {
    std::lock_guard lock(mu_);
    if (RouteSlot* s = find(worker_id)) {
      bool was_down = !s->up;
      s->up = true;
      s->lbstatus = 0;
      return was_down;
    }
    return false;
  }

  std::optional<std::string> worker_id_for_url(const std::string& url) const {
    std::lock_guard lock(mu_);
    for (const auto& s : slots_) {
      if (s.url == url) return s.worker_id;
    }
    return std::nullopt;
  }

  std::vector<RouteSlot> snapshot() const {
    std::lock_guard lock(mu_);
    return slots_;
  }

  std::vector<std::pair<std::string, std::string>> down_workers() const {
    std::lock_guard lock(mu_);
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& s : slots_) {
      if (!s.up) out.emplace_back(s.worker_id, s.url);
    }
    return out;
  }

  size_t up_count() const {
    std::lock_guard lock(mu_);
    size_t n = 0;
    for (const auto& s : slots_) n += s.up ? 1 : 0;
    return n;
  }

  nlohmann::json to_json() const {
    std::lock_guard lock(mu_);
    nlohmann::json arr = nlohmann::json::array();
    for (size_t i = 0; i < slots_.size(); ++i) {
      const RouteSlot& s = slots_[i];
      arr.push_back({{"slot", i + 1},
                     {"worker_id", s.worker_id},
                     {"url", s.url},
                     {"lbfactor", s.lbfactor},
                     {"lbstatus", s.lbstatus},
                     {"transferred_bytes", s.transferred_bytes},
                     {"pending", s.pending},
                     {"served", s.served},
                     {"state", s.up ? "up" : "down"}});
    }
    return arr;
  }

 private:
  RouteSlot* find(const std::string& worker_id) {
    for (auto& s : slots_) {
      if (s.worker_id == worker_id) return &s;
    }
    return nullptr;
  }

  // Weighted most-available: everyone gains its lbfactor, the leader serves
  // and pays back the whole round. Over Σf consecutive picks each candidate
  // is selected exactly lbfactor times.
  size_t pick_by_requests(const std::vector<size_t>& candidates) {
    int64_t total = 0;
    for (size_t i : candidates) total += slots_[i].lbfactor;
    size_t best = candidates[0];
    for (size_t i : candidates) {
      slots_[i].lbstatus += slots_[i].lbfactor;
      if (slots_[i].lbstatus > slots_[best].lbstatus ||
          (slots_[i].lbstatus == slots_[best].lbstatus && slots_[i].worker_id < slots_[best].worker_id)) {
        best = i;
      }
    }
    slots_[best].lbstatus -= total;
    return best;
  }

  mutable std::mutex mu_;
  std::vector<RouteSlot> slots_;
};

}  // namespace webkv
