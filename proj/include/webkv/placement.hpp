#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "webkv/chunking.hpp"
#include "webkv/hash.hpp"
#include "webkv/index.hpp"
#include "webkv/key.hpp"
#include "webkv/result.hpp"

namespace webkv {

// Rendezvous (highest-random-weight) score of a worker for a key:
// FNV-1a over worker_id ++ 0x00 ++ key bytes.
inline uint64_t placement_score(std::string_view worker_id, std::string_view key) {
  uint64_t h = fnv1a64(worker_id);
  h = fnv1a64(std::string_view("\0", 1), h);
  return fnv1a64(key, h);
}

// Orders worker ids by descending score for `key`, ties by ascending id.
inline std::vector<WorkerId> rank_workers(std::vector<WorkerId> workers, std::string_view key) {
  std::sort(workers.begin(), workers.end(), [&](const WorkerId& a, const WorkerId& b) {
    uint64_t sa = placement_score(a, key);
    uint64_t sb = placement_score(b, key);
    if (sa != sb) return sa > sb;
    return a < b;
  });
  return workers;
}

// Deterministic placement: primary is the top-scoring Up worker, replicas the
// next replication-1. Removing a non-selected worker never disturbs the
// placement, which is the point of rendezvous hashing.
inline Result<Placement> place(const Key& key, std::vector<WorkerId> up_workers,
                               unsigned replication, uint64_t total_bytes, uint64_t block_size) {
  if (replication < 1) {
    return Result<Placement>::err(Errc::not_enough_workers, "replication must be >= 1");
  }
  if (up_workers.size() < replication) {
    return Result<Placement>::err(Errc::not_enough_workers,
                                  std::to_string(up_workers.size()) + " up worker(s), need " +
                                      std::to_string(replication));
  }
  auto ranked = rank_workers(std::move(up_workers), key.text());
  Placement p;
  p.primary_worker = ranked[0];
  p.replicas.assign(ranked.begin() + 1, ranked.begin() + replication);
  p.total_bytes = total_bytes;
  p.block_count = block_count_for(total_bytes, block_size);
  return p;
}

}  // namespace webkv
