#pragma once

#include <algorithm>
#include <cstdint>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "webkv/chunking.hpp"
#include "webkv/hash.hpp"
#include "webkv/key.hpp"
#include "webkv/result.hpp"

namespace webkv {

using WorkerId = std::string;

// Where a key lives: an ordered holder list (primary first) plus the
// byte/block accounting the master needs to validate reads.
struct Placement {
  WorkerId primary_worker;
  std::vector<WorkerId> replicas;
  uint32_t block_count = 1;
  uint64_t total_bytes = 0;

  std::vector<WorkerId> holders() const {
    std::vector<WorkerId> out;
    out.reserve(1 + replicas.size());
    out.push_back(primary_worker);
    out.insert(out.end(), replicas.begin(), replicas.end());
    return out;
  }

  bool operator==(const Placement&) const = default;
};

struct IndexStats {
  uint64_t entries = 0;
  uint64_t level1_buckets = 0;
  uint64_t expanded_buckets = 0;
  int max_depth = 1;
};

// Two-level hash-partitioned directory. Level 1 is a fixed array of 2^b
// buckets selected by the top b bits of the key hash. A bucket starts as a
// sorted leaf; the insert that would push a leaf past capacity expands the
// bucket into 2^s sub-buckets keyed by the next s hash bits. Buckets never
// merge back, and a sub-bucket past capacity is an IndexFull error rather
// than a third level.
class MultiLevelIndex {
 public:
  static constexpr int kDefaultLevel1Bits = 4;
  static constexpr int kDefaultSubBits = 4;
  static constexpr size_t kDefaultCapacity = 256;

  explicit MultiLevelIndex(int level1_bits = kDefaultLevel1Bits, int sub_bits = kDefaultSubBits,
                           size_t leaf_capacity = kDefaultCapacity)
      : level1_bits_(level1_bits), sub_bits_(sub_bits), capacity_(leaf_capacity),
        buckets_(size_t{1} << level1_bits) {}

  // Returns the displaced placement when the key already existed.
  Result<std::optional<Placement>> insert(const Key& key, Placement placement) {
    const uint64_t h = fnv1a64(key.text());
    std::unique_lock lock(mu_);
    Bucket& bucket = buckets_[level1_slot(h)];
    std::vector<Entry>& leaf = leaf_for(bucket, h);

    auto it = find_entry(leaf, key.text());
    if (it != leaf.end() && it->key == key.text()) {
      std::optional<Placement> old = std::move(it->placement);
      it->placement = std::move(placement);
      return std::optional<Placement>(std::move(old));
    }

    if (leaf.size() >= capacity_) {
      if (!bucket.expanded) {
        expand(bucket);
        std::vector<Entry>& sub = leaf_for(bucket, h);
        if (sub.size() >= capacity_) {
          return Result<std::optional<Placement>>::err(
              Errc::index_full, "sub-bucket at capacity after expansion");
        }
        auto sit = find_entry(sub, key.text());
        sub.insert(sit, Entry{std::string(key.text()), std::move(placement)});
        ++entries_;
        return std::optional<Placement>(std::nullopt);
      }
      return Result<std::optional<Placement>>::err(Errc::index_full, "sub-bucket at capacity");
    }

    leaf.insert(it, Entry{std::string(key.text()), std::move(placement)});
    ++entries_;
    return std::optional<Placement>(std::nullopt);
  }

  std::optional<Placement> lookup(const Key& key) const {
    const uint64_t h = fnv1a64(key.text());
    std::shared_lock lock(mu_);
    const Bucket& bucket = buckets_[level1_slot(h)];
    const std::vector<Entry>& leaf =
        bucket.expanded ? bucket.subs[sub_slot(h)] : bucket.leaf;
    auto it = find_entry(leaf, key.text());
    if (it != leaf.end() && it->key == key.text()) return it->placement;
    return std::nullopt;
  }

  std::optional<Placement> remove(const Key& key) {
    const uint64_t h = fnv1a64(key.text());
    std::unique_lock lock(mu_);
    Bucket& bucket = buckets_[level1_slot(h)];
    std::vector<Entry>& leaf = leaf_for(bucket, h);
    auto it = find_entry(leaf, key.text());
    if (it == leaf.end() || it->key != key.text()) return std::nullopt;
    Placement out = std::move(it->placement);
    leaf.erase(it);
    --entries_;
    return out;
  }

  IndexStats stats() const {
    std::shared_lock lock(mu_);
    IndexStats s;
    s.entries = entries_;
    s.level1_buckets = buckets_.size();
    for (const Bucket& b : buckets_) {
      if (b.expanded) ++s.expanded_buckets;
    }
    s.max_depth = s.expanded_buckets > 0 ? 2 : 1;
    return s;
  }

  // Every key currently indexed, with its placement. Used for /stats.
  std::vector<std::pair<std::string, Placement>> entries() const {
    std::shared_lock lock(mu_);
    std::vector<std::pair<std::string, Placement>> out;
    out.reserve(entries_);
    for (const Bucket& b : buckets_) {
      if (b.expanded) {
        for (const auto& sub : b.subs) {
          for (const auto& e : sub) out.emplace_back(e.key, e.placement);
        }
      } else {
        for (const auto& e : b.leaf) out.emplace_back(e.key, e.placement);
      }
    }
    return out;
  }

  int level1_bits() const { return level1_bits_; }
  int sub_bits() const { return sub_bits_; }
  size_t leaf_capacity() const { return capacity_; }

 private:
  struct Entry {
    std::string key;
    Placement placement;
  };

  struct Bucket {
    bool expanded = false;
    std::vector<Entry> leaf;               // valid while !expanded
    std::vector<std::vector<Entry>> subs;  // valid once expanded
  };

  size_t level1_slot(uint64_t h) const {
    return level1_bits_ == 0 ? 0 : static_cast<size_t>(h >> (64 - level1_bits_));
  }

  size_t sub_slot(uint64_t h) const {
    if (sub_bits_ == 0) return 0;
    return static_cast<size_t>(h >> (64 - level1_bits_ - sub_bits_)) & ((size_t{1} << sub_bits_) - 1);
  }

  std::vector<Entry>& leaf_for(Bucket& bucket, uint64_t h) {
    return bucket.expanded ? bucket.subs[sub_slot(h)] : bucket.leaf;
  }

  static std::vector<Entry>::iterator find_entry(std::vector<Entry>& leaf, std::string_view key) {
    return std::lower_bound(leaf.begin(), leaf.end(), key,
                            [](const Entry& e, std::string_view k) { return e.key < k; });
  }
  static std::vector<Entry>::const_iterator find_entry(const std::vector<Entry>& leaf,
                                                       std::string_view key) {
    return std::lower_bound(leaf.begin(), leaf.end(), key,
                            [](const Entry& e, std::string_view k) { return e.key < k; });
  }

  void expand(Bucket& bucket) {
    bucket.subs.assign(size_t{1} << sub_bits_, {});
    for (Entry& e : bucket.leaf) {
      bucket.subs[sub_slot(fnv1a64(e.key))].push_back(std::move(e));
    }
    for (auto& sub : bucket.subs) {
      std::sort(sub.begin(), sub.end(), [](const Entry& a, const Entry& b) { return a.key < b.key; });
    }
    bucket.leaf.clear();
    bucket.leaf.shrink_to_fit();
    bucket.expanded = true;
  }

  const int level1_bits_;
  const int sub_bits_;
  const size_t capacity_;
  mutable std::shared_mutex mu_;
  std::vector<Bucket> buckets_;
  uint64_t entries_ = 0;
};

}  // namespace webkv
