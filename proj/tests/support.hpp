#pragma once

// Test-side reference implementations, independent of the library code they
// check. The FNV constants are the published ones; everything else is a
// straight transcription of the documented algorithms.

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace testsupport {

inline uint64_t ref_fnv1a64(const std::string& bytes) {
  uint64_t h = 14695981039346656037ULL;
  for (char c : bytes) {
    h ^= static_cast<uint8_t>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

inline uint64_t ref_rendezvous_score(const std::string& worker, const std::string& key) {
  return ref_fnv1a64(worker + std::string(1, '\0') + key);
}

// Step-by-step weighted most-available simulation.
struct SwrrOracle {
  std::vector<std::string> ids;
  std::vector<int> factors;
  std::vector<long long> status;

  SwrrOracle(std::vector<std::string> ids_, std::vector<int> factors_)
      : ids(std::move(ids_)), factors(std::move(factors_)), status(ids.size(), 0) {}

  std::string pick() {
    long long total = 0;
    for (int f : factors) total += f;
    size_t best = 0;
    for (size_t i = 0; i < ids.size(); ++i) {
      status[i] += factors[i];
      if (status[i] > status[best] || (status[i] == status[best] && ids[i] < ids[best])) {
        best = i;
      }
    }
    status[best] -= total;
    return ids[best];
  }
};

// Keys whose top-2 hash bits (the level-2 slot when b=0, s=2) stay within
// per-class quota, so a capacity-4 index never overflows a sub-bucket.
inline std::vector<std::string> curated_universe(size_t per_class_quota, size_t max_total) {
  std::vector<std::string> out;
  std::map<uint64_t, size_t> per_class;
  for (int i = 0; i < 100000 && out.size() < max_total; ++i) {
    std::string k = "key" + std::to_string(i);
    uint64_t cls = ref_fnv1a64(k) >> 62;
    if (per_class[cls] < per_class_quota) {
      per_class[cls]++;
      out.push_back(k);
    }
  }
  return out;
}

inline std::string random_bytes(std::mt19937_64& rng, size_t n) {
  std::string out(n, '\0');
  for (auto& c : out) c = static_cast<char>(rng() & 0xFF);
  return out;
}

inline std::string random_key_text(std::mt19937_64& rng) {
  static const std::string alphabet =
      "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-._~ %+=@"
      "\xC3\xA9";  // includes space, percent, and a spot for multibyte below
  size_t len = 1 + rng() % 24;
  std::string out;
  for (size_t i = 0; i < len; ++i) {
    if (rng() % 8 == 0) {
      out += "\xC3\xA9";  // é
    } else if (rng() % 16 == 0) {
      out += "\xE2\x82\xAC";  // €
    } else {
      out += alphabet[rng() % 62];
    }
  }
  return out;
}

}  // namespace testsupport
