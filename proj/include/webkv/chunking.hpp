#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "webkv/result.hpp"

namespace webkv {

inline constexpr uint64_t kDefaultBlockSize = 4ULL * 1024 * 1024;

// Number of blocks a value of `total_bytes` occupies. An empty value is
// still one (zero-length) block so key existence stays representable.
inline uint32_t block_count_for(uint64_t total_bytes, uint64_t block_size) {
  if (total_bytes == 0) return 1;
  return static_cast<uint32_t>((total_bytes + block_size - 1) / block_size);
}

struct SequencedBlock {
  uint32_t seq = 0;
  std::string payload;
};

// Splits a value into block payloads. Every block except the last has
// length exactly block_size; the concatenation equals the input.
inline std::vector<std::string> chunk(std::string_view value, uint64_t block_size) {
  std::vector<std::string> blocks;
  if (value.empty()) {
    blocks.emplace_back();
    return blocks;
  }
  blocks.reserve(block_count_for(value.size(), block_size));
  for (size_t off = 0; off < value.size(); off += block_size) {
    blocks.emplace_back(value.substr(off, block_size));
  }
  return blocks;
}

// Inverse of chunk. Input must be ordered by seq and contiguous from 0;
// a key always has at least one block.
inline Result<std::string> reassemble(const std::vector<SequencedBlock>& blocks) {
  if (blocks.empty()) {
    return Result<std::string>::err(Errc::missing_block, "a stored key has at least one block");
  }
  size_t total = 0;
  for (size_t i = 0; i < blocks.size(); ++i) {
    if (blocks[i].seq != i) {
      return Result<std::string>::err(
          Errc::missing_block, "gap at seq " + std::to_string(i) + ", got " + std::to_string(blocks[i].seq));
    }
    total += blocks[i].payload.size();
  }
  std::string out;
  out.reserve(total);
  for (const auto& b : blocks) out += b.payload;
  return out;
}

}  // namespace webkv
