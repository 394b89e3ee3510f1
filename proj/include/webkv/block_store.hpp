#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "webkv/chunking.hpp"
#include "webkv/hash.hpp"
#include "webkv/key.hpp"
#include "webkv/result.hpp"

namespace webkv {

struct BlockId {
  Key key;
  uint32_t seq = 0;
};

// What a worker knows about a stored key. Lives as meta.json next to the
// block files so a restarted process (and the master, via key reports) can
// recover the key name and expected size.
struct KeyManifest {
  std::string key;
  uint64_t total_bytes = 0;
  uint32_t block_count = 1;
};

// One directory per key at data_dir/<hex fnv1a64(key)>/, one file per block
// at <seq>.blk. Blocks publish atomically: payload goes to a temp file in
// the same directory, then renames over the final name.
class BlockStore {
 public:
  BlockStore(std::filesystem::path data_dir, uint64_t block_size = kDefaultBlockSize)
      : data_dir_(std::move(data_dir)), block_size_(block_size) {
    std::error_code ec;
    std::filesystem::create_directories(data_dir_, ec);
    stored_bytes_ = scan_stored_bytes();
  }

  uint64_t block_size() const { return block_size_; }
  const std::filesystem::path& data_dir() const { return data_dir_; }
  uint64_t stored_bytes() const { return stored_bytes_.load(); }

  Status put_block(const BlockId& id, std::string_view bytes) {
    if (bytes.size() > block_size_) {
      return Status::err(Errc::payload_too_large,
                         std::to_string(bytes.size()) + " > block_size " + std::to_string(block_size_));
    }
    const auto dir = key_dir(id.key.text());
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) return Status::err(Errc::io_error, "create_directories: " + ec.message());

    const auto tmp = dir / (std::to_string(id.seq) + ".blk.tmp." +
                            std::to_string(tmp_counter_.fetch_add(1)));
    const auto final_path = dir / (std::to_string(id.seq) + ".blk");
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) return Status::err(Errc::io_error, "open " + tmp.string());
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      if (!out.flush()) {
        std::filesystem::remove(tmp, ec);
        return Status::err(Errc::io_error, "write " + tmp.string());
      }
    }
    {
      // Publish under the lock so same-block publishes serialize and the
      // byte accounting stays exact.
      std::lock_guard lock(mu_);
      uint64_t old_size = 0;
      if (auto sz = std::filesystem::file_size(final_path, ec); !ec) old_size = sz;
      ec.clear();
      std::filesystem::rename(tmp, final_path, ec);
      if (ec) {
        std::filesystem::remove(tmp, ec);
        return Status::err(Errc::io_error, "rename: " + ec.message());
      }
      stored_bytes_ += bytes.size();
      stored_bytes_ -= old_size;
    }
    return ok_status();
  }

  Result<std::string> get_block(const BlockId& id) const {
    const auto path = key_dir(id.key.text()) / (std::to_string(id.seq) + ".blk");
    std::ifstream in(path, std::ios::binary);
    if (!in) {
      return Result<std::string>::err(Errc::block_not_found,
                                      id.key.text() + "/" + std::to_string(id.seq));
    }
    in.seekg(0, std::ios::end);
    auto size = in.tellg();
    if (size < 0) return Result<std::string>::err(Errc::io_error, "size " + path.string());
    in.seekg(0, std::ios::beg);
    std::string out(static_cast<size_t>(size), '\0');
    if (size > 0) in.read(out.data(), size);
    if (in.bad() || in.gcount() != size) {
      return Result<std::string>::err(Errc::io_error, "read " + path.string());
    }
    return out;
  }

  // Removes every block of the key. Returns the number of blocks deleted.
  size_t delete_key(const Key& key) {
    const auto dir = key_dir(key.text());
    std::error_code ec;
    size_t blocks = 0;
    uint64_t bytes = 0;
    {
      std::lock_guard lock(mu_);
      for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
        if (entry.path().extension() == ".blk") {
          ++blocks;
          if (auto sz = entry.file_size(ec); !ec) bytes += sz;
          ec.clear();
        }
      }
      std::filesystem::remove_all(dir, ec);
      stored_bytes_ -= bytes;
    }
    return blocks;
  }

  Status put_manifest(const KeyManifest& m) {
    const auto dir = key_dir(m.key);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) return Status::err(Errc::io_error, "create_directories: " + ec.message());
    nlohmann::json j{{"key", m.key}, {"total_bytes", m.total_bytes}, {"block_count", m.block_count}};
    const auto tmp = dir / ("meta.json.tmp." + std::to_string(tmp_counter_.fetch_add(1)));
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) return Status::err(Errc::io_error, "open " + tmp.string());
      out << j.dump();
      if (!out.flush()) return Status::err(Errc::io_error, "write " + tmp.string());
    }
    std::filesystem::rename(tmp, dir / "meta.json", ec);
    if (ec) return Status::err(Errc::io_error, "rename: " + ec.message());
    return ok_status();
  }

  std::optional<KeyManifest> manifest(const Key& key) const { return read_manifest(key_dir(key.text())); }

  bool holds_key(const Key& key) const { return manifest(key).has_value(); }

  // Reads and reassembles the whole value; MissingBlock on any gap and on a
  // length that disagrees with the manifest.
  Result<std::string> read_value(const Key& key) const {
    auto m = manifest(key);
    if (!m) return Result<std::string>::err(Errc::block_not_found, "no manifest for key");
    std::string out;
    out.reserve(m->total_bytes);
    for (uint32_t seq = 0; seq < m->block_count; ++seq) {
      auto block = get_block(BlockId{key, seq});
      if (!block.ok()) {
        return Result<std::string>::err(Errc::missing_block,
                                        "block " + std::to_string(seq) + " of " + key.text());
      }
      out += block.value();
    }
    if (out.size() != m->total_bytes) {
      return Result<std::string>::err(Errc::missing_block, "reassembled size mismatch");
    }
    return out;
  }

  // Chunks and stores a whole value with its manifest.
  Status write_value(const Key& key, std::string_view value) {
    auto blocks = chunk(value, block_size_);
    for (uint32_t seq = 0; seq < blocks.size(); ++seq) {
      if (auto st = put_block(BlockId{key, seq}, blocks[seq]); !st.ok()) return st;
    }
    return put_manifest(KeyManifest{key.text(), value.size(), static_cast<uint32_t>(blocks.size())});
  }

  // Every key with a manifest. The worker's /stats key report.
  std::vector<KeyManifest> list_keys() const {
    std::vector<KeyManifest> out;
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(data_dir_, ec)) {
      if (!entry.is_directory(ec)) continue;
      if (auto m = read_manifest(entry.path())) out.push_back(std::move(*m));
    }
    return out;
  }

  std::filesystem::path key_dir(std::string_view key_text) const {
    return data_dir_ / to_hex16(fnv1a64(key_text));
  }

 private:
  static std::optional<KeyManifest> read_manifest(const std::filesystem::path& dir) {
    std::ifstream in(dir / "meta.json", std::ios::binary);
    if (!in) return std::nullopt;
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    if (!j.contains("key") || !j.contains("total_bytes") || !j.contains("block_count")) {
      return std::nullopt;
    }
    KeyManifest m;
    m.key = j["key"].get<std::string>();
    m.total_bytes = j["total_bytes"].get<uint64_t>();
    m.block_count = j["block_count"].get<uint32_t>();
    return m;
  }

  uint64_t scan_stored_bytes() const {
    uint64_t total = 0;
    std::error_code ec;
    for (const auto& dir : std::filesystem::directory_iterator(data_dir_, ec)) {
      if (!dir.is_directory(ec)) continue;
      std::error_code ec2;
      for (const auto& f : std::filesystem::directory_iterator(dir.path(), ec2)) {
        if (f.path().extension() == ".blk") {
          if (auto sz = f.file_size(ec2); !ec2) total += sz;
          ec2.clear();
        }
      }
    }
    return total;
  }

  std::filesystem::path data_dir_;
  uint64_t block_size_;
  std::mutex mu_;
  std::atomic<uint64_t> stored_bytes_{0};
  std::atomic<uint64_t> tmp_counter_{0};
};

}  // namespace webkv
