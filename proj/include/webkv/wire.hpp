#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

#include "webkv/key.hpp"
#include "webkv/result.hpp"

namespace webkv {

// ---------------------------------------------------------------------------
// Path grammar. Keys travel as the single percent-encoded segment after
// /file/; a decoded '/' is a key violation, not a path separator.
// ---------------------------------------------------------------------------

inline bool is_unreserved(uint8_t c) {
  return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
         c == '-' || c == '.' || c == '_' || c == '~';
}

inline std::string percent_encode(std::string_view raw) {
  static constexpr char hex[] = "0123456789ABCDEF";
  std::string out;
  out.reserve(raw.size());
  for (char ch : raw) {
    uint8_t c = static_cast<uint8_t>(ch);
    if (is_unreserved(c)) {
      out += ch;
    } else {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 0xF];
    }
  }
  return out;
}

inline int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

inline Result<std::string> percent_decode(std::string_view enc) {
  std::string out;
  out.reserve(enc.size());
  for (size_t i = 0; i < enc.size(); ++i) {
    if (enc[i] == '%') {
      if (i + 2 >= enc.size()) {
        return Result<std::string>::err(Errc::bad_path, "truncated percent escape");
      }
      int hi = hex_digit(enc[i + 1]);
      int lo = hex_digit(enc[i + 2]);
      if (hi < 0 || lo < 0) {
        return Result<std::string>::err(Errc::bad_path, "bad percent escape");
      }
      out += static_cast<char>((hi << 4) | lo);
      i += 2;
    } else {
      out += enc[i];
    }
  }
  return out;
}

inline std::string file_path(const Key& key) { return "/file/" + percent_encode(key.text()); }

inline std::string block_path(const Key& key, uint32_t seq) {
  return "/block/" + percent_encode(key.text()) + "/" + std::to_string(seq);
}

// Accepts exactly /file/<segment>. An optional query string is ignored.
inline Result<Key> parse_file_path(std::string_view path) {
  if (auto q = path.find('?'); q != std::string_view::npos) path = path.substr(0, q);
  constexpr std::string_view prefix = "/file/";
  if (path.substr(0, prefix.size()) != prefix) {
    return Result<Key>::err(Errc::bad_path, "path must start with /file/");
  }
  std::string_view segment = path.substr(prefix.size());
  if (segment.empty()) return Result<Key>::err(Errc::bad_path, "empty key segment");
  if (segment.find('/') != std::string_view::npos) {
    return Result<Key>::err(Errc::bad_path, "key segment contains '/'");
  }
  auto decoded = percent_decode(segment);
  if (!decoded.ok()) return Result<Key>::err(decoded.code(), decoded.message());
  return Key::parse(decoded.value());
}

// ---------------------------------------------------------------------------
// Control messages (JSON).
// ---------------------------------------------------------------------------

inline bool valid_worker_id(std::string_view id) {
  if (id.empty() || id.size() > 64) return false;
  for (char c : id) {
    bool ok = (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
              c == '_' || c == '-';
    if (!ok) return false;
  }
  return true;
}

inline bool valid_http_url(std::string_view url) {
  constexpr std::string_view scheme = "http://";
  if (url.substr(0, scheme.size()) != scheme) return false;
  std::string_view rest = url.substr(scheme.size());
  auto slash = rest.find('/');
  std::string_view host = slash == std::string_view::npos ? rest : rest.substr(0, slash);
  return !host.empty();
}

struct RegistrationMessage {
  std::string worker_id;
  std::string base_url;   // absolute http URL, no trailing slash expected
  int load_factor = 1;    // 1..100

  bool operator==(const RegistrationMessage&) const = default;
};

struct HeartbeatMessage {
  std::string worker_id;
  uint64_t stored_bytes = 0;
  uint64_t pending_requests = 0;
  uint64_t served_requests = 0;
  uint64_t transferred_bytes = 0;

  bool operator==(const HeartbeatMessage&) const = default;
};

inline std::string encode_registration(const RegistrationMessage& m) {
  nlohmann::json j{{"worker_id", m.worker_id}, {"base_url", m.base_url}, {"load_factor", m.load_factor}};
  return j.dump();
}

inline Result<RegistrationMessage> decode_registration(std::string_view body) {
  auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    return Result<RegistrationMessage>::err(Errc::schema_error, "not a JSON object");
  }
  RegistrationMessage m;
  if (!j.contains("worker_id") || !j["worker_id"].is_string()) {
    return Result<RegistrationMessage>::err(Errc::schema_error, "missing worker_id");
  }
  if (!j.contains("base_url") || !j["base_url"].is_string()) {
    return Result<RegistrationMessage>::err(Errc::schema_error, "missing base_url");
  }
  if (!j.contains("load_factor") || !j["load_factor"].is_number_integer()) {
    return Result<RegistrationMessage>::err(Errc::schema_error, "missing load_factor");
  }
  m.worker_id = j["worker_id"].get<std::string>();
  m.base_url = j["base_url"].get<std::string>();
  m.load_factor = j["load_factor"].get<int>();
  if (!valid_worker_id(m.worker_id)) {
    return Result<RegistrationMessage>::err(Errc::schema_error, "worker_id must match [A-Za-z0-9_-]{1,64}");
  }
  if (!valid_http_url(m.base_url)) {
    return Result<RegistrationMessage>::err(Errc::schema_error, "base_url must be an absolute http URL");
  }
  if (m.load_factor < 1 || m.load_factor > 100) {
    return Result<RegistrationMessage>::err(Errc::schema_error, "load_factor out of range 1..100");
  }
  return m;
}

inline std::string encode_heartbeat(const HeartbeatMessage& m) {
  nlohmann::json j{{"worker_id", m.worker_id},
                   {"stored_bytes", m.stored_bytes},
                   {"pending_requests", m.pending_requests},
                   {"served_requests", m.served_requests},
                   {"transferred_bytes", m.transferred_bytes}};
  return j.dump();
}

inline Result<HeartbeatMessage> decode_heartbeat(std::string_view body) {
  auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    return Result<HeartbeatMessage>::err(Errc::schema_error, "not a JSON object");
  }
  HeartbeatMessage m;
  if (!j.contains("worker_id") || !j["worker_id"].is_string()) {
    return Result<HeartbeatMessage>::err(Errc::schema_error, "missing worker_id");
  }
  m.worker_id = j["worker_id"].get<std::string>();
  if (!valid_worker_id(m.worker_id)) {
    return Result<HeartbeatMessage>::err(Errc::schema_error, "bad worker_id");
  }
  for (const char* field : {"stored_bytes", "pending_requests", "served_requests", "transferred_bytes"}) {
    if (!j.contains(field) || !j[field].is_number_integer() || j[field].get<int64_t>() < 0) {
      return Result<HeartbeatMessage>::err(Errc::schema_error, std::string("missing or negative ") + field);
    }
  }
  m.stored_bytes = j["stored_bytes"].get<uint64_t>();
  m.pending_requests = j["pending_requests"].get<uint64_t>();
  m.served_requests = j["served_requests"].get<uint64_t>();
  m.transferred_bytes = j["transferred_bytes"].get<uint64_t>();
  return m;
}

}  // namespace webkv
