#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "webkv/result.hpp"

namespace webkv {

inline constexpr size_t kMaxKeyBytes = 1024;

// Checks well-formed UTF-8 (any code point, no overlongs/surrogates).
inline bool is_valid_utf8(std::string_view s) {
  size_t i = 0;
  const auto n = s.size();
  while (i < n) {
    uint8_t b = static_cast<uint8_t>(s[i]);
    size_t len;
    uint32_t cp;
    if (b < 0x80) {
      ++i;
      continue;
    } else if ((b & 0xE0) == 0xC0) {
      len = 2;
      cp = b & 0x1F;
    } else if ((b & 0xF0) == 0xE0) {
      len = 3;
      cp = b & 0x0F;
    } else if ((b & 0xF8) == 0xF0) {
      len = 4;
      cp = b & 0x07;
    } else {
      return false;
    }
    if (i + len > n) return false;
    for (size_t j = 1; j < len; ++j) {
      uint8_t c = static_cast<uint8_t>(s[i + j]);
      if ((c & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (c & 0x3F);
    }
    if (len == 2 && cp < 0x80) return false;
    if (len == 3 && (cp < 0x800 || (cp >= 0xD800 && cp <= 0xDFFF))) return false;
    if (len == 4 && (cp < 0x10000 || cp > 0x10FFFF)) return false;
    i += len;
  }
  return true;
}

// A client-visible key: the path segment after /file/.
// Non-empty UTF-8, at most 1024 bytes, no '/' and no control characters.
class Key {
 public:
  static Result<Key> parse(std::string_view text) {
    if (text.empty()) return Result<Key>::err(Errc::bad_key, "key is empty");
    if (text.size() > kMaxKeyBytes) return Result<Key>::err(Errc::bad_key, "key exceeds 1024 bytes");
    for (char c : text) {
      uint8_t b = static_cast<uint8_t>(c);
      if (b == '/') return Result<Key>::err(Errc::bad_key, "key contains '/'");
      if (b < 0x20 || b == 0x7F) return Result<Key>::err(Errc::bad_key, "key contains control character");
    }
    if (!is_valid_utf8(text)) return Result<Key>::err(Errc::bad_key, "key is not valid UTF-8");
    return Key(std::string(text));
  }

  const std::string& text() const { return text_; }

  bool operator==(const Key& other) const { return text_ == other.text_; }
  auto operator<=>(const Key& other) const { return text_ <=> other.text_; }

 private:
  explicit Key(std::string text) : text_(std::move(text)) {}
  std::string text_;
};

}  // namespace webkv
