#pragma once

#include <cassert>
#include <optional>
#include <string>
#include <utility>

namespace webkv {

enum class Errc {
  ok = 0,
  not_found,
  bad_path,
  bad_key,
  schema_error,
  index_full,
  missing_block,
  block_not_found,
  payload_too_large,
  not_enough_workers,
  no_backends,
  unavailable,
  io_error,
};

inline const char* errc_name(Errc e) {
  switch (e) {
    case Errc::ok: return "ok";
    case Errc::not_found: return "not_found";
    case Errc::bad_path: return "bad_path";
    case Errc::bad_key: return "bad_key";
    case Errc::schema_error: return "schema_error";
    case Errc::index_full: return "index_full";
    case Errc::missing_block: return "missing_block";
    case Errc::block_not_found: return "block_not_found";
    case Errc::payload_too_large: return "payload_too_large";
    case Errc::not_enough_workers: return "not_enough_workers";
    case Errc::no_backends: return "no_backends";
    case Errc::unavailable: return "unavailable";
    case Errc::io_error: return "io_error";
  }
  return "unknown";
}

// Minimal result type: either a value or an error code with context.
template <typename T>
class Result {
 public:
  Result(T value) : value_(std::move(value)), code_(Errc::ok) {}  // NOLINT(google-explicit-constructor)
  static Result err(Errc code, std::string message = {}) {
    Result r;
    r.code_ = code;
    r.message_ = std::move(message);
    return r;
  }

  bool ok() const { return code_ == Errc::ok; }
  explicit operator bool() const { return ok(); }
  Errc code() const { return code_; }
  const std::string& message() const { return message_; }

  T& value() {
    assert(ok());
    return *value_;
  }
  const T& value() const {
    assert(ok());
    return *value_;
  }

 private:
  Result() = default;
  std::optional<T> value_;
  Errc code_ = Errc::ok;
  std::string message_;
};

struct Unit {};

using Status = Result<Unit>;

inline Status ok_status() { return Status(Unit{}); }

}  // namespace webkv
