#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <httplib.h>

namespace webkv {

struct ParsedUrl {
  std::string host;
  int port = 80;
  std::string path = "/";  // path plus query
};

inline std::optional<ParsedUrl> parse_url(std::string_view url) {
  constexpr std::string_view scheme = "http://";
  if (url.substr(0, scheme.size()) != scheme) return std::nullopt;
  std::string_view rest = url.substr(scheme.size());
  ParsedUrl out;
  auto slash = rest.find('/');
  std::string_view authority = slash == std::string_view::npos ? rest : rest.substr(0, slash);
  out.path = slash == std::string_view::npos ? "/" : std::string(rest.substr(slash));
  auto colon = authority.rfind(':');
  if (colon == std::string_view::npos) {
    out.host = std::string(authority);
  } else {
    out.host = std::string(authority.substr(0, colon));
    if (authority.substr(colon + 1).empty()) return std::nullopt;
    int port = 0;
    for (char c : authority.substr(colon + 1)) {
      if (c < '0' || c > '9') return std::nullopt;
      port = port * 10 + (c - '0');
      if (port > 65535) return std::nullopt;
    }
    out.port = port;  // port 0 is the bind-any marker for listen addresses
  }
  if (out.host.empty()) return std::nullopt;
  return out;
}

// "host:port" with no scheme, for node listen addresses.
inline std::optional<ParsedUrl> parse_listen_addr(std::string_view addr) {
  return parse_url("http://" + std::string(addr));
}

inline httplib::Client make_client(const ParsedUrl& u, std::chrono::milliseconds timeout) {
  httplib::Client cli(u.host, u.port);
  cli.set_connection_timeout(timeout);
  cli.set_read_timeout(timeout);
  cli.set_write_timeout(timeout);
  return cli;
}

struct HopResult {
  bool transport_ok = false;    // false means connect/timeout failure
  std::string failed_url;       // URL of the hop that failed, when !transport_ok
  int status = 0;
  std::string body;
  std::string content_type;
};

// GET with manual redirect following (up to max_hops Location hops), so the
// caller sees which absolute URL failed and how many hops were taken.
inline HopResult get_following_redirects(const std::string& url, int max_hops,
                                         std::chrono::milliseconds timeout) {
  HopResult r;
  std::string current = url;
  for (int hop = 0; hop <= max_hops; ++hop) {
    auto parsed = parse_url(current);
    if (!parsed) {
      r.failed_url = current;
      return r;
    }
    auto cli = make_client(*parsed, timeout);
    auto res = cli.Get(parsed->path);
    if (!res) {
      r.failed_url = current;
      return r;
    }
    if (res->status == 301 || res->status == 302 || res->status == 307 || res->status == 308) {
      std::string loc = res->get_header_value("Location");
      if (loc.empty() || hop == max_hops) {
        r.transport_ok = true;
        r.status = 502;
        r.body = "redirect chain too long";
        return r;
      }
      current = loc;
      continue;
    }
    r.transport_ok = true;
    r.status = res->status;
    r.body = std::move(res->body);
    r.content_type = res->get_header_value("Content-Type");
    return r;
  }
  r.failed_url = current;
  return r;
}

inline int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace webkv
