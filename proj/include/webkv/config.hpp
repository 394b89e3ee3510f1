#pragma once

#include <cstdint>
#include <fstream>
#include <string>

#include <json.hpp>

#include "webkv/chunking.hpp"
#include "webkv/result.hpp"
#include "webkv/route_table.hpp"

namespace webkv {

// One JSON config file drives any node role. Unknown fields are ignored;
// absent fields take the defaults below.
struct NodeConfig {
  std::string role;                       // "master" | "worker" | "balancer"
  std::string listen_addr = "127.0.0.1:0";
  std::string worker_id;                  // workers only
  std::string master_url;                 // workers + balancer
  std::string balancer_url;               // workers only
  std::string data_dir;                   // workers only
  uint64_t block_size = kDefaultBlockSize;
  unsigned replication = 1;
  std::string method = "byrequests";
  int heartbeat_ms = 1000;
  int failure_after_ms = 3000;
  double reference_throughput = 1000.0;   // req/s for the startup self-benchmark
  int load_factor = 0;                    // 0 = measure via self-benchmark, 1..100 = pinned
  int timeout_ms = 5000;
  int max_retries = 2;
  int probe_ms = 2000;
  uint64_t max_value_bytes = 1ULL << 30;
  int worker_threads = 4;                 // request-handler pool size (workers)
};

inline Result<NodeConfig> parse_config(const nlohmann::json& j) {
  using R = Result<NodeConfig>;
  if (!j.is_object()) return R::err(Errc::schema_error, "config must be a JSON object");
  NodeConfig c;
  if (!j.contains("role") || !j["role"].is_string()) return R::err(Errc::schema_error, "missing role");
  c.role = j["role"].get<std::string>();
  if (c.role != "master" && c.role != "worker" && c.role != "balancer") {
    return R::err(Errc::schema_error, "role must be master|worker|balancer");
  }

  auto str = [&](const char* name, std::string& out) -> bool {
    if (!j.contains(name)) return true;
    if (!j[name].is_string()) return false;
    out = j[name].get<std::string>();
    return true;
  };
  auto num = [&](const char* name, auto& out) -> bool {
    if (!j.contains(name)) return true;
    if (!j[name].is_number()) return false;
    out = j[name].get<std::decay_t<decltype(out)>>();
    return true;
  };

  if (!str("listen_addr", c.listen_addr)) return R::err(Errc::schema_error, "listen_addr must be a string");
  if (!str("worker_id", c.worker_id)) return R::err(Errc::schema_error, "worker_id must be a string");
  if (!str("master_url", c.master_url)) return R::err(Errc::schema_error, "master_url must be a string");
  if (!str("balancer_url", c.balancer_url)) return R::err(Errc::schema_error, "balancer_url must be a string");
  if (!str("data_dir", c.data_dir)) return R::err(Errc::schema_error, "data_dir must be a string");
  if (!str("method", c.method)) return R::err(Errc::schema_error, "method must be a string");
  if (!num("block_size", c.block_size)) return R::err(Errc::schema_error, "block_size must be a number");
  if (!num("replication", c.replication)) return R::err(Errc::schema_error, "replication must be a number");
  if (!num("heartbeat_ms", c.heartbeat_ms)) return R::err(Errc::schema_error, "heartbeat_ms must be a number");
  if (!num("failure_after_ms", c.failure_after_ms)) {
    return R::err(Errc::schema_error, "failure_after_ms must be a number");
  }
  if (!num("reference_throughput", c.reference_throughput)) {
    return R::err(Errc::schema_error, "reference_throughput must be a number");
  }
  if (!num("load_factor", c.load_factor)) {
    return R::err(Errc::schema_error, "load_factor must be a number");
  }
  if (c.load_factor < 0 || c.load_factor > 100) {
    return R::err(Errc::schema_error, "load_factor must be 0 (auto) or 1..100");
  }
  if (!num("timeout_ms", c.timeout_ms)) return R::err(Errc::schema_error, "timeout_ms must be a number");
  if (!num("max_retries", c.max_retries)) return R::err(Errc::schema_error, "max_retries must be a number");
  if (!num("probe_ms", c.probe_ms)) return R::err(Errc::schema_error, "probe_ms must be a number");
  if (!num("max_value_bytes", c.max_value_bytes)) {
    return R::err(Errc::schema_error, "max_value_bytes must be a number");
  }
  if (!num("worker_threads", c.worker_threads)) {
    return R::err(Errc::schema_error, "worker_threads must be a number");
  }

  if (c.block_size == 0) return R::err(Errc::schema_error, "block_size must be >= 1");
  if (c.replication < 1) return R::err(Errc::schema_error, "replication must be >= 1");
  if (c.heartbeat_ms < 1) return R::err(Errc::schema_error, "heartbeat_ms must be >= 1");
  if (c.worker_threads < 1) return R::err(Errc::schema_error, "worker_threads must be >= 1");
  if (!balancer_method_from_string(c.method)) {
    return R::err(Errc::schema_error, "method must be byrequests|bytraffic|bybusyness");
  }
  if (c.role == "worker") {
    if (c.worker_id.empty()) return R::err(Errc::schema_error, "worker requires worker_id");
    if (!valid_worker_id(c.worker_id)) return R::err(Errc::schema_error, "bad worker_id");
    if (c.data_dir.empty()) return R::err(Errc::schema_error, "worker requires data_dir");
    if (c.master_url.empty()) return R::err(Errc::schema_error, "worker requires master_url");
    if (c.balancer_url.empty()) return R::err(Errc::schema_error, "worker requires balancer_url");
  }
  if (c.role == "balancer" && c.master_url.empty()) {
    return R::err(Errc::schema_error, "balancer requires master_url");
  }
  return c;
}

inline Result<NodeConfig> load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) return Result<NodeConfig>::err(Errc::io_error, "cannot open " + path);
  auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) return Result<NodeConfig>::err(Errc::schema_error, "invalid JSON in " + path);
  return parse_config(j);
}

}  // namespace webkv
