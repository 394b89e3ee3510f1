#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "webkv/block_store.hpp"
#include "webkv/config.hpp"
#include "webkv/http_util.hpp"
#include "webkv/wire.hpp"

namespace webkv {

// Load factor from a measured throughput, 10 at the reference, clamped to
// the wire range 1..100.
inline int load_factor_from_throughput(double throughput, double reference) {
  if (reference <= 0) return 1;
  double factor = std::round(throughput / reference * 10.0);
  return static_cast<int>(std::clamp(factor, 1.0, 100.0));
}

// The data node. Serves fully held keys, redirects everything else to the
// master, benchmarks itself for a starting load factor, registers, and
// heartbeats.
class WorkerNode {
 public:
  explicit WorkerNode(NodeConfig cfg)
      : cfg_(std::move(cfg)), store_(cfg_.data_dir, cfg_.block_size) {
    install_routes();
  }

  ~WorkerNode() { stop(); }

  bool start() {
    auto addr = parse_listen_addr(cfg_.listen_addr);
    if (!addr) return false;
    host_ = addr->host;
    server_.set_payload_max_length(cfg_.block_size + (1 << 20));
    server_.new_task_queue = [n = cfg_.worker_threads] { return new httplib::ThreadPool(n); };
    if (addr->port == 0) {
      port_ = server_.bind_to_any_port(host_);
      if (port_ <= 0) return false;
    } else {
      if (!server_.bind_to_port(host_, addr->port)) return false;
      port_ = addr->port;
    }
    serve_thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return true;
  }

  // Self-benchmark, registration at master and balancer (with retries),
  // then the heartbeat loop. Call after start(); false means registration
  // never succeeded and the process should exit nonzero.
  bool startup_sequence() {
    load_factor_ = cfg_.load_factor > 0 ? cfg_.load_factor : measure_load_factor();
    RegistrationMessage m;
    m.worker_id = cfg_.worker_id;
    m.base_url = base_url();
    m.load_factor = load_factor_;
    if (!register_with_retries(cfg_.master_url, m)) return false;
    if (!register_with_retries(cfg_.balancer_url, m)) return false;
    heartbeat_thread_ = std::thread([this] { heartbeat_loop(); });
    return true;
  }

  // Deregisters at balancer and master. Safe to call once before stop().
  void shutdown_sequence() {
    for (const auto& url : {cfg_.balancer_url, cfg_.master_url}) {
      auto parsed = parse_url(url);
      if (!parsed) continue;
      auto cli = make_client(*parsed, std::chrono::milliseconds(cfg_.timeout_ms));
      cli.Delete("/register/" + cfg_.worker_id);
    }
  }

  void stop() {
    bool was_running = !stopping_.exchange(true);
    if (!was_running) return;
    {
      std::lock_guard lock(hb_mu_);
      hb_cv_.notify_all();
    }
    server_.stop();
    if (heartbeat_thread_.joinable()) heartbeat_thread_.join();
    if (serve_thread_.joinable()) serve_thread_.join();
  }

  int port() const { return port_; }
  std::string base_url() const {
    return "http://" + (host_ == "0.0.0.0" ? std::string("127.0.0.1") : host_) + ":" +
           std::to_string(port_);
  }
  int load_factor() const { return load_factor_; }
  BlockStore& store() { return store_; }

 private:
  void install_routes() {
    server_.Get("/file/(.*)", [this](const httplib::Request& req, httplib::Response& res) {
      serve_get(req, res);
    });
    server_.Put("/block/(.*)", [this](const httplib::Request& req, httplib::Response& res) {
      serve_put_block(req, res);
    });
    server_.Delete("/file/(.*)", [this](const httplib::Request& req, httplib::Response& res) {
      serve_delete(req, res);
    });
    server_.Get("/stats", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(stats_json().dump(), "application/json");
    });
  }

  static std::string raw_path(const httplib::Request& req) {
    auto q = req.target.find('?');
    return q == std::string::npos ? req.target : req.target.substr(0, q);
  }

  void serve_get(const httplib::Request& req, httplib::Response& res) {
    pending_++;
    struct Done {
      std::atomic<uint64_t>& p;
      ~Done() { p--; }
    } done{pending_};

    auto key = parse_file_path(raw_path(req));
    if (!key.ok()) {
      res.status = 400;
      res.set_content(key.message(), "text/plain");
      return;
    }
    if (store_.holds_key(key.value())) {
      auto value = store_.read_value(key.value());
      if (!value.ok()) {
        res.status = 500;
        res.set_content("missing block: " + value.message(), "text/plain");
        return;
      }
      served_++;
      transferred_bytes_ += value.value().size();
      res.set_content(std::move(value.value()), "application/octet-stream");
      res.set_header("X-Served-By", cfg_.worker_id);
      return;
    }
    // Not held here. The master knows the placement; bounce back at most
    // once — a request that already came from the master dead-ends as 404.
    if (req.get_param_value("via") == "master") {
      res.status = 404;
      res.set_content("not stored on this worker", "text/plain");
      return;
    }
    res.status = 302;
    res.set_header("Location", cfg_.master_url + file_path(key.value()));
  }

  void serve_put_block(const httplib::Request& req, httplib::Response& res) {
    // target shape: /block/<encoded key>/<seq>
    auto path = raw_path(req);
    constexpr std::string_view prefix = "/block/";
    if (path.size() <= prefix.size() || std::string_view(path).substr(0, prefix.size()) != prefix) {
      res.status = 400;
      res.set_content("expected /block/{key}/{seq}", "text/plain");
      return;
    }
    auto rest = path.substr(prefix.size());
    auto slash = rest.rfind('/');
    if (slash == std::string::npos || slash == 0 || slash + 1 == rest.size()) {
      res.status = 400;
      res.set_content("expected /block/{key}/{seq}", "text/plain");
      return;
    }
    auto decoded = percent_decode(rest.substr(0, slash));
    if (!decoded.ok()) {
      res.status = 400;
      res.set_content(decoded.message(), "text/plain");
      return;
    }
    auto key = Key::parse(decoded.value());
    if (!key.ok()) {
      res.status = 400;
      res.set_content(key.message(), "text/plain");
      return;
    }
    uint32_t seq = 0;
    try {
      seq = static_cast<uint32_t>(std::stoul(rest.substr(slash + 1)));
    } catch (...) {
      res.status = 400;
      res.set_content("bad seq", "text/plain");
      return;
    }

    if (req.body.size() > store_.block_size()) {
      res.status = 413;
      res.set_content("block exceeds block_size", "text/plain");
      return;
    }
    auto st = store_.put_block(BlockId{key.value(), seq}, req.body);
    if (!st.ok()) {
      res.status = st.code() == Errc::payload_too_large ? 413 : 500;
      res.set_content(st.message(), "text/plain");
      return;
    }
    // The manifest publishes last: the key only reads as held once every
    // block of the sequential push has landed.
    uint64_t total_bytes = 0;
    uint32_t block_count = 0;
    if (req.has_header("X-Total-Bytes")) total_bytes = std::stoull(req.get_header_value("X-Total-Bytes"));
    if (req.has_header("X-Block-Count")) {
      block_count = static_cast<uint32_t>(std::stoul(req.get_header_value("X-Block-Count")));
    }
    if (block_count > 0 && seq + 1 == block_count) {
      auto mst = store_.put_manifest(KeyManifest{key.value().text(), total_bytes, block_count});
      if (!mst.ok()) {
        res.status = 500;
        res.set_content(mst.message(), "text/plain");
        return;
      }
    }
    res.status = 201;
    res.set_content("{\"ok\":true}", "application/json");
  }

  void serve_delete(const httplib::Request& req, httplib::Response& res) {
    auto key = parse_file_path(raw_path(req));
    if (!key.ok()) {
      res.status = 400;
      res.set_content(key.message(), "text/plain");
      return;
    }
    size_t n = store_.delete_key(key.value());
    res.set_content(nlohmann::json{{"deleted", n}}.dump(), "application/json");
  }

  nlohmann::json stats_json() {
    nlohmann::json keys = nlohmann::json::array();
    for (const auto& m : store_.list_keys()) {
      keys.push_back({{"key", m.key}, {"total_bytes", m.total_bytes}, {"block_count", m.block_count}});
    }
    return nlohmann::json{{"role", "worker"},
                          {"worker_id", cfg_.worker_id},
                          {"load_factor", load_factor_},
                          {"stored_bytes", store_.stored_bytes()},
                          {"pending", pending_.load()},
                          {"served", served_.load()},
                          {"transferred_bytes", transferred_bytes_.load()},
                          {"keys", keys}};
  }

  // Serve 100 synthetic 64 KiB reads from a scratch corner of the store and
  // scale the measured throughput against the configured reference.
  int measure_load_factor() {
    namespace fs = std::filesystem;
    auto bench_dir = fs::path(cfg_.data_dir) / ".selfbench";
    BlockStore bench(bench_dir, cfg_.block_size);
    auto key = Key::parse("selfbench").value();
    if (!bench.write_value(key, std::string(64 * 1024, 'b')).ok()) return 1;

    constexpr int kReads = 100;
    for (int i = 0; i < 20; ++i) {
      if (!bench.read_value(key).ok()) return 1;  // warmup, unmeasured
    }
    // median of three runs, shielding the factor from transient stalls
    std::array<double, 3> throughput{};
    for (auto& t : throughput) {
      auto begin = std::chrono::steady_clock::now();
      for (int i = 0; i < kReads; ++i) {
        auto v = bench.read_value(key);
        if (!v.ok()) return 1;
      }
      auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - begin).count();
      t = elapsed > 0 ? kReads / elapsed : 1e9;
    }
    std::error_code ec;
    fs::remove_all(bench_dir, ec);
    std::sort(throughput.begin(), throughput.end());
    return load_factor_from_throughput(throughput[1], cfg_.reference_throughput);
  }

  bool register_with_retries(const std::string& url, const RegistrationMessage& m) {
    auto parsed = parse_url(url);
    if (!parsed) return false;
    for (int attempt = 0; attempt < 10; ++attempt) {
      auto cli = make_client(*parsed, std::chrono::milliseconds(cfg_.timeout_ms));
      auto r = cli.Post("/register", encode_registration(m), "application/json");
      if (r && r->status == 200) return true;
      std::this_thread::sleep_for(std::chrono::milliseconds(100 * (attempt + 1)));
    }
    return false;
  }

  void heartbeat_loop() {
    std::unique_lock lock(hb_mu_);
    while (!stopping_) {
      hb_cv_.wait_for(lock, std::chrono::milliseconds(cfg_.heartbeat_ms));
      if (stopping_) break;

      HeartbeatMessage m;
      m.worker_id = cfg_.worker_id;
      m.stored_bytes = store_.stored_bytes();
      m.pending_requests = pending_.load();
      m.served_requests = served_.load();
      m.transferred_bytes = transferred_bytes_.load();

      auto parsed = parse_url(cfg_.master_url);
      if (!parsed) continue;
      auto cli = make_client(*parsed, std::chrono::milliseconds(cfg_.timeout_ms));
      auto r = cli.Post("/heartbeat", encode_heartbeat(m), "application/json");
      if (r && r->status == 200) {
        auto j = nlohmann::json::parse(r->body, nullptr, false);
        if (!j.is_discarded() && j.contains("known") && j["known"] == false) {
          // A restarted master does not know us: rejoin both control planes.
          RegistrationMessage reg;
          reg.worker_id = cfg_.worker_id;
          reg.base_url = base_url();
          reg.load_factor = load_factor_;
          register_with_retries(cfg_.master_url, reg);
          register_with_retries(cfg_.balancer_url, reg);
        }
      }
    }
  }

  NodeConfig cfg_;
  BlockStore store_;
  httplib::Server server_;
  std::thread serve_thread_;
  std::thread heartbeat_thread_;
  std::mutex hb_mu_;
  std::condition_variable hb_cv_;
  std::atomic<bool> stopping_{false};
  std::string host_ = "127.0.0.1";
  int port_ = 0;
  int load_factor_ = 1;
  std::atomic<uint64_t> pending_{0}, served_{0}, transferred_bytes_{0};
};

}  // namespace webkv
