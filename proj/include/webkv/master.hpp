#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "webkv/block_store.hpp"
#include "webkv/config.hpp"
#include "webkv/http_util.hpp"
#include "webkv/index.hpp"
#include "webkv/placement.hpp"
#include "webkv/registry.hpp"
#include "webkv/wire.hpp"

namespace webkv {

// The index-owning node. Answers client GETs with a redirect to a live
// holder, proxies PUTs to the placed workers block by block, and tracks
// worker liveness from heartbeats.
class MasterNode {
 public:
  explicit MasterNode(NodeConfig cfg)
      : cfg_(std::move(cfg)), registry_(std::chrono::milliseconds(cfg_.failure_after_ms)) {
    install_routes();
  }

  ~MasterNode() { stop(); }

  bool start() {
    auto addr = parse_listen_addr(cfg_.listen_addr);
    if (!addr) return false;
    host_ = addr->host;
    server_.set_payload_max_length(cfg_.max_value_bytes);
    server_.new_task_queue = [] { return new httplib::ThreadPool(16); };
    if (addr->port == 0) {
      port_ = server_.bind_to_any_port(host_);
      if (port_ <= 0) return false;
    } else {
      if (!server_.bind_to_port(host_, addr->port)) return false;
      port_ = addr->port;
    }
    serve_thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    detector_thread_ = std::thread([this] { detector_loop(); });
    return true;
  }

  void stop() {
    bool was_running = !stopping_.exchange(true);
    if (!was_running) return;
    {
      std::lock_guard lock(detector_mu_);
      detector_cv_.notify_all();
    }
    server_.stop();
    if (detector_thread_.joinable()) detector_thread_.join();
    if (serve_thread_.joinable()) serve_thread_.join();
  }

  int port() const { return port_; }
  std::string base_url() const { return "http://" + advertise_host() + ":" + std::to_string(port_); }

  MultiLevelIndex& index() { return index_; }
  WorkerRegistry& registry() { return registry_; }

 private:
  std::string advertise_host() const { return host_ == "0.0.0.0" ? "127.0.0.1" : host_; }

  void install_routes() {
    server_.Get("/file/(.*)", [this](const httplib::Request& req, httplib::Response& res) {
      handle_get(req, res);
    });
    server_.Put("/file/(.*)", [this](const httplib::Request& req, httplib::Response& res) {
      handle_put(req, res);
    });
    server_.Post("/register", [this](const httplib::Request& req, httplib::Response& res) {
      handle_register(req, res);
    });
    server_.Delete("/register/(.*)", [this](const httplib::Request& req, httplib::Response& res) {
      registry_.deregister_worker(req.matches[1].str());
      res.set_content("{\"ok\":true}", "application/json");
    });
    server_.Post("/heartbeat", [this](const httplib::Request& req, httplib::Response& res) {
      handle_heartbeat(req, res);
    });
    server_.Get("/stats", [this](const httplib::Request&, httplib::Response& res) {
      res.set_content(stats_json().dump(), "application/json");
    });
  }

  static std::string raw_path(const httplib::Request& req) {
    auto q = req.target.find('?');
    return q == std::string::npos ? req.target : req.target.substr(0, q);
  }

  void handle_get(const httplib::Request& req, httplib::Response& res) {
    gets_++;
    auto key = parse_file_path(raw_path(req));
    if (!key.ok()) {
      res.status = 400;
      res.set_content(key.message(), "text/plain");
      return;
    }
    auto placement = index_.lookup(key.value());
    if (!placement) {
      res.status = 404;
      res.set_content("key not indexed", "text/plain");
      return;
    }
    // Primary first, then replicas in order; first Up holder wins.
    for (const auto& holder : placement->holders()) {
      if (!registry_.is_up(holder)) continue;
      auto url = registry_.base_url(holder);
      if (!url) continue;
      redirects_++;
      res.status = 302;
      res.set_header("Location", *url + file_path(key.value()) + "?via=master");
      return;
    }
    res.status = 503;
    res.set_content("no live holder for key", "text/plain");
  }

  void handle_put(const httplib::Request& req, httplib::Response& res) {
    puts_++;
    auto key = parse_file_path(raw_path(req));
    if (!key.ok()) {
      res.status = 400;
      res.set_content(key.message(), "text/plain");
      return;
    }
    if (req.body.size() > cfg_.max_value_bytes) {
      res.status = 413;
      res.set_content("value exceeds max_value_bytes", "text/plain");
      return;
    }

    auto up = registry_.up_worker_ids();
    auto placed = place(key.value(), up, cfg_.replication, req.body.size(), cfg_.block_size);
    if (!placed.ok()) {
      res.status = 503;
      res.set_content("fewer than replication workers up: " + placed.message(), "text/plain");
      return;
    }
    const Placement& placement = placed.value();

    // An overwrite replaces the placement wholesale: drop the old blocks
    // first so stale higher-seq files cannot linger.
    if (auto old = index_.lookup(key.value())) {
      delete_at_holders(key.value(), old->holders());
    }

    auto blocks = chunk(req.body, cfg_.block_size);
    const auto holders = placement.holders();
    for (const auto& holder : holders) {
      auto url = registry_.base_url(holder);
      if (!url || !push_blocks(*url, key.value(), blocks, req.body.size())) {
        delete_at_holders(key.value(), holders);  // best-effort rollback
        res.status = 503;
        res.set_content("block write to " + holder + " failed", "text/plain");
        return;
      }
    }

    auto inserted = index_.insert(key.value(), placement);
    if (!inserted.ok()) {
      delete_at_holders(key.value(), holders);
      res.status = 500;
      res.set_content("index insert failed: " + inserted.message(), "text/plain");
      return;
    }
    res.status = 201;
    nlohmann::json j{{"key", key.value().text()},
                     {"total_bytes", placement.total_bytes},
                     {"block_count", placement.block_count},
                     {"primary", placement.primary_worker},
                     {"replicas", placement.replicas}};
    res.set_content(j.dump(), "application/json");
  }

  bool push_blocks(const std::string& base_url, const Key& key, const std::vector<std::string>& blocks,
                   uint64_t total_bytes) {
    auto parsed = parse_url(base_url);
    if (!parsed) return false;
    auto cli = make_client(*parsed, std::chrono::milliseconds(cfg_.timeout_ms));
    for (uint32_t seq = 0; seq < blocks.size(); ++seq) {
      httplib::Headers headers{{"X-Total-Bytes", std::to_string(total_bytes)},
                               {"X-Block-Count", std::to_string(blocks.size())}};
      auto r = cli.Put(block_path(key, seq), headers, blocks[seq], "application/octet-stream");
      if (!r || r->status != 201) return false;
    }
    return true;
  }

  void delete_at_holders(const Key& key, const std::vector<WorkerId>& holders) {
    for (const auto& holder : holders) {
      auto url = registry_.base_url(holder);
      if (!url) continue;
      auto parsed = parse_url(*url);
      if (!parsed) continue;
      auto cli = make_client(*parsed, std::chrono::milliseconds(cfg_.timeout_ms));
      cli.Delete(file_path(key));
    }
  }

  void handle_register(const httplib::Request& req, httplib::Response& res) {
    auto m = decode_registration(req.body);
    if (!m.ok()) {
      res.status = 400;
      res.set_content(m.message(), "text/plain");
      return;
    }
    registry_.register_worker(m.value(), std::chrono::steady_clock::now());
    // Pull the worker's key report so an index lost to a restart rebuilds
    // as workers re-register.
    merge_key_report(m.value());
    res.set_content("{\"ok\":true}", "application/json");
  }

  void merge_key_report(const RegistrationMessage& m) {
    auto parsed = parse_url(m.base_url);
    if (!parsed) return;
    auto cli = make_client(*parsed, std::chrono::milliseconds(cfg_.timeout_ms));
    auto r = cli.Get("/stats");
    if (!r || r->status != 200) return;
    auto j = nlohmann::json::parse(r->body, nullptr, false);
    if (j.is_discarded() || !j.contains("keys") || !j["keys"].is_array()) return;

    for (const auto& item : j["keys"]) {
      if (!item.contains("key") || !item.contains("total_bytes") || !item.contains("block_count")) continue;
      auto key = Key::parse(item["key"].get<std::string>());
      if (!key.ok()) continue;
      uint64_t total_bytes = item["total_bytes"].get<uint64_t>();
      uint32_t block_count = item["block_count"].get<uint32_t>();

      auto existing = index_.lookup(key.value());
      if (existing && existing->total_bytes != total_bytes) {
        // Stale copy from a worker that missed an overwrite while down.
        delete_at_holders(key.value(), {m.worker_id});
        continue;
      }
      std::vector<WorkerId> holders;
      if (existing) {
        holders = existing->holders();
        if (std::find(holders.begin(), holders.end(), m.worker_id) != holders.end()) continue;
      }
      holders.push_back(m.worker_id);
      holders = rank_workers(std::move(holders), key.value().text());
      Placement p;
      p.primary_worker = holders.front();
      p.replicas.assign(holders.begin() + 1, holders.end());
      p.total_bytes = total_bytes;
      p.block_count = block_count;
      (void)index_.insert(key.value(), p);
    }
  }

  void handle_heartbeat(const httplib::Request& req, httplib::Response& res) {
    auto m = decode_heartbeat(req.body);
    if (!m.ok()) {
      res.status = 400;
      res.set_content(m.message(), "text/plain");
      return;
    }
    bool known = registry_.on_heartbeat(m.value(), std::chrono::steady_clock::now());
    if (!known) unknown_heartbeats_++;
    res.set_content(known ? "{\"known\":true}" : "{\"known\":false}", "application/json");
  }

  nlohmann::json stats_json() {
    auto s = index_.stats();
    nlohmann::json workers = nlohmann::json::array();
    auto now = std::chrono::steady_clock::now();
    for (const auto& r : registry_.snapshot()) {
      workers.push_back(
          {{"worker_id", r.descriptor.worker_id},
           {"base_url", r.descriptor.base_url},
           {"load_factor", r.descriptor.load_factor},
           {"state", r.up ? "up" : "down"},
           {"ms_since_heartbeat",
            std::chrono::duration_cast<std::chrono::milliseconds>(now - r.last_heartbeat).count()},
           {"stored_bytes", r.stored_bytes},
           {"served_requests", r.served_requests}});
    }
    return nlohmann::json{{"role", "master"},
                          {"index",
                           {{"entries", s.entries},
                            {"level1_buckets", s.level1_buckets},
                            {"expanded_buckets", s.expanded_buckets},
                            {"max_depth", s.max_depth}}},
                          {"workers", workers},
                          {"counters",
                           {{"gets", gets_.load()},
                            {"puts", puts_.load()},
                            {"redirects", redirects_.load()},
                            {"unknown_heartbeats", unknown_heartbeats_.load()}}}};
  }

  void detector_loop() {
    std::unique_lock lock(detector_mu_);
    while (!stopping_) {
      detector_cv_.wait_for(lock, std::chrono::milliseconds(cfg_.heartbeat_ms));
      if (stopping_) break;
      registry_.detect_failures(std::chrono::steady_clock::now());
    }
  }

  NodeConfig cfg_;
  MultiLevelIndex index_;
  WorkerRegistry registry_;
  httplib::Server server_;
  std::thread serve_thread_;
  std::thread detector_thread_;
  std::mutex detector_mu_;
  std::condition_variable detector_cv_;
  std::atomic<bool> stopping_{false};
  std::string host_ = "127.0.0.1";
  int port_ = 0;
  std::atomic<uint64_t> gets_{0}, puts_{0}, redirects_{0}, unknown_heartbeats_{0};
};

}  // namespace webkv
