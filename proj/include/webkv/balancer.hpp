#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "webkv/config.hpp"
#include "webkv/http_util.hpp"
#include "webkv/route_table.hpp"
#include "webkv/wire.hpp"

namespace webkv {

// The single client entry point. Picks a backend per the configured method,
// proxies the request (following internal redirect hops), fails over to the
// next route slot on transport errors, and probes Down workers back in.
class FrontBalancer {
 public:
  explicit FrontBalancer(NodeConfig cfg) : cfg_(std::move(cfg)) {
    method_ = balancer_method_from_string(cfg_.method).value_or(BalancerMethod::by_requests);
    install_routes();
  }

  ~FrontBalancer() { stop(); }

  bool start() {
    auto addr = parse_listen_addr(cfg_.listen_addr);
    if (!addr) return false;
    host_ = addr->host;
    server_.set_payload_max_length(cfg_.max_value_bytes);
    server_.new_task_queue = [] { return new httplib::ThreadPool(32); };
    if (addr->port == 0) {
      port_ = server_.bind_to_any_port(host_);
      if (port_ <= 0) return false;
    } else {
      if (!server_.bind_to_port(host_, addr->port)) return false;
      port_ = addr->port;
    }
    serve_thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    probe_thread_ = std::thread([this] { probe_loop(); });
    return true;
  }

  void stop() {
    bool was_running = !stopping_.exchange(true);
    if (!was_running) return;
    {
      std::lock_guard lock(probe_mu_);
      probe_cv_.notify_all();
    }
    server_.stop();
    if (probe_thread_.joinable()) probe_thread_.join();
    if (serve_thread_.joinable()) serve_thread_.join();
  }

  int port() const { return port_; }
  std::string base_url() const {
    return "http://" + (host_ == "0.0.0.0" ? std::string("127.0.0.1") : host_) + ":" +
           std::to_string(port_);
  }
  RouteTable& routes() { return routes_; }

 private:
  void install_routes() {
    server_.Get("/file/(.*)", [this](const httplib::Request& req, httplib::Response& res) {
      dispatch_get(req, res);
    });
    server_.Put("/file/(.*)", [this](const httplib::Request& req, httplib::Response& res) {
      forward_put(req, res);
    });
    server_.Post("/register", [this](const httplib::Request& req, httplib::Response& res) {
      auto m = decode_registration(req.body);
      if (!m.ok()) {
        res.status = 400;
        res.set_content(m.message(), "text/plain");
        return;
      }
      size_t slot = routes_.add_worker(m.value());
      res.set_content(nlohmann::json{{"slot", slot}}.dump(), "application/json");
    });
    server_.Delete("/register/(.*)", [this](const httplib::Request& req, httplib::Response& res) {
      routes_.remove_worker(req.matches[1].str());
      res.set_content("{\"ok\":true}", "application/json");
    });
    server_.Get("/stats", [this](const httplib::Request&, httplib::Response& res) {
      nlohmann::json j{{"role", "balancer"},
                       {"method", to_string(method_)},
                       {"routes", routes_.to_json()},
                       {"counters",
                        {{"client_gets", client_gets_.load()},
                         {"client_puts", client_puts_.load()},
                         {"failovers", failovers_.load()},
                         {"exhausted", exhausted_.load()}}}};
      res.set_content(j.dump(), "application/json");
    });
  }

  // GET dispatch: method pick on the first attempt, then ring order from
  // the previously attempted slot, at most max_retries retries. A transport
  // failure anywhere along the redirect chain marks the failed backend Down
  // when the URL maps to a route slot.
  void dispatch_get(const httplib::Request& req, httplib::Response& res) {
    client_gets_++;
    const int attempts = 1 + std::max(0, cfg_.max_retries);
    size_t last_slot = 0;

    for (int attempt = 0; attempt < attempts; ++attempt) {
      Result<PickedWorker> picked =
          attempt == 0 ? routes_.pick(method_) : routes_.next_up_after(last_slot);
      if (!picked.ok()) break;
      const auto& w = picked.value();
      last_slot = w.slot;

      routes_.on_dispatch_start(w.worker_id);
      auto hop = get_following_redirects(w.url + req.target, 2,
                                         std::chrono::milliseconds(cfg_.timeout_ms));
      if (hop.transport_ok) {
        routes_.on_dispatch_done(w.worker_id, hop.body.size());
        res.status = hop.status;
        res.set_header("X-Served-By", w.worker_id);
        res.set_content(std::move(hop.body),
                        hop.content_type.empty() ? "application/octet-stream" : hop.content_type);
        return;
      }

      routes_.on_dispatch_abort(w.worker_id);
      failovers_++;
      mark_down_by_url(hop.failed_url);
    }
    exhausted_++;
    res.status = 503;
    res.set_content("no backend could serve the request", "text/plain");
  }

  void forward_put(const httplib::Request& req, httplib::Response& res) {
    client_puts_++;
    auto parsed = parse_url(cfg_.master_url);
    if (!parsed) {
      res.status = 503;
      res.set_content("master_url misconfigured", "text/plain");
      return;
    }
    auto cli = make_client(*parsed, std::chrono::milliseconds(cfg_.timeout_ms));
    auto r = cli.Put(req.target, req.body,
                     req.get_header_value("Content-Type").empty()
                         ? "application/octet-stream"
                         : req.get_header_value("Content-Type"));
    if (!r) {
      res.status = 503;
      res.set_content("master unreachable", "text/plain");
      return;
    }
    res.status = r->status;
    res.set_content(r->body, r->get_header_value("Content-Type").empty()
                                 ? "text/plain"
                                 : r->get_header_value("Content-Type"));
  }

  void mark_down_by_url(const std::string& failed_url) {
    auto failed = parse_url(failed_url);
    if (!failed) return;
    for (const auto& slot : routes_.snapshot()) {
      auto slot_url = parse_url(slot.url);
      if (slot_url && slot_url->host == failed->host && slot_url->port == failed->port) {
        routes_.mark_down(slot.worker_id);
        return;
      }
    }
  }

  void probe_loop() {
    std::unique_lock lock(probe_mu_);
    while (!stopping_) {
      probe_cv_.wait_for(lock, std::chrono::milliseconds(cfg_.probe_ms));
      if (stopping_) break;
      for (const auto& [id, url] : routes_.down_workers()) {
        auto parsed = parse_url(url);
        if (!parsed) continue;
        auto cli = make_client(*parsed, std::chrono::milliseconds(std::min(cfg_.timeout_ms, 1000)));
        auto r = cli.Get("/stats");
        if (r && r->status == 200) routes_.mark_up(id);
      }
    }
  }

  NodeConfig cfg_;
  BalancerMethod method_ = BalancerMethod::by_requests;
  RouteTable routes_;
  httplib::Server server_;
  std::thread serve_thread_;
  std::thread probe_thread_;
  std::mutex probe_mu_;
  std::condition_variable probe_cv_;
  std::atomic<bool> stopping_{false};
  std::string host_ = "127.0.0.1";
  int port_ = 0;
  std::atomic<uint64_t> client_gets_{0}, client_puts_{0}, failovers_{0}, exhausted_{0};
};

}  // namespace webkv
