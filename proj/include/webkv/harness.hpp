#pragma once

#include <fcntl.h>
#include <sys/types.h>
#include <sys/wait.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>
#include <spawn.h>
#include <unistd.h>

#include "webkv/chunking.hpp"
#include "webkv/http_util.hpp"
#include "webkv/result.hpp"
#include "webkv/wire.hpp"

extern "C" char** environ;

namespace webkv {

struct SpawnSpec {
  int workers = 1;
  unsigned replication = 1;
  uint64_t block_size = kDefaultBlockSize;
  std::string method = "byrequests";
  int heartbeat_ms = 500;
  int failure_after_ms = 1500;
  int probe_ms = 1000;
  int timeout_ms = 5000;
  int max_retries = 2;
  int worker_threads = 4;
  // Pinned so spawned clusters have equal weights; 0 switches a worker to
  // the measured self-benchmark factor.
  int load_factor = 10;
  double reference_throughput = 1000.0;
  int startup_timeout_ms = 5000;
};

struct WorkloadSpec {
  int n_clients = 16;
  int n_requests = 1000;
  double read_ratio = 1.0;
  size_t value_size = 1 << 20;
  uint64_t seed = 1;
};

struct WorkloadStats {
  double avg_ms = 0;
  double p95_ms = 0;
  std::map<std::string, uint64_t> per_worker_served;
  uint64_t errors = 0;
  uint64_t reads_ok = 0;
  uint64_t writes_ok = 0;
  double wall_seconds = 0;
  uint64_t samples = 0;
};

// Spawns a balancer + master + N workers as separate OS processes on
// loopback ports, so kill -9 fault injection is honest. Node stdout/stderr
// land in per-node log files under the cluster root.
class ClusterHandle {
 public:
  static Result<std::unique_ptr<ClusterHandle>> spawn(const std::string& cli_binary,
                                                      const SpawnSpec& spec,
                                                      std::filesystem::path root = {}) {
    using R = Result<std::unique_ptr<ClusterHandle>>;
    if (spec.workers < 1) return R::err(Errc::schema_error, "spawn requires workers >= 1");

    auto handle = std::unique_ptr<ClusterHandle>(new ClusterHandle());
    handle->bin_ = cli_binary;
    handle->spec_ = spec;
    if (root.empty()) {
      static std::atomic<int> counter{0};
      root = std::filesystem::temp_directory_path() /
             ("webkv-cluster-" + std::to_string(::getpid()) + "-" +
              std::to_string(counter.fetch_add(1)));
    }
    handle->root_ = root;
    std::filesystem::create_directories(root);

    // master
    nlohmann::json mcfg{{"role", "master"},       {"listen_addr", "127.0.0.1:0"},
                        {"block_size", spec.block_size}, {"replication", spec.replication},
                        {"heartbeat_ms", spec.heartbeat_ms}, {"failure_after_ms", spec.failure_after_ms},
                        {"timeout_ms", spec.timeout_ms}};
    auto master_addr = handle->launch_node("master", mcfg);
    if (!master_addr.ok()) return R::err(master_addr.code(), master_addr.message());
    handle->master_url_ = "http://" + master_addr.value();
    mcfg["listen_addr"] = master_addr.value();
    std::ofstream(root / "master" / "config.json") << mcfg.dump(2);

    // balancer
    nlohmann::json bcfg{{"role", "balancer"},     {"listen_addr", "127.0.0.1:0"},
                        {"master_url", handle->master_url_}, {"method", spec.method},
                        {"timeout_ms", spec.timeout_ms},     {"max_retries", spec.max_retries},
                        {"probe_ms", spec.probe_ms},         {"block_size", spec.block_size}};
    auto balancer_addr = handle->launch_node("balancer", bcfg);
    if (!balancer_addr.ok()) return R::err(balancer_addr.code(), balancer_addr.message());
    handle->balancer_url_ = "http://" + balancer_addr.value();
    bcfg["listen_addr"] = balancer_addr.value();
    std::ofstream(root / "balancer" / "config.json") << bcfg.dump(2);

    // workers
    for (int i = 0; i < spec.workers; ++i) {
      std::string id = "w" + std::to_string(i + 1);
      if (auto st = handle->launch_worker(id); !st.ok()) return R::err(st.code(), st.message());
    }

    if (auto st = handle->wait_for_up_slots(spec.workers, spec.startup_timeout_ms); !st.ok()) {
      return R::err(st.code(), st.message());
    }
    return R(std::move(handle));
  }

  // Launches one more worker at runtime and waits until the balancer lists
  // its slot Up.
  Status add_worker(const std::string& id) {
    if (auto st = launch_worker(id); !st.ok()) return st;
    auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(spec_.startup_timeout_ms);
    while (std::chrono::steady_clock::now() < deadline) {
      auto j = fetch_json(balancer_url_ + "/stats");
      if (j && j->contains("routes")) {
        for (const auto& s : (*j)["routes"]) {
          if (s["worker_id"] == id && s["state"] == "up") return ok_status();
        }
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    return Status::err(Errc::unavailable, "StartupTimeout: " + id + " never became Up");
  }

  ~ClusterHandle() { stop(); }

  const std::string& balancer_url() const { return balancer_url_; }
  const std::string& master_url() const { return master_url_; }
  std::string worker_url(const std::string& id) const { return worker_urls_.at(id); }
  std::vector<std::string> worker_ids() const {
    std::vector<std::string> out;
    for (const auto& [id, _] : worker_urls_) out.push_back(id);
    return out;
  }
  const std::filesystem::path& root() const { return root_; }

  // Immediate termination, no deregistration: SIGKILL. Works for workers
  // and, by node name, for "master" / "balancer" too.
  void kill_node(const std::string& name) {
    auto it = pids_.find(name);
    if (it == pids_.end() || it->second <= 0) return;
    ::kill(it->second, SIGKILL);
    int status = 0;
    ::waitpid(it->second, &status, 0);
    it->second = -1;
  }
  void kill_worker(const std::string& id) { kill_node(id); }

  // Restart with the same config (same data_dir, same pinned port).
  Status recover_node(const std::string& name) {
    auto cfg_path = root_ / name / "config.json";
    if (!std::filesystem::exists(cfg_path)) return Status::err(Errc::io_error, "no config for " + name);
    auto pid = spawn_process(name, cfg_path.string(), (root_ / name / "addr").string());
    if (!pid.ok()) return Status::err(pid.code(), pid.message());
    pids_[name] = pid.value();
    return ok_status();
  }
  Status recover_worker(const std::string& id) { return recover_node(id); }

  void stop_worker_gracefully(const std::string& id) {
    auto it = pids_.find(id);
    if (it == pids_.end() || it->second <= 0) return;
    ::kill(it->second, SIGTERM);
    reap(it->second, 5000);
    it->second = -1;
  }

  void stop() {
    if (stopped_) return;
    stopped_ = true;
    for (auto& [id, pid] : pids_) {
      if (pid > 0) ::kill(pid, SIGTERM);
    }
    for (auto& [id, pid] : pids_) {
      if (pid > 0) {
        reap(pid, 3000);
        pid = -1;
      }
    }
    if (!keep_data_) {
      std::error_code ec;
      std::filesystem::remove_all(root_, ec);
    }
  }

  void keep_data_on_stop() { keep_data_ = true; }

  // PUTs `count` keys of `value_size` deterministic bytes through the
  // balancer, from several clients. Returns the key list.
  Result<std::vector<std::string>> preload(int count, size_t value_size,
                                           const std::string& prefix = "bench-", int clients = 8) {
    std::vector<std::string> keys(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) keys[static_cast<size_t>(i)] = prefix + std::to_string(i);

    std::string payload = make_payload(value_size, 99);
    std::atomic<int> next{0};
    std::atomic<int> failures{0};
    auto url = parse_url(balancer_url_);
    if (!url) return Result<std::vector<std::string>>::err(Errc::io_error, "bad balancer url");

    std::vector<std::thread> threads;
    int n_threads = std::max(1, std::min(clients, count));
    for (int t = 0; t < n_threads; ++t) {
      threads.emplace_back([&] {
        auto cli = make_client(*url, std::chrono::milliseconds(30000));
        while (true) {
          int i = next.fetch_add(1);
          if (i >= count) break;
          auto r = cli.Put("/file/" + percent_encode(keys[static_cast<size_t>(i)]), payload,
                           "application/octet-stream");
          if (!r || r->status != 201) failures.fetch_add(1);
        }
      });
    }
    for (auto& th : threads) th.join();
    if (failures > 0) {
      return Result<std::vector<std::string>>::err(
          Errc::unavailable, std::to_string(failures.load()) + " preload puts failed");
    }
    return keys;
  }

  WorkloadStats run_workload(const WorkloadSpec& w, const std::vector<std::string>& keys) {
    WorkloadStats stats;
    if (w.n_requests <= 0) return stats;

    auto before = route_served_counts();
    std::string payload = make_payload(w.value_size, 7);
    std::atomic<int> next{0};
    std::atomic<uint64_t> errors{0}, reads_ok{0}, writes_ok{0};
    auto url = parse_url(balancer_url_);
    if (!url) {
      stats.errors = static_cast<uint64_t>(w.n_requests);
      return stats;
    }

    std::vector<std::vector<double>> latencies(static_cast<size_t>(w.n_clients));
    auto begin = std::chrono::steady_clock::now();
    std::vector<std::thread> threads;
    for (int t = 0; t < w.n_clients; ++t) {
      threads.emplace_back([&, t] {
        std::mt19937_64 rng(w.seed * 1000003 + static_cast<uint64_t>(t));
        auto cli = make_client(*url, std::chrono::milliseconds(30000));
        auto& lat = latencies[static_cast<size_t>(t)];
        while (true) {
          int i = next.fetch_add(1);
          if (i >= w.n_requests) break;
          bool read = keys.empty() ? false
                                   : (w.read_ratio >= 1.0 ||
                                      std::uniform_real_distribution<>(0, 1)(rng) < w.read_ratio);
          auto t0 = std::chrono::steady_clock::now();
          bool ok;
          if (read) {
            const auto& key = keys[rng() % keys.size()];
            auto r = cli.Get("/file/" + percent_encode(key));
            ok = r && r->status == 200;
            if (ok) reads_ok.fetch_add(1);
          } else {
            std::string key = "wl-" + std::to_string(t) + "-" + std::to_string(i);
            auto r = cli.Put("/file/" + key, payload, "application/octet-stream");
            ok = r && r->status == 201;
            if (ok) writes_ok.fetch_add(1);
          }
          auto t1 = std::chrono::steady_clock::now();
          lat.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
          if (!ok) errors.fetch_add(1);
        }
      });
    }
    for (auto& th : threads) th.join();
    stats.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - begin).count();

    std::vector<double> all;
    for (auto& v : latencies) all.insert(all.end(), v.begin(), v.end());
    std::sort(all.begin(), all.end());
    stats.samples = all.size();
    if (!all.empty()) {
      double sum = 0;
      for (double v : all) sum += v;
      stats.avg_ms = sum / static_cast<double>(all.size());
      size_t idx = static_cast<size_t>(std::ceil(0.95 * static_cast<double>(all.size())));
      stats.p95_ms = all[std::min(all.size() - 1, idx == 0 ? 0 : idx - 1)];
    }
    stats.errors = errors.load();
    stats.reads_ok = reads_ok.load();
    stats.writes_ok = writes_ok.load();

    auto after = route_served_counts();
    for (const auto& [id, served] : after) {
      uint64_t delta = served - (before.count(id) ? before[id] : 0);
      stats.per_worker_served[id] = delta;
    }
    return stats;
  }

  // Reads every key exactly once from n_clients concurrent clients and
  // returns the wall time of the whole retrieval.
  double sweep_read_seconds(int n_clients, const std::vector<std::string>& keys,
                            uint64_t* errors_out = nullptr) {
    std::atomic<size_t> next{0};
    std::atomic<uint64_t> errors{0};
    auto url = parse_url(balancer_url_);
    if (!url) {
      if (errors_out) *errors_out = keys.size();
      return 0;
    }
    auto begin = std::chrono::steady_clock::now();
    std::vector<std::thread> threads;
    for (int t = 0; t < n_clients; ++t) {
      threads.emplace_back([&] {
        auto cli = make_client(*url, std::chrono::milliseconds(30000));
        while (true) {
          size_t i = next.fetch_add(1);
          if (i >= keys.size()) break;
          auto r = cli.Get("/file/" + percent_encode(keys[i]));
          if (!r || r->status != 200) errors.fetch_add(1);
        }
      });
    }
    for (auto& th : threads) th.join();
    if (errors_out) *errors_out = errors.load();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - begin).count();
  }

  std::map<std::string, uint64_t> route_served_counts() {
    std::map<std::string, uint64_t> out;
    auto stats = fetch_json(balancer_url_ + "/stats");
    if (!stats || !stats->contains("routes")) return out;
    for (const auto& s : (*stats)["routes"]) {
      out[s["worker_id"].get<std::string>()] = s["served"].get<uint64_t>();
    }
    return out;
  }

  std::optional<nlohmann::json> fetch_json(const std::string& full_url) {
    auto u = parse_url(full_url);
    if (!u) return std::nullopt;
    auto cli = make_client(*u, std::chrono::milliseconds(5000));
    auto r = cli.Get(u->path);
    if (!r || r->status != 200) return std::nullopt;
    auto j = nlohmann::json::parse(r->body, nullptr, false);
    if (j.is_discarded()) return std::nullopt;
    return j;
  }

  static std::string make_payload(size_t n, uint64_t seed) {
    std::string out(n, '\0');
    std::mt19937_64 rng(seed);
    for (size_t i = 0; i < n; i += 8) {
      uint64_t v = rng();
      for (size_t j = i; j < std::min(n, i + 8); ++j) {
        out[j] = static_cast<char>(v & 0xFF);
        v >>= 8;
      }
    }
    return out;
  }

 private:
  ClusterHandle() = default;

  Status launch_worker(const std::string& id) {
    nlohmann::json wcfg{{"role", "worker"},
                        {"listen_addr", "127.0.0.1:0"},
                        {"worker_id", id},
                        {"data_dir", (root_ / id / "data").string()},
                        {"master_url", master_url_},
                        {"balancer_url", balancer_url_},
                        {"block_size", spec_.block_size},
                        {"heartbeat_ms", spec_.heartbeat_ms},
                        {"failure_after_ms", spec_.failure_after_ms},
                        {"timeout_ms", spec_.timeout_ms},
                        {"reference_throughput", spec_.reference_throughput},
                        {"load_factor", spec_.load_factor},
                        {"worker_threads", spec_.worker_threads}};
    auto addr = launch_node(id, wcfg);
    if (!addr.ok()) return Status::err(addr.code(), addr.message());
    worker_urls_[id] = "http://" + addr.value();
    // Pin the discovered port so a recover respawn keeps the url.
    wcfg["listen_addr"] = addr.value();
    std::ofstream(root_ / id / "config.json") << wcfg.dump(2);
    return ok_status();
  }

  Result<std::string> launch_node(const std::string& name, nlohmann::json cfg) {
    auto dir = root_ / name;
    std::filesystem::create_directories(dir);
    auto cfg_path = dir / "config.json";
    std::ofstream(cfg_path) << cfg.dump(2);
    auto addr_path = dir / "addr";

    auto pid = spawn_process(name, cfg_path.string(), addr_path.string());
    if (!pid.ok()) return Result<std::string>::err(pid.code(), pid.message());
    pids_[name] = pid.value();

    // Wait for the node to publish its bound address.
    auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(spec_.startup_timeout_ms);
    while (std::chrono::steady_clock::now() < deadline) {
      std::ifstream in(addr_path);
      std::string addr;
      if (in && std::getline(in, addr) && !addr.empty()) return addr;
      int status = 0;
      if (::waitpid(pids_[name], &status, WNOHANG) == pids_[name]) {
        pids_[name] = -1;
        return Result<std::string>::err(Errc::unavailable,
                                        name + " exited during startup; see " +
                                            (root_ / name / "log.txt").string());
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    return Result<std::string>::err(Errc::unavailable, "StartupTimeout waiting for " + name);
  }

  Result<pid_t> spawn_process(const std::string& name, const std::string& cfg_path,
                              const std::string& addr_path) {
    std::filesystem::remove(addr_path);
    std::string role = name == "master" ? "master" : name == "balancer" ? "balancer" : "worker";
    std::vector<std::string> args = {bin_,       "node",        "start",      role,
                                     "--config", cfg_path,      "--port-file", addr_path};
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    std::string log = (root_ / name / "log.txt").string();
    posix_spawn_file_actions_addopen(&actions, 1, log.c_str(), O_CREAT | O_WRONLY | O_APPEND, 0644);
    posix_spawn_file_actions_adddup2(&actions, 1, 2);

    pid_t pid = 0;
    int rc = posix_spawn(&pid, bin_.c_str(), &actions, nullptr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    if (rc != 0) return Result<pid_t>::err(Errc::io_error, "posix_spawn: " + std::to_string(rc));
    return pid;
  }

  Status wait_for_up_slots(int expected, int timeout_ms) {
    auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
    while (std::chrono::steady_clock::now() < deadline) {
      auto j = fetch_json(balancer_url_ + "/stats");
      if (j && j->contains("routes")) {
        int up = 0;
        for (const auto& s : (*j)["routes"]) {
          if (s["state"] == "up") up++;
        }
        if (up == expected) return ok_status();
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    return Status::err(Errc::unavailable, "StartupTimeout: balancer never showed " +
                                              std::to_string(expected) + " Up slots");
  }

  static void reap(pid_t pid, int timeout_ms) {
    auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
    while (std::chrono::steady_clock::now() < deadline) {
      int status = 0;
      if (::waitpid(pid, &status, WNOHANG) == pid) return;
      std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
    ::kill(pid, SIGKILL);
    int status = 0;
    ::waitpid(pid, &status, 0);
  }

  std::string bin_;
  SpawnSpec spec_;
  std::filesystem::path root_;
  std::string master_url_;
  std::string balancer_url_;
  std::map<std::string, std::string> worker_urls_;
  std::map<std::string, pid_t> pids_;
  bool stopped_ = false;
  bool keep_data_ = false;
};

}  // namespace webkv
