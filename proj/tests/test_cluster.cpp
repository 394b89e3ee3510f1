#include <doctest.h>

#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>

#include <json.hpp>

#include "support.hpp"
#include "webkv/harness.hpp"

using namespace webkv;
using namespace std::chrono_literals;

namespace {

const char* cli_bin() {
  const char* env = std::getenv("WEBKV_BIN");
  return env ? env : WEBKV_BIN;
}

std::unique_ptr<ClusterHandle> spawn_or_die(SpawnSpec spec) {
  auto r = ClusterHandle::spawn(cli_bin(), spec);
  REQUIRE_MESSAGE(r.ok(), r.message());
  return std::move(r.value());
}

int run_cli(const std::string& args) {
  std::string cmd = std::string(cli_bin()) + " " + args;
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::filesystem::path scratch_file(const std::string& name, const std::string& content) {
  auto p = std::filesystem::temp_directory_path() / (name + "-" + std::to_string(::getpid()));
  std::ofstream(p, std::ios::binary) << content;
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool worker_state_at_master(ClusterHandle& c, const std::string& id, const std::string& want) {
  auto j = c.fetch_json(c.master_url() + "/stats");
  if (!j) return false;
  for (const auto& w : (*j)["workers"]) {
    if (w["worker_id"] == id) return w["state"] == want;
  }
  return false;
}

}  // namespace

TEST_CASE("spawn: one worker yields one Up slot; zero workers is a precondition error") {
  auto bad = ClusterHandle::spawn(cli_bin(), SpawnSpec{.workers = 0});
  CHECK(!bad.ok());

  auto cluster = spawn_or_die(SpawnSpec{.workers = 1, .block_size = 1 << 16});
  auto stats = cluster->fetch_json(cluster->balancer_url() + "/stats");
  REQUIRE(stats.has_value());
  REQUIRE((*stats)["routes"].size() == 1);
  CHECK((*stats)["routes"][0]["state"] == "up");
}

TEST_CASE("spawn: six workers mirror the reference topology with six Up slots") {
  SpawnSpec spec;
  spec.workers = 6;
  spec.block_size = 1 << 16;
  auto cluster = spawn_or_die(spec);
  auto stats = cluster->fetch_json(cluster->balancer_url() + "/stats");
  REQUIRE(stats.has_value());
  REQUIRE((*stats)["routes"].size() == 6);
  for (const auto& s : (*stats)["routes"]) CHECK(s["state"] == "up");
}

TEST_CASE("cli put/get round-trips bytes exactly, including the empty file") {
  SpawnSpec spec;
  spec.workers = 2;
  spec.block_size = 1 << 14;
  auto cluster = spawn_or_die(spec);
  std::string url = " --url " + cluster->balancer_url();

  std::mt19937_64 rng(8);
  auto payload = testsupport::random_bytes(rng, 50000);
  auto in_file = scratch_file("webkv-in", payload);
  auto out_file = std::filesystem::temp_directory_path() / ("webkv-out-" + std::to_string(::getpid()));

  CHECK(run_cli("put roundtrip " + in_file.string() + url) == 0);
  CHECK(run_cli("get roundtrip " + out_file.string() + url) == 0);
  CHECK(slurp(out_file) == payload);

  SUBCASE("zero-byte file") {
    auto empty_in = scratch_file("webkv-empty", "");
    CHECK(run_cli("put hollow " + empty_in.string() + url) == 0);
    CHECK(run_cli("get hollow " + out_file.string() + url) == 0);
    CHECK(slurp(out_file).empty());
    std::filesystem::remove(empty_in);
  }

  SUBCASE("absent key exits 1") {
    CHECK(run_cli("get never-stored " + out_file.string() + url) == 1);
  }

  SUBCASE("direct-to-worker get follows the redirect chain") {
    for (const auto& id : cluster->worker_ids()) {
      CHECK(run_cli("get roundtrip " + out_file.string() + " --url " + cluster->worker_url(id)) == 0);
      CHECK(slurp(out_file) == payload);
    }
  }

  std::filesystem::remove(in_file);
  std::filesystem::remove(out_file);
}

TEST_CASE("cli node start rejects a bad config with exit 2") {
  auto cfg = scratch_file("webkv-badcfg", "{\"role\":\"worker\"}");  // missing required fields
  CHECK(run_cli("node start worker --config " + cfg.string()) == 2);
  auto garbled = scratch_file("webkv-garbled", "not json at all");
  CHECK(run_cli("node start master --config " + garbled.string()) == 2);
  std::filesystem::remove(cfg);
  std::filesystem::remove(garbled);
}

TEST_CASE("kill with replication 2 keeps keys readable; replication 1 returns 503 until recovery") {
  SpawnSpec spec;
  spec.workers = 2;
  spec.replication = 2;
  spec.block_size = 1 << 14;
  spec.heartbeat_ms = 300;
  spec.failure_after_ms = 900;
  spec.probe_ms = 400;
  auto cluster = spawn_or_die(spec);

  auto keys = cluster->preload(4, 10000, "held-");
  REQUIRE_MESSAGE(keys.ok(), keys.message());

  cluster->kill_worker("w1");
  for (const auto& key : keys.value()) {
    auto hop = get_following_redirects(cluster->balancer_url() + "/file/" + key, 2, 5000ms);
    REQUIRE(hop.transport_ok);
    CHECK(hop.status == 200);
    CHECK(hop.body.size() == 10000);
  }

  SUBCASE("the master marks the killed worker Down after failure_after without deregistration") {
    bool down = false;
    for (int i = 0; i < 60 && !down; ++i) {
      std::this_thread::sleep_for(100ms);
      down = worker_state_at_master(*cluster, "w1", "down");
    }
    CHECK(down);
  }

  SUBCASE("recovery rejoins and traffic resumes within the probe window") {
    REQUIRE(cluster->recover_worker("w1").ok());
    bool up = false;
    for (int i = 0; i < 100 && !up; ++i) {
      std::this_thread::sleep_for(100ms);
      auto s = cluster->fetch_json(cluster->balancer_url() + "/stats");
      if (!s) continue;
      for (const auto& slot : (*s)["routes"]) {
        if (slot["worker_id"] == "w1" && slot["state"] == "up") up = true;
      }
    }
    REQUIRE(up);
    auto before = cluster->route_served_counts();
    WorkloadSpec w;
    w.n_clients = 4;
    w.n_requests = 50;
    w.value_size = 10000;
    auto stats = cluster->run_workload(w, keys.value());
    CHECK(stats.errors == 0);
    CHECK(stats.per_worker_served["w1"] >= 1);
  }
}

TEST_CASE("a key held only by a dead worker is 503 until the worker recovers") {
  SpawnSpec spec;
  spec.workers = 1;
  spec.replication = 1;
  spec.block_size = 1 << 14;
  spec.heartbeat_ms = 300;
  spec.failure_after_ms = 900;
  spec.probe_ms = 400;
  spec.max_retries = 1;
  auto cluster = spawn_or_die(spec);

  auto keys = cluster->preload(1, 1000, "solo-");
  REQUIRE(keys.ok());

  cluster->kill_worker("w1");
  auto hop = get_following_redirects(cluster->balancer_url() + "/file/solo-0", 2, 5000ms);
  REQUIRE(hop.transport_ok);
  CHECK(hop.status == 503);

  REQUIRE(cluster->recover_worker("w1").ok());
  bool ok = false;
  for (int i = 0; i < 100 && !ok; ++i) {
    std::this_thread::sleep_for(100ms);
    auto again = get_following_redirects(cluster->balancer_url() + "/file/solo-0", 2, 5000ms);
    ok = again.transport_ok && again.status == 200 && again.body.size() == 1000;
  }
  CHECK(ok);
}

TEST_CASE("graceful worker stop deregisters everywhere and a restart re-registers") {
  SpawnSpec spec;
  spec.workers = 2;
  spec.block_size = 1 << 14;
  auto cluster = spawn_or_die(spec);

  cluster->stop_worker_gracefully("w2");
  auto stats = cluster->fetch_json(cluster->balancer_url() + "/stats");
  REQUIRE(stats.has_value());
  REQUIRE((*stats)["routes"].size() == 1);  // slot removed, numbering compacted
  CHECK((*stats)["routes"][0]["worker_id"] == "w1");
  CHECK((*stats)["routes"][0]["slot"] == 1);
  CHECK(worker_state_at_master(*cluster, "w2", "down"));

  REQUIRE(cluster->recover_worker("w2").ok());
  bool listed = false;
  for (int i = 0; i < 100 && !listed; ++i) {
    std::this_thread::sleep_for(100ms);
    auto s = cluster->fetch_json(cluster->balancer_url() + "/stats");
    if (!s) continue;
    for (const auto& slot : (*s)["routes"]) {
      if (slot["worker_id"] == "w2" && slot["state"] == "up") listed = true;
    }
  }
  CHECK(listed);
  CHECK(worker_state_at_master(*cluster, "w2", "up"));
}

TEST_CASE("a restarted master rebuilds its index from worker reports within a heartbeat") {
  SpawnSpec spec;
  spec.workers = 2;
  spec.replication = 1;
  spec.block_size = 1 << 14;
  spec.heartbeat_ms = 300;
  spec.failure_after_ms = 900;
  auto cluster = spawn_or_die(spec);

  auto keys = cluster->preload(6, 5000, "durable-");
  REQUIRE(keys.ok());

  cluster->kill_node("master");
  REQUIRE(cluster->recover_node("master").ok());

  // Workers notice known:false on their next heartbeat and re-register;
  // the master then pulls their key reports.
  int readable = 0;
  for (int attempt = 0; attempt < 100; ++attempt) {
    std::this_thread::sleep_for(100ms);
    readable = 0;
    for (const auto& key : keys.value()) {
      auto hop = get_following_redirects(cluster->balancer_url() + "/file/" + key, 2, 5000ms);
      if (hop.transport_ok && hop.status == 200 && hop.body.size() == 5000) readable++;
    }
    if (readable == static_cast<int>(keys.value().size())) break;
  }
  CHECK(readable == 6);

  auto mstats = cluster->fetch_json(cluster->master_url() + "/stats");
  REQUIRE(mstats.has_value());
  CHECK((*mstats)["index"]["entries"] == 6);
}

TEST_CASE("workload stats: conservation, even split, and the zero-request edge") {
  SpawnSpec spec;
  spec.workers = 2;
  spec.block_size = 1 << 14;
  auto cluster = spawn_or_die(spec);

  auto keys = cluster->preload(8, 4000, "load-");
  REQUIRE(keys.ok());

  SUBCASE("zero requests produce all-zero stats") {
    WorkloadSpec w;
    w.n_requests = 0;
    auto stats = cluster->run_workload(w, keys.value());
    CHECK(stats.samples == 0);
    CHECK(stats.errors == 0);
    CHECK(stats.avg_ms == 0);
    CHECK(stats.p95_ms == 0);
  }

  SUBCASE("1000 reads with equal factors split exactly 500/500 and conserve") {
    WorkloadSpec w;
    w.n_clients = 8;
    w.n_requests = 1000;
    w.read_ratio = 1.0;
    w.value_size = 4000;
    auto stats = cluster->run_workload(w, keys.value());
    CHECK(stats.errors == 0);
    CHECK(stats.samples == 1000);
    uint64_t sum = 0;
    for (const auto& [id, n] : stats.per_worker_served) sum += n;
    CHECK(sum + stats.errors == 1000);
    CHECK(stats.per_worker_served["w1"] == 500);
    CHECK(stats.per_worker_served["w2"] == 500);
    CHECK(stats.avg_ms <= stats.p95_ms);
  }

  SUBCASE("mixed workload conserves reads + writes + errors") {
    WorkloadSpec w;
    w.n_clients = 4;
    w.n_requests = 200;
    w.read_ratio = 0.7;
    w.value_size = 2000;
    auto stats = cluster->run_workload(w, keys.value());
    CHECK(stats.reads_ok + stats.writes_ok + stats.errors == 200);
  }
}

TEST_CASE("the configured balancing method reaches the balancer") {
  for (const char* method : {"bytraffic", "bybusyness"}) {
    SpawnSpec spec;
    spec.workers = 2;
    spec.method = method;
    spec.block_size = 1 << 14;
    auto cluster = spawn_or_die(spec);
    auto stats = cluster->fetch_json(cluster->balancer_url() + "/stats");
    REQUIRE(stats.has_value());
    CHECK((*stats)["method"] == method);

    auto keys = cluster->preload(4, 2000, std::string(method) + "-");
    REQUIRE(keys.ok());
    WorkloadSpec w;
    w.n_clients = 4;
    w.n_requests = 80;
    w.value_size = 2000;
    auto ws = cluster->run_workload(w, keys.value());
    CHECK(ws.errors == 0);
    uint64_t sum = 0;
    for (const auto& [id, n] : ws.per_worker_served) sum += n;
    CHECK(sum == 80);
  }
}

TEST_CASE("two identical workers measure load factors within 20 percent") {
  // The self-benchmark is a real measurement; start the workers one at a
  // time so the benches do not contend, and allow a few attempts on a
  // noisy shared host before calling it a failure.
  bool close_enough = false;
  for (int attempt = 0; attempt < 3 && !close_enough; ++attempt) {
    SpawnSpec spec;
    spec.workers = 1;
    spec.block_size = 1 << 16;
    spec.load_factor = 0;              // measured, not pinned
    spec.reference_throughput = 2000;  // ~5-10k reads/s measured here: factors land mid-range
    auto cluster = spawn_or_die(spec);
    REQUIRE(cluster->add_worker("w2").ok());

    auto stats = cluster->fetch_json(cluster->master_url() + "/stats");
    REQUIRE(stats.has_value());
    REQUIRE((*stats)["workers"].size() == 2);
    double a = (*stats)["workers"][0]["load_factor"].get<double>();
    double b = (*stats)["workers"][1]["load_factor"].get<double>();
    if (a > 1 && a < 100 && b > 1 && b < 100) {
      close_enough = std::abs(a - b) <= 0.2 * std::max(a, b);
    }
  }
  CHECK(close_enough);
}

TEST_CASE("a worker added at runtime starts receiving picks immediately") {
  SpawnSpec spec;
  spec.workers = 1;
  spec.block_size = 1 << 14;
  auto cluster = spawn_or_die(spec);
  auto keys = cluster->preload(4, 3000, "grow-");
  REQUIRE(keys.ok());

  REQUIRE(cluster->add_worker("w2").ok());
  WorkloadSpec w;
  w.n_clients = 4;
  w.n_requests = 100;
  w.value_size = 3000;
  auto stats = cluster->run_workload(w, keys.value());
  CHECK(stats.errors == 0);
  CHECK(stats.per_worker_served["w2"] == 50);  // equal factors: exact split
}
