// Acceptance suite: runs the seven cluster-level criteria end to end and
// prints one PASS/FAIL line per criterion. Exit status is the number of
// failed criteria.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "support.hpp"
#include "webkv/bench.hpp"
#include "webkv/chunking.hpp"
#include "webkv/harness.hpp"
#include "webkv/index.hpp"
#include "webkv/placement.hpp"
#include "webkv/route_table.hpp"

using namespace webkv;
using namespace std::chrono_literals;

namespace {

std::string g_bin;

struct Criterion {
  int number;
  std::string name;
  std::function<bool(std::string&)> run;
};

bool check(bool cond, std::string& detail, const std::string& msg) {
  if (!cond && detail.empty()) detail = msg;
  return cond;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

// --- criterion 1: scale shape ----------------------------------------------

bool run_scale_shape(std::string& detail) {
  auto begin = std::chrono::steady_clock::now();
  BenchOptions opt;
  opt.clients = 16;
  opt.requests = 1000;
  opt.verbose = true;
  auto rows = bench_scale(g_bin, 500, 1, 6, opt);
  if (!rows.ok()) {
    detail = "bench failed: " + rows.message();
    return false;
  }
  double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - begin).count();

  bool ok = true;
  std::string curve;
  for (size_t i = 0; i < rows.value().size(); ++i) {
    curve += (i ? ", " : "") + std::to_string(i + 1) + "w=" + fmt(rows.value()[i].avg_ms) + "ms";
    if (i > 0) {
      ok = check(rows.value()[i].avg_ms <= rows.value()[i - 1].avg_ms, detail,
                 "avg latency increased from " + std::to_string(i) + " to " +
                     std::to_string(i + 1) + " workers (" + curve + ")") && ok;
    }
  }
  double speedup = rows.value().back().avg_ms > 0
                       ? rows.value().front().avg_ms / rows.value().back().avg_ms
                       : 0;
  ok = check(speedup >= 2.0, detail,
             "speedup(1->6) = " + fmt(speedup) + "x < 2.0x (" + curve + ")") && ok;
  ok = check(elapsed <= 600.0, detail, "runtime " + fmt(elapsed) + "s exceeds 600s") && ok;
  if (ok) detail = curve + "; speedup " + fmt(speedup) + "x in " + fmt(elapsed) + "s";
  return ok;
}

// --- criterion 2: size shape ------------------------------------------------
//
// The reference curve measures the time a single server takes to retrieve
// the stored data at each dataset size, so the measured quantity here is
// the average wall time of a full-dataset retrieval (every key read once by
// 16 concurrent clients), averaged over three trials per size.

bool run_size_shape(std::string& detail) {
  auto begin = std::chrono::steady_clock::now();
  const std::vector<int> sizes = {10, 50, 100, 500};
  std::vector<double> avg_retrieval_ms;

  for (int mb : sizes) {
    SpawnSpec spec;
    spec.workers = 1;
    spec.replication = 1;
    spec.worker_threads = 1;
    spec.startup_timeout_ms = 15000;
    auto cluster = ClusterHandle::spawn(g_bin, spec);
    if (!cluster.ok()) {
      detail = "spawn failed at " + std::to_string(mb) + "MB: " + cluster.message();
      return false;
    }
    auto& handle = *cluster.value();
    auto keys = handle.preload(mb, 1 << 20);
    if (!keys.ok()) {
      detail = "preload failed at " + std::to_string(mb) + "MB: " + keys.message();
      return false;
    }

    uint64_t errors = 0;
    (void)handle.sweep_read_seconds(16, keys.value(), &errors);  // warmup pass
    double total = 0;
    constexpr int kTrials = 3;
    for (int trial = 0; trial < kTrials; ++trial) {
      total += handle.sweep_read_seconds(16, keys.value(), &errors);
      if (errors > 0) {
        detail = std::to_string(errors) + " read errors at " + std::to_string(mb) + "MB";
        return false;
      }
    }
    avg_retrieval_ms.push_back(total / kTrials * 1000.0);
    std::fprintf(stderr, "point data_mb=%d: avg retrieval %.1fms over %d trials\n", mb,
                 avg_retrieval_ms.back(), kTrials);
  }
  double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - begin).count();

  bool ok = true;
  std::string curve;
  for (size_t i = 0; i < sizes.size(); ++i) {
    curve += (i ? ", " : "") + std::to_string(sizes[i]) + "MB=" + fmt(avg_retrieval_ms[i]) + "ms";
    if (i > 0) {
      ok = check(avg_retrieval_ms[i] > avg_retrieval_ms[i - 1], detail,
                 "retrieval time not strictly increasing at " + std::to_string(sizes[i]) + "MB (" +
                     curve + ")") && ok;
    }
  }
  ok = check(elapsed <= 600.0, detail, "runtime " + fmt(elapsed) + "s exceeds 600s") && ok;
  if (ok) detail = curve + " in " + fmt(elapsed) + "s";
  return ok;
}

// --- criterion 3: weighted fairness -----------------------------------------

bool run_weighted_fairness(std::string& detail) {
  RouteTable rt;
  rt.add_worker(RegistrationMessage{"A", "http://127.0.0.1:1", 2});
  rt.add_worker(RegistrationMessage{"B", "http://127.0.0.1:2", 1});
  testsupport::SwrrOracle oracle({"A", "B"}, {2, 1});

  std::map<std::string, int> counts;
  std::vector<std::string> prefix;
  for (int i = 0; i < 300; ++i) {
    auto picked = rt.pick(BalancerMethod::by_requests);
    if (!picked.ok()) {
      detail = "pick failed: " + picked.message();
      return false;
    }
    const auto& id = picked.value().worker_id;
    if (!check(id == oracle.pick(), detail, "pick " + std::to_string(i) + " diverged from the oracle")) {
      return false;
    }
    if (i < 3) prefix.push_back(id);
    counts[id]++;
  }
  bool ok = check(prefix == std::vector<std::string>{"A", "B", "A"}, detail,
                  "prefix was " + prefix[0] + "," + prefix[1] + "," + prefix[2]);
  ok = check(counts["A"] == 200 && counts["B"] == 100, detail,
             "counts A=" + std::to_string(counts["A"]) + " B=" + std::to_string(counts["B"])) && ok;
  if (ok) detail = "A=200 B=100, prefix A,B,A, all 300 picks matched the oracle";
  return ok;
}

// --- criterion 4: index oracle equivalence -----------------------------------

bool run_index_oracle(std::string& detail) {
  MultiLevelIndex idx(0, 2, 4);
  std::map<std::string, Placement> oracle;
  auto universe = testsupport::curated_universe(4, 16);
  std::mt19937_64 rng(424242);
  bool saw_depth2 = false;

  for (int op = 0; op < 10000; ++op) {
    const std::string& text = universe[rng() % universe.size()];
    auto key = Key::parse(text);
    if (!key.ok()) {
      detail = "bad key in universe";
      return false;
    }
    switch (rng() % 3) {
      case 0: {
        Placement p;
        p.primary_worker = "w" + std::to_string(rng() % 4);
        p.total_bytes = rng() % 4096;
        p.block_count = block_count_for(p.total_bytes, 1024);
        auto got = idx.insert(key.value(), p);
        if (!got.ok()) {
          detail = "unexpected insert error at op " + std::to_string(op) + ": " + got.message();
          return false;
        }
        auto it = oracle.find(text);
        bool had = it != oracle.end();
        if (got.value().has_value() != had ||
            (had && !(*got.value() == it->second))) {
          detail = "insert displaced value diverged at op " + std::to_string(op);
          return false;
        }
        oracle[text] = p;
        break;
      }
      case 1: {
        auto got = idx.remove(key.value());
        auto it = oracle.find(text);
        bool had = it != oracle.end();
        if (got.has_value() != had || (had && !(*got == it->second))) {
          detail = "remove diverged at op " + std::to_string(op);
          return false;
        }
        if (had) oracle.erase(it);
        break;
      }
      default: {
        auto got = idx.lookup(key.value());
        auto it = oracle.find(text);
        bool had = it != oracle.end();
        if (got.has_value() != had || (had && !(*got == it->second))) {
          detail = "lookup diverged at op " + std::to_string(op);
          return false;
        }
        break;
      }
    }
    if (idx.stats().entries != oracle.size()) {
      detail = "entry count diverged at op " + std::to_string(op);
      return false;
    }
    if (idx.stats().max_depth == 2) saw_depth2 = true;
  }
  if (!check(saw_depth2, detail, "no bucket ever reached depth 2")) return false;
  detail = "10000 ops matched a flat map; expanded_buckets=" +
           std::to_string(idx.stats().expanded_buckets);
  return true;
}

// --- criterion 5: failover under kill ----------------------------------------

bool run_failover(std::string& detail) {
  SpawnSpec spec;
  spec.workers = 3;
  spec.replication = 2;
  spec.block_size = 1 << 16;
  spec.heartbeat_ms = 500;
  spec.failure_after_ms = 1500;
  spec.probe_ms = 2000;
  spec.max_retries = 2;
  auto cluster = ClusterHandle::spawn(g_bin, spec);
  if (!cluster.ok()) {
    detail = "spawn failed: " + cluster.message();
    return false;
  }
  auto& handle = *cluster.value();

  auto keys = handle.preload(30, 20000, "fo-");
  if (!keys.ok()) {
    detail = "preload failed: " + keys.message();
    return false;
  }

  // 1000 reads from 16 clients with a SIGKILL roughly a third of the way in.
  WorkloadSpec w;
  w.n_clients = 16;
  w.n_requests = 1000;
  w.value_size = 20000;
  WorkloadStats stats;
  std::thread runner([&] { stats = handle.run_workload(w, keys.value()); });
  std::this_thread::sleep_for(300ms);
  handle.kill_worker("w2");
  runner.join();

  bool ok = check(stats.errors == 0, detail,
                  std::to_string(stats.errors) + " client-visible errors during failover");
  ok = check(stats.samples == 1000, detail, "lost samples") && ok;

  // Recovery: the worker must see traffic within probe_ms + 5s.
  auto recovery_start = std::chrono::steady_clock::now();
  if (auto st = handle.recover_worker("w2"); !st.ok()) {
    detail = "recover failed: " + st.message();
    return false;
  }
  auto served_before = handle.route_served_counts()["w2"];
  std::atomic<bool> stop_trickle{false};
  std::thread trickle([&] {
    auto url = parse_url(handle.balancer_url());
    auto cli = make_client(*url, 5000ms);
    std::mt19937_64 rng(5);
    while (!stop_trickle) {
      (void)cli.Get("/file/" + keys.value()[rng() % keys.value().size()]);
    }
  });
  bool saw_request = false;
  auto deadline = recovery_start + std::chrono::milliseconds(spec.probe_ms) + 5s;
  while (std::chrono::steady_clock::now() < deadline) {
    if (handle.route_served_counts()["w2"] > served_before) {
      saw_request = true;
      break;
    }
    std::this_thread::sleep_for(100ms);
  }
  stop_trickle = true;
  trickle.join();

  double recovery_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - recovery_start).count();
  ok = check(saw_request, detail,
             "recovered worker saw no request within probe_ms + 5s") && ok;
  if (ok) {
    detail = "0 errors across 1000 reads; recovered worker served again after " + fmt(recovery_s) + "s";
  }
  return ok;
}

// --- criterion 6: end-to-end byte round-trip ---------------------------------

bool run_round_trip(std::string& detail) {
  constexpr uint64_t kBlock = 1 << 16;
  SpawnSpec spec;
  spec.workers = 3;
  spec.replication = 1;
  spec.block_size = kBlock;
  auto cluster = ClusterHandle::spawn(g_bin, spec);
  if (!cluster.ok()) {
    detail = "spawn failed: " + cluster.message();
    return false;
  }
  auto& handle = *cluster.value();
  auto balancer = parse_url(handle.balancer_url());
  auto worker_ids = handle.worker_ids();

  std::mt19937_64 rng(606);
  int direct_checks = 0;
  for (int i = 0; i < 200; ++i) {
    size_t len = i == 0 ? 0 : rng() % (3 * kBlock + 1);
    std::string value = testsupport::random_bytes(rng, len);
    std::string key = "rt-" + std::to_string(i);

    auto cli = make_client(*balancer, 30000ms);
    auto put = cli.Put("/file/" + key, value, "application/octet-stream");
    if (!put || put->status != 201) {
      detail = "put " + key + " failed";
      return false;
    }
    auto got = cli.Get("/file/" + key);
    if (!got || got->status != 200 || got->body != value) {
      detail = "balancer get " + key + " did not round-trip (" +
               std::to_string(len) + " bytes)";
      return false;
    }

    if (i % 10 == 0) {
      // Hit a non-owning worker directly; the redirect chain through the
      // master must land on the owner.
      auto placed = place(Key::parse(key).value(), worker_ids, 1, len, kBlock);
      if (!placed.ok()) {
        detail = "placement computation failed";
        return false;
      }
      std::string non_owner;
      for (const auto& id : worker_ids) {
        if (id != placed.value().primary_worker) {
          non_owner = id;
          break;
        }
      }
      auto hop = get_following_redirects(handle.worker_url(non_owner) + "/file/" + key, 2, 30000ms);
      if (!hop.transport_ok || hop.status != 200 || hop.body != value) {
        detail = "direct-to-worker get of " + key + " via " + non_owner + " failed";
        return false;
      }
      direct_checks++;
    }
  }
  detail = "200 values (0.." + std::to_string(3 * kBlock) + " bytes) byte-identical; " +
           std::to_string(direct_checks) + " direct non-owner fetches followed the redirect path";
  return true;
}

// --- criterion 7: property suites --------------------------------------------

bool run_property_suites(std::string& detail) {
  std::mt19937_64 rng(7007);

  for (int trial = 0; trial < 1000; ++trial) {
    size_t block_size = 1 + rng() % 128;
    std::string value = testsupport::random_bytes(rng, rng() % 1000);
    auto blocks = chunk(value, block_size);
    size_t expect = value.empty() ? 1 : (value.size() + block_size - 1) / block_size;
    if (blocks.size() != expect) {
      detail = "chunk count wrong at trial " + std::to_string(trial);
      return false;
    }
    std::vector<SequencedBlock> seq;
    for (uint32_t i = 0; i < blocks.size(); ++i) seq.push_back({i, blocks[i]});
    auto back = reassemble(seq);
    if (!back.ok() || back.value() != value) {
      detail = "reassemble(chunk(v)) != v at trial " + std::to_string(trial);
      return false;
    }
  }

  for (int trial = 0; trial < 1000; ++trial) {
    size_t n = 2 + rng() % 7;
    std::vector<std::string> workers;
    for (size_t i = 0; i < n; ++i) workers.push_back("node" + std::to_string(i));
    unsigned r = 1 + rng() % 2;
    std::string key = "pk-" + std::to_string(rng());
    auto kk = Key::parse(key).value();

    auto p1 = place(kk, workers, r, rng() % 100000, 4096);
    std::vector<std::string> shuffled = workers;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto p2 = place(kk, shuffled, r, p1.value().total_bytes, 4096);
    if (!p1.ok() || !p2.ok() || !(p1.value() == p2.value())) {
      detail = "placement not deterministic at trial " + std::to_string(trial);
      return false;
    }
    // independent score ranking
    auto ranked = workers;
    std::sort(ranked.begin(), ranked.end(), [&](const std::string& a, const std::string& b) {
      auto sa = testsupport::ref_rendezvous_score(a, key);
      auto sb = testsupport::ref_rendezvous_score(b, key);
      if (sa != sb) return sa > sb;
      return a < b;
    });
    if (p1.value().primary_worker != ranked[0]) {
      detail = "primary diverged from the FNV oracle at trial " + std::to_string(trial);
      return false;
    }
    // dropping a non-selected worker must not disturb the placement
    auto holders = p1.value().holders();
    std::string victim;
    for (const auto& w : workers) {
      if (std::find(holders.begin(), holders.end(), w) == holders.end()) {
        victim = w;
        break;
      }
    }
    if (!victim.empty()) {
      auto reduced = workers;
      std::erase(reduced, victim);
      auto p3 = place(kk, reduced, r, p1.value().total_bytes, 4096);
      if (!p3.ok() || !(p3.value() == p1.value())) {
        detail = "placement changed after removing a non-selected worker";
        return false;
      }
    }
  }
  detail = "1000 chunk/reassemble and 1000 rendezvous determinism cases passed";
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  const char* env = std::getenv("WEBKV_BIN");
  g_bin = env ? env : WEBKV_BIN;

  std::vector<Criterion> criteria = {
      {1, "scale shape: 500MB, workers 1..6, non-increasing latency, speedup >= 2.0x", run_scale_shape},
      {2, "size shape: 1 worker, {10,50,100,500}MB, dataset retrieval time strictly increasing",
       run_size_shape},
      {3, "weighted fairness: byrequests {A:2,B:1}, 300 picks = exactly {200,100}", run_weighted_fairness},
      {4, "index oracle: 10^4 ops at C=4,b=0,s=2 match a flat map, depth 2 reached", run_index_oracle},
      {5, "failover: kill one of three workers mid-workload, 0 errors, fast rejoin", run_failover},
      {6, "round-trip: 200 random values byte-identical through balancer and workers", run_round_trip},
      {7, "property suites: chunk/reassemble identity and rendezvous determinism", run_property_suites},
  };

  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.number)) continue;
    std::string detail;
    bool ok = false;
    try {
      ok = c.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("CRITERION %d %s — %s%s%s\n", c.number, ok ? "PASS" : "FAIL", c.name.c_str(),
                detail.empty() ? "" : ": ", detail.c_str());
    std::fflush(stdout);
    if (!ok) failed++;
  }
  return failed;
}
