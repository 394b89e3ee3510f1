#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "webkv/harness.hpp"
#include "webkv/result.hpp"

namespace webkv {

struct BenchRow {
  int data_mb = 0;
  int workers = 0;
  int clients = 0;
  int requests = 0;
  double avg_ms = 0;
  double p95_ms = 0;
  double throughput_rps = 0;
};

inline constexpr const char* kBenchCsvHeader =
    "data_mb,workers,clients,requests,avg_ms,p95_ms,throughput_rps";

inline std::string format_bench_row(const BenchRow& r) {
  char buf[192];
  std::snprintf(buf, sizeof(buf), "%d,%d,%d,%d,%.3f,%.3f,%.3f", r.data_mb, r.workers, r.clients,
                r.requests, r.avg_ms, r.p95_ms, r.throughput_rps);
  return buf;
}

inline Status write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) return Status::err(Errc::io_error, "cannot open " + path);
  out << kBenchCsvHeader << "\n";
  for (const auto& r : rows) out << format_bench_row(r) << "\n";
  if (!out.flush()) return Status::err(Errc::io_error, "write " + path);
  return ok_status();
}

struct BenchOptions {
  int clients = 16;
  int requests = 1000;
  int value_mb = 1;         // dataset scales by key count
  int warmup_requests = 100;
  bool verbose = true;
};

// One measured point: fresh cluster, preload, warmup, timed read workload.
// Bench workers run a single-threaded request pool so one worker is one
// serial service station and worker count is the capacity unit.
inline Result<BenchRow> bench_point(const std::string& cli_binary, int data_mb, int workers,
                                    const BenchOptions& opt) {
  using R = Result<BenchRow>;
  SpawnSpec spec;
  spec.workers = workers;
  spec.replication = 1;
  spec.method = "byrequests";
  spec.worker_threads = 1;
  spec.startup_timeout_ms = 15000;

  auto cluster = ClusterHandle::spawn(cli_binary, spec);
  if (!cluster.ok()) return R::err(cluster.code(), cluster.message());
  auto& handle = *cluster.value();

  const size_t value_bytes = static_cast<size_t>(opt.value_mb) << 20;
  int key_count = std::max(1, data_mb / opt.value_mb);
  auto keys = handle.preload(key_count, value_bytes);
  if (!keys.ok()) return R::err(keys.code(), keys.message());

  if (opt.warmup_requests > 0) {
    WorkloadSpec warmup;
    warmup.n_clients = opt.clients;
    warmup.n_requests = opt.warmup_requests;
    warmup.value_size = value_bytes;
    warmup.seed = 1234;
    (void)handle.run_workload(warmup, keys.value());
  }

  WorkloadSpec w;
  w.n_clients = opt.clients;
  w.n_requests = opt.requests;
  w.read_ratio = 1.0;
  w.value_size = value_bytes;
  w.seed = 42;
  auto stats = handle.run_workload(w, keys.value());

  BenchRow row;
  row.data_mb = data_mb;
  row.workers = workers;
  row.clients = opt.clients;
  row.requests = opt.requests;
  row.avg_ms = stats.avg_ms;
  row.p95_ms = stats.p95_ms;
  row.throughput_rps = stats.wall_seconds > 0 ? w.n_requests / stats.wall_seconds : 0;
  if (stats.errors > 0) {
    return R::err(Errc::unavailable, std::to_string(stats.errors) + " errors during the workload");
  }
  if (opt.verbose) {
    std::fprintf(stderr, "point data_mb=%d workers=%d: avg=%.3fms p95=%.3fms rps=%.1f\n", data_mb,
                 workers, row.avg_ms, row.p95_ms, row.throughput_rps);
  }
  return row;
}

// Fixed single worker, growing dataset.
inline Result<std::vector<BenchRow>> bench_size(const std::string& cli_binary,
                                                const std::vector<int>& sizes_mb, int workers,
                                                const BenchOptions& opt) {
  std::vector<BenchRow> rows;
  for (int mb : sizes_mb) {
    auto row = bench_point(cli_binary, mb, workers, opt);
    if (!row.ok()) return Result<std::vector<BenchRow>>::err(row.code(), row.message());
    rows.push_back(row.value());
  }
  return rows;
}

// Fixed dataset, growing worker count 1..max_workers.
inline Result<std::vector<BenchRow>> bench_scale(const std::string& cli_binary, int size_mb,
                                                 int min_workers, int max_workers,
                                                 const BenchOptions& opt) {
  std::vector<BenchRow> rows;
  for (int k = min_workers; k <= max_workers; ++k) {
    auto row = bench_point(cli_binary, size_mb, k, opt);
    if (!row.ok()) return Result<std::vector<BenchRow>>::err(row.code(), row.message());
    rows.push_back(row.value());
  }
  return rows;
}

}  // namespace webkv
