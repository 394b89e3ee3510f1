#include <unistd.h>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "webkv/balancer.hpp"
#include "webkv/bench.hpp"
#include "webkv/config.hpp"
#include "webkv/harness.hpp"
#include "webkv/master.hpp"
#include "webkv/worker.hpp"

namespace {

volatile std::sig_atomic_t g_signal = 0;

void on_signal(int sig) { g_signal = sig; }

std::string self_binary() {
  char buf[4096];
  ssize_t n = ::readlink("/proc/self/exe", buf, sizeof(buf) - 1);
  if (n <= 0) return "webkv";
  buf[n] = '\0';
  return buf;
}

void write_port_file(const std::string& path, const std::string& host, int port) {
  if (path.empty()) return;
  std::ofstream out(path, std::ios::trunc);
  out << host << ":" << port << "\n";
}

int run_node(const std::string& role, const std::string& config_path, const std::string& port_file) {
  auto cfg = webkv::load_config(config_path);
  if (!cfg.ok()) {
    std::cerr << "config error: " << cfg.message() << "\n";
    return 2;
  }
  if (cfg.value().role != role) {
    std::cerr << "config error: config role '" << cfg.value().role << "' does not match '" << role
              << "'\n";
    return 2;
  }

  std::signal(SIGTERM, on_signal);
  std::signal(SIGINT, on_signal);

  auto wait_for_signal = [] {
    while (g_signal == 0) std::this_thread::sleep_for(std::chrono::milliseconds(50));
  };
  auto host_of = [](const std::string& addr) {
    auto u = webkv::parse_listen_addr(addr);
    return u && u->host != "0.0.0.0" ? u->host : std::string("127.0.0.1");
  };

  if (role == "master") {
    webkv::MasterNode node(cfg.value());
    if (!node.start()) {
      std::cerr << "failed to bind " << cfg.value().listen_addr << "\n";
      return 1;
    }
    write_port_file(port_file, host_of(cfg.value().listen_addr), node.port());
    std::cout << "master listening on " << node.base_url() << std::endl;
    wait_for_signal();
    node.stop();
    return 0;
  }
  if (role == "balancer") {
    webkv::FrontBalancer node(cfg.value());
    if (!node.start()) {
      std::cerr << "failed to bind " << cfg.value().listen_addr << "\n";
      return 1;
    }
    write_port_file(port_file, host_of(cfg.value().listen_addr), node.port());
    std::cout << "balancer listening on " << node.base_url() << " method=" << cfg.value().method
              << std::endl;
    wait_for_signal();
    node.stop();
    return 0;
  }
  // worker
  webkv::WorkerNode node(cfg.value());
  if (!node.start()) {
    std::cerr << "failed to bind " << cfg.value().listen_addr << "\n";
    return 1;
  }
  write_port_file(port_file, host_of(cfg.value().listen_addr), node.port());
  std::cout << "worker " << cfg.value().worker_id << " listening on " << node.base_url()
            << std::endl;
  if (!node.startup_sequence()) {
    std::cerr << "registration failed after retries (master or balancer unreachable)\n";
    return 1;
  }
  std::cout << "worker " << cfg.value().worker_id << " registered, load_factor="
            << node.load_factor() << std::endl;
  wait_for_signal();
  node.shutdown_sequence();
  node.stop();
  return 0;
}

int http_exit_code(int status) {
  if (status >= 200 && status < 300) return 0;
  if (status == 404) return 1;
  return 2;
}

int run_put(const std::string& url, const std::string& key_text, const std::string& file) {
  auto key = webkv::Key::parse(key_text);
  if (!key.ok()) {
    std::cerr << "bad key: " << key.message() << "\n";
    return 2;
  }
  std::ifstream in(file, std::ios::binary);
  if (!in) {
    std::cerr << "cannot read " << file << "\n";
    return 2;
  }
  std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  auto u = webkv::parse_url(url);
  if (!u) {
    std::cerr << "bad url " << url << "\n";
    return 2;
  }
  auto cli = webkv::make_client(*u, std::chrono::milliseconds(60000));
  auto r = cli.Put(webkv::file_path(key.value()), body, "application/octet-stream");
  if (!r) {
    std::cerr << "transport error talking to " << url << "\n";
    return 2;
  }
  if (r->status >= 300) std::cerr << "HTTP " << r->status << ": " << r->body << "\n";
  return http_exit_code(r->status);
}

int run_get(const std::string& url, const std::string& key_text, const std::string& out_file) {
  auto key = webkv::Key::parse(key_text);
  if (!key.ok()) {
    std::cerr << "bad key: " << key.message() << "\n";
    return 2;
  }
  auto hop = webkv::get_following_redirects(url + webkv::file_path(key.value()), 2,
                                            std::chrono::milliseconds(60000));
  if (!hop.transport_ok) {
    std::cerr << "transport error talking to " << hop.failed_url << "\n";
    return 2;
  }
  if (hop.status != 200) {
    std::cerr << "HTTP " << hop.status << "\n";
    return http_exit_code(hop.status);
  }
  std::ofstream out(out_file, std::ios::binary | std::ios::trunc);
  if (!out) {
    std::cerr << "cannot write " << out_file << "\n";
    return 2;
  }
  out.write(hop.body.data(), static_cast<std::streamsize>(hop.body.size()));
  return out.flush() ? 0 : 2;
}

bool parse_worker_range(const std::string& text, int& lo, int& hi) {
  auto dots = text.find("..");
  try {
    if (dots == std::string::npos) {
      lo = 1;
      hi = std::stoi(text);
    } else {
      lo = std::stoi(text.substr(0, dots));
      hi = std::stoi(text.substr(dots + 2));
    }
  } catch (...) {
    return false;
  }
  return lo >= 1 && hi >= lo;
}

int emit_report(const std::vector<webkv::BenchRow>& rows, const std::string& out) {
  if (auto st = webkv::write_bench_csv(out, rows); !st.ok()) {
    std::cerr << st.message() << "\n";
    return 2;
  }
  std::cout << webkv::kBenchCsvHeader << "\n";
  for (const auto& r : rows) std::cout << webkv::format_bench_row(r) << "\n";
  std::cout << "wrote " << out << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"webkv: a key-retrieval cluster (balancer + master + workers) with a bench harness"};
  app.require_subcommand(1);

  // node start <role> --config <file>
  auto* node = app.add_subcommand("node", "run a cluster node until signalled");
  std::string action, role, config_path, port_file;
  node->add_option("action", action, "only 'start'")->required();
  node->add_option("role", role, "master|worker|balancer")->required();
  node->add_option("--config", config_path, "JSON config file")->required();
  node->add_option("--port-file", port_file, "write the bound host:port to this file");

  std::string url = "http://127.0.0.1:8080";
  auto* put = app.add_subcommand("put", "store a file under a key");
  std::string put_key, put_file;
  put->add_option("key", put_key)->required();
  put->add_option("file", put_file)->required();
  put->add_option("--url", url, "balancer URL");

  auto* get = app.add_subcommand("get", "fetch a key into a file");
  std::string get_key, get_file;
  get->add_option("key", get_key)->required();
  get->add_option("out_file", get_file)->required();
  get->add_option("--url", url, "balancer URL");

  auto* bsize = app.add_subcommand("bench-size", "latency vs dataset size, fixed worker count");
  std::vector<int> sizes{10, 50, 100, 500};
  int size_workers = 1, clients = 16, requests = 1000;
  std::string out_csv = "report.csv";
  bsize->add_option("--sizes", sizes, "dataset sizes in MB")->delimiter(',');
  bsize->add_option("--workers", size_workers, "worker count (default 1)");
  bsize->add_option("--clients", clients, "concurrent clients");
  bsize->add_option("--requests", requests, "reads per point");
  bsize->add_option("--out", out_csv, "CSV output path");

  auto* bscale = app.add_subcommand("bench-scale", "latency vs worker count, fixed dataset");
  int scale_size = 500;
  std::string workers_range = "1..6";
  bscale->add_option("--size", scale_size, "dataset size in MB");
  bscale->add_option("--workers", workers_range, "worker range, e.g. 1..6 or 6");
  bscale->add_option("--clients", clients, "concurrent clients");
  bscale->add_option("--requests", requests, "reads per point");
  bscale->add_option("--out", out_csv, "CSV output path");

  CLI11_PARSE(app, argc, argv);

  if (node->parsed()) {
    if (action != "start") {
      std::cerr << "unknown node action '" << action << "' (expected 'start')\n";
      return 2;
    }
    if (role != "master" && role != "worker" && role != "balancer") {
      std::cerr << "unknown role '" << role << "'\n";
      return 2;
    }
    return run_node(role, config_path, port_file);
  }
  if (put->parsed()) return run_put(url, put_key, put_file);
  if (get->parsed()) return run_get(url, get_key, get_file);

  webkv::BenchOptions opt;
  opt.clients = clients;
  opt.requests = requests;
  if (bsize->parsed()) {
    auto rows = webkv::bench_size(self_binary(), sizes, size_workers, opt);
    if (!rows.ok()) {
      std::cerr << "bench failed: " << rows.message() << "\n";
      return 2;
    }
    return emit_report(rows.value(), out_csv);
  }
  if (bscale->parsed()) {
    int lo = 1, hi = 6;
    if (!parse_worker_range(workers_range, lo, hi)) {
      std::cerr << "bad --workers range '" << workers_range << "'\n";
      return 2;
    }
    auto rows = webkv::bench_scale(self_binary(), scale_size, lo, hi, opt);
    if (!rows.ok()) {
      std::cerr << "bench failed: " << rows.message() << "\n";
      return 2;
    }
    return emit_report(rows.value(), out_csv);
  }
  return 0;
}
