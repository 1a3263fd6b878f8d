#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include "dili/config.hpp"
#include "dili/server.hpp"
#include "dili/tcp.hpp"
#include "dili/verify/bench.hpp"
#include "dili/verify/scenarios.hpp"
#include "dili/verify/suite.hpp"

namespace {

constexpr int kPass = 0;
constexpr int kBreach = 1;
constexpr int kConfigError = 2;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop.store(true); }

void setup_logging(const std::string& level) {
  spdlog::set_pattern("ts=%Y-%m-%dT%H:%M:%S.%e level=%l %v");
  spdlog::set_level(spdlog::level::from_str(level));
}

struct BenchArgs {
  std::size_t servers = 1;
  std::string backend = "loopback";
  std::uint64_t keys = 10'000;
  std::uint64_t ops = 20'000;
  double read_pct = 90;
  double zipf = 0.99;
  std::uint64_t seed = 1;
  std::int64_t split_threshold = 125;
  std::size_t threads = 4;
  int balancer_ms = 50;
  std::string out;
};

int run_bench(const BenchArgs& a) {
  dili::verify::BenchOptions o;
  o.backend = a.backend;
  o.servers = a.servers;
  o.split_threshold = a.split_threshold;
  o.balancer_period = std::chrono::milliseconds(a.balancer_ms);
  o.spec.keys = a.keys;
  o.spec.ops = a.ops;
  o.spec.read_fraction = a.read_pct / 100.0;
  o.spec.zipf = a.zipf;
  o.spec.seed = a.seed;
  o.spec.threads = a.threads;

  spdlog::info("event=bench_start backend={} servers={} keys={} ops={} seed={}", a.backend,
               a.servers, a.keys, a.ops, a.seed);
  const auto report = dili::verify::run_workload(o);
  std::cout << dili::verify::format_text(report);
  if (!a.out.empty()) {
    std::ofstream f(a.out);
    if (!f) {
      spdlog::error("event=report_open_failed path={}", a.out);
      return kConfigError;
    }
    dili::verify::write_csv(report, f);
  }
  spdlog::info("event=bench_done ops_per_sec={:.0f} monitors_ok={}", report.ops_per_sec,
               report.monitors_ok());
  return report.monitors_ok() ? kPass : kBreach;
}

struct VerifyArgs {
  std::string suite = "all";
  double duration_s = 60;
  std::uint64_t seed = 1;
  std::size_t servers = 4;
  std::string fault = "none";
};

bool report(const std::string& name, const dili::verify::ScenarioResult& r) {
  std::cout << fmt::format("[{}] {}: {} ({:.1f}s)\n", r.pass ? "PASS" : "FAIL", name, r.summary,
                           r.seconds);
  if (!r.pass && !r.detail.empty()) std::cout << "  " << r.detail << "\n";
  spdlog::info("event=verify_result check={} pass={}", name, r.pass);
  return r.pass;
}

int run_verify(const VerifyArgs& a) {
  namespace v = dili::verify;
  const std::string& s = a.suite;
  const bool all = s == "all";
  bool ok = true;

  if (all || s == "invariants") {
    v::SuiteOptions o;
    o.duration = std::chrono::milliseconds(static_cast<std::int64_t>(a.duration_s * 1000));
    o.seed = a.seed;
    o.servers = a.servers;
    o.faults.skip_delete_mark_check = a.fault == "skip-delete-mark";
    o.faults.skip_insert_freeze_check = a.fault == "skip-insert-freeze";
    spdlog::info("event=suite_start seed={} duration_s={} fault={}", a.seed, a.duration_s, a.fault);
    const auto rep = v::run_invariant_suite(o);
    std::cout << v::format_suite(rep);
    ok = rep.pass() && ok;
  }
  // The remaining suites are sized for a quick run; the acceptance binary
  // runs them at full scale.
  if (all || s == "linearizability") {
    v::LinearizabilityOptions o;
    o.histories = 100;
    o.first_seed = a.seed;
    ok = report("linearizability", v::check_linearizability(o)) && ok;
  }
  if (all || s == "replay") {
    v::ReplayOptions o;
    o.runs = 50;
    o.first_seed = a.seed;
    ok = report("move_replay", v::check_replay(o)) && ok;
  }
  if (all || s == "splitmerge") {
    v::SplitMergeOptions o;
    o.cycles = 20;
    o.seed = a.seed;
    ok = report("split_merge_inverse", v::check_split_merge_inverse(o)) && ok;
    v::OffsetOptions off;
    off.operations = 40;
    off.seed = a.seed;
    ok = report("offset_conservation", v::check_offset_conservation(off)) && ok;
  }
  if (all || s == "registry") {
    v::RegistryOracleOptions o;
    o.seed = a.seed;
    ok = report("registry_oracle", v::check_registry_oracle(o)) && ok;
    v::RdcssModelOptions m;
    m.seed = a.seed;
    m.random_programs = 10;
    ok = report("rdcss_schedules", v::check_rdcss_schedules(m)) && ok;
  }
  std::cout << (ok ? "verify passed\n" : "verify FAILED\n");
  return ok ? kPass : kBreach;
}

int run_serve(const std::string& path) {
  dili::ServerConfig cfg = dili::load_config(path);
  if (cfg.listen_addr.empty()) throw dili::ConfigError("listen_addr is required for serve");

  dili::Server server(cfg);
  dili::TcpTransport transport(cfg.server_id, cfg.peers, cfg.workers);
  transport.serve([&server](const dili::Message& m) { return server.handle(m); }, cfg.listen_addr);
  server.attach(transport);
  if (cfg.balancer_period.count() > 0) server.start_balancer();
  spdlog::info("event=serving server={} addr={} port={} peers={}", cfg.server_id,
               cfg.listen_addr, transport.port(), cfg.peers.size());

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  while (!g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));

  spdlog::info("event=shutdown server={}", cfg.server_id);
  server.stop();
  transport.shutdown();
  return kPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed lock-free sorted list: servers, benchmarks and verification"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  BenchArgs b;
  auto* bench = app.add_subcommand("bench", "Run a load phase then a mixed op phase");
  bench->add_option("--servers", b.servers)->check(CLI::Range(1, 64));
  bench->add_option("--backend", b.backend)->check(CLI::IsMember({"loopback", "tcp"}));
  bench->add_option("--keys", b.keys)->check(CLI::Range(std::uint64_t{1}, std::uint64_t{1} << 30));
  bench->add_option("--ops", b.ops);
  bench->add_option("--read-pct", b.read_pct)->check(CLI::Range(0.0, 100.0));
  bench->add_option("--zipf", b.zipf, "Skew in (0, 1)")->check(CLI::Range(0.01, 0.999));
  bench->add_option("--seed", b.seed);
  bench->add_option("--split-threshold", b.split_threshold)->check(CLI::Range(2, 1 << 20));
  bench->add_option("--threads", b.threads)->check(CLI::Range(1, 256));
  bench->add_option("--balancer-ms", b.balancer_ms, "0 disables the balancer")
      ->check(CLI::Range(0, 60'000));
  bench->add_option("--out", b.out, "CSV report path");

  VerifyArgs va;
  auto* verify = app.add_subcommand("verify", "Run invariant and linearizability checks");
  verify->add_option("--suite", va.suite)
      ->check(CLI::IsMember({"all", "invariants", "linearizability", "replay", "splitmerge",
                             "registry"}));
  verify->add_option("--duration", va.duration_s, "Seconds for the invariant suite")
      ->check(CLI::Range(1.0, 86'400.0));
  verify->add_option("--seed", va.seed);
  verify->add_option("--servers", va.servers)->check(CLI::Range(1, 16));
  verify->add_option("--fault", va.fault, "Inject a known bug to see the checks catch it")
      ->check(CLI::IsMember({"none", "skip-delete-mark", "skip-insert-freeze"}));

  std::string config_path;
  auto* serve = app.add_subcommand("serve", "Run one server over TCP until SIGINT or SIGTERM");
  serve->add_option("--config", config_path)->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }
  setup_logging(log_level);

  try {
    if (bench->parsed()) return run_bench(b);
    if (verify->parsed()) return run_verify(va);
    if (serve->parsed()) return run_serve(config_path);
  } catch (const dili::ConfigError& e) {
    spdlog::error("event=config_error what=\"{}\"", e.what());
    return kConfigError;
  }
  return kConfigError;
}
