#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "pyramem/pyramem.hpp"

// Exit codes: 0 ok, 1 unexpected failure, 2 usage, 3 I/O, 4 not found,
// 5 invalid input, 6 model adapter failure, 7 conflict.

namespace {

using namespace pyramem;
namespace svc = pyramem::service;

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kIo = 3, kNotFound = 4, kInvalid = 5, kAdapter = 6, kConflict = 7 };

struct Globals {
  std::string data_dir = "data";
  std::string config_path;
  bool json = false;
};

svc::RegistryOptions registry_options(const Globals& g) {
  svc::RegistryOptions o;
  o.data_dir = g.data_dir;
  if (!g.config_path.empty()) o.defaults = load_engine_config(g.config_path);
  return o;
}

void print_json(const Json& j) { std::cout << j.dump(2) << "\n"; }

void print_result(const AnswerResult& r, bool trace) {
  std::cout << "answer: " << (r.answer ? *r.answer : "(none)") << "\n"
            << "terminated_by: " << to_string(r.terminated_by) << (r.saturated ? " (saturated)" : "") << "\n"
            << "turns_used: " << r.turns_used << "\n"
            << "context: " << r.context.size() << " node(s)\n";
  if (r.error) std::cout << "error: " << *r.error << "\n";
  if (!trace) return;
  for (const auto& t : r.trace) {
    std::cout << "turn " << t.turn << ": expanded " << t.expanded.size() << ", kept " << t.pruned_in.size()
              << ", |C| = " << t.context_size;
    if (t.verdict) std::cout << ", verdict " << (t.verdict->is_answer() ? "answer" : "expand");
    std::cout << " (" << bench::fixed(t.elapsed_ms, 2) << " ms)\n";
    for (const auto& id : t.pruned_in) std::cout << "    + " << id.str() << "\n";
    for (const auto& w : t.warnings) std::cout << "    ! " << w << "\n";
  }
}

int serve(svc::StoreRegistry& registry, const std::string& host, int port, std::size_t threads) {
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  svc::ServerOptions options;
  options.token = process_env("PYRAMEM_TOKEN");
  options.threads = threads;
  svc::HttpService http(registry, options);
  const int bound = http.bind(host, port);
  std::cerr << "pyramem: serving " << registry.options().data_dir.string() << " on http://" << host << ":" << bound
            << "\n";
  std::jthread waiter([&](std::stop_token) {
    int sig = 0;
    sigwait(&signals, &sig);
    http.stop();
  });
  http.serve();
  registry.close_all();
  // Wake the waiter if the server stopped on its own.
  pthread_kill(waiter.native_handle(), SIGTERM);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pyramem: hierarchical stream memory with structure-guided retrieval"};
  app.require_subcommand(1);
  Globals g;
  if (auto env = process_env("PYRAMEM_DATA")) g.data_dir = *env;
  app.add_option("--data-dir", g.data_dir, "Directory holding the stores")->capture_default_str();
  app.add_option("--config", g.config_path, "Engine config JSON used as defaults for new stores");
  app.add_flag("--json", g.json, "Machine-readable JSON output");

  std::string store_id;
  auto* create = app.add_subcommand("create", "Create an empty store");
  create->add_option("--store", store_id, "Store id")->required();
  std::string config_json;
  create->add_option("--config-json", config_json, "JSON object of engine settings for this store");

  auto* ingest = app.add_subcommand("ingest", "Ingest an NDJSON event stream (creates the store if missing)");
  ingest->add_option("--store", store_id, "Store id")->required();
  std::string stream_path;
  ingest->add_option("--stream", stream_path, "NDJSON file of {t, text, ...} events")->required();
  std::optional<double> clip_len;
  ingest->add_option("--clip-len", clip_len, "Clip length in seconds (new stores only)");

  auto* query = app.add_subcommand("query", "Answer a question from a store");
  query->add_option("--store", store_id, "Store id")->required();
  std::string question;
  query->add_option("--question", question, "Question text")->required();
  std::optional<std::size_t> k, max_turns;
  query->add_option("--k", k, "Seed count")->check(CLI::PositiveNumber);
  query->add_option("--max-turns", max_turns, "Maximum rounds R")->check(CLI::PositiveNumber);
  std::vector<std::string> options;
  query->add_option("--option", options, "Multiple-choice option (repeatable)");
  bool trace = false, timings = false;
  query->add_flag("--trace", trace, "Print the per-turn trace");
  query->add_flag("--timings", timings, "Include elapsed times in JSON output");

  auto* inspect = app.add_subcommand("inspect", "Inspect store contents");
  inspect->require_subcommand(1);
  auto* inspect_node = inspect->add_subcommand("node", "Show one node with its links");
  inspect_node->add_option("--store", store_id, "Store id")->required();
  std::string node_id;
  inspect_node->add_option("node", node_id, "Node id (f-N, c-N, g-0)")->required();

  auto* stats = app.add_subcommand("stats", "Graph statistics");
  stats->add_option("--store", store_id, "Store id")->required();

  auto* bench_cmd = app.add_subcommand("bench", "Run the ablation benchmark on a synthetic workload");
  std::string workload = "hop2", variants = "all", out_path;
  bench_cmd->add_option("--workload", workload, "Preset (hop2, mixed, distractor-heavy, smoke) or JSON file")
      ->capture_default_str();
  bench_cmd->add_option("--variants", variants, "'all' or comma-separated variant names")->capture_default_str();
  bench_cmd->add_option("--out", out_path, "CSV output path");
  double delay_ms = 0.0;
  bench_cmd->add_option("--delay-ms", delay_ms, "Injected answer delay per context node (ms)");
  std::size_t workers = 0;
  bench_cmd->add_option("--workers", workers, "Worker threads (0 = hardware concurrency)");
  std::optional<std::uint64_t> seed;
  bench_cmd->add_option("--seed", seed, "Override the workload seed");

  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP service");
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t threads = 8, retention = 0;
  serve_cmd->add_option("--host", host)->capture_default_str();
  serve_cmd->add_option("--port", port)->capture_default_str();
  serve_cmd->add_option("--threads", threads)->capture_default_str();
  serve_cmd->add_option("--trace-retention", retention, "Traces kept per store (0 = all)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*bench_cmd) {
      bench::WorkloadSpec spec;
      if (std::ifstream file(workload); file) {
        std::string text((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
        spec = bench::workload_spec_from_json(parse_json_text(text));
      } else {
        spec = bench::preset_workload(workload);
      }
      if (seed) spec.seed = *seed;
      bench::BenchConfig config;
      config.delay_per_node = std::chrono::microseconds(static_cast<long long>(delay_ms * 1000.0));
      config.workers = workers;
      const auto table = bench::run_ablation(bench::generate_workload(spec), bench::parse_variants(variants), config);
      if (!out_path.empty()) {
        std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + out_path);
        out << bench::to_csv(table);
      }
      if (g.json) {
        Json rows = Json::array();
        for (const auto& r : table.rows)
          rows.push_back(Json{{"variant", r.variant.name},
                              {"accuracy", r.accuracy},
                              {"p50", r.latency.p50},
                              {"p95", r.latency.p95},
                              {"mean", r.latency.mean},
                              {"mean_context_size", r.mean_context_size}});
        print_json(Json{{"workload", spec}, {"rows", rows}});
      } else {
        std::cout << bench::format_table(table);
      }
      return kOk;
    }

    svc::StoreRegistry registry(registry_options(g));

    if (*create) {
      Json overrides = config_json.empty() ? Json::object() : parse_json_text(config_json);
      auto h = registry.create(store_id, overrides);
      if (g.json) print_json(Json{{"id", h->id()}, {"config", h->config()}});
      else std::cout << "created store " << h->id() << "\n";
      return kOk;
    }

    if (*ingest) {
      std::ifstream in(stream_path, std::ios::binary);
      if (!in) throw IoError("cannot read stream " + stream_path);
      const auto events = read_event_stream(in);
      std::shared_ptr<svc::StoreHandle> h;
      try {
        h = registry.get(store_id);
      } catch (const NotFoundError&) {
        Json overrides = Json::object();
        if (clip_len) overrides["clip_len"] = *clip_len;
        h = registry.create(store_id, overrides);
      }
      if (clip_len && *clip_len != h->config().clip_len)
        throw InvalidArgumentError("store '" + store_id + "' uses clip length " + bench::fixed(h->config().clip_len, 3) +
                                   "; --clip-len only applies to new stores");
      svc::StoreHandle::IngestGuard guard(*h);
      auto pipeline = h->make_pipeline();
      const auto report = pipeline.ingest(events);
      h->after_ingest();
      Json j = report;
      j["events"] = events.size();
      j["next_window"] = h->store().counters().next_window;
      if (g.json) {
        print_json(j);
      } else {
        std::cout << "ingested " << events.size() << " event(s): " << report.clips_added << " clip(s), "
                  << report.facts_added << " fact(s), " << report.relational_links << " relational and "
                  << report.cross_clip_links << " cross-clip link(s), " << report.persons_created
                  << " new person(s)\n";
        for (const auto& w : report.warnings) std::cout << "warning: " << w << "\n";
      }
      return kOk;
    }

    if (*query) {
      auto h = registry.get(store_id);
      Query q{question, options, k, max_turns};
      const auto result = h->query(q);
      if (g.json) print_json(to_json(result, timings));
      else print_result(result, trace);
      return result.terminated_by == Termination::adapter_error ? kAdapter : kOk;
    }

    if (*inspect_node) {
      auto h = registry.get(store_id);
      print_json(svc::node_json(*h, NodeId(node_id)));
      return kOk;
    }

    if (*stats) {
      auto h = registry.get(store_id);
      std::cout << svc::stats_text(*h);
      return kOk;
    }

    if (*serve_cmd) {
      svc::RegistryOptions o = registry_options(g);
      o.trace_retention = retention;
      registry.close_all();
      svc::StoreRegistry serving(std::move(o));
      return serve(serving, host, port, threads);
    }
  } catch (const NotFoundError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNotFound;
  } catch (const ConflictError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConflict;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const InvalidArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const AdapterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kAdapter;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kUsage;
}
