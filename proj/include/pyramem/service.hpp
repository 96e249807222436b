#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <regex>
#include <shared_mutex>
#include <sstream>
#include <string>

#include "httplib.h"
#include "pyramem/config.hpp"
#include "pyramem/ingest.hpp"
#include "pyramem/reasoner.hpp"
#include "pyramem/remote.hpp"

namespace pyramem::service {

namespace fs = std::filesystem;

using AdapterFactory = std::function<AdapterSet(const EngineConfig&)>;

inline bool valid_store_id(const std::string& id) {
  static const std::regex re("[A-Za-z0-9_-]{1,64}");
  return std::regex_match(id, re);
}

// One named store on disk:
//   <data>/<id>/config.json     engine config
//   <data>/<id>/log.ndjson      append log (authoritative)
//   <data>/<id>/snapshot.json   export refreshed after each ingest
//   <data>/<id>/queries.ndjson  one trace per query
class StoreHandle {
 public:
  StoreHandle(std::string id, fs::path dir, EngineConfig config, AdapterSet adapters,
              std::size_t trace_retention)
      : id_(std::move(id)),
        dir_(std::move(dir)),
        config_(std::move(config)),
        adapters_(std::move(adapters)),
        store_(adapters_.embedder),
        trace_retention_(trace_retention) {}

  const std::string& id() const noexcept { return id_; }
  const EngineConfig& config() const noexcept { return config_; }
  const AdapterSet& adapters() const noexcept { return adapters_; }
  PyramidStore& store() noexcept { return store_; }
  const PyramidStore& store() const noexcept { return store_; }
  fs::path log_path() const { return dir_ / "log.ndjson"; }
  fs::path snapshot_path() const { return dir_ / "snapshot.json"; }
  fs::path queries_path() const { return dir_ / "queries.ndjson"; }

  // Rebuilds state from the log (or the snapshot export when no log exists)
  // and starts appending.
  void open() {
    if (fs::exists(log_path())) store_.replace_state(PyramidStore::replay_log(log_path()));
    else if (fs::exists(snapshot_path())) store_.load(snapshot_path());
    store_.open_log(log_path());
  }

  void close() { store_.close_log(); }

  // At most one ingestion per store; a second concurrent one is a conflict.
  class IngestGuard {
   public:
    explicit IngestGuard(StoreHandle& h) : h_(h) {
      if (h_.ingesting_.exchange(true)) throw ConflictError("ingest already running on store '" + h_.id_ + "'");
    }
    ~IngestGuard() { h_.ingesting_ = false; }
    IngestGuard(const IngestGuard&) = delete;
    IngestGuard& operator=(const IngestGuard&) = delete;

   private:
    StoreHandle& h_;
  };

  IngestPipeline make_pipeline() {
    IngestConfig ic;
    ic.clip_len = config_.clip_len;
    ic.k_link = config_.k_link;
    ic.theta_local = config_.theta_local;
    ic.theta_global = config_.theta_global;
    return IngestPipeline(store_, adapters_.ingest(), ic);
  }

  void after_ingest() { store_.save(snapshot_path()); }

  ReasonerConfig reasoner_config() const {
    ReasonerConfig rc;
    rc.k_seed = config_.k_seed;
    rc.max_turns = config_.max_turns;
    rc.traverse_undirected = config_.traverse_undirected;
    return rc;
  }

  AnswerResult query(const Query& q) {
    Reasoner reasoner(store_.snapshot(), adapters_.embedder, adapters_.pruner, adapters_.answerer,
                      reasoner_config());
    auto result = reasoner.answer(q);
    persist_trace(q, result);
    return result;
  }

 private:
  void persist_trace(const Query& q, const AnswerResult& r) {
    std::lock_guard lock(trace_mutex_);
    Json line{{"question", q.question}, {"result", to_json(r, true)}};
    {
      std::ofstream out(queries_path(), std::ios::app | std::ios::binary);
      if (!out) {
        log::warn("cannot append trace for store " + id_);
        return;
      }
      out << line.dump() << '\n';
    }
    if (trace_retention_ == 0) return;
    std::ifstream in(queries_path(), std::ios::binary);
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);)
      if (!l.empty()) lines.push_back(std::move(l));
    in.close();
    if (lines.size() <= trace_retention_) return;
    std::ofstream out(queries_path(), std::ios::trunc | std::ios::binary);
    for (std::size_t i = lines.size() - trace_retention_; i < lines.size(); ++i) out << lines[i] << '\n';
  }

  std::string id_;
  fs::path dir_;
  EngineConfig config_;
  AdapterSet adapters_;
  PyramidStore store_;
  std::atomic<bool> ingesting_{false};
  std::mutex trace_mutex_;
  std::size_t trace_retention_;
};

struct RegistryOptions {
  fs::path data_dir = "data";
  EngineConfig defaults;
  AdapterFactory factory = make_adapter_set;
  std::size_t trace_retention = 0;  // keep at most this many traces per store; 0 keeps all
  bool env_overrides = true;
};

class StoreRegistry {
 public:
  explicit StoreRegistry(RegistryOptions options) : options_(std::move(options)) {
    std::error_code ec;
    fs::create_directories(options_.data_dir, ec);
    if (ec) throw IoError("cannot create data dir " + options_.data_dir.string() + ": " + ec.message());
  }

  ~StoreRegistry() { close_all(); }

  const RegistryOptions& options() const noexcept { return options_; }

  // `overrides` is merged over the registry defaults.
  std::shared_ptr<StoreHandle> create(const std::string& id, const Json& overrides = Json::object()) {
    if (!valid_store_id(id)) throw InvalidArgumentError("invalid store id '" + id + "' (allowed: [A-Za-z0-9_-]{1,64})");
    std::unique_lock lock(mutex_);
    const auto dir = options_.data_dir / id;
    if (stores_.count(id) || fs::exists(dir / "config.json")) throw ConflictError("store '" + id + "' already exists");
    Json merged = options_.defaults;
    if (!overrides.is_null()) {
      if (!overrides.is_object()) decode::fail("config", "expected object");
      merged.merge_patch(overrides);
    }
    auto config = engine_config_from_json(merged);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    {
      std::ofstream out(dir / "config.json", std::ios::binary | std::ios::trunc);
      if (!out) throw IoError("cannot write " + (dir / "config.json").string());
      out << Json(config).dump(2) << '\n';
    }
    auto handle = make_handle(id, dir, config);
    stores_.emplace(id, handle);
    return handle;
  }

  // Opens on first use; NotFoundError when the store does not exist on disk.
  std::shared_ptr<StoreHandle> get(const std::string& id) {
    if (!valid_store_id(id)) throw NotFoundError("unknown store '" + id + "'");
    {
      std::shared_lock lock(mutex_);
      if (auto it = stores_.find(id); it != stores_.end()) return it->second;
    }
    std::unique_lock lock(mutex_);
    if (auto it = stores_.find(id); it != stores_.end()) return it->second;
    const auto dir = options_.data_dir / id;
    if (!fs::exists(dir / "config.json")) throw NotFoundError("unknown store '" + id + "'");
    auto config = load_engine_config(dir / "config.json");
    auto handle = make_handle(id, dir, config);
    stores_.emplace(id, handle);
    return handle;
  }

  std::vector<std::string> list() const {
    std::set<std::string> ids;
    for (const auto& entry : fs::directory_iterator(options_.data_dir))
      if (entry.is_directory() && fs::exists(entry.path() / "config.json")) ids.insert(entry.path().filename().string());
    return {ids.begin(), ids.end()};
  }

  void close_all() {
    std::unique_lock lock(mutex_);
    for (auto& [id, h] : stores_) h->close();
    stores_.clear();
  }

 private:
  std::shared_ptr<StoreHandle> make_handle(const std::string& id, const fs::path& dir, EngineConfig config) {
    if (options_.env_overrides) config = apply_env_overrides(std::move(config));
    auto adapters = options_.factory(config);
    auto handle = std::make_shared<StoreHandle>(id, dir, std::move(config), std::move(adapters),
                                                options_.trace_retention);
    handle->open();
    return handle;
  }

  RegistryOptions options_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<StoreHandle>> stores_;
};

// ---------------------------------------------------------------------------
// Shared request handling, used by both the HTTP server and the CLI.

inline Query query_from_json(const Json& j) {
  if (!j.is_object()) decode::fail("", "expected object");
  Query q;
  q.question = decode::str(j, "question", "");
  if (q.question.empty()) decode::fail("question", "must not be empty");
  if (j.contains("options") && !j["options"].is_null()) q.options = decode::list(j, "options", "", decode::string_of);
  auto positive = [&](const char* key) -> std::optional<std::size_t> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    const auto v = decode::uint(j, key, "");
    if (v == 0) decode::fail(key, "must be >= 1");
    return static_cast<std::size_t>(v);
  };
  q.k_seed = positive("k");
  q.max_turns = positive("max_turns");
  return q;
}

inline std::string stats_text(const StoreHandle& h) { return graph_stats(h.store().state()).dump(2) + "\n"; }

inline Json node_json(const StoreHandle& h, const NodeId& id) {
  const auto state = h.store().state();
  Json out;
  if (const auto* f = state.fact(id)) out = Json{{"level", "fact"}, {"node", *f}};
  else if (const auto* c = state.clip(id)) out = Json{{"level", "clip"}, {"node", *c}};
  else if (id == global_id()) out = Json{{"level", "global"}, {"node", state.global}};
  else throw NotFoundError("unknown node '" + id.str() + "'");
  out["id"] = id;
  Json links = Json::array();
  for (const auto& [from, l] : neighbors(state, id)) links.push_back(l);
  out["links"] = std::move(links);
  return out;
}

inline Json persons_json(const StoreHandle& h) {
  Json out = Json::array();
  for (const auto& [id, p] : h.store().state().persons) out.push_back(p);
  return out;
}

// Keyframe URIs recorded on facts that name local files.
inline std::optional<fs::path> media_file(const StoreHandle& h, const std::string& uri) {
  const auto state = h.store().state();
  for (const auto& [id, f] : state.facts)
    for (const auto& k : f.keyframes)
      if (k.encoding == KeyframeEncoding::external_file && k.uri == uri) {
        fs::path p = uri.rfind("file://", 0) == 0 ? fs::path(uri.substr(7)) : fs::path(uri);
        if (fs::is_regular_file(p)) return p;
      }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// HTTP

struct ServerOptions {
  std::optional<std::string> token;  // static bearer token
  std::size_t threads = 8;
};

inline Json error_body(const std::string& code, const std::string& message, const std::string& field = {}) {
  Json e{{"code", code}, {"message", message}};
  if (!field.empty()) e["field"] = field;
  return Json{{"error", e}};
}

class HttpService {
 public:
  HttpService(StoreRegistry& registry, ServerOptions options = {}) : registry_(registry), options_(std::move(options)) {
    const auto threads = std::max<std::size_t>(1, options_.threads);
    server_.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    routes();
  }

  // Binds an ephemeral port when `port` is 0; returns the bound port.
  int bind(const std::string& host, int port) {
    const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    return bound;
  }

  // Blocks until stop().
  void serve() {
    if (!server_.listen_after_bind()) throw IoError("server stopped with an error");
  }

  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }
  bool running() const { return server_.is_running(); }

 private:
  static void send_json(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(2) + "\n", "application/json");
  }

  template <class F>
  auto guarded(F handler) {
    return [this, handler](const httplib::Request& req, httplib::Response& res) {
      if (!authorized(req, res)) return;
      try {
        handler(req, res);
      } catch (const NotFoundError& e) {
        send_json(res, 404, error_body("not_found", e.what()));
      } catch (const ConflictError& e) {
        send_json(res, 409, error_body("conflict", e.what()));
      } catch (const ParseError& e) {
        send_json(res, 422, error_body("invalid_payload", e.what(), e.field()));
      } catch (const InvalidArgumentError& e) {
        send_json(res, 422, error_body("invalid_payload", e.what()));
      } catch (const AdapterError& e) {
        send_json(res, 502, error_body("adapter_error", e.what()));
      } catch (const std::exception& e) {
        send_json(res, 500, error_body("internal", e.what()));
      }
    };
  }

  bool authorized(const httplib::Request& req, httplib::Response& res) const {
    if (!options_.token || req.path == "/healthz") return true;
    if (req.get_header_value("Authorization") == "Bearer " + *options_.token) return true;
    send_json(res, 401, error_body("unauthorized", "missing or wrong bearer token"));
    return false;
  }

  static Json body_json(const httplib::Request& req) {
    if (req.body.empty()) return Json::object();
    return parse_json_text(req.body);
  }

  void routes() {
    server_.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, Json{{"status", "ok"}});
    });

    server_.Get("/stores", guarded([this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, Json{{"stores", registry_.list()}});
    }));

    server_.Post("/stores", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = body_json(req);
      if (!body.is_object()) decode::fail("", "expected object");
      const auto id = decode::str(body, "id", "");
      auto handle = registry_.create(id, body.value("config", Json::object()));
      send_json(res, 201, Json{{"id", handle->id()}, {"config", handle->config()}});
    }));

    server_.Post(R"(/stores/([^/]+)/ingest)",
                 [this](const httplib::Request& req, httplib::Response& res, const httplib::ContentReader& reader) {
                   guarded([&](const httplib::Request& r, httplib::Response& out) { ingest(r, out, reader); })(req, res);
                 });

    server_.Post(R"(/stores/([^/]+)/query)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto handle = registry_.get(req.matches[1].str());
      const auto body = body_json(req);
      const auto q = query_from_json(body);
      const bool timings = body.is_object() && body.value("include_timings", false);
      send_json(res, 200, to_json(handle->query(q), timings));
    }));

    server_.Get(R"(/stores/([^/]+)/nodes/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto handle = registry_.get(req.matches[1].str());
      send_json(res, 200, node_json(*handle, NodeId(req.matches[2].str())));
    }));

    server_.Get(R"(/stores/([^/]+)/graph/stats)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto handle = registry_.get(req.matches[1].str());
      res.status = 200;
      res.set_content(stats_text(*handle), "application/json");
    }));

    server_.Get(R"(/stores/([^/]+)/persons)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto handle = registry_.get(req.matches[1].str());
      send_json(res, 200, persons_json(*handle));
    }));

    server_.Get(R"(/stores/([^/]+)/media/(.+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto handle = registry_.get(req.matches[1].str());
      const auto uri = req.matches[2].str();
      auto file = media_file(*handle, uri);
      if (!file) throw NotFoundError("no local keyframe '" + uri + "'");
      std::ifstream in(*file, std::ios::binary);
      std::stringstream buffer;
      buffer << in.rdbuf();
      res.status = 200;
      res.set_content(buffer.str(), "application/octet-stream");
    }));
  }

  // NDJSON body, processed line by line as chunks arrive.
  void ingest(const httplib::Request& req, httplib::Response& res, const httplib::ContentReader& reader) {
    auto handle = registry_.get(req.matches[1].str());
    StoreHandle::IngestGuard guard(*handle);
    auto pipeline = handle->make_pipeline();
    IngestReport report;
    std::string pending;
    std::size_t line_no = 0, offset = 0, events = 0;
    std::exception_ptr failure;

    auto consume = [&](std::string_view line) {
      ++line_no;
      const auto line_offset = offset;
      offset += line.size() + 1;
      if (line.find_first_not_of(" \t\r") == std::string_view::npos) return;
      const auto where = "line " + std::to_string(line_no);
      Json j;
      try {
        j = Json::parse(line);
      } catch (const Json::parse_error& e) {
        throw ParseError(where + ": " + e.what(), line_offset + e.byte, where);
      }
      report.merge(pipeline.push(decode_event(j, where)));
      ++events;
    };

    reader([&](const char* data, std::size_t n) {
      if (failure) return true;  // drain the body, ignore the rest
      try {
        pending.append(data, n);
        std::size_t start = 0;
        for (auto nl = pending.find('\n'); nl != std::string::npos; nl = pending.find('\n', start)) {
          consume(std::string_view(pending).substr(start, nl - start));
          start = nl + 1;
        }
        pending.erase(0, start);
      } catch (...) {
        failure = std::current_exception();
      }
      return true;
    });
    if (!failure) {
      try {
        if (!pending.empty()) consume(pending);
        report.merge(pipeline.finish());
      } catch (...) {
        failure = std::current_exception();
      }
    }
    handle->after_ingest();
    if (failure) std::rethrow_exception(failure);

    Json body = report;
    body["events"] = events;
    body["next_window"] = handle->store().counters().next_window;
    send_json(res, 200, body);
  }

  StoreRegistry& registry_;
  ServerOptions options_;
  httplib::Server server_;
};

}  // namespace pyramem::service
