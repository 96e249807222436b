#pragma once

#include <chrono>
#include <memory>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "pyramem/adapters.hpp"
#include "pyramem/config.hpp"
#include "pyramem/ingest.hpp"
#include "pyramem/prompts.hpp"
#include "pyramem/scripted.hpp"

// Generic HTTP model gateway. Every call is one POST of
//   {"prompt": "...", "images": ["uri", ...]}        (images optional)
// answered by {"text": "..."}; the embedder role expects {"embedding": [...]}.

namespace pyramem::remote {

struct Endpoint {
  std::string base;  // scheme://host[:port]
  std::string path;  // begins with '/'
};

inline Endpoint parse_endpoint(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw InvalidArgumentError("endpoint must be an absolute URL: " + url);
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

class ModelClient {
 public:
  ModelClient(AdapterConfig config, std::optional<std::string> token = process_env("PYRAMEM_API_KEY"))
      : config_(std::move(config)),
        endpoint_(parse_endpoint(config_.endpoint.value_or(""))),
        token_(std::move(token)),
        slots_(static_cast<std::ptrdiff_t>(config_.max_in_flight)) {
    config_.check("remote");
  }

  const AdapterConfig& config() const noexcept { return config_; }

  // Transport errors, 429 and 5xx are retried; other statuses fail at once.
  Json post(const Json& body) const {
    slots_.acquire();
    struct Release {
      std::counting_semaphore<>& s;
      ~Release() { s.release(); }
    } release{slots_};

    const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
        std::chrono::duration<double>(config_.timeout));
    const auto payload = body.dump();
    std::string last_error = "no attempt made";
    const int attempts = config_.max_retries + 1;
    for (int attempt = 0; attempt < attempts; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(std::chrono::milliseconds(25 * attempt));
      httplib::Client client(endpoint_.base);
      client.set_connection_timeout(timeout);
      client.set_read_timeout(timeout);
      client.set_write_timeout(timeout);
      httplib::Headers headers;
      if (token_) headers.emplace("Authorization", "Bearer " + *token_);
      auto res = client.Post(endpoint_.path, headers, payload, "application/json");
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        continue;
      }
      if (res->status == 429 || res->status >= 500) {
        last_error = "HTTP " + std::to_string(res->status);
        continue;
      }
      if (res->status != 200)
        throw AdapterError("model endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body,
                           false);
      try {
        return Json::parse(res->body);
      } catch (const Json::parse_error& e) {
        throw AdapterError(std::string("model endpoint returned malformed JSON: ") + e.what(), false);
      }
    }
    throw AdapterError("model endpoint failed after " + std::to_string(attempts) + " attempt(s): " + last_error);
  }

  std::string complete(const std::string& prompt, const std::vector<std::string>& images = {}) const {
    Json body{{"prompt", prompt}};
    if (!images.empty()) body["images"] = images;
    auto reply = post(body);
    auto it = reply.find("text");
    if (it == reply.end() || !it->is_string()) throw AdapterError("model reply lacks a 'text' string", false);
    return it->get<std::string>();
  }

 private:
  AdapterConfig config_;
  Endpoint endpoint_;
  std::optional<std::string> token_;
  mutable std::counting_semaphore<> slots_;
};

inline std::string template_or(const AdapterConfig& c, std::string_view fallback) {
  return c.prompt_template.empty() ? std::string(fallback) : c.prompt_template;
}

class RemoteEmbedder final : public Embedder {
 public:
  RemoteEmbedder(AdapterConfig config, std::size_t dim) : client_(std::move(config)), dim_(dim) {}
  std::size_t dim() const override { return dim_; }
  Embedding embed(std::string_view text) const override {
    auto reply = client_.post(Json{{"prompt", text}});
    auto it = reply.find("embedding");
    if (it == reply.end() || !it->is_array()) throw AdapterError("embedder reply lacks 'embedding'", false);
    std::vector<double> v;
    for (const auto& x : *it) {
      if (!x.is_number()) throw AdapterError("embedding holds a non-number", false);
      v.push_back(x.get<double>());
    }
    if (v.size() != dim_) throw DimensionMismatchError(dim_, v.size());
    return Embedding(std::move(v));
  }

 private:
  ModelClient client_;
  std::size_t dim_;
};

inline std::string observations_text(const ClipObservation& clip) {
  std::string out;
  for (const auto& e : clip.events) {
    out += "[" + format_timestamp(e.t) + "] " + e.text;
    if (!e.asr.empty()) out += " (speech: " + e.asr + ")";
    if (e.media) out += " {keyframe: " + *e.media + "}";
    out += '\n';
  }
  return out;
}

// Accepts "MM:SS", seconds, or a [start, end] pair.
inline TimeSpan reply_span(const Json& j, const TimeSpan& clip) {
  auto one = [&](const Json& v) {
    double t = clip.start;
    if (v.is_number()) t = v.get<double>();
    else if (v.is_string()) t = parse_timestamp(v.get<std::string>());
    return std::clamp(t, clip.start, clip.end);
  };
  if (j.is_array() && j.size() == 2) {
    const double a = one(j[0]);
    return {a, std::max(a, one(j[1]))};
  }
  const double t = one(j);
  return {t, t};
}

class RemoteExtractor final : public Extractor {
 public:
  explicit RemoteExtractor(AdapterConfig config) : client_(std::move(config)) {}

  ExtractionResult extract(const ClipObservation& clip) const override {
    const auto prompt = prompts::render_prompt(
        template_or(client_.config(), "clip_extraction"),
        {{"clip_start", format_timestamp(clip.span.start)},
         {"clip_end", format_timestamp(clip.span.end)},
         {"observations", observations_text(clip)}});
    std::vector<std::string> images;
    for (const auto& k : clip.media_refs) images.push_back(k.uri);
    auto raw = client_.complete(prompt, images);
    auto j = prompts::extract_json_object(raw);
    if (!j || !j->contains("facts") || !(*j)["facts"].is_array())
      throw AdapterError("extractor reply lacks a 'facts' array", false);

    ExtractionResult out;
    try {
      for (const auto& f : (*j)["facts"]) {
        FactNode fact;
        fact.text = f.value("description", std::string{});
        if (fact.text.empty()) continue;
        fact.scene = f.value("scene_description", std::string{});
        fact.asr = f.value("asr", std::string{});
        fact.span = reply_span(f.value("timestamp", Json(clip.span.start)), clip.span);
        if (auto p = f.find("asr_periods"); p != f.end() && p->is_array())
          for (const auto& period : *p) {
            auto s = reply_span(period, clip.span);
            if (fact.span.contains(s)) fact.asr_periods.push_back(s);
          }
        if (auto n = f.find("name_mentions"); n != f.end() && n->is_array())
          for (const auto& name : *n)
            if (name.is_string()) fact.name_mentions.push_back(name.get<std::string>());
        if (auto k = f.find("key_frames"); k != f.end() && k->is_array())
          for (const auto& uri : *k)
            if (uri.is_string())
              fact.keyframes.push_back({fact.span.start, uri.get<std::string>(), KeyframeEncoding::external_file});
        out.facts.push_back(std::move(fact));
      }
    } catch (const std::exception& e) {
      throw AdapterError(std::string("extractor reply malformed: ") + e.what(), false);
    }
    out.clip_summary = j->value("clip_summary", std::string{});
    out.clip_scene = j->value("clip_scene", std::string{});
    // Face vectors come from the event hints, paired with the fact at the same
    // position.
    for (std::size_t i = 0; i < clip.events.size() && i < out.facts.size(); ++i)
      for (const auto& face : clip.events[i].faces) out.faces.push_back({face, i});
    return out;
  }

 private:
  ModelClient client_;
};

class RemoteLinkJudge final : public LinkJudge {
 public:
  explicit RemoteLinkJudge(AdapterConfig config) : client_(std::move(config)) {}
  std::string judge(const Json& query_fact, const Json& candidates) const override {
    return client_.complete(prompts::render_prompt(
        template_or(client_.config(), "link_generation"),
        {{"query_fact_json", query_fact.dump(2)}, {"facts_list_json", candidates.dump(2)}}));
  }

 private:
  ModelClient client_;
};

inline std::vector<std::string> keyframe_uris(const std::vector<Passage>& passages) {
  std::vector<std::string> out;
  for (const auto& p : passages)
    for (const auto& k : p.keyframes) out.push_back(k.uri);
  return out;
}

class RemotePruner final : public Pruner {
 public:
  explicit RemotePruner(AdapterConfig config) : client_(std::move(config)) {}
  std::string select(const SelectionRequest& r) const override {
    const bool mc = !r.options.empty();
    return client_.complete(prompts::render_prompt(
        template_or(client_.config(), mc ? "mc_node_selection" : "open_node_selection"),
        {{"question", mc ? r.question + "\n" + prompts::options_text(r.options) : r.question},
         {"context_summary", r.context_summary},
         {"character_profiles", prompts::profiles_json(r.profiles).dump(2)},
         {"passages", prompts::passages_json(r.passages, true).dump(2)}}));
  }

 private:
  ModelClient client_;
};

class RemoteAnswerer final : public Answerer {
 public:
  explicit RemoteAnswerer(AdapterConfig config) : client_(std::move(config)) {}
  std::string assess(const AssessRequest& r) const override {
    const bool mc = !r.options.empty();
    return client_.complete(
        prompts::render_prompt(template_or(client_.config(), mc ? "mc_answering" : "open_answering"),
                               {{"question", r.question},
                                {"options", prompts::options_text(r.options)},
                                {"context_summary", r.context_summary},
                                {"character_profiles", prompts::profiles_json(r.profiles).dump(2)},
                                {"passages", prompts::passages_json(r.passages, true).dump(2)}}),
        keyframe_uris(r.passages));
  }

 private:
  ModelClient client_;
};

class RemoteUpdater final : public GlobalUpdater {
 public:
  explicit RemoteUpdater(AdapterConfig config) : client_(std::move(config)) {}
  std::string update(std::string_view previous, std::string_view clip_summary) const override {
    return prompts::trim(client_.complete(prompts::render_prompt(
        template_or(client_.config(), "global_update"),
        {{"previous_summary", std::string(previous)}, {"clip_summary", std::string(clip_summary)}})));
  }

 private:
  ModelClient client_;
};

class RemoteProfiler final : public Profiler {
 public:
  explicit RemoteProfiler(AdapterConfig config) : client_(std::move(config)) {}
  std::string update(const PersonId& person, std::string_view old_profile,
                     std::span<const std::string> facts) const override {
    std::string joined;
    for (const auto& f : facts) joined += "- " + f + "\n";
    return prompts::trim(client_.complete(prompts::render_prompt(
        template_or(client_.config(), "profile_update"),
        {{"person_id", person}, {"profile", std::string(old_profile)}, {"facts", joined}})));
  }

 private:
  ModelClient client_;
};

}  // namespace pyramem::remote

namespace pyramem {

struct AdapterSet {
  std::shared_ptr<const Embedder> embedder;
  std::shared_ptr<const Extractor> extractor;
  std::shared_ptr<const LinkJudge> judge;
  std::shared_ptr<const Pruner> pruner;
  std::shared_ptr<const Answerer> answerer;
  std::shared_ptr<const GlobalUpdater> updater;
  std::shared_ptr<const Profiler> profiler;

  IngestAdapters ingest() const { return {extractor, judge, updater, profiler}; }
};

// Scripted bindings: hash embedder, one-fact-per-event extractor, keyword
// judge and pruner, overlap answerer, concatenating updater and profiler.
inline AdapterSet make_adapter_set(const EngineConfig& c) {
  auto remote = [&](const std::string& role) {
    const auto& a = c.adapter(role);
    return a.kind == AdapterKind::remote ? std::optional<AdapterConfig>(a) : std::nullopt;
  };
  AdapterSet s;
  if (auto a = remote("embedder")) s.embedder = std::make_shared<remote::RemoteEmbedder>(*a, c.embedding_dim);
  else s.embedder = std::make_shared<scripted::HashEmbedder>(c.embedding_dim, c.seed);
  if (auto a = remote("extractor")) s.extractor = std::make_shared<remote::RemoteExtractor>(*a);
  else s.extractor = std::make_shared<scripted::EventExtractor>();
  if (auto a = remote("judge")) s.judge = std::make_shared<remote::RemoteLinkJudge>(*a);
  else s.judge = std::make_shared<scripted::KeywordLinkJudge>();
  if (auto a = remote("pruner")) s.pruner = std::make_shared<remote::RemotePruner>(*a);
  else s.pruner = std::make_shared<scripted::KeywordPruner>();
  if (auto a = remote("answerer")) s.answerer = std::make_shared<remote::RemoteAnswerer>(*a);
  else s.answerer = std::make_shared<scripted::OverlapAnswerer>();
  if (auto a = remote("updater")) s.updater = std::make_shared<remote::RemoteUpdater>(*a);
  else s.updater = std::make_shared<scripted::ConcatUpdater>();
  if (auto a = remote("profiler")) s.profiler = std::make_shared<remote::RemoteProfiler>(*a);
  else s.profiler = std::make_shared<scripted::AppendingProfiler>();
  return s;
}

}  // namespace pyramem
