#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <numbers>
#include <set>
#include <shared_mutex>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pyramem/adapters.hpp"
#include "pyramem/prompts.hpp"
#include "pyramem/text.hpp"

// Deterministic adapters: pure functions of their inputs and seed, so the whole
// engine runs and is testable without any model.

namespace pyramem::scripted {

inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Bag-of-tokens embedding: each token maps to a seeded Gaussian direction
// (splitmix64 + Box-Muller, so results do not depend on the standard library);
// a text is the normalized sum of its token directions.
class HashEmbedder final : public Embedder {
 public:
  explicit HashEmbedder(std::size_t dim = 256, std::uint64_t seed = 0) : dim_(dim), seed_(seed) {
    if (dim == 0) throw InvalidArgumentError("embedder dimension must be positive");
  }

  std::size_t dim() const override { return dim_; }

  Embedding embed(std::string_view input) const override {
    auto tokens = text::tokenize(input);
    if (tokens.empty()) tokens.emplace_back();
    std::vector<double> sum(dim_, 0.0);
    for (const auto& t : tokens) {
      const auto v = token_vector(t);
      for (std::size_t i = 0; i < dim_; ++i) sum[i] += v[i];
    }
    return Embedding(std::move(sum)).normalized();
  }

 private:
  static constexpr std::size_t kCacheLimit = 1 << 14;

  std::vector<double> token_vector(const std::string& token) const {
    {
      std::shared_lock lock(mutex_);
      if (auto it = cache_.find(token); it != cache_.end()) return it->second;
    }
    std::uint64_t state = fnv1a(token) ^ (seed_ * 0x9e3779b97f4a7c15ULL);
    std::vector<double> v(dim_);
    for (std::size_t i = 0; i < dim_; i += 2) {
      const double u1 = (static_cast<double>(splitmix64(state) >> 11) + 1.0) * 0x1.0p-53;
      const double u2 = static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53;
      const double r = std::sqrt(-2.0 * std::log(u1));
      v[i] = r * std::cos(2.0 * std::numbers::pi * u2);
      if (i + 1 < dim_) v[i + 1] = r * std::sin(2.0 * std::numbers::pi * u2);
    }
    std::unique_lock lock(mutex_);
    if (cache_.size() < kCacheLimit) cache_.try_emplace(token, v);
    return v;
  }

  std::size_t dim_;
  std::uint64_t seed_;
  mutable std::shared_mutex mutex_;
  mutable std::unordered_map<std::string, std::vector<double>> cache_;
};

// One fact per event. Event hints (scene, asr, names, media, faces, voice)
// become the matching fact fields; the clip summary joins the fact texts.
class EventExtractor final : public Extractor {
 public:
  ExtractionResult extract(const ClipObservation& clip) const override {
    ExtractionResult out;
    std::vector<std::string> texts;
    for (const auto& e : clip.events) {
      FactNode f;
      const double start = std::clamp(e.t, clip.span.start, clip.span.end);
      f.span = TimeSpan{start, std::clamp(e.t + std::max(0.0, e.duration), start, clip.span.end)};
      f.text = e.text.empty() ? "(no description)" : e.text;
      f.scene = e.scene;
      f.asr = e.asr;
      if (!e.asr.empty()) f.asr_periods.push_back(f.span);
      f.name_mentions = e.names;
      if (e.media) f.keyframes.push_back({start, *e.media, KeyframeEncoding::external_file});
      const auto index = out.facts.size();
      for (const auto& face : e.faces) out.faces.push_back({face, index});
      if (e.voice) out.voices.push_back({*e.voice, index});
      texts.push_back(f.text);
      if (out.clip_scene.empty()) out.clip_scene = e.scene;
      out.facts.push_back(std::move(f));
    }
    out.clip_summary = text::join(texts, " ");
    return out;
  }
};

// Links a query fact to every candidate sharing a keyword. With an explicit
// keyword set only those tokens count; otherwise any content token of at least
// `min_len` characters does. Output uses the link-generation JSON schema.
class KeywordLinkJudge final : public LinkJudge {
 public:
  explicit KeywordLinkJudge(std::set<std::string> keywords = {}, std::size_t min_len = 4)
      : keywords_(std::move(keywords)), min_len_(min_len) {}

  std::set<std::string> keys(std::string_view s) const {
    auto tokens = text::content_tokens(s, min_len_);
    if (keywords_.empty()) return tokens;
    std::set<std::string> out;
    for (auto& t : tokens)
      if (keywords_.count(t)) out.insert(t);
    return out;
  }

  std::string judge(const Json& query_fact, const Json& candidates) const override {
    const auto mine = keys(query_fact.value("text", ""));
    Json links = Json::array();
    for (const auto& c : candidates) {
      const auto theirs = keys(c.value("text", ""));
      std::vector<std::string> shared;
      for (const auto& t : mine)
        if (theirs.count(t)) shared.push_back(t);
      if (shared.empty()) continue;
      const double weight =
          static_cast<double>(shared.size()) / static_cast<double>(std::max(mine.size(), theirs.size()));
      links.push_back(Json{{"target", c.value("node_id", "")},
                           {"description", "shares " + text::join(shared, ", ")},
                           {"weight", weight}});
    }
    return Json{{"links", links}}.dump();
  }

 private:
  std::set<std::string> keywords_;
  std::size_t min_len_;
};

class NullLinkJudge final : public LinkJudge {
 public:
  std::string judge(const Json&, const Json&) const override { return R"({"links": []})"; }
};

// Keeps every passage.
class IdentityPruner final : public Pruner {
 public:
  std::string select(const SelectionRequest& r) const override {
    Json list = Json::array();
    for (std::size_t i = 0; i < r.passages.size(); ++i) list.push_back(i);
    return list.dump();
  }
};

// Keeps passages containing at least one keyword token. An empty keyword set
// means the content tokens of the question.
class KeywordPruner final : public Pruner {
 public:
  explicit KeywordPruner(std::set<std::string> keywords = {}) : keywords_(std::move(keywords)) {}

  std::string select(const SelectionRequest& r) const override {
    const auto keys = keywords_.empty() ? text::content_tokens(r.question, 3) : keywords_;
    Json list = Json::array();
    for (std::size_t i = 0; i < r.passages.size(); ++i) {
      for (const auto& t : text::tokenize(r.passages[i].text)) {
        if (keys.count(t)) {
          list.push_back(i);
          break;
        }
      }
    }
    return list.dump();
  }

 private:
  std::set<std::string> keywords_;
};

// Answers `gold` exactly when one of the evidence ids is among the passages;
// otherwise asks to expand. Optional delay per passage emulates the cost of
// long contexts.
class OracleAnswerer final : public Answerer {
 public:
  OracleAnswerer(std::set<NodeId> evidence, std::string gold,
                 std::chrono::microseconds delay_per_passage = std::chrono::microseconds{0})
      : evidence_(std::move(evidence)), gold_(std::move(gold)), delay_(delay_per_passage) {}

  std::string assess(const AssessRequest& r) const override {
    if (delay_.count() > 0)
      std::this_thread::sleep_for(delay_ * static_cast<long long>(r.passages.size()));
    for (const auto& p : r.passages)
      if (evidence_.count(p.id)) return "The decisive observation is present. [ANSWER] " + gold_;
    return "The evidence is incomplete.\n\n[Expand]";
  }

 private:
  std::set<NodeId> evidence_;
  std::string gold_;
  std::chrono::microseconds delay_;
};

// Answers with the passage covering the most question tokens once coverage
// reaches `min_coverage`; otherwise expands.
class OverlapAnswerer final : public Answerer {
 public:
  explicit OverlapAnswerer(double min_coverage = 0.5) : min_coverage_(min_coverage) {}

  std::string assess(const AssessRequest& r) const override {
    const auto wanted = text::content_tokens(r.question, 3);
    if (wanted.empty()) return "[Expand]";
    double best = 0.0;
    const Passage* best_passage = nullptr;
    for (const auto& p : r.passages) {
      const auto have = text::content_tokens(p.text, 3);
      std::size_t hit = 0;
      for (const auto& w : wanted) hit += have.count(w);
      const double coverage = static_cast<double>(hit) / static_cast<double>(wanted.size());
      if (coverage > best) {
        best = coverage;
        best_passage = &p;
      }
    }
    if (!best_passage || best < min_coverage_) return "[Expand]";
    return "Best matching passage " + best_passage->id.str() + ". [ANSWER] " + best_passage->text;
  }

 private:
  double min_coverage_;
};

// "a" then "a | b" then "a | b | c".
class ConcatUpdater final : public GlobalUpdater {
 public:
  explicit ConcatUpdater(std::string separator = " | ") : separator_(std::move(separator)) {}
  std::string update(std::string_view previous, std::string_view clip_summary) const override {
    if (previous.empty()) return std::string(clip_summary);
    return std::string(previous) + separator_ + std::string(clip_summary);
  }

 private:
  std::string separator_;
};

// Appends new facts, one per line.
class AppendingProfiler final : public Profiler {
 public:
  std::string update(const PersonId&, std::string_view old_profile,
                     std::span<const std::string> facts) const override {
    std::string out(old_profile);
    for (const auto& f : facts) {
      if (!out.empty()) out += '\n';
      out += f;
    }
    return out;
  }
};

// --------------------------------------------------------------------------
// Function-backed adapters for tests and fault injection.

class FunctionJudge final : public LinkJudge {
 public:
  using Fn = std::function<std::string(const Json&, const Json&)>;
  explicit FunctionJudge(Fn fn) : fn_(std::move(fn)) {}
  std::string judge(const Json& q, const Json& c) const override { return fn_(q, c); }

 private:
  Fn fn_;
};

class FunctionPruner final : public Pruner {
 public:
  using Fn = std::function<std::string(const SelectionRequest&)>;
  explicit FunctionPruner(Fn fn) : fn_(std::move(fn)) {}
  std::string select(const SelectionRequest& r) const override { return fn_(r); }

 private:
  Fn fn_;
};

class FunctionAnswerer final : public Answerer {
 public:
  using Fn = std::function<std::string(const AssessRequest&)>;
  explicit FunctionAnswerer(Fn fn) : fn_(std::move(fn)) {}
  std::string assess(const AssessRequest& r) const override { return fn_(r); }

 private:
  Fn fn_;
};

class FunctionUpdater final : public GlobalUpdater {
 public:
  using Fn = std::function<std::string(std::string_view, std::string_view)>;
  explicit FunctionUpdater(Fn fn) : fn_(std::move(fn)) {}
  std::string update(std::string_view p, std::string_view c) const override { return fn_(p, c); }

 private:
  Fn fn_;
};

class FunctionProfiler final : public Profiler {
 public:
  using Fn = std::function<std::string(const PersonId&, std::string_view, std::span<const std::string>)>;
  explicit FunctionProfiler(Fn fn) : fn_(std::move(fn)) {}
  std::string update(const PersonId& id, std::string_view old_profile,
                     std::span<const std::string> facts) const override {
    return fn_(id, old_profile, facts);
  }

 private:
  Fn fn_;
};

class FunctionExtractor final : public Extractor {
 public:
  using Fn = std::function<ExtractionResult(const ClipObservation&)>;
  explicit FunctionExtractor(Fn fn) : fn_(std::move(fn)) {}
  ExtractionResult extract(const ClipObservation& c) const override { return fn_(c); }

 private:
  Fn fn_;
};

// Embeds through a fixed table (exact vectors for oracle tests); unknown texts
// fall back to a hash embedder of the same dimension.
class TableEmbedder final : public Embedder {
 public:
  explicit TableEmbedder(std::size_t dim) : fallback_(dim) {}
  void set(std::string text, Embedding e) {
    std::unique_lock lock(mutex_);
    table_.insert_or_assign(std::move(text), std::move(e));
  }
  std::size_t dim() const override { return fallback_.dim(); }
  Embedding embed(std::string_view t) const override {
    {
      std::shared_lock lock(mutex_);
      if (auto it = table_.find(std::string(t)); it != table_.end()) return it->second;
    }
    return fallback_.embed(t);
  }

 private:
  HashEmbedder fallback_;
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, Embedding> table_;
};

}  // namespace pyramem::scripted
