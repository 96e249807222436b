#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pyramem/adapters.hpp"
#include "pyramem/core_types.hpp"
#include "pyramem/embedding_index.hpp"
#include "pyramem/error.hpp"
#include "pyramem/log.hpp"
#include "pyramem/memory_state.hpp"

namespace pyramem {

// Immutable point-in-time view handed to query sessions. Reverse adjacency is
// precomputed for undirected traversal.
struct StoreSnapshot {
  MemoryState state;
  EmbeddingIndex index;
  std::map<NodeId, std::vector<NodeId>> reverse_relational;
  std::map<NodeId, std::vector<NodeId>> reverse_cross_clip;

  StoreSnapshot(MemoryState s, EmbeddingIndex i) : state(std::move(s)), index(std::move(i)) {
    for (const auto& [id, f] : state.facts)
      for (const auto& l : f.links)
        if (l.kind == LinkKind::relational) reverse_relational[l.target].push_back(id);
    for (const auto& [id, c] : state.clips)
      for (const auto& l : c.cross_clip_links) reverse_cross_clip[l.target].push_back(id);
  }

  static const std::vector<NodeId>& lookup(const std::map<NodeId, std::vector<NodeId>>& m,
                                           const NodeId& id) {
    static const std::vector<NodeId> empty;
    auto it = m.find(id);
    return it == m.end() ? empty : it->second;
  }
};

// Owns the three-level memory graph of one stream. Single writer, many
// readers; readers use snapshot(). Every mutation is mirrored to the optional
// append log as one JSON line.
class PyramidStore {
 public:
  explicit PyramidStore(std::shared_ptr<const Embedder> embedder)
      : embedder_(std::move(embedder)), index_(checked_dim(embedder_)) {}

  PyramidStore(const PyramidStore&) = delete;
  PyramidStore& operator=(const PyramidStore&) = delete;

  const Embedder& embedder() const { return *embedder_; }

  // ---- id allocation (writer side)

  NodeId allocate_fact_id() {
    std::unique_lock lock(mutex_);
    return make_fact_id(state_.counters.next_fact++);
  }

  NodeId allocate_clip_id() {
    std::unique_lock lock(mutex_);
    return make_clip_id(state_.counters.next_clip++);
  }

  // ---- mutations

  // Inserts a clip and its facts, materializing fact->clip hier-up links and
  // indexing fact texts and the clip summary. All-or-nothing.
  void add_clip(ClipNode clip, std::vector<FactNode> facts) {
    if (facts.empty()) throw InvalidArgumentError("clip " + clip.id.str() + " has no facts");
    if (level_of(clip.id) != NodeLevel::clip)
      throw InvalidArgumentError("bad clip id '" + clip.id.str() + "'");
    if (!clip.span.valid()) throw InvalidArgumentError("invalid span for clip " + clip.id.str());

    clip.fact_ids.clear();
    std::set<NodeId> batch;
    for (auto& f : facts) {
      if (level_of(f.id) != NodeLevel::fact)
        throw InvalidArgumentError("bad fact id '" + f.id.str() + "'");
      if (!batch.insert(f.id).second) throw ConflictError("duplicate id " + f.id.str());
      if (f.clip_id != clip.id)
        throw InvalidArgumentError("fact " + f.id.str() + " belongs to " + f.clip_id.str() +
                                   ", not " + clip.id.str());
      if (f.text.empty()) throw InvalidArgumentError("fact " + f.id.str() + " has empty text");
      if (!f.span.valid() || !clip.span.contains(f.span))
        throw InvalidArgumentError("span violation: fact " + f.id.str() + " [" +
                                   Json(f.span.start).dump() + ", " + Json(f.span.end).dump() +
                                   "] not within clip " + clip.id.str());
      for (const auto& p : f.asr_periods)
        if (!f.span.contains(p))
          throw InvalidArgumentError("span violation: asr period outside fact " + f.id.str());
      for (const auto& k : f.keyframes)
        if (!f.span.contains(k.timestamp))
          throw InvalidArgumentError("span violation: keyframe outside fact " + f.id.str());
      for (const auto& l : f.links)
        if (l.kind == LinkKind::hier_up)
          throw InvalidArgumentError("fact " + f.id.str() + " carries a hier-up link already");
      f.links.insert(f.links.begin(), hier_link(clip.id, LinkKind::hier_up, "part of clip"));
      clip.fact_ids.push_back(f.id);
    }

    // Embeddings are computed before anything is committed.
    std::vector<std::pair<NodeId, Embedding>> vectors;
    vectors.reserve(facts.size() + 1);
    for (const auto& f : facts) vectors.emplace_back(f.id, embedder_->embed(f.text));
    vectors.emplace_back(clip.id, embedder_->embed(clip.summary.empty() ? clip.scene : clip.summary));
    for (const auto& [id, v] : vectors)
      if (v.dim() != index_.dim()) throw DimensionMismatchError(index_.dim(), v.dim());

    std::unique_lock lock(mutex_);
    if (state_.contains(clip.id)) throw ConflictError("duplicate id " + clip.id.str());
    for (const auto& f : facts)
      if (state_.contains(f.id)) throw ConflictError("duplicate id " + f.id.str());

    Json event{{"event", "add_clip"}, {"clip", clip}, {"facts", facts}};
    apply_add_clip(state_, std::move(clip), std::move(facts));
    for (const auto& [id, v] : vectors) index_.upsert(id, v);
    commit(event);
  }

  // Folds a finalized clip summary into the global node. On adapter failure the
  // global node is untouched and a retryable AdapterError is raised.
  GlobalNode update_global(std::string_view clip_summary, const GlobalUpdater& updater) {
    std::string previous;
    {
      std::shared_lock lock(mutex_);
      previous = state_.global.summary;
    }
    std::string next;
    try {
      next = updater.update(previous, clip_summary);
    } catch (const std::exception& e) {
      throw AdapterError(std::string("global update failed (global unchanged; retry update_global): ") +
                             e.what(),
                         true);
    }
    std::unique_lock lock(mutex_);
    state_.global.summary = std::move(next);
    ++state_.global.version;
    ++state_.global.clips_integrated;
    commit(Json{{"event", "update_global"}, {"global", state_.global}});
    return state_.global;
  }

  // Appends relational links to a fact, or cross-clip links to a clip.
  void attach_links(const NodeId& node, const std::vector<Link>& links) {
    if (links.empty()) return;
    std::unique_lock lock(mutex_);
    apply_attach(state_, node, links);
    commit(Json{{"event", "attach_links"}, {"node", node}, {"links", links}});
  }

  // Idempotent: returns false if a cross-clip link from -> link.target exists.
  bool add_cross_clip_link(const NodeId& from, Link link) {
    std::unique_lock lock(mutex_);
    auto it = state_.clips.find(from);
    if (it == state_.clips.end()) throw NotFoundError("unknown clip: " + from.str());
    for (const auto& existing : it->second.cross_clip_links)
      if (existing.target == link.target) return false;
    link.kind = LinkKind::cross_clip;
    std::vector<Link> links{std::move(link)};
    apply_attach(state_, from, links);
    commit(Json{{"event", "attach_links"}, {"node", from}, {"links", links}});
    return true;
  }

  void upsert_person(const PersonEntity& person, std::uint64_t next_person_counter) {
    std::unique_lock lock(mutex_);
    apply_upsert_person(state_, person, next_person_counter);
    commit(Json{{"event", "upsert_person"}, {"person", person}, {"next_person", state_.counters.next_person}});
  }

  // Sets the identity-grounded text of a fact (character_text) or clip
  // (character_summary).
  void annotate(const NodeId& node, std::string character_text) {
    std::unique_lock lock(mutex_);
    apply_annotate(state_, node, character_text);
    commit(Json{{"event", "annotate"}, {"node", node}, {"character_text", character_text}});
  }

  void set_next_window(std::uint64_t window) {
    std::unique_lock lock(mutex_);
    state_.counters.next_window = window;
    commit(Json{{"event", "stream_cursor"}, {"next_window", window}});
  }

  // ---- reads

  std::vector<std::pair<NodeId, Link>> neighbors(const NodeId& id,
                                                 LinkKindSet kinds = LinkKindSet::all()) const {
    std::shared_lock lock(mutex_);
    return pyramem::neighbors(state_, id, kinds);
  }

  MemoryState state() const {
    std::shared_lock lock(mutex_);
    return state_;
  }

  StoreCounters counters() const {
    std::shared_lock lock(mutex_);
    return state_.counters;
  }

  std::optional<FactNode> fact(const NodeId& id) const {
    std::shared_lock lock(mutex_);
    if (const auto* f = state_.fact(id)) return *f;
    return std::nullopt;
  }

  std::optional<ClipNode> clip(const NodeId& id) const {
    std::shared_lock lock(mutex_);
    if (const auto* c = state_.clip(id)) return *c;
    return std::nullopt;
  }

  GlobalNode global() const {
    std::shared_lock lock(mutex_);
    return state_.global;
  }

  std::optional<Embedding> embedding_of(const NodeId& id) const { return index_.get(id); }

  std::vector<ScoredHit> search(const Embedding& query, std::size_t k,
                                const HitFilter& filter = {}) const {
    std::shared_lock lock(mutex_);
    return index_.top_k(query, k, filter);
  }

  std::size_t fact_count() const {
    std::shared_lock lock(mutex_);
    return state_.facts.size();
  }

  std::shared_ptr<const StoreSnapshot> snapshot() const {
    {
      std::shared_lock lock(mutex_);
      if (cached_) return cached_;
    }
    std::unique_lock lock(mutex_);
    if (!cached_) cached_ = std::make_shared<const StoreSnapshot>(state_, index_);
    return cached_;
  }

  // ---- persistence

  Json to_json() const {
    std::shared_lock lock(mutex_);
    return snapshot_to_json(state_);
  }

  std::string dump() const { return to_json().dump(2) + "\n"; }

  // Writes to a temporary file, then renames over the target.
  void save(const std::filesystem::path& path) const {
    const auto text = dump();
    auto tmp = path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw IoError("cannot write " + tmp.string());
      out << text;
      if (!out.flush()) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
  }

  // Replaces the store contents with a snapshot file. Fails without touching
  // the store if the file is unreadable, malformed or violates invariants.
  MemoryState load(const std::filesystem::path& path) {
    auto loaded = read_snapshot_file(path);
    replace_state(std::move(loaded));
    return state();
  }

  void replace_state(MemoryState loaded) {
    if (auto violations = validate(loaded); !violations.empty())
      throw InvalidArgumentError("snapshot violates invariants: " + violations.front().str() +
                                 " " + violations.front().detail);
    EmbeddingIndex rebuilt(index_.dim());
    for (const auto& [id, f] : loaded.facts) rebuilt.upsert(id, embedder_->embed(f.text));
    for (const auto& [id, c] : loaded.clips)
      rebuilt.upsert(id, embedder_->embed(c.summary.empty() ? c.scene : c.summary));

    std::unique_lock lock(mutex_);
    state_ = std::move(loaded);
    index_ = std::move(rebuilt);
    cached_.reset();
  }

  static MemoryState read_snapshot_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return snapshot_from_json(parse_json_text(buffer.str()));
  }

  // Mutations from now on are appended to `path`.
  void open_log(const std::filesystem::path& path) {
    std::unique_lock lock(mutex_);
    log_ = std::make_unique<std::ofstream>(path, std::ios::binary | std::ios::app);
    if (!*log_) {
      log_.reset();
      throw IoError("cannot open log " + path.string());
    }
  }

  void close_log() {
    std::unique_lock lock(mutex_);
    if (log_) log_->flush();
    log_.reset();
  }

  // Rebuilds a state by applying every event of an append log to `base`
  // (an empty store by default).
  static MemoryState replay_log(const std::filesystem::path& path, MemoryState base = {}) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    MemoryState s = std::move(base);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto where = "line " + std::to_string(line_no);
      Json e;
      try {
        e = Json::parse(line);
      } catch (const Json::parse_error& err) {
        throw ParseError(where + ": " + err.what(), err.byte, where);
      }
      apply_event(s, e, where);
    }
    return s;
  }

  static void apply_event(MemoryState& s, const Json& e, const std::string& where) {
    using namespace decode;
    const auto kind = str(e, "event", where);
    if (kind == "add_clip") {
      auto clip = decode::clip(member(e, "clip", where), join(where, "clip"));
      auto facts = list(e, "facts", where, decode::fact);
      apply_add_clip(s, std::move(clip), std::move(facts));
    } else if (kind == "update_global") {
      s.global = decode::global(member(e, "global", where), join(where, "global"));
    } else if (kind == "attach_links") {
      apply_attach(s, node_id(member(e, "node", where), join(where, "node")),
                   list(e, "links", where, decode::link));
    } else if (kind == "upsert_person") {
      apply_upsert_person(s, decode::person(member(e, "person", where), join(where, "person")),
                          uint(e, "next_person", where));
    } else if (kind == "annotate") {
      apply_annotate(s, node_id(member(e, "node", where), join(where, "node")),
                     str(e, "character_text", where));
    } else if (kind == "stream_cursor") {
      s.counters.next_window = uint(e, "next_window", where);
    } else {
      fail(join(where, "event"), "unknown event '" + kind + "'");
    }
  }

 private:
  static std::size_t checked_dim(const std::shared_ptr<const Embedder>& e) {
    if (!e) throw InvalidArgumentError("store requires an embedder");
    return e->dim();
  }

  static void apply_add_clip(MemoryState& s, ClipNode clip, std::vector<FactNode> facts) {
    for (auto& f : facts) {
      if (auto n = id_counter(f.id)) s.counters.next_fact = std::max(s.counters.next_fact, *n + 1);
      auto id = f.id;
      s.facts.emplace(std::move(id), std::move(f));
    }
    if (auto n = id_counter(clip.id)) s.counters.next_clip = std::max(s.counters.next_clip, *n + 1);
    auto id = clip.id;
    s.clips.emplace(std::move(id), std::move(clip));
  }

  static void apply_attach(MemoryState& s, const NodeId& node, const std::vector<Link>& links) {
    if (auto it = s.facts.find(node); it != s.facts.end()) {
      for (const auto& l : links) {
        if (l.kind != LinkKind::relational)
          throw InvalidArgumentError("only relational links attach to facts");
        if (!s.facts.count(l.target)) throw NotFoundError("unknown link target: " + l.target.str());
        it->second.links.push_back(l);
      }
      return;
    }
    if (auto it = s.clips.find(node); it != s.clips.end()) {
      for (const auto& l : links) {
        if (l.kind != LinkKind::cross_clip)
          throw InvalidArgumentError("only cross-clip links attach to clips");
        if (!s.clips.count(l.target)) throw NotFoundError("unknown link target: " + l.target.str());
        it->second.cross_clip_links.push_back(l);
      }
      return;
    }
    throw NotFoundError("unknown node: " + node.str());
  }

  static void apply_upsert_person(MemoryState& s, const PersonEntity& p, std::uint64_t next) {
    s.persons.insert_or_assign(p.person_id, p);
    s.counters.next_person = std::max(s.counters.next_person, next);
  }

  static void apply_annotate(MemoryState& s, const NodeId& node, const std::string& text) {
    if (auto it = s.facts.find(node); it != s.facts.end()) {
      it->second.character_text = text;
      return;
    }
    if (auto it = s.clips.find(node); it != s.clips.end()) {
      it->second.character_summary = text;
      return;
    }
    throw NotFoundError("unknown node: " + node.str());
  }

  // Caller holds the unique lock.
  void commit(const Json& event) {
    cached_.reset();
    if (!log_) return;
    *log_ << event.dump() << '\n';
    log_->flush();
    if (!*log_) log::error("append log write failed");
  }

  std::shared_ptr<const Embedder> embedder_;
  MemoryState state_;
  EmbeddingIndex index_;
  mutable std::shared_mutex mutex_;
  mutable std::shared_ptr<const StoreSnapshot> cached_;
  std::unique_ptr<std::ofstream> log_;
};

}  // namespace pyramem
