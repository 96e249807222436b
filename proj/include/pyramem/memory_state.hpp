#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pyramem/core_types.hpp"
#include "pyramem/error.hpp"

namespace pyramem {

// Monotone id counters and the ingest cursor. Ids are never reused.
struct StoreCounters {
  std::uint64_t next_fact = 1;
  std::uint64_t next_clip = 1;
  std::uint64_t next_person = 1;
  std::uint64_t next_window = 0;

  friend bool operator==(const StoreCounters&, const StoreCounters&) = default;
};

struct MemoryState {
  GlobalNode global;
  std::map<NodeId, ClipNode> clips;
  std::map<NodeId, FactNode> facts;
  std::map<PersonId, PersonEntity> persons;
  StoreCounters counters;

  const FactNode* fact(const NodeId& id) const {
    auto it = facts.find(id);
    return it == facts.end() ? nullptr : &it->second;
  }
  const ClipNode* clip(const NodeId& id) const {
    auto it = clips.find(id);
    return it == clips.end() ? nullptr : &it->second;
  }
  bool contains(const NodeId& id) const {
    return id == global_id() || facts.count(id) != 0 || clips.count(id) != 0;
  }

  friend bool operator==(const MemoryState&, const MemoryState&) = default;
};

inline constexpr double kHierarchicalLinkWeight = 1.0;

inline Link hier_link(const NodeId& target, LinkKind kind, std::string description) {
  return Link{target, std::move(description), kHierarchicalLinkWeight, kind};
}

// Outgoing links of a node in insertion order. Facts store their hier-up and
// relational links; a clip's hier-down links follow fact_ids, then its hier-up
// link to the global node, then stored cross-clip links; the global node links
// down to every clip.
inline std::vector<std::pair<NodeId, Link>> neighbors(const MemoryState& state, const NodeId& id,
                                                      LinkKindSet kinds = LinkKindSet::all()) {
  std::vector<std::pair<NodeId, Link>> out;
  if (const auto* f = state.fact(id)) {
    for (const auto& l : f->links)
      if (kinds.contains(l.kind)) out.emplace_back(l.target, l);
    return out;
  }
  if (const auto* c = state.clip(id)) {
    if (kinds.contains(LinkKind::hier_down))
      for (const auto& fid : c->fact_ids)
        out.emplace_back(fid, hier_link(fid, LinkKind::hier_down, "contains fact"));
    if (kinds.contains(LinkKind::hier_up))
      out.emplace_back(global_id(), hier_link(global_id(), LinkKind::hier_up, "summarized by global memory"));
    if (kinds.contains(LinkKind::cross_clip))
      for (const auto& l : c->cross_clip_links) out.emplace_back(l.target, l);
    return out;
  }
  if (id == global_id()) {
    if (kinds.contains(LinkKind::hier_down))
      for (const auto& [cid, clip] : state.clips)
        out.emplace_back(cid, hier_link(cid, LinkKind::hier_down, "summarizes clip"));
    return out;
  }
  throw NotFoundError("unknown node: " + id.str());
}

// --------------------------------------------------------------------------
// Validation.

enum class ViolationKind {
  dangling_link,
  weight_out_of_range,
  invalid_span,
  span_containment,
  asr_period_outside_span,
  keyframe_outside_span,
  empty_text,
  link_kind_mismatch,
  clip_membership,
  empty_clip,
  bad_id,
  global_count,
  centroid_not_unit,
  observation_count,
};

inline std::string to_string(ViolationKind k) {
  switch (k) {
    case ViolationKind::dangling_link: return "dangling-link";
    case ViolationKind::weight_out_of_range: return "weight-out-of-range";
    case ViolationKind::invalid_span: return "invalid-span";
    case ViolationKind::span_containment: return "span-containment";
    case ViolationKind::asr_period_outside_span: return "asr-period-outside-span";
    case ViolationKind::keyframe_outside_span: return "keyframe-outside-span";
    case ViolationKind::empty_text: return "empty-text";
    case ViolationKind::link_kind_mismatch: return "link-kind-mismatch";
    case ViolationKind::clip_membership: return "clip-membership";
    case ViolationKind::empty_clip: return "empty-clip";
    case ViolationKind::bad_id: return "bad-id";
    case ViolationKind::global_count: return "global-count";
    case ViolationKind::centroid_not_unit: return "centroid-not-unit";
    case ViolationKind::observation_count: return "observation-count";
  }
  return "unknown";
}

struct Violation {
  ViolationKind kind;
  std::string subject;  // the offending (or missing) id
  std::string detail;

  std::string str() const { return to_string(kind) + "(" + subject + ")"; }
  friend bool operator==(const Violation&, const Violation&) = default;
};

inline constexpr double kCentroidNormTolerance = 1e-6;

inline std::vector<Violation> validate(const MemoryState& s) {
  std::vector<Violation> out;
  auto add = [&](ViolationKind k, const std::string& subject, std::string detail) {
    out.push_back({k, subject, std::move(detail)});
  };

  auto check_link = [&](const std::string& source, NodeLevel source_level, const Link& l) {
    if (!(l.weight >= 0.0 && l.weight <= 1.0))
      add(ViolationKind::weight_out_of_range, source, "weight " + Json(l.weight).dump() + " -> " + l.target.str());
    if (!s.contains(l.target)) {
      add(ViolationKind::dangling_link, l.target.str(), "from " + source);
      return;
    }
    const auto target_level = level_of(l.target);
    bool ok = false;
    switch (l.kind) {
      case LinkKind::relational:
        ok = source_level == NodeLevel::fact && target_level == NodeLevel::fact;
        break;
      case LinkKind::cross_clip:
        ok = source_level == NodeLevel::clip && target_level == NodeLevel::clip;
        break;
      case LinkKind::hier_up:
        ok = (source_level == NodeLevel::fact && target_level == NodeLevel::clip) ||
             (source_level == NodeLevel::clip && target_level == NodeLevel::global);
        break;
      case LinkKind::hier_down:
        ok = (source_level == NodeLevel::clip && target_level == NodeLevel::fact) ||
             (source_level == NodeLevel::global && target_level == NodeLevel::clip);
        break;
    }
    if (!ok)
      add(ViolationKind::link_kind_mismatch, source, to_string(l.kind) + " -> " + l.target.str());
  };

  for (const auto& [id, f] : s.facts) {
    const auto& sid = id.str();
    if (id != f.id || level_of(id) != NodeLevel::fact) add(ViolationKind::bad_id, sid, "fact id");
    if (f.text.empty()) add(ViolationKind::empty_text, sid, "fact text is empty");
    if (!f.span.valid()) add(ViolationKind::invalid_span, sid, "fact span");
    const auto* parent = s.clip(f.clip_id);
    if (!parent) {
      add(ViolationKind::dangling_link, f.clip_id.str(), "clip_id of " + sid);
    } else {
      if (!parent->span.contains(f.span))
        add(ViolationKind::span_containment, sid, "outside clip " + f.clip_id.str());
      if (std::find(parent->fact_ids.begin(), parent->fact_ids.end(), id) == parent->fact_ids.end())
        add(ViolationKind::clip_membership, sid, "not listed by " + f.clip_id.str());
    }
    for (const auto& p : f.asr_periods)
      if (!f.span.contains(p)) add(ViolationKind::asr_period_outside_span, sid, "asr period");
    for (const auto& k : f.keyframes)
      if (!f.span.contains(k.timestamp)) add(ViolationKind::keyframe_outside_span, sid, k.uri);
    int up = 0;
    for (const auto& l : f.links) {
      check_link(sid, NodeLevel::fact, l);
      if (l.kind == LinkKind::hier_up) {
        ++up;
        if (l.target != f.clip_id)
          add(ViolationKind::link_kind_mismatch, sid, "hier-up does not target parent clip");
      }
    }
    if (up != 1) add(ViolationKind::clip_membership, sid, "fact needs exactly one hier-up link");
  }

  for (const auto& [id, c] : s.clips) {
    const auto& sid = id.str();
    if (id != c.id || level_of(id) != NodeLevel::clip) add(ViolationKind::bad_id, sid, "clip id");
    if (!c.span.valid()) add(ViolationKind::invalid_span, sid, "clip span");
    if (c.fact_ids.empty()) add(ViolationKind::empty_clip, sid, "no facts");
    std::set<NodeId> seen;
    for (const auto& fid : c.fact_ids) {
      const auto* f = s.fact(fid);
      if (!f) {
        add(ViolationKind::dangling_link, fid.str(), "fact_ids of " + sid);
        continue;
      }
      if (f->clip_id != id || !seen.insert(fid).second)
        add(ViolationKind::clip_membership, fid.str(), "listed by " + sid);
    }
    for (const auto& l : c.cross_clip_links) {
      if (l.kind != LinkKind::cross_clip)
        add(ViolationKind::link_kind_mismatch, sid, "non cross-clip link stored on clip");
      check_link(sid, NodeLevel::clip, l);
    }
  }

  if (s.global.version != s.global.clips_integrated || s.global.clips_integrated > s.clips.size())
    add(ViolationKind::global_count, global_id().str(),
        "version " + std::to_string(s.global.version) + ", clips_integrated " +
            std::to_string(s.global.clips_integrated) + ", clips " + std::to_string(s.clips.size()));

  for (const auto& [pid, p] : s.persons) {
    if (pid != p.person_id) add(ViolationKind::bad_id, pid, "person id");
    if (p.observation_count == 0) add(ViolationKind::observation_count, pid, "zero observations");
    if (p.face_centroid.dim() == 0 || std::abs(p.face_centroid.norm() - 1.0) > kCentroidNormTolerance)
      add(ViolationKind::centroid_not_unit, pid, "centroid norm");
    for (const auto& e : p.evidence)
      if (!s.contains(e)) add(ViolationKind::dangling_link, e.str(), "evidence of " + pid);
  }
  return out;
}

// --------------------------------------------------------------------------
// Snapshot codec. Sections: meta, global, clips[], facts[], persons[].

inline constexpr std::string_view kSnapshotFormat = "pyramem-snapshot";
inline constexpr int kSnapshotVersion = 1;

namespace detail {

// Numeric-counter order for readable snapshots ("f-2" before "f-10").
inline bool counter_less(const std::string& a, const std::string& b) {
  auto ca = id_counter(NodeId(a));
  auto cb = id_counter(NodeId(b));
  if (ca && cb && a.substr(0, 2) == b.substr(0, 2) && *ca != *cb) return *ca < *cb;
  return a < b;
}

template <typename Map, typename Key>
std::vector<const typename Map::mapped_type*> ordered(const Map& m, Key key) {
  std::vector<const typename Map::mapped_type*> out;
  for (const auto& [k, v] : m) out.push_back(&v);
  std::sort(out.begin(), out.end(),
            [&](const auto* a, const auto* b) { return counter_less(key(*a), key(*b)); });
  return out;
}

}  // namespace detail

inline Json counters_to_json(const StoreCounters& c) {
  return Json{{"next_fact", c.next_fact},
              {"next_clip", c.next_clip},
              {"next_person", c.next_person},
              {"next_window", c.next_window}};
}

inline Json snapshot_to_json(const MemoryState& s) {
  Json j;
  j["format"] = kSnapshotFormat;
  j["format_version"] = kSnapshotVersion;
  j["meta"] = counters_to_json(s.counters);
  j["global"] = s.global;
  j["clips"] = Json::array();
  for (const auto* c : detail::ordered(s.clips, [](const ClipNode& c) { return c.id.str(); }))
    j["clips"].push_back(*c);
  j["facts"] = Json::array();
  for (const auto* f : detail::ordered(s.facts, [](const FactNode& f) { return f.id.str(); }))
    j["facts"].push_back(*f);
  j["persons"] = Json::array();
  for (const auto* p :
       detail::ordered(s.persons, [](const PersonEntity& p) { return p.person_id; }))
    j["persons"].push_back(*p);
  return j;
}

inline StoreCounters decode_counters(const Json& j, const std::string& path) {
  return StoreCounters{decode::uint(j, "next_fact", path), decode::uint(j, "next_clip", path),
                       decode::uint(j, "next_person", path), decode::uint(j, "next_window", path)};
}

// Strict structural decode; semantic invariants are left to validate().
inline MemoryState snapshot_from_json(const Json& j) {
  using namespace decode;
  if (!j.is_object()) fail("", "snapshot must be a JSON object");
  MemoryState s;
  s.global = decode::global(member(j, "global", ""), "global");
  for (auto& c : list(j, "clips", "", decode::clip)) {
    auto id = c.id;
    if (!s.clips.emplace(id, std::move(c)).second) fail("clips", "duplicate id " + id.str());
  }
  for (auto& f : list(j, "facts", "", decode::fact)) {
    auto id = f.id;
    if (!s.facts.emplace(id, std::move(f)).second) fail("facts", "duplicate id " + id.str());
  }
  for (auto& p : list(j, "persons", "", decode::person)) {
    auto id = p.person_id;
    if (!s.persons.emplace(id, std::move(p)).second) fail("persons", "duplicate id " + id);
  }
  if (j.contains("meta")) {
    s.counters = decode_counters(j["meta"], "meta");
  } else {
    for (const auto& [id, f] : s.facts)
      s.counters.next_fact = std::max(s.counters.next_fact, id_counter(id).value_or(0) + 1);
    for (const auto& [id, c] : s.clips)
      s.counters.next_clip = std::max(s.counters.next_clip, id_counter(id).value_or(0) + 1);
  }
  return s;
}

inline Json parse_json_text(std::string_view text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError(std::string("malformed JSON at byte ") + std::to_string(e.byte) + ": " + e.what(),
                     e.byte, "");
  }
}

// Parses a snapshot document and returns every invariant violation.
inline std::vector<Violation> validate_graph(std::string_view snapshot_text) {
  return validate(snapshot_from_json(parse_json_text(snapshot_text)));
}

// Counts per level and link kind plus a 10-bin histogram of stored
// relational / cross-clip link weights.
inline Json graph_stats(const MemoryState& s) {
  std::uint64_t relational = 0;
  std::uint64_t cross = 0;
  std::array<std::uint64_t, 10> histogram{};
  auto bin = [&](double w) {
    auto b = static_cast<std::size_t>(std::clamp(w, 0.0, 1.0) * 10.0);
    ++histogram[std::min<std::size_t>(b, 9)];
  };
  for (const auto& [id, f] : s.facts)
    for (const auto& l : f.links)
      if (l.kind == LinkKind::relational) {
        ++relational;
        bin(l.weight);
      }
  for (const auto& [id, c] : s.clips)
    for (const auto& l : c.cross_clip_links) {
      ++cross;
      bin(l.weight);
    }
  const std::uint64_t hier = s.facts.size() + s.clips.size();
  Json j;
  j["facts"] = s.facts.size();
  j["clips"] = s.clips.size();
  j["persons"] = s.persons.size();
  j["global_version"] = s.global.version;
  j["clips_integrated"] = s.global.clips_integrated;
  j["links"] = Json{{"relational", relational},
                    {"cross_clip", cross},
                    {"hier_up", hier},
                    {"hier_down", hier}};
  j["weight_histogram"] = histogram;
  return j;
}

}  // namespace pyramem
