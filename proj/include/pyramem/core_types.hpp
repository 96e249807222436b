#pragma once

#include <charconv>
#include <cmath>
#include <compare>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "pyramem/embedding.hpp"
#include "pyramem/error.hpp"

namespace pyramem {

using Json = nlohmann::json;

// Identifier of a memory node. Level is encoded in the prefix ("f-", "c-",
// "g-") followed by a monotone counter, e.g. "f-12".
class NodeId {
 public:
  NodeId() = default;
  explicit NodeId(std::string value) : value_(std::move(value)) {}

  const std::string& str() const noexcept { return value_; }
  bool empty() const noexcept { return value_.empty(); }

  friend auto operator<=>(const NodeId&, const NodeId&) = default;
  friend bool operator==(const NodeId&, const NodeId&) = default;

 private:
  std::string value_;
};

enum class NodeLevel { fact, clip, global, unknown };

inline NodeLevel level_of(const NodeId& id) {
  const auto& s = id.str();
  if (s.size() < 3 || s[1] != '-') return NodeLevel::unknown;
  switch (s[0]) {
    case 'f': return NodeLevel::fact;
    case 'c': return NodeLevel::clip;
    case 'g': return NodeLevel::global;
    default: return NodeLevel::unknown;
  }
}

inline NodeId make_fact_id(std::uint64_t n) { return NodeId("f-" + std::to_string(n)); }
inline NodeId make_clip_id(std::uint64_t n) { return NodeId("c-" + std::to_string(n)); }
inline const NodeId& global_id() {
  static const NodeId id("g-0");
  return id;
}

// Numeric counter of an id ("f-12" -> 12); nullopt if not of that form.
inline std::optional<std::uint64_t> id_counter(const NodeId& id) {
  const auto& s = id.str();
  if (s.size() < 3 || s[1] != '-') return std::nullopt;
  std::uint64_t n = 0;
  auto [ptr, ec] = std::from_chars(s.data() + 2, s.data() + s.size(), n);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return n;
}

using PersonId = std::string;

// Seconds from stream start.
struct TimeSpan {
  double start = 0.0;
  double end = 0.0;

  bool valid() const noexcept { return start >= 0.0 && end >= start && std::isfinite(end); }
  bool contains(double t) const noexcept { return t >= start && t <= end; }
  bool contains(const TimeSpan& other) const noexcept {
    return other.start >= start && other.end <= end;
  }
  double length() const noexcept { return end - start; }

  friend bool operator==(const TimeSpan&, const TimeSpan&) = default;
};

// "SS", "MM:SS", "HH:MM:SS" (fractional seconds allowed) or a plain decimal.
inline double parse_timestamp(std::string_view text) {
  double total = 0.0;
  int parts = 0;
  std::size_t pos = 0;
  while (true) {
    const auto colon = text.find(':', pos);
    const auto piece = text.substr(pos, colon == std::string_view::npos ? text.npos : colon - pos);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(piece.data(), piece.data() + piece.size(), value);
    if (piece.empty() || ec != std::errc{} || ptr != piece.data() + piece.size() || value < 0.0)
      throw InvalidArgumentError("invalid timestamp '" + std::string(text) + "'");
    total = total * 60.0 + value;
    if (++parts > 3) throw InvalidArgumentError("invalid timestamp '" + std::string(text) + "'");
    if (colon == std::string_view::npos) break;
    pos = colon + 1;
  }
  return total;
}

// Seconds -> "MM:SS" (minutes unbounded, e.g. "102:03").
inline std::string format_timestamp(double seconds) {
  const auto whole = static_cast<long long>(std::floor(seconds < 0 ? 0 : seconds));
  const long long minutes = whole / 60;
  const long long secs = whole % 60;
  std::string out = std::to_string(minutes);
  if (out.size() < 2) out.insert(0, 2 - out.size(), '0');
  out += ':';
  if (secs < 10) out += '0';
  out += std::to_string(secs);
  return out;
}

enum class KeyframeEncoding { external_file, inline_base64 };

struct KeyframeRef {
  double timestamp = 0.0;
  std::string uri;
  KeyframeEncoding encoding = KeyframeEncoding::external_file;

  friend bool operator==(const KeyframeRef&, const KeyframeRef&) = default;
};

enum class LinkKind { relational, hier_up, hier_down, cross_clip };

inline constexpr double kDefaultLinkWeight = 0.5;

struct Link {
  NodeId target;
  std::string description;
  double weight = kDefaultLinkWeight;
  LinkKind kind = LinkKind::relational;

  friend bool operator==(const Link&, const Link&) = default;
};

// Bitset over LinkKind for neighbor queries.
class LinkKindSet {
 public:
  constexpr LinkKindSet() = default;
  constexpr LinkKindSet(std::initializer_list<LinkKind> kinds) {
    for (auto k : kinds) bits_ |= bit(k);
  }
  static constexpr LinkKindSet all() {
    return {LinkKind::relational, LinkKind::hier_up, LinkKind::hier_down, LinkKind::cross_clip};
  }
  constexpr bool contains(LinkKind k) const { return (bits_ & bit(k)) != 0; }

 private:
  static constexpr unsigned bit(LinkKind k) { return 1u << static_cast<unsigned>(k); }
  unsigned bits_ = 0;
};

struct FactNode {
  NodeId id;
  NodeId clip_id;
  TimeSpan span;
  std::string text;
  std::string scene;
  std::string asr;
  std::vector<TimeSpan> asr_periods;
  std::vector<std::string> name_mentions;
  std::vector<KeyframeRef> keyframes;
  std::vector<Link> links;
  std::optional<std::string> character_text;

  friend bool operator==(const FactNode&, const FactNode&) = default;
};

struct ClipNode {
  NodeId id;
  TimeSpan span;
  std::string summary;
  std::string scene;
  std::vector<NodeId> fact_ids;
  std::vector<Link> cross_clip_links;
  std::optional<std::string> character_summary;

  friend bool operator==(const ClipNode&, const ClipNode&) = default;
};

struct GlobalNode {
  std::string summary;
  std::uint64_t version = 0;
  std::uint64_t clips_integrated = 0;

  friend bool operator==(const GlobalNode&, const GlobalNode&) = default;
};

struct PersonEntity {
  PersonId person_id;
  Embedding face_centroid;
  std::uint64_t observation_count = 0;
  std::vector<std::string> voice_refs;
  std::string profile;
  std::vector<NodeId> evidence;

  friend bool operator==(const PersonEntity&, const PersonEntity&) = default;
};

// Outcome of a sufficiency assessment.
struct Verdict {
  struct Answer {
    std::string text;
    friend bool operator==(const Answer&, const Answer&) = default;
  };
  struct Expand {
    friend bool operator==(const Expand&, const Expand&) = default;
  };

  std::variant<Answer, Expand> value = Expand{};

  static Verdict answer(std::string text) {
    if (text.empty()) throw InvalidArgumentError("answer text must be non-empty");
    return Verdict{Answer{std::move(text)}};
  }
  static Verdict expand() { return Verdict{Expand{}}; }

  bool is_answer() const noexcept { return std::holds_alternative<Answer>(value); }
  bool is_expand() const noexcept { return std::holds_alternative<Expand>(value); }
  const std::string& answer_text() const { return std::get<Answer>(value).text; }

  friend bool operator==(const Verdict&, const Verdict&) = default;
};

// --------------------------------------------------------------------------
// JSON encoding. Decoding is strict and reports the offending field path.

inline std::string to_string(LinkKind k) {
  switch (k) {
    case LinkKind::relational: return "relational";
    case LinkKind::hier_up: return "hier-up";
    case LinkKind::hier_down: return "hier-down";
    case LinkKind::cross_clip: return "cross-clip";
  }
  return "relational";
}

inline std::optional<LinkKind> link_kind_from_string(std::string_view s) {
  if (s == "relational") return LinkKind::relational;
  if (s == "hier-up") return LinkKind::hier_up;
  if (s == "hier-down") return LinkKind::hier_down;
  if (s == "cross-clip") return LinkKind::cross_clip;
  return std::nullopt;
}

inline std::string to_string(KeyframeEncoding e) {
  return e == KeyframeEncoding::external_file ? "external-file" : "inline-base64";
}

inline void to_json(Json& j, const NodeId& id) { j = id.str(); }
inline void to_json(Json& j, const TimeSpan& s) { j = Json{{"start", s.start}, {"end", s.end}}; }

inline void to_json(Json& j, const KeyframeRef& k) {
  j = Json{{"timestamp", k.timestamp}, {"uri", k.uri}, {"encoding", to_string(k.encoding)}};
}

inline void to_json(Json& j, const Link& l) {
  j = Json{{"target", l.target.str()},
           {"description", l.description},
           {"weight", l.weight},
           {"kind", to_string(l.kind)}};
}

inline void to_json(Json& j, const Embedding& e) {
  j = Json::array();
  for (double v : e.values()) j.push_back(v);
}

inline void to_json(Json& j, const FactNode& f) {
  j = Json{{"id", f.id},
           {"clip_id", f.clip_id},
           {"span", f.span},
           {"text", f.text},
           {"scene", f.scene},
           {"asr", f.asr},
           {"asr_periods", f.asr_periods},
           {"name_mentions", f.name_mentions},
           {"keyframes", f.keyframes},
           {"links", f.links}};
  j["character_text"] = f.character_text ? Json(*f.character_text) : Json(nullptr);
}

inline void to_json(Json& j, const ClipNode& c) {
  j = Json{{"id", c.id},
           {"span", c.span},
           {"summary", c.summary},
           {"scene", c.scene},
           {"fact_ids", c.fact_ids},
           {"cross_clip_links", c.cross_clip_links}};
  j["character_summary"] = c.character_summary ? Json(*c.character_summary) : Json(nullptr);
}

inline void to_json(Json& j, const GlobalNode& g) {
  j = Json{{"summary", g.summary}, {"version", g.version}, {"clips_integrated", g.clips_integrated}};
}

inline void to_json(Json& j, const PersonEntity& p) {
  j = Json{{"person_id", p.person_id},
           {"face_centroid", p.face_centroid},
           {"observation_count", p.observation_count},
           {"voice_refs", p.voice_refs},
           {"profile", p.profile},
           {"evidence", p.evidence}};
}

inline void to_json(Json& j, const Verdict& v) {
  if (v.is_answer())
    j = Json{{"type", "answer"}, {"text", v.answer_text()}};
  else
    j = Json{{"type", "expand"}};
}

namespace decode {

inline std::string join(const std::string& path, std::string_view name) {
  return path.empty() ? std::string(name) : path + "." + std::string(name);
}

inline std::string index(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

[[noreturn]] inline void fail(const std::string& path, const std::string& what) {
  throw ParseError("invalid field '" + path + "': " + what, 0, path);
}

inline const Json& member(const Json& j, std::string_view name, const std::string& path) {
  if (!j.is_object()) fail(path, "expected object");
  auto it = j.find(name);
  if (it == j.end()) fail(join(path, name), "missing");
  return *it;
}

inline std::string string_of(const Json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected string");
  return j.get<std::string>();
}

inline double number_of(const Json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected number");
  return j.get<double>();
}

inline std::uint64_t unsigned_of(const Json& j, const std::string& path) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0))
    fail(path, "expected non-negative integer");
  return j.get<std::uint64_t>();
}

inline const Json& array_of(const Json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected array");
  return j;
}

inline std::string str(const Json& j, std::string_view name, const std::string& path) {
  return string_of(member(j, name, path), join(path, name));
}

inline double num(const Json& j, std::string_view name, const std::string& path) {
  return number_of(member(j, name, path), join(path, name));
}

inline std::uint64_t uint(const Json& j, std::string_view name, const std::string& path) {
  return unsigned_of(member(j, name, path), join(path, name));
}

template <typename F>
auto list(const Json& j, std::string_view name, const std::string& path, F&& item) {
  const auto p = join(path, name);
  const auto& arr = array_of(member(j, name, path), p);
  std::vector<decltype(item(arr.front(), p))> out;
  out.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) out.push_back(item(arr[i], index(p, i)));
  return out;
}

inline std::optional<std::string> optional_str(const Json& j, std::string_view name,
                                               const std::string& path) {
  if (!j.is_object()) fail(path, "expected object");
  auto it = j.find(name);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return string_of(*it, join(path, name));
}

inline NodeId node_id(const Json& j, const std::string& path) {
  auto s = string_of(j, path);
  if (s.empty()) fail(path, "empty node id");
  return NodeId(std::move(s));
}

inline TimeSpan time_span(const Json& j, const std::string& path) {
  return TimeSpan{num(j, "start", path), num(j, "end", path)};
}

inline KeyframeRef keyframe(const Json& j, const std::string& path) {
  KeyframeRef k;
  k.timestamp = num(j, "timestamp", path);
  k.uri = str(j, "uri", path);
  const auto enc = str(j, "encoding", path);
  if (enc == "external-file")
    k.encoding = KeyframeEncoding::external_file;
  else if (enc == "inline-base64")
    k.encoding = KeyframeEncoding::inline_base64;
  else
    fail(join(path, "encoding"), "unknown encoding '" + enc + "'");
  return k;
}

inline Link link(const Json& j, const std::string& path) {
  Link l;
  l.target = node_id(member(j, "target", path), join(path, "target"));
  l.description = str(j, "description", path);
  l.weight = num(j, "weight", path);
  const auto kind = str(j, "kind", path);
  auto parsed = link_kind_from_string(kind);
  if (!parsed) fail(join(path, "kind"), "unknown link kind '" + kind + "'");
  l.kind = *parsed;
  return l;
}

inline Embedding embedding(const Json& j, const std::string& path) {
  const auto& arr = array_of(j, path);
  std::vector<double> values;
  values.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) values.push_back(number_of(arr[i], index(path, i)));
  return Embedding(std::move(values));
}

inline FactNode fact(const Json& j, const std::string& path) {
  FactNode f;
  f.id = node_id(member(j, "id", path), join(path, "id"));
  f.clip_id = node_id(member(j, "clip_id", path), join(path, "clip_id"));
  f.span = time_span(member(j, "span", path), join(path, "span"));
  f.text = str(j, "text", path);
  f.scene = str(j, "scene", path);
  f.asr = str(j, "asr", path);
  f.asr_periods = list(j, "asr_periods", path, time_span);
  f.name_mentions = list(j, "name_mentions", path, string_of);
  f.keyframes = list(j, "keyframes", path, keyframe);
  f.links = list(j, "links", path, link);
  f.character_text = optional_str(j, "character_text", path);
  return f;
}

inline ClipNode clip(const Json& j, const std::string& path) {
  ClipNode c;
  c.id = node_id(member(j, "id", path), join(path, "id"));
  c.span = time_span(member(j, "span", path), join(path, "span"));
  c.summary = str(j, "summary", path);
  c.scene = str(j, "scene", path);
  c.fact_ids = list(j, "fact_ids", path, node_id);
  c.cross_clip_links = list(j, "cross_clip_links", path, link);
  c.character_summary = optional_str(j, "character_summary", path);
  return c;
}

inline GlobalNode global(const Json& j, const std::string& path) {
  return GlobalNode{str(j, "summary", path), uint(j, "version", path),
                    uint(j, "clips_integrated", path)};
}

inline PersonEntity person(const Json& j, const std::string& path) {
  PersonEntity p;
  p.person_id = str(j, "person_id", path);
  p.face_centroid = embedding(member(j, "face_centroid", path), join(path, "face_centroid"));
  p.observation_count = uint(j, "observation_count", path);
  p.voice_refs = list(j, "voice_refs", path, string_of);
  p.profile = str(j, "profile", path);
  p.evidence = list(j, "evidence", path, node_id);
  return p;
}

}  // namespace decode

inline void from_json(const Json& j, TimeSpan& s) { s = decode::time_span(j, ""); }
inline void from_json(const Json& j, Link& l) { l = decode::link(j, ""); }
inline void from_json(const Json& j, FactNode& f) { f = decode::fact(j, ""); }
inline void from_json(const Json& j, ClipNode& c) { c = decode::clip(j, ""); }
inline void from_json(const Json& j, GlobalNode& g) { g = decode::global(j, ""); }
inline void from_json(const Json& j, PersonEntity& p) { p = decode::person(j, ""); }

}  // namespace pyramem

template <>
struct std::hash<pyramem::NodeId> {
  std::size_t operator()(const pyramem::NodeId& id) const noexcept {
    return std::hash<std::string>{}(id.str());
  }
};
