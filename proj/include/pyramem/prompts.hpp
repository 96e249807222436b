#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "pyramem/adapters.hpp"
#include "pyramem/core_types.hpp"
#include "pyramem/error.hpp"
#include "pyramem/prompt_resources.hpp"

namespace pyramem::prompts {

using Slots = std::map<std::string, std::string, std::less<>>;

class MissingSlotError : public InvalidArgumentError {
 public:
  explicit MissingSlotError(std::string slot)
      : InvalidArgumentError("missing prompt slot: " + slot), slot_(std::move(slot)) {}
  const std::string& slot() const noexcept { return slot_; }

 private:
  std::string slot_;
};

namespace detail {

inline bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
inline bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Length of "{name}" starting at pos, or 0 if the brace does not open a slot.
inline std::size_t slot_length(std::string_view text, std::size_t pos) {
  if (pos + 2 >= text.size() || !ident_start(text[pos + 1])) return 0;
  std::size_t i = pos + 1;
  while (i < text.size() && ident_char(text[i])) ++i;
  if (i >= text.size() || text[i] != '}') return 0;
  return i - pos + 1;
}

}  // namespace detail

// Slot names in order of first appearance. "{{" and "}}" are literal braces;
// a brace not enclosing an identifier is literal text.
inline std::vector<std::string> template_slots(std::string_view text) {
  std::vector<std::string> slots;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{') continue;
    if (i + 1 < text.size() && text[i + 1] == '{') {
      ++i;
      continue;
    }
    if (auto len = detail::slot_length(text, i)) {
      std::string name(text.substr(i + 1, len - 2));
      if (std::find(slots.begin(), slots.end(), name) == slots.end()) slots.push_back(name);
      i += len - 1;
    }
  }
  return slots;
}

inline std::string render(std::string_view text, const Slots& slots) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if ((c == '{' || c == '}') && i + 1 < text.size() && text[i + 1] == c) {
      out += c;
      ++i;
      continue;
    }
    if (c == '{') {
      if (auto len = detail::slot_length(text, i)) {
        const auto name = text.substr(i + 1, len - 2);
        auto it = slots.find(name);
        if (it == slots.end()) throw MissingSlotError(std::string(name));
        out += it->second;
        i += len - 1;
        continue;
      }
    }
    out += c;
  }
  return out;
}

inline std::string_view template_text(std::string_view name) {
  for (const auto& [key, text] : resources::all)
    if (key == name) return text;
  throw NotFoundError("unknown prompt template: " + std::string(name));
}

inline std::string render_prompt(std::string_view template_name, const Slots& slots) {
  return render(template_text(template_name), slots);
}

// --------------------------------------------------------------------------
// Output parsing.

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

// The last of "[ANSWER] ..." / "[Expand]" decides. nullopt when neither
// marker is present or the answer payload is empty.
inline std::optional<Verdict> parse_verdict(std::string_view raw) {
  static constexpr std::string_view kAnswer = "[ANSWER]";
  static constexpr std::string_view kExpand = "[Expand]";
  const auto answer_pos = raw.rfind(kAnswer);
  const auto expand_pos = raw.rfind(kExpand);
  const bool has_answer = answer_pos != std::string_view::npos;
  const bool has_expand = expand_pos != std::string_view::npos;
  if (!has_answer && !has_expand) return std::nullopt;
  if (has_expand && (!has_answer || expand_pos > answer_pos)) return Verdict::expand();
  auto payload = trim(raw.substr(answer_pos + kAnswer.size()));
  if (payload.empty()) return std::nullopt;
  return Verdict::answer(std::move(payload));
}

// First well-formed integer list "[a, b, ...]" in the text, filtered to
// [0, n_candidates) and de-duplicated in order of appearance.
inline std::optional<std::vector<std::size_t>> parse_selection(std::string_view raw,
                                                               std::size_t n_candidates) {
  for (std::size_t open = raw.find('['); open != std::string_view::npos;
       open = raw.find('[', open + 1)) {
    std::vector<long long> values;
    std::size_t i = open + 1;
    bool ok = true;
    bool expect_value = true;
    bool closed = false;
    while (i < raw.size()) {
      const char c = raw[i];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
      } else if (c == ']') {
        ok = values.empty() || !expect_value;
        closed = true;
        break;
      } else if (expect_value && (c == '-' || c == '+' || std::isdigit(static_cast<unsigned char>(c)))) {
        long long v = 0;
        const char* begin = raw.data() + i + (c == '+' ? 1 : 0);
        auto [ptr, ec] = std::from_chars(begin, raw.data() + raw.size(), v);
        if (ec != std::errc{}) {
          ok = false;
          break;
        }
        values.push_back(v);
        i = static_cast<std::size_t>(ptr - raw.data());
        expect_value = false;
      } else if (!expect_value && c == ',') {
        expect_value = true;
        ++i;
      } else {
        ok = false;
        break;
      }
    }
    if (!ok || !closed) continue;
    std::vector<std::size_t> out;
    std::set<std::size_t> seen;
    for (long long v : values) {
      if (v < 0 || static_cast<unsigned long long>(v) >= n_candidates) continue;
      const auto idx = static_cast<std::size_t>(v);
      if (seen.insert(idx).second) out.push_back(idx);
    }
    return out;
  }
  return std::nullopt;
}

// First balanced {...} object in free text that parses as JSON.
inline std::optional<Json> extract_json_object(std::string_view raw) {
  for (std::size_t open = raw.find('{'); open != std::string_view::npos;
       open = raw.find('{', open + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = open; i < raw.size(); ++i) {
      const char c = raw[i];
      if (in_string) {
        if (escaped) escaped = false;
        else if (c == '\\') escaped = true;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}' && --depth == 0) {
        auto parsed = Json::parse(raw.substr(open, i - open + 1), nullptr, false);
        if (!parsed.is_discarded()) return parsed;
        break;
      }
    }
  }
  return std::nullopt;
}

// Link-generation output. Weight defaults to 0.5 when absent; entries lacking
// a string target are skipped. nullopt when no {"links": [...]} object exists.
struct ProposedLink {
  std::string target;
  std::string description;
  double weight = kDefaultLinkWeight;
};

inline std::optional<std::vector<ProposedLink>> parse_links(std::string_view raw) {
  auto obj = extract_json_object(raw);
  if (!obj || !obj->contains("links") || !(*obj)["links"].is_array()) return std::nullopt;
  std::vector<ProposedLink> out;
  for (const auto& item : (*obj)["links"]) {
    if (!item.is_object() || !item.contains("target")) continue;
    ProposedLink link;
    const auto& target = item["target"];
    if (target.is_string()) link.target = target.get<std::string>();
    else if (target.is_number_integer()) link.target = std::to_string(target.get<long long>());
    else continue;
    if (auto it = item.find("description"); it != item.end() && it->is_string())
      link.description = it->get<std::string>();
    if (auto it = item.find("weight"); it != item.end() && it->is_number())
      link.weight = it->get<double>();
    out.push_back(std::move(link));
  }
  return out;
}

// --------------------------------------------------------------------------
// Input shaping for the shipped templates.

inline Json link_fact_json(const NodeId& id, std::string_view text, const TimeSpan& span) {
  return Json{{"node_id", id.str()}, {"text", text}, {"timestamp", format_timestamp(span.start)}};
}

// {"0": {...}, "1": {...}} with fact / clip-summary shapes.
inline nlohmann::ordered_json passages_json(const std::vector<Passage>& passages,
                                           bool use_character_text = false) {
  using OJson = nlohmann::ordered_json;
  OJson out = OJson::object();
  for (std::size_t i = 0; i < passages.size(); ++i) {
    const auto& p = passages[i];
    const auto& text = use_character_text && p.character_text ? *p.character_text : p.text;
    if (p.level == NodeLevel::clip) {
      out[std::to_string(i)] = OJson{{"text", text},
                                     {"timestamp_start", format_timestamp(p.span.start)},
                                     {"timestamp_end", format_timestamp(p.span.end)}};
    } else {
      out[std::to_string(i)] = OJson{{"text", text}, {"timestamp", format_timestamp(p.span.start)}};
    }
  }
  return out;
}

inline Json profiles_json(const std::vector<CharacterProfile>& profiles) {
  Json out = Json::object();
  for (const auto& p : profiles) out[p.person_id] = p.profile;
  return out;
}

inline std::string options_text(const std::vector<std::string>& options) {
  std::string out;
  for (std::size_t i = 0; i < options.size(); ++i) {
    if (i) out += '\n';
    out += options[i];
  }
  return out;
}

}  // namespace pyramem::prompts
