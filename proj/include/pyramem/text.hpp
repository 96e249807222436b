#pragma once

#include <cctype>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace pyramem::text {

// Lower-cased alphanumeric runs ("Kettle-boils!" -> {"kettle", "boils"}).
inline std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      cur += static_cast<char>(std::tolower(u));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline const std::set<std::string, std::less<>>& stopwords() {
  static const std::set<std::string, std::less<>> words{
      "a",    "an",   "and",  "are",  "as",   "at",   "be",   "by",   "for",  "from",
      "has",  "he",   "her",  "his",  "in",   "is",   "it",   "its",  "of",   "on",
      "or",   "she",  "that", "the",  "their", "them", "then", "they", "this", "to",
      "was",  "were", "what", "when", "where", "which", "who",  "why",  "with", "how",
      "did",  "does", "do",   "there", "into", "after", "before", "while"};
  return words;
}

inline std::set<std::string> content_tokens(std::string_view s, std::size_t min_len = 1) {
  std::set<std::string> out;
  for (auto& t : tokenize(s))
    if (t.size() >= min_len && !stopwords().count(t)) out.insert(std::move(t));
  return out;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace pyramem::text
