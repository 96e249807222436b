#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <fstream>
#include <map>
#include <optional>
#include <string>

#include "pyramem/core_types.hpp"
#include "pyramem/error.hpp"
#include "pyramem/identity_bank.hpp"
#include "pyramem/link_builder.hpp"
#include "pyramem/memory_state.hpp"
#include "pyramem/stream.hpp"

namespace pyramem {

enum class AdapterKind { scripted, remote };

// Roles that can be bound independently.
inline const std::vector<std::string>& adapter_roles() {
  static const std::vector<std::string> roles{"embedder", "extractor", "judge", "pruner",
                                              "answerer", "updater",   "profiler"};
  return roles;
}

struct AdapterConfig {
  AdapterKind kind = AdapterKind::scripted;
  std::optional<std::string> endpoint;
  double timeout = 30.0;  // seconds
  int max_retries = 2;
  std::string prompt_template;  // empty: the role's default template
  std::size_t max_in_flight = 4;

  void check(const std::string& role) const {
    if (kind == AdapterKind::remote && (!endpoint || endpoint->empty()))
      throw InvalidArgumentError("adapter '" + role + "': remote requires endpoint");
    if (max_retries < 0) throw InvalidArgumentError("adapter '" + role + "': max_retries must be >= 0");
    if (!(timeout > 0.0)) throw InvalidArgumentError("adapter '" + role + "': timeout must be positive");
    if (max_in_flight == 0) throw InvalidArgumentError("adapter '" + role + "': max_in_flight must be >= 1");
  }
};

struct EngineConfig {
  double clip_len = kDefaultClipLength;
  std::size_t k_seed = 20;
  std::size_t max_turns = 3;
  std::size_t k_link = kDefaultLinkCandidates;
  double theta_local = kDefaultLocalThreshold;
  double theta_global = kDefaultGlobalThreshold;
  bool traverse_undirected = true;
  std::size_t embedding_dim = 256;
  std::uint64_t seed = 0;
  std::map<std::string, AdapterConfig> adapters;

  const AdapterConfig& adapter(const std::string& role) const {
    static const AdapterConfig fallback;
    auto it = adapters.find(role);
    return it == adapters.end() ? fallback : it->second;
  }

  void check() const {
    if (!(clip_len > 0.0)) throw InvalidArgumentError("clip_len must be positive");
    if (k_seed == 0) throw InvalidArgumentError("k_seed must be >= 1");
    if (max_turns == 0) throw InvalidArgumentError("max_turns must be >= 1");
    if (k_link == 0) throw InvalidArgumentError("k_link must be >= 1");
    if (!(theta_local > 0.0 && theta_local < 1.0)) throw InvalidArgumentError("theta_local must be in (0, 1)");
    if (!(theta_global > 0.0 && theta_global < 1.0)) throw InvalidArgumentError("theta_global must be in (0, 1)");
    if (embedding_dim == 0) throw InvalidArgumentError("embedding_dim must be >= 1");
    for (const auto& [role, a] : adapters) {
      if (std::find(adapter_roles().begin(), adapter_roles().end(), role) == adapter_roles().end())
        throw InvalidArgumentError("unknown adapter role '" + role + "'");
      a.check(role);
    }
  }
};

inline void to_json(Json& j, const AdapterConfig& a) {
  j = Json{{"kind", a.kind == AdapterKind::remote ? "remote" : "scripted"},
           {"endpoint", a.endpoint ? Json(*a.endpoint) : Json(nullptr)},
           {"timeout", a.timeout},
           {"max_retries", a.max_retries},
           {"prompt_template", a.prompt_template},
           {"max_in_flight", a.max_in_flight}};
}

inline void to_json(Json& j, const EngineConfig& c) {
  j = Json{{"clip_len", c.clip_len},
           {"k_seed", c.k_seed},
           {"max_turns", c.max_turns},
           {"k_link", c.k_link},
           {"theta_local", c.theta_local},
           {"theta_global", c.theta_global},
           {"traverse_undirected", c.traverse_undirected},
           {"embedding_dim", c.embedding_dim},
           {"seed", c.seed},
           {"adapters", c.adapters}};
}

namespace detail {

template <class T>
void read_if(const Json& j, const char* key, T& out, const std::string& path) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return;
  try {
    out = it->get<T>();
  } catch (const Json::exception&) {
    throw ParseError("invalid field '" + decode::join(path, key) + "'", 0, decode::join(path, key));
  }
}

}  // namespace detail

// Missing keys keep their defaults; present keys must have the right type.
inline AdapterConfig adapter_config_from_json(const Json& j, const std::string& path) {
  if (!j.is_object()) decode::fail(path, "expected object");
  AdapterConfig a;
  std::string kind = "scripted";
  detail::read_if(j, "kind", kind, path);
  if (kind == "remote") a.kind = AdapterKind::remote;
  else if (kind != "scripted") decode::fail(decode::join(path, "kind"), "expected 'scripted' or 'remote'");
  a.endpoint = decode::optional_str(j, "endpoint", path);
  detail::read_if(j, "timeout", a.timeout, path);
  detail::read_if(j, "max_retries", a.max_retries, path);
  detail::read_if(j, "prompt_template", a.prompt_template, path);
  detail::read_if(j, "max_in_flight", a.max_in_flight, path);
  return a;
}

inline EngineConfig engine_config_from_json(const Json& j) {
  if (!j.is_object()) decode::fail("", "expected object");
  EngineConfig c;
  detail::read_if(j, "clip_len", c.clip_len, "");
  detail::read_if(j, "k_seed", c.k_seed, "");
  detail::read_if(j, "max_turns", c.max_turns, "");
  detail::read_if(j, "k_link", c.k_link, "");
  detail::read_if(j, "theta_local", c.theta_local, "");
  detail::read_if(j, "theta_global", c.theta_global, "");
  detail::read_if(j, "traverse_undirected", c.traverse_undirected, "");
  detail::read_if(j, "embedding_dim", c.embedding_dim, "");
  detail::read_if(j, "seed", c.seed, "");
  if (auto it = j.find("adapters"); it != j.end() && !it->is_null()) {
    if (!it->is_object()) decode::fail("adapters", "expected object");
    for (const auto& [role, a] : it->items()) c.adapters[role] = adapter_config_from_json(a, "adapters." + role);
  }
  c.check();
  return c;
}

inline void from_json(const Json& j, EngineConfig& c) { c = engine_config_from_json(j); }

inline EngineConfig load_engine_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return engine_config_from_json(parse_json_text(text));
}

// PYRAMEM_CLIP_LEN, PYRAMEM_K_SEED, PYRAMEM_MAX_TURNS, PYRAMEM_K_LINK,
// PYRAMEM_THETA_LOCAL, PYRAMEM_THETA_GLOBAL, PYRAMEM_SEED; PYRAMEM_ENDPOINT
// binds every role to a remote endpoint, PYRAMEM_<ROLE>_ENDPOINT one role.
using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

inline std::optional<std::string> process_env(const std::string& name) {
  if (const char* v = std::getenv(name.c_str())) return std::string(v);
  return std::nullopt;
}

inline EngineConfig apply_env_overrides(EngineConfig c, const EnvLookup& env = process_env) {
  auto number = [&](const std::string& name, auto& out) {
    auto v = env(name);
    if (!v) return;
    try {
      using T = std::decay_t<decltype(out)>;
      if constexpr (std::is_floating_point_v<T>) out = std::stod(*v);
      else out = static_cast<T>(std::stoull(*v));
    } catch (const std::exception&) {
      throw InvalidArgumentError("environment variable " + name + " is not a number: '" + *v + "'");
    }
  };
  number("PYRAMEM_CLIP_LEN", c.clip_len);
  number("PYRAMEM_K_SEED", c.k_seed);
  number("PYRAMEM_MAX_TURNS", c.max_turns);
  number("PYRAMEM_K_LINK", c.k_link);
  number("PYRAMEM_THETA_LOCAL", c.theta_local);
  number("PYRAMEM_THETA_GLOBAL", c.theta_global);
  number("PYRAMEM_SEED", c.seed);
  const auto shared = env("PYRAMEM_ENDPOINT");
  for (const auto& role : adapter_roles()) {
    std::string upper = role;
    for (auto& ch : upper) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    auto endpoint = env("PYRAMEM_" + upper + "_ENDPOINT");
    if (!endpoint) endpoint = shared;
    if (!endpoint || endpoint->empty()) continue;
    auto& a = c.adapters[role];
    a.kind = AdapterKind::remote;
    a.endpoint = *endpoint;
  }
  c.check();
  return c;
}

}  // namespace pyramem
