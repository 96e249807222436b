#pragma once

// Brute-force reference implementations and random instance generators used
// by the unit tests and the acceptance binary. Nothing here calls into the
// library's ranking or traversal code.

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "pyramem/pyramem.hpp"

namespace oracle {

using pyramem::NodeId;

struct Scored {
  NodeId id;
  double score;
};

inline double raw_cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

// Score everything, fully sort by (score desc, id asc), cut at k.
inline std::vector<Scored> exhaustive_top_k(const std::map<NodeId, std::vector<double>>& entries,
                                            const std::vector<double>& query, std::size_t k) {
  std::vector<Scored> all;
  for (const auto& [id, v] : entries) all.push_back({id, raw_cosine(query, v)});
  std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

struct TraversalRules {
  bool hierarchy = true;
  bool relational = true;
  bool undirected = true;
};

// Adjacency rebuilt straight from node fields: fact -> relational targets and
// parent clip, clip -> every fact naming it as parent and its cross-clip
// targets. Undirected traversal adds the reverse of relational and cross-clip
// edges only.
inline std::map<NodeId, std::set<NodeId>> adjacency(const pyramem::MemoryState& s, const TraversalRules& r) {
  std::map<NodeId, std::set<NodeId>> adj;
  for (const auto& [id, f] : s.facts) {
    adj[id];
    if (r.hierarchy) {
      adj[id].insert(f.clip_id);
      adj[f.clip_id].insert(id);
    }
    if (!r.relational) continue;
    for (const auto& l : f.links) {
      if (l.kind != pyramem::LinkKind::relational) continue;
      adj[id].insert(l.target);
      if (r.undirected) adj[l.target].insert(id);
    }
  }
  for (const auto& [id, c] : s.clips) {
    adj[id];
    if (!(r.hierarchy && r.relational)) continue;
    for (const auto& l : c.cross_clip_links) {
      adj[id].insert(l.target);
      if (r.undirected) adj[l.target].insert(id);
    }
  }
  for (auto& [id, out] : adj) out.erase(id);
  return adj;
}

// Every node within `steps` edges of a seed.
inline std::set<NodeId> bfs_closure(const pyramem::MemoryState& s, const std::vector<NodeId>& seeds,
                                    std::size_t steps, const TraversalRules& rules) {
  const auto adj = adjacency(s, rules);
  std::map<NodeId, std::size_t> dist;
  std::deque<NodeId> queue;
  for (const auto& seed : seeds)
    if (dist.emplace(seed, 0).second) queue.push_back(seed);
  while (!queue.empty()) {
    const auto node = queue.front();
    queue.pop_front();
    const auto d = dist[node];
    if (d == steps) continue;
    auto it = adj.find(node);
    if (it == adj.end()) continue;
    for (const auto& next : it->second)
      if (dist.emplace(next, d + 1).second) queue.push_back(next);
  }
  std::set<NodeId> out;
  for (const auto& [id, d] : dist) out.insert(id);
  return out;
}

inline const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> words{
      "kettle", "window", "garden", "ladder", "parcel", "bottle", "candle", "pillow", "mirror", "basket",
      "carpet", "hammer", "helmet", "jacket", "lantern", "marble", "needle", "pepper", "rocket", "saddle",
      "tablet", "tunnel", "violin", "wallet", "anchor", "bucket", "cactus", "dragon", "falcon", "gravel"};
  return words;
}

inline std::string random_text(std::mt19937_64& rng, std::size_t words) {
  std::uniform_int_distribution<std::size_t> pick(0, vocabulary().size() - 1);
  std::string out;
  for (std::size_t i = 0; i < words; ++i) {
    if (i) out += ' ';
    out += vocabulary()[pick(rng)];
  }
  return out;
}

// A valid memory graph with at most `max_nodes` fact and clip nodes, random
// relational edges (cycles allowed) and random cross-clip edges.
inline pyramem::MemoryState random_graph(std::mt19937_64& rng, std::size_t max_nodes) {
  using namespace pyramem;
  std::uniform_int_distribution<std::size_t> clip_count(1, std::max<std::size_t>(1, max_nodes / 6));
  const std::size_t n_clips = clip_count(rng);
  std::uniform_int_distribution<std::size_t> per_clip(1, 6);
  MemoryState s;
  std::vector<NodeId> facts;
  std::size_t budget = max_nodes;
  for (std::size_t c = 0; c < n_clips && budget >= 2; ++c) {
    ClipNode clip;
    clip.id = make_clip_id(c);
    clip.span = {c * 30.0, c * 30.0 + 30.0};
    clip.summary = random_text(rng, 4);
    --budget;
    const std::size_t n = std::min(per_clip(rng), budget);
    for (std::size_t i = 0; i < n; ++i) {
      FactNode f;
      f.id = make_fact_id(s.counters.next_fact++);
      f.clip_id = clip.id;
      f.span = {clip.span.start + i, clip.span.start + i + 1};
      f.text = random_text(rng, 3);
      f.links.push_back(hier_link(clip.id, LinkKind::hier_up, "part of clip"));
      clip.fact_ids.push_back(f.id);
      facts.push_back(f.id);
      s.facts.emplace(f.id, std::move(f));
      --budget;
    }
    s.clips.emplace(clip.id, std::move(clip));
    s.counters.next_clip = c + 1;
  }

  std::uniform_int_distribution<std::size_t> any_fact(0, facts.size() - 1);
  std::uniform_int_distribution<std::size_t> degree(0, 3);
  for (const auto& id : facts) {
    auto& f = s.facts.at(id);
    std::set<NodeId> targets;
    for (std::size_t d = degree(rng); d > 0; --d) {
      const auto& t = facts[any_fact(rng)];
      if (t != id && targets.insert(t).second) f.links.push_back({t, "related", 0.5, LinkKind::relational});
    }
  }
  std::uniform_int_distribution<std::size_t> any_clip(0, s.clips.size() - 1);
  for (auto& [id, c] : s.clips) {
    std::set<NodeId> targets;
    for (std::size_t d = degree(rng) / 2; d > 0; --d) {
      const auto t = make_clip_id(any_clip(rng));
      if (t != id && targets.insert(t).second) c.cross_clip_links.push_back({t, "related", 0.5, LinkKind::cross_clip});
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Planted identities

struct PlantedFace {
  std::size_t identity;
  pyramem::Embedding face;
};

struct PlantedClips {
  std::size_t identities = 0;
  std::vector<std::vector<PlantedFace>> clips;  // per clip, one face per fact
  double min_within = 1.0;
  double max_across = -1.0;
};

// Identity i sits on basis axis i; faces are small perturbations. Sampling is
// repeated until every same-identity pair clears `within` and every
// cross-identity pair stays under `across`.
inline PlantedClips planted_identities(std::mt19937_64& rng, std::size_t identities, std::size_t clips,
                                       std::size_t dim, double within, double across) {
  std::normal_distribution<double> noise(0.0, 0.08);
  std::uniform_int_distribution<std::size_t> how_many(1, identities);
  std::uniform_int_distribution<std::size_t> faces_each(1, 2);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    PlantedClips out;
    out.identities = identities;
    std::vector<PlantedFace> all;
    for (std::size_t c = 0; c < clips; ++c) {
      std::vector<std::size_t> ids(identities);
      for (std::size_t i = 0; i < identities; ++i) ids[i] = i;
      std::shuffle(ids.begin(), ids.end(), rng);
      ids.resize(how_many(rng));
      std::vector<PlantedFace> clip;
      for (auto id : ids)
        for (std::size_t n = faces_each(rng); n > 0; --n) {
          std::vector<double> v(dim);
          for (auto& x : v) x = noise(rng);
          v[id] += 1.0;
          clip.push_back({id, pyramem::Embedding(std::move(v)).normalized()});
        }
      all.insert(all.end(), clip.begin(), clip.end());
      out.clips.push_back(std::move(clip));
    }
    for (std::size_t a = 0; a < all.size(); ++a)
      for (std::size_t b = a + 1; b < all.size(); ++b) {
        const double c = raw_cosine({all[a].face.values().begin(), all[a].face.values().end()},
                                    {all[b].face.values().begin(), all[b].face.values().end()});
        if (all[a].identity == all[b].identity) out.min_within = std::min(out.min_within, c);
        else out.max_across = std::max(out.max_across, c);
      }
    if (out.min_within >= within && out.max_across <= across) return out;
  }
  throw std::runtime_error("could not certify planted margins");
}

// One event per face; the text names the planted identity so the caller can
// score assignments afterwards.
inline std::vector<pyramem::TimedEvent> planted_stream(const PlantedClips& planted,
                                                       const std::vector<std::size_t>& order, double clip_len) {
  std::vector<pyramem::TimedEvent> events;
  for (std::size_t slot = 0; slot < order.size(); ++slot) {
    const auto& clip = planted.clips[order[slot]];
    for (std::size_t i = 0; i < clip.size(); ++i) {
      pyramem::TimedEvent e;
      e.t = static_cast<double>(slot) * clip_len + static_cast<double>(i);
      e.text = "clip" + std::to_string(order[slot]) + " face" + std::to_string(i) + " identity" +
               std::to_string(clip[i].identity);
      e.faces.push_back(clip[i].face);
      events.push_back(std::move(e));
    }
  }
  return events;
}

inline std::size_t identity_in_text(const std::string& text) {
  const auto pos = text.find("identity");
  return static_cast<std::size_t>(std::stoul(text.substr(pos + 8)));
}

struct IdentityScore {
  std::size_t persons = 0;
  std::size_t faces = 0;
  std::size_t correct = 0;
  bool bijective = false;
};

// Each person takes the identity of the majority of its evidence facts; a face
// is correct when its fact lies in the evidence of that identity's person.
inline IdentityScore score_identities(const pyramem::MemoryState& s, std::size_t identities) {
  IdentityScore out;
  out.persons = s.persons.size();
  std::map<std::size_t, std::set<std::string>> owners;
  std::map<NodeId, std::set<std::string>> fact_persons;
  for (const auto& [pid, p] : s.persons) {
    std::map<std::size_t, std::size_t> votes;
    for (const auto& e : p.evidence) {
      if (const auto* f = s.fact(e)) {
        ++votes[identity_in_text(f->text)];
        fact_persons[e].insert(pid);
      }
    }
    if (votes.empty()) continue;
    auto best = std::max_element(votes.begin(), votes.end(),
                                 [](const auto& a, const auto& b) { return a.second < b.second; });
    owners[best->first].insert(pid);
  }
  out.bijective = owners.size() == identities;
  for (const auto& [id, ps] : owners) out.bijective = out.bijective && ps.size() == 1;
  std::map<std::string, std::size_t> person_identity;
  for (const auto& [id, ps] : owners)
    for (const auto& p : ps) person_identity[p] = id;
  for (const auto& [id, f] : s.facts) {
    ++out.faces;
    const auto want = identity_in_text(f.text);
    const auto& ps = fact_persons[id];
    if (ps.size() == 1 && person_identity.count(*ps.begin()) && person_identity[*ps.begin()] == want)
      ++out.correct;
  }
  return out;
}

}  // namespace oracle
