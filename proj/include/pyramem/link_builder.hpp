#pragma once

#include <algorithm>
#include <cmath>
#include <future>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pyramem/adapters.hpp"
#include "pyramem/log.hpp"
#include "pyramem/prompts.hpp"
#include "pyramem/pyramid_store.hpp"

namespace pyramem {

inline constexpr std::size_t kDefaultLinkCandidates = 10;

struct LinkProposal {
  NodeId source;
  std::vector<ScoredHit> candidates;
  std::vector<Link> judged;
  std::vector<std::string> warnings;
};

// Top-k most similar facts ingested before `fact` (lower counter). Same-clip
// facts are eligible.
inline std::vector<ScoredHit> propose_candidates(const PyramidStore& store, const FactNode& fact,
                                                 std::size_t k_link = kDefaultLinkCandidates) {
  if (k_link == 0) throw InvalidArgumentError("K_link must be >= 1");
  auto embedding = store.embedding_of(fact.id);
  if (!embedding) throw NotFoundError("fact not embedded: " + fact.id.str());
  const auto source_counter = id_counter(fact.id).value_or(0);
  return store.search(*embedding, k_link, [&](const NodeId& id, NodeLevel level) {
    if (level != NodeLevel::fact || id == fact.id) return false;
    auto c = id_counter(id);
    return c && *c < source_counter;
  });
}

// Runs the judge over the candidates. Never throws for judge misbehaviour:
// failures and unparseable output yield zero links plus a warning; targets
// outside the candidate set are dropped; weights are clamped to [0, 1].
inline LinkProposal judge_links(const PyramidStore& store, const FactNode& fact,
                                const std::vector<ScoredHit>& candidates, const LinkJudge& judge) {
  LinkProposal proposal{fact.id, candidates, {}, {}};
  if (candidates.empty()) return proposal;

  Json candidate_list = Json::array();
  std::set<std::string> allowed;
  for (const auto& hit : candidates) {
    auto c = store.fact(hit.id);
    if (!c) continue;
    candidate_list.push_back(prompts::link_fact_json(c->id, c->text, c->span));
    allowed.insert(hit.id.str());
  }

  std::string raw;
  try {
    raw = judge.judge(prompts::link_fact_json(fact.id, fact.text, fact.span), candidate_list);
  } catch (const std::exception& e) {
    proposal.warnings.push_back("link judge failed for " + fact.id.str() + ": " + e.what());
    return proposal;
  }
  auto parsed = prompts::parse_links(raw);
  if (!parsed) {
    proposal.warnings.push_back("unparseable link judge output for " + fact.id.str());
    return proposal;
  }
  std::set<std::string> taken;
  for (auto& p : *parsed) {
    if (!allowed.count(p.target)) {
      proposal.warnings.push_back("dropped link " + fact.id.str() + " -> " + p.target +
                                  ": not a candidate");
      continue;
    }
    if (!taken.insert(p.target).second) continue;
    const double weight = std::isfinite(p.weight) ? std::clamp(p.weight, 0.0, 1.0) : kDefaultLinkWeight;
    proposal.judged.push_back(Link{NodeId(p.target), std::move(p.description), weight, LinkKind::relational});
  }
  return proposal;
}

inline std::vector<Link> judge_and_attach(PyramidStore& store, const FactNode& fact,
                                          const std::vector<ScoredHit>& candidates,
                                          const LinkJudge& judge,
                                          std::vector<std::string>* warnings = nullptr) {
  auto proposal = judge_links(store, fact, candidates, judge);
  for (const auto& w : proposal.warnings) {
    log::warn(w);
    if (warnings) warnings->push_back(w);
  }
  store.attach_links(fact.id, proposal.judged);
  return proposal.judged;
}

// Lifts a relational fact link to a cross-clip link between the parent clips.
// No-op (nullopt) for same-clip links, non-relational links, or when the clip
// pair is already linked.
inline std::optional<Link> induce_cross_clip_links(PyramidStore& store, const Link& fact_link,
                                                   const FactNode& source_fact) {
  if (fact_link.kind != LinkKind::relational) return std::nullopt;
  auto target = store.fact(fact_link.target);
  if (!target) throw NotFoundError("unknown link target: " + fact_link.target.str());
  if (target->clip_id == source_fact.clip_id) return std::nullopt;
  Link link{target->clip_id,
            "induced by " + source_fact.id.str() + " -> " + target->id.str(),
            fact_link.weight, LinkKind::cross_clip};
  if (!store.add_cross_clip_link(source_fact.clip_id, link)) return std::nullopt;
  return link;
}

struct LinkBuildReport {
  std::size_t relational = 0;
  std::size_t cross_clip = 0;
  std::vector<std::string> warnings;
};

// Links every fact of a freshly added clip. Judge calls may run concurrently;
// attachment and cross-clip induction follow fact order.
inline LinkBuildReport build_clip_links(PyramidStore& store, const std::vector<NodeId>& fact_ids,
                                        const LinkJudge& judge, std::size_t k_link,
                                        bool parallel = true) {
  std::vector<FactNode> facts;
  facts.reserve(fact_ids.size());
  for (const auto& id : fact_ids) {
    auto f = store.fact(id);
    if (!f) throw NotFoundError("unknown fact: " + id.str());
    facts.push_back(std::move(*f));
  }

  std::vector<LinkProposal> proposals(facts.size());
  if (parallel && facts.size() > 1) {
    std::vector<std::future<LinkProposal>> pending;
    pending.reserve(facts.size());
    for (const auto& f : facts)
      pending.push_back(std::async(std::launch::async, [&store, &judge, &f, k_link] {
        return judge_links(store, f, propose_candidates(store, f, k_link), judge);
      }));
    for (std::size_t i = 0; i < pending.size(); ++i) proposals[i] = pending[i].get();
  } else {
    for (std::size_t i = 0; i < facts.size(); ++i)
      proposals[i] = judge_links(store, facts[i], propose_candidates(store, facts[i], k_link), judge);
  }

  LinkBuildReport report;
  for (std::size_t i = 0; i < facts.size(); ++i) {
    auto& p = proposals[i];
    for (auto& w : p.warnings) {
      log::warn(w);
      report.warnings.push_back(std::move(w));
    }
    store.attach_links(facts[i].id, p.judged);
    report.relational += p.judged.size();
    for (const auto& l : p.judged)
      if (induce_cross_clip_links(store, l, facts[i])) ++report.cross_clip;
  }
  return report;
}

}  // namespace pyramem
