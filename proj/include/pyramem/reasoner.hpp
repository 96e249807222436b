#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pyramem/adapters.hpp"
#include "pyramem/log.hpp"
#include "pyramem/prompts.hpp"
#include "pyramem/pyramid_store.hpp"

namespace pyramem {

struct ReasonerConfig {
  std::size_t k_seed = 20;
  std::size_t max_turns = 3;  // R: assess calls and expansion rounds
  NodeLevel seed_level = NodeLevel::fact;
  bool use_relational = true;
  bool use_hierarchy = true;
  bool traverse_undirected = true;
  bool include_global = true;
  bool prune = true;
};

// Saturation (nothing new reachable) reports max_turns; AnswerResult::saturated
// tells the two apart.
enum class Termination { sufficient, max_turns, adapter_error };

inline std::string to_string(Termination t) {
  switch (t) {
    case Termination::sufficient: return "sufficient";
    case Termination::max_turns: return "max_turns";
    case Termination::adapter_error: return "adapter_error";
  }
  return "unknown";
}

struct TurnRecord {
  std::size_t turn = 0;
  std::vector<NodeId> expanded;   // candidates offered to the pruner
  std::vector<NodeId> pruned_in;  // candidates kept
  std::size_t context_size = 0;   // after the union
  std::optional<Verdict> verdict;
  std::string raw_verdict;
  double elapsed_ms = 0.0;
  std::vector<std::string> warnings;
};

struct AnswerResult {
  std::optional<std::string> answer;
  Termination terminated_by = Termination::max_turns;
  std::size_t turns_used = 0;  // assess calls made
  bool saturated = false;
  std::vector<NodeId> context;
  std::vector<TurnRecord> trace;
  std::vector<std::string> warnings;
  std::optional<std::string> error;
  double elapsed_ms = 0.0;
};

inline Json verdict_json(const std::optional<Verdict>& v) {
  if (!v) return nullptr;
  return Json(*v);
}

inline Json to_json(const TurnRecord& t, bool include_timings) {
  Json j{{"turn", t.turn},
         {"expanded", t.expanded},
         {"pruned_in", t.pruned_in},
         {"context_size", t.context_size},
         {"verdict", verdict_json(t.verdict)},
         {"raw_verdict", t.raw_verdict},
         {"warnings", t.warnings}};
  if (include_timings) j["elapsed_ms"] = t.elapsed_ms;
  return j;
}

// Timings are opt-in so that repeated runs serialize identically.
inline Json to_json(const AnswerResult& r, bool include_timings = false) {
  Json trace = Json::array();
  for (const auto& t : r.trace) trace.push_back(to_json(t, include_timings));
  Json j{{"answer", r.answer ? Json(*r.answer) : Json(nullptr)},
         {"terminated_by", to_string(r.terminated_by)},
         {"turns_used", r.turns_used},
         {"saturated", r.saturated},
         {"context_final", r.context},
         {"trace", std::move(trace)},
         {"warnings", r.warnings},
         {"error", r.error ? Json(*r.error) : Json(nullptr)}};
  if (include_timings) j["elapsed_ms"] = r.elapsed_ms;
  return j;
}

struct Query {
  std::string question;
  std::vector<std::string> options;
  std::optional<std::size_t> k_seed;
  std::optional<std::size_t> max_turns;
};

// Insertion-ordered node set. Only grows.
class EvidenceContext {
 public:
  bool contains(const NodeId& id) const { return members_.count(id) > 0; }
  std::size_t size() const noexcept { return order_.size(); }
  bool empty() const noexcept { return order_.empty(); }
  const std::vector<NodeId>& nodes() const noexcept { return order_; }

  // Returns the ids that were not present before.
  std::vector<NodeId> unite(const std::vector<NodeId>& ids) {
    std::vector<NodeId> added;
    for (const auto& id : ids)
      if (members_.insert(id).second) {
        order_.push_back(id);
        added.push_back(id);
      }
    return added;
  }

 private:
  std::set<NodeId> members_;
  std::vector<NodeId> order_;
};

// Seed, prune, assess, expand, prune, union; repeated until the answerer is
// satisfied, nothing new is reachable, or the assess budget is spent.
class Reasoner {
 public:
  Reasoner(std::shared_ptr<const StoreSnapshot> snapshot, std::shared_ptr<const Embedder> embedder,
           std::shared_ptr<const Pruner> pruner, std::shared_ptr<const Answerer> answerer,
           ReasonerConfig config = {})
      : snapshot_(std::move(snapshot)),
        embedder_(std::move(embedder)),
        pruner_(std::move(pruner)),
        answerer_(std::move(answerer)),
        config_(config) {
    if (!snapshot_ || !embedder_ || !answerer_) throw InvalidArgumentError("reasoner needs snapshot, embedder and answerer");
    if (config_.prune && !pruner_) throw InvalidArgumentError("pruning enabled without a pruner");
    if (config_.max_turns == 0) throw InvalidArgumentError("max_turns must be >= 1");
    if (config_.k_seed == 0) throw InvalidArgumentError("k must be >= 1");
  }

  const ReasonerConfig& config() const noexcept { return config_; }
  const StoreSnapshot& snapshot() const noexcept { return *snapshot_; }

  std::vector<NodeId> seed_retrieve(std::string_view question, std::size_t k) const {
    if (k == 0) throw InvalidArgumentError("k must be >= 1");
    const auto query = embedder_->embed(question);
    std::vector<NodeId> out;
    for (const auto& hit : snapshot_->index.top_k(query, k, level_filter(config_.seed_level)))
      out.push_back(hit.id);
    return out;
  }

  // One step outward from `frontier`, skipping anything already in context.
  std::vector<NodeId> expand(const EvidenceContext& context, const std::vector<NodeId>& frontier) const {
    const auto& s = snapshot_->state;
    std::vector<NodeId> out;
    std::set<NodeId> seen;
    auto offer = [&](const NodeId& id) {
      if (!context.contains(id) && seen.insert(id).second) out.push_back(id);
    };
    for (const auto& node : frontier) {
      if (const auto* f = s.fact(node)) {
        if (config_.use_relational) {
          for (const auto& l : f->links)
            if (l.kind == LinkKind::relational) offer(l.target);
          if (config_.traverse_undirected)
            for (const auto& src : StoreSnapshot::lookup(snapshot_->reverse_relational, node)) offer(src);
        }
        if (config_.use_hierarchy) offer(f->clip_id);
      } else if (const auto* c = s.clip(node)) {
        if (config_.use_hierarchy) {
          for (const auto& child : c->fact_ids) offer(child);
          if (config_.use_relational) {
            for (const auto& l : c->cross_clip_links) offer(l.target);
            if (config_.traverse_undirected)
              for (const auto& src : StoreSnapshot::lookup(snapshot_->reverse_cross_clip, node)) offer(src);
          }
        }
      }
    }
    return out;
  }

  std::vector<Passage> passages(const std::vector<NodeId>& ids) const {
    const auto& s = snapshot_->state;
    std::vector<Passage> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
      Passage p;
      p.id = id;
      if (const auto* f = s.fact(id)) {
        p.level = NodeLevel::fact;
        p.text = f->text;
        p.span = f->span;
        p.character_text = f->character_text;
        p.keyframes = f->keyframes;
      } else if (const auto* c = s.clip(id)) {
        p.level = NodeLevel::clip;
        p.text = c->summary.empty() ? c->scene : c->summary;
        p.span = c->span;
        p.character_text = c->character_summary;
      } else {
        continue;
      }
      out.push_back(std::move(p));
    }
    return out;
  }

  std::vector<CharacterProfile> profiles_for(const EvidenceContext& context) const {
    const auto& s = snapshot_->state;
    std::set<NodeId> facts;
    for (const auto& id : context.nodes()) {
      if (s.fact(id)) facts.insert(id);
      else if (const auto* c = s.clip(id)) facts.insert(c->fact_ids.begin(), c->fact_ids.end());
    }
    std::vector<CharacterProfile> out;
    for (const auto& [pid, person] : s.persons)
      for (const auto& e : person.evidence)
        if (facts.count(e)) {
          out.push_back({pid, person.profile});
          break;
        }
    return out;
  }

  // Keeps the selected candidates in candidate order. Pruner failures keep
  // everything and leave a warning in `warnings`.
  std::vector<NodeId> prune(const Query& q, const std::vector<NodeId>& candidates,
                            std::vector<std::string>& warnings) const {
    if (!config_.prune || candidates.empty()) return candidates;
    SelectionRequest request{q.question, q.options, context_summary(), passages(candidates), {}};
    std::string raw;
    try {
      raw = pruner_->select(request);
    } catch (const std::exception& e) {
      warnings.push_back(std::string("pruner failed, keeping all candidates: ") + e.what());
      return candidates;
    }
    auto selection = prompts::parse_selection(raw, candidates.size());
    if (!selection) {
      warnings.push_back("unparseable selection, keeping all candidates");
      return candidates;
    }
    std::set<std::size_t> keep(selection->begin(), selection->end());
    std::vector<NodeId> out;
    for (auto i : keep) out.push_back(candidates[i]);
    return out;
  }

  AnswerResult answer(const Query& q) const {
    using clock = std::chrono::steady_clock;
    const auto started = clock::now();
    const auto max_turns = q.max_turns.value_or(config_.max_turns);
    const auto k = q.k_seed.value_or(config_.k_seed);
    if (max_turns == 0) throw InvalidArgumentError("max_turns must be >= 1");

    AnswerResult result;
    EvidenceContext context;
    auto finish = [&](Termination t) {
      result.terminated_by = t;
      result.context = context.nodes();
      result.elapsed_ms = std::chrono::duration<double, std::milli>(clock::now() - started).count();
      for (const auto& turn : result.trace)
        result.warnings.insert(result.warnings.end(), turn.warnings.begin(), turn.warnings.end());
      return result;
    };

    std::vector<NodeId> candidates = seed_retrieve(q.question, k);
    for (std::size_t turn = 0;; ++turn) {
      const auto turn_started = clock::now();
      TurnRecord record;
      record.turn = turn;
      record.expanded = candidates;
      record.pruned_in = prune(q, candidates, record.warnings);
      const auto frontier = context.unite(record.pruned_in);
      record.context_size = context.size();

      // Empty store, or every seed pruned away: nothing to assess.
      if (context.empty()) {
        for (auto& w : record.warnings) result.warnings.push_back(std::move(w));
        result.saturated = true;
        return finish(Termination::max_turns);
      }
      // The R-th expansion is merged but never assessed.
      if (turn == max_turns) {
        record.elapsed_ms = std::chrono::duration<double, std::milli>(clock::now() - turn_started).count();
        result.trace.push_back(std::move(record));
        return finish(Termination::max_turns);
      }

      AssessRequest request{q.question, q.options, context_summary(), passages(context.nodes()),
                            profiles_for(context)};
      ++result.turns_used;
      try {
        record.raw_verdict = answerer_->assess(request);
      } catch (const std::exception& e) {
        record.warnings.push_back(std::string("answerer failed: ") + e.what());
        result.error = std::string("answerer failed: ") + e.what();
        record.elapsed_ms = std::chrono::duration<double, std::milli>(clock::now() - turn_started).count();
        result.trace.push_back(std::move(record));
        return finish(Termination::adapter_error);
      }
      record.verdict = prompts::parse_verdict(record.raw_verdict);
      if (!record.verdict) record.warnings.push_back("unparseable verdict, treated as expand");
      const bool answered = record.verdict && record.verdict->is_answer();
      if (answered) result.answer = record.verdict->answer_text();

      std::optional<Termination> stop;
      if (answered) {
        stop = Termination::sufficient;
      } else {
        candidates = expand(context, frontier);
        if (candidates.empty()) {
          result.saturated = true;
          stop = Termination::max_turns;
        }
      }
      record.elapsed_ms = std::chrono::duration<double, std::milli>(clock::now() - turn_started).count();
      result.trace.push_back(std::move(record));
      if (stop) return finish(*stop);
    }
  }

 private:
  std::string context_summary() const {
    return config_.include_global ? snapshot_->state.global.summary : std::string{};
  }

  std::shared_ptr<const StoreSnapshot> snapshot_;
  std::shared_ptr<const Embedder> embedder_;
  std::shared_ptr<const Pruner> pruner_;
  std::shared_ptr<const Answerer> answerer_;
  ReasonerConfig config_;
};

}  // namespace pyramem
