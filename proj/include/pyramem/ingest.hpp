#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "pyramem/adapters.hpp"
#include "pyramem/identity_bank.hpp"
#include "pyramem/link_builder.hpp"
#include "pyramem/log.hpp"
#include "pyramem/pyramid_store.hpp"
#include "pyramem/stream.hpp"

namespace pyramem {

struct IngestConfig {
  double clip_len = kDefaultClipLength;
  std::size_t k_link = kDefaultLinkCandidates;
  double theta_local = kDefaultLocalThreshold;
  double theta_global = kDefaultGlobalThreshold;
  bool parallel_links = true;
};

struct IngestAdapters {
  std::shared_ptr<const Extractor> extractor;
  std::shared_ptr<const LinkJudge> judge;
  std::shared_ptr<const GlobalUpdater> updater;
  std::shared_ptr<const Profiler> profiler;
  std::shared_ptr<const LocalClusterer> clusterer = std::make_shared<SingleLinkageClusterer>();
};

struct IngestReport {
  std::size_t clips_added = 0;
  std::size_t facts_added = 0;
  std::size_t relational_links = 0;
  std::size_t cross_clip_links = 0;
  std::size_t persons_created = 0;
  std::size_t persons_updated = 0;
  std::size_t clips_skipped = 0;
  std::size_t events_skipped = 0;
  std::vector<NodeId> clip_ids;
  std::vector<std::string> warnings;

  void merge(const IngestReport& o) {
    clips_added += o.clips_added;
    facts_added += o.facts_added;
    relational_links += o.relational_links;
    cross_clip_links += o.cross_clip_links;
    persons_created += o.persons_created;
    persons_updated += o.persons_updated;
    clips_skipped += o.clips_skipped;
    events_skipped += o.events_skipped;
    clip_ids.insert(clip_ids.end(), o.clip_ids.begin(), o.clip_ids.end());
    warnings.insert(warnings.end(), o.warnings.begin(), o.warnings.end());
  }
};

inline void to_json(Json& j, const IngestReport& r) {
  j = Json{{"clips_added", r.clips_added},
           {"facts_added", r.facts_added},
           {"relational_links", r.relational_links},
           {"cross_clip_links", r.cross_clip_links},
           {"persons_created", r.persons_created},
           {"persons_updated", r.persons_updated},
           {"clips_skipped", r.clips_skipped},
           {"events_skipped", r.events_skipped},
           {"clip_ids", r.clip_ids},
           {"warnings", r.warnings}};
}

class IngestPipeline {
 public:
  IngestPipeline(PyramidStore& store, IngestAdapters adapters, IngestConfig config = {})
      : store_(store),
        adapters_(std::move(adapters)),
        config_(config),
        segmenter_(config.clip_len, store.counters().next_window) {
    if (!adapters_.extractor || !adapters_.judge || !adapters_.updater || !adapters_.profiler ||
        !adapters_.clusterer)
      throw InvalidArgumentError("ingest pipeline needs extractor, judge, updater, profiler and clusterer");
    if (config_.k_link == 0) throw InvalidArgumentError("K_link must be >= 1");
  }

  const IngestConfig& config() const noexcept { return config_; }

  // Extract, commit, link, resolve identities, then fold into the global node.
  // Extractor failure aborts the clip before anything is written.
  IngestReport process_clip(const ClipObservation& obs) {
    IngestReport report;
    ExtractionResult extracted;
    try {
      extracted = adapters_.extractor->extract(obs);
    } catch (const std::exception& e) {
      throw AdapterError("extraction failed for window " + std::to_string(obs.window) +
                         " (nothing committed): " + e.what());
    }
    if (extracted.facts.empty()) {
      warn(report, "window " + std::to_string(obs.window) + " produced no facts; skipped");
      ++report.clips_skipped;
      store_.set_next_window(obs.window + 1);
      return report;
    }

    ClipNode clip;
    clip.id = store_.allocate_clip_id();
    clip.span = obs.span;
    clip.summary = extracted.clip_summary;
    clip.scene = extracted.clip_scene;
    std::vector<FactNode> facts = std::move(extracted.facts);
    std::vector<NodeId> fact_ids;
    for (auto& f : facts) {
      f.id = store_.allocate_fact_id();
      f.clip_id = clip.id;
      f.links.clear();
      f.character_text.reset();
      fact_ids.push_back(f.id);
    }
    const auto clip_id = clip.id;
    store_.add_clip(std::move(clip), facts);
    report.clips_added = 1;
    report.facts_added = fact_ids.size();
    report.clip_ids.push_back(clip_id);

    auto links = build_clip_links(store_, fact_ids, *adapters_.judge, config_.k_link,
                                  config_.parallel_links);
    report.relational_links = links.relational;
    report.cross_clip_links = links.cross_clip;
    for (auto& w : links.warnings) report.warnings.push_back(std::move(w));

    resolve_identities(clip_id, facts, fact_ids, extracted, report);

    try {
      store_.update_global(extracted.clip_summary.empty() ? extracted.clip_scene : extracted.clip_summary,
                           *adapters_.updater);
    } catch (const AdapterError& e) {
      warn(report, e.what());
    }
    store_.set_next_window(obs.window + 1);
    return report;
  }

  IngestReport push(const TimedEvent& event) {
    IngestReport report;
    const auto before = segmenter_.skipped();
    for (const auto& obs : segmenter_.push(event)) report.merge(process_clip(obs));
    report.events_skipped += segmenter_.skipped() - before;
    return report;
  }

  IngestReport finish() {
    IngestReport report;
    if (auto last = segmenter_.finish()) report.merge(process_clip(*last));
    return report;
  }

  IngestReport ingest(const std::vector<TimedEvent>& events) {
    IngestReport report;
    for (const auto& e : events) report.merge(push(e));
    report.merge(finish());
    return report;
  }

 private:
  void warn(IngestReport& report, std::string message) {
    log::warn(message);
    report.warnings.push_back(std::move(message));
  }

  void resolve_identities(const NodeId& clip_id, const std::vector<FactNode>& facts,
                          const std::vector<NodeId>& fact_ids, const ExtractionResult& extracted,
                          IngestReport& report) {
    if (extracted.faces.empty()) return;
    std::vector<Embedding> faces;
    for (const auto& f : extracted.faces) {
      if (f.fact_index >= facts.size()) {
        warn(report, "face observation refers to missing fact index " + std::to_string(f.fact_index));
        continue;
      }
      faces.push_back(f.embedding);
    }
    std::vector<std::size_t> face_fact;
    for (const auto& f : extracted.faces)
      if (f.fact_index < facts.size()) face_fact.push_back(f.fact_index);
    if (faces.empty()) return;

    auto state = store_.state();
    IdentityBank bank(state.persons, state.counters.next_person);
    const auto locals = adapters_.clusterer->cluster(faces, config_.theta_local);
    const auto assignments = bank.merge_global(locals, config_.theta_global);

    // fact index -> persons seen in it, and person -> facts it appears in
    std::map<std::size_t, std::set<PersonId>> by_fact;
    std::map<PersonId, std::set<std::size_t>> by_person;
    std::set<PersonId> created;
    for (const auto& a : assignments) {
      if (a.created) created.insert(a.person_id);
      for (auto member : locals[a.local_index].member_indices) {
        by_fact[face_fact[member]].insert(a.person_id);
        by_person[a.person_id].insert(face_fact[member]);
      }
    }
    for (const auto& v : extracted.voices) {
      auto it = by_fact.find(v.fact_index);
      if (it == by_fact.end() || it->second.size() != 1) continue;
      bank.add_voice(*it->second.begin(), v.voice_id);
    }

    for (const auto& [person, indices] : by_person) {
      std::vector<std::string> texts;
      std::vector<NodeId> evidence;
      for (auto i : indices) {
        texts.push_back(facts[i].text);
        evidence.push_back(fact_ids[i]);
      }
      try {
        bank.update_profile(person, texts, *adapters_.profiler, evidence);
      } catch (const AdapterError& e) {
        warn(report, e.what());
        bank.add_evidence(person, evidence);
      }
      store_.upsert_person(bank.person(person), bank.next_id());
      if (created.count(person))
        ++report.persons_created;
      else
        ++report.persons_updated;
    }

    std::set<PersonId> in_clip;
    for (const auto& [index, persons] : by_fact) {
      std::string tagged = facts[index].text;
      for (const auto& p : persons) {
        tagged += " <" + p + ">";
        in_clip.insert(p);
      }
      store_.annotate(fact_ids[index], std::move(tagged));
    }
    std::string summary = extracted.clip_summary.empty() ? extracted.clip_scene : extracted.clip_summary;
    for (const auto& p : in_clip) summary += " <" + p + ">";
    store_.annotate(clip_id, std::move(summary));
  }

  PyramidStore& store_;
  IngestAdapters adapters_;
  IngestConfig config_;
  StreamSegmenter segmenter_;
};

}  // namespace pyramem
