#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pyramem/core_types.hpp"
#include "pyramem/embedding.hpp"
#include "pyramem/stream.hpp"

// Contracts for every model-dependent step. Implementations must be safe to
// call concurrently; the engine never assumes hidden per-call state.

namespace pyramem {

// A node as presented to pruning and answering models.
struct Passage {
  NodeId id;
  NodeLevel level = NodeLevel::fact;
  std::string text;
  TimeSpan span;
  std::optional<std::string> character_text;
  std::vector<KeyframeRef> keyframes;
};

struct CharacterProfile {
  PersonId person_id;
  std::string profile;
};

struct FaceObservation {
  Embedding embedding;
  std::size_t fact_index = 0;
};

struct VoiceObservation {
  std::string voice_id;
  std::size_t fact_index = 0;
};

// Facts come back without ids; the pipeline assigns them.
struct ExtractionResult {
  std::vector<FactNode> facts;
  std::string clip_summary;
  std::string clip_scene;
  std::vector<FaceObservation> faces;
  std::vector<VoiceObservation> voices;
};

struct SelectionRequest {
  std::string question;
  std::vector<std::string> options;
  std::string context_summary;
  std::vector<Passage> passages;
  std::vector<CharacterProfile> profiles;
};

struct AssessRequest {
  std::string question;
  std::vector<std::string> options;
  std::string context_summary;
  std::vector<Passage> passages;
  std::vector<CharacterProfile> profiles;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::size_t dim() const = 0;
  virtual Embedding embed(std::string_view text) const = 0;
};

class Extractor {
 public:
  virtual ~Extractor() = default;
  virtual ExtractionResult extract(const ClipObservation& clip) const = 0;
};

// Input: the query fact and candidate facts in the link-generation JSON shape
// ({"node_id", "text", "timestamp"}). Output: raw model text expected to hold
// {"links": [{"target", "description", "weight"}]}.
class LinkJudge {
 public:
  virtual ~LinkJudge() = default;
  virtual std::string judge(const Json& query_fact, const Json& candidates) const = 0;
};

// Raw model text expected to hold a list of 0-based passage numbers.
class Pruner {
 public:
  virtual ~Pruner() = default;
  virtual std::string select(const SelectionRequest& request) const = 0;
};

// Raw model text ending in "[ANSWER] ..." or "[Expand]".
class Answerer {
 public:
  virtual ~Answerer() = default;
  virtual std::string assess(const AssessRequest& request) const = 0;
};

class GlobalUpdater {
 public:
  virtual ~GlobalUpdater() = default;
  virtual std::string update(std::string_view previous_summary,
                             std::string_view clip_summary) const = 0;
};

class Profiler {
 public:
  virtual ~Profiler() = default;
  virtual std::string update(const PersonId& person, std::string_view old_profile,
                             std::span<const std::string> new_facts) const = 0;
};

}  // namespace pyramem
