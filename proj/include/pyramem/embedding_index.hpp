#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <vector>

#include "pyramem/core_types.hpp"
#include "pyramem/embedding.hpp"
#include "pyramem/error.hpp"

namespace pyramem {

struct ScoredHit {
  NodeId id;
  double score = 0.0;

  friend bool operator==(const ScoredHit&, const ScoredHit&) = default;
};

// Node-level predicate applied before ranking.
using HitFilter = std::function<bool(const NodeId&, NodeLevel)>;

inline HitFilter level_filter(NodeLevel level) {
  return [level](const NodeId&, NodeLevel l) { return l == level; };
}

// Exact cosine index over a fixed dimension. Exhaustive scan; ties are broken
// by ascending NodeId so rankings are a total order. Readers share, writers
// exclude; a copy is a point-in-time view.
class EmbeddingIndex {
 public:
  explicit EmbeddingIndex(std::size_t dim) : dim_(dim) {
    if (dim == 0) throw InvalidArgumentError("index dimension must be positive");
  }

  EmbeddingIndex(const EmbeddingIndex& other) {
    std::shared_lock lock(other.mutex_);
    dim_ = other.dim_;
    entries_ = other.entries_;
  }

  EmbeddingIndex& operator=(const EmbeddingIndex& other) {
    if (this == &other) return *this;
    std::scoped_lock lock(mutex_, other.mutex_);
    dim_ = other.dim_;
    entries_ = other.entries_;
    return *this;
  }

  std::size_t dim() const noexcept { return dim_; }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
  }

  bool contains(const NodeId& id) const {
    std::shared_lock lock(mutex_);
    return entries_.count(id) != 0;
  }

  // Last write wins. The level tag defaults to the one implied by the id prefix.
  void upsert(const NodeId& id, const Embedding& embedding) {
    upsert(id, embedding, level_of(id));
  }

  void upsert(const NodeId& id, const Embedding& embedding, NodeLevel level) {
    check(embedding);
    Entry entry{embedding, embedding.norm(), level};
    std::unique_lock lock(mutex_);
    entries_.insert_or_assign(id, std::move(entry));
  }

  std::optional<Embedding> get(const NodeId& id) const {
    std::shared_lock lock(mutex_);
    auto it = entries_.find(id);
    if (it == entries_.end()) return std::nullopt;
    return it->second.vector;
  }

  std::vector<ScoredHit> top_k(const Embedding& query, std::size_t k,
                               const HitFilter& filter = {}) const {
    if (k == 0) throw InvalidArgumentError("k must be >= 1");
    check(query);
    const double query_norm = query.norm();

    std::shared_lock lock(mutex_);
    std::vector<ScoredHit> hits;
    hits.reserve(entries_.size());
    for (const auto& [id, entry] : entries_) {
      if (filter && !filter(id, entry.level)) continue;
      const double score = dot(query.values(), entry.vector.values()) / (query_norm * entry.norm);
      hits.push_back({id, score});
    }
    lock.unlock();

    const auto better = [](const ScoredHit& a, const ScoredHit& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.id < b.id;
    };
    const std::size_t n = std::min(k, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(n), hits.end(),
                      better);
    hits.resize(n);
    return hits;
  }

 private:
  struct Entry {
    Embedding vector;
    double norm;
    NodeLevel level;
  };

  void check(const Embedding& e) const {
    if (e.dim() != dim_) throw DimensionMismatchError(dim_, e.dim());
    if (e.is_zero()) throw InvalidArgumentError("zero vector rejected: cosine undefined");
  }

  std::size_t dim_;
  std::map<NodeId, Entry> entries_;
  mutable std::shared_mutex mutex_;
};

}  // namespace pyramem
