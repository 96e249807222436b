#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pyramem/adapters.hpp"
#include "pyramem/core_types.hpp"
#include "pyramem/embedding.hpp"
#include "pyramem/error.hpp"

namespace pyramem {

inline constexpr double kDefaultLocalThreshold = 0.6;
inline constexpr double kDefaultGlobalThreshold = 0.5;

struct LocalCluster {
  std::vector<Embedding> members;
  std::vector<std::size_t> member_indices;  // positions in the clustered input
  Embedding centroid;                        // normalized mean of members
};

inline Embedding normalized_mean(std::span<const Embedding> members) {
  if (members.empty()) throw InvalidArgumentError("mean of empty set");
  std::vector<double> sum(members.front().dim(), 0.0);
  for (const auto& m : members) {
    if (m.dim() != sum.size()) throw DimensionMismatchError(sum.size(), m.dim());
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += m[i];
  }
  return Embedding(std::move(sum)).normalized();
}

class LocalClusterer {
 public:
  virtual ~LocalClusterer() = default;
  virtual std::vector<LocalCluster> cluster(std::span<const Embedding> faces, double threshold) const = 0;
};

// Single-linkage agglomeration at a cosine threshold: connected components of
// the graph joining every pair with cosine >= threshold. Clusters are ordered
// by their first member; members keep input order.
class SingleLinkageClusterer final : public LocalClusterer {
 public:
  std::vector<LocalCluster> cluster(std::span<const Embedding> faces, double threshold) const override {
    const std::size_t n = faces.size();
    if (n == 0) return {};
    for (const auto& f : faces)
      if (f.dim() != faces.front().dim()) throw DimensionMismatchError(faces.front().dim(), f.dim());

    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (cosine(faces[i], faces[j]) >= threshold) {
          auto a = find(i), b = find(j);
          if (a != b) parent[std::max(a, b)] = std::min(a, b);
        }

    std::map<std::size_t, std::size_t> slot;
    std::vector<LocalCluster> out;
    for (std::size_t i = 0; i < n; ++i) {
      const auto root = find(i);
      auto [it, fresh] = slot.try_emplace(root, out.size());
      if (fresh) out.emplace_back();
      out[it->second].members.push_back(faces[i]);
      out[it->second].member_indices.push_back(i);
    }
    for (auto& c : out) c.centroid = normalized_mean(c.members);
    return out;
  }
};

inline std::vector<LocalCluster> cluster_local(std::span<const Embedding> faces,
                                               double theta_local = kDefaultLocalThreshold) {
  if (!(theta_local > 0.0 && theta_local < 1.0))
    throw InvalidArgumentError("theta_local must be in (0, 1)");
  return SingleLinkageClusterer{}.cluster(faces, theta_local);
}

struct IdentityAssignment {
  std::size_t local_index = 0;
  PersonId person_id;
  bool created = false;
  double similarity = 0.0;  // best cosine against the bank before the merge
};

inline PersonId make_person_id(std::uint64_t n) { return "p-" + std::to_string(n); }

// Global identities built by merging per-clip clusters into the closest
// existing centroid (cosine >= threshold) or opening a new identity.
class IdentityBank {
 public:
  IdentityBank() = default;
  IdentityBank(std::map<PersonId, PersonEntity> persons, std::uint64_t next_id)
      : persons_(std::move(persons)), next_id_(next_id) {
    for (const auto& [id, p] : persons_) order_.push_back(id);
    std::sort(order_.begin(), order_.end(), [](const PersonId& a, const PersonId& b) {
      auto na = id_counter(NodeId(a)), nb = id_counter(NodeId(b));
      if (na && nb && *na != *nb) return *na < *nb;
      return a < b;
    });
  }

  const std::map<PersonId, PersonEntity>& persons() const noexcept { return persons_; }
  std::uint64_t next_id() const noexcept { return next_id_; }
  std::size_t size() const noexcept { return persons_.size(); }

  const PersonEntity& person(const PersonId& id) const {
    auto it = persons_.find(id);
    if (it == persons_.end()) throw NotFoundError("unknown person: " + id);
    return it->second;
  }

  // Processes clusters in input order; identities opened earlier in the same
  // call are merge targets for later clusters. Ties go to the older identity.
  std::vector<IdentityAssignment> merge_global(const std::vector<LocalCluster>& locals,
                                               double theta_global = kDefaultGlobalThreshold) {
    if (!(theta_global > 0.0 && theta_global < 1.0))
      throw InvalidArgumentError("theta_global must be in (0, 1)");
    std::optional<std::size_t> dim;
    if (!order_.empty()) dim = persons_.at(order_.front()).face_centroid.dim();
    for (const auto& l : locals) {
      if (l.members.empty()) throw InvalidArgumentError("empty local cluster");
      if (!dim) dim = l.centroid.dim();
      if (l.centroid.dim() != *dim) throw DimensionMismatchError(*dim, l.centroid.dim());
    }

    std::vector<IdentityAssignment> out;
    for (std::size_t i = 0; i < locals.size(); ++i) {
      const auto& local = locals[i];
      const PersonId* best = nullptr;
      double best_sim = -2.0;
      for (const auto& id : order_) {
        const double sim = cosine(persons_.at(id).face_centroid, local.centroid);
        if (sim > best_sim) {
          best_sim = sim;
          best = &id;
        }
      }
      const auto m = static_cast<double>(local.members.size());
      if (best && best_sim >= theta_global) {
        auto& p = persons_.at(*best);
        const auto n = static_cast<double>(p.observation_count);
        std::vector<double> merged(p.face_centroid.dim());
        for (std::size_t d = 0; d < merged.size(); ++d)
          merged[d] = n * p.face_centroid[d] + m * local.centroid[d];
        p.face_centroid = Embedding(std::move(merged)).normalized();
        p.observation_count += local.members.size();
        out.push_back({i, *best, false, best_sim});
      } else {
        PersonEntity p;
        p.person_id = make_person_id(next_id_++);
        p.face_centroid = local.centroid.normalized();
        p.observation_count = local.members.size();
        order_.push_back(p.person_id);
        out.push_back({i, p.person_id, true, best ? best_sim : 0.0});
        persons_.emplace(p.person_id, std::move(p));
      }
    }
    return out;
  }

  // profile <- profiler(old profile, new facts); evidence ids are appended
  // (deduplicated). Adapter failure leaves the person unchanged.
  const PersonEntity& update_profile(const PersonId& id, std::span<const std::string> new_facts,
                                     const Profiler& profiler,
                                     std::span<const NodeId> evidence = {}) {
    auto it = persons_.find(id);
    if (it == persons_.end()) throw NotFoundError("unknown person: " + id);
    std::string updated;
    try {
      updated = profiler.update(id, it->second.profile, new_facts);
    } catch (const std::exception& e) {
      throw AdapterError("profile update failed for " + id + " (profile unchanged): " + e.what());
    }
    it->second.profile = std::move(updated);
    add_evidence(id, evidence);
    return it->second;
  }

  void add_evidence(const PersonId& id, std::span<const NodeId> evidence) {
    auto& p = persons_.at(id);
    for (const auto& e : evidence)
      if (std::find(p.evidence.begin(), p.evidence.end(), e) == p.evidence.end())
        p.evidence.push_back(e);
  }

  void add_voice(const PersonId& id, const std::string& voice) {
    auto& refs = persons_.at(id).voice_refs;
    if (std::find(refs.begin(), refs.end(), voice) == refs.end()) refs.push_back(voice);
  }

 private:
  std::map<PersonId, PersonEntity> persons_;
  std::vector<PersonId> order_;
  std::uint64_t next_id_ = 1;
};

}  // namespace pyramem
