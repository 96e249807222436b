#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "pyramem/ingest.hpp"
#include "pyramem/reasoner.hpp"
#include "pyramem/scripted.hpp"

namespace pyramem::bench {

// ---------------------------------------------------------------------------
// Variants

enum class MemoryKind { hierarchical, plain };

struct Variant {
  std::string name;
  MemoryKind memory = MemoryKind::hierarchical;
  bool links = true;
  bool global = true;
  bool expand = true;
  bool prune = true;
  bool socratic = false;
};

inline const std::vector<Variant>& named_variants() {
  static const std::vector<Variant> all{
      {"full", MemoryKind::hierarchical, true, true, true, true, false},
      {"plain-no-link", MemoryKind::plain, false, false, true, true, false},
      {"plain-link", MemoryKind::plain, true, false, true, true, false},
      {"no-global-no-link", MemoryKind::hierarchical, false, false, true, true, false},
      {"no-global-link", MemoryKind::hierarchical, true, false, true, true, false},
      {"no-expand", MemoryKind::hierarchical, true, true, false, true, false},
      {"no-prune", MemoryKind::hierarchical, true, true, true, false, false},
      {"socratic", MemoryKind::plain, false, false, false, false, true},
  };
  return all;
}

inline Variant variant_by_name(const std::string& name) {
  for (const auto& v : named_variants())
    if (v.name == name) return v;
  throw InvalidArgumentError("unknown variant '" + name + "'");
}

// "all" or a comma-separated list of names.
inline std::vector<Variant> parse_variants(const std::string& spec) {
  if (spec == "all") return named_variants();
  std::vector<Variant> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(variant_by_name(item));
  if (out.empty()) throw InvalidArgumentError("no variants selected");
  return out;
}

struct BenchConfig {
  std::size_t k_seed = 20;
  std::size_t max_turns = 3;
  std::size_t socratic_k = 20;
  double clip_len = kDefaultClipLength;
  std::size_t k_link = kDefaultLinkCandidates;
  std::chrono::microseconds delay_per_node{0};
  std::size_t workers = 0;  // 0: hardware concurrency
  std::size_t embedding_dim = 256;
  std::uint64_t embedding_seed = 0;
};

inline ReasonerConfig reasoner_config(const Variant& v, const BenchConfig& b) {
  ReasonerConfig c;
  c.k_seed = b.k_seed;
  c.max_turns = v.expand ? b.max_turns : 1;
  c.use_hierarchy = v.memory == MemoryKind::hierarchical;
  c.use_relational = v.links;
  c.include_global = v.global;
  c.prune = v.prune;
  if (v.socratic) {
    c.seed_level = NodeLevel::clip;
    c.k_seed = b.socratic_k;
    c.max_turns = 1;
    c.prune = false;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Workloads

struct SyntheticTask {
  std::vector<TimedEvent> stream;
  std::string question;
  std::string gold;
  std::size_t evidence_hops = 0;
  std::string decisive_text;  // unique text of the decisive event
  std::string topic;          // short token shared by the evidence chain only
};

struct WorkloadSpec {
  std::size_t n_tasks = 200;
  std::map<std::size_t, double> hops{{2, 1.0}};  // hop count -> weight
  std::size_t distractors = 30;
  std::size_t filler_clips = 24;
  std::size_t facts_per_clip = 6;
  std::uint64_t seed = 7;
};

inline void to_json(Json& j, const WorkloadSpec& w) {
  Json hops = Json::object();
  for (const auto& [h, p] : w.hops) hops[std::to_string(h)] = p;
  j = Json{{"n_tasks", w.n_tasks},     {"hops", hops},
           {"distractors", w.distractors}, {"filler_clips", w.filler_clips},
           {"facts_per_clip", w.facts_per_clip}, {"seed", w.seed}};
}

inline WorkloadSpec workload_spec_from_json(const Json& j) {
  WorkloadSpec w;
  if (!j.is_object()) decode::fail("", "expected object");
  if (j.contains("n_tasks")) w.n_tasks = decode::uint(j, "n_tasks", "");
  if (j.contains("distractors")) w.distractors = decode::uint(j, "distractors", "");
  if (j.contains("filler_clips")) w.filler_clips = decode::uint(j, "filler_clips", "");
  if (j.contains("facts_per_clip")) w.facts_per_clip = decode::uint(j, "facts_per_clip", "");
  if (j.contains("seed")) w.seed = decode::uint(j, "seed", "");
  if (j.contains("hops")) {
    const auto& h = j["hops"];
    if (!h.is_object()) decode::fail("hops", "expected object of hop -> weight");
    w.hops.clear();
    for (const auto& [k, v] : h.items()) {
      std::size_t hop = 0;
      try {
        hop = std::stoul(k);
      } catch (const std::exception&) {
        decode::fail("hops." + k, "key must be a hop count");
      }
      w.hops[hop] = decode::number_of(v, "hops." + k);
    }
  }
  if (w.n_tasks == 0) decode::fail("n_tasks", "must be >= 1");
  if (w.facts_per_clip < 2) decode::fail("facts_per_clip", "must be >= 2");
  if (w.hops.empty()) decode::fail("hops", "empty distribution");
  for (const auto& [h, p] : w.hops)
    if (!(p >= 0.0) || !std::isfinite(p)) decode::fail("hops", "weights must be finite and >= 0");
  return w;
}

// Built-in workloads: "hop2" (200 tasks, 2 hops), "mixed" (hops 0-3),
// "distractor-heavy" (hop 2 with 60 distractors), "smoke" (20 mixed tasks).
inline WorkloadSpec preset_workload(const std::string& name) {
  WorkloadSpec w;
  if (name == "hop2") return w;
  if (name == "mixed") {
    w.hops = {{0, 1.0}, {1, 1.0}, {2, 1.0}, {3, 1.0}};
    return w;
  }
  if (name == "distractor-heavy") {
    w.n_tasks = 100;
    w.distractors = 60;
    return w;
  }
  if (name == "smoke") {
    w.n_tasks = 20;
    w.hops = {{0, 1.0}, {1, 1.0}, {2, 1.0}};
    w.filler_clips = 6;
    return w;
  }
  throw InvalidArgumentError("unknown workload preset '" + name + "'");
}

namespace detail {

// Pronounceable random words; every word drawn for one task is distinct.
class WordSource {
 public:
  explicit WordSource(std::mt19937_64& rng) : rng_(rng) {}

  std::string word(std::size_t syllables = 3) {
    static constexpr std::string_view consonants = "bdfgklmnprstvz";
    static constexpr std::string_view vowels = "aeiou";
    for (;;) {
      std::string w;
      for (std::size_t i = 0; i < syllables; ++i) {
        w += consonants[pick(consonants.size())];
        w += vowels[pick(vowels.size())];
      }
      if (used_.insert(w).second) return w;
    }
  }

  // Three letters: below the keyword judge's length cutoff, so it never
  // creates links, but the topic pruner still matches it.
  std::string short_word() {
    static constexpr std::string_view consonants = "bdfgklmnprstvz";
    static constexpr std::string_view vowels = "aeiou";
    for (;;) {
      std::string w{consonants[pick(consonants.size())], vowels[pick(vowels.size())],
                    consonants[pick(consonants.size())]};
      if (!text::stopwords().count(w) && used_.insert(w).second) return w;
    }
  }

  std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }

 private:
  std::mt19937_64& rng_;
  std::set<std::string> used_;
};

inline std::size_t draw_hops(const std::map<std::size_t, double>& hops, std::mt19937_64& rng) {
  std::vector<std::size_t> values;
  std::vector<double> weights;
  for (const auto& [h, w] : hops) {
    values.push_back(h);
    weights.push_back(w);
  }
  std::discrete_distribution<std::size_t> d(weights.begin(), weights.end());
  return values[d(rng)];
}

}  // namespace detail

// One task = one small stream. Layout:
//   seed block    the seed fact (all question words, topic, first link word)
//                 plus distractors (two question words each, no topic)
//   chain clips   one per chain fact, each fact sharing one link word with
//                 its predecessor; the last one carries the gold word
//   filler clips  unrelated facts, interleaved after the seed block
// Every non-topic word except the question and link words is unique, so the
// keyword judge links exactly the seed/distractor clique and the chain.
inline SyntheticTask generate_task(std::size_t hops, const WorkloadSpec& spec, std::mt19937_64& rng) {
  detail::WordSource words(rng);
  SyntheticTask task;
  task.evidence_hops = hops;
  task.topic = words.short_word();
  task.gold = words.word();
  std::vector<std::string> question_words;
  for (int i = 0; i < 4; ++i) question_words.push_back(words.word());
  std::vector<std::string> link_words;
  for (std::size_t i = 0; i < hops; ++i) link_words.push_back(words.word());
  task.question = "what followed " + text::join(question_words, " ") + "?";

  auto fillers = [&](std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(words.word());
    return out;
  };

  // Seed fact.
  std::vector<std::string> seed = question_words;
  seed.push_back(task.topic);
  if (hops == 0) seed.push_back(task.gold);
  else seed.push_back(link_words[0]);
  const std::string seed_text = text::join(seed, " ");
  if (hops == 0) task.decisive_text = seed_text;

  std::vector<std::string> seed_block{seed_text};
  for (std::size_t d = 0; d < spec.distractors; ++d) {
    std::vector<std::string> qs = question_words;
    std::shuffle(qs.begin(), qs.end(), rng);
    std::vector<std::string> t{qs[0], qs[1]};
    for (auto& f : fillers(3)) t.push_back(std::move(f));
    std::shuffle(t.begin(), t.end(), rng);
    seed_block.push_back(text::join(t, " "));
  }
  std::shuffle(seed_block.begin(), seed_block.end(), rng);

  // Chain facts c_1 .. c_h; c_h is decisive.
  std::vector<std::string> chain;
  for (std::size_t i = 1; i <= hops; ++i) {
    std::vector<std::string> t{task.topic, link_words[i - 1]};
    if (i < hops) t.push_back(link_words[i]);
    else t.push_back(task.gold);
    t.push_back(words.word());
    std::shuffle(t.begin(), t.end(), rng);
    chain.push_back(text::join(t, " "));
  }
  if (hops > 0) task.decisive_text = chain.back();

  // Clip blocks after the seed block: chain clips in order, fillers anywhere.
  std::vector<std::vector<std::string>> blocks;
  for (std::size_t i = 0; i < seed_block.size(); i += spec.facts_per_clip)
    blocks.emplace_back(seed_block.begin() + static_cast<std::ptrdiff_t>(i),
                        seed_block.begin() + static_cast<std::ptrdiff_t>(std::min(i + spec.facts_per_clip, seed_block.size())));
  std::vector<std::vector<std::string>> tail;
  for (const auto& c : chain) {
    std::vector<std::string> block{c};
    for (std::size_t i = 1; i < std::min<std::size_t>(3, spec.facts_per_clip); ++i) block.push_back(text::join(fillers(3), " "));
    std::shuffle(block.begin(), block.end(), rng);
    tail.push_back(std::move(block));
  }
  for (std::size_t f = 0; f < spec.filler_clips; ++f) {
    std::vector<std::string> block;
    for (std::size_t i = 0; i < spec.facts_per_clip; ++i) block.push_back(text::join(fillers(3), " "));
    // Insert keeping chain clips in relative order.
    tail.insert(tail.begin() + static_cast<std::ptrdiff_t>(words.pick(tail.size() + 1)), std::move(block));
  }
  blocks.insert(blocks.end(), std::make_move_iterator(tail.begin()), std::make_move_iterator(tail.end()));

  const double step = spec.facts_per_clip > 0 ? 30.0 / static_cast<double>(spec.facts_per_clip) : 5.0;
  for (std::size_t b = 0; b < blocks.size(); ++b)
    for (std::size_t i = 0; i < blocks[b].size(); ++i) {
      TimedEvent e;
      e.t = static_cast<double>(b) * 30.0 + static_cast<double>(i) * step;
      e.text = blocks[b][i];
      task.stream.push_back(std::move(e));
    }
  return task;
}

inline std::vector<SyntheticTask> generate_workload(const WorkloadSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::vector<SyntheticTask> out;
  out.reserve(spec.n_tasks);
  for (std::size_t i = 0; i < spec.n_tasks; ++i) out.push_back(generate_task(detail::draw_hops(spec.hops, rng), spec, rng));
  return out;
}

inline std::vector<SyntheticTask> generate_workload(std::size_t n_tasks, const std::map<std::size_t, double>& hops,
                                                    std::uint64_t seed) {
  WorkloadSpec spec;
  spec.n_tasks = n_tasks;
  spec.hops = hops;
  spec.seed = seed;
  return generate_workload(spec);
}

// ---------------------------------------------------------------------------
// Latency

struct LatencyReport {
  double p50 = 0.0;
  double p95 = 0.0;
  double mean = 0.0;
  std::size_t n = 0;
};

// Nearest rank: the ceil(p/100 * n)-th smallest sample.
inline double nearest_rank(std::vector<double> sorted_or_not, double percentile) {
  if (sorted_or_not.empty()) return 0.0;
  std::sort(sorted_or_not.begin(), sorted_or_not.end());
  const auto n = static_cast<double>(sorted_or_not.size());
  auto rank = static_cast<std::size_t>(std::ceil(percentile / 100.0 * n));
  rank = std::clamp<std::size_t>(rank, 1, sorted_or_not.size());
  return sorted_or_not[rank - 1];
}

inline LatencyReport latency_report(const std::vector<double>& samples) {
  LatencyReport r;
  r.n = samples.size();
  if (samples.empty()) return r;
  r.p50 = nearest_rank(samples, 50.0);
  r.p95 = nearest_rank(samples, 95.0);
  double sum = 0.0;
  for (double s : samples) sum += s;
  r.mean = sum / static_cast<double>(samples.size());
  return r;
}

// ---------------------------------------------------------------------------
// Ablation

struct TaskOutcome {
  bool correct = false;
  std::size_t context_size = 0;
  std::size_t turns_used = 0;
  double seconds = 0.0;
};

struct VariantResult {
  Variant variant;
  double accuracy = 0.0;
  LatencyReport latency;  // seconds
  double mean_context_size = 0.0;
  std::vector<TaskOutcome> outcomes;
};

struct AblationTable {
  std::vector<VariantResult> rows;

  const VariantResult& row(const std::string& name) const {
    for (const auto& r : rows)
      if (r.variant.name == name) return r;
    throw NotFoundError("variant not in table: " + name);
  }
};

// Builds the memory for one task with the bench's scripted ingest adapters.
inline std::unique_ptr<PyramidStore> build_task_store(const SyntheticTask& task, const BenchConfig& config,
                                                      std::shared_ptr<const Embedder> embedder) {
  auto store = std::make_unique<PyramidStore>(std::move(embedder));
  IngestAdapters adapters{std::make_shared<scripted::EventExtractor>(),
                          std::make_shared<scripted::KeywordLinkJudge>(),
                          std::make_shared<scripted::ConcatUpdater>(),
                          std::make_shared<scripted::AppendingProfiler>()};
  IngestConfig ic;
  ic.clip_len = config.clip_len;
  ic.k_link = config.k_link;
  ic.parallel_links = false;
  IngestPipeline(*store, adapters, ic).ingest(task.stream);
  return store;
}

inline NodeId decisive_fact(const StoreSnapshot& snap, const SyntheticTask& task) {
  for (const auto& [id, f] : snap.state.facts)
    if (f.text == task.decisive_text) return id;
  throw NotFoundError("decisive fact missing from task store");
}

inline TaskOutcome run_variant(const StoreSnapshot& snap, std::shared_ptr<const StoreSnapshot> shared,
                               const SyntheticTask& task, const Variant& variant, const BenchConfig& config,
                               std::shared_ptr<const Embedder> embedder) {
  const auto decisive = decisive_fact(snap, task);
  std::set<NodeId> evidence{variant.socratic ? snap.state.facts.at(decisive).clip_id : decisive};
  auto answerer = std::make_shared<scripted::OracleAnswerer>(evidence, task.gold, config.delay_per_node);
  auto pruner = std::make_shared<scripted::KeywordPruner>(std::set<std::string>{task.topic});
  Reasoner reasoner(std::move(shared), std::move(embedder), pruner, answerer, reasoner_config(variant, config));
  const auto started = std::chrono::steady_clock::now();
  const auto result = reasoner.answer(Query{task.question, {}, {}, {}});
  TaskOutcome out;
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  out.correct = result.answer && *result.answer == task.gold;
  out.context_size = result.context.size();
  out.turns_used = result.turns_used;
  return out;
}

// Each task's memory is built once and shared by all variants. Tasks run on
// a bounded worker pool; results are gathered in task order.
inline AblationTable run_ablation(const std::vector<SyntheticTask>& workload, const std::vector<Variant>& variants,
                                  const BenchConfig& config = {}) {
  if (variants.empty()) throw InvalidArgumentError("no variants selected");
  auto embedder = std::make_shared<scripted::HashEmbedder>(config.embedding_dim, config.embedding_seed);
  std::vector<std::vector<TaskOutcome>> outcomes(workload.size(), std::vector<TaskOutcome>(variants.size()));
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;

  auto worker = [&] {
    for (std::size_t i = next++; i < workload.size(); i = next++) {
      try {
        auto store = build_task_store(workload[i], config, embedder);
        auto snap = store->snapshot();
        for (std::size_t v = 0; v < variants.size(); ++v)
          outcomes[i][v] = run_variant(*snap, snap, workload[i], variants[v], config, embedder);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = workload.size();
      }
    }
  };
  std::size_t n_workers = config.workers ? config.workers : std::max(1u, std::thread::hardware_concurrency());
  n_workers = std::min(n_workers, std::max<std::size_t>(1, workload.size()));
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);

  AblationTable table;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    VariantResult row;
    row.variant = variants[v];
    std::vector<double> seconds;
    double correct = 0.0, context = 0.0;
    for (const auto& per_task : outcomes) {
      const auto& o = per_task[v];
      row.outcomes.push_back(o);
      seconds.push_back(o.seconds);
      correct += o.correct ? 1.0 : 0.0;
      context += static_cast<double>(o.context_size);
    }
    const auto n = static_cast<double>(std::max<std::size_t>(1, outcomes.size()));
    row.accuracy = correct / n;
    row.mean_context_size = context / n;
    row.latency = latency_report(seconds);
    table.rows.push_back(std::move(row));
  }
  return table;
}

// ---------------------------------------------------------------------------
// Output

inline std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::string to_csv(const AblationTable& t) {
  std::string out = "variant,accuracy,p50,p95,mean,mean_context_size\n";
  for (const auto& r : t.rows)
    out += r.variant.name + "," + fixed(r.accuracy, 4) + "," + fixed(r.latency.p50, 6) + "," +
           fixed(r.latency.p95, 6) + "," + fixed(r.latency.mean, 6) + "," + fixed(r.mean_context_size, 2) + "\n";
  return out;
}

// Accuracy with the relative change against the first row in parentheses,
// then latency percentiles in seconds.
inline std::string format_table(const AblationTable& t) {
  std::vector<std::vector<std::string>> cells{{"variant", "accuracy", "p50 (s)", "p95 (s)", "mean (s)", "|C|"}};
  const double base = t.rows.empty() ? 0.0 : t.rows.front().accuracy;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    std::string acc = fixed(100.0 * r.accuracy, 1);
    if (i > 0) {
      const double delta = 100.0 * (r.accuracy - base);
      acc += " (" + std::string(delta >= 0 ? "+" : "") + fixed(delta, 1) + "%)";
    }
    cells.push_back({r.variant.name, acc, fixed(r.latency.p50, 4), fixed(r.latency.p95, 4),
                     fixed(r.latency.mean, 4), fixed(r.mean_context_size, 1)});
  }
  std::vector<std::size_t> width(cells.front().size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::string out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      const auto& s = cells[r][c];
      out += c == 0 ? s + std::string(width[c] - s.size(), ' ') : std::string(width[c] - s.size(), ' ') + s;
      out += c + 1 < cells[r].size() ? "  " : "\n";
    }
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w + 2;
      out += std::string(total - 2, '-') + "\n";
    }
  }
  return out;
}

}  // namespace pyramem::bench
