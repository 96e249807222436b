// Prints one [PASS]/[FAIL] line per acceptance criterion; exits non-zero if
// any criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "pyramem/pyramem.hpp"

using namespace pyramem;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::shared_ptr<const Answerer> always_expand() {
  return std::make_shared<scripted::FunctionAnswerer>([](const AssessRequest&) { return std::string("[Expand]"); });
}

Outcome retrieval_oracle() {
  const auto started = Clock::now();
  std::mt19937_64 rng(20240601);
  std::normal_distribution<double> gauss;
  std::uniform_int_distribution<std::size_t> size(1, 500), dims(2, 48), ks(1, 40);
  std::size_t stores = 0, queries = 0, mismatches = 0;
  for (; stores < 120; ++stores) {
    const std::size_t n = size(rng), dim = dims(rng);
    EmbeddingIndex index(dim);
    std::map<NodeId, std::vector<double>> entries;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> v(dim);
      // Every fifth vector repeats an earlier one (scaled) to force ties.
      if (i % 5 == 4) {
        v = entries.begin()->second;
        for (auto& x : v) x *= 2.0;
      } else {
        for (auto& x : v) x = gauss(rng);
      }
      entries[make_fact_id(i)] = v;
      index.upsert(make_fact_id(i), Embedding(v));
    }
    for (int q = 0; q < 5; ++q, ++queries) {
      std::vector<double> query(dim);
      if (q == 0) query = entries.begin()->second;
      else
        for (auto& x : query) x = gauss(rng);
      const auto k = ks(rng);
      const auto want = oracle::exhaustive_top_k(entries, query, k);
      const auto got = index.top_k(Embedding(query), k);
      bool same = got.size() == want.size();
      for (std::size_t i = 0; same && i < got.size(); ++i) same = got[i].id == want[i].id;
      if (!same) ++mismatches;
    }
  }
  const double secs = seconds_since(started);
  std::ostringstream d;
  d << stores << " stores, " << queries << " queries, " << mismatches << " mismatches, " << bench::fixed(secs, 2)
    << " s";
  return {mismatches == 0 && secs < 10.0, d.str()};
}

Outcome expansion_closure() {
  std::mt19937_64 rng(77);
  std::size_t graphs = 0, mismatches = 0, clip_child_cases = 0;
  for (; graphs < 60; ++graphs) {
    const auto state = oracle::random_graph(rng, 200);
    auto embedder = std::make_shared<scripted::HashEmbedder>(32);
    PyramidStore store(embedder);
    store.replace_state(state);
    ReasonerConfig rc;
    rc.k_seed = 1 + graphs % 4;
    rc.max_turns = 1 + graphs % 5;
    rc.use_hierarchy = graphs % 4 != 3;
    rc.use_relational = graphs % 5 != 4;
    rc.traverse_undirected = graphs % 2 == 0;
    rc.seed_level = graphs % 3 == 0 ? NodeLevel::clip : NodeLevel::fact;
    if (rc.use_hierarchy && rc.seed_level == NodeLevel::clip) ++clip_child_cases;
    Reasoner r(store.snapshot(), embedder, std::make_shared<scripted::IdentityPruner>(), always_expand(), rc);
    const auto question = oracle::random_text(rng, 2);
    const auto seeds = r.seed_retrieve(question, rc.k_seed);
    const auto result = r.answer(Query{question, {}, {}, {}});
    const auto want =
        oracle::bfs_closure(state, seeds, rc.max_turns, {rc.use_hierarchy, rc.use_relational, rc.traverse_undirected});
    if (std::set<NodeId>(result.context.begin(), result.context.end()) != want) ++mismatches;
  }
  std::ostringstream d;
  d << graphs << " graphs (" << clip_child_cases << " seeded at clips), " << mismatches << " mismatches";
  return {mismatches == 0, d.str()};
}

Outcome monotone_termination() {
  std::mt19937_64 rng(4242);
  const std::vector<std::string> replies{"[Expand]", "", "sorry", "[ANSWER]", "[ANSWER]  \n", "[expand]",
                                         "I think [ANSWER] B", "[ANSWER] A [Expand]", "{\"answer\": 1}"};
  std::size_t sessions = 0, violations = 0, over_budget = 0;
  for (; sessions < 1200; ++sessions) {
    const auto state = oracle::random_graph(rng, 20 + sessions % 60);
    auto embedder = std::make_shared<scripted::HashEmbedder>(16);
    PyramidStore store(embedder);
    store.replace_state(state);
    const std::size_t mode = sessions % 4;
    auto assess_calls = std::make_shared<std::atomic<std::size_t>>(0);
    auto local_rng = std::make_shared<std::mt19937_64>(sessions);
    auto answerer = std::make_shared<scripted::FunctionAnswerer>([=, &replies](const AssessRequest&) -> std::string {
      ++*assess_calls;
      if (mode == 0) return "[Expand]";
      const auto pick = (*local_rng)() % replies.size();
      if (mode == 3 && pick == 0) throw std::runtime_error("flaky model");
      if (mode == 1) return replies[1 + pick % 2 + 1];  // malformed only
      return replies[pick];
    });
    auto pruner = std::make_shared<scripted::FunctionPruner>([=](const SelectionRequest& r) -> std::string {
      switch ((*local_rng)() % 5) {
        case 0: return "no list";
        case 1: throw std::runtime_error("pruner down");
        case 2: return "[]";
        default: {
          std::string out = "[";
          for (std::size_t i = 0; i < r.passages.size() + 2; ++i)
            if ((*local_rng)() % 2) out += std::to_string(i) + ", ";
          return out + "-1]";
        }
      }
    });
    ReasonerConfig rc;
    rc.k_seed = 1 + sessions % 5;
    rc.max_turns = 1 + sessions % 6;
    rc.traverse_undirected = sessions % 2 == 0;
    Reasoner r(store.snapshot(), embedder, pruner, answerer, rc);
    const auto result = r.answer(Query{oracle::random_text(rng, 2), {}, {}, {}});

    std::set<NodeId> seen;
    std::size_t last_size = 0;
    bool ok = true;
    for (const auto& t : result.trace) {
      for (const auto& id : t.pruned_in) {
        if (std::find(t.expanded.begin(), t.expanded.end(), id) == t.expanded.end()) ok = false;
        seen.insert(id);
      }
      if (t.context_size < last_size || t.context_size != seen.size()) ok = false;
      last_size = t.context_size;
    }
    if (std::set<NodeId>(result.context.begin(), result.context.end()) != seen) ok = false;
    if (!ok) ++violations;
    if (*assess_calls > rc.max_turns || result.turns_used != *assess_calls) ++over_budget;
  }
  std::ostringstream d;
  d << sessions << " sessions halted, " << violations << " monotonicity violations, " << over_budget
    << " budget overruns";
  return {violations == 0 && over_budget == 0, d.str()};
}

Outcome ablation_ordering() {
  const auto started = Clock::now();
  const auto table = bench::run_ablation(bench::generate_workload(bench::preset_workload("hop2")),
                                         bench::parse_variants("full,no-expand,no-global-link,plain-no-link"));
  const double full = table.row("full").accuracy, no_expand = table.row("no-expand").accuracy;
  const double hier = table.row("no-global-link").accuracy, plain = table.row("plain-no-link").accuracy;
  std::ostringstream d;
  d << "200 hop-2 tasks: full " << bench::fixed(full, 3) << " > no-expand " << bench::fixed(no_expand, 3)
    << "; hierarchical " << bench::fixed(hier, 3) << " > plain-no-link " << bench::fixed(plain, 3) << " ("
    << bench::fixed(seconds_since(started), 1) << " s)";
  return {full > no_expand && hier > plain, d.str()};
}

Outcome prune_blowup() {
  bench::BenchConfig config;
  config.delay_per_node = std::chrono::microseconds(1000);
  config.workers = 16;
  const auto table = bench::run_ablation(bench::generate_workload(bench::preset_workload("distractor-heavy")),
                                         bench::parse_variants("full,no-prune"), config);
  const auto& full = table.row("full");
  const auto& loose = table.row("no-prune");
  const double ratio = loose.mean_context_size / std::max(1e-9, full.mean_context_size);
  std::ostringstream d;
  d << "mean |C| " << bench::fixed(loose.mean_context_size, 1) << " vs " << bench::fixed(full.mean_context_size, 1)
    << " (" << bench::fixed(ratio, 2) << "x); mean latency " << bench::fixed(loose.latency.mean * 1000, 1) << " ms vs "
    << bench::fixed(full.latency.mean * 1000, 1) << " ms";
  return {ratio >= 2.0 && loose.latency.mean > full.latency.mean, d.str()};
}

Outcome identity_clustering() {
  std::mt19937_64 rng(1234);
  // Same-identity pairs clear the local threshold by 0.1; cross-identity pairs
  // stay well under the global threshold minus 0.1.
  const auto planted = oracle::planted_identities(rng, 4, 20, 16, kDefaultLocalThreshold + 0.1, 0.25);
  std::size_t perfect = 0;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> order(20);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    PyramidStore store(std::make_shared<scripted::HashEmbedder>(32));
    IngestAdapters adapters{std::make_shared<scripted::EventExtractor>(), std::make_shared<scripted::NullLinkJudge>(),
                            std::make_shared<scripted::ConcatUpdater>(), std::make_shared<scripted::AppendingProfiler>()};
    IngestPipeline(store, adapters).ingest(oracle::planted_stream(planted, order, 30.0));
    const auto score = oracle::score_identities(store.state(), 4);
    if (score.persons == 4 && score.bijective && score.correct == score.faces) ++perfect;
  }
  std::ostringstream d;
  d << perfect << "/20 arrival orders with exactly 4 persons and full accuracy (within >= "
    << bench::fixed(planted.min_within, 3) << ", across <= " << bench::fixed(planted.max_across, 3) << ")";
  return {perfect == 20, d.str()};
}

Outcome determinism() {
  const auto dir = fs::temp_directory_path() / ("pyramem-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ifstream in(std::string(PYRAMEM_SAMPLES_DIR) + "/demo_stream.ndjson");
  const auto events = read_event_stream(in);
  auto run = [&](const std::string& name) {
    auto set = make_adapter_set(EngineConfig{});
    PyramidStore store(set.embedder);
    IngestPipeline(store, set.ingest()).ingest(events);
    store.save(dir / (name + ".json"));
    Reasoner r(store.snapshot(), set.embedder, set.pruner, set.answerer);
    std::string answers;
    for (const char* q : {"what was inside the parcel", "who turned off the stove", "what did Tom say"})
      answers += to_json(r.answer(Query{q, {}, {}, {}})).dump() + "\n";
    std::ifstream s(dir / (name + ".json"), std::ios::binary);
    std::stringstream buf;
    buf << s.rdbuf();
    return std::make_pair(buf.str(), answers);
  };
  const auto a = run("a"), b = run("b");
  fs::remove_all(dir);
  const bool same = a.first == b.first && a.second == b.second;
  return {same, std::to_string(a.first.size()) + " snapshot bytes and " + std::to_string(a.second.size()) +
                    " answer bytes " + (same ? "identical" : "differ")};
}

Outcome percentiles() {
  std::vector<double> samples(100);
  std::iota(samples.begin(), samples.end(), 1.0);
  std::shuffle(samples.begin(), samples.end(), std::mt19937_64(5));
  const auto r = bench::latency_report(samples);
  std::ostringstream d;
  d << "p50=" << r.p50 << " p95=" << r.p95 << " mean=" << r.mean;
  return {r.p50 == 50.0 && r.p95 == 95.0 && r.mean == 50.5, d.str()};
}

Outcome parser_fixtures() {
  int failed = 0, total = 0;
  auto check = [&](bool ok) {
    ++total;
    if (!ok) ++failed;
  };
  const auto a = prompts::parse_verdict("Both passages agree on the colour. [ANSWER] C");
  check(a && a->is_answer() && a->answer_text() == "C");
  const auto e = prompts::parse_verdict("[Expand]");
  check(e && e->is_expand());
  check(!prompts::parse_verdict("no markers here"));
  check(prompts::parse_selection("[1, 3, 5]", 6) == std::vector<std::size_t>{1, 3, 5});
  check(prompts::parse_selection("[0, 0, 9]", 3) == std::vector<std::size_t>{0});
  check(!prompts::parse_selection("sorry", 6));
  return {failed == 0, std::to_string(total - failed) + "/" + std::to_string(total) + " fixtures"};
}

}  // namespace

int main() {
  log::set_threshold(log::Level::error);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"retrieval oracle equivalence", retrieval_oracle},
      {"expansion closure", expansion_closure},
      {"monotonicity and termination", monotone_termination},
      {"ablation ordering", ablation_ordering},
      {"no-prune context blowup", prune_blowup},
      {"identity clustering", identity_clustering},
      {"determinism", determinism},
      {"percentiles", percentiles},
      {"parser fixtures", parser_fixtures},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << name << ": " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
