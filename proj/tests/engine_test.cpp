#include <atomic>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "pyramem/pyramem.hpp"

using namespace pyramem;

namespace {

std::vector<TimedEvent> demo_events() {
  std::ifstream in(std::string(PYRAMEM_SAMPLES_DIR) + "/demo_stream.ndjson");
  return read_event_stream(in);
}

IngestAdapters scripted_ingest() {
  return {std::make_shared<scripted::EventExtractor>(), std::make_shared<scripted::KeywordLinkJudge>(),
          std::make_shared<scripted::ConcatUpdater>(), std::make_shared<scripted::AppendingProfiler>()};
}

// One fact per clip, texts "node i"; the seed text is distinctive so a
// single-seed retrieval lands on fact 0.
struct ChainFixture {
  std::shared_ptr<scripted::TableEmbedder> embedder = std::make_shared<scripted::TableEmbedder>(4);
  std::unique_ptr<PyramidStore> store;

  ChainFixture(std::size_t n, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
    embedder->set("where is the key", Embedding{1, 0, 0, 0});
    embedder->set("node 0", Embedding{1, 0, 0, 0});
    MemoryState s;
    for (std::size_t i = 0; i < n; ++i) {
      ClipNode c;
      c.id = make_clip_id(i);
      c.span = {i * 30.0, i * 30.0 + 30.0};
      c.summary = "clip " + std::to_string(i);
      embedder->set(c.summary, Embedding{0, 1, 0.1 * i, 0});
      FactNode f;
      f.id = make_fact_id(i);
      f.clip_id = c.id;
      f.span = {c.span.start, c.span.start + 1};
      f.text = "node " + std::to_string(i);
      if (i) embedder->set(f.text, Embedding{0, 0, 1, 0.1 * i});
      f.links.push_back(hier_link(c.id, LinkKind::hier_up, "part of clip"));
      c.fact_ids.push_back(f.id);
      s.facts.emplace(f.id, f);
      s.clips.emplace(c.id, c);
    }
    for (auto [a, b] : edges)
      s.facts.at(make_fact_id(a)).links.push_back({make_fact_id(b), "next", 0.5, LinkKind::relational});
    s.counters.next_fact = s.counters.next_clip = n;
    store = std::make_unique<PyramidStore>(embedder);
    store->replace_state(std::move(s));
  }

  Reasoner reasoner(std::shared_ptr<const Answerer> answerer, ReasonerConfig config = {},
                    std::shared_ptr<const Pruner> pruner = std::make_shared<scripted::IdentityPruner>()) {
    config.k_seed = 1;
    return Reasoner(store->snapshot(), embedder, std::move(pruner), std::move(answerer), config);
  }
};

std::shared_ptr<const Answerer> always_expand() {
  return std::make_shared<scripted::FunctionAnswerer>([](const AssessRequest&) { return std::string("[Expand]"); });
}

}  // namespace

// ---------------------------------------------------------------------------
// Identity bank

TEST(Identity, SingleLinkageChains) {
  std::vector<Embedding> faces{Embedding{1, 0, 0}, Embedding{0.8, 0.6, 0}, Embedding{0.3, 0.95, 0},
                               Embedding{0, 0, 1}};
  const auto clusters = cluster_local(faces, 0.75);
  ASSERT_EQ(clusters.size(), 2u);
  EXPECT_EQ(clusters[0].member_indices, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(clusters[1].member_indices, (std::vector<std::size_t>{3}));
  EXPECT_NEAR(clusters[0].centroid.norm(), 1.0, 1e-12);
  EXPECT_THROW(cluster_local(faces, 1.0), InvalidArgumentError);
}

TEST(Identity, MergeUsesWeightedCentroid) {
  IdentityBank bank;
  auto first = bank.merge_global(cluster_local(std::vector<Embedding>{Embedding{1, 0}}), 0.5);
  ASSERT_TRUE(first[0].created);
  EXPECT_EQ(first[0].person_id, "p-1");
  auto again = bank.merge_global(cluster_local(std::vector<Embedding>{Embedding{0.8, 0.6}}), 0.5);
  EXPECT_FALSE(again[0].created);
  const auto& p = bank.person("p-1");
  EXPECT_EQ(p.observation_count, 2u);
  const auto expected = Embedding{1.8, 0.6}.normalized();
  EXPECT_NEAR(p.face_centroid[0], expected[0], 1e-12);
  auto other = bank.merge_global(cluster_local(std::vector<Embedding>{Embedding{0, 1}}), 0.9);
  EXPECT_TRUE(other[0].created);
  EXPECT_EQ(bank.size(), 2u);
}

TEST(Identity, TiesGoToTheOlderPerson) {
  IdentityBank bank;
  bank.merge_global(cluster_local(std::vector<Embedding>{Embedding{1, 0}}), 0.9);
  bank.merge_global(cluster_local(std::vector<Embedding>{Embedding{0, 1}}), 0.9);
  const auto a = bank.merge_global(cluster_local(std::vector<Embedding>{Embedding{1, 1}}), 0.5);
  EXPECT_EQ(a[0].person_id, "p-1");
}

TEST(Identity, ProfileFailureLeavesPersonUnchanged) {
  IdentityBank bank;
  bank.merge_global(cluster_local(std::vector<Embedding>{Embedding{1, 0}}), 0.5);
  scripted::FunctionProfiler broken([](const PersonId&, std::string_view, std::span<const std::string>) -> std::string {
    throw std::runtime_error("offline");
  });
  const std::vector<std::string> facts{"waves"};
  EXPECT_THROW(bank.update_profile("p-1", facts, broken), AdapterError);
  EXPECT_TRUE(bank.person("p-1").profile.empty());
  EXPECT_THROW(bank.update_profile("p-7", facts, scripted::AppendingProfiler{}), NotFoundError);
  const std::vector<NodeId> ev{make_fact_id(3), make_fact_id(3)};
  bank.update_profile("p-1", facts, scripted::AppendingProfiler{}, ev);
  EXPECT_EQ(bank.person("p-1").profile, "waves");
  EXPECT_EQ(bank.person("p-1").evidence.size(), 1u);
}

TEST(Identity, PlantedIdentitiesRecovered) {
  std::mt19937_64 rng(21);
  const auto planted = oracle::planted_identities(rng, 4, 20, 16, 0.7, 0.25);
  std::vector<std::size_t> order(20);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  PyramidStore store(std::make_shared<scripted::HashEmbedder>(32));
  IngestPipeline(store, scripted_ingest()).ingest(oracle::planted_stream(planted, order, 30.0));
  const auto score = oracle::score_identities(store.state(), 4);
  EXPECT_EQ(score.persons, 4u);
  EXPECT_TRUE(score.bijective);
  EXPECT_EQ(score.correct, score.faces);
  EXPECT_TRUE(validate(store.state()).empty());
}

// ---------------------------------------------------------------------------
// Ingest

TEST(Ingest, DemoStreamBuildsValidPyramid) {
  PyramidStore store(std::make_shared<scripted::HashEmbedder>(64));
  const auto report = IngestPipeline(store, scripted_ingest()).ingest(demo_events());
  EXPECT_EQ(report.clips_added, 4u);
  EXPECT_EQ(report.facts_added, 15u);
  EXPECT_EQ(report.persons_created, 2u);
  EXPECT_GT(report.relational_links, 0u);
  const auto s = store.state();
  EXPECT_TRUE(validate(s).empty());
  EXPECT_EQ(s.global.clips_integrated, 4u);
  for (const auto& [id, f] : s.facts)
    if (f.text.rfind("Maya", 0) == 0) {
      ASSERT_TRUE(f.character_text);
      EXPECT_NE(f.character_text->find("<p-"), std::string::npos);
    }
}

TEST(Ingest, ResumeMatchesSingleRun) {
  const auto events = demo_events();
  PyramidStore whole(std::make_shared<scripted::HashEmbedder>(64));
  IngestConfig ic;
  ic.parallel_links = false;
  IngestPipeline(whole, scripted_ingest(), ic).ingest(events);

  PyramidStore split(std::make_shared<scripted::HashEmbedder>(64));
  std::vector<TimedEvent> head, tail;
  for (const auto& e : events) (e.t < 60.0 ? head : tail).push_back(e);
  IngestPipeline(split, scripted_ingest(), ic).ingest(head);
  EXPECT_EQ(split.counters().next_window, 2u);
  IngestPipeline(split, scripted_ingest(), ic).ingest(tail);
  // Only the span end of the clip closed by the first finish() differs.
  auto a = whole.state(), b = split.state();
  EXPECT_DOUBLE_EQ(b.clips.at(make_clip_id(2)).span.end, 55.0);
  b.clips.at(make_clip_id(2)).span.end = 60.0;
  EXPECT_EQ(snapshot_to_json(b), snapshot_to_json(a));
}

TEST(Ingest, EventsBeforeTheCursorAreSkipped) {
  PyramidStore store(std::make_shared<scripted::HashEmbedder>(64));
  const auto events = demo_events();
  IngestPipeline(store, scripted_ingest()).ingest(events);
  const auto before = store.dump();
  const auto again = IngestPipeline(store, scripted_ingest()).ingest(events);
  EXPECT_EQ(again.clips_added, 0u);
  EXPECT_EQ(again.events_skipped, events.size());
  EXPECT_EQ(store.dump(), before);
}

TEST(Ingest, ExtractorFailureCommitsNothing) {
  PyramidStore store(std::make_shared<scripted::HashEmbedder>(64));
  auto adapters = scripted_ingest();
  adapters.extractor = std::make_shared<scripted::FunctionExtractor>(
      [](const ClipObservation&) -> ExtractionResult { throw std::runtime_error("vision offline"); });
  EXPECT_THROW(IngestPipeline(store, adapters).ingest(demo_events()), AdapterError);
  EXPECT_EQ(store.fact_count(), 0u);
  EXPECT_EQ(store.counters().next_window, 0u);
}

TEST(Ingest, EmptyExtractionAndUpdaterFailureWarn) {
  PyramidStore store(std::make_shared<scripted::HashEmbedder>(64));
  auto adapters = scripted_ingest();
  std::atomic<int> calls{0};
  adapters.extractor = std::make_shared<scripted::FunctionExtractor>([&](const ClipObservation& c) {
    return calls++ == 0 ? ExtractionResult{} : scripted::EventExtractor{}.extract(c);
  });
  adapters.updater = std::make_shared<scripted::FunctionUpdater>(
      [](std::string_view, std::string_view) -> std::string { throw std::runtime_error("busy"); });
  const auto report = IngestPipeline(store, adapters).ingest(demo_events());
  EXPECT_EQ(report.clips_skipped, 1u);
  EXPECT_EQ(report.clips_added, 3u);
  EXPECT_GE(report.warnings.size(), 4u);
  EXPECT_EQ(store.global().version, 0u);
  EXPECT_TRUE(validate(store.state()).empty());
}

// ---------------------------------------------------------------------------
// Reasoner

TEST(Reasoner, EmptyStoreEndsWithMaxTurns) {
  PyramidStore store(std::make_shared<scripted::HashEmbedder>(16));
  Reasoner r(store.snapshot(), std::make_shared<scripted::HashEmbedder>(16),
             std::make_shared<scripted::IdentityPruner>(), always_expand());
  const auto result = r.answer(Query{"anything", {}, {}, {}});
  EXPECT_EQ(result.terminated_by, Termination::max_turns);
  EXPECT_TRUE(result.context.empty());
  EXPECT_EQ(result.turns_used, 0u);
  EXPECT_FALSE(result.answer);
}

TEST(Reasoner, TwoHopEvidenceAnswersAtTurnTwo) {
  ChainFixture fx(5, {{0, 1}, {1, 2}, {2, 3}});
  auto oracle_answerer = std::make_shared<scripted::OracleAnswerer>(std::set<NodeId>{make_fact_id(2)}, "under the mat");
  ReasonerConfig rc;
  rc.max_turns = 3;
  rc.use_hierarchy = false;
  const auto result = fx.reasoner(oracle_answerer, rc).answer(Query{"where is the key", {}, {}, {}});
  EXPECT_EQ(result.terminated_by, Termination::sufficient);
  ASSERT_TRUE(result.answer);
  EXPECT_EQ(*result.answer, "under the mat");
  ASSERT_EQ(result.trace.size(), 3u);
  EXPECT_EQ(result.trace.back().turn, 2u);
  EXPECT_EQ(result.turns_used, 3u);
  EXPECT_EQ(result.context, (std::vector<NodeId>{make_fact_id(0), make_fact_id(1), make_fact_id(2)}));
}

TEST(Reasoner, UnreachableEvidenceRunsOut) {
  ChainFixture fx(8, {{0, 1}, {1, 2}, {2, 3}, {3, 4}});
  auto oracle_answerer = std::make_shared<scripted::OracleAnswerer>(std::set<NodeId>{make_fact_id(7)}, "x");
  ReasonerConfig rc;
  rc.max_turns = 3;
  rc.use_hierarchy = false;
  const auto result = fx.reasoner(oracle_answerer, rc).answer(Query{"where is the key", {}, {}, {}});
  EXPECT_EQ(result.terminated_by, Termination::max_turns);
  EXPECT_FALSE(result.answer);
  EXPECT_FALSE(result.saturated);
  EXPECT_EQ(result.turns_used, 3u);
  // Final expansion is merged without being assessed.
  EXPECT_EQ(result.context.size(), 4u);
  EXPECT_FALSE(result.trace.back().verdict);
}

TEST(Reasoner, SaturationReportsMaxTurns) {
  ChainFixture fx(3, {{0, 1}});
  ReasonerConfig rc;
  rc.max_turns = 5;
  rc.use_hierarchy = false;
  const auto result = fx.reasoner(always_expand(), rc).answer(Query{"where is the key", {}, {}, {}});
  EXPECT_EQ(result.terminated_by, Termination::max_turns);
  EXPECT_TRUE(result.saturated);
  EXPECT_EQ(result.turns_used, 2u);
}

TEST(Reasoner, HierarchyReachesParentThenSiblings) {
  ChainFixture fx(2, {});
  ReasonerConfig rc;
  rc.max_turns = 2;
  const auto result = fx.reasoner(always_expand(), rc).answer(Query{"where is the key", {}, {}, {}});
  EXPECT_EQ(result.context, (std::vector<NodeId>{make_fact_id(0), make_clip_id(0)}));
  EXPECT_TRUE(result.saturated);
}

TEST(Reasoner, PrunerFailureKeepsEverything) {
  ChainFixture fx(4, {{0, 1}, {0, 2}});
  auto pruner = std::make_shared<scripted::FunctionPruner>([](const SelectionRequest& r) -> std::string {
    if (r.passages.size() > 1) throw std::runtime_error("timeout");
    return "no list at all";
  });
  ReasonerConfig rc;
  rc.max_turns = 1;
  rc.use_hierarchy = false;
  const auto result = fx.reasoner(always_expand(), rc, pruner).answer(Query{"where is the key", {}, {}, {}});
  EXPECT_EQ(result.context.size(), 3u);
  ASSERT_EQ(result.trace.size(), 2u);
  EXPECT_EQ(result.trace[0].warnings.size(), 1u);
  EXPECT_EQ(result.trace[1].warnings.size(), 1u);
  EXPECT_EQ(result.warnings.size(), 2u);
}

TEST(Reasoner, PrunerSelectionKeepsCandidateOrder) {
  ChainFixture fx(4, {{0, 1}, {0, 2}, {0, 3}});
  auto pruner = std::make_shared<scripted::FunctionPruner>([](const SelectionRequest& r) {
    return r.passages.size() == 3 ? std::string("[2, 0, 0, 17]") : std::string("[0]");
  });
  ReasonerConfig rc;
  rc.max_turns = 1;
  rc.use_hierarchy = false;
  const auto result = fx.reasoner(always_expand(), rc, pruner).answer(Query{"where is the key", {}, {}, {}});
  EXPECT_EQ(result.trace[1].pruned_in, (std::vector<NodeId>{make_fact_id(1), make_fact_id(3)}));
}

TEST(Reasoner, MalformedVerdictIsExpandWithWarning) {
  ChainFixture fx(3, {{0, 1}});
  auto sorry = std::make_shared<scripted::FunctionAnswerer>([](const AssessRequest&) { return std::string("sorry"); });
  ReasonerConfig rc;
  rc.max_turns = 1;
  rc.use_hierarchy = false;
  const auto result = fx.reasoner(sorry, rc).answer(Query{"where is the key", {}, {}, {}});
  EXPECT_EQ(result.terminated_by, Termination::max_turns);
  EXPECT_EQ(result.context.size(), 2u);
  EXPECT_EQ(result.warnings.size(), 1u);
}

TEST(Reasoner, AnswererFailureIsAdapterError) {
  ChainFixture fx(3, {{0, 1}});
  auto broken = std::make_shared<scripted::FunctionAnswerer>([](const AssessRequest&) -> std::string {
    throw AdapterError("503 from model");
  });
  const auto result = fx.reasoner(broken).answer(Query{"where is the key", {}, {}, {}});
  EXPECT_EQ(result.terminated_by, Termination::adapter_error);
  ASSERT_TRUE(result.error);
  EXPECT_NE(result.error->find("503"), std::string::npos);
  EXPECT_EQ(to_json(result)["terminated_by"], "adapter_error");
}

TEST(Reasoner, GlobalSummaryAndProfilesReachTheAnswerer) {
  PyramidStore store(std::make_shared<scripted::HashEmbedder>(64));
  IngestPipeline(store, scripted_ingest()).ingest(demo_events());
  std::vector<AssessRequest> seen;
  std::mutex m;
  auto spy = std::make_shared<scripted::FunctionAnswerer>([&](const AssessRequest& r) {
    std::lock_guard lock(m);
    seen.push_back(r);
    return std::string("[ANSWER] A");
  });
  auto embedder = std::make_shared<scripted::HashEmbedder>(64);
  ReasonerConfig with;
  Reasoner(store.snapshot(), embedder, std::make_shared<scripted::IdentityPruner>(), spy, with)
      .answer(Query{"what did Maya do with the kettle", {"A", "B"}, {}, {}});
  ReasonerConfig without;
  without.include_global = false;
  Reasoner(store.snapshot(), embedder, std::make_shared<scripted::IdentityPruner>(), spy, without)
      .answer(Query{"what did Maya do with the kettle", {}, {}, {}});
  ASSERT_EQ(seen.size(), 2u);
  EXPECT_EQ(seen[0].context_summary, store.global().summary);
  EXPECT_FALSE(seen[0].profiles.empty());
  EXPECT_EQ(seen[0].options.size(), 2u);
  EXPECT_TRUE(seen[1].context_summary.empty());
}

TEST(Reasoner, ExpansionMatchesBfsClosure) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 12; ++trial) {
    const auto state = oracle::random_graph(rng, 120);
    auto embedder = std::make_shared<scripted::HashEmbedder>(32);
    PyramidStore store(embedder);
    store.replace_state(state);
    ReasonerConfig rc;
    rc.k_seed = 3;
    rc.max_turns = 1 + trial % 4;
    rc.use_hierarchy = trial % 3 != 1;
    rc.use_relational = trial % 3 != 2;
    rc.traverse_undirected = trial % 2 == 0;
    Reasoner r(store.snapshot(), embedder, std::make_shared<scripted::IdentityPruner>(), always_expand(), rc);
    const auto question = oracle::random_text(rng, 2);
    const auto seeds = r.seed_retrieve(question, rc.k_seed);
    const auto result = r.answer(Query{question, {}, {}, {}});
    const auto want = oracle::bfs_closure(state, seeds, rc.max_turns,
                                          {rc.use_hierarchy, rc.use_relational, rc.traverse_undirected});
    EXPECT_EQ(std::set<NodeId>(result.context.begin(), result.context.end()), want) << "trial " << trial;
    EXPECT_LE(result.turns_used, rc.max_turns);
  }
}

TEST(Reasoner, JsonIsStableAcrossRuns) {
  PyramidStore store(std::make_shared<scripted::HashEmbedder>(64));
  IngestPipeline(store, scripted_ingest()).ingest(demo_events());
  auto run = [&] {
    Reasoner r(store.snapshot(), std::make_shared<scripted::HashEmbedder>(64), std::make_shared<scripted::KeywordPruner>(),
               std::make_shared<scripted::OverlapAnswerer>());
    return to_json(r.answer(Query{"who signed for the parcel", {}, {}, {}})).dump();
  };
  const auto first = run();
  EXPECT_EQ(first, run());
  EXPECT_EQ(first.find("elapsed_ms"), std::string::npos);
}

// ---------------------------------------------------------------------------
// Config

TEST(Config, MissingKeysKeepDefaults) {
  const auto c = engine_config_from_json(Json{{"clip_len", 10.0}});
  EXPECT_DOUBLE_EQ(c.clip_len, 10.0);
  EXPECT_EQ(c.k_seed, 20u);
  EXPECT_EQ(c.max_turns, 3u);
  const auto round = engine_config_from_json(Json(c));
  EXPECT_EQ(Json(round), Json(c));
}

TEST(Config, BadValuesAreRejected) {
  try {
    engine_config_from_json(Json{{"k_seed", "many"}});
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.field(), "k_seed");
  }
  EXPECT_THROW(engine_config_from_json(Json{{"max_turns", 0}}), InvalidArgumentError);
  EXPECT_THROW(engine_config_from_json(Json{{"theta_local", 1.5}}), InvalidArgumentError);
  EXPECT_THROW(engine_config_from_json(Json{{"adapters", {{"oracle", Json::object()}}}}), InvalidArgumentError);
  EXPECT_THROW(engine_config_from_json(Json{{"adapters", {{"answerer", {{"kind", "remote"}}}}}}),
               InvalidArgumentError);
}

TEST(Config, EnvironmentOverrides) {
  std::map<std::string, std::string> env{{"PYRAMEM_CLIP_LEN", "12.5"},
                                         {"PYRAMEM_MAX_TURNS", "5"},
                                         {"PYRAMEM_ENDPOINT", "http://models:9000/v1"},
                                         {"PYRAMEM_ANSWERER_ENDPOINT", "http://big:9000/v1"}};
  auto lookup = [&](const std::string& k) -> std::optional<std::string> {
    auto it = env.find(k);
    if (it == env.end()) return std::nullopt;
    return it->second;
  };
  const auto c = apply_env_overrides(EngineConfig{}, lookup);
  EXPECT_DOUBLE_EQ(c.clip_len, 12.5);
  EXPECT_EQ(c.max_turns, 5u);
  EXPECT_EQ(c.adapter("answerer").endpoint, "http://big:9000/v1");
  EXPECT_EQ(c.adapter("pruner").endpoint, "http://models:9000/v1");
  EXPECT_EQ(c.adapter("pruner").kind, AdapterKind::remote);
  env["PYRAMEM_K_SEED"] = "lots";
  EXPECT_THROW(apply_env_overrides(EngineConfig{}, lookup), InvalidArgumentError);
}
