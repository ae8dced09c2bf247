#include <gtest/gtest.h>

#include <random>

#include "segmem/error.hpp"
#include "segmem/evalkit.hpp"
#include "segmem/modelgate.hpp"
#include "segmem/segmentation.hpp"

using namespace segmem;
using nlohmann::json;

namespace {

const char* kTwoSegmentOutput =
    "<segmentation>{\"segment_id\": 0, \"start_exchange_number\": 0, \"end_exchange_number\": 5, "
    "\"num_exchanges\": 6}\n{\"segment_id\": 1, \"start_exchange_number\": 6, "
    "\"end_exchange_number\": 8, \"num_exchanges\": 3}</segmentation>";

Session make_session(std::size_t n, const std::string& tag = "t") {
  Session s{"s", {}};
  for (std::size_t i = 0; i < n; ++i)
    s.turns.push_back({i, tag + " user " + std::to_string(i), tag + " agent " + std::to_string(i)});
  return s;
}

std::unique_ptr<Gateway> mock_gateway(json script, std::shared_ptr<MockBackend>* out = nullptr) {
  auto backend = std::make_shared<MockBackend>(std::move(script));
  if (out) *out = backend;
  GatewayOptions opts;
  opts.sleep = [](std::chrono::milliseconds) {};
  return std::make_unique<Gateway>(backend, opts);
}

std::vector<std::pair<std::size_t, std::size_t>> ranges(const Segmentation& s) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& sp : s.spans()) out.emplace_back(sp.start, sp.end);
  return out;
}

}  // namespace

TEST(Render, SingleTurnFormat) {
  Session s{"s", {{0, "hi", "hello"}}};
  EXPECT_EQ(render_session(s), "Turn 0:\n[user]: hi\n[agent]: hello");
}

TEST(Render, TwoTurnsOneBlankLine) {
  Session s{"s", {{0, "a", "b"}, {1, "c", "d"}}};
  EXPECT_EQ(render_session(s), "Turn 0:\n[user]: a\n[agent]: b\n\nTurn 1:\n[user]: c\n[agent]: d");
}

TEST(Prompts, ContainRequiredMarkers) {
  auto zs = zero_shot_prompt("Turn 0:\n[user]: a\n[agent]: b");
  EXPECT_NE(zs.find("<segmentation></segmentation>"), std::string::npos);
  EXPECT_NE(zs.find("Turn 0:"), std::string::npos);
  EXPECT_EQ(zs.find("Segment Rubric"), std::string::npos);
  Rubric r;
  r.items = {"keep greetings with the first topic"};
  auto rp = rubric_prompt("Turn 0:", r);
  EXPECT_NE(rp.find("Segment Rubric"), std::string::npos);
  EXPECT_NE(rp.find("- keep greetings with the first topic"), std::string::npos);
}

TEST(Parse, TwoSegmentExample) {
  auto spans = parse_segmentation(kTwoSegmentOutput, 9);
  ASSERT_EQ(spans.size(), 2u);
  EXPECT_EQ(spans[0].start, 0u);
  EXPECT_EQ(spans[0].end, 5u);
  EXPECT_EQ(spans[1].start, 6u);
  EXPECT_EQ(spans[1].end, 8u);
}

TEST(Parse, SingleLineCoveringAll) {
  auto spans = parse_segmentation(
      R"({"segment_id": 0, "start_exchange_number": 0, "end_exchange_number": 4, "num_exchanges": 5})", 5);
  ASSERT_EQ(spans.size(), 1u);
  EXPECT_EQ(spans[0].end, 4u);
}

TEST(Parse, ProseIsFormatError) {
  EXPECT_THROW(parse_segmentation("I think there are two topics here.", 4), FormatError);
}

TEST(Parse, MissingKeyNamesLine) {
  try {
    parse_segmentation("<segmentation>{\"segment_id\": 0, \"start_exchange_number\": 0}</segmentation>", 3);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("line"), std::string::npos);
  }
}

TEST(Repair, ValidUnchanged) {
  auto r = validate_repair({{0, 0, 5, 6}, {1, 6, 8, 3}}, 9);
  EXPECT_TRUE(r.log.empty());
  EXPECT_EQ(ranges(r.segmentation), (std::vector<std::pair<std::size_t, std::size_t>>{{0, 5}, {6, 8}}));
}

TEST(Repair, GapFilledByExtension) {
  auto r = validate_repair({{0, 0, 4, 5}, {1, 6, 8, 3}}, 9);
  EXPECT_EQ(ranges(r.segmentation), (std::vector<std::pair<std::size_t, std::size_t>>{{0, 5}, {6, 8}}));
  EXPECT_EQ(r.log.size(), 1u);
  EXPECT_NO_THROW(check_invariants(r.segmentation.spans(), 9));
}

TEST(Repair, SingleInteriorSpanExpanded) {
  auto r = validate_repair({{0, 2, 5, 4}}, 9);
  EXPECT_EQ(ranges(r.segmentation), (std::vector<std::pair<std::size_t, std::size_t>>{{0, 8}}));
  EXPECT_FALSE(r.log.empty());
}

TEST(Repair, EmptyRejected) { EXPECT_THROW(validate_repair({}, 4), std::invalid_argument); }

TEST(Repair, RandomSpansSatisfyInvariantsAndIdempotent) {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 300; ++trial) {
    std::size_t n = 1 + rng() % 20;
    std::vector<SegmentSpan> spans;
    std::size_t k = 1 + rng() % 6;
    for (std::size_t i = 0; i < k; ++i)
      spans.push_back({rng() % 5, rng() % (n + 4), rng() % (n + 4), rng() % 9});
    auto r = validate_repair(spans, n);
    ASSERT_NO_THROW(check_invariants(r.segmentation.spans(), n));
    auto again = validate_repair(r.segmentation.spans(), n);
    EXPECT_EQ(again.segmentation, r.segmentation);
    EXPECT_TRUE(again.log.empty());
  }
}

TEST(SegmentationType, ConstructorsAgree) {
  auto a = Segmentation::from_ends({2, 5, 7}, 8);
  auto b = Segmentation::from_boundaries({2, 5}, 8);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.boundaries(), (std::vector<std::size_t>{2, 5}));
  EXPECT_EQ(a.labels(), (std::vector<std::size_t>{0, 0, 0, 1, 1, 1, 2, 2}));
  EXPECT_THROW(Segmentation({{0, 0, 2, 3}}, 5), InvariantError);
  EXPECT_THROW(Segmentation({{0, 0, 2, 2}}, 3), InvariantError);
}

TEST(Fallback, DisjointHalvesSplitAtMidpoint) {
  Session s{"s", {}};
  for (std::size_t i = 0; i < 4; ++i) s.turns.push_back({i, "apple banana cherry", "apple fruit"});
  for (std::size_t i = 4; i < 8; ++i) s.turns.push_back({i, "engine wheel brake", "engine car"});
  // Brute-force cohesion: only the gap between turns 3 and 4 has zero overlap.
  auto coh = gap_cohesion(s, 1);
  ASSERT_EQ(coh.size(), 7u);
  for (std::size_t g = 0; g < 7; ++g) {
    if (g == 3)
      EXPECT_DOUBLE_EQ(coh[g], 0.0);
    else
      EXPECT_NEAR(coh[g], 1.0, 1e-12);
  }
  auto seg = fallback_segment(s, {1, 0.0, 1});
  EXPECT_EQ(seg.boundaries(), (std::vector<std::size_t>{3}));
}

TEST(Fallback, IdenticalTurnsSingleSegment) {
  Session s{"s", {}};
  for (std::size_t i = 0; i < 6; ++i) s.turns.push_back({i, "same words", "same reply"});
  EXPECT_EQ(fallback_segment(s).size(), 1u);
}

TEST(Segmenter, ScriptedTwoSegmentOutput) {
  auto gw = mock_gateway({{"chat", {{{"contains", "<segmentation></segmentation>"}, {"response", kTwoSegmentOutput}}}}});
  Segmenter seg(gw.get());
  auto out = seg.segment_zero_shot(make_session(9));
  EXPECT_EQ(out.provenance, Provenance::model);
  EXPECT_EQ(ranges(out.segmentation), (std::vector<std::pair<std::size_t, std::size_t>>{{0, 5}, {6, 8}}));
}

TEST(Segmenter, GarbageFallsBack) {
  auto gw = mock_gateway({{"chat", {{{"contains", "Turn"}, {"response", "no idea"}}}}});
  Segmenter seg(gw.get());
  auto out = seg.segment_zero_shot(make_session(6));
  EXPECT_EQ(out.provenance, Provenance::fallback);
  EXPECT_TRUE(out.error.has_value());
  EXPECT_EQ(out.model_calls, 3u);
  EXPECT_NO_THROW(check_invariants(out.segmentation.spans(), 6));
}

TEST(Segmenter, GarbageThrowsWithoutFallback) {
  auto gw = mock_gateway({{"chat", {{{"contains", "Turn"}, {"response", "no idea"}}}}});
  SegmenterConfig cfg;
  cfg.fallback_on_error = false;
  Segmenter seg(gw.get(), cfg);
  EXPECT_THROW(seg.segment_zero_shot(make_session(6)), FormatError);
}

TEST(Segmenter, OneTurnNeedsNoModel) {
  std::shared_ptr<MockBackend> backend;
  auto gw = mock_gateway({{"chat", json::array()}}, &backend);
  Segmenter seg(gw.get());
  auto out = seg.segment_zero_shot(make_session(1));
  EXPECT_EQ(out.provenance, Provenance::forced);
  EXPECT_EQ(ranges(out.segmentation), (std::vector<std::pair<std::size_t, std::size_t>>{{0, 0}}));
  EXPECT_EQ(backend->call_count("chat"), 0u);
}

TEST(Segmenter, RubricPromptRoutedByMatcher) {
  // Only rubric prompts get the valid answer; zero-shot prompts get garbage.
  auto gw = mock_gateway({{"chat",
                           {{{"contains", "Segment Rubric"}, {"response", kTwoSegmentOutput}},
                            {{"contains", "<segmentation>"}, {"response", "garbage"}}}}});
  Segmenter seg(gw.get());
  Rubric empty;
  auto out = seg.segment_with_rubric(make_session(9), empty);
  EXPECT_EQ(out.provenance, Provenance::model);
  EXPECT_EQ(out.segmentation.size(), 2u);
  EXPECT_EQ(seg.segment_zero_shot(make_session(9)).provenance, Provenance::fallback);
}

TEST(Segmenter, OverlappingOutputRepaired) {
  auto gw = mock_gateway(
      {{"chat",
        {{{"contains", "Turn"},
          {"response",
           "<segmentation>{\"segment_id\":0,\"start_exchange_number\":0,\"end_exchange_number\":4,"
           "\"num_exchanges\":5}\n{\"segment_id\":1,\"start_exchange_number\":3,"
           "\"end_exchange_number\":5,\"num_exchanges\":3}</segmentation>"}}}}});
  Segmenter seg(gw.get());
  auto out = seg.segment_zero_shot(make_session(6));
  EXPECT_EQ(out.provenance, Provenance::repaired);
  EXPECT_FALSE(out.repair_log.empty());
  EXPECT_NO_THROW(check_invariants(out.segmentation.spans(), 6));
}

TEST(HardExamples, SelectionOrder) {
  // WD values 0.1, 0.8, 0.3 built from real segmentations.
  auto make = [](std::vector<std::size_t> gold, std::vector<std::size_t> pred, std::size_t n) {
    return SegmentedPair{make_session(n), Segmentation::from_boundaries(gold, n),
                         Segmentation::from_boundaries(pred, n)};
  };
  std::vector<SegmentedPair> pairs = {make({4}, {4}, 10), make({4}, {}, 10), make({4}, {5}, 10)};
  auto wd = [&](std::size_t i) { return window_diff(pairs[i].gold, pairs[i].predicted); };
  ASSERT_LT(wd(0), wd(2));
  ASSERT_LT(wd(2), wd(1));
  auto top = select_hard_examples(pairs, 1);
  ASSERT_EQ(top.size(), 1u);
  EXPECT_DOUBLE_EQ(top[0].wd, wd(1));
  auto all = select_hard_examples(pairs, 10);
  ASSERT_EQ(all.size(), 3u);
  EXPECT_GE(all[0].wd, all[1].wd);
  EXPECT_GE(all[1].wd, all[2].wd);
  EXPECT_THROW(select_hard_examples(pairs, 0), std::invalid_argument);
}

TEST(HardExamples, TiesKeepInputOrder) {
  std::vector<SegmentedPair> pairs;
  for (std::size_t i = 0; i < 4; ++i)
    pairs.push_back({make_session(6, "p" + std::to_string(i)), Segmentation::single(6),
                     Segmentation::single(6)});
  auto top = select_hard_examples(pairs, 4);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(top[i].session.turns[0].user, pairs[i].session.turns[0].user);
}

namespace {

std::vector<SegGoldSession> synthetic_train(std::size_t n) {
  std::vector<SegGoldSession> out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({"d" + std::to_string(i), make_session(6, "d" + std::to_string(i)), {2, 5}});
  return out;
}

json reflection_script(const std::string& reply) {
  return {{"chat",
           {{{"contains", "# Existing Rubric:"}, {"response", reply}},
            {{"contains", "<segmentation></segmentation>"},
             {"response",
              "<segmentation>{\"segment_id\":0,\"start_exchange_number\":0,"
              "\"end_exchange_number\":5,\"num_exchanges\":6}</segmentation>"}}}}};
}

}  // namespace

TEST(LearnRubric, TenBatchesTenItems) {
  std::shared_ptr<MockBackend> backend;
  auto gw = mock_gateway(reflection_script("<rubric>- item</rubric><example>ex</example>"), &backend);
  RubricLearningLog log;
  auto rubric = learn_rubric(synthetic_train(100), *gw, {}, {100, 10}, &log);
  EXPECT_EQ(log.reflection_calls, 10u);
  EXPECT_EQ(rubric.items.size(), 10u);
  EXPECT_EQ(rubric.examples.size(), 10u);
  EXPECT_TRUE(log.skipped.empty());
}

TEST(LearnRubric, TwelveBatchesCapAtTen) {
  // Distinct replies per batch via a responses list so eviction order is observable.
  json replies = json::array();
  for (int i = 0; i < 12; ++i) replies.push_back("<rubric>- item " + std::to_string(i) + "</rubric>");
  json script = reflection_script("");
  script["chat"][0].erase("response");
  script["chat"][0]["responses"] = replies;
  auto gw = mock_gateway(script);
  auto rubric = learn_rubric(synthetic_train(24), *gw, {}, {24, 12});
  ASSERT_EQ(rubric.items.size(), 10u);
  EXPECT_EQ(rubric.items.front(), "item 2");
  EXPECT_EQ(rubric.items.back(), "item 11");
}

TEST(LearnRubric, MissingTagSkipsAndAllSkippedThrows) {
  auto gw = mock_gateway(reflection_script("I have no rubric to offer."));
  EXPECT_THROW(learn_rubric(synthetic_train(10), *gw, {}, {10, 2}), std::runtime_error);
}

TEST(RubricType, AddItemEvictsOldest) {
  Rubric r;
  for (int i = 0; i < 12; ++i) r.add_item("i" + std::to_string(i));
  EXPECT_EQ(r.items.size(), 10u);
  EXPECT_EQ(r.items.front(), "i2");
  auto back = Rubric::from_json(r.to_json());
  EXPECT_EQ(back.items, r.items);
}
