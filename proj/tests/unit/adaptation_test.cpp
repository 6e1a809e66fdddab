#include <gtest/gtest.h>

#include "socialveil/adaptation.hpp"
#include "socialveil/text.hpp"
#include "test_support.hpp"

using namespace socialveil;
using namespace testing_support;

namespace {

EvaluationReport scored(const std::string& id, int goal, int mutual, int confusion = 3) {
  EvaluationReport r;
  r.episode_id = id;
  r.social.partner_agent.goal_completion.score = goal;
  r.barrier_aware.mutual_understanding.score = mutual;
  r.barrier_aware.unresolved_confusion.score = confusion;
  return r;
}

}  // namespace

TEST(Repair, Fragment) {
  EXPECT_FALSE(repair_fragment("  \n").has_value());
  auto f = repair_fragment(builtin_repair_text());
  ASSERT_TRUE(f.has_value());
  EXPECT_EQ(f->provenance(), Provenance::kRepair);
  std::vector<std::string> warnings;
  EXPECT_EQ(apply_repair_instruction("p", "", &warnings), "p");
  EXPECT_EQ(warnings.size(), 1u);
  std::string once = apply_repair_instruction("p");
  EXPECT_EQ(apply_repair_instruction(once), once);
}

TEST(Filter, ReasonsAndSelection) {
  std::vector<Transcript> ts;
  for (const char* id : {"a", "b", "c", "d", "e"}) ts.push_back(make_transcript(id, 2));
  ts[3].termination = Termination::kError;
  std::vector<EvaluationReport> rs = {scored("a", 8, 5), scored("b", 6, 5), scored("c", 9, 3),
                                      scored("d", 9, 5)};
  Selection s = filter_trajectories(ts, rs, {});
  EXPECT_EQ(s.selected, (std::vector<std::string>{"a"}));
  EXPECT_EQ(s.entries[0].reasons, (std::vector<std::string>{"pass"}));
  EXPECT_EQ(s.entries[1].reasons, (std::vector<std::string>{"goal 6 < 7"}));
  EXPECT_EQ(s.entries[2].reasons, (std::vector<std::string>{"mutual 3 < 4"}));
  EXPECT_EQ(s.entries[3].reasons, (std::vector<std::string>{"termination error not accepted"}));
  EXPECT_EQ(s.entries[4].reasons, (std::vector<std::string>{"unevaluated"}));

  FilterPolicy strict;
  strict.max_confusion_inverted = 4;
  EXPECT_TRUE(filter_trajectories(ts, rs, strict).selected.empty());
  Json manifest = selection_manifest(s, strict);
  EXPECT_EQ(manifest["selected_count"], 1);
}

TEST(Filter, PolicyParsing) {
  FilterPolicy p = parse_filter_policy(Json::parse(
      R"({"min_goal": 8, "max_confusion_inverted": 4, "require_termination": ["leave"]})"));
  EXPECT_EQ(p.min_goal, 8);
  EXPECT_EQ(*p.max_confusion_inverted, 4);
  EXPECT_EQ(p.require_termination.size(), 1u);
  EXPECT_THROW(parse_filter_policy(Json::parse(R"({"min_goal": 11})")), InputError);
  EXPECT_THROW(parse_filter_policy(Json::parse(R"({"min_mutual": 0})")), InputError);
  EXPECT_EQ(parse_filter_policy(filter_policy_to_json(p)).min_goal, 8);
}

TEST(BcExport, OnePerPartnerTurnWithoutBarrierText) {
  std::vector<Episode> eps;
  std::vector<Transcript> ts;
  for (int i = 0; i < 3; ++i) {
    std::string id = "e" + std::to_string(i);
    eps.push_back(make_episode(BarrierType::kSemantic, id));
    ts.push_back(make_transcript(id, 3 + i));
  }
  SimulationConfig cfg;
  cfg.repair = repair_fragment(builtin_repair_text());
  auto ex = export_bc_dataset({"e0", "e2"}, ts, eps, cfg);
  // e0: 3 turns -> partner at 0 and 2; e2: 5 turns -> partner at 0, 2, 4.
  ASSERT_EQ(ex.size(), 5u);
  for (const auto& x : ex) {
    EXPECT_EQ(x.source_round, "bc");
    EXPECT_NO_THROW(parse_action(x.completion));
    EXPECT_FALSE(contains(x.prompt, builtin_repair_text().substr(0, 30)));
    for (const auto& s : eps[0].barrier.all_texts()) EXPECT_FALSE(contains(x.prompt, s));
  }
  EXPECT_EQ(ex[1].turn, 2);
  EXPECT_TRUE(contains(ex[1].prompt, "Turn #1: Ava Brooks said: \"line 1\""));
  EXPECT_FALSE(contains(ex[1].prompt, "line 2"));
  EXPECT_EQ(Json(ex[0]).get<BCExample>(), ex[0]);
}

TEST(BcExport, Errors) {
  std::vector<Episode> eps = {make_episode(BarrierType::kNone, "e")};
  std::vector<Transcript> ts = {make_transcript("e", 2, Role::kBarrier)};
  EXPECT_THROW(export_bc_dataset({}, ts, eps, {}), InputError);
  EXPECT_THROW(export_bc_dataset({"x"}, ts, eps, {}), InputError);
  EXPECT_THROW(export_bc_dataset({"e"}, ts, eps, {}), InputError);
}

TEST(Demonstrations, AppendOnlyAndMeans) {
  DemonstrationSet d;
  d.append({{"p", "c", "e", 0, "bc"}});
  d.append({{"p2", "c2", "e", 2, "sr_1"}});
  EXPECT_EQ(d.size(), 2u);
  EXPECT_EQ(d.examples()[0].source_round, "bc");
  EXPECT_EQ(source_round_name(0), "bc");
  EXPECT_EQ(source_round_name(3), "sr_3");
  auto m = metric_means({scored("a", 8, 4), scored("b", 6, 2)});
  EXPECT_DOUBLE_EQ(m.at("GOAL"), 7.0);
  EXPECT_DOUBLE_EQ(m.at("Mutu"), 3.0);
}

TEST(SelfReinforcement, RoundAppendsAndReportsDeltas) {
  std::vector<Episode> eps = {make_episode(BarrierType::kSemantic, "e1"),
                              make_episode(BarrierType::kEmotional, "e2")};
  std::string social = slurp(fixtures() / "judge" / "social_example.json");
  std::string barrier = R"({"episode_level": {"unresolved_confusion": {"score": 4, "reasoning": "r"},
                            "mutual_understanding": {"score": 5, "reasoning": "r"}}})";
  SrRoundInputs in;
  in.round = 1;
  in.barrier = std::make_shared<ScriptedBackend>(
      "b", parse_script(Json::parse(R"({"*": "{\"action_type\":\"speak\",\"argument\":\"hm\"}"})")));
  in.trained_partner = std::make_shared<ScriptedBackend>(
      "p", parse_script(Json::parse(R"([{"turn": 2, "response": "{\"action_type\":\"leave\",\"argument\":\"\"}"},
                                        {"response": "{\"action_type\":\"speak\",\"argument\":\"ok\"}"}])")));
  in.judge = std::make_shared<RecordingBackend>([&](const ChatRequest& r) {
    return r.tag().purpose == "judge_social" ? social : barrier;
  });
  in.previous_means = {{"GOAL", 6.0}};
  DemonstrationSet d({{"p", "c", "old", 0, "bc"}});
  SrRoundResult res = run_sr_round(eps, in, d);
  EXPECT_EQ(res.report.transcripts, 2u);
  EXPECT_EQ(res.report.selected, 2u);
  EXPECT_EQ(res.report.examples_added, 4u);
  EXPECT_EQ(d.size(), 5u);
  EXPECT_EQ(d.examples().back().source_round, "sr_1");
  EXPECT_DOUBLE_EQ(res.report.deltas.at("GOAL"), 2.0);
  EXPECT_EQ(res.reports[0].subject_model_id, "p");
  Json j = sr_round_report_to_json(res.report);
  EXPECT_EQ(j["source_round"], "sr_1");
}
