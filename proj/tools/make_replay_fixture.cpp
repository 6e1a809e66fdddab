// Regenerates tests/fixtures/replay: a small corpus whose agent and judge
// traffic was recorded from scripted backends, so the full pipeline can run
// offline through replay backends.
//
//   make_replay_fixture <output-dir>

#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "socialveil/cli.hpp"
#include "socialveil/json_io.hpp"

namespace fs = std::filesystem;
using namespace socialveil;

namespace {

struct Scores {
  int goal;
  int bel;
  int rel;
  int kno;
  int conf;
  int mutu;
};

// Partner-side scores per scenario (rows) and condition (columns:
// baseline, semantic, sociocultural, emotional).
const Scores kScores[3][4] = {
    {{8, 8, 2, 6, 5, 5}, {5, 7, 0, 4, 2, 2}, {6, 7, 1, 5, 3, 3}, {6, 6, -1, 5, 3, 3}},
    {{7, 9, 3, 7, 4, 4}, {4, 8, 1, 5, 2, 2}, {5, 8, 1, 6, 2, 3}, {5, 7, -2, 6, 3, 2}},
    {{9, 8, 2, 5, 5, 5}, {6, 7, 1, 3, 3, 3}, {6, 7, 0, 4, 2, 3}, {7, 6, -1, 4, 3, 3}},
};

Json item(int score, const std::string& why) { return Json{{"score", score}, {"reasoning", why}}; }

Json agent_block(const Scores& s) {
  Json a = Json::object();
  a["believability"] = item(s.bel, "Speaks in character and stays on topic.");
  a["relationship"] = item(s.rel, "The tone of the exchange shifts the relationship.");
  a["knowledge"] = item(s.kno, "Learns part of what the other side needs.");
  a["secret"] = item(0, "Nothing private is disclosed.");
  a["social_rules"] = item(0, "No norms are broken.");
  a["financial_benefits"] = item(0, "No material stakes change hands.");
  a["goal_completion"] = item(s.goal, "Progress toward the stated goal.");
  a["overall_score"] = s.goal;
  return a;
}

std::string social_json(const Scores& partner) {
  Json j = Json::object();
  j["agent_1"] = agent_block({6, 7, 0, 4, 0, 0});
  j["agent_2"] = agent_block(partner);
  j["interaction_quality"] = item(partner.mutu + 2, "Turn taking is orderly.");
  j["key_observations"] = {"Both agents stay on the scenario."};
  return j.dump(2);
}

std::string barrier_json(const Scores& partner) {
  Json j;
  j["episode_level"]["unresolved_confusion"] =
      item(partner.conf, "How much of the scenario is still unclear at the end.");
  j["episode_level"]["mutual_understanding"] =
      item(partner.mutu, "How well each side grasps the other's goal.");
  return j.dump(2);
}

std::string action(const std::string& type, const std::string& arg) {
  return Json{{"action_type", type}, {"argument", arg}}.dump();
}

void write_lines(const fs::path& p, const std::vector<Json>& rows) {
  std::string s;
  for (const auto& r : rows) s += r.dump() + "\n";
  write_text_file(p, s);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_replay_fixture <output-dir>\n";
    return 1;
  }
  const fs::path dir = fs::absolute(argv[1]);
  fs::create_directories(dir);
  for (const char* f : {"agents.replay.ndjson", "judge.replay.ndjson"}) fs::remove(dir / f);

  write_lines(dir / "scenarios.ndjson",
              {{{"id", "sc-market"},
                {"raw_description",
                 "A seller and a buyer negotiate the price of a used bicycle at a weekend market."},
                {"neutral_description", "Two people chat over a used bicycle at a weekend market."},
                {"difficulty", "standard"},
                {"source_id", "fixture-1"}},
               {{"id", "sc-roommates"},
                {"raw_description",
                 "Two roommates decide who cleans the kitchen after a party; one wants to skip it."},
                {"neutral_description", "Two roommates talk in the kitchen the morning after a party."},
                {"difficulty", "hard"},
                {"source_id", "fixture-2"}},
               {{"id", "sc-office"},
                {"raw_description",
                 "A manager asks a colleague to take over a report due on Friday."},
                {"neutral_description", "Two colleagues discuss the week's workload in the office."},
                {"difficulty", "standard"},
                {"source_id", "fixture-3"}}});

  auto profile = [](std::string name, int age, std::string gender, std::string job,
                    std::string pub, std::string priv) {
    return Json{{"name", name},        {"age", age},         {"gender", gender},
                {"occupation", job},   {"public_info", pub}, {"private_knowledge", priv}};
  };
  write_lines(dir / "profiles.ndjson",
              {profile("Mara Quinn", 34, "woman", "bike mechanic", "Sells refurbished bikes.",
                       "The rear hub needs replacing soon."),
               profile("Tobias Reed", 27, "man", "graduate student", "Commutes by bike.",
                       "Has only 120 dollars to spend."),
               profile("Lena Ortiz", 25, "woman", "barista", "Hosted the party.",
                       "Has an early shift tomorrow."),
               profile("Sam Okafor", 26, "man", "software tester", "Shares the flat with Lena.",
                       "Broke a glass during the party."),
               profile("Priya Natarajan", 45, "woman", "team manager", "Runs the analytics team.",
                       "Is leaving for a conference on Thursday."),
               profile("Jonas Berg", 31, "man", "data analyst", "Works on the analytics team.",
                       "Is already behind on another deadline.")});

  auto goal = [](std::string g, std::string r) { return Json{{"goal", g}, {"reason", r}}; };
  write_lines(dir / "goals.ndjson",
              {{{"id", "p1"},
                {"scenario_id", "sc-market"},
                {"barrier_agent", "Mara Quinn"},
                {"partner_agent", "Tobias Reed"},
                {"barrier_goal", goal("Sell the bicycle for at least 150 dollars.",
                                      "Needs the money for new stock.")},
                {"partner_goal", goal("Buy the bicycle for no more than 120 dollars.",
                                      "That is the whole budget.")},
                {"first_speaker", "partner"},
                {"max_turns", 20}},
               {{"id", "p2"},
                {"scenario_id", "sc-roommates"},
                {"barrier_agent", "Lena Ortiz"},
                {"partner_agent", "Sam Okafor"},
                {"barrier_goal", goal("Get Sam to clean the kitchen alone.",
                                      "She has an early shift.")},
                {"partner_goal", goal("Split the cleaning evenly.", "He thinks that is fair.")},
                {"first_speaker", "partner"},
                {"max_turns", 20}},
               {{"id", "p3"},
                {"scenario_id", "sc-office"},
                {"barrier_agent", "Priya Natarajan"},
                {"partner_agent", "Jonas Berg"},
                {"barrier_goal", goal("Hand the Friday report to Jonas.",
                                      "She will be away from Thursday.")},
                {"partner_goal", goal("Agree to help only if the deadline moves.",
                                      "He is already behind on other work.")},
                {"first_speaker", "partner"},
                {"max_turns", 20}}});

  Json agent_script = Json::array();
  agent_script.push_back({{"role", "partner"},
                          {"turn", 6},
                          {"response", action("leave", "")}});
  agent_script.push_back({{"role", "partner"},
                          {"turn", 0},
                          {"response", action("speak", "Hi, do you have a minute to talk?")}});
  agent_script.push_back({{"role", "partner"},
                          {"turn", 4},
                          {"response", action("non_verbal", "nods slowly")}});
  agent_script.push_back({{"role", "partner"},
                          {"response", action("speak", "I think we can find something that works for both of us.")}});

  const char* conditions[] = {"baseline", "semantic", "sociocultural", "emotional"};
  const char* pairings[] = {"p1", "p2", "p3"};
  const char* barrier_lines[] = {
      "Sure. Here is exactly what I need and why.",
      "Maybe... it depends on that thing, you know.",
      "We will think about it and see what the others say.",
      "Honestly I am so tired of this, it always ends up on me!"};
  for (const char* p : pairings) {
    for (int c = 0; c < 4; ++c) {
      agent_script.push_back({{"role", "barrier"},
                              {"episode", std::string(p) + "-" + conditions[c]},
                              {"response", action("speak", barrier_lines[c])}});
    }
  }
  Json judge_script = Json::array();
  for (int s = 0; s < 3; ++s) {
    for (int c = 0; c < 4; ++c) {
      std::string ep = std::string(pairings[s]) + "-" + conditions[c];
      judge_script.push_back({{"purpose", "judge_social"},
                              {"episode", ep},
                              {"response", social_json(kScores[s][c])}});
      judge_script.push_back({{"purpose", "judge_barrier"},
                              {"episode", ep},
                              {"response", barrier_json(kScores[s][c])}});
    }
  }

  Json sim = {{"agent_temperature", 0.7}, {"turn_cap", 20}, {"parallelism", 1}};
  Json record = {
      {"scenarios", "scenarios.ndjson"},
      {"profiles", "profiles.ndjson"},
      {"goals", "goals.ndjson"},
      {"backends",
       {{"barrier",
         {{"kind", "cached"},
          {"record_path", "agents.replay.ndjson"},
          {"inner", {{"kind", "scripted"}, {"model_id", "fixture-agent"}, {"script", agent_script}}}}},
        {"partner",
         {{"kind", "cached"},
          {"record_path", "agents.replay.ndjson"},
          {"inner", {{"kind", "scripted"}, {"model_id", "fixture-agent"}, {"script", agent_script}}}}},
        {"judge",
         {{"kind", "cached"},
          {"record_path", "judge.replay.ndjson"},
          {"inner", {{"kind", "scripted"}, {"model_id", "fixture-judge"}, {"script", judge_script}}}}}}},
      {"simulation", sim},
      {"out", "out"},
      {"seed", 7}};
  const fs::path record_cfg = dir / "record.config.json";
  write_text_file(record_cfg, record.dump(2) + "\n");

  const fs::path scratch = fs::temp_directory_path() / "socialveil-fixture-record";
  fs::remove_all(scratch);
  std::ostringstream out, err;
  for (const char* cmd : {"simulate", "evaluate"}) {
    int rc = run_command({cmd, "--config", record_cfg.string(), "--out", scratch.string()}, out, err);
    if (rc != 0) {
      std::cerr << cmd << " failed:\n" << err.str();
      return 2;
    }
  }
  fs::remove_all(scratch);
  fs::remove(record_cfg);

  Json replay = {
      {"scenarios", "scenarios.ndjson"},
      {"profiles", "profiles.ndjson"},
      {"goals", "goals.ndjson"},
      {"backends",
       {{"barrier", {{"kind", "replay"}, {"model_id", "fixture-agent"}, {"replay_path", "agents.replay.ndjson"}}},
        {"partner", {{"kind", "replay"}, {"model_id", "fixture-agent"}, {"replay_path", "agents.replay.ndjson"}}},
        {"judge", {{"kind", "replay"}, {"model_id", "fixture-judge"}, {"replay_path", "judge.replay.ndjson"}}}}},
      {"simulation", sim},
      {"out", "out"},
      {"seed", 7}};
  write_text_file(dir / "config.json", replay.dump(2) + "\n");
  std::cout << "wrote " << dir.string() << "\n";
  return 0;
}
