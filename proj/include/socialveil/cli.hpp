#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "socialveil/adaptation.hpp"
#include "socialveil/backend.hpp"
#include "socialveil/barrier.hpp"
#include "socialveil/core.hpp"
#include "socialveil/json_io.hpp"
#include "socialveil/simulator.hpp"

namespace socialveil {

// One row of the goals table: who meets whom in which scenario, with what
// goals. Episodes are derived per condition as "<id>-<condition>".
struct Pairing {
  std::string id;
  std::string scenario_id;
  std::string barrier_agent;  // profile name
  std::string partner_agent;  // profile name
  SocialGoal barrier_goal;
  SocialGoal partner_goal;
  Role first_speaker = Role::kPartner;
  int max_turns = 20;
};

void to_json(Json& j, const Pairing& v);
void from_json(const Json& j, Pairing& v);

struct RunConfig {
  std::filesystem::path scenarios;
  std::filesystem::path profiles;
  std::filesystem::path goals;
  std::optional<std::filesystem::path> taxonomy;
  std::map<std::string, BackendConfig> backends;  // barrier partner judge rewriter trained_partner
  SimulationConfig simulation;
  FilterPolicy filter;
  std::filesystem::path out;
  std::uint64_t seed = 0;
  // The effective configuration (file plus overrides) that config_hash covers.
  Json effective;

  std::string config_hash() const;
  const BackendConfig& backend(const std::string& role) const;
};

// Relative paths resolve against the config file's directory.
RunConfig load_run_config(const std::filesystem::path& path);

// Episodes for one condition, in goals-table order.
std::vector<Episode> build_episodes(const std::vector<Scenario>& scenarios,
                                    const std::vector<AgentProfile>& profiles,
                                    const std::vector<Pairing>& pairings, BarrierType condition,
                                    const Taxonomy& taxonomy);

// Exit codes: 0 success, 1 validation error, 2 runtime failure. `args`
// excludes the program name.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace socialveil
