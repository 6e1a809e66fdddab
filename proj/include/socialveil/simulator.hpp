#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "socialveil/backend.hpp"
#include "socialveil/barrier.hpp"
#include "socialveil/core.hpp"
#include "socialveil/json_io.hpp"

namespace socialveil {

struct SimulationConfig {
  double agent_temperature = 0.7;
  int turn_cap = 20;
  int consecutive_none_limit = 2;
  int parse_retry_limit = 2;
  int parallelism = 1;
  std::uint64_t random_seed = 0;
  int max_tokens = 512;
  std::vector<ActionType> action_list{kAllActionTypes.begin(), kAllActionTypes.end()};
  // Repair guidance appended to partner prompts only.
  std::optional<InstructionFragment> repair;

  ValidationResult validate() const;
};

Json simulation_config_to_json(const SimulationConfig& cfg);
SimulationConfig parse_simulation_config(const Json& j);

struct AgentPromptOptions {
  double temperature = 0.7;
  int max_tokens = 512;
  std::string model_id;
  std::vector<ActionType> action_list{kAllActionTypes.begin(), kAllActionTypes.end()};
};

// "Turn #t: Name said: "..."" style lines for the first `upto` turns.
std::string render_history(const Episode& e, const Transcript& history, size_t upto);

// The base agent instruction for `role` at `turn` with the full history.
// Contains no barrier text for either role.
InstructionFragment render_base_instruction(const Episode& e, Role role,
                                            const Transcript& history, int turn,
                                            const std::vector<ActionType>& action_list);

// Barrier role: base instruction augmented with the episode's barrier.
// Partner role: base instruction, plus the repair block when supplied.
ChatRequest render_agent_prompt(const Episode& e, Role role, const Transcript& history, int turn,
                                const std::optional<InstructionFragment>& repair,
                                const AgentPromptOptions& options);

// Runs the alternating turn loop. Transport failures end the episode with
// termination error and keep the turns produced so far.
Transcript run_episode(const Episode& e, ChatBackend& barrier_backend,
                       ChatBackend& partner_backend, const SimulationConfig& cfg);

struct BackendPair {
  std::shared_ptr<ChatBackend> barrier;
  std::shared_ptr<ChatBackend> partner;
};

struct EpisodeFailure {
  size_t index = 0;
  std::string episode_id;
  std::string message;
  std::optional<Transcript> partial;
};

struct RunManifest {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string tool_version;
  std::string barrier_backend_id;
  std::string partner_backend_id;
  double wall_clock_ms = 0.0;
  size_t episode_count = 0;
  struct Entry {
    std::string episode_id;
    std::string status;  // "ok" or "error"
    std::string termination;
    std::string detail;
    int turns = 0;
  };
  std::vector<Entry> episodes;
};

Json manifest_to_json(const RunManifest& m);

struct BatchResult {
  std::vector<Transcript> transcripts;  // successful episodes, input order
  std::vector<EpisodeFailure> failures;
  RunManifest manifest;
};

// Episodes run concurrently (at most cfg.parallelism at a time). A failing
// episode becomes a failure entry; the batch itself never aborts.
BatchResult run_batch(const std::vector<Episode>& episodes, const BackendPair& backends,
                      const SimulationConfig& cfg);

std::string tool_version();

}  // namespace socialveil
