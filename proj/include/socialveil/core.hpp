#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace socialveil {

enum class Difficulty { kStandard, kHard };
enum class BarrierType { kSemantic, kSociocultural, kEmotional, kNone };
enum class Role { kBarrier, kPartner };
enum class ActionType { kSpeak, kNonVerbal, kAction, kLeave, kNone };
enum class Termination { kTurnCap, kLeave, kError };

inline constexpr std::array<BarrierType, 3> kBarrierTypes = {
    BarrierType::kSemantic, BarrierType::kSociocultural, BarrierType::kEmotional};

inline constexpr std::array<ActionType, 5> kAllActionTypes = {
    ActionType::kSpeak, ActionType::kNonVerbal, ActionType::kAction,
    ActionType::kLeave, ActionType::kNone};

std::string_view to_string(Difficulty d);
std::string_view to_string(BarrierType b);
std::string_view to_string(Role r);
std::string_view to_string(ActionType a);
std::string_view to_string(Termination t);

// Each throws InputError on an unknown name.
Difficulty parse_difficulty(std::string_view s);
BarrierType parse_barrier_type(std::string_view s);
Role parse_role(std::string_view s);
ActionType parse_action_type(std::string_view s);
Termination parse_termination(std::string_view s);

// Experimental condition names used on the command line and in reports:
// baseline, semantic, sociocultural, emotional.
std::string_view condition_name(BarrierType b);
BarrierType parse_condition(std::string_view s);

inline Role other(Role r) { return r == Role::kBarrier ? Role::kPartner : Role::kBarrier; }

struct Scenario {
  std::string id;
  std::string raw_description;
  std::optional<std::string> neutral_description;
  Difficulty difficulty = Difficulty::kStandard;
  std::string source_id;

  // What agents and annotators see: the neutral sentence when present.
  const std::string& public_description() const {
    return neutral_description ? *neutral_description : raw_description;
  }

  bool operator==(const Scenario&) const = default;
};

struct AgentProfile {
  std::string name;
  int age = 0;
  std::string gender;
  std::string occupation;
  std::string public_info;
  std::string private_knowledge;

  bool operator==(const AgentProfile&) const = default;
};

struct SocialGoal {
  std::string goal;
  std::string reason;

  bool operator==(const SocialGoal&) const = default;
};

struct BarrierSpec {
  BarrierType barrier_type = BarrierType::kNone;
  std::string style_prompt;
  std::string narrative_stance;
  std::vector<std::string> interaction_tactics;
  std::vector<std::string> confusion_mechanisms;
  std::vector<std::string> exemplar_templates;

  bool is_none() const { return barrier_type == BarrierType::kNone; }
  // True when the style prompt and every parameterization field are empty.
  bool is_empty() const;
  // Style prompt plus every parameterization entry; used for leak scans.
  std::vector<std::string> all_texts() const;

  static BarrierSpec none() { return {}; }

  bool operator==(const BarrierSpec&) const = default;
};

struct Episode {
  std::string id;
  Scenario scenario;
  AgentProfile barrier_agent;
  AgentProfile partner_agent;
  SocialGoal barrier_goal;
  SocialGoal partner_goal;
  BarrierSpec barrier;
  Role first_speaker = Role::kPartner;
  int max_turns = 20;

  const AgentProfile& profile(Role r) const {
    return r == Role::kBarrier ? barrier_agent : partner_agent;
  }
  const SocialGoal& goal(Role r) const {
    return r == Role::kBarrier ? barrier_goal : partner_goal;
  }

  bool operator==(const Episode&) const = default;
};

struct AgentAction {
  ActionType action_type = ActionType::kNone;
  std::string argument;

  static AgentAction speak(std::string text) { return {ActionType::kSpeak, std::move(text)}; }
  static AgentAction leave() { return {ActionType::kLeave, ""}; }
  static AgentAction none() { return {ActionType::kNone, ""}; }

  bool operator==(const AgentAction&) const = default;
};

struct TurnMetadata {
  std::string backend_id;
  double latency_ms = 0.0;
  int retry_count = 0;

  bool operator==(const TurnMetadata&) const = default;
};

struct Turn {
  int index = 0;
  Role role = Role::kPartner;
  AgentAction action;

  bool operator==(const Turn&) const = default;
};

struct Transcript {
  std::string episode_id;
  std::vector<Turn> turns;
  Termination termination = Termination::kTurnCap;
  // Free-form reason attached to the termination ("stalled", error text).
  std::string termination_detail;
  std::map<int, TurnMetadata> per_turn_metadata;

  bool operator==(const Transcript&) const = default;
};

struct Violation {
  std::string field;
  std::string rule;
};

struct ValidationResult {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  // "field: rule" of the first violation, or empty.
  std::string first() const;
};

ValidationResult validate_barrier_spec(const BarrierSpec& b);
ValidationResult validate_episode(const Episode& e);

// Structural checks on a transcript. first_speaker/max_turns come from the
// episode when one is available; otherwise the first recorded role is used.
ValidationResult validate_transcript(const Transcript& t,
                                     std::optional<Role> first_speaker = std::nullopt,
                                     std::optional<int> max_turns = std::nullopt);

struct RenderedTranscript {
  std::vector<std::string> lines;  // one per turn
  std::string footer;
  std::vector<std::string> warnings;

  // Lines joined by newlines, followed by the footer line.
  std::string text() const;
  // Lines only, newline separated.
  std::string body() const;
};

// "Turn #k — Name [action_type]: argument" lines. Throws InputError naming
// the first violated invariant when the transcript is malformed. Arguments
// that contain either profile's private knowledge are rendered but flagged
// in warnings.
RenderedTranscript render_transcript_text(const Transcript& t,
                                          const AgentProfile& barrier_agent,
                                          const AgentProfile& partner_agent);

}  // namespace socialveil
